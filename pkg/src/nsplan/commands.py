"""Natural-language pick/place sub-task commands.

Grammar (case-insensitive, trailing period optional)::

    Pick the <color> block.
    Place the <color> block in the <area> area.
    Place the <color> block on the <color> block.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .pddl import Plan, PlanningTask
from .planner import resolve_step
from .world import AREAS

COLORS = ("blue", "red", "green", "yellow")


@dataclass(frozen=True)
class Pick:
    block: str


@dataclass(frozen=True)
class PlaceOnBlock:
    block: str
    target: str


@dataclass(frozen=True)
class PlaceInArea:
    block: str
    area: str


SubTask = Union[Pick, PlaceOnBlock, PlaceInArea]


class UnparseableCommand(ValueError):
    def __init__(self, text):
        self.text = text
        super().__init__(f"unparseable command: {text!r}")


class InvalidPlanText(ValueError):
    def __init__(self, line_no, text, why):
        self.line_no = line_no
        self.text = text
        super().__init__(f"line {line_no}: {why}: {text!r}")


def _grammar(colors, areas, loose):
    art = r"(?:the\s+)?" if loose else r"the\s+"
    c = "|".join(map(re.escape, colors))
    a = "|".join(map(re.escape, areas))
    pick = re.compile(rf"pick\s+{art}({c})\s+block\.?", re.I)
    in_area = re.compile(rf"place\s+{art}({c})\s+block\s+in\s+{art}({a})\s+area\.?", re.I)
    on_block = re.compile(rf"place\s+{art}({c})\s+block\s+on\s+{art}({c})\s+block\.?", re.I)
    return pick, in_area, on_block


_STRICT = _grammar(COLORS, AREAS, loose=False)


def parse_command(text, colors=COLORS, areas=AREAS, loose: bool = False) -> SubTask:
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    line = text.strip()
    if not loose and colors == COLORS and areas == AREAS:
        pick, in_area, on_block = _STRICT
    else:
        pick, in_area, on_block = _grammar(colors, areas, loose)
    if not loose:
        line = re.sub(r"[ \t]+", " ", line)
    m = pick.fullmatch(line)
    if m:
        return Pick(m.group(1).lower())
    m = in_area.fullmatch(line)
    if m:
        return PlaceInArea(m.group(1).lower(), m.group(2).lower())
    m = on_block.fullmatch(line)
    if m:
        return PlaceOnBlock(m.group(1).lower(), m.group(2).lower())
    raise UnparseableCommand(text)


def command_text(sub: SubTask) -> str:
    if isinstance(sub, Pick):
        return f"Pick the {sub.block} block."
    if isinstance(sub, PlaceInArea):
        return f"Place the {sub.block} block in the {sub.area} area."
    return f"Place the {sub.block} block on the {sub.target} block."


def subtask_for_op(name: str, args) -> SubTask:
    if name == "pick":
        return Pick(args[0])
    if name == "place":
        block, target = args
        if target in AREAS:
            return PlaceInArea(block, target)
        return PlaceOnBlock(block, target)
    raise ValueError(f"operator {name!r} has no command form")


def plan_to_commands(plan: Plan) -> list:
    return [command_text(subtask_for_op(op.name, op.args)) for op in plan]


def split_lines(text: str) -> list:
    """Split a plan file, tolerating CRLF, dropping blank lines."""
    return [ln for ln in text.replace("\r\n", "\n").split("\n") if ln.strip()]


def commands_to_plan(lines, task: PlanningTask, loose: bool = False) -> Plan:
    """Ground command lines against ``task``.

    Pick commands name only the block, so the support it is lifted from is
    read off the state reached by replaying the preceding steps. Effects are
    applied even when a precondition fails, so grounding continues and the
    violation is left for plan validation to report.
    """
    state = frozenset(task.init)
    steps = []
    for i, line in enumerate(lines, start=1):
        try:
            sub = parse_command(line, loose=loose)
        except UnparseableCommand:
            raise InvalidPlanText(i, line, "not in the command grammar") from None
        if isinstance(sub, Pick):
            under = [a.args[1] for a in state
                     if a.predicate == "on" and a.args[0] == sub.block]
            if len(under) != 1:
                raise InvalidPlanText(i, line, "cannot tell where the block rests")
            name, args = "pick", (sub.block, under[0])
        elif isinstance(sub, PlaceInArea):
            name, args = "place", (sub.block, sub.area)
        else:
            name, args = "place", (sub.block, sub.target)
        try:
            op = resolve_step(task, name, args)
        except ValueError as exc:
            raise InvalidPlanText(i, line, str(exc)) from None
        steps.append(op)
        state = (state - op.delete) | op.add
    return Plan(tuple(steps))
