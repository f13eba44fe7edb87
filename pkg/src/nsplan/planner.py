"""Forward state-space planning over grounded STRIPS tasks, plan
validation and plan-quality grading."""

from __future__ import annotations

import enum
import heapq
import json
from collections import deque
from dataclasses import dataclass
from typing import Optional

from .pddl import GroundedOperator, Plan, PlanningTask, ground, ground_operator


class NoPlan(Exception):
    """The goal is unreachable from the initial state."""


class ResourceExhausted(Exception):
    """The search hit ``max_expansions`` before finishing."""


class NotApplicable(ValueError):
    pass


class Unreachable:
    """Heuristic value for states whose relaxed goal is unreachable."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNREACHABLE"


UNREACHABLE = Unreachable()


class Strategy(str, enum.Enum):
    GBFS_HFF = "gbfs_hff"
    ASTAR_HADD = "astar_hadd"
    BFS_EXACT = "bfs_exact"


@dataclass(frozen=True)
class SearchConfig:
    strategy: Strategy = Strategy.GBFS_HFF
    max_expansions: int = 1_000_000
    allow_self_binding: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.max_expansions <= 0:
            raise ValueError("max_expansions must be positive")


class Reason(str, enum.Enum):
    PRECONDITION_VIOLATED = "precondition_violated"
    GOAL_NOT_REACHED = "goal_not_reached"
    MALFORMED = "malformed"


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    failing_step: Optional[int] = None
    reason: Optional[Reason] = None

    def __post_init__(self):
        if self.valid and (self.failing_step is not None or self.reason is not None):
            raise ValueError("a valid result carries no failure")


class PlanClass(str, enum.Enum):
    OPTIMAL = "Optimal"
    SUBOPTIMAL = "Suboptimal"
    INVALID = "Invalid"


def applicable(state, op: GroundedOperator) -> bool:
    return op.pre <= state


def apply(state, op: GroundedOperator) -> frozenset:
    if not op.pre <= state:
        raise NotApplicable(f"{op} is not applicable")
    return (frozenset(state) - op.delete) | op.add


# ---------------------------------------------------------------------------
# heuristics


def _relaxed_layers(state, goal, ops):
    """Relaxed planning graph: first layer of each fact and achieving op."""
    level = {f: 0 for f in state}
    achiever = {}
    layer = 0
    remaining = list(ops)
    while not goal <= level.keys():
        new = set()
        still = []
        for op in remaining:
            if op.pre <= level.keys():
                for f in op.add:
                    if f not in level and f not in new:
                        new.add(f)
                        achiever[f] = op
            else:
                still.append(op)
        if not new:
            return None, None
        layer += 1
        for f in new:
            level[f] = layer
        remaining = still
    return level, achiever


def relaxed_plan_heuristic(state, task: PlanningTask, ops=None):
    """Size of a relaxed plan extracted from the relaxed planning graph (h_FF)."""
    goal = task.goal
    if goal <= state:
        return 0
    if ops is None:
        ops = ground(task)
    level, achiever = _relaxed_layers(state, goal, ops)
    if level is None:
        return UNREACHABLE
    chosen = set()
    agenda = [f for f in goal if level[f] > 0]
    done = set()
    while agenda:
        f = agenda.pop()
        if f in done:
            continue
        done.add(f)
        op = achiever[f]
        if op in chosen:
            continue
        chosen.add(op)
        agenda.extend(p for p in op.pre if level[p] > 0)
    return len(chosen)


def additive_heuristic(state, task: PlanningTask, ops=None):
    """h_add: sum of relaxed fact costs with unit action costs."""
    goal = task.goal
    if goal <= state:
        return 0
    if ops is None:
        ops = ground(task)
    cost = {f: 0 for f in state}
    changed = True
    while changed:
        changed = False
        for op in ops:
            if not op.pre <= cost.keys():
                continue
            c = 1 + sum(cost[p] for p in op.pre)
            for f in op.add:
                if c < cost.get(f, float("inf")):
                    cost[f] = c
                    changed = True
    if not goal <= cost.keys():
        return UNREACHABLE
    return sum(cost[g] for g in goal)


# ---------------------------------------------------------------------------
# search


def _extract(parents, node) -> Plan:
    steps = []
    while parents[node] is not None:
        node, op = parents[node]
        steps.append(op)
    steps.reverse()
    return Plan(tuple(steps))


def plan(task: PlanningTask, cfg: SearchConfig = SearchConfig()) -> Plan:
    ops = ground(task, allow_self_binding=cfg.allow_self_binding)
    init = frozenset(task.init)
    if task.goal <= init:
        return Plan(())
    if cfg.strategy is Strategy.BFS_EXACT:
        return _bfs(task, init, ops, cfg.max_expansions)
    h = relaxed_plan_heuristic if cfg.strategy is Strategy.GBFS_HFF else additive_heuristic
    return _best_first(task, init, ops, h, cfg)


def _bfs(task, init, ops, budget) -> Plan:
    parents = {init: None}
    frontier = deque([init])
    expansions = 0
    while frontier:
        state = frontier.popleft()
        expansions += 1
        if expansions > budget:
            raise ResourceExhausted(f"exceeded {budget} expansions")
        for op in ops:
            if not op.pre <= state:
                continue
            nxt = (state - op.delete) | op.add
            if nxt in parents:
                continue
            parents[nxt] = (state, op)
            if task.goal <= nxt:
                return _extract(parents, nxt)
            frontier.append(nxt)
    raise NoPlan("goal unreachable")


def _best_first(task, init, ops, heuristic, cfg) -> Plan:
    greedy = cfg.strategy is Strategy.GBFS_HFF
    h0 = heuristic(init, task, ops)
    if h0 is UNREACHABLE:
        raise NoPlan("goal unreachable in the delete relaxation")
    parents = {init: None}
    g_best = {init: 0}
    counter = 0
    heap = [(h0, "", (), counter, 0, init)]
    expansions = 0
    closed = set()
    while heap:
        _, _, _, _, g, state = heapq.heappop(heap)
        if state in closed:
            continue
        closed.add(state)
        if task.goal <= state:
            return _extract(parents, state)
        expansions += 1
        if expansions > cfg.max_expansions:
            raise ResourceExhausted(f"exceeded {cfg.max_expansions} expansions")
        for op in ops:
            if not op.pre <= state:
                continue
            nxt = (state - op.delete) | op.add
            ng = g + 1
            if nxt in closed or ng >= g_best.get(nxt, float("inf")):
                continue
            h = heuristic(nxt, task, ops)
            if h is UNREACHABLE:
                continue
            g_best[nxt] = ng
            parents[nxt] = (state, op)
            counter += 1
            key = h if greedy else ng + h
            heapq.heappush(heap, (key, op.name, op.args, counter, ng, nxt))
    raise NoPlan("goal unreachable")


# ---------------------------------------------------------------------------
# validation and grading


def resolve_step(task: PlanningTask, name: str, args) -> GroundedOperator:
    """Ground a named step against the task; ValueError if malformed."""
    try:
        schema = task.domain.operator(name)
    except KeyError:
        raise ValueError(f"unknown operator {name!r}") from None
    types = task.object_types
    args = tuple(args)
    if len(args) != len(schema.params):
        raise ValueError(f"{name} expects {len(schema.params)} arguments")
    for arg, (_, t) in zip(args, schema.params):
        if arg not in types or not task.domain.is_subtype(types[arg], t):
            raise ValueError(f"argument {arg!r} is not a {t}")
    return ground_operator(schema, args)


def validate_plan(task: PlanningTask, plan: Plan) -> ValidationResult:
    state = frozenset(task.init)
    schemas = {o.name: o for o in task.domain.operators}
    for i, op in enumerate(plan):
        if not isinstance(op, GroundedOperator) or op.name not in schemas:
            return ValidationResult(False, i, Reason.MALFORMED)
        if not op.pre <= state:
            return ValidationResult(False, i, Reason.PRECONDITION_VIOLATED)
        state = (state - op.delete) | op.add
    if not task.goal <= state:
        return ValidationResult(False, len(plan), Reason.GOAL_NOT_REACHED)
    return ValidationResult(True)


def optimal_length(task: PlanningTask, max_expansions: int = 1_000_000) -> int:
    return len(plan(task, SearchConfig(Strategy.BFS_EXACT, max_expansions)))


def classify_plan(task: PlanningTask, plan_: Optional[Plan],
                  optimum: Optional[int] = None) -> PlanClass:
    """Grade a plan; ``None`` stands for an unparseable plan."""
    if plan_ is None or not validate_plan(task, plan_).valid:
        return PlanClass.INVALID
    if optimum is None:
        optimum = optimal_length(task)
    return PlanClass.OPTIMAL if len(plan_) == optimum else PlanClass.SUBOPTIMAL


# ---------------------------------------------------------------------------
# plan files


def plan_to_jsonl(plan_: Plan) -> str:
    return "".join(json.dumps({"op": op.name, "args": list(op.args)}) + "\n"
                   for op in plan_)


def plan_from_jsonl(text: str, task: PlanningTask) -> Plan:
    steps = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        steps.append(resolve_step(task, rec["op"], rec["args"]))
    return Plan(tuple(steps))
