"""Grade natural-language plan files against their tasks.

A plan directory holds ``manifest.json``::

    {"generator": "...", "tasks": [{"plan": "p00.cmds",
      "initial": [["red", "green", "blue"], [], []],
      "goal": [[], [], ["red", "green", "blue"]]}, ...]}

with stacks listed bottom-up by color, one per area.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .commands import InvalidPlanText, commands_to_plan, split_lines
from .planner import PlanClass, classify_plan, validate_plan
from .world import DEFAULT_SCENE, HanoiState, SceneConfig, hanoi_task, oracle_optimal


@dataclass
class Grade:
    plan: str
    grade: PlanClass
    detail: str = ""

    def to_dict(self):
        return {"plan": self.plan, "class": self.grade.value, "detail": self.detail}


def state_from_colors(stacks, scene: SceneConfig = DEFAULT_SCENE) -> HanoiState:
    return HanoiState(tuple(tuple(scene.block_id(c) for c in s) for s in stacks))


def state_to_colors(state: HanoiState, scene: SceneConfig = DEFAULT_SCENE) -> list:
    return [[scene.color(b) for b in s] for s in state.stacks]


def grade_text(text: str, initial: HanoiState, goal: HanoiState, scene: SceneConfig = DEFAULT_SCENE,
               loose: bool = False, name: str = "") -> Grade:
    task = hanoi_task(initial, goal, scene=scene)
    try:
        plan = commands_to_plan(split_lines(text), task, loose=loose)
    except InvalidPlanText as exc:
        return Grade(name, PlanClass.INVALID, str(exc))
    res = validate_plan(task, plan)
    if not res.valid:
        return Grade(name, PlanClass.INVALID, f"{res.reason.value} at step {res.failing_step}")
    optimum = 2 * oracle_optimal(initial, goal)[0]
    return Grade(name, classify_plan(task, plan, optimum), f"{len(plan)} steps, optimum {optimum}")


def load_manifest(directory) -> dict:
    with open(os.path.join(directory, "manifest.json")) as fh:
        return json.load(fh)


def grade_directory(directory, scene: SceneConfig = DEFAULT_SCENE, loose: bool = False) -> list:
    manifest = load_manifest(directory)
    grades = []
    for entry in manifest["tasks"]:
        with open(os.path.join(directory, entry["plan"]), "rb") as fh:
            text = fh.read().decode("utf-8", errors="replace")
        grades.append(grade_text(text, state_from_colors(entry["initial"], scene),
                                 state_from_colors(entry["goal"], scene), scene, loose, entry["plan"]))
    return grades
