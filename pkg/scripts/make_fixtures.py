"""Regenerate the emulated plan-grading fixtures and synthetic power logs.

    python scripts/make_fixtures.py [--out fixtures]

The plan sets emulate the grade distribution of the planners compared in
the evaluation (42 optimal and 8 invalid plans of 50 for the strong
generator; all invalid for the weak ones). They are not model transcripts.
"""

import argparse
import json
import os

import numpy as np

from nsplan.commands import command_text, subtask_for_op
from nsplan.energy import PowerLog, write_power_csv
from nsplan.kinematics import op_for_move
from nsplan.world import DEFAULT_SCENE, HanoiState, apply_move, oracle_optimal
from nsplan.grading import state_to_colors

# (source area, destination area) of a 3-block tower
TOWER_TASKS = [(0, 2), (0, 1), (1, 2), (1, 0), (2, 0)]


def optimal_commands(initial, goal):
    _, moves = oracle_optimal(initial, goal)
    lines, s = [], initial
    for mv in moves:
        for op, args in op_for_move(s, mv):
            lines.append(command_text(subtask_for_op(op, args)))
        s = apply_move(s, mv)
    return lines


def corrupt(lines, kind, rng):
    """Invalid variants of an optimal command list."""
    if kind == "truncated":
        return lines[:-2]
    if kind == "violation":
        # the second move's (larger) block goes onto the smallest one
        out = list(lines)
        block = out[2].split()[2]
        out[3] = f"Place the {block} block on the blue block."
        return out
    if kind == "not_clear":
        return ["Pick the red block."] + lines
    if kind == "prose":
        return ["First, move the blue block to the right platform."] + lines[2:]
    raise ValueError(kind)


def make_plan_set(directory, generator, kinds, rng):
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i in range(50):
        src, dst = TOWER_TASKS[i % len(TOWER_TASKS)]
        initial, goal = HanoiState.tower(3, src), HanoiState.tower(3, dst)
        lines = optimal_commands(initial, goal)
        kind = kinds[i]
        if kind != "optimal":
            lines = corrupt(lines, kind, rng)
        name = f"plan_{i:02d}.cmds"
        with open(os.path.join(directory, name), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        entries.append({"plan": name, "initial": state_to_colors(initial),
                        "goal": state_to_colors(goal), "emulates": kind})
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump({"generator": generator, "emulation": True, "tasks": entries}, fh, indent=1)
        fh.write("\n")


def constant_log(device, watts, duration, period, rng):
    """Irregularly sampled constant-power log."""
    t = [0.0]
    while t[-1] < duration:
        t.append(min(duration, t[-1] + period * rng.uniform(0.5, 1.5)))
    return PowerLog(device, np.array(t), np.full(len(t), watts))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="fixtures")
    args = ap.parse_args()
    rng = np.random.default_rng(3)

    # strong generator: 8 invalid plans spread over the task list
    bad = {3: "truncated", 9: "violation", 16: "not_clear", 22: "prose",
           28: "violation", 35: "truncated", 41: "not_clear", 47: "violation"}
    kinds = [bad.get(i, "optimal") for i in range(50)]
    make_plan_set(os.path.join(args.out, "plans", "strong"), "GPT-5-like (emulated)", kinds, rng)
    weak = ["prose", "violation", "truncated", "not_clear"]
    kinds = [weak[i % 4] for i in range(50)]
    make_plan_set(os.path.join(args.out, "plans", "weak"), "Qwen/PaLI-Gemma-like (emulated)", kinds, rng)

    # NSM training: 316.5 W GPU and 97.7 W CPU for 34 min
    d = os.path.join(args.out, "energy", "table1_nsm")
    os.makedirs(d, exist_ok=True)
    write_power_csv(os.path.join(d, "nsm_training_gpu.csv"), constant_log("gpu", 316.5, 34 * 60, 2.0, rng))
    write_power_csv(os.path.join(d, "nsm_training_cpu.csv"), constant_log("cpu", 97.7, 34 * 60, 1.0, rng))
    # one PaLI-Gemma query: 92.9 W GPU and 38.0 W CPU for 0.22 s
    d = os.path.join(args.out, "energy", "table4_paligemma")
    os.makedirs(d, exist_ok=True)
    write_power_csv(os.path.join(d, "paligemma_query_gpu.csv"), constant_log("gpu", 92.9, 0.22, 0.02, rng))
    write_power_csv(os.path.join(d, "paligemma_query_cpu.csv"), constant_log("cpu", 38.0, 0.22, 0.01, rng))


if __name__ == "__main__":
    main()
