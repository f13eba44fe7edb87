#!/usr/bin/env python3
"""End-to-end run: demos -> learned model -> episodes -> plan grading ->
energy -> tables.

Everything lands under --out (default runs/pipeline). Power logs written by
``simulate`` are a synthetic constant profile; the resulting energy figures
only exercise the accounting path and say nothing about real hardware.
"""

import argparse
import os
import sys

from nsplan.cli import main as nsplan

TASKS = ("move", "hanoi3", "hanoi4")


def run(argv):
    print("$ nsplan " + " ".join(argv))
    code = nsplan(argv)
    if code:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/pipeline")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--episodes", type=int, default=50)
    ap.add_argument("--skill-success", type=float, default=1.0)
    ap.add_argument("--jobs", type=int, default=0)
    a = ap.parse_args()

    out = a.out
    demos, model = os.path.join(out, "demos"), os.path.join(out, "model")
    run(["gen-demos", "--n", "50", "--seed", str(a.seed), "--out", demos])
    run(["learn-domain", "--demos", demos, "--out", model])

    traces = []
    for agent in ("nsm", "scripted"):
        for task in TASKS:
            d = os.path.join(out, "sim", f"{agent}_{task}")
            run(["simulate", "--agent", agent, "--model", model, "--task", task,
                 "--episodes", str(a.episodes), "--seed", str(a.seed),
                 "--skill-success", str(a.skill_success), "--jobs", str(a.jobs),
                 "--no-steps", "--out", d])
            traces.append(os.path.join(d, "traces.jsonl"))

    power = os.path.join(out, "power")
    os.makedirs(power, exist_ok=True)
    for name in os.listdir(os.path.join(out, "sim")):
        src = os.path.join(out, "sim", name, "power")
        for f in os.listdir(src):
            os.replace(os.path.join(src, f), os.path.join(power, f))
    run(["energy", "--logs-dir", power, "--out", os.path.join(out, "energy")])

    grades = []
    for name in ("strong", "weak"):
        g = os.path.join(out, "grades", f"{name}.json")
        run(["classify", "--plans-dir", os.path.join("fixtures", "plans", name), "--out", g])
        grades.append(g)

    run(["report", "--traces", *traces, "--grades", *grades,
         "--energy", os.path.join(out, "energy", "energy.json"), "--out", os.path.join(out, "report")])


if __name__ == "__main__":
    main()
