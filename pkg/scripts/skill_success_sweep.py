#!/usr/bin/env python3
"""Episode success against per-skill success probability.

With independent skill failures and no recovery, a 3-block episode (14
skills) should succeed with probability p**14. The sweep also shows how much
the retry and replan flags recover. Writes a CSV to stdout.
"""

import argparse
import csv
import math
import sys

from nsplan.abstraction import hanoi_vocabulary, learn_domain
from nsplan.demos import generate_demos
from nsplan.skills import Agent, Outcome, make_task, run_episode, train_skills


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=2000)
    ap.add_argument("--task", default="hanoi3", choices=["hanoi3", "hanoi4"])
    ap.add_argument("--probs", default="1.0,0.99,0.97,0.95,0.9,0.85,0.8")
    ap.add_argument("--seed", type=int, default=7)
    a = ap.parse_args()

    demos = generate_demos(50, 4, a.seed, 0.01)
    domain = learn_domain([d.transitions for d in demos], hanoi_vocabulary())[0]
    agent = Agent(domain, train_skills([d.steps for d in demos]), name="nsm")
    task = make_task(a.task)
    n_skills = 14 if a.task == "hanoi3" else 30

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["p", "expected", "plain", "plain_z", "retry", "replan"])
    for p in (float(x) for x in a.probs.split(",")):
        rates = {}
        for mode in ("plain", "retry", "replan"):
            kw = {mode: True} if mode != "plain" else {}
            wins = sum(run_episode(agent, task, seed=s, success_prob=p, record_steps=False,
                                   **kw).outcome == Outcome.SUCCESS for s in range(a.episodes))
            rates[mode] = wins / a.episodes
        q = p ** n_skills
        sd = math.sqrt(q * (1 - q) / a.episodes) or float("nan")
        z = (rates["plain"] - q) / sd if sd == sd else 0.0
        w.writerow([p, f"{q:.4f}", f"{rates['plain']:.4f}", f"{z:+.2f}",
                    f"{rates['retry']:.4f}", f"{rates['replan']:.4f}"])


if __name__ == "__main__":
    main()
