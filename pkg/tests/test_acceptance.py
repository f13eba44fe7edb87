"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run under pytest (lines are repeated in the terminal summary) or directly:
``python tests/test_acceptance.py``.
"""

import math
import os
import random
import sys
import time

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from nsplan.abstraction import DemoGraph, bisimulation_minimize, hanoi_vocabulary, learn_domain
from nsplan.demos import generate_demos
from nsplan.energy import energy_report, integrate_energy, load_logs_dir, PowerLog
from nsplan.grading import grade_directory
from nsplan.metrics import aggregate_plan_grades, emit_report
from nsplan.planner import SearchConfig, Strategy, plan, validate_plan
from nsplan.skills import Agent, Outcome, fit_policy, make_task, policy_loss, run_episode, train_skills
from nsplan.world import HanoiState, all_configs, hanoi_task, replay_ops

from conftest import FIXTURES, GOLDEN
from oracles import greatest_bisimulation, hanoi_distance, is_bisimulation, piecewise_linear_integral

RESULTS = []


def _record(n, ok, detail, seconds):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({seconds:.2f} s) {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def check_1():
    lens = {}
    for n in (3, 4):
        t0 = time.perf_counter()
        p = plan(hanoi_task(HanoiState.tower(n, 0), HanoiState.tower(n, 2)), SearchConfig(Strategy.BFS_EXACT))
        lens[n] = (len(p), next(op.args[1] for op in p if op.name == "place"), time.perf_counter() - t0)
    ok = lens[3][0] == 14 and lens[4][0] == 30 and lens[4][1] == "middle" and max(v[2] for v in lens.values()) < 1
    return ok, (f"3-block {lens[3][0]} ops (want 14), 4-block {lens[4][0]} ops (want 30), "
                f"first 4-block placement {lens[4][1]!r} (want 'middle'), each < 1 s")


def check_2():
    demos = generate_demos(50, blocks=4, seed=7, noise_std=0.01)
    dom = learn_domain([d.transitions for d in demos], hanoi_vocabulary())[0]
    total = valid = optimal = 0
    for n in (3, 4):
        goal = HanoiState.tower(n, 2)
        for c in all_configs(n):
            total += 1
            task = hanoi_task(c, goal, domain=dom)
            try:
                p = plan(task, SearchConfig(Strategy.BFS_EXACT))
            except Exception:
                continue
            if not validate_plan(task, p).valid:
                continue
            try:
                moves, end = replay_ops(c, [(o.name, o.args) for o in p])
            except Exception:
                continue
            if end != goal:
                continue
            valid += 1
            optimal += len(moves) == hanoi_distance(c.stacks, goal.stacks)
    ok = total == 108 and valid == total and optimal >= 0.95 * total
    return ok, f"{valid}/{total} valid (want 100%), {optimal}/{total} optimal (want >= 95%)"


def check_3():
    rng = random.Random(2024)
    failures = 0
    for _ in range(200):
        n = rng.randint(1, 30)
        labels = "abc"[:rng.randint(1, 3)]
        edges = {(rng.randrange(n), rng.choice(labels), rng.randrange(n)) for _ in range(rng.randint(0, 2 * n))}
        g = DemoGraph(tuple(range(n)), frozenset(edges), {v: frozenset() for v in range(n)})
        q = bisimulation_minimize(g)
        rel = {(a, b) for c in q.classes for a in c for b in c}
        qg = q.as_graph()
        minimal = all(a == b for a, b in greatest_bisimulation(qg.nodes, qg.edges))
        idem = len(bisimulation_minimize(qg).classes) == len(q.classes)
        if not (is_bisimulation(rel, g.edges) and minimal and idem):
            failures += 1
    return failures == 0, f"{failures} failures on 200 random graphs (want 0)"


def check_4():
    s = np.linspace(-1, 1, 20)[:, None]
    W = fit_policy(s, 2.0 * s)
    err = abs(W[0, 0] - 2.0)
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 4))
    Y = X @ rng.normal(size=(4, 3)) + 0.1 * rng.normal(size=(60, 3)) + 0.5
    W2 = fit_policy(X, Y)
    h = 1e-6
    grad = np.zeros_like(W2)
    for idx in np.ndindex(W2.shape):
        e = np.zeros_like(W2)
        e[idx] = h
        grad[idx] = (policy_loss(W2 + e, X, Y) - policy_loss(W2 - e, X, Y)) / (2 * h)
    scale = float(np.mean(Y * Y))
    g = float(np.linalg.norm(grad))
    return err <= 1e-9 and g <= 1e-6 * scale, \
        f"weight error {err:.1e} (want <= 1e-9), gradient norm {g:.1e} (want <= {1e-6 * scale:.1e})"


def check_5():
    demos = generate_demos(50, blocks=4, seed=7, noise_std=0.01)
    dom = learn_domain([d.transitions for d in demos], hanoi_vocabulary())[0]
    agent = Agent(dom, train_skills([d.steps for d in demos]), name="nsm")
    task = make_task("hanoi3")
    clean = [run_episode(agent, task, seed=s, placement_noise=0.01) for s in range(50)]
    n_ok = sum(t.outcome == Outcome.SUCCESS and t.completed == 14 and t.step_count <= 750 for t in clean)
    n, p = 10_000, 0.9 ** 14
    wins = sum(run_episode(agent, task, seed=100_000 + s, success_prob=0.9,
                           record_steps=False).outcome == Outcome.SUCCESS for s in range(n))
    sd = math.sqrt(n * p * (1 - p))
    z = (wins - n * p) / sd
    ok = n_ok == 50 and abs(z) <= 3
    return ok, (f"zero-noise {n_ok}/50 with 14 events and <= 750 steps; noisy success "
                f"{wins / n:.4f} vs 0.9^14 = {p:.4f} ({z:+.2f} sigma, want |z| <= 3)")


def check_6():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 200))
        ts = np.cumsum(rng.uniform(0.01, 3.0, size=k))
        ps = rng.uniform(0, 400, size=k)
        exact = piecewise_linear_integral(list(zip(ts, ps)))
        worst = max(worst, abs(integrate_energy(PowerLog("gpu", ts, ps)) - exact) / exact)
    nsm = energy_report("nsm", load_logs_dir(os.path.join(FIXTURES, "energy", "table1_nsm"))["nsm_training"])
    pg = energy_report("pg", load_logs_dir(os.path.join(FIXTURES, "energy", "table4_paligemma"))["paligemma_query"])
    e1, e2 = nsm.total_j / 1e6, pg.total_j
    ok = worst <= 1e-9 and abs(e1 - 0.85) <= 0.02 * 0.85 and abs(e2 - 28.8) <= 0.05 * 28.8
    return ok, (f"max relative error {worst:.1e} (want <= 1e-9); NSM training {e1:.4f} MJ "
                f"(want 0.85 +- 2%); PaLI-Gemma query {e2:.2f} J (want 28.8 +- 5%)")


def check_7():
    res = {}
    for name in ("strong", "weak"):
        g = aggregate_plan_grades([x.grade for x in grade_directory(os.path.join(FIXTURES, "plans", name))])
        res[name] = (g["optimal_pct"], g["suboptimal_pct"], g["invalid_pct"])
    ok = res["strong"] == (84.0, 0.0, 16.0) and res["weak"] == (0.0, 0.0, 100.0)
    fmt = lambda t: "/".join(f"{v:g}" for v in t)
    return ok, f"strong fixture {fmt(res['strong'])} (want 84/0/16), weak {fmt(res['weak'])} (want 0/0/100)"


def check_8():
    import json
    with open(os.path.join(FIXTURES, "paper_values.json")) as fh:
        vals = json.load(fh)
    matched = []
    for i in range(1, 5):
        with open(os.path.join(GOLDEN, f"table{i}.md")) as fh:
            matched.append(emit_report(vals[f"table{i}"], f"table{i}") == fh.read())
    return all(matched), f"{sum(matched)}/4 tables byte-identical to the goldens"


def _run(n, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return _record(n, ok, detail, time.perf_counter() - t0)


def test_criterion_1():
    assert _run(1, check_1)


def test_criterion_2():
    assert _run(2, check_2)


def test_criterion_3():
    assert _run(3, check_3)


def test_criterion_4():
    assert _run(4, check_4)


def test_criterion_5():
    assert _run(5, check_5)


def test_criterion_6():
    assert _run(6, check_6)


def test_criterion_7():
    assert _run(7, check_7)


def test_criterion_8():
    assert _run(8, check_8)


if __name__ == "__main__":
    results = [_run(i, fn) for i, fn in enumerate(
        (check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8), start=1)]
    sys.exit(0 if all(results) else 1)
