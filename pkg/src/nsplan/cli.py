"""Command-line pipeline: demos -> domain -> plans -> episodes -> energy -> reports.

Exit codes: 0 success, 2 usage error, 3 data error, 4 resource exhaustion.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .abstraction import GraphError, InductionFailure, hanoi_vocabulary, learn_domain
from .commands import InvalidPlanText, plan_to_commands
from .demos import dumps_demo, generate_demos, loads_demo
from .energy import (IDLE_CPU_W, IDLE_GPU_W, InsufficientSamples, PowerLog, energy_report,
                     load_logs_dir, reports_csv, reports_json, reports_markdown, write_power_csv)
from .grading import grade_directory, load_manifest
from .metrics import (TEMPLATES, aggregate_plan_grades, emit_json, emit_report, read_traces,
                      table2_metrics, table3_metrics, advancement_histogram_csv)
from .pddl import PDDLError, parse_domain, parse_problem, serialize_domain
from .planner import (NoPlan, ResourceExhausted, SearchConfig, Strategy, classify_plan,
                      plan as search_plan, plan_from_jsonl, plan_to_jsonl, resolve_step, validate_plan)
from .skills import (TASK_KINDS, Agent, load_skills, make_task, run_episode, save_skills,
                     train_skills)
from .world import hanoi_domain

log = logging.getLogger("nsplan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RESOURCE = 0, 2, 3, 4
DATA_ERRORS = (PDDLError, GraphError, InductionFailure, InvalidPlanText, InsufficientSamples,
               NoPlan, ValueError, KeyError, OSError, json.JSONDecodeError)


class UsageError(Exception):
    pass


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _read(path):
    with open(path) as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_demos(a):
    os.makedirs(a.out, exist_ok=True)
    demos = generate_demos(a.n, a.blocks, a.seed, a.noise_std)
    for i, d in enumerate(demos):
        _write(os.path.join(a.out, f"demo_{i:04d}.jsonl"), dumps_demo(d))
    print(f"wrote {len(demos)} demos to {a.out}")


def _load_demos(directory):
    names = sorted(n for n in os.listdir(directory) if n.endswith(".jsonl"))
    return [loads_demo(_read(os.path.join(directory, n))) for n in names]


def cmd_learn_domain(a):
    demos = _load_demos(a.demos)
    if not demos:
        raise ValueError(f"{a.demos}: no demonstrations")
    domain, graph, quotient = learn_domain([d.transitions for d in demos], hanoi_vocabulary(), a.k)
    skills = train_skills([d.steps for d in demos])
    os.makedirs(a.out, exist_ok=True)
    _write(os.path.join(a.out, "domain.pddl"), serialize_domain(domain))
    _write(os.path.join(a.out, "graph.json"), graph.to_json() + "\n")
    save_skills(skills, os.path.join(a.out, "skills.json"))
    diag = {
        "demos": len(demos),
        "graph_nodes": len(graph.nodes),
        "graph_edges": len(graph.edges),
        "quotient_classes": len(quotient.classes),
        "quotient_edges": len(quotient.edges),
        "labels": sorted(graph.labels),
        "operators": {op.name: {"params": [f"{v} - {t}" for v, t in op.params],
                                "pre": sorted(map(str, op.pre)), "add": sorted(map(str, op.add)),
                                "del": sorted(map(str, op.delete))}
                      for op in domain.operators},
    }
    _write(os.path.join(a.out, "diagnostics.json"), json.dumps(diag, indent=2, sort_keys=True) + "\n")
    print(f"graph {len(graph.nodes)} nodes / {len(graph.edges)} edges, "
          f"quotient {len(quotient.classes)} classes, {len(domain.operators)} operators")


def _task(a):
    domain = parse_domain(_read(a.domain))
    return parse_problem(_read(a.problem), domain)


def cmd_plan(a):
    task = _task(a)
    p = search_plan(task, SearchConfig(Strategy(a.strategy), a.max_expansions))
    if a.out and a.out.endswith(".cmds"):
        text = "".join(line + "\n" for line in plan_to_commands(p))
    elif a.out and a.out.endswith(".jsonl"):
        text = plan_to_jsonl(p)
    else:
        text = "".join(str(op) + "\n" for op in p)
    if a.out:
        _write(a.out, text)
    else:
        sys.stdout.write(text)
    log.info("plan of length %d", len(p))


def _read_plan(path, task):
    text = _read(path)
    if path.endswith(".jsonl"):
        return plan_from_jsonl(text, task)
    from .commands import commands_to_plan, split_lines
    from .pddl import Plan
    if path.endswith(".cmds"):
        return commands_to_plan(split_lines(text), task)
    steps = []
    for line in split_lines(text):
        parts = line.strip().strip("()").split()
        steps.append(resolve_step(task, parts[0], parts[1:]))
    return Plan(tuple(steps))


def cmd_validate(a):
    task = _task(a)
    p = _read_plan(a.plan, task)
    res = validate_plan(task, p)
    out = {"valid": res.valid, "failing_step": res.failing_step,
           "reason": None if res.reason is None else res.reason.value,
           "class": classify_plan(task, p).value, "length": len(p)}
    print(json.dumps(out, sort_keys=True))


def cmd_classify(a):
    grades = grade_directory(a.plans_dir)
    manifest = load_manifest(a.plans_dir)
    out = {"generator": manifest.get("generator", os.path.basename(a.plans_dir.rstrip("/"))),
           "grades": [g.to_dict() for g in grades],
           "summary": aggregate_plan_grades([g.grade for g in grades])}
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if a.out:
        _write(a.out, text)
    s = out["summary"]
    print(f"optimal {s['optimal_pct']:.1f}%  suboptimal {s['suboptimal_pct']:.1f}%  "
          f"invalid {s['invalid_pct']:.1f}%  ({s['plans']} plans)")


def _make_agent(a):
    if a.agent == "scripted":
        return Agent(hanoi_domain(), None, Strategy(a.strategy), name="scripted")
    if a.model:
        domain = parse_domain(_read(os.path.join(a.model, "domain.pddl")))
        skills = load_skills(os.path.join(a.model, "skills.json"))
    else:
        demos = generate_demos(50, 4, a.seed, 0.01)
        domain, _, _ = learn_domain([d.transitions for d in demos], hanoi_vocabulary())
        skills = train_skills([d.steps for d in demos])
    return Agent(domain, skills, Strategy(a.strategy), name="nsm")


def _run_chunk(agent, kind, seeds, opts):
    out = []
    for s in seeds:
        task = make_task(kind, np.random.default_rng([s, 1]))
        tr = run_episode(agent, task, seed=s, **opts)
        out.append(tr.to_jsonl())
    return out


def cmd_simulate(a):
    if a.episodes < 0 or a.timeout <= 0 or not 0.0 <= a.skill_success <= 1.0:
        raise UsageError("episodes >= 0, timeout > 0 and 0 <= skill-success <= 1 required")
    agent = _make_agent(a)
    seeds = [a.seed * 100_003 + i for i in range(a.episodes)]
    opts = dict(timeout_steps=a.timeout, success_prob=a.skill_success, retry=a.retry,
                replan=a.replan, placement_noise=a.placement_noise,
                record_steps=not a.no_steps)
    jobs = a.jobs or os.cpu_count() or 1
    jobs = max(1, min(jobs, len(seeds) or 1))
    chunks = [seeds[i::jobs] for i in range(jobs)]
    if jobs == 1:
        results = [_run_chunk(agent, a.task, chunks[0], opts)]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_chunk, [agent] * jobs, [a.task] * jobs, chunks, [opts] * jobs))
    # undo the round-robin split so output order follows the seed order
    texts = [None] * len(seeds)
    for j, res in enumerate(results):
        for k, t in enumerate(res):
            texts[j + k * jobs] = t
    os.makedirs(a.out, exist_ok=True)
    _write(os.path.join(a.out, "traces.jsonl"), "".join(texts))
    traces = read_traces("".join(texts)) if texts else []
    summary = {"agent": agent.name, "task": a.task, "episodes": len(traces)}
    if traces:
        from .metrics import aggregate_episodes
        summary.update(aggregate_episodes(traces))
        _write(os.path.join(a.out, "advancement_hist.csv"), advancement_histogram_csv(traces))
    # synthetic constant-power logs over the simulated time, for exercising
    # the energy pipeline only
    total = sum(t.duration_s for t in traces)
    if total > 0:
        ts = np.arange(0.0, total, 1.0)
        ts = np.append(ts, total) if ts[-1] < total else ts
        phase = f"{agent.name}_{a.task}"
        os.makedirs(os.path.join(a.out, "power"), exist_ok=True)
        for dev, w in (("gpu", a.gpu_watts), ("cpu", a.cpu_watts)):
            write_power_csv(os.path.join(a.out, "power", f"{phase}_{dev}.csv"),
                            PowerLog(dev, ts, np.full(len(ts), float(w))))
    _write(os.path.join(a.out, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if traces:
        print(f"{agent.name} {a.task}: success {summary['success_pct']:.1f}%  "
              f"advancement {summary['advancement_pct']:.1f}%  mean {summary['mean_steps']:.0f} steps")
    else:
        print(f"{agent.name} {a.task}: no episodes")


def cmd_energy(a):
    phases = load_logs_dir(a.logs_dir)
    if not phases:
        raise InsufficientSamples(f"{a.logs_dir}: no power logs")
    idle = {"gpu": a.idle_gpu, "cpu": a.idle_cpu}
    reports = [energy_report(ph, logs, idle, a.rule, a.max_gap) for ph, logs in sorted(phases.items())]
    md, csv_, js = reports_markdown(reports), reports_csv(reports), reports_json(reports)
    if a.out:
        os.makedirs(a.out, exist_ok=True)
        _write(os.path.join(a.out, "energy.md"), md)
        _write(os.path.join(a.out, "energy.csv"), csv_)
        _write(os.path.join(a.out, "energy.json"), js)
    sys.stdout.write(md)


def _write_tables(tables, out):
    md, csv_ = [], []
    for name, rec in tables:
        md.append(emit_report(rec, name))
        csv_.append(f"# {name}\n" + emit_report(rec, name, "csv"))
    text = "\n".join(md)
    if out:
        os.makedirs(out, exist_ok=True)
        _write(os.path.join(out, "report.md"), text)
        _write(os.path.join(out, "report.csv"), "\n".join(csv_))
        _write(os.path.join(out, "report.json"), emit_json(dict(tables)))
    sys.stdout.write(text)


def cmd_report(a):
    if a.metrics:
        data = json.loads(_read(a.metrics))
        if "columns" in data:
            if not a.template:
                raise UsageError("--template is required for a single metrics record")
            data = {a.template: data}
        names = [a.template] if a.template else [n for n in TEMPLATES if n in data]
        _write_tables([(n, data[n]) for n in names], a.out)
        return
    tables = []
    if a.traces:
        power = {}
        if a.energy:
            for rep in json.loads(_read(a.energy)):
                agent = rep["phase"].split("_")[0]
                for dev, d in rep["devices"].items():
                    power.setdefault(agent, {}).setdefault(dev, []).append(d["mean_power_w"])
        cols = {}
        for path in a.traces:
            for tr in read_traces(_read(path)):
                agent, task = tr.meta.get("agent", "agent"), tr.meta.get("task", "task")
                col = cols.setdefault(agent, {"tasks": {}})
                col["tasks"].setdefault(task, []).append(tr)
        for agent, col in cols.items():
            for dev in ("gpu", "cpu"):
                vals = power.get(agent, {}).get(dev)
                col[f"{dev}_power_w"] = sum(vals) / len(vals) if vals else 0.0
        tables.append(("table2", table2_metrics(cols)))
    if a.grades:
        by = {}
        for path in a.grades:
            g = json.loads(_read(path))
            by[g["generator"]] = [x["class"] for x in g["grades"]]
        tables.append(("table3", table3_metrics(by)))
    if not tables:
        raise UsageError("nothing to report: give --metrics, --traces or --grades")
    _write_tables(tables, a.out)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    p = argparse.ArgumentParser(prog="nsplan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="JSON file whose keys mirror the subcommand flags; flags win")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-demos", help="scripted stacking demonstrations",
                       description="Writes demo_NNNN.jsonl: a header {header, transitions:"
                                   "[{source, label, target}]} then per-step {image_omitted, state[8], "
                                   "action[7], subtask, op, args, phase, object_poses}.")
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--blocks", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-std", type=float, default=0.01)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_demos)

    s = sub.add_parser("learn-domain", help="induce a PDDL domain and fit skills from demos",
                       description="Reads demo_*.jsonl; writes domain.pddl, graph.json "
                                   "{nodes, edges}, skills.json {version, skills} and diagnostics.json.")
    s.add_argument("--demos", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int, default=4, help="largest precondition subset searched")
    s.set_defaults(func=cmd_learn_domain)

    strategies = [x.value for x in Strategy]
    s = sub.add_parser("plan", help="search for a plan",
                       description="Plan output: *.cmds one command per line, *.jsonl "
                                   "{op, args} per line, otherwise (op arg ...) per line.")
    s.add_argument("--domain", required=True)
    s.add_argument("--problem", required=True)
    s.add_argument("--strategy", choices=strategies, default="gbfs_hff")
    s.add_argument("--max-expansions", type=int, default=1_000_000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("validate", help="validate and grade one plan file",
                       description="Prints {valid, failing_step, reason, class, length} as JSON.")
    s.add_argument("--domain", required=True)
    s.add_argument("--problem", required=True)
    s.add_argument("--plan", required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("classify", help="grade a directory of command plans",
                       description="Needs manifest.json {generator, tasks:[{plan, initial, goal}]} "
                                   "with stacks as bottom-up color lists; writes {generator, grades, summary}.")
    s.add_argument("--plans-dir", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("simulate", help="run evaluation episodes",
                       description="Writes traces.jsonl (step records, one footer per episode), "
                                   "summary.json, advancement_hist.csv and synthetic constant "
                                   "power logs power/<agent>_<task>_{gpu,cpu}.csv.")
    s.add_argument("--agent", choices=["nsm", "scripted"], default="nsm")
    s.add_argument("--task", choices=TASK_KINDS, default="hanoi3")
    s.add_argument("--episodes", type=int, default=50)
    s.add_argument("--timeout", type=int, default=750, help="control steps per episode")
    s.add_argument("--skill-success", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=0, help="worker processes (default: CPU count)")
    s.add_argument("--model", help="learn-domain output directory (nsm agent)")
    s.add_argument("--strategy", choices=strategies, default="gbfs_hff")
    s.add_argument("--retry", action="store_true", help="retry a failed pick once")
    s.add_argument("--replan", action="store_true", help="replan after a failed skill")
    s.add_argument("--placement-noise", type=float, default=0.01)
    s.add_argument("--gpu-watts", type=float, default=0.0, help="synthetic GPU power profile")
    s.add_argument("--cpu-watts", type=float, default=20.0, help="synthetic CPU power profile")
    s.add_argument("--no-steps", action="store_true", help="write footers only")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("energy", help="integrate power logs per phase",
                       description="Reads <phase>_gpu.csv / <phase>_cpu.csv with header "
                                   "timestamp_s,power_w; writes energy.md, energy.csv, energy.json.")
    s.add_argument("--logs-dir", required=True)
    s.add_argument("--idle-gpu", type=float, default=IDLE_GPU_W)
    s.add_argument("--idle-cpu", type=float, default=IDLE_CPU_W)
    s.add_argument("--rule", choices=["trapezoid", "rectangle"], default="trapezoid")
    s.add_argument("--max-gap", type=float, default=10.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_energy)

    s = sub.add_parser("report", help="render result tables",
                       description="--metrics renders {columns, values} records (or a file keyed by "
                                   "template); otherwise tables are built from traces, grades and energy.")
    s.add_argument("--metrics")
    s.add_argument("--template", choices=sorted(TEMPLATES))
    s.add_argument("--traces", nargs="*")
    s.add_argument("--grades", nargs="*")
    s.add_argument("--energy", help="energy.json from the energy subcommand")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def parse_args(argv):
    """Parse ``argv``; a ``--config`` JSON file supplies subcommand defaults,
    including required flags, and explicit flags still win."""
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            cfg = json.loads(_read(known.config))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config must be a JSON object")
        choices = parser._subparsers._group_actions[0].choices
        command = next((t for t in argv if t in choices), None)
        if command is not None:
            sub = choices[command]
            cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
            actions = {a.dest: a for a in sub._actions}
            unknown = sorted(k for k in cfg if k not in actions or k == "help")
            if unknown:
                parser.error(f"unknown config keys: {', '.join(unknown)}")
            for k in cfg:
                actions[k].required = False
            sub.set_defaults(**cfg)
    return parser, parser.parse_args(argv)


def main(argv=None) -> int:
    parser, args = parse_args(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nsplan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceExhausted as exc:
        print(f"nsplan: resource exhausted: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except DATA_ERRORS as exc:
        print(f"nsplan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
