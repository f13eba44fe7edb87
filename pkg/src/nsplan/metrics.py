"""Episode and plan-grade aggregation, and table rendering.

A metrics record is ``{"columns": [...], "values": {row_key: [cell, ...]}}``
where a cell is a number, ``None`` (rendered ``--``) or
``{"value": x, "decimals": d}`` to override the row's precision.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional

from .planner import PlanClass
from .skills import EpisodeTrace, Outcome, advancement


def aggregate_episodes(traces, total_subtasks: Optional[int] = None, episode_energy_j=None) -> dict:
    """Success and advancement percentages, mean duration and energy.

    Advancement is averaged over all episodes, successes included.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to aggregate")
    totals = {t.total_subtasks for t in traces} if total_subtasks is None else {total_subtasks}
    if len(totals) != 1:
        raise ValueError("traces come from tasks of different length")
    total = totals.pop()
    n = len(traces)
    out = {
        "episodes": n,
        "success_pct": 100.0 * sum(t.outcome == Outcome.SUCCESS for t in traces) / n,
        "advancement_pct": sum(advancement(t, total) for t in traces) / n,
        "mean_duration_s": sum(t.duration_s for t in traces) / n,
        "mean_steps": sum(t.step_count for t in traces) / n,
    }
    if episode_energy_j is not None:
        e = list(episode_energy_j)
        if len(e) != n:
            raise ValueError("one energy value per trace required")
        out["mean_energy_kj"] = sum(e) / n / 1e3
    return out


def aggregate_plan_grades(grades) -> dict:
    grades = [PlanClass(g) for g in grades]
    if not grades:
        raise ValueError("no grades to aggregate")
    n = len(grades)
    return {
        "plans": n,
        "optimal_pct": 100.0 * grades.count(PlanClass.OPTIMAL) / n,
        "suboptimal_pct": 100.0 * grades.count(PlanClass.SUBOPTIMAL) / n,
        "invalid_pct": 100.0 * grades.count(PlanClass.INVALID) / n,
    }


# ---------------------------------------------------------------------------
# templates


@dataclass(frozen=True)
class Row:
    key: str
    label: str
    decimals: int = 1
    best: Optional[str] = None   # "max", "min" or None (never bolded)
    fmt: str = "number"          # "number" or "duration" (value in seconds)
    group: str = ""              # first-column label in grouped tables
    strong: bool = False         # bold label


@dataclass(frozen=True)
class Section:
    label: str


@dataclass(frozen=True)
class Template:
    name: str
    caption: str
    first: tuple                 # leading header cells
    rows: tuple


TEMPLATES = {
    "table1": Template(
        "table1",
        "Training hardware metrics. Best values in each row are bolded.",
        ("Metric",),
        (
            Row("time_s", "Time", best="min", fmt="duration"),
            Section("GPU Metrics"),
            Row("gpu_util_pct", "Mean Util. (%)", 0),
            Row("gpu_power_w", "Mean Power (W)", 1, "min"),
            Row("gpu_energy_mj", "Energy (MJ)", 1, "min"),
            Section("CPU Metrics"),
            Row("cpu_util_pct", "Mean Util. (%)", 2),
            Row("cpu_power_w", "Mean Power (W)", 1, "min"),
            Row("cpu_energy_mj", "Energy (MJ)", 1, "min"),
            Section(""),
            Row("total_energy_mj", "Total Energy (MJ)", 1, "min", strong=True),
        ),
    ),
    "table2": Template(
        "table2",
        "Power, energy consumption, and task performance. Values are averaged over the evaluation episodes.",
        ("Setting", "Metric"),
        (
            Row("gpu_power_w", "GPU Power (W)", 1, "min", group="All Tasks"),
            Row("cpu_power_w", "CPU Power (W)", 1, "min", group="All Tasks"),
            Row("total_power_w", "Total Power (W)", 1, "min", group="All Tasks"),
            Row("move_success_pct", "Success (%)", 1, "max", group="Individual Move"),
            Row("move_duration_s", "Duration (s)", 1, "min", group="Individual Move"),
            Row("move_energy_kj", "Energy (kJ)", 2, "min", group="Individual Move"),
            Row("hanoi3_success_pct", "Success (%)", 1, "max", group="3-Block Hanoi"),
            Row("hanoi3_advancement_pct", "Advancement (%)", 1, "max", group="3-Block Hanoi"),
            Row("hanoi3_energy_kj", "Episode Energy (kJ)", 2, "min", group="3-Block Hanoi"),
            Row("hanoi4_success_pct", "Success (%)", 1, "max", group="4-Block Hanoi"),
            Row("hanoi4_advancement_pct", "Advancement (%)", 1, "max", group="4-Block Hanoi"),
            Row("hanoi4_energy_kj", "Episode Energy (kJ)", 2, "min", group="4-Block Hanoi"),
        ),
    ),
    "table3": Template(
        "table3",
        "Planning accuracy of plan generators over the evaluation tasks.",
        ("Metric",),
        (
            Row("optimal_pct", "Optimal (%)", 0, "max"),
            Row("suboptimal_pct", "Suboptimal (%)", 0),
            Row("invalid_pct", "Invalid (%)", 0, "min"),
        ),
    ),
    "table4": Template(
        "table4",
        "Per-query latency and hardware usage of plan generators. Lower is better; best in bold.",
        ("Metric",),
        (
            Row("latency_s", "Latency (s)", 2, "min"),
            Section("GPU metrics per query"),
            Row("gpu_util_pct", "Util. (%)", 1),
            Row("gpu_power_w", "Power (W)", 1, "min"),
            Row("gpu_energy_j", "Energy (J)", 1, "min"),
            Section("CPU metrics per query"),
            Row("cpu_util_pct", "Util. (%)", 2),
            Row("cpu_power_w", "Power (W)", 1, "min"),
            Row("cpu_energy_j", "Energy (J)", 1, "min"),
            Section(""),
            Row("total_energy_j", "Total Energy (J)", 1, "min"),
        ),
    ),
}


def format_duration(seconds: float) -> str:
    minutes = int(round(seconds / 60.0))
    d, rem = divmod(minutes, 24 * 60)
    h, m = divmod(rem, 60)
    parts = []
    if d:
        parts.append(f"{d}d")
    if d or h:
        parts.append(f"{h}h")
    parts.append(f"{m}m")
    return " ".join(parts)


def _cell(raw, row: Row):
    """(display string, comparable value or None)."""
    if raw is None:
        return "--", None
    decimals = row.decimals
    if isinstance(raw, dict):
        decimals = raw.get("decimals", decimals)
        raw = raw["value"]
    if row.fmt == "duration":
        return format_duration(raw), int(round(raw / 60.0))
    text = f"{raw:.{decimals}f}"
    return text, float(text)


def _row_cells(values, row: Row, ncols: int) -> list:
    if len(values) != ncols:
        raise ValueError(f"row {row.key!r} has {len(values)} values for {ncols} columns")
    cells = [_cell(v, row) for v in values]
    present = [v for _, v in cells if v is not None]
    bold = set()
    if row.best and len(present) > 1:
        target = max(present) if row.best == "max" else min(present)
        bold = {i for i, (_, v) in enumerate(cells) if v == target}
    return [f"**{t}**" if i in bold else t for i, (t, _) in enumerate(cells)]


def _table_rows(metrics: dict, template: Template):
    cols = list(metrics["columns"])
    values = metrics["values"]
    missing = [r.key for r in template.rows if isinstance(r, Row) and r.key not in values]
    if missing:
        raise KeyError(f"metrics lack rows for {template.name}: {', '.join(missing)}")
    out = []
    last_group = None
    for r in template.rows:
        if isinstance(r, Section):
            out.append(("section", r, None))
            continue
        group = r.group if r.group != last_group else ""
        last_group = r.group
        out.append(("row", r, (group, _row_cells(values[r.key], r, len(cols)))))
    return cols, out


def emit_report(metrics: dict, template: str, fmt: str = "markdown") -> str:
    """Render a metrics record in the layout of ``template``."""
    if template not in TEMPLATES:
        raise KeyError(f"unknown template {template!r}")
    tpl = TEMPLATES[template]
    cols, rows = _table_rows(metrics, tpl)
    lead = len(tpl.first)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(tpl.first) + cols)
        for kind, r, data in rows:
            if kind == "section":
                continue
            group, cells = data
            label = [r.group, r.label] if lead == 2 else [r.label]
            w.writerow(label + [c.replace("**", "") for c in cells])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown format {fmt!r}")
    width = lead + len(cols)
    lines = [f"{tpl.caption}", "",
             "| " + " | ".join(list(tpl.first) + cols) + " |",
             "|" + "|".join([":---"] * lead + ["---:"] * len(cols)) + "|"]
    for kind, r, data in rows:
        if kind == "section":
            if r.label:
                lines.append("| " + " | ".join([f"*{r.label}*"] + [""] * (width - 1)) + " |")
            continue
        group, cells = data
        label = f"**{r.label}**" if r.strong else r.label
        head = [group, label] if lead == 2 else [label]
        lines.append("| " + " | ".join(head + cells) + " |")
    return "\n".join(lines) + "\n"


def emit_json(metrics: dict) -> str:
    return json.dumps(metrics, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# assembling records from pipeline outputs


def table2_metrics(columns: dict) -> dict:
    """``columns`` maps agent name to ``{"gpu_power_w", "cpu_power_w",
    "tasks": {"move"|"hanoi3"|"hanoi4": [EpisodeTrace, ...]}}``.

    Episode energy is total mean power times episode duration.
    """
    names = list(columns)
    values = {r.key: [] for r in TEMPLATES["table2"].rows if isinstance(r, Row)}
    for name in names:
        c = columns[name]
        gpu, cpu = c.get("gpu_power_w", 0.0), c.get("cpu_power_w", 0.0)
        power = gpu + cpu
        values["gpu_power_w"].append(gpu)
        values["cpu_power_w"].append(cpu)
        values["total_power_w"].append(power)
        for task in ("move", "hanoi3", "hanoi4"):
            traces = c.get("tasks", {}).get(task)
            agg = None
            if traces:
                agg = aggregate_episodes(traces, episode_energy_j=[power * t.duration_s for t in traces])
            values[f"{task}_success_pct"].append(agg and agg["success_pct"])
            if task == "move":
                values["move_duration_s"].append(agg and agg["mean_duration_s"])
                values["move_energy_kj"].append(agg and agg["mean_energy_kj"])
            else:
                values[f"{task}_advancement_pct"].append(agg and agg["advancement_pct"])
                values[f"{task}_energy_kj"].append(agg and agg["mean_energy_kj"])
    return {"columns": names, "values": values}


def table3_metrics(grades_by_planner: dict) -> dict:
    names = list(grades_by_planner)
    aggs = [aggregate_plan_grades(grades_by_planner[n]) for n in names]
    return {"columns": names,
            "values": {k: [a[k] for a in aggs] for k in ("optimal_pct", "suboptimal_pct", "invalid_pct")}}


def advancement_histogram_csv(traces, bins: int = 10) -> str:
    """Per-episode advancement counts in equal-width bins over [0, 100]."""
    counts = [0] * bins
    for t in traces:
        a = advancement(t)
        counts[min(int(a / (100.0 / bins)), bins - 1)] += 1
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_low_pct", "bin_high_pct", "episodes"])
    for i, c in enumerate(counts):
        w.writerow([100.0 * i / bins, 100.0 * (i + 1) / bins, c])
    return buf.getvalue()


def read_traces(text: str) -> list:
    """Split a multi-episode trace file at footer records."""
    out, chunk = [], []
    for line in text.splitlines():
        if not line.strip():
            continue
        chunk.append(line)
        if json.loads(line).get("footer"):
            out.append(EpisodeTrace.from_jsonl("\n".join(chunk)))
            chunk = []
    if chunk:
        raise ValueError("trailing step records without a footer")
    return out
