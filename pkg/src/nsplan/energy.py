"""Energy accounting from timestamped power logs."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

DEVICES = ("gpu", "cpu")
IDLE_GPU_W = 25.0
IDLE_CPU_W = 2.5


class InsufficientSamples(ValueError):
    pass


class NonMonotoneTimestamps(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PowerLog:
    device: str
    timestamps: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        p = np.asarray(self.power, dtype=float)
        if t.shape != p.shape or t.ndim != 1:
            raise ValueError("timestamps and power must be 1-D and the same length")
        if np.any(np.diff(t) <= 0):
            raise NonMonotoneTimestamps(f"{self.device}: timestamps must strictly increase")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError(f"{self.device}: power must be finite and non-negative")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "power", p)

    def __len__(self):
        return len(self.timestamps)

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0]) if len(self) else 0.0

    def gaps(self, max_gap: float) -> list:
        dt = np.diff(self.timestamps)
        idx = np.nonzero(dt > max_gap)[0]
        return [(float(self.timestamps[i]), float(self.timestamps[i + 1])) for i in idx]


def integrate_energy(log_: PowerLog, rule: str = "trapezoid") -> float:
    """Energy in joules; ``rule`` is ``trapezoid`` or ``rectangle`` (left sums)."""
    if len(log_) < 2:
        raise InsufficientSamples(f"{log_.device}: need at least 2 samples, got {len(log_)}")
    if rule == "trapezoid":
        return float(np.trapezoid(log_.power, log_.timestamps))
    if rule == "rectangle":
        return float(np.sum(log_.power[:-1] * np.diff(log_.timestamps)))
    raise ValueError(f"unknown integration rule {rule!r}")


def apply_idle_baseline(log_: PowerLog, idle_watts: float) -> PowerLog:
    if idle_watts < 0:
        raise ValueError("idle power must be non-negative")
    return PowerLog(log_.device, log_.timestamps, np.clip(log_.power - idle_watts, 0.0, None))


def choose_unit(joules: float):
    mag = abs(joules)
    if mag >= 1e6:
        return "MJ", 1e6
    if mag >= 1e3:
        return "kJ", 1e3
    return "J", 1.0


@dataclass
class DeviceEnergy:
    device: str
    duration_s: float
    energy_j: float
    idle_w: Optional[float] = None
    adjusted_energy_j: Optional[float] = None

    @property
    def mean_power_w(self) -> float:
        return self.energy_j / self.duration_s if self.duration_s > 0 else 0.0


@dataclass
class EnergyReport:
    phase: str
    devices: dict
    duration_s: float
    warnings: list = field(default_factory=list)

    @property
    def total_j(self) -> float:
        return sum(d.energy_j for d in self.devices.values())

    @property
    def total_adjusted_j(self) -> Optional[float]:
        vals = [d.adjusted_energy_j for d in self.devices.values()]
        if any(v is None for v in vals):
            return None
        return sum(vals)

    @property
    def unit(self) -> str:
        return choose_unit(self.total_j)[0]

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "duration_s": self.duration_s,
            "unit": self.unit,
            "total_j": self.total_j,
            "total_adjusted_j": self.total_adjusted_j,
            "devices": {
                k: {
                    "mean_power_w": d.mean_power_w,
                    "energy_j": d.energy_j,
                    "duration_s": d.duration_s,
                    "idle_w": d.idle_w,
                    "adjusted_energy_j": d.adjusted_energy_j,
                }
                for k, d in sorted(self.devices.items())
            },
            "warnings": list(self.warnings),
        }


def energy_report(phase: str, logs, idle: Optional[dict] = None, rule: str = "trapezoid",
                  max_gap: float = 10.0) -> EnergyReport:
    """Integrate each device log for one phase.

    Energies include idle draw; when ``idle`` maps device to watts the
    idle-subtracted energy is reported alongside.
    """
    logs = list(logs)
    if not logs:
        raise InsufficientSamples(f"phase {phase!r} has no power logs")
    devices = {}
    warnings = []
    for lg in logs:
        if lg.device in devices:
            raise ValueError(f"phase {phase!r} has two {lg.device} logs")
        e = integrate_energy(lg, rule)
        idle_w = adjusted = None
        if idle and lg.device in idle:
            idle_w = idle[lg.device]
            adjusted = integrate_energy(apply_idle_baseline(lg, idle_w), rule)
        devices[lg.device] = DeviceEnergy(lg.device, lg.duration, e, idle_w, adjusted)
        for a, b in lg.gaps(max_gap):
            msg = f"{phase}/{lg.device}: {b - a:.3f} s gap between samples at {a:.3f} s"
            log.warning(msg)
            warnings.append(msg)
    duration = max(d.duration_s for d in devices.values())
    return EnergyReport(phase, devices, duration, warnings)


# ---------------------------------------------------------------------------
# files


def read_power_csv(path, device: Optional[str] = None) -> PowerLog:
    if device is None:
        device = device_from_filename(path)
    ts, ps = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"timestamp_s", "power_w"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header timestamp_s,power_w")
        for row in reader:
            ts.append(float(row["timestamp_s"]))
            ps.append(float(row["power_w"]))
    return PowerLog(device, np.array(ts), np.array(ps))


def write_power_csv(path, log_: PowerLog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_s", "power_w"])
        for t, p in zip(log_.timestamps, log_.power):
            w.writerow([repr(float(t)), repr(float(p))])


def device_from_filename(path) -> str:
    base = os.path.basename(str(path))
    for dev in DEVICES:
        if base.endswith(f"_{dev}.csv"):
            return dev
    raise ValueError(f"{base}: cannot infer device, expected suffix _gpu.csv or _cpu.csv")


def load_logs_dir(directory) -> dict:
    """Group ``<phase>_<device>.csv`` files by phase."""
    phases = {}
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".csv"):
            continue
        dev = device_from_filename(name)
        phase = name[: -len(f"_{dev}.csv")]
        phases.setdefault(phase, []).append(read_power_csv(os.path.join(directory, name), dev))
    return phases


def reports_markdown(reports) -> str:
    lines = ["| Phase | Device | Duration (s) | Mean Power (W) | Energy | Idle-adjusted |",
             "|---|---|---:|---:|---:|---:|"]
    for r in reports:
        unit, scale = choose_unit(r.total_j)
        for dev in sorted(r.devices):
            d = r.devices[dev]
            adj = "--" if d.adjusted_energy_j is None else f"{d.adjusted_energy_j / scale:.3f} {unit}"
            lines.append(f"| {r.phase} | {dev} | {d.duration_s:.1f} | {d.mean_power_w:.1f} | "
                         f"{d.energy_j / scale:.3f} {unit} | {adj} |")
        adj = r.total_adjusted_j
        adj_s = "--" if adj is None else f"{adj / scale:.3f} {unit}"
        lines.append(f"| {r.phase} | **total** | {r.duration_s:.1f} | "
                     f"{r.total_j / r.duration_s if r.duration_s else 0.0:.1f} | "
                     f"{r.total_j / scale:.3f} {unit} | {adj_s} |")
    return "\n".join(lines) + "\n"


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phase", "device", "duration_s", "mean_power_w", "energy_j",
                "idle_w", "adjusted_energy_j"])
    for r in reports:
        for dev in sorted(r.devices):
            d = r.devices[dev]
            w.writerow([r.phase, dev, d.duration_s, d.mean_power_w, d.energy_j,
                        "" if d.idle_w is None else d.idle_w,
                        "" if d.adjusted_energy_j is None else d.adjusted_energy_j])
    return buf.getvalue()


def reports_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"
