"""Structured run reports.

Reports are plain dicts rendered to JSON with sorted keys, so two runs of
the same pipeline on the same inputs produce byte-identical files once the
timing block is excluded. The schema is published as data for consumers to
validate against.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

REPORT_VERSION = "1"

REPORT_SCHEMA = {
    "type": "object",
    "required": ["version", "command", "config", "stages", "timings_ms", "warnings"],
    "properties": {
        "version": {"type": "string"},
        "command": {"type": "string"},
        "config": {"type": "object"},
        "stages": {"type": "object"},
        "timings_ms": {
            "type": "object",
            "additionalProperties": {"type": "number"},
        },
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
    "additionalProperties": False,
}


def coerce_plain(obj):
    """Recursively turn numpy scalars/arrays into plain Python values."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): coerce_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [coerce_plain(v) for v in obj]
    return obj


def json_dumps(payload: dict) -> str:
    """Canonical JSON rendering: sorted keys, two-space indent, one final
    newline. Keeping this in one place is what makes byte-level determinism
    checks meaningful."""
    return json.dumps(coerce_plain(payload), sort_keys=True, indent=2) + "\n"


@dataclass
class RunReport:
    """Mutable accumulator a pipeline command fills stage by stage."""

    command: str
    config: dict
    stages: dict = field(default_factory=dict)
    timings_ms: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    version: str = REPORT_VERSION
    # name of the most recently started stage; lets a failure handler mark
    # which stage died without threading that state through every call
    current_stage: str | None = None

    def add_stage(self, name: str, payload: dict) -> None:
        self.stages[name] = payload

    def add_warnings(self, messages) -> None:
        self.warnings.extend(str(m) for m in messages)

    def timer(self, name: str) -> "StageTimer":
        return StageTimer(self, name)

    def to_dict(self) -> dict:
        return coerce_plain(
            {
                "version": self.version,
                "command": self.command,
                "config": self.config,
                "stages": self.stages,
                "timings_ms": self.timings_ms,
                "warnings": self.warnings,
            }
        )

    def dumps(self) -> str:
        return json_dumps(self.to_dict())


class StageTimer:
    """Context manager recording one stage's wall time in milliseconds."""

    def __init__(self, report: RunReport, name: str):
        self.report = report
        self.name = name
        self._t0 = 0.0

    def __enter__(self):
        self.report.current_stage = self.name
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.report.timings_ms[self.name] = (time.perf_counter() - self._t0) * 1e3
        return False


def helix_to_dict(model) -> dict:
    return {
        "radius": float(model.radius),
        "pitch": float(model.pitch),
        "phase": float(model.phase),
        "rms": float(model.rms),
        "support_count": int(model.support_count),
        "cell_radius": float(model.cell_radius),
        "cell_pitch": float(model.cell_pitch),
        "cell_votes": int(model.cell_votes),
        "axis_point": model.frame.mean.tolist(),
        "axis_dir": model.frame.axes[2].tolist(),
    }


def plane_to_dict(model, inlier_count: int) -> dict:
    return {
        "normal": model.normal.tolist(),
        "point": model.p0.tolist(),
        "coefficients": [float(c) for c in model.coefficients],
        "inlier_count": int(inlier_count),
    }


def hole_to_dict(axis) -> dict:
    return {
        "point": axis.point.tolist(),
        "direction": axis.direction.tolist(),
        "radius": float(axis.radius),
        "inlier_count": int(axis.inlier_count),
    }


def pose_to_dict(pose) -> dict:
    return {
        "rotation": pose.xf.rotation.ravel().tolist(),
        "translation": pose.xf.translation.tolist(),
        "theta_deg": float(pose.theta_deg),
        "eps_pla": float(pose.eps_pla),
        "eps_cyc": float(pose.eps_cyc),
        "per_hole_dev_mm": [float(d) for d in pose.per_hole_dev],
    }
