"""Training records and their file forms.

One run persists to three files, all pure functions of (config, seed):

* ``metrics.csv``   one row per inner step, fixed column set
* ``summary.json``  config echo, final metrics, eval history, collapse flag
* ``samples.csv``   the final generated points

Floats are written with ``repr`` (shortest round-trip form), so re-runs
are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StepLog",
    "EvalSnapshot",
    "TrainingRecord",
    "write_metrics_csv",
    "write_samples_csv",
    "write_summary_json",
]

METRICS_COLUMNS = ("iter", "phase", "critic_loss", "gen_loss", "gp",
                   "weight_entropy", "grad_norm_phi", "grad_norm_theta",
                   "ratio_mean", "ratio_clipped_frac")

METRICS_VERSION = "vargan-metrics v1"
SAMPLES_VERSION = "vargan-samples v1"


@dataclass(frozen=True)
class StepLog:
    """One inner optimization step; fields not applicable to the phase
    stay None and serialize to empty cells."""

    iteration: int
    phase: str  # "critic" | "gen"
    critic_loss: float | None = None
    gen_loss: float | None = None
    gp: float | None = None
    weight_entropy: float | None = None
    grad_norm_phi: float | None = None
    grad_norm_theta: float | None = None
    ratio_mean: float | None = None
    ratio_clipped_frac: float | None = None


@dataclass(frozen=True)
class EvalSnapshot:
    iteration: int
    modes_covered: int
    high_quality_fraction: float
    sliced_w: float


@dataclass
class TrainingRecord:
    """The unit of persistence and analysis for one training run."""

    config: dict
    steps: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final_samples: np.ndarray | None = None
    collapsed: bool = False
    abort_reason: str | None = None
    classifier_bce_tail_mean: float | None = None
    final_state: object = None  # trainer state; not persisted here

    def critic_losses(self) -> np.ndarray:
        return np.array([s.critic_loss for s in self.steps if s.phase == "critic"])

    def gen_losses(self) -> np.ndarray:
        return np.array([s.gen_loss for s in self.steps if s.phase == "gen"])


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_metrics_csv(record: TrainingRecord, path) -> None:
    lines = [f"# {METRICS_VERSION}", ",".join(METRICS_COLUMNS)]
    for s in record.steps:
        lines.append(",".join([
            str(s.iteration), s.phase, _cell(s.critic_loss), _cell(s.gen_loss),
            _cell(s.gp), _cell(s.weight_entropy), _cell(s.grad_norm_phi),
            _cell(s.grad_norm_theta), _cell(s.ratio_mean),
            _cell(s.ratio_clipped_frac),
        ]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_samples_csv(record: TrainingRecord, path) -> None:
    pts = record.final_samples
    lines = [f"# {SAMPLES_VERSION}"]
    if pts is None:
        lines.append("")
    elif pts.ndim == 1:
        lines.append("index")
        lines.extend(str(int(i)) for i in pts)
    else:
        lines.append(",".join(f"x{i}" for i in range(pts.shape[1])))
        lines.extend(",".join(repr(float(v)) for v in row) for row in pts)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def summary_dict(record: TrainingRecord) -> dict:
    final = None
    if record.snapshots:
        last = record.snapshots[-1]
        final = {
            "iteration": last.iteration,
            "modes_covered": last.modes_covered,
            "high_quality_fraction": last.high_quality_fraction,
            "sliced_w": last.sliced_w,
        }
    return {
        "config": record.config,
        "collapsed": record.collapsed,
        "abort_reason": record.abort_reason,
        "classifier_bce_tail_mean": record.classifier_bce_tail_mean,
        "final": final,
        "evals": [
            {
                "iteration": s.iteration,
                "modes_covered": s.modes_covered,
                "high_quality_fraction": s.high_quality_fraction,
                "sliced_w": s.sliced_w,
            }
            for s in record.snapshots
        ],
    }


def write_summary_json(record: TrainingRecord, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(summary_dict(record), fh, sort_keys=True, indent=2)
        fh.write("\n")
