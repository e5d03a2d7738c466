"""Accuracy/loss curves, extremum-based stopping, and gap-closure evaluation.

The engine never computes task accuracy itself; curves arrive as CSV
(header ``checkpoint,value``) from whatever harness ran the evaluation.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CurveError
from .snapshots import atomic_write_text

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


@dataclass(frozen=True, eq=False)
class AccuracyCurve:
    checkpoint_indices: np.ndarray  # (T,) int64, strictly increasing
    values: np.ndarray  # (T,) float64
    kind: str = MAXIMIZE

    def __post_init__(self):
        ckpts = np.ascontiguousarray(self.checkpoint_indices, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if ckpts.ndim != 1 or ckpts.shape[0] < 1:
            raise CurveError("curve needs at least one checkpoint")
        if vals.shape != ckpts.shape:
            raise CurveError(
                f"curve has {ckpts.shape[0]} checkpoints but {vals.shape[0]} values"
            )
        if np.any(np.diff(ckpts) <= 0):
            raise CurveError("curve checkpoints must be strictly increasing")
        if not np.isfinite(vals).all():
            raise CurveError("curve values must be finite")
        if self.kind not in (MAXIMIZE, MINIMIZE):
            raise CurveError(f"curve kind must be {MAXIMIZE!r} or {MINIMIZE!r}")
        object.__setattr__(self, "checkpoint_indices", ckpts)
        object.__setattr__(self, "values", vals)

    def value_at(self, checkpoint: int) -> float:
        hits = np.nonzero(self.checkpoint_indices == checkpoint)[0]
        if hits.size == 0:
            raise CurveError(f"checkpoint {checkpoint} is not on the curve's axis")
        return float(self.values[hits[0]])


def stop_at_extremum(curve: AccuracyCurve) -> int:
    """Checkpoint of the curve's max (or min for kind=minimize); earliest on ties."""
    if curve.kind == MAXIMIZE:
        pos = int(np.argmax(curve.values))
    else:
        pos = int(np.argmin(curve.values))
    return int(curve.checkpoint_indices[pos])


@dataclass(frozen=True)
class EvalSummary:
    acc_at_abe: float
    acc_at_baseline: float
    acc_optimal: float
    gap_closure: float
    t_hat: int
    t_valid_star: int
    t_star: int
    baseline_optimal: bool

    def to_json_dict(self) -> dict:
        return {
            "acc_at_abe": self.acc_at_abe,
            "acc_at_baseline": self.acc_at_baseline,
            "acc_optimal": self.acc_optimal,
            "gap_closure": self.gap_closure,
            "t_hat": self.t_hat,
            "t_valid_star": self.t_valid_star,
            "t_star": self.t_star,
            "baseline_optimal": self.baseline_optimal,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def evaluate(report, target_curve: AccuracyCurve) -> EvalSummary:
    """Gap closure of a stopping decision against the oracle optimum.

    gap_closure = (value(t_hat) - value(t_valid_star)) / (optimum - value(t_valid_star)),
    with improvements oriented by the curve kind, and defined as 0 when the
    baseline already sits at the optimum.
    """
    t_star = stop_at_extremum(target_curve)
    acc_abe = target_curve.value_at(report.t_hat)
    acc_base = target_curve.value_at(report.t_valid_star)
    acc_opt = target_curve.value_at(t_star)
    sign = 1.0 if target_curve.kind == MAXIMIZE else -1.0
    gap = sign * (acc_opt - acc_base)
    baseline_optimal = gap == 0.0
    gain = sign * (acc_abe - acc_base)
    gap_closure = 0.0 if baseline_optimal else gain / gap
    return EvalSummary(
        acc_at_abe=acc_abe,
        acc_at_baseline=acc_base,
        acc_optimal=acc_opt,
        gap_closure=gap_closure,
        t_hat=int(report.t_hat),
        t_valid_star=int(report.t_valid_star),
        t_star=int(t_star),
        baseline_optimal=baseline_optimal,
    )


def curve_to_csv(curve: AccuracyCurve) -> str:
    lines = ["checkpoint,value"]
    for ckpt, val in zip(curve.checkpoint_indices, curve.values):
        lines.append(f"{int(ckpt)},{repr(float(val))}")
    return "\n".join(lines) + "\n"


def save_curve_csv(curve: AccuracyCurve, path) -> None:
    atomic_write_text(path, curve_to_csv(curve))


def load_curve_csv(path, kind: str = MAXIMIZE) -> AccuracyCurve:
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except FileNotFoundError:
        raise CurveError(f"curve file not found: {path}") from None
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].lower().replace(" ", "") != "checkpoint,value":
        raise CurveError(f"{path}: first line must be the header 'checkpoint,value'")
    ckpts = []
    vals = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 2:
            raise CurveError(f"{path}:{i}: expected 'checkpoint,value', got {line!r}")
        try:
            ckpts.append(int(cells[0]))
            vals.append(float(cells[1]))
        except ValueError:
            raise CurveError(f"{path}:{i}: could not parse {line!r}") from None
    if not ckpts:
        raise CurveError(f"{path}: curve has no data rows")
    try:
        return AccuracyCurve(np.array(ckpts), np.array(vals), kind=kind)
    except CurveError as e:
        raise CurveError(f"{path}: {e}") from None
