"""Trajectory divergence detection and the early-stopping decision.

For a candidate window, the divergence score is the negative Pearson
correlation between the target and source series over that window, weighted
by the window length. The search scans, for every (layer, moment) slice,
all windows (t, t_valid_star] with at least two observed checkpoints and
picks the strongest divergence; the stopping time is the start of the
winning window. If no window scores positive, the decision falls back to
the validation stopping time.

Conventions, fixed for reproducibility:
  - windows are half-open: (t1, t2] covers checkpoints t1 < t <= t2;
  - window length is measured in checkpoint ranks by default
    (interval_unit="rank"); "raw" uses checkpoint index differences;
  - a window where either series is exactly constant has undefined
    correlation and scores 0 (no divergence evidence);
  - argmax ties break toward lower layer, then lower moment, then earlier t.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DivergenceInputError
from .moments import MOMENT_NAMES
from .trajectory import Trajectory

INTERVAL_UNITS = ("rank", "raw")


def _window_rho(y: np.ndarray, x: np.ndarray):
    """Sample Pearson correlation, or None when either side is constant.

    A two-point window is exactly +1 or -1 by increment signs.
    """
    n = y.shape[0]
    if n == 2:
        dy = y[1] - y[0]
        dx = x[1] - x[0]
        if dy == 0.0 or dx == 0.0:
            return None
        return 1.0 if (dy > 0.0) == (dx > 0.0) else -1.0
    if y.min() == y.max() or x.min() == x.max():
        return None
    my = float(y.sum()) / n
    mx = float(x.sum()) / n
    dy = y - my
    dx = x - mx
    num = float((dy * dx).sum())
    vy = float((dy * dy).sum())
    vx = float((dx * dx).sum())
    if vy <= 0.0 or vx <= 0.0:
        return None
    return float(min(1.0, max(-1.0, num / math.sqrt(vy * vx))))


def pearson(a, b):
    """Pearson correlation of two equal-length series; None if undefined."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape[0] != b.shape[0]:
        raise DivergenceInputError(
            f"series length mismatch: {a.shape} vs {b.shape}"
        )
    if a.shape[0] < 2:
        raise DivergenceInputError("Pearson correlation needs at least 2 points")
    return _window_rho(a, b)


@dataclass(frozen=True)
class DivergenceScore:
    layer: int
    moment: int  # 1..4
    t1: int
    t2: int
    rho: float | None
    score: float

    def __post_init__(self):
        if self.t1 >= self.t2:
            raise DivergenceInputError(f"window needs t1 < t2, got ({self.t1}, {self.t2})")

    def to_json_dict(self) -> dict:
        return {
            "layer": self.layer,
            "moment": MOMENT_NAMES[self.moment - 1],
            "t1": self.t1,
            "t2": self.t2,
            "rho": self.rho,
            "score": self.score,
        }


@dataclass(frozen=True)
class DivergenceReport:
    critical_layer: int
    critical_moment: int  # 1..4
    t_hat: int
    t_valid_star: int
    best_score: float
    diverged: bool
    scores: tuple[DivergenceScore, ...]
    interval_unit: str = "rank"

    def __post_init__(self):
        if self.t_hat > self.t_valid_star:
            raise DivergenceInputError("t_hat must not exceed t_valid_star")
        if self.diverged != (self.best_score > 0.0):
            raise DivergenceInputError("diverged flag must equal best_score > 0")
        if not self.diverged and self.t_hat != self.t_valid_star:
            raise DivergenceInputError("without divergence, t_hat must be t_valid_star")

    def to_json_dict(self) -> dict:
        return {
            "critical_layer": self.critical_layer,
            "critical_moment": MOMENT_NAMES[self.critical_moment - 1],
            "t_hat": self.t_hat,
            "t_valid_star": self.t_valid_star,
            "diverged": self.diverged,
            "best_score": self.best_score,
            "interval_unit": self.interval_unit,
            "scores": [s.to_json_dict() for s in self.scores],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def _moment_index(name) -> int:
    if isinstance(name, int):
        if 1 <= name <= 4:
            return name
        raise DivergenceInputError(f"moment index {name} out of range [1, 4]")
    try:
        return MOMENT_NAMES.index(name) + 1
    except ValueError:
        raise DivergenceInputError(f"unknown moment name {name!r}") from None


def report_from_json(text: str) -> DivergenceReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DivergenceInputError(f"report is not valid JSON ({e})") from None
    try:
        scores = tuple(
            DivergenceScore(
                layer=int(s["layer"]),
                moment=_moment_index(s["moment"]),
                t1=int(s["t1"]),
                t2=int(s["t2"]),
                rho=None if s["rho"] is None else float(s["rho"]),
                score=float(s["score"]),
            )
            for s in doc.get("scores", [])
        )
        return DivergenceReport(
            critical_layer=int(doc["critical_layer"]),
            critical_moment=_moment_index(doc["critical_moment"]),
            t_hat=int(doc["t_hat"]),
            t_valid_star=int(doc["t_valid_star"]),
            best_score=float(doc["best_score"]),
            diverged=bool(doc["diverged"]),
            scores=scores,
            interval_unit=str(doc.get("interval_unit", "rank")),
        )
    except KeyError as e:
        raise DivergenceInputError(f"report is missing field {e}") from None


def _rank_of(checkpoints: np.ndarray, t: int, what: str) -> int:
    hits = np.nonzero(checkpoints == t)[0]
    if hits.size == 0:
        raise DivergenceInputError(
            f"{what} {t} is not an observed checkpoint "
            f"(observed range {int(checkpoints[0])}..{int(checkpoints[-1])})"
        )
    return int(hits[0])


def _window_span(checkpoints, rank1, rank2, interval_unit) -> float:
    if interval_unit == "rank":
        return float(rank2 - rank1)
    if interval_unit == "raw":
        return float(checkpoints[rank2] - checkpoints[rank1])
    raise DivergenceInputError(
        f"interval_unit must be one of {INTERVAL_UNITS}, got {interval_unit!r}"
    )


def divergence_score(
    checkpoints, target, source, t1: int, t2: int, interval_unit: str = "rank"
) -> DivergenceScore:
    """Score one window (t1, t2] of a single (layer, moment) slice.

    `checkpoints` is the shared observation axis; `target` and `source` are
    the full slice series over that axis. Returns the negative correlation
    weighted by the window span; an undefined correlation scores 0.
    """
    checkpoints = np.ascontiguousarray(checkpoints, dtype=np.int64)
    target = np.ascontiguousarray(target, dtype=np.float64)
    source = np.ascontiguousarray(source, dtype=np.float64)
    if checkpoints.shape[0] != target.shape[0] or target.shape[0] != source.shape[0]:
        raise DivergenceInputError("checkpoints, target, and source must align")
    rank1 = _rank_of(checkpoints, t1, "t1")
    rank2 = _rank_of(checkpoints, t2, "t2")
    if rank2 - rank1 < 2:
        raise DivergenceInputError(
            f"window ({t1}, {t2}] holds {max(rank2 - rank1, 0)} checkpoints, need >= 2"
        )
    rho = _window_rho(target[rank1 + 1 : rank2 + 1], source[rank1 + 1 : rank2 + 1])
    span = _window_span(checkpoints, rank1, rank2, interval_unit)
    score = 0.0 if rho is None else -rho * span
    return DivergenceScore(
        layer=0, moment=1, t1=int(t1), t2=int(t2), rho=rho, score=score
    )


def _validate_pair(target_traj: Trajectory, source_traj: Trajectory) -> None:
    if not np.array_equal(
        target_traj.checkpoint_indices, source_traj.checkpoint_indices
    ):
        raise DivergenceInputError(
            "target and source trajectories must share the checkpoint axis"
        )
    if target_traj.n_layers != source_traj.n_layers:
        raise DivergenceInputError(
            f"layer count mismatch: target has {target_traj.n_layers}, "
            f"source has {source_traj.n_layers}"
        )


def _search(target_traj, source_traj, t_valid_star, interval_unit):
    _validate_pair(target_traj, source_traj)
    ckpts = target_traj.checkpoint_indices
    last = _rank_of(ckpts, t_valid_star, "t_valid_star")
    if last < 1:
        raise DivergenceInputError(
            "degenerate axis: fewer than 2 checkpoints at or before t_valid_star"
        )
    if interval_unit not in INTERVAL_UNITS:
        raise DivergenceInputError(
            f"interval_unit must be one of {INTERVAL_UNITS}, got {interval_unit!r}"
        )

    n_starts = last - 1  # starts s = 0..last-2 leave >= 2 points in (s, last]
    spans = np.array(
        [_window_span(ckpts, s, last, interval_unit) for s in range(max(n_starts, 0))]
    )
    slice_best: list[DivergenceScore] = []
    best = None  # (score, layer, moment, start_rank, rho)
    for layer in range(target_traj.n_layers):
        for moment in range(1, 5):
            y = target_traj.values[: last + 1, layer, moment - 1]
            x = source_traj.values[: last + 1, layer, moment - 1]
            if n_starts < 1:
                continue
            rhos = _kernels.suffix_pearson(
                np.ascontiguousarray(y), np.ascontiguousarray(x)
            )
            defined = ~np.isnan(rhos)
            scores = np.where(defined, -rhos * spans, 0.0)
            s_best = int(np.argmax(scores))  # first max wins: earliest t
            entry = DivergenceScore(
                layer=layer,
                moment=moment,
                t1=int(ckpts[s_best]),
                t2=int(ckpts[last]),
                rho=float(rhos[s_best]) if defined[s_best] else None,
                score=float(scores[s_best]),
            )
            slice_best.append(entry)
            if best is None or entry.score > best[0]:
                best = (entry.score, layer, moment, s_best)

    if best is None:  # no window anywhere had >= 2 points
        return slice_best, 0.0, 0, 1, None, ckpts, last
    score, layer, moment, s_best = best
    return slice_best, score, layer, moment, s_best, ckpts, last


def find_critical(
    target_traj: Trajectory,
    source_traj: Trajectory,
    t_valid_star: int,
    interval_unit: str = "rank",
) -> tuple[int, int, float]:
    """(critical layer, critical moment, best score) of the strongest divergence."""
    _, score, layer, moment, _, _, _ = _search(
        target_traj, source_traj, t_valid_star, interval_unit
    )
    return layer, moment, score


def stopping_time(
    target_traj: Trajectory,
    source_traj: Trajectory,
    t_valid_star: int,
    interval_unit: str = "rank",
) -> DivergenceReport:
    """Full divergence report with the early-stopping decision."""
    slice_best, score, layer, moment, s_best, ckpts, _ = _search(
        target_traj, source_traj, t_valid_star, interval_unit
    )
    diverged = score > 0.0
    t_hat = int(ckpts[s_best]) if diverged else int(t_valid_star)
    return DivergenceReport(
        critical_layer=layer,
        critical_moment=moment,
        t_hat=t_hat,
        t_valid_star=int(t_valid_star),
        best_score=float(score),
        diverged=diverged,
        scores=tuple(slice_best),
        interval_unit=interval_unit,
    )
