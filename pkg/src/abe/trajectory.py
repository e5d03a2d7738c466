"""Moment trajectories: per checkpoint, an (L, 4) matrix of aggregated moments.

A trajectory tracks one fixed input population over training time. Moment
indices are 1-based (1..4) in every public surface, matching the m1..m4
naming used in reports.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceInputError, ManifestError
from .moments import MOMENT_NAMES, moments_of_array
from .snapshots import Run, atomic_write_text


@dataclass(frozen=True, eq=False)
class Trajectory:
    population_tag: str
    checkpoint_indices: np.ndarray  # (T,) int64, strictly increasing
    values: np.ndarray  # (T, L, 4) float64

    def __post_init__(self):
        ckpts = np.ascontiguousarray(self.checkpoint_indices, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if ckpts.ndim != 1 or ckpts.shape[0] < 1:
            raise DivergenceInputError("trajectory needs at least one checkpoint")
        if np.any(np.diff(ckpts) <= 0):
            raise DivergenceInputError("trajectory checkpoints must be strictly increasing")
        if vals.ndim != 3 or vals.shape[0] != ckpts.shape[0] or vals.shape[2] != 4:
            raise DivergenceInputError(
                f"trajectory values must be (T, L, 4) with T={ckpts.shape[0]}, "
                f"got {vals.shape}"
            )
        if vals.shape[1] < 1:
            raise DivergenceInputError("trajectory needs at least one layer")
        if not np.isfinite(vals).all():
            raise DivergenceInputError("trajectory contains non-finite moments")
        object.__setattr__(self, "checkpoint_indices", ckpts)
        object.__setattr__(self, "values", vals)

    @property
    def n_checkpoints(self) -> int:
        return self.values.shape[0]

    @property
    def n_layers(self) -> int:
        return self.values.shape[1]

    def slice(self, layer: int, moment: int) -> tuple[np.ndarray, np.ndarray]:
        """(checkpoints, series) for one layer and one moment index in 1..4."""
        if not 0 <= layer < self.n_layers:
            raise DivergenceInputError(
                f"layer {layer} out of range [0, {self.n_layers})"
            )
        if not 1 <= moment <= 4:
            raise DivergenceInputError(f"moment {moment} out of range [1, 4]")
        return self.checkpoint_indices.copy(), self.values[:, layer, moment - 1].copy()


def _max_workers():
    raw = os.environ.get("ABE_THREADS", "0").strip()
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap <= 0:
        cap = min(8, os.cpu_count() or 1)
    return cap


def build_trajectory(run: Run, population: str) -> Trajectory:
    """Compute the population's trajectory from a run's snapshots.

    Work fans out across checkpoints (ABE_THREADS caps the pool, 0 = auto);
    each (t, l) cell is independent, so the result does not depend on
    scheduling.
    """
    if population not in run.manifest.populations:
        raise ManifestError(
            f"run {run.manifest.run_id!r} has no population {population!r} "
            f"(has: {', '.join(run.manifest.populations)})"
        )
    checkpoints = run.checkpoints
    n_layers = run.n_layers
    values = np.empty((len(checkpoints), n_layers, 4))

    def fill(t: int) -> None:
        snap = run.snapshot(population, checkpoints[t])
        for layer in snap.layers:
            values[t, layer.layer_id] = moments_of_array(layer.values).as_array()

    workers = min(_max_workers(), len(checkpoints))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, range(len(checkpoints))))
    else:
        for t in range(len(checkpoints)):
            fill(t)

    return Trajectory(
        population_tag=population,
        checkpoint_indices=np.array(checkpoints, dtype=np.int64),
        values=values,
    )


def trajectory_to_csv(traj: Trajectory) -> str:
    """CSV text with one row per (checkpoint, layer)."""
    lines = ["checkpoint,layer," + ",".join(MOMENT_NAMES)]
    for t, ckpt in enumerate(traj.checkpoint_indices):
        for layer in range(traj.n_layers):
            cells = ",".join(repr(float(v)) for v in traj.values[t, layer])
            lines.append(f"{int(ckpt)},{layer},{cells}")
    return "\n".join(lines) + "\n"


def save_trajectory_csv(traj: Trajectory, path) -> None:
    atomic_write_text(path, trajectory_to_csv(traj))
