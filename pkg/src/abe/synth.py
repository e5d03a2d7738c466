"""Ground-truth fixtures: planted divergence scenarios and a toy trainer.

Scenarios plant a known (layer, moment, breakpoint) triple into a pair of
moment trajectories. Source slices drift linearly; after the breakpoint the
planted source slice switches to an alternating probe pattern and the
planted target slice mirrors it negatively with a level drop. This makes
the window that starts exactly at the breakpoint the unique score maximum:
the post-break window is perfectly anti-correlated, enlarging the window
past the breakpoint mixes in positively-correlated drift, and the
alternation keeps the one-point-earlier window far from perfect
anti-correlation (a plain negated-slope continuation would stay collinear
with the peak and shift the argmax off the breakpoint).

Scenarios can be materialized as ASNAP runs: each (checkpoint, layer)
moment 4-vector is first squashed by a per-slice positive affine map into a
fixed feasible band (correlations are unchanged) and then encoded exactly
as a 2-example, 2-feature activation batch with those aggregated moments.

The toy trainer is plain supervised training of a small tanh MLP on
Gaussian class blobs, with a mean-shifted blob set standing in for the
target distribution. It records genuine activation snapshots per epoch plus
validation/target accuracy curves, exercising the whole pipeline end to end.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .curves import MAXIMIZE, AccuracyCurve, save_curve_csv
from .errors import EngineError
from .snapshots import (
    SOURCE_VALID,
    TARGET,
    ActivationSnapshot,
    LayerActivations,
    atomic_write_text,
    load_run,
    write_manifest,
    write_snapshot,
)
from .trajectory import Trajectory

# Feasible-band centers for (m1, m2, m3, m4) used when encoding scenario
# trajectories as activation batches; amplitude is small against the gaps
# so every squashed 4-vector admits an exact 2x2 batch.
_BAND_CENTERS = (0.0, 10.0, 30.0, 0.0)
_BAND_AMPLITUDE = 0.05


@dataclass(frozen=True)
class ScenarioSpec:
    layers: int
    checkpoints: int
    planted_layer: int | None = None
    planted_moment: int | None = None  # 1..4
    breakpoint: int | None = None
    noise_sigma: float = 0.0
    seed: int = 0
    slopes: np.ndarray | None = None  # (layers, 4); drawn from seed if omitted
    intercepts: np.ndarray | None = None

    def __post_init__(self):
        if self.layers < 1:
            raise EngineError("scenario needs at least 1 layer")
        if self.checkpoints < 3:
            raise EngineError("scenario needs at least 3 checkpoints")
        planted = (self.planted_layer, self.planted_moment, self.breakpoint)
        if any(v is not None for v in planted) and any(v is None for v in planted):
            raise EngineError(
                "planted_layer, planted_moment, and breakpoint must be set together"
            )
        if self.planted_layer is not None:
            if not 0 <= self.planted_layer < self.layers:
                raise EngineError(
                    f"planted_layer {self.planted_layer} out of range [0, {self.layers})"
                )
            if not 1 <= self.planted_moment <= 4:
                raise EngineError(
                    f"planted_moment {self.planted_moment} out of range [1, 4]"
                )
            if not 0 < self.breakpoint < self.checkpoints - 1:
                raise EngineError(
                    f"breakpoint {self.breakpoint} must lie strictly inside "
                    f"(0, {self.checkpoints - 1})"
                )
        if self.noise_sigma < 0:
            raise EngineError("noise_sigma must be >= 0")

    @property
    def planted(self) -> bool:
        return self.planted_layer is not None


def generate_scenario(spec: ScenarioSpec):
    """(source trajectory, target trajectory, planted truth triple or None)."""
    rng = np.random.default_rng(spec.seed)
    L, T = spec.layers, spec.checkpoints
    if spec.slopes is not None:
        slopes = np.ascontiguousarray(spec.slopes, dtype=np.float64)
    else:
        slopes = rng.uniform(0.5, 1.5, (L, 4)) * rng.choice((-1.0, 1.0), (L, 4))
    if spec.intercepts is not None:
        intercepts = np.ascontiguousarray(spec.intercepts, dtype=np.float64)
    else:
        intercepts = rng.uniform(-1.0, 1.0, (L, 4))
    if slopes.shape != (L, 4) or intercepts.shape != (L, 4):
        raise EngineError(f"slopes/intercepts must have shape ({L}, 4)")
    if np.any(slopes == 0.0):
        raise EngineError("drift slopes must be non-zero")

    t = np.arange(T, dtype=np.float64)
    source = intercepts[None, :, :] + slopes[None, :, :] * t[:, None, None]
    target = source.copy()

    truth = None
    if spec.planted:
        pl, pm, b = spec.planted_layer, spec.planted_moment, spec.breakpoint
        slope = slopes[pl, pm - 1]
        peak = intercepts[pl, pm - 1] + slope * b
        amp = 0.5 * abs(slope)
        drop = 3.0 * amp
        u = np.arange(1, T - b, dtype=np.float64)
        probe = peak + amp * np.where(u % 2 == 1, 1.0, -1.0)
        source[b + 1 :, pl, pm - 1] = probe
        target[b + 1 :, pl, pm - 1] = 2.0 * peak - drop - probe
        truth = (pl, pm, b)

    if spec.noise_sigma > 0:
        target = target + rng.normal(0.0, spec.noise_sigma, target.shape)

    ckpts = np.arange(T, dtype=np.int64)
    return (
        Trajectory(SOURCE_VALID, ckpts, source),
        Trajectory(TARGET, ckpts, target),
        truth,
    )


def encode_moment_batch(g1: float, g2: float, g3: float, g4: float) -> np.ndarray:
    """A 2-example, 2-feature batch whose aggregated moments equal (g1..g4).

    Requires the feasibility conditions 2*g2 > g1^2 and
    g3 - g2 >= |g4 - g1^2 + g2|; the fixed band used by scenario emission
    satisfies both with wide margins.
    """
    disc = 2.0 * g2 - g1 * g1
    q = g3 - g2
    p = (g4 - g1 * g1 + g2) / 2.0
    if disc <= 0.0 or q < 2.0 * abs(p):
        raise EngineError(
            f"moment vector ({g1}, {g2}, {g3}, {g4}) is not encodable as a 2x2 batch"
        )
    root = math.sqrt(disc)
    mu_hi = (g1 + root) / 2.0
    mu_lo = (g1 - root) / 2.0
    a = math.sqrt(q + 2.0 * p)
    c = math.sqrt(q - 2.0 * p)
    v1 = (a + c) / 2.0
    v2 = (a - c) / 2.0
    return np.array(
        [[mu_hi + v1, mu_lo + v2], [mu_hi - v1, mu_lo - v2]], dtype=np.float64
    )


def _squash_to_band(source_slice, target_slice, moment: int):
    """Affinely map one (layer, moment) slice pair into the feasible band.

    The same positive affine map is applied to both populations, so every
    windowed correlation (and hence the divergence report) is preserved.
    """
    lo = min(source_slice.min(), target_slice.min())
    hi = max(source_slice.max(), target_slice.max())
    mid = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    if half == 0.0:
        half = 1.0
    center = _BAND_CENTERS[moment - 1]
    scale = _BAND_AMPLITUDE / half
    return (
        center + scale * (source_slice - mid),
        center + scale * (target_slice - mid),
    )


def _scenario_curves(spec: ScenarioSpec):
    """Synthetic accuracy curves: validation rises throughout; the target
    curve peaks at the breakpoint when a divergence is planted."""
    T = spec.checkpoints
    t = np.arange(T, dtype=np.float64)
    ckpts = np.arange(T, dtype=np.int64)
    valid = 0.5 + 0.4 * t / (T - 1)
    if spec.planted:
        b = spec.breakpoint
        rise = 0.5 + 0.4 * np.minimum(t, b) / b
        fall = 0.3 * np.maximum(t - b, 0.0) / (T - 1 - b)
        target = rise - fall
    else:
        target = valid.copy()
    return (
        AccuracyCurve(ckpts, valid, kind=MAXIMIZE),
        AccuracyCurve(ckpts, target, kind=MAXIMIZE),
    )


def emit_scenario(spec: ScenarioSpec, out_dir) -> dict:
    """Materialize a scenario as an ASNAP run directory.

    Writes snapshots/, manifest.json, valid_curve.csv, target_curve.csv and
    truth.json; returns the truth document.
    """
    out_dir = Path(out_dir)
    (out_dir / "snapshots").mkdir(parents=True, exist_ok=True)
    source_traj, target_traj, truth = generate_scenario(spec)

    banded = {SOURCE_VALID: np.empty_like(source_traj.values),
              TARGET: np.empty_like(target_traj.values)}
    for layer in range(spec.layers):
        for moment in range(1, 5):
            s, t = _squash_to_band(
                source_traj.values[:, layer, moment - 1],
                target_traj.values[:, layer, moment - 1],
                moment,
            )
            banded[SOURCE_VALID][:, layer, moment - 1] = s
            banded[TARGET][:, layer, moment - 1] = t

    files = {SOURCE_VALID: {}, TARGET: {}}
    for tag in (SOURCE_VALID, TARGET):
        for ckpt in range(spec.checkpoints):
            layers = tuple(
                LayerActivations(
                    layer_id=layer,
                    values=encode_moment_batch(*banded[tag][ckpt, layer]),
                )
                for layer in range(spec.layers)
            )
            rel = f"snapshots/{tag}_{ckpt:04d}.asnap"
            write_snapshot(
                ActivationSnapshot(ckpt, tag, layers), out_dir / rel
            )
            files[tag][ckpt] = rel

    write_manifest(
        out_dir / "manifest.json",
        run_id=f"scenario-seed{spec.seed}",
        checkpoints=range(spec.checkpoints),
        layer_dims=[2] * spec.layers,
        files_by_population=files,
        meta={"kind": "scenario", "seed": spec.seed},
    )
    valid_curve, target_curve = _scenario_curves(spec)
    save_curve_csv(valid_curve, out_dir / "valid_curve.csv")
    save_curve_csv(target_curve, out_dir / "target_curve.csv")

    truth_doc = {
        "planted_layer": spec.planted_layer,
        "planted_moment": spec.planted_moment,
        "breakpoint": spec.breakpoint,
        "t_valid_star": spec.checkpoints - 1,
        "seed": spec.seed,
        "noise_sigma": spec.noise_sigma,
    }
    atomic_write_text(out_dir / "truth.json", json.dumps(truth_doc, indent=2) + "\n")
    return truth_doc


# ---------------------------------------------------------------------------
# Toy trainer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToyTrainSpec:
    seed: int
    input_dim: int = 8
    hidden_dims: tuple[int, ...] = (16, 16)
    n_classes: int = 4
    shift: float = 8.0  # class-mean translation, in units of the blob deviation
    epochs: int = 64
    learning_rate: float = 0.15
    batch_size: int = 32
    n_target_unlabelled: int = 5
    n_train: int = 256
    n_valid: int = 2000
    n_valid_batch: int = 32
    n_target_fit: int = 32
    n_target_query: int = 250
    class_sep: float = 8.0
    label_noise: float = 0.0  # fraction of shuffled train labels
    init_scale: float = 1.0  # multiplies the 1/sqrt(fan_in) weight init
    record_every: int = 4  # checkpoint cadence in epochs

    def __post_init__(self):
        hidden = tuple(int(h) for h in self.hidden_dims)
        object.__setattr__(self, "hidden_dims", hidden)
        positive = (
            self.input_dim, self.n_classes, self.epochs, self.learning_rate,
            self.batch_size, self.n_train, self.n_valid, self.n_valid_batch,
            self.n_target_fit, self.n_target_query, self.class_sep,
        )
        if any(v <= 0 for v in positive) or any(h <= 0 for h in hidden) or not hidden:
            raise EngineError("all toy-training sizes must be positive")
        if self.n_target_unlabelled < 1:
            raise EngineError("n_target_unlabelled must be >= 1")
        if self.shift < 0:
            raise EngineError("shift must be >= 0")
        if not 0.0 <= self.label_noise < 1.0:
            raise EngineError("label_noise must lie in [0, 1)")
        if self.record_every < 1:
            raise EngineError("record_every must be >= 1")
        if self.epochs < 3 * self.record_every:
            raise EngineError("need at least 3 recorded checkpoints")


def toy_init_params(input_dim, hidden_dims, n_classes, rng, scale=1.0):
    dims = [input_dim, *hidden_dims, n_classes]
    params = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        w = rng.normal(0.0, scale / math.sqrt(fan_in), (fan_in, fan_out))
        params.append((w, np.zeros(fan_out)))
    return params


def toy_forward(params, x):
    """(hidden post-tanh activations, logits)."""
    hidden = []
    h = x
    for w, b in params[:-1]:
        h = np.tanh(h @ w + b)
        hidden.append(h)
    w, b = params[-1]
    return hidden, h @ w + b


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def toy_loss_and_grad(params, x, y):
    """Mean cross-entropy and analytic gradients for integer labels y."""
    hidden, logits = toy_forward(params, x)
    n = x.shape[0]
    probs = _softmax(logits)
    loss = -float(np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(params)
    inputs = [x, *hidden]
    for k in range(len(params) - 1, -1, -1):
        w, _ = params[k]
        grads[k] = (inputs[k].T @ delta, delta.sum(axis=0))
        if k > 0:
            delta = (delta @ w.T) * (1.0 - hidden[k - 1] ** 2)
    return loss, grads


def _accuracy(params, x, y) -> float:
    _, logits = toy_forward(params, x)
    return float(np.mean(np.argmax(logits, axis=1) == y))


def _centroid_accuracy(params, x_fit, y_fit, x_query, y_query, n_classes) -> float:
    """Nearest-class-centroid readout on the last hidden layer."""
    fit_feats = toy_forward(params, x_fit)[0][-1]
    query_feats = toy_forward(params, x_query)[0][-1]
    centroids = np.stack(
        [fit_feats[y_fit == c].mean(axis=0) for c in range(n_classes)]
    )
    d2 = ((query_feats[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(d2, axis=1) == y_query))


def _sample_blobs(rng, means, n_per_class):
    n_classes, dim = means.shape
    y = np.repeat(np.arange(n_classes), n_per_class)
    x = means[y] + rng.normal(0.0, 1.0, (y.shape[0], dim))
    return x, y


def toy_train(spec: ToyTrainSpec, out_dir):
    """Train the toy model, recording snapshots and curves into out_dir.

    Returns (run, valid_curve, target_curve) where run is the loaded,
    validated ASNAP run. The target curve uses labels and exists only for
    evaluation; the recorded target population is unlabelled inputs.
    """
    out_dir = Path(out_dir)
    (out_dir / "snapshots").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    source_means = rng.normal(0.0, 1.0, (spec.n_classes, spec.input_dim))
    source_means *= spec.class_sep / np.linalg.norm(source_means, axis=1, keepdims=True)
    # Target blob means: each class mean is translated toward the shared
    # centroid by up to `shift` blob deviations (capped so classes never
    # merge). The target classes then sit in the contested region between
    # the source clusters, separated at a finer scale, which is exactly the
    # structure that late-stage source fitting warps first. A rigid
    # translation of all blobs would leave the target task as separable as
    # the source task, which training cannot degrade. shift = 0 leaves the
    # target distribution identical to the source distribution.
    centroid = source_means.mean(axis=0)
    offsets = source_means - centroid
    radii = np.linalg.norm(offsets, axis=1, keepdims=True)
    pull = np.minimum(spec.shift / radii, 0.9)
    target_means = centroid + (1.0 - pull) * offsets

    per = -(-spec.n_train // spec.n_classes)
    x_train, y_train = _sample_blobs(rng, source_means, per)
    x_train, y_train = x_train[: spec.n_train], y_train[: spec.n_train]
    if spec.label_noise > 0.0:
        n_noisy = int(round(spec.label_noise * spec.n_train))
        noisy = rng.choice(spec.n_train, size=n_noisy, replace=False)
        y_train = y_train.copy()
        y_train[noisy] = rng.integers(0, spec.n_classes, n_noisy)
    x_valid, y_valid = _sample_blobs(rng, source_means, -(-spec.n_valid // spec.n_classes))
    x_valid, y_valid = x_valid[: spec.n_valid], y_valid[: spec.n_valid]
    valid_batch = x_valid[: min(spec.n_valid_batch, x_valid.shape[0])]
    # Unlabelled support inputs: iid draws from the target mixture.
    mix = rng.integers(0, spec.n_classes, spec.n_target_unlabelled)
    target_batch = target_means[mix] + rng.normal(
        0.0, 1.0, (spec.n_target_unlabelled, spec.input_dim)
    )
    x_fit, y_fit = _sample_blobs(rng, target_means, -(-spec.n_target_fit // spec.n_classes))
    x_query, y_query = _sample_blobs(
        rng, target_means, -(-spec.n_target_query // spec.n_classes)
    )

    params = toy_init_params(
        spec.input_dim, spec.hidden_dims, spec.n_classes, rng, scale=spec.init_scale
    )

    files = {SOURCE_VALID: {}, TARGET: {}}
    valid_acc = []
    target_acc = []
    checkpoints = []
    for epoch in range(1, spec.epochs + 1):
        order = rng.permutation(spec.n_train)
        for start in range(0, spec.n_train, spec.batch_size):
            idx = order[start : start + spec.batch_size]
            loss, grads = toy_loss_and_grad(params, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise EngineError(f"toy training diverged at epoch {epoch}")
            params = [
                (w - spec.learning_rate * gw, b - spec.learning_rate * gb)
                for (w, b), (gw, gb) in zip(params, grads)
            ]

        if epoch % spec.record_every != 0:
            continue
        for tag, batch in ((SOURCE_VALID, valid_batch), (TARGET, target_batch)):
            hidden, _ = toy_forward(params, batch)
            layers = tuple(
                LayerActivations(layer_id=i, values=h) for i, h in enumerate(hidden)
            )
            rel = f"snapshots/{tag}_{epoch:04d}.asnap"
            write_snapshot(ActivationSnapshot(epoch, tag, layers), out_dir / rel)
            files[tag][epoch] = rel
        checkpoints.append(epoch)
        valid_acc.append(_accuracy(params, x_valid, y_valid))
        target_acc.append(
            _centroid_accuracy(params, x_fit, y_fit, x_query, y_query, spec.n_classes)
        )

    write_manifest(
        out_dir / "manifest.json",
        run_id=f"toytrain-seed{spec.seed}",
        checkpoints=checkpoints,
        layer_dims=list(spec.hidden_dims),
        files_by_population=files,
        meta={"kind": "toytrain", "seed": spec.seed, "shift": spec.shift},
    )
    ckpts = np.array(checkpoints, dtype=np.int64)
    valid_curve = AccuracyCurve(ckpts, np.array(valid_acc), kind=MAXIMIZE)
    target_curve = AccuracyCurve(ckpts.copy(), np.array(target_acc), kind=MAXIMIZE)
    save_curve_csv(valid_curve, out_dir / "valid_curve.csv")
    save_curve_csv(target_curve, out_dir / "target_curve.csv")
    return load_run(out_dir / "manifest.json"), valid_curve, target_curve
