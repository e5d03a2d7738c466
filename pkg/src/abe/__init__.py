"""Early stopping from the divergence of activation-moment trajectories.

The engine ingests per-checkpoint activation snapshots of two fixed example
populations (a held-out source batch and a handful of unlabelled target
inputs), summarizes each layer into four aggregated moments, and stops
training where the target trajectory diverges most strongly from the
source trajectory.
"""

from .curves import (
    MAXIMIZE,
    MINIMIZE,
    AccuracyCurve,
    EvalSummary,
    evaluate,
    load_curve_csv,
    save_curve_csv,
    stop_at_extremum,
)
from .divergence import (
    DivergenceReport,
    DivergenceScore,
    divergence_score,
    find_critical,
    pearson,
    report_from_json,
    stopping_time,
)
from .errors import (
    BadMagicError,
    CurveError,
    DimensionError,
    DivergenceInputError,
    EngineError,
    ManifestError,
    NonFiniteValueError,
    SnapshotFormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .moments import (
    MOMENT_NAMES,
    AggregatedMoments,
    compute_moments,
    derived_metrics,
    moments_of_array,
)
from .snapshots import (
    SOURCE_VALID,
    TARGET,
    ActivationSnapshot,
    LayerActivations,
    Run,
    RunManifest,
    load_run,
    read_snapshot,
    write_manifest,
    write_snapshot,
)
from .synth import (
    ScenarioSpec,
    ToyTrainSpec,
    emit_scenario,
    generate_scenario,
    toy_train,
)
from .trajectory import Trajectory, build_trajectory, save_trajectory_csv

__version__ = "0.1.0"

__all__ = [
    "MAXIMIZE",
    "MINIMIZE",
    "MOMENT_NAMES",
    "SOURCE_VALID",
    "TARGET",
    "AccuracyCurve",
    "ActivationSnapshot",
    "AggregatedMoments",
    "BadMagicError",
    "CurveError",
    "DimensionError",
    "DivergenceInputError",
    "DivergenceReport",
    "DivergenceScore",
    "EngineError",
    "EvalSummary",
    "LayerActivations",
    "ManifestError",
    "NonFiniteValueError",
    "Run",
    "RunManifest",
    "ScenarioSpec",
    "SnapshotFormatError",
    "ToyTrainSpec",
    "Trajectory",
    "TruncatedFileError",
    "UnsupportedVersionError",
    "build_trajectory",
    "compute_moments",
    "derived_metrics",
    "divergence_score",
    "emit_scenario",
    "evaluate",
    "find_critical",
    "generate_scenario",
    "load_curve_csv",
    "load_run",
    "moments_of_array",
    "pearson",
    "read_snapshot",
    "report_from_json",
    "save_curve_csv",
    "save_trajectory_csv",
    "stop_at_extremum",
    "stopping_time",
    "toy_train",
    "write_manifest",
    "write_snapshot",
]
