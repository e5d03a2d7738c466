"""Error taxonomy for the engine.

Everything raised on bad *input* (malformed files, inconsistent manifests,
out-of-range arguments) derives from EngineError so the CLI can map it to
exit code 2. Anything else escaping a command is an internal error (exit 1).
"""


class EngineError(Exception):
    """Base class for all input-side failures."""


class SnapshotFormatError(EngineError):
    """Base class for malformed snapshot files."""


class BadMagicError(SnapshotFormatError):
    pass


class UnsupportedVersionError(SnapshotFormatError):
    pass


class TruncatedFileError(SnapshotFormatError):
    pass


class DimensionError(SnapshotFormatError):
    """Inconsistent or illegal layer dimensions."""


class NonFiniteValueError(SnapshotFormatError):
    """NaN or Inf in an activation payload; message carries coordinates."""


class ManifestError(EngineError):
    """Run manifest violates its invariants (missing files, gaps, drift)."""


class CurveError(EngineError):
    """Malformed or inconsistent accuracy/loss curve."""


class DivergenceInputError(EngineError):
    """Trajectory pair or window arguments unusable for the divergence search."""
