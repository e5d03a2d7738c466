"""On-disk activation snapshots (ASNAP) and run manifests.

ASNAP layout, little-endian throughout:

    magic "ABES" (4 bytes)
    format version  u32  (currently 1)
    checkpoint      u64
    population tag  u8   (0 = source_valid, 1 = target, 2 = other)
    layer count     u32
    per layer:
        layer id    u32
        n_examples  u32
        n_features  u32
        payload     n_examples * n_features float32, row-major (example-major)

Payload values are what the recorder dumped; this module validates structure
and finiteness but never repairs. Values are stored at float32 precision,
all downstream statistics are computed in float64.

The run manifest is a JSON document:

    {"run_id": ..., "checkpoints": [...], "layers": [{"id":, "features":}],
     "populations": [{"tag":, "files": [{"checkpoint":, "path":}]}], "meta": {}}

File paths are resolved relative to the manifest's directory.
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionError,
    ManifestError,
    NonFiniteValueError,
    TruncatedFileError,
    UnsupportedVersionError,
)

MAGIC = b"ABES"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIQBI")
LAYER_HEADER = struct.Struct("<III")

SOURCE_VALID = "source_valid"
TARGET = "target"

_TAG_CODES = {SOURCE_VALID: 0, TARGET: 1}
_CODE_TAGS = {0: SOURCE_VALID, 1: TARGET, 2: "other"}


def tag_code(tag: str) -> int:
    """u8 code for a population tag; unknown tags are 'other'."""
    return _TAG_CODES.get(tag, 2)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _check_finite(values: np.ndarray, layer_id: int) -> None:
    finite = np.isfinite(values)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        kind = "NaN" if np.isnan(values[row, col]) else "Inf"
        raise NonFiniteValueError(
            f"{kind} activation at (layer {layer_id}, row {row}, col {col})"
        )


@dataclass(frozen=True, eq=False)
class LayerActivations:
    """One layer's activations for one example set: (n_examples, n_features)."""

    layer_id: int
    values: np.ndarray

    def __post_init__(self):
        if self.layer_id < 0:
            raise DimensionError(f"negative layer id {self.layer_id}")
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise DimensionError(
                f"layer {self.layer_id}: expected 2-d activations, got shape {values.shape}"
            )
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DimensionError(
                f"layer {self.layer_id}: empty batch of shape {values.shape}"
            )
        _check_finite(values, self.layer_id)
        object.__setattr__(self, "values", values)

    @property
    def n_examples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, LayerActivations)
            and self.layer_id == other.layer_id
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass(frozen=True, eq=False)
class ActivationSnapshot:
    """All recorded layers of one population at one checkpoint."""

    checkpoint_index: int
    population_tag: str
    layers: tuple[LayerActivations, ...]

    def __post_init__(self):
        if self.checkpoint_index < 0:
            raise DimensionError(f"negative checkpoint index {self.checkpoint_index}")
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("snapshot has no layers")
        for pos, layer in enumerate(layers):
            if layer.layer_id != pos:
                raise DimensionError(
                    f"layer ids must be contiguous from 0: position {pos} has id {layer.layer_id}"
                )
        n0 = layers[0].n_examples
        for layer in layers[1:]:
            if layer.n_examples != n0:
                raise DimensionError(
                    f"layer {layer.layer_id} has {layer.n_examples} examples, layer 0 has {n0}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def n_examples(self) -> int:
        return self.layers[0].n_examples

    def __eq__(self, other):
        return (
            isinstance(other, ActivationSnapshot)
            and self.checkpoint_index == other.checkpoint_index
            and self.population_tag == other.population_tag
            and self.layers == other.layers
        )


def snapshot_byte_size(layer_shapes) -> int:
    """Exact file size for layers of the given (n_examples, n_features) shapes."""
    total = HEADER.size
    for n, d in layer_shapes:
        total += LAYER_HEADER.size + 4 * n * d
    return total


def serialize_snapshot(snapshot: ActivationSnapshot) -> bytes:
    parts = [
        HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            snapshot.checkpoint_index,
            tag_code(snapshot.population_tag),
            len(snapshot.layers),
        )
    ]
    for layer in snapshot.layers:
        parts.append(
            LAYER_HEADER.pack(layer.layer_id, layer.n_examples, layer.n_features)
        )
        parts.append(layer.values.astype("<f4", copy=False).tobytes())
    return b"".join(parts)


def write_snapshot(snapshot: ActivationSnapshot, path) -> None:
    """Write one snapshot; re-reading yields a bit-identical snapshot."""
    atomic_write_bytes(path, serialize_snapshot(snapshot))


def _parse_header(buf: bytes, path) -> tuple[int, int, int]:
    if len(buf) < HEADER.size:
        raise TruncatedFileError(
            f"{path}: expected at least {HEADER.size} header bytes, got {len(buf)}"
        )
    magic, version, checkpoint, tag, layer_count = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}"
        )
    return checkpoint, tag, layer_count


def deserialize_snapshot(buf: bytes, path="<bytes>") -> ActivationSnapshot:
    checkpoint, tag, layer_count = _parse_header(buf, path)
    if layer_count < 1:
        raise DimensionError(f"{path}: snapshot declares zero layers")
    offset = HEADER.size
    layers = []
    for pos in range(layer_count):
        if offset + LAYER_HEADER.size > len(buf):
            raise TruncatedFileError(
                f"{path}: expected {LAYER_HEADER.size} layer-header bytes at offset "
                f"{offset}, file has {len(buf) - offset}"
            )
        layer_id, n, d = LAYER_HEADER.unpack_from(buf, offset)
        offset += LAYER_HEADER.size
        if layer_id != pos:
            raise DimensionError(
                f"{path}: layer ids must be contiguous from 0, "
                f"position {pos} declares id {layer_id}"
            )
        if n < 1 or d < 1:
            raise DimensionError(f"{path}: layer {layer_id} declares shape ({n}, {d})")
        nbytes = 4 * n * d
        if offset + nbytes > len(buf):
            raise TruncatedFileError(
                f"{path}: layer {layer_id} payload needs {nbytes} bytes at offset "
                f"{offset}, file has {len(buf) - offset}"
            )
        values = np.frombuffer(buf, dtype="<f4", count=n * d, offset=offset)
        offset += nbytes
        values = values.reshape(n, d).astype(np.float32)
        _check_finite(values, layer_id)
        layers.append(LayerActivations(layer_id=layer_id, values=values))
    if offset != len(buf):
        raise TruncatedFileError(
            f"{path}: {len(buf) - offset} trailing bytes after declared payload"
        )
    snapshot = ActivationSnapshot(
        checkpoint_index=checkpoint,
        population_tag=_CODE_TAGS.get(tag, "other"),
        layers=tuple(layers),
    )
    return snapshot


def read_snapshot(path) -> ActivationSnapshot:
    """Read and fully validate one ASNAP file."""
    with open(path, "rb") as f:
        buf = f.read()
    return deserialize_snapshot(buf, path)


def scan_snapshot(path):
    """Header-only scan: (checkpoint, tag_code, [(layer_id, n, d)...], expected_size).

    Validates magic/version/dimension structure and the exact file size, but
    does not touch payload values.
    """
    size = os.path.getsize(path)
    with open(path, "rb") as f:
        buf = f.read(HEADER.size)
        checkpoint, tag, layer_count = _parse_header(buf, path)
        if layer_count < 1:
            raise DimensionError(f"{path}: snapshot declares zero layers")
        shapes = []
        offset = HEADER.size
        for pos in range(layer_count):
            hdr = f.read(LAYER_HEADER.size)
            if len(hdr) < LAYER_HEADER.size:
                raise TruncatedFileError(
                    f"{path}: expected {LAYER_HEADER.size} layer-header bytes at "
                    f"offset {offset}, file has {size - offset}"
                )
            layer_id, n, d = LAYER_HEADER.unpack(hdr)
            offset += LAYER_HEADER.size
            if layer_id != pos:
                raise DimensionError(
                    f"{path}: layer ids must be contiguous from 0, "
                    f"position {pos} declares id {layer_id}"
                )
            if n < 1 or d < 1:
                raise DimensionError(f"{path}: layer {layer_id} declares shape ({n}, {d})")
            shapes.append((layer_id, n, d))
            offset += 4 * n * d
            f.seek(offset)
    expected = snapshot_byte_size((n, d) for _, n, d in shapes)
    if size != expected:
        raise TruncatedFileError(
            f"{path}: declared layout needs exactly {expected} bytes, file has {size}"
        )
    return checkpoint, tag, shapes, expected


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    checkpoint_indices: tuple[int, ...]
    layer_dims: tuple[int, ...]
    populations: tuple[str, ...]
    source_paths: dict
    meta: dict = field(default_factory=dict)


class Run:
    """A validated manifest plus on-demand snapshot loading."""

    def __init__(self, manifest: RunManifest, base_dir: Path):
        self.manifest = manifest
        self.base_dir = Path(base_dir)

    @property
    def checkpoints(self) -> tuple[int, ...]:
        return self.manifest.checkpoint_indices

    @property
    def n_layers(self) -> int:
        return len(self.manifest.layer_dims)

    def path_for(self, population: str, checkpoint: int) -> Path:
        try:
            rel = self.manifest.source_paths[population][checkpoint]
        except KeyError:
            raise ManifestError(
                f"run {self.manifest.run_id!r} has no snapshot for "
                f"({population}, {checkpoint})"
            ) from None
        return self.base_dir / rel

    def snapshot(self, population: str, checkpoint: int) -> ActivationSnapshot:
        return read_snapshot(self.path_for(population, checkpoint))


def _require(cond, message):
    if not cond:
        raise ManifestError(message)


def load_run(manifest_path) -> Run:
    """Parse and eagerly validate a run manifest; snapshots stay lazy.

    Every listed file must exist, carry a structurally valid header, match
    the manifest's checkpoint and layer declarations, and have the exact
    byte size its own headers imply. Payload values are only read (and
    finiteness-checked) when a snapshot is requested.
    """
    manifest_path = Path(manifest_path)
    try:
        raw = json.loads(manifest_path.read_text("utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as e:
        raise ManifestError(f"{manifest_path}: not valid JSON ({e})") from None

    _require(isinstance(raw, dict), f"{manifest_path}: manifest must be a JSON object")
    for key in ("run_id", "checkpoints", "layers", "populations"):
        _require(key in raw, f"{manifest_path}: missing required field {key!r}")

    checkpoints = raw["checkpoints"]
    _require(
        isinstance(checkpoints, list) and len(checkpoints) >= 1
        and all(isinstance(c, int) for c in checkpoints),
        f"{manifest_path}: 'checkpoints' must be a non-empty list of integers",
    )
    _require(
        all(a < b for a, b in zip(checkpoints, checkpoints[1:])),
        f"{manifest_path}: checkpoints must be strictly increasing",
    )

    layers = raw["layers"]
    _require(
        isinstance(layers, list) and len(layers) >= 1,
        f"{manifest_path}: 'layers' must be a non-empty list",
    )
    layer_dims = []
    for pos, entry in enumerate(layers):
        _require(
            isinstance(entry, dict) and entry.get("id") == pos
            and isinstance(entry.get("features"), int) and entry["features"] >= 1,
            f"{manifest_path}: layers[{pos}] must declare id {pos} and features >= 1",
        )
        layer_dims.append(entry["features"])

    populations = raw["populations"]
    _require(
        isinstance(populations, list) and len(populations) >= 1,
        f"{manifest_path}: 'populations' must be a non-empty list",
    )

    base_dir = manifest_path.parent
    source_paths: dict = {}
    tags = []
    declared = set(checkpoints)
    for entry in populations:
        _require(
            isinstance(entry, dict) and isinstance(entry.get("tag"), str),
            f"{manifest_path}: each population needs a string 'tag'",
        )
        tag = entry["tag"]
        _require(tag not in source_paths, f"{manifest_path}: duplicate population {tag!r}")
        files = entry.get("files")
        _require(
            isinstance(files, list),
            f"{manifest_path}: population {tag!r} needs a 'files' list",
        )
        paths = {}
        for item in files:
            _require(
                isinstance(item, dict) and isinstance(item.get("checkpoint"), int)
                and isinstance(item.get("path"), str),
                f"{manifest_path}: population {tag!r} file entries need "
                "integer 'checkpoint' and string 'path'",
            )
            ckpt = item["checkpoint"]
            _require(
                ckpt in declared,
                f"{manifest_path}: population {tag!r} lists undeclared checkpoint {ckpt}",
            )
            _require(
                ckpt not in paths,
                f"{manifest_path}: population {tag!r} lists checkpoint {ckpt} twice",
            )
            paths[ckpt] = item["path"]
        for ckpt in checkpoints:
            _require(
                ckpt in paths,
                f"{manifest_path}: no snapshot for ({tag}, {ckpt})",
            )
        source_paths[tag] = paths
        tags.append(tag)

    # Header-scan every file: existence, structure, and cross-checkpoint
    # consistency (layer dims and batch sizes must not drift over time).
    n_examples_by_tag: dict = {}
    for tag in tags:
        for ckpt in checkpoints:
            path = base_dir / source_paths[tag][ckpt]
            if not path.is_file():
                raise ManifestError(
                    f"{manifest_path}: missing file for ({tag}, {ckpt}): {path}"
                )
            embedded_ckpt, embedded_tag, shapes, _ = scan_snapshot(path)
            _require(
                embedded_ckpt == ckpt,
                f"{path}: embeds checkpoint {embedded_ckpt}, manifest says {ckpt}",
            )
            _require(
                embedded_tag == tag_code(tag),
                f"{path}: embeds population code {embedded_tag}, "
                f"manifest tag {tag!r} implies {tag_code(tag)}",
            )
            _require(
                len(shapes) == len(layer_dims),
                f"{path}: has {len(shapes)} layers, manifest declares {len(layer_dims)}",
            )
            for (layer_id, n, d), want in zip(shapes, layer_dims):
                if d != want:
                    raise ManifestError(
                        f"{manifest_path}: dimension drift: layer {layer_id} has "
                        f"D={d} at ({tag}, {ckpt}), manifest declares D={want}"
                    )
            n0 = shapes[0][1]
            prev = n_examples_by_tag.setdefault(tag, n0)
            _require(
                n0 == prev,
                f"{manifest_path}: dimension drift: population {tag!r} has "
                f"N={n0} at checkpoint {ckpt}, earlier checkpoints have N={prev}",
            )

    manifest = RunManifest(
        run_id=str(raw["run_id"]),
        checkpoint_indices=tuple(checkpoints),
        layer_dims=tuple(layer_dims),
        populations=tuple(tags),
        source_paths=source_paths,
        meta=dict(raw.get("meta") or {}),
    )
    return Run(manifest, base_dir)


def write_manifest(path, run_id, checkpoints, layer_dims, files_by_population, meta=None):
    """Compose and atomically write a manifest JSON document.

    files_by_population maps tag -> {checkpoint: relative path}.
    """
    doc = {
        "run_id": run_id,
        "checkpoints": [int(c) for c in checkpoints],
        "layers": [{"id": i, "features": int(d)} for i, d in enumerate(layer_dims)],
        "populations": [
            {
                "tag": tag,
                "files": [
                    {"checkpoint": int(c), "path": str(p)}
                    for c, p in sorted(files.items())
                ],
            }
            for tag, files in files_by_population.items()
        ],
    }
    if meta:
        doc["meta"] = meta
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
