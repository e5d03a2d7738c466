import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abe.errors import (
    BadMagicError,
    DimensionError,
    ManifestError,
    NonFiniteValueError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from abe.snapshots import (
    HEADER,
    LAYER_HEADER,
    SOURCE_VALID,
    TARGET,
    ActivationSnapshot,
    LayerActivations,
    load_run,
    read_snapshot,
    serialize_snapshot,
    snapshot_byte_size,
    write_manifest,
    write_snapshot,
)


def snap(checkpoint=0, tag=TARGET, arrays=None):
    arrays = arrays if arrays is not None else [np.ones((2, 3), dtype=np.float32)]
    layers = tuple(
        LayerActivations(i, np.asarray(a, dtype=np.float32))
        for i, a in enumerate(arrays)
    )
    return ActivationSnapshot(checkpoint, tag, layers)


def test_smallest_snapshot_payload_bytes(tmp_path):
    path = tmp_path / "one.asnap"
    write_snapshot(snap(arrays=[np.array([[1.0, 2.0]])]), path)
    blob = path.read_bytes()
    assert blob[:4] == b"ABES"
    payload = blob[HEADER.size + LAYER_HEADER.size :]
    assert payload == struct.pack("<2f", 1.0, 2.0)
    assert len(payload) == 8


def test_file_size_formula(tmp_path):
    arrays = [np.ones((4, 3)), np.ones((4, 7))]
    path = tmp_path / "s.asnap"
    write_snapshot(snap(arrays=arrays), path)
    expected = snapshot_byte_size([(4, 3), (4, 7)])
    assert path.stat().st_size == expected
    assert expected == HEADER.size + 2 * LAYER_HEADER.size + 4 * (12 + 28)


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    original = snap(
        checkpoint=17,
        tag=SOURCE_VALID,
        arrays=[rng.normal(0, 1, (6, 4)), rng.normal(0, 9, (6, 2))],
    )
    path = tmp_path / "rt.asnap"
    write_snapshot(original, path)
    loaded = read_snapshot(path)
    assert loaded == original
    assert loaded.layers[0].values.tobytes() == original.layers[0].values.tobytes()


@settings(max_examples=30, deadline=None)
@given(
    checkpoint=st.integers(0, 2**40),
    tag=st.sampled_from([SOURCE_VALID, TARGET, "other"]),
    n=st.integers(1, 8),
    dims=st.lists(st.integers(1, 9), min_size=1, max_size=4),
    seed=st.integers(0, 2**31),
)
def test_round_trip_property(tmp_path_factory, checkpoint, tag, n, dims, seed):
    rng = np.random.default_rng(seed)
    original = snap(
        checkpoint=checkpoint,
        tag=tag,
        arrays=[rng.normal(0, 100, (n, d)) for d in dims],
    )
    path = tmp_path_factory.mktemp("rt") / "s.asnap"
    write_snapshot(original, path)
    assert read_snapshot(path) == original


def test_nan_rejected_with_coordinates():
    values = np.ones((2, 3), dtype=np.float32)
    values[0, 1] = np.nan
    with pytest.raises(NonFiniteValueError, match=r"layer 0, row 0, col 1"):
        LayerActivations(0, values)


def test_inf_rejected():
    values = np.ones((1, 2), dtype=np.float32)
    values[0, 0] = np.inf
    with pytest.raises(NonFiniteValueError, match="Inf"):
        LayerActivations(0, values)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.asnap"
    write_snapshot(snap(), path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(blob)
    with pytest.raises(BadMagicError):
        read_snapshot(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "v9.asnap"
    write_snapshot(snap(), path)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<I", blob, 4, 9)
    path.write_bytes(blob)
    with pytest.raises(UnsupportedVersionError):
        read_snapshot(path)


def test_truncated_payload_names_byte_counts(tmp_path):
    path = tmp_path / "t.asnap"
    write_snapshot(snap(arrays=[np.ones((2, 3))]), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(TruncatedFileError, match=r"needs 24 bytes"):
        read_snapshot(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "g.asnap"
    write_snapshot(snap(), path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(TruncatedFileError, match="trailing"):
        read_snapshot(path)


def test_nan_payload_rejected_on_read(tmp_path):
    path = tmp_path / "n.asnap"
    write_snapshot(snap(arrays=[np.ones((1, 2))]), path)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<f", blob, len(blob) - 4, float("nan"))
    path.write_bytes(blob)
    with pytest.raises(NonFiniteValueError, match=r"row 0, col 1"):
        read_snapshot(path)


def test_dimension_errors_on_read(tmp_path):
    path = tmp_path / "d.asnap"
    write_snapshot(snap(), path)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<I", blob, HEADER.size, 3)  # layer id 3 at position 0
    path.write_bytes(blob)
    with pytest.raises(DimensionError, match="contiguous"):
        read_snapshot(path)


def test_snapshot_invariants():
    with pytest.raises(DimensionError):
        ActivationSnapshot(0, TARGET, ())
    layers = (
        LayerActivations(0, np.ones((2, 2))),
        LayerActivations(1, np.ones((3, 2))),
    )
    with pytest.raises(DimensionError, match="examples"):
        ActivationSnapshot(0, TARGET, layers)


def run_dir(tmp_path, checkpoints=(0, 1, 2), dims=(3, 2), n=2, break_with=None):
    files = {SOURCE_VALID: {}, TARGET: {}}
    for tag in files:
        for ckpt in checkpoints:
            rel = f"{tag}_{ckpt}.asnap"
            arrays = [np.full((n, d), 0.5 + ckpt) for d in dims]
            if break_with == "drift" and tag == TARGET and ckpt == 1:
                arrays[1] = np.full((n, 5), 0.5)
            s = snap(checkpoint=ckpt, tag=tag, arrays=arrays)
            write_snapshot(s, tmp_path / rel)
            files[tag][ckpt] = rel
    if break_with == "missing":
        (tmp_path / files[TARGET][checkpoints[-1]]).unlink()
    write_manifest(
        tmp_path / "manifest.json",
        run_id="test-run",
        checkpoints=checkpoints,
        layer_dims=dims,
        files_by_population=files,
        meta={"note": "fixture"},
    )
    return tmp_path / "manifest.json"


def test_load_run_happy_path(tmp_path):
    run = load_run(run_dir(tmp_path))
    assert run.checkpoints == (0, 1, 2)
    assert run.manifest.layer_dims == (3, 2)
    assert set(run.manifest.populations) == {SOURCE_VALID, TARGET}
    s = run.snapshot(TARGET, 1)
    assert s.checkpoint_index == 1
    assert s.layers[1].n_features == 2


def test_load_run_missing_file(tmp_path):
    path = run_dir(tmp_path, break_with="missing")
    with pytest.raises(ManifestError, match=r"\(target, 2\)"):
        load_run(path)


def test_load_run_dimension_drift(tmp_path):
    path = run_dir(tmp_path, break_with="drift")
    with pytest.raises(ManifestError, match="dimension drift"):
        load_run(path)


def test_load_run_checkpoint_gap(tmp_path):
    path = run_dir(tmp_path)
    doc = json.loads(path.read_text())
    doc["populations"][0]["files"] = doc["populations"][0]["files"][:-1]
    path.write_text(json.dumps(doc))
    with pytest.raises(ManifestError, match=r"no snapshot for \(source_valid, 2\)"):
        load_run(path)


def test_load_run_duplicate_checkpoint(tmp_path):
    path = run_dir(tmp_path)
    doc = json.loads(path.read_text())
    doc["populations"][0]["files"].append(doc["populations"][0]["files"][0])
    path.write_text(json.dumps(doc))
    with pytest.raises(ManifestError, match="twice"):
        load_run(path)


def test_load_run_embedded_checkpoint_mismatch(tmp_path):
    path = run_dir(tmp_path)
    doc = json.loads(path.read_text())
    f0, f1 = doc["populations"][0]["files"][:2]
    f0["path"], f1["path"] = f1["path"], f0["path"]
    path.write_text(json.dumps(doc))
    with pytest.raises(ManifestError, match="embeds checkpoint"):
        load_run(path)


def test_load_run_unknown_population_requested(tmp_path):
    run = load_run(run_dir(tmp_path))
    with pytest.raises(ManifestError, match="no snapshot for"):
        run.snapshot("mystery", 0)
