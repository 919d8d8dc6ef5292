import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mmmdesign import io

dtypes = st.sampled_from([np.float32, np.float64, np.uint8])


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(dtypes, hnp.array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=5)))
def test_tensor_round_trip_is_exact(arr):
    back, end = io.tensor_from_bytes(io.tensor_to_bytes(arr))
    assert back.dtype == arr.dtype and back.shape == arr.shape
    assert end == len(io.tensor_to_bytes(arr))
    np.testing.assert_array_equal(back.view(np.uint8), np.ascontiguousarray(arr).view(np.uint8))


def test_tensor_header_layout():
    raw = io.tensor_to_bytes(np.zeros((2, 3), np.float32))
    assert raw[:4] == b"MMT1"
    assert raw[4] == 0 and raw[5] == 2 and raw[6:8] == b"\0\0"
    assert struct.unpack("<2Q", raw[8:24]) == (2, 3)
    assert len(raw) == 24 + 24


def test_tensor_file_rejects_trailing_bytes(tmp_path):
    p = tmp_path / "t.mmt"
    p.write_bytes(io.tensor_to_bytes(np.ones(3)) + b"x")
    with pytest.raises(io.FormatError, match="trailing"):
        io.read_tensor(p)


@pytest.mark.parametrize("mutate, msg", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + bytes([9]) + b[5:], "dtype code"),
    (lambda b: b[:-1], "truncated payload"),
])
def test_tensor_corruption_is_reported_with_offset(mutate, msg):
    raw = mutate(io.tensor_to_bytes(np.arange(4.0)))
    with pytest.raises(io.FormatError, match=msg) as info:
        io.tensor_from_bytes(raw)
    assert info.value.offset >= 0


def test_unsupported_dtype_rejected():
    with pytest.raises(TypeError):
        io.tensor_to_bytes(np.zeros(2, np.int64))


def _archive(width=2, modes=2, lastwidth=3, extra=None):
    cfg = {"kind": "ifno", "modes": modes, "width": width, "lastwidth": lastwidth, "depth": 3}
    cfg.update(extra or {})
    tensors = {k: np.zeros(s, np.float32) for k, s in io.ifno_tensor_shapes(cfg).items()}
    return io.ModelArchive(json.dumps(cfg), tensors)


def test_model_archive_round_trip(tmp_path):
    a = _archive()
    a.tensors["layer.weight"][:] = 1.5
    io.write_model(tmp_path / "m.mma", a)
    b = io.read_model(tmp_path / "m.mma")
    assert b.config == a.config
    assert list(b.tensors) == list(a.tensors)
    np.testing.assert_array_equal(b.tensors["layer.weight"], 1.5)


def test_model_archive_schema_errors():
    a = _archive()
    del a.tensors["proj1.bias"]
    with pytest.raises(io.SchemaError, match="proj1.bias"):
        io.validate_archive(a)
    a = _archive()
    a.tensors["layer.spectral"] = np.zeros((2, 2, 2, 2), np.float32)
    with pytest.raises(io.SchemaError, match="shape"):
        io.validate_archive(a)


def test_model_archive_duplicate_names(tmp_path):
    a = _archive()
    io.write_model(tmp_path / "m.mma", a)
    raw = (tmp_path / "m.mma").read_bytes()
    # bump the entry count and append a repeat of the first entry
    clen = struct.unpack_from("<I", raw, 4)[0]
    count_pos = 8 + clen
    count = struct.unpack_from("<I", raw, count_pos)[0]
    name = b"lift.weight"
    dup = struct.pack("<H", len(name)) + name + io.tensor_to_bytes(a.tensors["lift.weight"])
    bad = raw[:count_pos] + struct.pack("<I", count + 1) + raw[count_pos + 4:] + dup
    (tmp_path / "bad.mma").write_bytes(bad)
    with pytest.raises(io.FormatError, match="duplicate"):
        io.read_model(tmp_path / "bad.mma")


def test_pgm_linear_maps_extremes(tmp_path):
    f = np.array([[0.0, 1.0], [2.0, 4.0]])
    io.export_pgm(f, tmp_path / "a.pgm")
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    np.testing.assert_array_equal(io.read_pgm(tmp_path / "a.pgm"), [[0, 64], [128, 255]])


def test_pgm_constant_field_is_mid_grey():
    raw = io.pgm_bytes(np.full((3, 4), 7.0))
    assert set(raw[-12:]) == {127}


def test_pgm_log_scaling_compresses_peaks():
    f = np.arange(16.0).reshape(4, 4)
    f[3, 3] = 1e6
    lin = np.frombuffer(io.pgm_bytes(f, "linear")[-16:], np.uint8)
    logp = np.frombuffer(io.pgm_bytes(f, "log1p")[-16:], np.uint8)
    assert lin.max() == logp.max() == 255
    assert np.count_nonzero(lin) == 1
    assert np.count_nonzero(logp) == 15
    assert np.all(np.diff(logp.astype(int)) >= 0)


def test_pgm_rejects_non_finite_and_names_pixels():
    f = np.zeros((3, 3))
    f[1, 2] = np.nan
    with pytest.raises(ValueError, match=r"\(1, 2\)"):
        io.pgm_bytes(f)


def test_csv_and_json_round_trip(tmp_path):
    io.write_csv(tmp_path / "a.csv", ["a", "b"], [[1, 0.1], [2, np.float64(1 / 3)]])
    header, rows = io.read_csv(tmp_path / "a.csv")
    assert header == ["a", "b"]
    assert float(rows[1][1]) == 1 / 3
    io.write_json(tmp_path / "a.json", {"b": 1, "a": [1, 2]})
    assert io.read_json(tmp_path / "a.json") == {"a": [1, 2], "b": 1}
    assert not list(tmp_path.glob("*.tmp"))
