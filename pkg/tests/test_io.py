import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vasctree import BinaryMask, Volume3D
from vasctree.errors import CorruptData, InvalidHeader, UnsupportedFormat
from vasctree.io import read_csv, read_mask, read_volume, write_csv, write_mask, write_volume


def test_f32_roundtrip(tmp_path, rng):
    vals = rng.standard_normal((16, 16, 16)).astype(np.float32)
    vals[0, 0, 0] = np.nan
    vol = Volume3D(vals, (20.0, 21.5, 19.0))
    p = write_volume(vol, tmp_path / "v.json")
    back = read_volume(p)
    assert back.values.tobytes() == vals.tobytes()
    assert back.spacing == vol.spacing


@settings(max_examples=20, deadline=None)
@given(st.tuples(*[st.integers(1, 7)] * 3), st.sampled_from(["u8", "u16"]), st.integers(0, 2**32 - 1))
def test_integer_roundtrip(tmp_path_factory, dims, code, seed):
    top = 255 if code == "u8" else 65535
    vals = np.random.default_rng(seed).integers(0, top + 1, dims)
    d = tmp_path_factory.mktemp("rt")
    back = read_volume(write_volume(Volume3D(vals), d / "v.json", code))
    np.testing.assert_array_equal(back.values, vals)


def test_raw_layout_is_x_fastest(tmp_path):
    vals = np.arange(24, dtype=np.uint16).reshape((2, 3, 4), order="F")
    write_volume(Volume3D(vals), tmp_path / "v.json")
    raw = np.frombuffer((tmp_path / "v.raw").read_bytes(), "<u2")
    assert raw.tolist() == list(range(24))
    header = json.loads((tmp_path / "v.json").read_text())
    assert header["dims"] == [2, 3, 4] and header["dtype"] == "u16" and header["data"] == "v.raw"


def test_truncated_data(tmp_path):
    p = write_volume(Volume3D(np.zeros((4, 4, 4), np.uint16)), tmp_path / "v.json")
    raw = tmp_path / "v.raw"
    raw.write_bytes(raw.read_bytes()[:-1])
    with pytest.raises(CorruptData):
        read_volume(p)


def _header(tmp_path, **kw):
    h = {"dims": [4, 4, 4], "spacing_um": [20, 20, 20], "dtype": "u8", "data": "v.raw"}
    h.update(kw)
    (tmp_path / "v.raw").write_bytes(bytes(64))
    (tmp_path / "v.json").write_text(json.dumps(h))
    return tmp_path / "v.json"


@pytest.mark.parametrize("kw, err", [
    (dict(dims=[0, 4, 4]), InvalidHeader),
    (dict(dims=[4, 4]), InvalidHeader),
    (dict(spacing_um=[20, -1, 20]), InvalidHeader),
    (dict(dtype="f64"), UnsupportedFormat),
    (dict(index_order="z-fastest"), UnsupportedFormat),
])
def test_bad_headers(tmp_path, kw, err):
    with pytest.raises(err):
        read_volume(_header(tmp_path, **kw))


def test_zero_extent_is_unsupported_format(tmp_path):
    with pytest.raises(UnsupportedFormat):
        read_volume(_header(tmp_path, dims=[0, 4, 4]))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_volume(tmp_path / "nope.json")


def test_mask_roundtrip(tmp_path, rng):
    m = BinaryMask(rng.random((5, 6, 7)) < 0.5, (10.0, 10.0, 10.0))
    assert read_mask(write_mask(m, tmp_path / "m.json")) == m
    write_volume(Volume3D(np.full((2, 2, 2), 3, np.uint8)), tmp_path / "bad.json")
    with pytest.raises(CorruptData):
        read_mask(tmp_path / "bad.json")


def test_csv_roundtrip(tmp_path):
    write_csv(tmp_path / "t.csv", ("a", "b", "c"), [(1, 0.1, None), (2, float("nan"), True)])
    assert (tmp_path / "t.csv").read_text() == "a,b,c\n1,0.1,\n2,nan,true\n"
    rows = read_csv(tmp_path / "t.csv")
    assert rows[0] == {"a": "1", "b": "0.1", "c": ""}
