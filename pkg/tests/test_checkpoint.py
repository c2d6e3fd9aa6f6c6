import struct

import numpy as np
import pytest

from igad.checkpoint import MAGIC, load_tensors, save_tensors
from igad.errors import DataError


def test_roundtrip_bitexact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "layer.w": rng.standard_normal((4, 7)),
        "layer.b": rng.standard_normal((1, 7)),
        "scalar": np.array([[3.0]]),
        "empty": np.zeros((0, 5)),
    }
    p = tmp_path / "ck.bin"
    save_tensors(p, tensors)
    back = load_tensors(p)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].dtype == np.float64
        assert back[k].shape == tensors[k].shape
        assert np.array_equal(back[k], tensors[k])


def test_save_is_deterministic_bytes(tmp_path):
    t = {"a": np.linspace(0, 1, 12).reshape(3, 4)}
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_tensors(p1, t)
    save_tensors(p2, t)
    assert p1.read_bytes() == p2.read_bytes()


def test_1d_arrays_become_rows(tmp_path):
    p = tmp_path / "ck.bin"
    save_tensors(p, {"v": np.arange(3.0)})
    assert load_tensors(p)["v"].shape == (1, 3)


def test_3d_rejected(tmp_path):
    with pytest.raises(ValueError):
        save_tensors(tmp_path / "x.bin", {"t": np.zeros((2, 2, 2))})


def test_truncated_file_detected(tmp_path):
    p = tmp_path / "ck.bin"
    save_tensors(p, {"w": np.ones((5, 5))})
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(DataError):
        load_tensors(p)


def test_bad_magic_detected(tmp_path):
    p = tmp_path / "ck.bin"
    p.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataError):
        load_tensors(p)


def test_trailing_bytes_detected(tmp_path):
    p = tmp_path / "ck.bin"
    save_tensors(p, {"w": np.ones((2, 2))})
    p.write_bytes(p.read_bytes() + b"\x00")
    with pytest.raises(DataError):
        load_tensors(p)


def test_duplicate_name_detected(tmp_path):
    body = b""
    for _ in range(2):
        arr = np.ones((1, 1))
        body += struct.pack("<H", 1) + b"w" + struct.pack("<II", 1, 1)
        body += arr.tobytes()
    raw = MAGIC + struct.pack("<B", 1) + struct.pack("<I", 2) + body
    p = tmp_path / "ck.bin"
    p.write_bytes(raw)
    with pytest.raises(DataError):
        load_tensors(p)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_tensors(tmp_path / "nope.bin")
