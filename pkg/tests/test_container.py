import numpy as np
import pytest

from shipprompt.container import MAGIC, ContainerError, read_arrays, write_arrays


def test_round_trip_is_exact(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "scalar": np.array(3.5), "név": np.array([1e-300, -0.0])}
    path = tmp_path / "x.hpmt"
    write_arrays(path, arrays)
    back = read_arrays(path)
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].shape == arrays[k].shape
        assert back[k].tobytes() == np.asarray(arrays[k], dtype=np.float64).tobytes()


def test_layout_is_little_endian_u64_headers(tmp_path):
    path = tmp_path / "x.hpmt"
    write_arrays(path, {"w": np.array([[1.0, 2.0]])})
    raw = path.read_bytes()
    assert raw[:5] == MAGIC
    count = int.from_bytes(raw[5:13], "little")
    name_len = int.from_bytes(raw[13:21], "little")
    assert (count, name_len, raw[21:22]) == (1, 1, b"w")
    rank = int.from_bytes(raw[22:30], "little")
    dims = [int.from_bytes(raw[30 + 8 * i:38 + 8 * i], "little") for i in range(rank)]
    assert dims == [1, 2]
    assert np.frombuffer(raw[46:], "<f8").tolist() == [1.0, 2.0]


def test_empty_file_is_rejected(tmp_path):
    path = tmp_path / "empty.hpmt"
    path.write_bytes(b"")
    with pytest.raises(ContainerError, match="bad container"):
        read_arrays(path)


def test_wrong_magic_is_rejected(tmp_path):
    path = tmp_path / "x.hpmt"
    write_arrays(path, {"a": np.ones(3)})
    path.write_bytes(b"XXXXX" + path.read_bytes()[5:])
    with pytest.raises(ContainerError, match="bad container"):
        read_arrays(path)


def test_truncation_reports_missing_array(tmp_path):
    path = tmp_path / "x.hpmt"
    write_arrays(path, {"a": np.ones(3), "b": np.ones(4)})
    path.write_bytes(path.read_bytes()[:-9])
    with pytest.raises(ContainerError, match="missing array"):
        read_arrays(path)
