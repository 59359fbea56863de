import numpy as np
import pytest
from hypothesis import given, strategies as st

from psh_lab.errors import ParameterError
from psh_lab.grid import GridFunction, PeriodicGrid
from psh_lab.io import HEADER, from_bytes, load_binary, load_csv, save_binary, save_csv, to_bytes


@given(n=st.sampled_from([1, 2]), res=st.sampled_from([8, 10]), period=st.floats(0.5, 4.0), seed=st.integers(0, 2**16))
def test_binary_round_trip_is_exact(n, res, period, seed):
    g = PeriodicGrid(n, res, period)
    u = GridFunction(g, np.random.default_rng(seed).standard_normal(g.shape))
    v = from_bytes(to_bytes(u))
    assert v.grid == g
    assert np.array_equal(v.values, u.values)


def test_binary_layout():
    g = PeriodicGrid(1, 8)
    u = GridFunction(g, np.arange(64.0).reshape(8, 8))
    data = to_bytes(u)
    assert len(data) == HEADER.size + 64 * 8
    assert data[:8] == b"PSHLAB1\0"
    assert np.frombuffer(data[HEADER.size:], "<f8")[5] == 5.0


def test_binary_rejects_corrupt_data():
    g = PeriodicGrid(1, 8)
    data = to_bytes(GridFunction.constant(g, 1.0))
    with pytest.raises(ParameterError):
        from_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(ParameterError):
        from_bytes(data[:-8])
    with pytest.raises(ParameterError):
        from_bytes(data[:10])


def test_files_round_trip(tmp_path, rng):
    g = PeriodicGrid(2, 8)
    u = GridFunction(g, rng.standard_normal(g.shape))
    assert np.array_equal(load_binary(save_binary(u, tmp_path / "a" / "u.bin")).values, u.values)
    v = load_csv(save_csv(u, tmp_path / "b" / "u.csv"), g)
    assert np.array_equal(v.values, u.values)
    header = (tmp_path / "b" / "u.csv").read_text().splitlines()[0]
    assert header == "node,x1,y1,x2,y2,value"
