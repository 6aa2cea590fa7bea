from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from splab import snapshot
from splab.discretization import Field, Grid3, RadialGrid
from splab.errors import SnapshotError

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=30)
@given(vals=hnp.arrays(np.float64, (4, 4, 4), elements=finite), L=st.floats(0.5, 100.0))
def test_box_round_trip_is_bit_exact(vals, L):
    f = Field(Grid3(L, 4), vals)
    g = snapshot.from_bytes(snapshot.to_bytes(f))
    assert g.grid == f.grid
    assert g.values.tobytes() == f.values.tobytes()


@settings(max_examples=30)
@given(vals=hnp.arrays(np.float64, 17, elements=finite), R=st.floats(0.5, 100.0))
def test_radial_round_trip_is_bit_exact(vals, R):
    f = Field(RadialGrid(R, 17), vals)
    g = snapshot.from_bytes(snapshot.to_bytes(f))
    assert g.grid == f.grid
    assert g.values.tobytes() == f.values.tobytes()


def test_header_layout():
    f = Field(Grid3(2.5, 4), np.arange(64, dtype=float).reshape(4, 4, 4))
    data = snapshot.to_bytes(f)
    assert data[:4] == b"SPGF"
    assert struct.unpack_from("<IIIIId", data, 4) == (1, 3, 4, 4, 4, 2.5)
    assert len(data) == 4 + 4 * 5 + 8 + 64 * 8
    # row-major payload
    assert struct.unpack_from("<2d", data, 32) == (0.0, 1.0)


def test_file_round_trip(tmp_path):
    f = Field(RadialGrid(8.0, 32), np.linspace(0, 1, 32))
    snapshot.write(tmp_path / "f.spgf", f)
    g = snapshot.read(tmp_path / "f.spgf")
    assert np.array_equal(g.values, f.values)


@pytest.mark.parametrize("data", [b"", b"XXXX" + bytes(20), b"SPGF" + struct.pack("<II", 2, 3),
                                  b"SPGF" + struct.pack("<II", 1, 2), b"SPGF" + struct.pack("<II", 1, 3)])
def test_malformed_headers(data):
    with pytest.raises(SnapshotError):
        snapshot.from_bytes(data)


def test_truncated_payload():
    data = snapshot.to_bytes(Field(Grid3(1.0, 4), np.zeros((4, 4, 4))))
    with pytest.raises(SnapshotError):
        snapshot.from_bytes(data[:-8])
