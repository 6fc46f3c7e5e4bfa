import io

import numpy as np
import pytest

from twzr.fields import PhaseGrid
from twzr.formats import (BadMagic, Truncation, UnsupportedVersion,
                          read_field, read_phase_grid, read_plan, write_field,
                          write_pgm, write_phase_grid, write_plan)
from twzr.trajectory import StepPlan

GOLDEN_FIELD_REAL = bytes.fromhex(
    "54575a46010002000000030000000000803f0000004000004040"
    "000080400000a0400000d040")
GOLDEN_FIELD_CPLX = bytes.fromhex(
    "54575a46010101000000020000000000803f00000040"
    "00000080000080bf")
GOLDEN_PHASE_GRID = bytes.fromhex(
    "54575a4601000200000002000000000000000000003f000080be0000803f")
GOLDEN_PLAN = bytes.fromhex(
    "504c414e010702000000010000000000803f00000040cdcccc3d"
    "0000c03f00002040cdcc4c3e0000403f")


def test_field_real_golden_bytes():
    buf = io.BytesIO()
    write_field(buf, np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]],
                              dtype=np.float32))
    assert buf.getvalue() == GOLDEN_FIELD_REAL
    back = read_field(io.BytesIO(GOLDEN_FIELD_REAL))
    assert back.dtype == np.float32
    assert np.array_equal(back, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]])


def test_field_complex_golden_bytes():
    buf = io.BytesIO()
    write_field(buf, np.array([[1 + 2j, -1j]], dtype=np.complex64))
    assert buf.getvalue() == GOLDEN_FIELD_CPLX
    back = read_field(io.BytesIO(GOLDEN_FIELD_CPLX))
    assert back.dtype == np.complex64
    assert np.array_equal(back, [[1 + 2j, -1j]])


def test_phase_grid_golden_bytes():
    g = PhaseGrid(np.array([[0.0, 0.5], [-0.25, 1.0]]))
    buf = io.BytesIO()
    write_phase_grid(buf, g)
    assert buf.getvalue() == GOLDEN_PHASE_GRID
    back = read_phase_grid(io.BytesIO(GOLDEN_PHASE_GRID))
    assert np.allclose(back.values, g.values, atol=1e-6)


def test_plan_golden_bytes():
    plan = StepPlan(positions=np.array([[[1.0, 2.0]], [[1.5, 2.5]]]),
                    phases=np.array([[0.1], [0.2]]),
                    amplitudes=np.array([0.75]))
    buf = io.BytesIO()
    write_plan(buf, plan)
    assert buf.getvalue() == GOLDEN_PLAN
    back = read_plan(io.BytesIO(GOLDEN_PLAN))
    assert np.allclose(back.positions, plan.positions, atol=1e-6)
    assert np.allclose(back.phases, plan.phases, atol=1e-6)
    assert np.allclose(back.amplitudes, plan.amplitudes, atol=1e-6)
    assert back.prologue and back.epilogue


def test_field_roundtrip_large(rng):
    a = rng.normal(size=(33, 17)).astype(np.float32)
    buf = io.BytesIO()
    write_field(buf, a)
    assert np.array_equal(read_field(io.BytesIO(buf.getvalue())), a)


def test_plan_without_amplitudes_defaults_to_ones(rng):
    plan = StepPlan(positions=rng.normal(size=(3, 2, 2)),
                    phases=rng.normal(size=(3, 2)),
                    amplitudes=None)
    buf = io.BytesIO()
    write_plan(buf, plan)
    back = read_plan(io.BytesIO(buf.getvalue()))
    assert np.array_equal(back.amplitudes, np.ones(2))


def test_bad_magic_raises():
    data = b"XXXX" + GOLDEN_FIELD_REAL[4:]
    with pytest.raises(BadMagic):
        read_field(io.BytesIO(data))


def test_unsupported_version_raises():
    data = bytearray(GOLDEN_FIELD_REAL)
    data[4] = 99
    with pytest.raises(UnsupportedVersion):
        read_field(io.BytesIO(bytes(data)))


def test_truncation_raises():
    with pytest.raises(Truncation):
        read_field(io.BytesIO(GOLDEN_FIELD_REAL[:-3]))
    with pytest.raises(Truncation):
        read_field(io.BytesIO(GOLDEN_FIELD_REAL[:7]))


def test_pgm_output():
    img = np.array([[0.0, 0.5], [1.0, 2.0]])
    buf = io.BytesIO()
    write_pgm(buf, img)
    data = buf.getvalue()
    assert data.startswith(b"P5")
    header = data.split(b"\n")
    assert b"2 2" in data and b"255" in data
    # peak-normalized: the max pixel maps to 255
    assert data[-4:] == bytes([0, 63, 127, 255]) or data.endswith(
        bytes([0, 64, 128, 255]))
