"""Binary interchange formats: TWZF field dumps, PLAN step plans, PGM frames.

All multi-byte integers are little-endian; all floating-point payloads are
IEEE-754 binary32.  TWZF layout: magic ``TWZF``, u8 version, u8 dtype
(0 = real, 1 = complex interleaved), u32 rows, u32 cols, row-major payload.
PLAN layout: magic ``PLAN``, u8 version, u8 flags, u32 frames, u32 tweezers,
then per-frame (x, y, phase) triplets per tweezer, then an optional
per-tweezer amplitude row.
"""

from __future__ import annotations

import struct

import numpy as np

from .fields import PhaseGrid
from .trajectory import StepPlan

FIELD_MAGIC = b"TWZF"
PLAN_MAGIC = b"PLAN"
FORMAT_VERSION = 1

_FIELD_HEADER = struct.Struct("<4sBBII")
_PLAN_HEADER = struct.Struct("<4sBBII")

_FLAG_PROLOGUE = 1
_FLAG_EPILOGUE = 2
_FLAG_AMPLITUDES = 4


class FormatError(ValueError):
    """Malformed or truncated binary payload."""


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class Truncation(FormatError):
    pass


def _read_exact(stream, n: int) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise Truncation(f"expected {n} bytes, got {len(buf)}")
    return buf


def write_field(stream, array: np.ndarray) -> None:
    """Serialize a 2-D real or complex array as a TWZF record."""
    a = np.asarray(array)
    if a.ndim != 2:
        raise FormatError("TWZF stores 2-D arrays")
    if np.iscomplexobj(a):
        dtype = 1
        payload = np.ascontiguousarray(a.astype(np.complex64))
    else:
        dtype = 0
        payload = np.ascontiguousarray(a.astype(np.float32))
    stream.write(_FIELD_HEADER.pack(FIELD_MAGIC, FORMAT_VERSION, dtype,
                                    a.shape[0], a.shape[1]))
    stream.write(payload.tobytes())


def read_field(stream) -> np.ndarray:
    magic, version, dtype, rows, cols = _FIELD_HEADER.unpack(
        _read_exact(stream, _FIELD_HEADER.size))
    if magic != FIELD_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported TWZF version {version}")
    if dtype not in (0, 1):
        raise FormatError(f"unknown dtype code {dtype}")
    np_dtype = np.complex64 if dtype == 1 else np.float32
    raw = _read_exact(stream, rows * cols * np_dtype().itemsize)
    return np.frombuffer(raw, dtype=np_dtype).reshape(rows, cols).copy()


def write_phase_grid(stream, grid: PhaseGrid) -> None:
    write_field(stream, grid.values)


def read_phase_grid(stream) -> PhaseGrid:
    a = read_field(stream)
    if np.iscomplexobj(a):
        raise FormatError("phase grids are real-valued")
    return PhaseGrid(np.asarray(a, dtype=np.float64))


def write_plan(stream, plan: StepPlan) -> None:
    frames = plan.positions.shape[0]
    n = plan.n_tweezers
    flags = 0
    if plan.prologue:
        flags |= _FLAG_PROLOGUE
    if plan.epilogue:
        flags |= _FLAG_EPILOGUE
    if plan.amplitudes is not None:
        flags |= _FLAG_AMPLITUDES
    stream.write(_PLAN_HEADER.pack(PLAN_MAGIC, FORMAT_VERSION, flags,
                                   frames, n))
    triplets = np.empty((frames, n, 3), dtype=np.float32)
    triplets[:, :, :2] = plan.positions
    triplets[:, :, 2] = plan.phases
    stream.write(np.ascontiguousarray(triplets).tobytes())
    if plan.amplitudes is not None:
        stream.write(np.ascontiguousarray(
            plan.amplitudes.astype(np.float32)).tobytes())


def read_plan(stream) -> StepPlan:
    magic, version, flags, frames, n = _PLAN_HEADER.unpack(
        _read_exact(stream, _PLAN_HEADER.size))
    if magic != PLAN_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported PLAN version {version}")
    raw = _read_exact(stream, frames * n * 3 * 4)
    triplets = np.frombuffer(raw, dtype=np.float32).reshape(frames, n, 3)
    if flags & _FLAG_AMPLITUDES:
        raw = _read_exact(stream, n * 4)
        amplitudes = np.frombuffer(raw, dtype=np.float32).astype(np.float64)
    else:
        amplitudes = np.ones(n)
    return StepPlan(positions=triplets[:, :, :2].astype(np.float64),
                    phases=triplets[:, :, 2].astype(np.float64),
                    amplitudes=amplitudes,
                    prologue=bool(flags & _FLAG_PROLOGUE),
                    epilogue=bool(flags & _FLAG_EPILOGUE))


def write_pgm(stream, image: np.ndarray) -> None:
    """8-bit binary PGM of a nonnegative image, normalized to its peak."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise FormatError("PGM stores 2-D images")
    peak = img.max()
    scaled = np.zeros_like(img) if peak <= 0 else img / peak
    data = np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)
    stream.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
    stream.write(data.tobytes())
