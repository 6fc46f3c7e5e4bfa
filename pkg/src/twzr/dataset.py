"""Training-sample generation and the TWZS sample file format.

A sample pairs a sparse encoding of the requested tweezers (bilinear
amplitude splat plus a raw-radian phase plane on the final hologram grid)
with the amplitude/phase images of the Fourier transform of the hologram's
central crop, which serve as supervision for a learned generator.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import formats
from .fields import cfft2, crop_center, wrap_phase
from .synthesis import (SynthesisConfig, TweezerTarget, extract_phases, wgs)
from .trajectory import StepConstraints, plan

SAMPLE_MAGIC = b"TWZS"
SAMPLE_VERSION = 1

_SAMPLE_HEADER = struct.Struct("<4sBII")
_TWEEZER_RECORD = struct.Struct("<ffff")


class DatasetError(ValueError):
    pass


class PhaseConflict(DatasetError):
    """Two tweezers wrote different phases to the same input pixel."""


@dataclass(frozen=True)
class TweezerRecord:
    """One requested trap: expanded-grid pixel coordinates, phase, weight."""

    x: float
    y: float
    phase: float
    amp: float = 1.0


@dataclass(frozen=True)
class Sample:
    tweezers: tuple
    a_input: np.ndarray
    phi_input: np.ndarray
    a_label: np.ndarray
    phi_label: np.ndarray

    @property
    def n(self) -> int:
        return self.a_input.shape[0]


def encode_inputs(tweezers: Sequence[TweezerRecord], n: int,
                  oversample: int) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear splat of tweezer weights and phases onto the n-pixel grid.

    Coordinates live on the expanded grid [0, oversample*n); dividing by the
    oversample factor lands them on the input grid.  Amplitude adds on
    overlap; a pixel receiving two distinct phases is an error.
    """
    a = np.zeros((n, n))
    phi = np.zeros((n, n))
    written = np.zeros((n, n), dtype=bool)
    limit = oversample * n
    for t in tweezers:
        if not (0 <= t.x < limit and 0 <= t.y < limit):
            raise DatasetError(f"coordinate ({t.x}, {t.y}) outside "
                               f"[0, {limit})")
        u, v = t.x / oversample, t.y / oversample
        i0, j0 = int(np.floor(v)), int(np.floor(u))
        fv, fu = v - i0, u - j0
        for di, dj, w in ((0, 0, (1 - fv) * (1 - fu)),
                          (0, 1, (1 - fv) * fu),
                          (1, 0, fv * (1 - fu)),
                          (1, 1, fv * fu)):
            if w == 0.0:
                continue
            i, j = i0 + di, j0 + dj
            if i >= n or j >= n:
                raise DatasetError(f"coordinate ({t.x}, {t.y}) splats "
                                   "outside the grid")
            p = wrap_phase(t.phase)
            if written[i, j] and phi[i, j] != p:
                raise PhaseConflict(f"pixel ({j}, {i}) assigned phases "
                                    f"{phi[i, j]} and {p}")
            a[i, j] += t.amp * w
            phi[i, j] = p
            written[i, j] = True
    return a, phi


def decode_inputs(a_input: np.ndarray, phi_input: np.ndarray,
                  oversample: int) -> list[TweezerRecord]:
    """Invert `encode_inputs` for scenes with disjoint 2x2 footprints.

    Each connected group of nonzero amplitude pixels is one tweezer; the
    bilinear weights make the amplitude-weighted centroid exactly the
    original position.
    """
    from scipy import ndimage

    labels, count = ndimage.label(a_input > 0)
    out = []
    for k in range(1, count + 1):
        ii, jj = np.nonzero(labels == k)
        w = a_input[ii, jj]
        amp = w.sum()
        y = (w * ii).sum() / amp
        x = (w * jj).sum() / amp
        out.append(TweezerRecord(x=x * oversample, y=y * oversample,
                                 phase=float(phi_input[ii[0], jj[0]]),
                                 amp=float(amp)))
    out.sort(key=lambda t: (t.y, t.x))
    return out


def make_label(expanded_phase: np.ndarray, n: int) -> tuple[np.ndarray,
                                                            np.ndarray]:
    """Amplitude/phase of the transform of the central n-pixel crop."""
    expanded_phase = np.asarray(expanded_phase, dtype=np.float64)
    if expanded_phase.shape[0] < n:
        raise DatasetError(f"hologram smaller than crop: "
                           f"{expanded_phase.shape[0]} < {n}")
    crop = crop_center(expanded_phase, n)
    spectrum = cfft2(np.exp(1j * crop))
    return np.abs(spectrum), np.angle(spectrum)


def _random_scene(rng: np.random.Generator, n_traps: int,
                  cfg: SynthesisConfig) -> tuple[np.ndarray, np.ndarray]:
    """Start/end positions of a small rearrangement, expanded coordinates."""
    from .matching import exact_match

    m = cfg.expanded_size
    lo, hi = 0.3 * m, 0.7 * m
    spacing = 4.0 * cfg.oversample
    grid = np.arange(lo, hi, spacing)
    sites = np.array([(x, y) for y in grid for x in grid])
    idx = rng.permutation(len(sites))
    start = sites[idx[:n_traps]] + rng.uniform(-1, 1, (n_traps, 2))
    end = sites[rng.permutation(len(sites))[:n_traps]]
    # pair starts to ends the way the planner would, to limit path crossings
    assignment = exact_match(start, end)
    return start[assignment.atom_index], end


def generate_samples(count: int, seed: int = 0,
                     cfg: SynthesisConfig | None = None,
                     trap_range: tuple[int, int] = (10, 200),
                     constraints: StepConstraints = StepConstraints(),
                     base_steps: int = 20) -> Iterator[Sample]:
    """Stream of (inputs, labels) pairs drawn from simulated moves.

    Each sample draws a random rearrangement scene, interpolates it, picks
    one intermediate step's tweezer list, synthesizes the hologram with the
    iterative optimizer, and reads the realized trap phases back from the
    focal field.  Deterministic per seed; synthesis failures skip the
    sample (`generate_samples.skipped` counts them per call).
    """
    if cfg is None:
        cfg = SynthesisConfig()
    generate_samples.skipped = 0
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        n_traps = int(rng.integers(trap_range[0], trap_range[1] + 1))
        try:
            start, end = _random_scene(rng, n_traps, cfg)
            pl = plan(start / cfg.oversample, end / cfg.oversample,
                      np.zeros(n_traps), np.zeros(n_traps),
                      base_steps, constraints)
            step = int(rng.integers(0, pl.n_steps + 1))
            coords = pl.positions[step] * cfg.oversample
            targets = [TweezerTarget(x=c[0], y=c[1]) for c in coords]
            run_cfg = SynthesisConfig(
                slm_size=cfg.slm_size, oversample=cfg.oversample,
                iterations=cfg.iterations,
                refine_iterations=cfg.refine_iterations,
                seed=int(rng.integers(0, 2 ** 31)),
                waist=cfg.waist, window_radius=cfg.window_radius,
                aperture=cfg.aperture, subpixel_mode=cfg.subpixel_mode)
            holo, report = wgs(targets, run_cfg)
            phases, _ = extract_phases(holo, coords, run_cfg)
            recs = tuple(TweezerRecord(x=c[0], y=c[1], phase=float(p))
                         for c, p in zip(coords, phases))
            a_in, phi_in = encode_inputs(recs, cfg.slm_size, cfg.oversample)
            # expand the hologram crop back onto the synthesis grid
            a_lab, phi_lab = make_label(holo.values, cfg.slm_size)
        except Exception:
            generate_samples.skipped += 1
            continue
        yield Sample(tweezers=recs, a_input=a_in, phi_input=phi_in,
                     a_label=a_lab, phi_label=phi_lab)


def write_sample(stream, sample: Sample) -> None:
    n = sample.n
    stream.write(_SAMPLE_HEADER.pack(SAMPLE_MAGIC, SAMPLE_VERSION, n,
                                     len(sample.tweezers)))
    for t in sample.tweezers:
        stream.write(_TWEEZER_RECORD.pack(t.x, t.y, t.phase, t.amp))
    for plane in (sample.a_input, sample.phi_input,
                  sample.a_label, sample.phi_label):
        if plane.shape != (n, n):
            raise DatasetError("sample planes disagree in shape")
        stream.write(np.ascontiguousarray(
            plane.astype(np.float32)).tobytes())


def read_sample(stream) -> Sample:
    magic, version, n, count = _SAMPLE_HEADER.unpack(
        formats._read_exact(stream, _SAMPLE_HEADER.size))
    if magic != SAMPLE_MAGIC:
        raise formats.BadMagic(f"bad magic {magic!r}")
    if version != SAMPLE_VERSION:
        raise formats.UnsupportedVersion(f"unsupported TWZS version "
                                         f"{version}")
    tweezers = []
    for _ in range(count):
        x, y, phase, amp = _TWEEZER_RECORD.unpack(
            formats._read_exact(stream, _TWEEZER_RECORD.size))
        tweezers.append(TweezerRecord(x=x, y=y, phase=phase, amp=amp))
    planes = []
    for _ in range(4):
        raw = formats._read_exact(stream, n * n * 4)
        planes.append(np.frombuffer(raw, dtype=np.float32).reshape(n, n))
    return Sample(tweezers=tuple(tweezers), a_input=planes[0],
                  phi_input=planes[1], a_label=planes[2],
                  phi_label=planes[3])
