"""Classical hologram generators.

Two generators cover the two jobs the rearrangement engine needs:

* :func:`wgs` — weighted Gerchberg-Saxton with per-trap power feedback, for
  uniform arrays where trap phases are free.
* :func:`synthesize_pinned` — sub-pixel position *and* phase control.  The
  target spots are splatted bilinearly onto the expanded focal grid, inverse
  transformed, and optionally refined with pinned-constraint iterations.
  Cost is FFT-dominated and independent of the trap count.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .fields import (
    PhaseGrid,
    _bilinear,
    cfft2,
    cifft2,
    crop_center,
    disk_aperture,
    gaussian_aperture,
    measure_tweezers,
    pad_to,
    propagate,
)


class SynthesisError(ValueError):
    pass


class EmptyTargetsError(SynthesisError):
    pass


class UnspecifiedPhaseError(SynthesisError):
    pass


@dataclass(frozen=True)
class TweezerTarget:
    """One requested trap on the expanded focal grid.

    ``phase=None`` leaves the trap phase free (WGS mode).
    """

    x: float
    y: float
    phase: float | None = None
    weight: float = 1.0


@dataclass(frozen=True)
class SynthesisConfig:
    slm_size: int = 256            # hologram resolution N
    oversample: int = 8            # expanded grid M = oversample * N
    iterations: int = 50           # WGS feedback iterations
    refine_iterations: int = 2     # pinned-GS refinement passes
    seed: int = 0
    uniformity_weighting: bool = True
    weight_exponent: float = 0.5   # eta in w *= (<P>/P)^eta
    phase_pinning: bool = True
    waist: float = 2.5             # expanded px, for separation warnings
    window_radius: float = 5.0     # feedback / report measurement window
    aperture: str = "disk"         # "disk" | "gaussian"
    subpixel_mode: str = "splat"   # "splat" | "ramps"
    uniformity_threshold: float = 0.01

    def __post_init__(self):
        if self.iterations < 0 or self.refine_iterations < 0:
            raise SynthesisError("iteration counts must be >= 0")
        for name in ("slm_size", "oversample"):
            v = getattr(self, name)
            if v < 1 or (v & (v - 1)) != 0:
                raise SynthesisError(f"{name} must be a power of two, got {v}")

    @property
    def expanded_size(self) -> int:
        return self.slm_size * self.oversample

    def make_aperture(self):
        if self.aperture == "gaussian":
            return gaussian_aperture(self.slm_size)
        return disk_aperture(self.slm_size)


@dataclass
class SynthesisReport:
    """Measured quality of a synthesized hologram."""

    positions: np.ndarray          # (n, 2) measured (x, y)
    phases: np.ndarray             # (n,)
    powers: np.ndarray             # (n,) windowed power fractions
    uniformity: float
    efficiency: float
    iterations: int
    converged: bool

    def to_json(self) -> str:
        d = {
            "positions": np.asarray(self.positions).tolist(),
            "phases": np.asarray(self.phases).tolist(),
            "powers": np.asarray(self.powers).tolist(),
            "uniformity": self.uniformity,
            "efficiency": self.efficiency,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        return json.dumps(d, sort_keys=True)


def uniformity(powers) -> float:
    """std/mean of per-trap powers."""
    p = np.asarray(powers, dtype=np.float64)
    if p.size == 0:
        raise EmptyTargetsError("uniformity of an empty power list")
    return float(p.std() / p.mean())


def _target_arrays(targets, m, require_phase=False):
    if len(targets) == 0:
        raise EmptyTargetsError("no targets")
    pos = np.array([[t.x, t.y] for t in targets], dtype=np.float64)
    wts = np.array([t.weight for t in targets], dtype=np.float64)
    phs = np.array(
        [0.0 if t.phase is None else t.phase for t in targets], dtype=np.float64)
    if require_phase and any(t.phase is None for t in targets):
        raise UnspecifiedPhaseError("pinned synthesis requires every phase")
    if np.any(pos < 1) or np.any(pos >= m - 1):
        raise SynthesisError("target outside expanded grid")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(wts))):
        raise SynthesisError("non-finite target")
    return pos, phs, wts


def _warn_close(pos, waist):
    if pos.shape[0] < 2:
        return
    from scipy.spatial import cKDTree

    d, _ = cKDTree(pos).query(pos, k=2)
    dmin = float(d[:, 1].min())
    if dmin < 3.0 * waist:
        warnings.warn(
            f"targets only {dmin:.2f} px apart (< 3w = {3 * waist:.2f}); "
            "cross-talk will degrade accuracy", stacklevel=3)


def splat_subpixel(positions, phases, weights, m):
    """Bilinear complex splat of sub-pixel spots onto an m x m grid."""
    positions = np.atleast_2d(positions)
    x0 = np.floor(positions[:, 0]).astype(int)
    y0 = np.floor(positions[:, 1]).astype(int)
    fx = positions[:, 0] - x0
    fy = positions[:, 1] - y0
    c = np.asarray(weights) * np.exp(1j * np.asarray(phases))
    out = np.zeros((m, m), dtype=np.complex128)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            np.add.at(out, (y0 + dy, x0 + dx), c * wx * wy)
    return out


def _ramp_superposition(positions, phases, weights, n, m):
    """Exact sub-pixel back-superposition of plane-wave ramps on the aperture.

    O(traps * N^2); the splat path approximates this in constant time.
    """
    idx = np.arange(n, dtype=np.float64) - n / 2.0
    vv, uu = np.meshgrid(idx, idx, indexing="ij")
    acc = np.zeros((n, n), dtype=np.complex128)
    for (x, y), ph, w in zip(np.atleast_2d(positions), phases, weights):
        arg = 2.0 * np.pi * ((x - m / 2.0) * uu + (y - m / 2.0) * vv) / m + ph
        acc += w * np.exp(1j * arg)
    return acc


def _window_powers(intensity, centers, radius):
    r = int(np.ceil(radius))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    mask = (dx ** 2 + dy ** 2) <= radius ** 2
    dyf, dxf = dy[mask], dx[mask]
    ys = centers[:, 1][:, None] + dyf[None, :]
    xs = centers[:, 0][:, None] + dxf[None, :]
    return intensity[ys, xs].sum(axis=1)


def _report(hologram, aperture, cfg, pos, total_iterations):
    field = propagate(hologram, aperture, cfg.oversample)
    meas = measure_tweezers(field, pos, cfg.window_radius)
    powers = np.array([m.power for m in meas])
    u = uniformity(powers)
    return SynthesisReport(
        positions=np.array([[m.x, m.y] for m in meas]),
        phases=np.array([m.phase for m in meas]),
        powers=powers,
        uniformity=u,
        efficiency=float(powers.sum()),
        iterations=total_iterations,
        converged=bool(u < cfg.uniformity_threshold),
    )


def wgs(targets, cfg: SynthesisConfig = SynthesisConfig(), report: bool = True):
    """Weighted Gerchberg-Saxton with free trap phases.

    Each iteration transforms the aperture field forward, reads the power in
    a window around each target's nearest expanded pixel, updates the trap
    weights toward uniformity, and back-propagates only the weighted spots
    with their current phases (amplitude everywhere else is unconstrained).
    """
    m = cfg.expanded_size
    pos, _, wts = _target_arrays(targets, m)
    _warn_close(pos, cfg.waist)
    aperture = cfg.make_aperture()
    apad = pad_to(aperture, m)
    centers = np.round(pos).astype(int)

    rng = np.random.default_rng(cfg.seed)
    w = wts.copy()
    spot = np.zeros((m, m), dtype=np.complex128)
    spot[centers[:, 1], centers[:, 0]] = w * np.exp(
        1j * rng.uniform(-np.pi, np.pi, len(targets)))
    phase = np.angle(cifft2(spot))

    for _ in range(cfg.iterations):
        f = cfft2(apad * np.exp(1j * phase))
        spot_fields = f[centers[:, 1], centers[:, 0]]
        if cfg.uniformity_weighting:
            p = _window_powers(np.abs(f) ** 2, centers, cfg.window_radius)
            w *= (p.mean() / p) ** cfg.weight_exponent
        back = np.zeros_like(f)
        back[centers[:, 1], centers[:, 0]] = w * np.exp(
            1j * np.angle(spot_fields))
        phase = np.angle(cifft2(back))

    hologram = PhaseGrid(crop_center(phase, cfg.slm_size))
    rep = _report(hologram, aperture, cfg, pos, cfg.iterations) if report else None
    return hologram, rep


def synthesize_pinned(targets, cfg: SynthesisConfig = SynthesisConfig(),
                      report: bool = True):
    """Hologram with every trap's sub-pixel position and phase prescribed.

    The initial hologram is the phase of the back-propagated target spot
    pattern — sub-pixel coordinates enter through bilinear splat weights
    (``subpixel_mode="splat"``, constant-time) or exact plane-wave ramp
    frequencies (``"ramps"``).  Refinement passes re-impose both the splat
    amplitude and phase at target pixels while leaving the rest of the focal
    plane free.
    """
    m = cfg.expanded_size
    pos, phs, wts = _target_arrays(targets, m, require_phase=True)
    _warn_close(pos, cfg.waist)
    aperture = cfg.make_aperture()

    tgt = splat_subpixel(pos, phs, wts, m)
    if cfg.subpixel_mode == "ramps":
        u = _ramp_superposition(pos, phs, wts, cfg.slm_size, m)
        phase = np.angle(u)
    else:
        phase = crop_center(np.angle(cifft2(tgt)), cfg.slm_size)

    if cfg.refine_iterations > 0:
        apad = pad_to(aperture, m)
        mask = tgt != 0
        tgt_unit = np.zeros_like(tgt)
        tgt_unit[mask] = tgt[mask] / np.abs(tgt[mask]).mean()
        xphase = pad_to(phase, m) if phase.shape[0] != m else phase
        for _ in range(cfg.refine_iterations):
            f = cfft2(apad * np.exp(1j * xphase))
            scale = np.abs(f[mask]).mean()
            f = np.where(mask, tgt_unit * scale, f)
            xphase = np.angle(cifft2(f))
        phase = crop_center(xphase, cfg.slm_size)

    hologram = PhaseGrid(phase)
    rep = _report(hologram, aperture, cfg, pos,
                  cfg.refine_iterations) if report else None
    return hologram, rep


def synthesize_multiplane(layer_targets, fresnel_coeffs,
                          cfg: SynthesisConfig = SynthesisConfig()):
    """One phase mask forming pinned traps in several defocus planes.

    Each layer's spots are back-propagated through its own Fresnel lens; the
    complex layer fields sum before the phase-only projection.  Refinement
    alternates parallel projections: re-impose every layer's splat at its
    own plane, back-transform each through its lens, and rephase the
    average.
    """
    if len(layer_targets) != len(fresnel_coeffs):
        raise SynthesisError("one Fresnel coefficient per layer")
    m = cfg.expanded_size
    n = cfg.slm_size
    aperture = cfg.make_aperture()
    apad = pad_to(aperture, m)
    splats = []
    lenses = []
    from .fields import fresnel_phase
    for targets, c in zip(layer_targets, fresnel_coeffs):
        pos, phs, wts = _target_arrays(targets, m, require_phase=True)
        _warn_close(pos, cfg.waist)
        splats.append(splat_subpixel(pos, phs, wts, m))
        lenses.append(np.exp(1j * pad_to(fresnel_phase(n, c).values, m)))
    acc = np.zeros((m, m), dtype=np.complex128)
    for tgt, lens in zip(splats, lenses):
        acc += cifft2(tgt) * lens
    xphase = np.angle(acc)
    for _ in range(cfg.refine_iterations):
        acc = np.zeros((m, m), dtype=np.complex128)
        slm = apad * np.exp(1j * xphase)
        for tgt, lens in zip(splats, lenses):
            f = cfft2(slm * np.conj(lens))
            mask = tgt != 0
            scale = np.abs(f[mask]).mean() / np.abs(tgt[mask]).mean()
            f = np.where(mask, tgt * scale, f)
            acc += cifft2(f) * lens
        xphase = np.angle(acc)
    return PhaseGrid(crop_center(xphase, n))


def extract_phases(hologram: PhaseGrid, coords, cfg: SynthesisConfig = SynthesisConfig()):
    """Phases of the propagated field at the given expanded-grid coordinates.

    Returns ``(phases, powers)``; a near-zero power marks an extraction over
    a dark region whose phase is numerically meaningless.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    m = cfg.expanded_size
    if np.any(coords < 0) or np.any(coords >= m - 1):
        raise SynthesisError("coordinate outside expanded grid")
    field = propagate(hologram, cfg.make_aperture(), cfg.oversample)
    vals = field.values
    total = field.power
    phases = np.empty(coords.shape[0])
    powers = np.empty(coords.shape[0])
    r = int(np.ceil(cfg.window_radius))
    inten = np.abs(vals) ** 2
    for i, (x, y) in enumerate(coords):
        phases[i] = np.angle(_bilinear(vals, x, y))
        cx = int(np.clip(round(x), r, m - r - 1))
        cy = int(np.clip(round(y), r, m - r - 1))
        powers[i] = inten[cy - r:cy + r + 1, cx - r:cx + r + 1].sum() / total
    return phases, powers
