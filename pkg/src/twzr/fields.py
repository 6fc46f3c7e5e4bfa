"""Scalar-diffraction simulation of phase-only holograms.

Everything downstream (hologram synthesis, trap verification, the transition
potential) is validated against this module, so the conventions are fixed
here once:

* Grids are square numpy arrays indexed ``[y, x]`` (row-major).
* Positions are ``(x, y)`` in pixels of the expanded focal grid; the optical
  axis sits at pixel ``M // 2`` of an ``M x M`` field.
* FFTs are centered (fftshift sandwich) and unitary, so propagation conserves
  total power exactly up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as spfft

# Phase values live on a dyadic lattice of spacing 2^-40 rad (~9e-13, far
# below any physical tolerance).  On that lattice, sums of grids and shifts by
# the lattice-rounded full turn are exact in float64, which makes hologram
# composition associative and lets stacked +c/-c Fresnel lenses cancel
# bit-for-bit instead of merely to rounding error.
PHASE_LSB = 2.0 ** -40
TWO_PI_Q = np.round(2.0 * np.pi / 2.0 ** -39) * 2.0 ** -39
HALF_TURN_Q = TWO_PI_Q / 2.0


def quantize_phase(values):
    """Round phases onto the dyadic lattice used by :class:`PhaseGrid`."""
    return np.round(np.asarray(values, dtype=np.float64) / PHASE_LSB) * PHASE_LSB


def wrap_phase(values):
    """Wrap radians into the canonical half-open turn around zero.

    The wrap subtracts exact multiples of the lattice full turn, so on-lattice
    inputs stay on-lattice and wrapping is an exact bijection per residue
    class.  The canonical interval is [-HALF_TURN_Q, HALF_TURN_Q), which
    matches [-pi, pi) to ~5e-13.
    """
    v = np.asarray(values, dtype=np.float64).copy()
    k = np.floor((v + HALF_TURN_Q) / TWO_PI_Q)
    v -= k * TWO_PI_Q
    # floor can be off by one ulp at the boundary; fix up exactly
    v[v >= HALF_TURN_Q] -= TWO_PI_Q
    v[v < -HALF_TURN_Q] += TWO_PI_Q
    return v


def circular_std(angles):
    """Wrap-aware standard deviation of a set of angles (radians)."""
    a = np.asarray(angles, dtype=np.float64)
    if a.size == 0:
        return 0.0
    z = np.exp(1j * a)
    mean_angle = np.angle(np.mean(z))
    d = wrap_phase(a - mean_angle)
    return float(np.sqrt(np.mean(d * d)))


class FieldError(ValueError):
    """Invalid grid geometry or field contents."""


class NoPeakError(RuntimeError):
    """A measurement window contained less power than the floor."""

    def __init__(self, index, power):
        self.index = index
        self.power = power
        super().__init__(f"window {index}: power {power:.3g} below floor")


def _check_square(a, name):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise FieldError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise FieldError(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class PhaseGrid:
    """A square phase-only hologram, radians per pixel in [-pi, pi)."""

    values: np.ndarray

    def __post_init__(self):
        v = _check_square(self.values, "phase grid")
        v = quantize_phase(wrap_phase(v))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "PhaseGrid":
        return cls(np.zeros((n, n)))

    def compose(self, other: "PhaseGrid") -> "PhaseGrid":
        """Phase addition modulo a full turn (exact on the phase lattice)."""
        if other.n != self.n:
            raise FieldError(f"size mismatch: {self.n} vs {other.n}")
        return PhaseGrid(self.values + other.values)


@dataclass(frozen=True)
class ComplexField:
    """Sampled complex field on the expanded focal grid."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise FieldError(f"field must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise FieldError("field contains non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True)
class TweezerMeasurement:
    """One trap as seen in the focal plane."""

    x: float
    y: float
    phase: float
    power: float


@dataclass(frozen=True)
class TransitionSpec:
    """Endpoints of one SLM refresh: old and new tweezer sets plus timing."""

    response_time: float          # ms
    elapsed: float                # ms
    r1: np.ndarray                # (n, 2) positions, expanded px
    phi1: np.ndarray              # (n,) radians
    r2: np.ndarray
    phi2: np.ndarray
    waist: float = 2.5            # expanded px

    def __post_init__(self):
        if self.response_time <= 0:
            raise FieldError("response time must be positive")
        if self.elapsed < 0:
            raise FieldError("elapsed time must be non-negative")
        for name in ("r1", "r2"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64)))
        for name in ("phi1", "phi2"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def cfft2(a):
    """Centered unitary 2D FFT."""
    return spfft.fftshift(spfft.fft2(spfft.ifftshift(a), norm="ortho"))


def cifft2(a):
    """Centered unitary 2D inverse FFT."""
    return spfft.fftshift(spfft.ifft2(spfft.ifftshift(a), norm="ortho"))


def disk_aperture(n: int, radius: float | None = None):
    """Uniform circular illumination amplitude, unit total power."""
    if radius is None:
        radius = n / 2.0
    c = n / 2.0
    yy, xx = np.mgrid[0:n, 0:n]
    a = (((xx - c) ** 2 + (yy - c) ** 2) <= radius ** 2).astype(np.float64)
    return a / np.sqrt(np.sum(a ** 2))


def gaussian_aperture(n: int, waist_fraction: float = 0.45):
    """Gaussian illumination amplitude, unit total power."""
    c = n / 2.0
    w = waist_fraction * n
    yy, xx = np.mgrid[0:n, 0:n]
    a = np.exp(-((xx - c) ** 2 + (yy - c) ** 2) / w ** 2)
    return a / np.sqrt(np.sum(a ** 2))


def pad_to(a, m: int):
    """Center an N x N array in an M x M zero grid."""
    n = a.shape[0]
    if m < n:
        raise FieldError(f"cannot pad {n} down to {m}")
    out = np.zeros((m, m), dtype=a.dtype)
    lo = m // 2 - n // 2
    out[lo:lo + n, lo:lo + n] = a
    return out


def crop_center(a, n: int):
    """Central N x N block of a larger square array."""
    m = a.shape[0]
    if n > m:
        raise FieldError(f"cannot crop {m} up to {n}")
    lo = m // 2 - n // 2
    return a[lo:lo + n, lo:lo + n]


def propagate(hologram: PhaseGrid, aperture, oversample: int = 8) -> ComplexField:
    """SLM plane to focal plane: centered FFT of the zero-padded aperture field.

    The aperture grid is padded ``oversample`` times per axis before the
    transform, giving sub-pixel focal resolution.  The unitary normalization
    conserves total power exactly.
    """
    aperture = _check_square(np.asarray(aperture, dtype=np.float64), "aperture")
    if aperture.shape[0] != hologram.n:
        raise FieldError(
            f"aperture size {aperture.shape[0]} != hologram size {hologram.n}")
    if not _is_pow2(hologram.n):
        raise FieldError(f"hologram size {hologram.n} is not a power of two")
    if not _is_pow2(oversample):
        raise FieldError(f"oversample {oversample} is not a power of two")
    u = aperture * np.exp(1j * hologram.values)
    return ComplexField(cfft2(pad_to(u, oversample * hologram.n)))


def fresnel_phase(n: int, c: float) -> PhaseGrid:
    """Quadratic lens phase c * rho^2, rho = 1 at the aperture edge."""
    half = n / 2.0
    yy, xx = np.mgrid[0:n, 0:n]
    rho2 = ((xx - half) ** 2 + (yy - half) ** 2) / half ** 2
    return PhaseGrid(c * rho2)


def propagate_at_defocus(hologram: PhaseGrid, c: float, aperture,
                         oversample: int = 8) -> ComplexField:
    """Evaluate the focal field at defocus plane ``c``.

    Equivalent to propagating ``hologram`` composed with the opposite Fresnel
    lens; a hologram built as ``H.compose(fresnel_phase(n, c))`` therefore
    reproduces ``propagate(H)`` bit-identically at plane ``c``.
    """
    if c == 0:
        return propagate(hologram, aperture, oversample)
    return propagate(hologram.compose(fresnel_phase(hologram.n, -c)),
                     aperture, oversample)


def analytic_tweezer_field(positions, phases, size: int, waist: float = 2.5,
                           amplitudes=None) -> ComplexField:
    """Ideal Gaussian tweezer superposition: sum_i a_i exp(-|r-r_i|^2/w^2) e^{i phi_i}."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    phases = np.atleast_1d(np.asarray(phases, dtype=np.float64))
    if positions.shape[0] == 0:
        raise FieldError("empty target list")
    if waist <= 0:
        raise FieldError("waist must be positive")
    if amplitudes is None:
        amplitudes = np.ones(positions.shape[0])
    amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=np.float64))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.zeros((size, size), dtype=np.complex128)
    for (x, y), phi, a in zip(positions, phases, amplitudes):
        if not (0 <= x < size and 0 <= y < size):
            raise FieldError(f"target ({x}, {y}) outside {size} grid")
        r2 = (xx - x) ** 2 + (yy - y) ** 2
        out += a * np.exp(-r2 / waist ** 2) * np.exp(1j * phi)
    return ComplexField(out)


def transition_field(spec: TransitionSpec, size: int) -> ComplexField:
    """Cross-fade field during an SLM refresh.

    E(r, t) = exp(-t/T) E1(r) e^{i phi1} + (1 - exp(-t/T)) E2(r) e^{i phi2},
    with E1, E2 Gaussian spots at the old and new trap positions.
    """
    w1 = np.exp(-spec.elapsed / spec.response_time)
    e1 = analytic_tweezer_field(spec.r1, spec.phi1, size, spec.waist).values
    e2 = analytic_tweezer_field(spec.r2, spec.phi2, size, spec.waist).values
    return ComplexField(w1 * e1 + (1.0 - w1) * e2)


def _bilinear(values, x: float, y: float):
    """Bilinear sample of a 2D array at fractional (x, y)."""
    m = values.shape[0]
    x0 = int(np.clip(np.floor(x), 0, m - 2))
    y0 = int(np.clip(np.floor(y), 0, m - 2))
    fx, fy = x - x0, y - y0
    return ((1 - fx) * (1 - fy) * values[y0, x0]
            + fx * (1 - fy) * values[y0, x0 + 1]
            + (1 - fx) * fy * values[y0 + 1, x0]
            + fx * fy * values[y0 + 1, x0 + 1])


def measure_tweezers(field_obj: ComplexField, expected, window_radius: float = 5.0,
                     min_power: float = 1e-5) -> list[TweezerMeasurement]:
    """Locate traps near the expected positions.

    Position is the intensity-weighted centroid inside a circular window,
    phase the argument of the bilinearly interpolated field at that centroid,
    power the windowed fraction of total field power.  Windows must be
    pairwise disjoint; a window holding less than ``min_power`` of the total
    power raises :class:`NoPeakError`.
    """
    expected = np.atleast_2d(np.asarray(expected, dtype=np.float64))
    m = field_obj.m
    vals = field_obj.values
    total = field_obj.power
    if total <= 0:
        raise FieldError("field has no power")
    if expected.shape[0] > 1:
        d = np.sqrt(((expected[:, None, :] - expected[None, :, :]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        if np.min(d) < 2 * window_radius:
            i, j = np.unravel_index(np.argmin(d), d.shape)
            raise FieldError(
                f"windows {i} and {j} overlap (distance {d[i, j]:.2f} "
                f"< {2 * window_radius})")
    out = []
    r = int(np.ceil(window_radius))
    for idx, (ex, ey) in enumerate(expected):
        cx, cy = int(round(ex)), int(round(ey))
        if not (r <= cx < m - r and r <= cy < m - r):
            raise FieldError(f"window {idx} at ({ex}, {ey}) not inside grid")
        sub = vals[cy - r:cy + r + 1, cx - r:cx + r + 1]
        yy, xx = np.mgrid[cy - r:cy + r + 1, cx - r:cx + r + 1].astype(np.float64)
        mask = (xx - ex) ** 2 + (yy - ey) ** 2 <= window_radius ** 2
        inten = np.abs(sub) ** 2 * mask
        p = float(inten.sum())
        if p / total < min_power:
            raise NoPeakError(idx, p / total)
        x = float((inten * xx).sum() / p)
        y = float((inten * yy).sum() / p)
        phase = float(np.angle(_bilinear(vals, x, y)))
        out.append(TweezerMeasurement(x=x, y=y, phase=phase, power=p / total))
    return out
