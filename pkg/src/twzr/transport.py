"""Classical atom dynamics in the time-varying transition potential.

Works in trap units: lengths in waists, energies in trap depths, time in
trap oscillation periods.  The potential is the intensity of the analytic
two-Gaussian cross-fade field, so a phase mismatch between the old and new
trap genuinely weakens the trap mid-transition.

All atoms in an ensemble integrate in lockstep (vectorized velocity Verlet);
per-cell RNG streams keep Monte Carlo tables schedule-independent.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np


class TransportError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicsParams:
    depth: float = 1.0             # U0
    waist: float = 1.0             # w
    temperature: float = 0.1       # k_B T in units of U0
    response_time_ms: float = 1.0  # T of the transition field
    refresh_ms: float = 1.0        # SLM refresh interval (1 kHz)
    trap_freq_khz: float = 50.0    # oscillation periods per ms
    dt: float = 0.02               # integrator step, trap periods
    escape_radius: float = 3.0     # waists from the destination trap
    settle_refreshes: int = 3      # how long evolve_step lets escape resolve

    def __post_init__(self):
        for name in ("depth", "waist", "response_time_ms", "refresh_ms",
                     "trap_freq_khz", "dt"):
            if getattr(self, name) <= 0:
                raise TransportError(f"{name} must be positive")
        if self.dt > 0.2:
            raise TransportError("dt must stay well below one trap period")

    @property
    def mass(self) -> float:
        # harmonic expansion of U = -U0 exp(-2 r^2 / w^2) gives
        # omega^2 = 4 U0 / (m w^2); with omega = 2 pi per period:
        return self.depth / (np.pi ** 2 * self.waist ** 2)


@dataclass
class AtomState:
    """Ensemble of classical atoms (arrays indexed by atom)."""

    positions: np.ndarray          # (n, 2), waists
    velocities: np.ndarray         # (n, 2), waists per period
    energies: np.ndarray           # (n,), units of U0, vs trap bottom
    alive: np.ndarray              # (n,) bool; dead is absorbing

    @property
    def n(self) -> int:
        return len(self.alive)


def sample_thermal(theta: float, seed, n: int = 1,
                   params: PhysicsParams = PhysicsParams()) -> AtomState:
    """Harmonic-approximation thermal ensemble at the trap bottom."""
    if not 0 <= theta < 0.5:
        raise TransportError("temperature must be in [0, 0.5) trap depths")
    rng = np.random.default_rng(seed)
    m = params.mass
    omega2 = 4.0 * params.depth / (m * params.waist ** 2)
    sx = np.sqrt(theta * params.depth / (m * omega2)) if theta else 0.0
    sv = np.sqrt(theta * params.depth / m) if theta else 0.0
    pos = rng.normal(0.0, sx, (n, 2)) if theta else np.zeros((n, 2))
    vel = rng.normal(0.0, sv, (n, 2)) if theta else np.zeros((n, 2))
    energy = 0.5 * m * (vel ** 2).sum(axis=1) + 0.5 * m * omega2 * (pos ** 2).sum(axis=1)
    return AtomState(positions=pos, velocities=vel, energies=energy,
                     alive=np.ones(n, dtype=bool))


def _force_and_potential(pos, c1, c2, r1, r2, dphi, params):
    """Gradient and value of U = -U0 |E|^2 for the cross-fade field."""
    w2 = params.waist ** 2
    d1 = pos - r1
    d2 = pos - r2
    a = (d1 ** 2).sum(axis=1) / w2
    b = (d2 ** 2).sum(axis=1) / w2
    g11 = np.exp(-2.0 * a)
    g22 = np.exp(-2.0 * b)
    g12 = np.exp(-(a + b))
    cross = 2.0 * c1 * c2 * np.cos(dphi)
    intensity = c1 * c1 * g11 + c2 * c2 * g22 + cross * g12
    # grad of intensity
    coef1 = (-4.0 * c1 * c1 * g11 - 2.0 * cross * g12)[:, None] / w2
    coef2 = (-4.0 * c2 * c2 * g22 - 2.0 * cross * g12)[:, None] / w2
    grad = coef1 * d1 + coef2 * d2
    u0 = params.depth
    return u0 * grad, -u0 * intensity


def evolve_step(state: AtomState, r1, phi1, r2, phi2,
                params: PhysicsParams = PhysicsParams(),
                duration_ms: float | None = None) -> AtomState:
    """Integrate one hologram switch and judge survival at the end.

    Velocity Verlet through the transition potential for ``duration_ms``
    (default: ``settle_refreshes`` refresh intervals, long enough for the
    cross-fade to complete and escapes to resolve).  An atom is lost when its
    final energy relative to the destination trap bottom is positive or it
    ends farther than the escape radius from the destination.
    """
    if duration_ms is None:
        duration_ms = params.settle_refreshes * params.refresh_ms
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    dphi = float(phi2) - float(phi1)
    m = params.mass
    dt = params.dt
    periods = duration_ms * params.trap_freq_khz
    n_steps = max(1, int(round(periods / dt)))
    t_scale = 1.0 / (params.trap_freq_khz * params.response_time_ms)

    live = state.alive.copy()
    pos = state.positions.copy()
    vel = state.velocities.copy()
    idx = np.where(live)[0]
    if len(idx):
        p = pos[idx]
        v = vel[idx]

        def weights(step):
            c1 = np.exp(-step * dt * t_scale)
            return c1, 1.0 - c1

        c1, c2 = weights(0)
        force, _ = _force_and_potential(p, c1, c2, r1, r2, dphi, params)
        for k in range(n_steps):
            p = p + v * dt + 0.5 * force / m * dt * dt
            c1, c2 = weights(k + 1)
            new_force, _ = _force_and_potential(p, c1, c2, r1, r2, dphi, params)
            v = v + 0.5 * (force + new_force) / m * dt
            force = new_force
        # survival at final time, in the destination trap
        _, u_final = _force_and_potential(p, 0.0, 1.0, r1, r2, dphi, params)
        energy = 0.5 * m * (v ** 2).sum(axis=1) + (u_final + params.depth)
        dist = np.sqrt(((p - r2) ** 2).sum(axis=1))
        dead = (energy > params.depth) | (dist > params.escape_radius * params.waist)
        pos[idx] = p
        vel[idx] = v
        out_energy = state.energies.copy()
        out_energy[idx] = energy
        live[idx] = ~dead
    else:
        out_energy = state.energies.copy()
    return AtomState(positions=pos, velocities=vel, energies=out_energy,
                     alive=live)


def trap_energy(state: AtomState, center,
                params: PhysicsParams = PhysicsParams()) -> np.ndarray:
    """Energy above the bottom of a single static trap at ``center``."""
    center = np.asarray(center, dtype=np.float64)
    _, u = _force_and_potential(state.positions, 0.0, 1.0, center, center,
                                0.0, params)
    ke = 0.5 * params.mass * (state.velocities ** 2).sum(axis=1)
    return ke + u + params.depth


def _wilson_ci(successes: int, trials: int, z: float = 1.959964):
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class SurvivalCell:
    dr: float
    dphi: float
    n: int
    survived: int
    p: float
    ci_lo: float
    ci_hi: float


def survival_curve(dr_values, dphi_values, samples: int,
                   params: PhysicsParams = PhysicsParams(),
                   seed: int = 0) -> list[SurvivalCell]:
    """Survival probability table over single-switch step sizes.

    Each cell draws its own thermal ensemble (per-cell RNG stream derived
    from the seed and the cell indices) and performs one hologram switch of
    the given position and phase step.
    """
    if samples < 100:
        raise TransportError("need at least 100 samples per cell")
    out = []
    for i, dr in enumerate(dr_values):
        for j, dphi in enumerate(dphi_values):
            state = sample_thermal(params.temperature, [seed, i, j], samples,
                                   params)
            end = evolve_step(state, (0.0, 0.0), 0.0, (float(dr), 0.0),
                              float(dphi), params)
            k = int(end.alive.sum())
            lo, hi = _wilson_ci(k, samples)
            out.append(SurvivalCell(dr=float(dr), dphi=float(dphi), n=samples,
                                    survived=k, p=k / samples,
                                    ci_lo=lo, ci_hi=hi))
    return out


def survival_csv(cells) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["dr", "dphi", "n", "survived", "p", "ci_lo", "ci_hi"])
    for c in cells:
        w.writerow([repr(float(c.dr)), repr(float(c.dphi)), c.n, c.survived,
                    repr(float(c.p)), repr(float(c.ci_lo)),
                    repr(float(c.ci_hi))])
    return buf.getvalue()


def fit_survival_model(cells):
    """Logistic fit p(survive) = sigma(b0 + b1*dr + b2*|dphi|).

    Weighted least squares on the empirical logits; gives the engine a
    closed-form per-move survival model regenerated from simulation output,
    never hard-coded.
    """
    cells = list(cells)
    x = np.array([[1.0, c.dr, abs(c.dphi)] for c in cells])
    p = np.array([np.clip(c.p, 1.0 / (c.n + 2), 1.0 - 1.0 / (c.n + 2))
                  for c in cells])
    w = np.sqrt([c.n * pc * (1 - pc) for c, pc in zip(cells, p)])
    logit = np.log(p / (1 - p))
    beta, *_ = np.linalg.lstsq(x * w[:, None], logit * w, rcond=None)

    def model(dr, dphi):
        z = beta[0] + beta[1] * np.asarray(dr) + beta[2] * np.abs(dphi)
        return 1.0 / (1.0 + np.exp(-z))

    return beta, model


def load(lattice, p: float, seed) -> np.ndarray:
    """Independent Bernoulli(p) occupancy per site."""
    if not 0.0 <= p <= 1.0:
        raise TransportError("loading probability must be in [0, 1]")
    n = len(lattice.sites) if hasattr(lattice, "sites") else int(lattice)
    rng = np.random.default_rng(seed)
    return rng.random(n) < p
