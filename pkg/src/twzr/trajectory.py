"""Division of atom moves into small interpolated steps.

Every matched tweezer travels along a straight line while its phase follows
the shortest circular arc; the step count is raised until both the per-step
displacement and per-step phase change respect the configured limits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import wrap_phase


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class StepConstraints:
    max_step: float = 1.25         # expanded px per step (0.5 * default waist)
    max_phase_step: float = 0.3    # radians per step

    def __post_init__(self):
        if self.max_step <= 0 or self.max_phase_step <= 0:
            raise TrajectoryError("step constraints must be positive")


@dataclass
class StepPlan:
    """Per-step tweezer configurations for one rearrangement round.

    ``positions`` has shape (N + 1, n, 2) and ``phases`` (N + 1, n): step 0
    is the loaded configuration of the traps kept on, step N the target
    sites.  ``prologue`` marks that unmatched traps were turned off before
    step 0, ``epilogue`` that the final hologram switches to the pre-defined
    target array.
    """

    positions: np.ndarray
    phases: np.ndarray
    amplitudes: np.ndarray
    prologue: bool = True
    epilogue: bool = True

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def n_tweezers(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class Violation:
    step: int                      # transition k -> k+1
    tweezer: int
    kind: str                      # "position" | "phase"
    amount: float


def plan(start_positions, end_positions, start_phases, end_phases,
         base_steps: int = 20,
         constraints: StepConstraints = StepConstraints(),
         amplitudes=None) -> StepPlan:
    """Linear position / shortest-arc phase interpolation in N steps.

    N = max(base_steps, ceil(longest path / max_step),
            ceil(largest circular phase gap / max_phase_step)), so the
    produced plan always validates.  Endpoints reproduce the inputs exactly;
    a phase gap of exactly pi breaks toward +pi.
    """
    p1 = np.atleast_2d(np.asarray(start_positions, dtype=np.float64))
    p2 = np.atleast_2d(np.asarray(end_positions, dtype=np.float64))
    f1 = np.atleast_1d(np.asarray(start_phases, dtype=np.float64))
    f2 = np.atleast_1d(np.asarray(end_phases, dtype=np.float64))
    if p1.shape != p2.shape or f1.shape != f2.shape or len(f1) != len(p1):
        raise TrajectoryError("endpoint arrays disagree in shape")
    n = len(p1)
    if amplitudes is None:
        amplitudes = np.ones(n)
    amplitudes = np.asarray(amplitudes, dtype=np.float64)

    path = np.sqrt(((p2 - p1) ** 2).sum(axis=1)) if n else np.zeros(0)
    gap = wrap_phase(f2 - f1)
    # break exact pi gaps toward +pi (wrap_phase canonicalizes pi to -pi)
    gap = np.where(np.isclose(np.abs(gap), np.pi), np.abs(gap), gap)

    steps = base_steps
    if n:
        steps = max(steps,
                    int(np.ceil(path.max() / constraints.max_step)),
                    int(np.ceil(np.abs(gap).max() / constraints.max_phase_step)))
    steps = max(int(steps), 1)

    positions = np.empty((steps + 1, n, 2))
    phases = np.empty((steps + 1, n))
    for k in range(steps + 1):
        tau = k / steps
        positions[k] = p1 + tau * (p2 - p1)
        phases[k] = wrap_phase(f1 + tau * gap)
    positions[0], phases[0] = p1, wrap_phase(f1)
    positions[steps], phases[steps] = p2, wrap_phase(f2)
    return StepPlan(positions=positions, phases=phases, amplitudes=amplitudes)


def validate(step_plan: StepPlan,
             constraints: StepConstraints = StepConstraints()) -> list[Violation]:
    """Every per-step displacement and circular phase change within limits."""
    out: list[Violation] = []
    for k in range(step_plan.n_steps):
        dp = step_plan.positions[k + 1] - step_plan.positions[k]
        dr = np.sqrt((dp ** 2).sum(axis=1))
        df = np.abs(wrap_phase(step_plan.phases[k + 1] - step_plan.phases[k]))
        for i in np.where(dr > constraints.max_step + 1e-12)[0]:
            out.append(Violation(step=k, tweezer=int(i), kind="position",
                                 amount=float(dr[i])))
        for i in np.where(df > constraints.max_phase_step + 1e-12)[0]:
            out.append(Violation(step=k, tweezer=int(i), kind="phase",
                                 amount=float(df[i])))
    return out
