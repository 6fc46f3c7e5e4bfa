"""Desk-scale simulator of constant-time-overhead tweezer-array assembly.

Modules:
  fields     -- scalar diffraction, phase grids, focal-plane measurement
  synthesis  -- WGS and phase-pinned hologram generation
  matching   -- optimal and block-parallel atom/target assignment
  trajectory -- interpolated multi-tweezer step plans
  transport  -- classical atom dynamics through hologram switches
  engine     -- scenarios, full assembly runs, 3D stacks, benchmarks
  dataset    -- training-sample generation and the TWZS file format
  protocol   -- TWZP wire protocol for pluggable hologram generators
  formats    -- TWZF / PLAN / PGM binary interchange
"""

from .fields import (ComplexField, FieldError, NoPeakError, PhaseGrid,
                     TransitionSpec, TweezerMeasurement)
from .matching import (Assignment, InsufficientAtomsError, MatchingError,
                       SiteLattice, block_match, decollide, exact_match,
                       select_reserve)
from .synthesis import (SynthesisConfig, SynthesisReport, TweezerTarget,
                        synthesize_multiplane, synthesize_pinned, wgs)
from .trajectory import StepConstraints, StepPlan, plan, validate
from .transport import (AtomState, PhysicsParams, SurvivalCell, evolve_step,
                        fit_survival_model, sample_thermal, survival_curve)
from .engine import (RunReport, Scenario, TimingReport, assemble,
                     assemble_3d, benchmark_scaling, makespan)

__version__ = "0.1.0"
