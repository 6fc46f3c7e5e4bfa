import numpy as np
import pytest

from twzr.synthesis import SynthesisConfig


@pytest.fixture
def small_cfg():
    """Small grid: fast enough for per-test synthesis."""
    return SynthesisConfig(slm_size=64, oversample=4, iterations=30,
                           refine_iterations=2, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def separated_positions(rng, count, lo, hi, min_dist):
    """Rejection-sample positions pairwise separated by min_dist."""
    out = []
    while len(out) < count:
        p = rng.uniform(lo, hi, 2)
        if all(np.hypot(p[0] - q[0], p[1] - q[1]) > min_dist for q in out):
            out.append(p)
    return np.array(out)
