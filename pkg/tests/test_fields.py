import numpy as np
import pytest

from twzr.fields import (ComplexField, FieldError, PhaseGrid, TransitionSpec,
                         analytic_tweezer_field, cfft2, cifft2, circular_std,
                         crop_center, disk_aperture, fresnel_phase,
                         measure_tweezers, pad_to, propagate,
                         propagate_at_defocus, quantize_phase,
                         transition_field, wrap_phase)


def test_cfft2_is_unitary(rng):
    a = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    f = cfft2(a)
    assert np.isclose(np.sum(np.abs(a) ** 2), np.sum(np.abs(f) ** 2))
    assert np.allclose(cifft2(f), a, atol=1e-12)


def test_cfft2_centered_impulse_is_flat():
    m = 64
    a = np.zeros((m, m), dtype=np.complex128)
    a[m // 2, m // 2] = 1.0
    f = cfft2(a)
    assert np.allclose(f, f[0, 0])
    assert np.allclose(np.abs(f), 1.0 / m)


def test_cfft2_shift_theorem(rng):
    # a spot displaced by d from center picks up a linear output phase
    m = 64
    a = np.zeros((m, m), dtype=np.complex128)
    a[m // 2, m // 2 + 5] = 1.0
    f = cfft2(a)
    k = np.arange(m) - m // 2
    expected = np.exp(-2j * np.pi * 5 * k / m) / m
    assert np.allclose(f[0, :] / f[0, 0], expected / expected[0], atol=1e-10)


def test_wrap_phase_range(rng):
    x = rng.uniform(-20, 20, 1000)
    w = wrap_phase(x)
    assert np.all(w >= -np.pi) and np.all(w < np.pi)
    assert np.allclose(np.exp(1j * w), np.exp(1j * x))


def test_circular_std():
    assert circular_std(np.full(10, 0.7)) == pytest.approx(0.0, abs=1e-12)
    # wrap-invariance: the same angles shifted across the branch cut
    a = np.array([-np.pi + 0.01, np.pi - 0.01])
    assert circular_std(a) < 0.05


def test_pad_crop_roundtrip(rng):
    a = rng.normal(size=(16, 16))
    p = pad_to(a, 48)
    assert p.shape == (48, 48)
    assert np.array_equal(crop_center(p, 16), a)


def test_quantize_phase_idempotent(rng):
    v = rng.uniform(-np.pi, np.pi, (8, 8))
    q = quantize_phase(v)
    assert np.array_equal(quantize_phase(q), q)
    assert np.max(np.abs(q - v)) < 1e-11


def test_phase_grid_values_quantized(rng):
    g = PhaseGrid(rng.uniform(-np.pi, np.pi, (16, 16)))
    assert np.array_equal(g.values, quantize_phase(g.values))


def test_defocus_cancellation_bit_exact(rng):
    # composing the Fresnel lens for plane c and evaluating at plane c
    # reproduces the in-focus field bit for bit
    n = 32
    h = PhaseGrid(rng.uniform(-np.pi, np.pi, (n, n)))
    ap = disk_aperture(n)
    for c in (3.0, -7.25, 11.5):
        shifted = h.compose(fresnel_phase(n, c))
        a = propagate_at_defocus(shifted, c, ap, oversample=4)
        b = propagate(h, ap, oversample=4)
        assert np.array_equal(a.values, b.values)


def test_fresnel_phase_inverse_cancels():
    n = 32
    g = fresnel_phase(n, 5.0).compose(fresnel_phase(n, -5.0))
    assert np.array_equal(g.values, np.zeros((n, n)))


def test_measure_tweezers_recovers_analytic_spots(rng):
    m = 128
    pos = np.array([[40.25, 50.75], [80.5, 60.0], [64.0, 100.3]])
    ph = np.array([0.3, -1.2, 2.5])
    f = analytic_tweezer_field(pos, ph, m)
    mes = measure_tweezers(f, pos, window_radius=5.0)
    got = np.array([[t.x, t.y] for t in mes])
    assert np.max(np.hypot(*(got - pos).T)) < 0.05
    dphi = wrap_phase(np.array([t.phase for t in mes]) - ph)
    assert np.max(np.abs(dphi)) < 0.01


def test_measure_tweezers_rejects_overlapping_windows():
    f = analytic_tweezer_field([[50.0, 50.0]], [0.0], 128)
    with pytest.raises(FieldError):
        measure_tweezers(f, [[50.0, 50.0], [53.0, 50.0]], window_radius=5.0)


def test_measure_tweezers_rejects_empty_window():
    f = analytic_tweezer_field([[50.0, 50.0]], [0.0], 128)
    from twzr.fields import NoPeakError
    with pytest.raises(NoPeakError):
        measure_tweezers(f, [[100.0, 100.0]], window_radius=5.0)


def _spec(elapsed, r1, r2, phi1=0.0, phi2=0.0, T=1.0):
    return TransitionSpec(response_time=T, elapsed=elapsed,
                          r1=[r1], phi1=[phi1], r2=[r2], phi2=[phi2],
                          waist=2.5)


def test_transition_t0_equals_start_branch():
    s = _spec(0.0, (40.0, 40.0), (60.0, 60.0), phi1=0.7)
    e = transition_field(s, 96)
    ref = analytic_tweezer_field([(40.0, 40.0)], [0.7], 96)
    assert np.array_equal(e.values, ref.values)


def test_transition_antiphase_cancellation_at_half():
    # co-located, anti-phase: at t = T ln 2 the two branches cancel exactly
    s = _spec(np.log(2.0), (48.0, 48.0), (48.0, 48.0), phi1=0.0, phi2=np.pi)
    e = transition_field(s, 96)
    assert np.max(np.abs(e.values)) < 1e-12


def test_transition_late_time_converges():
    s = _spec(10.0, (47.0, 48.0), (48.25, 48.0))
    e = transition_field(s, 96)
    ref = analytic_tweezer_field([(48.25, 48.0)], [0.0], 96)
    resid = np.linalg.norm(e.values - ref.values) / np.linalg.norm(ref.values)
    assert resid < 5e-5


def test_propagate_rejects_bad_oversample(rng):
    h = PhaseGrid(rng.uniform(-np.pi, np.pi, (16, 16)))
    with pytest.raises(FieldError):
        propagate(h, disk_aperture(16), oversample=0)


def test_complex_field_power(rng):
    v = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    f = ComplexField(v)
    assert f.power == pytest.approx(np.sum(np.abs(v) ** 2))
