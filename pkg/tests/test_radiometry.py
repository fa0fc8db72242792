"""Emission-model tests: frozen reference values, scaling laws, expansion error."""

import numpy as np
import pytest

from thermofuse import (
    CODATA,
    KELVIN_OFFSET,
    Emission,
    PhysicalConstants,
    affine_expand,
    band_power,
    gray_level,
    incident_power,
    integrate_spectral_density,
    planck_spectral_density,
)

# Reference values computed independently with 50-digit arithmetic (mpmath)
# from the same constants, then rounded to float64.
PLANCK_300K_10UM = 31177270.203730345   # W m^-3
BAND_300K = 459.300327939               # W m^-2
INTEGRAL_300K = 459.29777376535488      # band-limited to [0.1 um, 1 mm]
WIEN_B = 2.8977719551851727e-3          # m*K displacement constant
# sup over dT in [-30, 30] of |affine - quartic| / quartic at T0 = 300 K,
# attained at dT = -30 where it equals 187/2187 exactly.
AFFINE_WORST_REL_300K_30K = 0.08550525834476452


def test_kelvin_offset_is_exact():
    assert KELVIN_OFFSET == 273.15


def test_planck_reference_value():
    assert planck_spectral_density(300.0, 10e-6) == pytest.approx(
        PLANCK_300K_10UM, rel=1e-12
    )


def test_planck_vectorized_matches_scalar():
    rng = np.random.default_rng(1)
    ts = rng.uniform(200.0, 400.0, size=17)
    lams = rng.uniform(2e-6, 20e-6, size=17)
    vec = planck_spectral_density(ts, lams)
    scal = np.array([planck_spectral_density(t, l) for t, l in zip(ts, lams)])
    assert np.allclose(vec, scal, rtol=1e-13, atol=0.0)


def test_planck_peak_follows_displacement_law():
    for t in (250.0, 300.0, 350.0):
        lam = np.geomspace(1e-6, 1e-4, 20001)
        dens = planck_spectral_density(t, lam)
        assert lam[np.argmax(dens)] == pytest.approx(WIEN_B / t, rel=1e-3)


def test_planck_monotone_in_temperature():
    lam = np.geomspace(1e-6, 1e-3, 64)
    assert np.all(
        planck_spectral_density(320.0, lam) > planck_spectral_density(280.0, lam)
    )


def test_planck_exponential_suppression_underflows_cleanly():
    # Large h*c/(lambda*k*T): the value drops below float range; the safe
    # form underflows to zero instead of overflowing or producing NaN.
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        assert planck_spectral_density(1.0, 1e-6) == 0.0
        small = planck_spectral_density(300.0, 1e-9)
    assert small == 0.0
    suppressed = [planck_spectral_density(t, 1e-6) for t in (40.0, 30.0, 20.0)]
    assert suppressed[0] >= suppressed[1] >= suppressed[2] >= 0.0


def test_planck_long_wavelength_limit_is_finite():
    big = planck_spectral_density(300.0, 1.0)
    assert np.isfinite(big) and big > 0


def test_planck_rejects_bad_domain():
    with pytest.raises(ValueError):
        planck_spectral_density(0.0, 10e-6)
    with pytest.raises(ValueError):
        planck_spectral_density(300.0, 0.0)
    with pytest.raises(ValueError):
        planck_spectral_density(-5.0, 10e-6)


def test_band_power_reference_value():
    assert band_power(Emission(300.0)) == pytest.approx(BAND_300K, rel=1e-14)


def test_band_power_zero_emissivity():
    assert band_power(Emission(300.0, emissivity=0.0)) == 0.0


def test_band_power_doubling_temperature_multiplies_by_16():
    rng = np.random.default_rng(2)
    for _ in range(20):
        t = rng.uniform(100.0, 400.0)
        ratio = band_power(Emission(2.0 * t)) / band_power(Emission(t))
        assert ratio == pytest.approx(16.0, rel=1e-12)


def test_band_power_linear_in_emissivity():
    full = band_power(Emission(300.0, emissivity=1.0))
    half = band_power(Emission(300.0, emissivity=0.5))
    assert half == pytest.approx(0.5 * full, rel=1e-15)


def test_incident_power_scales_with_collection_factor():
    em1 = Emission(300.0, emissivity=0.8, gamma=1.0)
    em2 = Emission(300.0, emissivity=0.8, gamma=2.0)
    assert incident_power(em1) == pytest.approx(
        band_power(Emission(300.0, emissivity=0.8)), rel=1e-15
    )
    assert incident_power(em2) == pytest.approx(2.0 * incident_power(em1), rel=1e-15)


def test_incident_power_product_form():
    rng = np.random.default_rng(3)
    for _ in range(50):
        t = rng.uniform(200.0, 400.0)
        e = rng.uniform(0.1, 1.0)
        g = rng.uniform(1e-6, 1e-2)
        em = Emission(t, emissivity=e, gamma=g)
        assert incident_power(em) == pytest.approx(
            g * e * CODATA.sigma * t**4, rel=1e-14
        )


def test_integrated_density_approaches_band_power():
    total = band_power(Emission(300.0))
    integral = integrate_spectral_density(300.0)
    rel = abs(integral - total) / total
    assert rel < 1e-5   # documented truncation bound of the default band
    assert rel > 1e-7   # the truncation is a real, nonzero effect
    assert integral == pytest.approx(INTEGRAL_300K, rel=1e-9)


def test_integral_truncation_bound_across_temperatures():
    for t in (250.0, 300.0, 350.0):
        total = band_power(Emission(t))
        integral = integrate_spectral_density(t)
        assert abs(integral - total) / total < 1e-5


def test_affine_expansion_exact_at_reference():
    em = Emission(300.0, emissivity=0.9, gamma=2e-3)
    co = affine_expand(300.0, em)
    # The affine model evaluates gain * dT + offset; at dT = 0 it must
    # reproduce the quartic law exactly.
    assert co.offset == incident_power(em)


def test_affine_gain_offset_ratio():
    rng = np.random.default_rng(4)
    for _ in range(20):
        t0 = rng.uniform(200.0, 400.0)
        co = affine_expand(t0, Emission(t0, emissivity=0.7))
        assert co.gain / co.offset == pytest.approx(4.0 / t0, rel=1e-12)


def test_affine_expansion_worst_error_over_30K_band():
    # The first-order model drifts from the quartic law as |dT| grows; the
    # sup of the relative error over [-30, 30] K around 300 K was computed
    # once with an extended-precision oracle and frozen here.
    co = affine_expand(300.0, Emission(300.0))
    dts = np.linspace(-30.0, 30.0, 6001)
    exact = CODATA.sigma * (300.0 + dts) ** 4
    approx = co.gain * dts + co.offset
    rel = np.abs(approx - exact) / exact
    assert dts[np.argmax(rel)] == -30.0
    assert rel.max() == pytest.approx(AFFINE_WORST_REL_300K_30K, rel=1e-9)
    assert rel.max() < 0.0856


def test_affine_gain_matches_numerical_derivative():
    co = affine_expand(320.0, Emission(320.0, emissivity=0.8, gamma=0.5))
    h = 1e-3
    num = (
        incident_power(Emission(320.0 + h, emissivity=0.8, gamma=0.5))
        - incident_power(Emission(320.0 - h, emissivity=0.8, gamma=0.5))
    ) / (2.0 * h)
    assert co.gain == pytest.approx(num, rel=1e-7)


def test_affine_expand_rejects_bad_reference():
    with pytest.raises(ValueError):
        affine_expand(0.0, Emission(300.0))


def test_gray_level_zero_gain_leaves_only_offset():
    out = gray_level(37.0, 12.0, lambda ta: 0.0, lambda ta: 3.0 * ta)
    assert out == 36.0


def test_gray_level_is_affine_in_object_signal():
    gain_fn = lambda ta: 2.0 + 0.1 * ta
    offset_fn = lambda ta: 100.0 - ta
    t1, t2 = 4.0, 9.0
    ta = 10.0
    i1 = gray_level(t1, ta, gain_fn, offset_fn)
    i2 = gray_level(t2, ta, gain_fn, offset_fn)
    # slope and intercept recover the model exactly
    slope = (i2 - i1) / (t2 - t1)
    assert slope == pytest.approx(gain_fn(ta), rel=1e-15)
    assert i1 - slope * t1 == pytest.approx(offset_fn(ta), rel=1e-12)


def test_gray_level_broadcasts_over_maps():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = gray_level(x, 10.0, lambda ta: 3.0, lambda ta: 90.0)
    assert np.array_equal(out, 3.0 * x + 90.0)


def test_validation_of_inputs():
    with pytest.raises(ValueError):
        Emission(-1.0)
    with pytest.raises(ValueError):
        Emission(300.0, emissivity=1.5)
    with pytest.raises(ValueError):
        Emission(300.0, gamma=0.0)
    with pytest.raises(ValueError):
        PhysicalConstants(h=-1e-34)
