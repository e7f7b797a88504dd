from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from quasiham.approximations import (
    SpectralDensity,
    fit_rate_distribution,
    gaussian_asymptotics,
    gaussian_envelope,
    gaussian_relaxation,
    gaussian_relaxation_fluctuators,
    gaussian_single_closed,
    lorentzian_spectrum,
    redfield_envelope,
    redfield_rate,
)
from quasiham.dephasing_exact import relaxation_many, short_time_coefficients
from quasiham.errors import FitFailureError, IntegrationError


def test_lorentzian_zero_frequency_and_tail():
    g, gamma = 0.3, 0.2
    assert lorentzian_spectrum([(g, gamma)], 0.0) == pytest.approx(g * g / (2 * np.pi * gamma), rel=1e-15)
    w = np.array([1e3, 1e4, 1e5])
    tail = lorentzian_spectrum([(g, gamma)], w) * w**2
    np.testing.assert_allclose(tail, 2 * g * g * gamma / np.pi, rtol=1e-5)


def test_empty_spectrum_zero():
    np.testing.assert_array_equal(lorentzian_spectrum([], np.linspace(0, 5, 4)), 0.0)


def test_one_over_f_mid_band():
    g0 = 0.01
    gammas = np.geomspace(1e-3, 1e1, 4 * 12 + 1)  # 12 per decade over 4 decades
    f = [(g0, gm) for gm in gammas]
    w = np.geomspace(2e-3 * 10, 2e1 / 10, 40)
    ws = lorentzian_spectrum(f, w) * w
    assert ws.max() / ws.min() < 1.1


@given(st.lists(st.tuples(st.floats(0, 3), st.floats(0.01, 10)), max_size=6), st.floats(-100, 100))
def test_spectrum_even_and_non_negative(f, w):
    a = lorentzian_spectrum(f, w)
    assert a >= 0
    assert a == lorentzian_spectrum(f, -w)
    s = SpectralDensity.from_fluctuators(f)
    assert s(w) == s(-w)


@pytest.mark.parametrize("f", [[(0.3, 0.2)], [(0.01, 1e-3), (1.0, 5.0), (0.2, 0.04)]])
def test_total_power(f):
    s = SpectralDensity.from_fluctuators(f)
    assert s.total_power() == pytest.approx(sum(g * g for g, _ in f), rel=1e-2)


def test_gaussian_zero_time():
    s = SpectralDensity.from_fluctuators([(0.3, 0.2)])
    assert gaussian_relaxation(s, 0.0) == 0.0
    assert gaussian_single_closed(0.3, 0.2, 0.0) == 0.0


@pytest.mark.parametrize("g, gamma", [(0.01, 0.2), (1.0, 1.0), (5.0, 0.3)])
def test_quadrature_matches_closed_form(g, gamma):
    s = SpectralDensity.from_fluctuators([(g, gamma)])
    t = np.array([0.0, 1e-4, 0.1, 1.0, 4.0, 20.0]) / gamma
    np.testing.assert_allclose(gaussian_relaxation(s, t), gaussian_single_closed(g, gamma, t), atol=1e-8, rtol=1e-8)


def test_quadrature_short_time_and_monotone():
    f = [(0.3, 0.2), (0.1, 2.0)]
    s = SpectralDensity.from_fluctuators(f)
    c2 = 0.5 * (0.09 + 0.01)
    t = np.array([1e-4, 1e-3])
    np.testing.assert_allclose(gaussian_relaxation(s, t), c2 * t**2, rtol=1e-3)
    t = np.linspace(0, 30, 25)
    vals = gaussian_relaxation(s, t)
    assert np.all(vals >= 0) and np.all(np.diff(vals) >= 0)


def test_tabulated_spectrum():
    f = [(0.3, 0.2)]
    w = np.geomspace(1e-4, 1e3, 4000)
    s = SpectralDensity.tabulated(w, lorentzian_spectrum(f, w), omega_uv=1e3)
    t = 5.0
    # missing the 1/w^2 tail beyond the cutoff costs about 2 * 2 g^2 gamma / (pi uv) in Gamma
    tail = 4 * 0.09 * 0.2 / (np.pi * 1e3)
    assert gaussian_relaxation(s, t) == pytest.approx(gaussian_single_closed(0.3, 0.2, t) - tail, rel=1e-3)
    with pytest.raises(IntegrationError):
        gaussian_relaxation(SpectralDensity.tabulated(w, lorentzian_spectrum(f, w)), 1.0)
    with pytest.raises(ValueError):
        SpectralDensity.tabulated([0.0, 1.0], [1.0, -1.0])


def test_closed_form_examples():
    gamma = 0.5
    assert gaussian_single_closed(gamma, gamma, 1 / gamma) == pytest.approx(0.25 * (np.exp(-2) + 1), rel=1e-14)
    assert 0.25 * (np.exp(-2) + 1) == pytest.approx(0.28384, abs=1e-5)
    g = 0.2
    t = np.array([1e4, 2e4])
    slope = np.diff(gaussian_single_closed(g, gamma, t))[0] / 1e4
    assert slope == pytest.approx(g * g / (2 * gamma), rel=1e-12)


def test_closed_form_series_branch_continuous():
    g, gamma = 0.7, 1.3
    x_star = 1e-3 / (2 * gamma)
    below = gaussian_single_closed(g, gamma, x_star * (1 - 1e-9))
    above = gaussian_single_closed(g, gamma, x_star * (1 + 1e-9))
    assert above == pytest.approx(below, rel=1e-8)


def test_asymptotic_branches():
    g, gamma = 0.3, 0.2
    f = [(g, gamma)]
    s = SpectralDensity.from_fluctuators(f)
    long = gaussian_asymptotics(s, 1e4)
    assert long.branch == "long"
    assert long.exact_long_slope == pytest.approx(g * g / (2 * gamma), rel=1e-14)
    assert long.value == pytest.approx(1e4 * lorentzian_spectrum(f, 0.0))
    short = gaussian_asymptotics(s, 1e-3)
    assert short.branch == "short"
    assert short.value == pytest.approx(short_time_coefficients(f)[0] * 1e-6, rel=1e-6)
    mid = gaussian_asymptotics(s, 3.0)
    assert mid.branch == "out_of_regime" and np.isnan(mid.value)


def test_redfield_examples():
    assert redfield_rate([(0.01, 0.2)]) == pytest.approx(2.5e-4, rel=1e-14)
    assert redfield_rate([(0.0, 0.2)]) == 0.0
    assert redfield_rate([(0.3, 0.2)] * 2) == pytest.approx(2 * redfield_rate([(0.3, 0.2)]))
    assert redfield_envelope([(0.01, 0.2)], 4000.0) == pytest.approx(np.exp(-1.0))


def test_gaussian_fluctuators_additive():
    f = [(0.3, 0.2), (0.1, 2.0)]
    t = np.linspace(0, 10, 7)
    np.testing.assert_allclose(
        gaussian_relaxation_fluctuators(f, t),
        gaussian_single_closed(0.3, 0.2, t) + gaussian_single_closed(0.1, 2.0, t),
    )


@pytest.mark.parametrize("ratio", [0.01, 0.05, 0.1])
def test_gaussian_accurate_in_weak_regime(ratio):
    gamma = 1.0
    f = [(ratio * gamma, gamma)]
    t = np.concatenate([np.geomspace(1e-3, 1e5, 2000)]) / gamma
    diff = np.abs(gaussian_envelope(f, t) - relaxation_many(f, 0.0, t).envelope)
    assert diff.max() < 0.01


@pytest.mark.parametrize("ratio", [5.0, 10.0, 50.0])
def test_gaussian_fails_in_strong_regime(ratio):
    f = [(ratio, 1.0)]
    t = np.linspace(0, 10, 2001)
    diff = np.abs(gaussian_envelope(f, t) - relaxation_many(f, 0.0, t).envelope)
    assert diff.max() > 0.1


def test_fit_single_rate():
    g0, gstar = 0.1, 0.3
    w = np.geomspace(1e-3, 1e2, 60)
    fit = fit_rate_distribution(w, lorentzian_spectrum([(g0, gstar)], w), g0)
    assert np.all(fit.weights >= 0)
    assert fit.mass_fraction(gstar / np.sqrt(10 ** 0.5), gstar * np.sqrt(10 ** 0.5)) >= 0.9
    assert fit.residual < 0.01


def test_fit_two_modes():
    g0 = 0.1
    w = np.geomspace(1e-4, 1e3, 80)
    s = lorentzian_spectrum([(g0, 1e-2), (g0, 10.0)], w)
    fit = fit_rate_distribution(w, s, g0)
    lo = fit.mass_fraction(1e-2 / 3, 1e-2 * 3)
    hi = fit.mass_fraction(10 / 3, 10 * 3)
    assert lo > 0.3 and hi > 0.3 and lo + hi > 0.9
    between = fit.mass_fraction(0.1, 1.0)
    assert between < 0.05


def test_fit_errors():
    w = np.geomspace(1e-2, 1e2, 20)
    s = lorentzian_spectrum([(0.1, 1.0)], w)
    s[3] = -1.0
    with pytest.raises(ValueError):
        fit_rate_distribution(w, s, 0.1)
    # a rising spectrum cannot be a non-negative mix of Lorentzians
    with pytest.raises(FitFailureError) as info:
        fit_rate_distribution(w, 1.0 + w**2, 0.1)
    assert info.value.diagnostics["residual"] > 0.05


def test_fit_even_input_accepted():
    w = np.geomspace(1e-2, 1e2, 30)
    s = lorentzian_spectrum([(0.1, 1.0)], w)
    fit = fit_rate_distribution(np.concatenate([-w[::-1], w]), np.concatenate([s[::-1], s]), 0.1)
    assert fit.mass_fraction(1 / 3, 3) > 0.9
    with pytest.raises(ValueError):
        fit_rate_distribution(np.concatenate([-w[::-1], w]), np.concatenate([2 * s[::-1], s]), 0.1)


def test_quadrature_oracle_independent_of_module():
    g, gamma, t = 0.4, 0.7, 3.0
    val, _ = integrate.quad(lambda w: 2 * lorentzian_spectrum([(g, gamma)], w) * (1 - np.cos(w * t)) / w**2,
                            0, np.inf, limit=500)
    assert gaussian_single_closed(g, gamma, t) == pytest.approx(val, rel=1e-7)
