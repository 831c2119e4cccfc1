import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from tirepde.freq import (
    H1,
    H1_closed,
    H1_discretized,
    H2,
    H2_response,
    C_of_s,
    FrequencyResponse,
    check_small_gain,
    default_grid,
    detC_closed,
    detC_reduced,
    e1,
    e2,
    hinf_estimate,
    injection_gain,
    respond,
)


@given(st.complex_numbers(max_magnitude=0.5, allow_nan=False, allow_infinity=False))
def test_series_branches_match_quadrature(u):
    # e1(u) = int_0^1 exp(-u x) dx, e2(u) = int_0^1 x exp(-u(1-x)) dx ... both entire
    def q(f):
        re = quad(lambda x: f(x).real, 0, 1, epsabs=1e-14)[0]
        im = quad(lambda x: f(x).imag, 0, 1, epsabs=1e-14)[0]
        return re + 1j * im

    assert complex(e1(u)) == pytest.approx(q(lambda x: np.exp(-u * x)), abs=1e-12)
    assert complex(e2(u)) == pytest.approx(q(lambda x: (1 - x) * np.exp(-u * x)), abs=1e-12)


@pytest.mark.parametrize("s", [1e-3j, 1.0 + 2j, 100j, 5e3 + 1e4j])
def test_h1_three_ways(s, mats):
    closed = H1_closed(np.array([s]), mats)[0]
    np.testing.assert_allclose(H1(s, mats), closed, rtol=1e-10)
    np.testing.assert_allclose(H1_discretized(s, mats), closed, rtol=2e-5)


def test_h1_dc_gain(mats):
    # at s = 0 the steady transport profile is affine in xi
    k1, k2, lam = mats.k1, mats.k2, mats.lam
    expected = (k1 / (2 * lam) / (1 - k2 / lam))[:, None] * mats.A2
    np.testing.assert_allclose(H1_closed(np.array([0j]), mats)[0], expected, rtol=1e-12)


def test_determinant_forms(mats):
    s = np.array([0j, 3j, 40 + 70j, 1e4j])
    direct = np.array([np.linalg.det(C_of_s(x, mats)) for x in s])
    np.testing.assert_allclose(detC_closed(s, mats), direct, rtol=1e-10)
    np.testing.assert_allclose(detC_closed(s, mats), 2 / mats.params.m * detC_reduced(s, mats),
                               rtol=1e-13)
    assert detC_reduced(0.0, mats).real == pytest.approx(1599.82, abs=1e-6)


@given(st.floats(0.01, 1e4), st.floats(1.0, 5e3), st.floats(0.1, 10.0))
def test_h2_peak_is_one_over_gamma(w, gamma, eta):
    assert abs(H2(1j * w, gamma, eta)) <= 1.0 / gamma * (1 + 1e-12)
    peak = abs(H2(1j * np.sqrt(eta * gamma), gamma, eta))
    assert peak == pytest.approx(1.0 / gamma, rel=1e-12)


def test_h2_rejects_nonpositive():
    with pytest.raises(ValueError):
        H2(1j, 0.0, 1.0)


def test_hinf_refinement_finds_resonance():
    omega = np.logspace(-1, 3, 200)
    f = lambda s: 1.0 / (s * s + 0.02 * s + 100.0)
    est = hinf_estimate(respond(f, omega))
    assert est.value == pytest.approx(1.0 / (0.02 * 10.0), rel=1e-3)
    assert est.omega_peak == pytest.approx(10.0, rel=1e-3)


def test_small_gain_report(mats):
    rep = check_small_gain(500.0, 1.0, mats)
    assert rep.lhs == pytest.approx(0.002, rel=1e-6)
    assert rep.rhs == pytest.approx(1 / rep.hinf_H1)
    assert rep.satisfied is False
    assert rep.loop_satisfied is True


def test_injection_gain_has_constant_feedthrough(mats):
    high = injection_gain(np.array([1e7j, 1e8j]), 500.0, 1.0, mats)
    np.testing.assert_allclose(high[0], high[1], atol=1e-4)
    assert abs(high[0][0, 1]) == pytest.approx(0.2208, abs=1e-3)


def test_response_csv_roundtrip(tmp_path):
    r = H2_response(500.0, 1.0, default_grid(50))
    r.to_csv(tmp_path / "h2.csv")
    back = FrequencyResponse.from_csv(tmp_path / "h2.csv")
    np.testing.assert_allclose(back.omega, r.omega)
    np.testing.assert_allclose(back.as_matrix(), r.as_matrix(), rtol=1e-9)


def test_response_validates_grid():
    with pytest.raises(ValueError):
        FrequencyResponse(np.array([2.0, 1.0]), np.zeros(2))
