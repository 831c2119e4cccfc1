import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tirepde.freq import FrequencyResponse, H2_response, default_grid
from tirepde.rational import (
    FitError,
    RationalFilter,
    fit_rational,
    relative_hinf_error,
    vector_fit,
)


def test_exact_second_order_recovery():
    resp = H2_response(500.0, 1.0, default_grid(400))
    filt = vector_fit(resp, 2)
    assert relative_hinf_error(filt, resp) < 1e-12
    np.testing.assert_allclose(np.sort(filt.poles.real), np.sort(np.roots([1, 500, 500]).real),
                               rtol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.floats(10.0, 1e3), st.floats(0.05, 0.9), st.floats(-2.0, 2.0))
def test_recovers_damped_pair_with_feedthrough(wn, zeta, d):
    omega = np.logspace(-1, 5, 300)
    s = 1j * omega
    f = wn**2 / (s**2 + 2 * zeta * wn * s + wn**2) + d
    resp = FrequencyResponse(omega, f)
    filt = vector_fit(resp, 2)
    assert relative_hinf_error(filt, resp) < 1e-8
    assert np.all(filt.poles.real < 0)


def test_matrix_valued_and_json_roundtrip(tmp_path):
    omega = np.logspace(-1, 4, 200)
    s = 1j * omega
    F = np.zeros((omega.size, 2, 2), dtype=complex)
    F[:, 0, 0] = 3.0 / (s + 2.0)
    F[:, 0, 1] = 1.0 / (s + 50.0) + 0.5
    F[:, 1, 0] = 20.0 / (s + 50.0)
    F[:, 1, 1] = 1.0 / (s + 2.0) - 4.0 / (s + 50.0)
    resp = FrequencyResponse(omega, F)
    filt = vector_fit(resp, 2)
    assert relative_hinf_error(filt, resp) < 1e-10
    assert filt.shape == (2, 2)
    np.testing.assert_allclose(filt.D, [[0, 0.5], [0, 0]], atol=1e-9)
    filt.to_json(tmp_path / "f.json")
    back = RationalFilter.from_json(tmp_path / "f.json")
    np.testing.assert_allclose(back(s[:5]), filt(s[:5]), rtol=1e-14)


def test_zoh_coefficients_are_exact_for_one_pole():
    filt = RationalFilter(poles=np.array([-100.0 + 0j]), residues=np.ones((1, 1, 1)),
                          D=np.zeros((1, 1)))
    phi, gam = filt.zoh_coefficients(1e-3)
    assert phi[0] == pytest.approx(np.exp(-0.1))
    assert gam[0] == pytest.approx((1 - np.exp(-0.1)) / 100.0)


def test_filter_validation():
    with pytest.raises(ValueError):
        RationalFilter(poles=np.array([1.0 + 0j]), residues=np.ones((1, 1, 1)), D=np.zeros((1, 1)))
    with pytest.raises(ValueError):
        RationalFilter(poles=np.array([-1.0 + 1j]), residues=np.ones((1, 1, 1)), D=np.zeros((1, 1)))


def test_fit_error_carries_best_attempt(hhat_response):
    with pytest.raises(FitError) as info:
        fit_rational(hhat_response, orders=[4], tol=1e-3)
    assert info.value.best is not None
    assert info.value.best.fit_error > 1e-3


def test_injection_filter_meets_tolerance(injection_filter, hhat_response):
    assert injection_filter.order == 72
    assert relative_hinf_error(injection_filter, hhat_response) < 1e-3
    assert np.all(injection_filter.poles.real < 0)
    assert injection_filter.max_stiffness(1e-6) < 0.1
