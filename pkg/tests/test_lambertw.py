import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw as scipy_lambertw

from tirepde.lambertw import (
    INV_E,
    LambertWError,
    branch_of,
    certify_no_unstable_poles,
    default_k_range,
    h_zeros,
    lambert_w,
)

finite = st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False,
                            allow_infinity=False)


@settings(max_examples=300)
@given(finite, st.integers(-20, 20))
def test_matches_scipy_oracle(w, k):
    z = lambert_w(k, w)
    assert z * np.exp(z) == pytest.approx(w, rel=1e-12, abs=1e-12)
    if abs(w.imag) > 1e-9 * abs(w):  # away from the cuts the conventions agree
        assert z == pytest.approx(complex(scipy_lambertw(w, k)), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("w,k,expected", [
    (0.0, 0, 0.0),
    (math.e, 0, 1.0),
    (-INV_E, 0, -1.0),
    (-INV_E, -1, -1.0),
    (-math.pi / 2, 0, 1j * math.pi / 2),
    (1.0, 0, 0.5671432904097838),
])
def test_known_values(w, k, expected):
    assert lambert_w(k, w) == pytest.approx(expected, abs=1e-12)


def test_near_branch_point_uses_series():
    for d in (1e-9, 1e-7, -1e-8):
        w = -INV_E + d
        z = lambert_w(0, w)
        assert abs(z * np.exp(z) - w) < 1e-14


def test_real_branches_on_negative_axis():
    w = -0.2
    assert lambert_w(0, w).imag == 0.0
    assert lambert_w(-1, w).imag == 0.0
    assert lambert_w(-1, w).real < -1.0 < lambert_w(0, w).real


@given(finite, st.integers(-30, 30))
def test_branch_is_reported_back(w, k):
    assert branch_of(lambert_w(k, w), w) == k


def test_errors():
    with pytest.raises(LambertWError):
        lambert_w(1, 0.0)
    with pytest.raises(LambertWError):
        lambert_w(0, complex(np.inf, 0))


def test_zeros_are_conjugate_and_stable(mats):
    ks = default_k_range(5)
    zs = dict(zip(ks, h_zeros(1, ks, mats)))
    for k in range(1, 5):
        assert zs[k] == pytest.approx(np.conj(zs[-k - 1]), rel=1e-12)
    assert all(z.real < 0 for z in zs.values())
    with pytest.raises(ValueError):
        h_zeros(1, [0], mats)


def test_certificate(mats, tmp_path):
    cert = certify_no_unstable_poles(mats, k_max=10)
    assert cert.certified and cert.verdict == "certified"
    assert cert.max_real_part < 0
    assert cert.det_at_zero == pytest.approx(2 / mats.params.m * 1599.82, rel=1e-6)
    cert.zeros_to_csv(tmp_path / "z.csv")
    assert (tmp_path / "z.csv").read_text().count("\n") == 1 + 2 * len(default_k_range(10))
    assert "verdict: certified" in cert.report()
