import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tirepde import ParameterError, PlantState, VehicleParams, build_matrices, measurement
from tirepde.model import apply_K1, apply_K2, integrate, l2_norm, sideslip, trapezoid_weights


def test_reference_gains(mats):
    np.testing.assert_allclose(mats.lam, [500.0, 500.0])
    np.testing.assert_allclose(mats.k1, [699580.0, 900240.0])
    np.testing.assert_allclose(mats.k2, [40.0, 40.0], rtol=1e-12)


def test_matrix_shapes_and_signs(mats, params):
    for name in ("A1", "A2", "G", "B"):
        assert getattr(mats, name).shape == (2, 2)
    assert mats.A1[0, 1] == -params.v_x
    assert mats.G[0, 0] == mats.G[0, 1] == -1.0 / params.m
    np.testing.assert_allclose(mats.psi, 1.0 - mats.phi)


def test_rear_steering_channel_follows_chi(params):
    assert build_matrices(params).B[1, 1] == 0.0
    assert build_matrices(params.replace(chi=1)).B[1, 1] != 0.0


def test_matrices_are_read_only(mats):
    with pytest.raises(ValueError):
        mats.A1[0, 0] = 1.0


@pytest.mark.parametrize("field,value", [
    ("m", 0.0), ("v_x", -1.0), ("L_1", np.nan), ("phi_1", 1.5), ("phi_2", 0.0), ("chi", 2),
])
def test_invalid_parameters_name_the_field(field, value):
    with pytest.raises(ParameterError, match=field if field != "chi" else "chi must be"):
        VehicleParams(**{field: value})


def test_trapezoid_weights_sum_to_one():
    for n in (2, 3, 51, 201):
        assert trapezoid_weights(n).sum() == pytest.approx(1.0, abs=1e-14)


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(2, 200))
def test_trapezoid_exact_for_affine(a, b, n):
    xi = np.linspace(0.0, 1.0, n + 1)
    z = np.vstack([a + b * xi, b - a * xi])
    np.testing.assert_allclose(integrate(z), [a + b / 2, b - a / 2], atol=1e-12)


def test_integral_and_norm_converge_on_smooth_profile():
    xi = np.linspace(0.0, 1.0, 401)
    z = np.vstack([np.sin(np.pi * xi), xi**2])
    np.testing.assert_allclose(integrate(z), [2 / np.pi, 1 / 3], atol=5e-6)
    assert l2_norm(z) == pytest.approx(np.sqrt(0.5 + 0.2), abs=5e-6)


def test_couplings(mats):
    z = np.vstack([np.full(51, 0.002), np.linspace(0.0, 0.004, 51)])
    np.testing.assert_allclose(apply_K1(z, mats), mats.k1 * [0.002, 0.002])
    np.testing.assert_allclose(apply_K2(z, mats), mats.k2 * [0.002, 0.004])


def test_measurement_is_yaw_rate_and_lateral_acceleration(mats, params):
    st_ = PlantState.uniform([0.1, 0.2], (0.001, 0.002), 50)
    y = measurement(st_, mats)
    forces = mats.k1 * [0.001, 0.002]
    assert y[0] == 0.2
    assert y[1] == pytest.approx(-(forces.sum()) / params.m)
    assert sideslip([1.0, 0.0], params) == pytest.approx(1.0 / params.v_x)


def test_plant_state_validation_and_projection():
    with pytest.raises(ValueError):
        PlantState(np.zeros(2), np.zeros((3, 10)))
    s = PlantState.uniform([0.0, 0.0], (1.0, 2.0), 4)
    assert s.n_cells == 4
    assert s.project_bc() is True
    assert s.project_bc() is False
    np.testing.assert_array_equal(s.z[:, 0], 0.0)
    c = s.copy()
    c.z[0, 1] = 9.0
    assert s.z[0, 1] == 1.0
