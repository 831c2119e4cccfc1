import numpy as np
import pytest

from tirepde import PlantState, measurement
from tirepde.freq import FrequencyResponse, default_grid, lowpass
from tirepde.observer import (
    ClosedLoopScenario,
    ImpulseResponseKernel,
    KernelError,
    ObserverState,
    kernel_from_response,
    observer_step,
    reference_plant_ic,
    simulate_closed,
    simulate_error_dynamics,
)
from tirepde.rational import vector_fit
from tirepde.transport import GridSpec, SteeringSpec, step


@pytest.fixture(scope="module")
def small_filter(hhat_response):
    # a coarse fit is enough to exercise the loop plumbing
    return vector_fit(hhat_response, 8)


def _padded(func, omega):
    return FrequencyResponse(omega, func(1j * omega), func=lambda w: func(1j * np.asarray(w)))


def test_kernel_of_first_order_lowpass():
    gamma = 500.0
    resp = _padded(lambda s: lowpass(s, gamma), default_grid(400))
    k = kernel_from_response(resp, dt_kernel=1e-5, T_h=0.02)
    t = k.t
    exact = gamma * np.exp(-gamma * t)
    assert np.max(np.abs(k.taps[:, 0, 0] - exact)) < 0.01 * gamma
    assert abs(k.D[0, 0]) < 1e-6


def test_kernel_rejects_slow_decay():
    resp = _padded(lambda s: 1.0 / (s + 1.0), default_grid(400))
    with pytest.raises(KernelError, match="decay"):
        kernel_from_response(resp, dt_kernel=1e-4, T_h=0.01)


def test_kernel_loop_args_need_commensurate_step():
    k = ImpulseResponseKernel(np.zeros((5, 2, 2)), 1e-5, np.zeros((2, 2)))
    assert k.loop_args(1e-6)["kernel_every"] == 10
    with pytest.raises(ValueError):
        k.loop_args(3e-6)


def test_compiled_closed_loop_matches_reference(mats, small_filter):
    grid = GridSpec(N=20, dt=2e-6, T=0.001)
    steer = SteeringSpec()
    scen = ClosedLoopScenario(grid=grid, steering=steer, plant_ic=reference_plant_ic(20),
                              sensors=None, filter=small_filter, log_period=grid.T,
                              snapshot_period=None)
    tr = simulate_closed(scen, mats)

    plant = reference_plant_ic(20)
    obs = ObserverState.zeros(20, small_filter)
    chi = mats.params.chi
    for k in range(grid.n_steps):
        delta = steer(k * grid.dt, chi)
        y = measurement(plant, mats)
        obs = observer_step(obs, y, delta, grid.dt, mats, small_filter)
        plant = step(plant, delta, grid.dt, mats)
    np.testing.assert_allclose(tr.X_hat[-1], obs.X, rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(tr.X[-1], plant.X, rtol=1e-11)


def test_error_decays_at_unit_rate(mats, injection_filter):
    et = simulate_error_dynamics(reference_plant_ic(), injection_filter, GridSpec(T=0.6), mats,
                                 log_period=1e-2)
    sel = et.t >= 0.1
    slope = np.polyfit(et.t[sel], np.log(et.err_total[sel]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.02)


def test_kernel_and_rational_realizations_agree(mats, injection_filter, hhat_response):
    kern = kernel_from_response(hhat_response)
    grid = GridSpec(T=0.05)
    a = simulate_error_dynamics(reference_plant_ic(), injection_filter, grid, mats)
    b = simulate_error_dynamics(reference_plant_ic(), kern, grid, mats)
    assert np.max(np.abs(a.err_total - b.err_total)) < 1e-3 * a.err_total[0]


def test_noise_off_run_converges(mats, injection_filter):
    scen = ClosedLoopScenario(grid=GridSpec(T=0.3), sensors=None, filter=injection_filter,
                              snapshot_period=0.1)
    tr = simulate_closed(scen, mats)
    e = tr.err_total
    assert e[-1] < e[0]
    assert tr.meta["realization"] == "rational" and tr.meta["fit_order"] == 72
    assert tr.zerr_snap.shape[1:] == (2, 51)


@pytest.mark.parametrize("kw", [dict(realization="spline"), dict(gamma=0.0), dict(eta=-1.0)])
def test_scenario_validation(kw):
    with pytest.raises(ValueError):
        ClosedLoopScenario(**kw)


def test_reference_initial_condition():
    ic = reference_plant_ic(50)
    np.testing.assert_array_equal(ic.X, [0.03, -0.25])
    assert ic.z[0, 0] == 0.0 and ic.z[1, 5] == 0.0033
