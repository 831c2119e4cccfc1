"""Observer realization: plant copy, static output injection and the convolution term.

The convolution ``(H * Y~)(t)`` is realized either by a stable rational fit of
the injection gain (filter states advanced with the plant clock) or by a
sampled impulse response applied over a ring buffer of past innovations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .freq import FrequencyResponse, check_small_gain, default_grid, injection_gain_response
from .model import (
    PlantState,
    SystemMatrices,
    VehicleParams,
    apply_K1,
    build_matrices,
    trapezoid_weights,
)
from .rational import FitError, RationalFilter, fit_rational
from .sensors import SensorSpec
from .transport import (
    GridSpec,
    NumericalFailure,
    SimTrace,
    SteeringSpec,
    _empty_filter_args,
    _prepare_ic,
    plant_rhs,
    run_march,
)

log = logging.getLogger(__name__)

REFERENCE_X0 = (0.03, -0.25)
REFERENCE_Z0 = 0.0033


class KernelError(ValueError):
    """The sampled impulse response is unusable (non-decaying, aliased or complex)."""


def fit_injection_filter(resp: FrequencyResponse, order_max: int = 80, tol: float = 1e-3, *,
                         orders=None, dt: float | None = None) -> RationalFilter:
    """Stable rational realization of a sampled injection gain.

    Tries orders 4, 8, 12, ... up to ``order_max`` (or the explicit ``orders``)
    and returns the first fit whose relative grid H-infinity error is at most
    ``tol``. With ``dt`` given, fits with ``max|pole| * dt > 0.1`` are rejected.

    Raises
    ------
    FitError
        No order met ``tol``; ``exc.best`` holds the best admissible fit.
    """
    model = fit_rational(resp, order_max, tol, orders=orders, dt=dt)
    log.info("injection filter: order %d, relative error %.3g", model.order, model.fit_error)
    return model


def rational_args(filt: RationalFilter, dt: float) -> dict:
    """Arguments for the compiled loop: one state per real or upper-half-plane pole.

    Filter states use the exact zero-order-hold update; explicit Euler is
    unstable for lightly damped poles with ``|Im p| dt`` of order 0.1.
    """
    if filt.shape != (2, 2):
        raise ValueError(f"injection filter must be 2x2, got {filt.shape}")
    poles, res, weight = filt.upper()
    phi, gam = filt.zoh_coefficients(dt)
    return dict(
        filter_kind=_kernels.FILTER_RATIONAL,
        fphi=np.ascontiguousarray(phi),
        fgam=np.ascontiguousarray(gam),
        residues=np.ascontiguousarray(res),
        pweight=np.ascontiguousarray(weight),
        Dff=np.ascontiguousarray(filt.D, dtype=float),
        fstate=np.zeros((poles.size, 2), dtype=complex),
    )


@dataclass
class ImpulseResponseKernel:
    """Strictly proper part ``h(t_j)`` of a gain plus its feedthrough ``D``.

    ``taps`` has shape ``(n, p, q)`` with ``t_j = j * dt_kernel``; the full
    operator is ``D Y(t) + int_0^T_h h(s) Y(t - s) ds``.
    """

    taps: np.ndarray
    dt_kernel: float
    D: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.dt_kernel * np.arange(self.taps.shape[0])

    @property
    def horizon(self) -> float:
        return self.dt_kernel * (self.taps.shape[0] - 1)

    def tap_weights(self) -> np.ndarray:
        w = np.ones(self.taps.shape[0])
        w[0] = w[-1] = 0.5
        return w

    def loop_args(self, dt: float) -> dict:
        every = round(self.dt_kernel / dt)
        if every < 1 or abs(every * dt - self.dt_kernel) > 1e-9 * self.dt_kernel:
            raise ValueError(f"dt_kernel={self.dt_kernel:g} is not a multiple of dt={dt:g}")
        n = self.taps.shape[0]
        return dict(
            filter_kind=_kernels.FILTER_KERNEL,
            taps=np.ascontiguousarray(self.taps),
            tap_w=self.tap_weights(),
            dt_kernel=float(self.dt_kernel),
            kernel_every=int(every),
            ring=np.zeros((n, 2)),
            Dff=np.ascontiguousarray(self.D, dtype=float),
        )


def _window_norms(taps: np.ndarray, n_win: int) -> np.ndarray:
    size = max(1, taps.shape[0] // n_win)
    flat = taps.reshape(taps.shape[0], -1)
    return np.array([np.sqrt(np.mean(flat[i * size:(i + 1) * size] ** 2)) for i in range(n_win)])


def _sample_kernel(func, dt_k: float, n_fft: int, D: np.ndarray, c: np.ndarray, a: float):
    """Kernel samples of ``func(i omega) - D`` on ``t_j = j dt_k``.

    The leading jump ``c`` at ``t = 0`` is carried by the reference
    ``c / (s + a)``, whose kernel ``c exp(-a t)`` is added back exactly; only
    the remainder (decaying faster than ``1/omega``) goes through the DFT.
    """
    j = np.fft.fftfreq(n_fft, d=1.0 / n_fft)
    omega = 2.0 * math.pi * j / (n_fft * dt_k)
    vals = np.asarray(func(omega), dtype=complex)
    if vals.ndim == 1:
        vals = vals[:, None, None]
    vals = vals - D - c / (1j * omega + a)[:, None, None]
    # the Nyquist bin has no conjugate partner on the grid
    vals[n_fft // 2] = vals[n_fft // 2].real
    h = np.fft.ifft(vals, axis=0) / dt_k
    t = dt_k * np.arange(n_fft)
    return h + c[None] * np.exp(-a * t)[:, None, None]


def _high_frequency_terms(func, w_hi: float, shape, n: int = 4096):
    """Feedthrough ``D`` and leading ``1/s`` coefficient ``c`` of a proper response.

    ``c`` is averaged over a wide band so delayed (oscillating) ``1/s`` terms
    mostly cancel.
    """
    D = np.asarray(func(np.array([1e3 * w_hi])), dtype=complex).reshape(shape).real
    w = np.linspace(w_hi, 2.0 * w_hi, n)
    vals = np.asarray(func(w), dtype=complex).reshape((n,) + shape)
    c = np.mean((1j * w)[:, None, None] * (vals - D), axis=0).real
    return D, c


def kernel_from_response(resp: FrequencyResponse, dt_kernel: float = 1e-5, T_h: float = 0.05,
                         *, alias_tol: float = 0.01, decay_tol: float = 0.01,
                         imag_tol: float = 1e-6, n_win: int = 20) -> ImpulseResponseKernel:
    """Sample the impulse response of ``resp`` by inverse DFT.

    The response is re-evaluated (``resp.func``) on a uniform two-sided
    frequency grid with Nyquist frequency ``pi / dt_kernel`` and a period of
    at least ``4 T_h``. The feedthrough is removed before inversion and
    returned separately.

    Bandwidth adequacy is judged on the integrated kernel (step response),
    which is insensitive to Gibbs ringing at delayed jumps.

    Raises
    ------
    KernelError
        The kernel is complex beyond ``imag_tol``, its step response changes
        by more than ``alias_tol`` when the Nyquist frequency is doubled, or
        its last window exceeds ``decay_tol`` times its peak window.
    """
    if resp.func is None:
        raise KernelError("response carries no evaluator; cannot resample on a uniform grid")
    if not (dt_kernel > 0 and T_h > dt_kernel):
        raise ValueError("need 0 < dt_kernel < T_h")
    func = resp.func
    shape = np.shape(resp.as_matrix())[1:]
    n_taps = int(round(T_h / dt_kernel)) + 1
    n_fft = 1 << int(math.ceil(math.log2(4 * n_taps)))
    w_nyq = math.pi / dt_kernel
    D, c = _high_frequency_terms(func, 4.0 * w_nyq, shape)
    a = 0.05 / dt_kernel

    h = _sample_kernel(func, dt_kernel, n_fft, D, c, a)
    peak = float(np.max(np.abs(h[:n_taps])))
    if peak == 0.0:
        return ImpulseResponseKernel(np.zeros((n_taps,) + shape), dt_kernel, D,
                                     meta={"peak": 0.0, "imag_residue": 0.0, "alias_error": 0.0})
    imag_res = float(np.max(np.abs(h.imag))) / peak
    if imag_res > imag_tol:
        raise KernelError(f"kernel imaginary residue {imag_res:.3g} exceeds {imag_tol:g}; "
                          "response is not conjugate-symmetric")
    taps = h[:n_taps].real

    fine = _sample_kernel(func, dt_kernel / 2, 2 * n_fft, D, c, a)[: 2 * n_taps].real
    step = _cumtrapz(taps, dt_kernel)
    step_fine = _cumtrapz(fine, dt_kernel / 2)[::2]
    scale = max(float(np.max(np.abs(step))), 1e-300)
    alias = float(np.max(np.abs(step_fine - step))) / scale
    if alias > alias_tol:
        raise KernelError(f"step response changes by {alias:.3g} of its peak when the bandwidth "
                          f"is doubled; reduce dt_kernel (now {dt_kernel:g} s)")

    norms = _window_norms(taps, n_win)
    ratio = float(norms[-1] / norms.max())
    if ratio > decay_tol:
        raise KernelError(f"kernel tail window is {ratio:.3g} of its peak window; the gain "
                          f"does not decay within T_h={T_h:g} s (check gamma and eta)")
    return ImpulseResponseKernel(taps, dt_kernel, D, meta={
        "peak": peak, "imag_residue": imag_res, "alias_error": alias, "tail_ratio": ratio,
        "jump": c.tolist()})


def _cumtrapz(h: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(h)
    out[1:] = np.cumsum(0.5 * dt * (h[1:] + h[:-1]), axis=0)
    return out


# -- reference (NumPy) observer ----------------------------------------------

@dataclass
class ObserverState:
    """Estimates ``(X_hat, z_hat)`` plus the convolution memory."""

    X: np.ndarray
    z: np.ndarray
    fstate: np.ndarray | None = None
    ring: np.ndarray | None = None
    n: int = 0
    f_hold: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @classmethod
    def zeros(cls, n_cells: int, filt=None) -> "ObserverState":
        obs = cls(np.zeros(2), np.zeros((2, n_cells + 1)))
        if isinstance(filt, RationalFilter):
            obs.fstate = np.zeros((filt.upper()[0].size, 2), dtype=complex)
        elif isinstance(filt, ImpulseResponseKernel):
            obs.ring = np.zeros((filt.taps.shape[0], 2))
        return obs

    def as_plant_state(self) -> PlantState:
        return PlantState(self.X, self.z)


def _filter_output(obs: ObserverState, Yt: np.ndarray, filt, dt: float) -> np.ndarray:
    if filt is None:
        return np.zeros(2)
    if isinstance(filt, RationalFilter):
        poles, res, weight = filt.upper()
        f = filt.D @ Yt
        f = f + np.einsum("p,pij,pj->i", weight, res, obs.fstate).real
        return f
    every = round(filt.dt_kernel / dt)
    if obs.n % every == 0:
        n_taps = filt.taps.shape[0]
        obs.ring = np.roll(obs.ring, 1, axis=0)
        obs.ring[0] = Yt
        w = filt.tap_weights() * filt.dt_kernel
        obs.f_hold = filt.D @ Yt + np.einsum("j,jik,jk->i", w, filt.taps, obs.ring[:n_taps])
    return obs.f_hold


def observer_step(obs: ObserverState, Y_meas, delta, dt: float, mats: SystemMatrices,
                  filt=None) -> ObserverState:
    """Advance the observer by one explicit-Euler step (reference implementation).

    ``filt`` is a ``RationalFilter``, an ``ImpulseResponseKernel`` or ``None``
    (static injection only).
    """
    Y_meas = np.asarray(Y_meas, dtype=float)
    Fh = apply_K1(obs.z, mats)
    Yhat = np.array([obs.X[1], float(mats.C2[0] @ Fh)])
    Yt = Y_meas - Yhat
    f = _filter_output(obs, Yt, filt, dt)
    d = plant_rhs(obs.as_plant_state(), delta, mats)
    dX = d.X - mats.L_gain[:, 0] * Yt[0] - f
    new = ObserverState(obs.X + dt * dX, obs.z + dt * d.z, obs.fstate, obs.ring, obs.n + 1,
                        obs.f_hold)
    new.z[:, 0] = 0.0
    if isinstance(filt, RationalFilter):
        phi, gam = filt.zoh_coefficients(dt)
        new.fstate = phi[:, None] * obs.fstate + gam[:, None] * Yt[None, :]
    if not (np.all(np.isfinite(new.X)) and np.all(np.isfinite(new.z))):
        raise NumericalFailure(f"observer state became non-finite at step {obs.n}")
    return new


# -- closed-loop scenario -----------------------------------------------------

def reference_plant_ic(n_cells: int = 50) -> PlantState:
    """``X0 = [0.03, -0.25]``, ``z0 = 0.0033`` on both axles (node 0 set to zero)."""
    ic = PlantState.uniform(np.array(REFERENCE_X0), (REFERENCE_Z0, REFERENCE_Z0), n_cells)
    ic.project_bc()
    return ic


@dataclass
class ClosedLoopScenario:
    """Everything needed for one plant-plus-observer run.

    ``sensors=None`` means ideal sensors: noise-free and sampled every step.
    ``realization`` is ``"rational"`` or ``"kernel"``. A precomputed
    ``filter`` (rational or kernel) skips synthesis.
    """

    params: VehicleParams = field(default_factory=VehicleParams)
    grid: GridSpec = field(default_factory=GridSpec)
    steering: SteeringSpec = field(default_factory=SteeringSpec)
    plant_ic: PlantState | None = None
    observer_ic: PlantState | None = None
    sensors: SensorSpec | None = field(default_factory=SensorSpec)
    gamma: float = 500.0
    eta: float = 1.0
    realization: str = "rational"
    fit_order_max: int = 80
    fit_tol: float = 1e-3
    fit_orders: tuple | None = None
    dt_kernel: float = 1e-5
    kernel_horizon: float = 0.05
    filter: RationalFilter | ImpulseResponseKernel | None = None
    log_period: float = 1e-3
    snapshot_period: float | None = 0.01

    def __post_init__(self) -> None:
        if self.realization not in ("rational", "kernel"):
            raise ValueError(f"realization must be 'rational' or 'kernel', got {self.realization!r}")
        if not (self.gamma > 0 and self.eta > 0):
            raise ValueError("gamma and eta must be > 0")

    def injection_response(self, mats: SystemMatrices, omega=None) -> FrequencyResponse:
        omega = default_grid() if omega is None else omega
        return injection_gain_response(omega, self.gamma, self.eta, mats)

    def synthesize(self, mats: SystemMatrices):
        """Build (or return the supplied) convolution realization."""
        if self.filter is not None:
            return self.filter
        resp = self.injection_response(mats)
        if self.realization == "kernel":
            return kernel_from_response(resp, self.dt_kernel, self.kernel_horizon)
        try:
            return fit_injection_filter(resp, self.fit_order_max, self.fit_tol,
                                        orders=self.fit_orders, dt=self.grid.dt)
        except FitError as exc:
            log.warning("%s; falling back to the impulse-response kernel", exc)
            return kernel_from_response(resp, self.dt_kernel, self.kernel_horizon)


def _filter_loop_args(filt, dt: float) -> dict:
    if filt is None:
        return {}
    if isinstance(filt, RationalFilter):
        if filt.max_stiffness(dt) > 0.1:
            raise ValueError(f"filter pole magnitude times dt is {filt.max_stiffness(dt):.3g} > 0.1")
        return rational_args(filt, dt)
    return filt.loop_args(dt)


def simulate_closed(scenario: ClosedLoopScenario, mats: SystemMatrices | None = None) -> SimTrace:
    """Co-simulate plant, sampled sensors and observer on the plant clock.

    A failed small-gain check is logged as a warning and recorded in
    ``trace.meta["small_gain"]``; the run proceeds.
    """
    mats = build_matrices(scenario.params) if mats is None else mats
    grid = scenario.grid
    grid.check_cfl(mats)
    sg = check_small_gain(scenario.gamma, scenario.eta, mats)
    if not sg.satisfied:
        log.warning("small-gain condition not met for gamma=%g, eta=%g (%.4g >= %.4g)",
                    scenario.gamma, scenario.eta, sg.lhs, sg.rhs)

    ic = reference_plant_ic(grid.N) if scenario.plant_ic is None else scenario.plant_ic
    ic = _prepare_ic(ic, grid)
    obs_ic = PlantState.zeros(grid.N) if scenario.observer_ic is None else scenario.observer_ic
    obs_ic = _prepare_ic(obs_ic, grid, "observer")

    if scenario.sensors is None:
        steps = np.array([1, 1], dtype=np.int64)
        noise = np.zeros((2, grid.n_steps + 1))
        sensor_desc = "ideal"
    else:
        steps = scenario.sensors.period_steps(grid.dt)
        noise = scenario.sensors.draw(grid.n_steps // steps + 1)
        sensor_desc = scenario.sensors.describe()

    filt = scenario.synthesize(mats)
    trace = run_march(mats, grid, scenario.steering, ic, obs_ic=obs_ic, sens_period=steps,
                      noise=noise, filter_args=_filter_loop_args(filt, grid.dt),
                      log_period=scenario.log_period, snapshot_period=scenario.snapshot_period)
    trace.meta.update({
        "gamma": scenario.gamma,
        "eta": scenario.eta,
        "sensors": sensor_desc,
        "realization": "rational" if isinstance(filt, RationalFilter) else "kernel",
        "filter": filt,
        "small_gain": sg,
    })
    if isinstance(filt, RationalFilter):
        trace.meta["fit_order"] = filt.order
        trace.meta["fit_error"] = filt.fit_error
    return trace


@dataclass
class ErrorTrace:
    t: np.ndarray
    err_X: np.ndarray
    err_z: np.ndarray

    @property
    def err_total(self) -> np.ndarray:
        return np.sqrt(self.err_X**2 + self.err_z**2)


def simulate_error_dynamics(err_ic: PlantState, filt, grid: GridSpec, mats: SystemMatrices,
                            *, log_period: float = 1e-3) -> ErrorTrace:
    """March the estimation-error system directly.

    ``dX~/dt = G K1 z~ + (H * Y~)`` with ``z~`` obeying the homogeneous
    transport equation; the static injection cancels ``A1 X~`` exactly.
    """
    grid.check_cfl(mats)
    ic = _prepare_ic(err_ic, grid, "error")
    fa = _empty_filter_args()
    fa.update(_filter_loop_args(filt, grid.dt))
    n_steps = grid.n_steps
    every = max(1, int(round(log_period / grid.dt)))
    n_log = n_steps // every + 1
    log_t, log_ex, log_ez = np.zeros(n_log), np.zeros(n_log), np.zeros(n_log)
    got = _kernels.march_error(
        ic.X.copy(), np.ascontiguousarray(ic.z), np.ascontiguousarray(mats.A2),
        np.ascontiguousarray(mats.G), np.array(mats.lam), np.array(mats.k1), np.array(mats.k2),
        np.array(mats.C2[0]), trapezoid_weights(grid.N + 1), float(grid.N), float(grid.dt),
        n_steps, every,
        fa["filter_kind"], fa["fphi"], fa["fgam"], fa["residues"], fa["pweight"], fa["Dff"], fa["fstate"],
        fa["taps"], fa["tap_w"], float(fa["dt_kernel"]), int(fa["kernel_every"]), fa["ring"],
        log_t, log_ex, log_ez,
    )
    return ErrorTrace(log_t[:got], log_ex[:got], log_ez[:got])
