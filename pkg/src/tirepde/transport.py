"""Upwind finite-difference discretization of the coupled ODE-PDE plant.

The PDE part is marched with first-order upwind differences in ``xi`` and
explicit Euler in time. ``plant_rhs`` and ``step`` are the readable reference
implementation; long runs go through the compiled loop in ``_kernels``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import (
    PlantState,
    SystemMatrices,
    apply_K1,
    apply_K2,
    l2_norm,
    trapezoid_weights,
)

log = logging.getLogger(__name__)


class CFLError(ValueError):
    """The explicit upwind scheme would be unstable on this grid."""


class NumericalFailure(RuntimeError):
    """A state entry became non-finite."""


@dataclass(frozen=True)
class GridSpec:
    """Spatial cells ``N`` (``dxi = 1/N``), time step ``dt`` and horizon ``T``."""

    N: int = 50
    dt: float = 1e-6
    T: float = 2.0

    def __post_init__(self) -> None:
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not self.T > self.dt:
            raise ValueError(f"T must exceed dt, got T={self.T!r}, dt={self.dt!r}")

    @property
    def dxi(self) -> float:
        return 1.0 / self.N

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    def cfl(self, mats: SystemMatrices) -> float:
        return float(np.max(mats.lam) * self.dt / self.dxi)

    def check_cfl(self, mats: SystemMatrices) -> float:
        c = self.cfl(mats)
        if c > 1.0:
            raise CFLError(
                f"CFL number max(lambda)*dt/dxi = {c:.6g} exceeds 1 "
                f"(lambda_max={np.max(mats.lam):g} 1/s, dt={self.dt:g} s, dxi={self.dxi:g})"
            )
        return c


@dataclass(frozen=True)
class SteeringSpec:
    """Steering ``delta_c(t) = offset_c + amplitude_c * sin(omega_c t)``.

    ``units`` is ``"deg"`` or ``"rad"``; evaluation always returns radians.
    """

    offset: tuple = (1.0, 0.0)
    amplitude: tuple = (2.0, 0.0)
    omega: tuple = (10.0, 0.0)
    units: str = "deg"

    def __post_init__(self) -> None:
        if self.units not in ("deg", "rad"):
            raise ValueError(f"units must be 'deg' or 'rad', got {self.units!r}")
        for name in ("offset", "amplitude", "omega"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 2 or not all(math.isfinite(x) for x in v):
                raise ValueError(f"{name} must hold two finite numbers, got {getattr(self, name)!r}")
            object.__setattr__(self, name, v)

    @property
    def scale(self) -> float:
        return math.pi / 180.0 if self.units == "deg" else 1.0

    def coefficients(self, chi: int = 1):
        """Offsets, amplitudes (rad) and frequencies; channel 2 zeroed if ``chi == 0``."""
        off = np.array(self.offset) * self.scale
        amp = np.array(self.amplitude) * self.scale
        omg = np.array(self.omega)
        if chi == 0:
            off[1] = amp[1] = 0.0
        return off, amp, omg

    def __call__(self, t, chi: int = 1) -> np.ndarray:
        off, amp, omg = self.coefficients(chi)
        t = np.asarray(t, dtype=float)
        return off + amp * np.sin(np.multiply.outer(t, omg))

    @classmethod
    def zero(cls) -> "SteeringSpec":
        return cls((0.0, 0.0), (0.0, 0.0), (0.0, 0.0), "rad")


@dataclass
class SimTrace:
    """Decimated record of one simulation run.

    Observer fields are ``None`` for open-loop runs. ``z_snap`` and
    ``zerr_snap`` have shape ``(n_snap, 2, N + 1)``.
    """

    t: np.ndarray
    X: np.ndarray
    beta: np.ndarray
    forces: np.ndarray
    delta: np.ndarray
    Y: np.ndarray
    Y_meas: np.ndarray
    plant_norm: np.ndarray
    xi: np.ndarray
    snap_t: np.ndarray
    z_snap: np.ndarray
    X_hat: np.ndarray | None = None
    beta_hat: np.ndarray | None = None
    err_X: np.ndarray | None = None
    err_z: np.ndarray | None = None
    err_total: np.ndarray | None = None
    observer_norm: np.ndarray | None = None
    zerr_snap: np.ndarray | None = None
    aborted_at: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def has_observer(self) -> bool:
        return self.X_hat is not None

    def at(self, time: float) -> int:
        """Index of the logged sample closest to ``time``."""
        return int(np.argmin(np.abs(self.t - time)))


def plant_rhs(state: PlantState, delta, mats: SystemMatrices) -> PlantState:
    """Semi-discrete right-hand side; node 0 derivative is zero."""
    X, z = state.X, state.z
    n_cells = z.shape[1] - 1
    delta = np.asarray(delta, dtype=float)
    dX = mats.A1 @ X + mats.G @ apply_K1(z, mats)
    src = apply_K2(z, mats) + mats.A2 @ X + mats.B @ delta
    dz = np.zeros_like(z)
    dz[:, 1:] = -mats.lam[:, None] * n_cells * np.diff(z, axis=1) + src[:, None]
    return PlantState(dX, dz)


def step(state: PlantState, delta, dt: float, mats: SystemMatrices) -> PlantState:
    """One explicit-Euler step; re-imposes ``z(0) = 0`` exactly."""
    d = plant_rhs(state, delta, mats)
    new = PlantState(state.X + dt * d.X, state.z + dt * d.z)
    new.z[:, 0] = 0.0
    return new


def state_norm(state: PlantState) -> float:
    """``sqrt(|X|_2^2 + |z|_L2^2)``."""
    return math.sqrt(float(state.X @ state.X) + l2_norm(state.z) ** 2)


def _prepare_ic(ic: PlantState, grid: GridSpec, what: str = "plant") -> PlantState:
    if ic.n_cells != grid.N:
        raise ValueError(f"{what} IC has {ic.n_cells} cells, grid has N={grid.N}")
    if not ic.is_finite():
        raise ValueError(f"{what} IC contains non-finite entries")
    ic = ic.copy()
    if ic.project_bc():
        log.warning("%s IC violates z(0)=0; node 0 projected to zero", what)
    return ic


def _log_every(period: float, dt: float) -> int:
    k = max(1, int(round(period / dt)))
    return k


def _empty_filter_args():
    return dict(
        filter_kind=_kernels.FILTER_NONE,
        fphi=np.zeros(0, dtype=complex),
        fgam=np.zeros(0, dtype=complex),
        residues=np.zeros((0, 2, 2), dtype=complex),
        pweight=np.zeros(0),
        Dff=np.zeros((2, 2)),
        fstate=np.zeros((0, 2), dtype=complex),
        taps=np.zeros((1, 2, 2)),
        tap_w=np.zeros(1),
        dt_kernel=1.0,
        kernel_every=1,
        ring=np.zeros((1, 2)),
    )


def run_march(
    mats: SystemMatrices,
    grid: GridSpec,
    steering: SteeringSpec,
    ic: PlantState,
    *,
    obs_ic: PlantState | None = None,
    sens_period=(1, 1),
    noise: np.ndarray | None = None,
    filter_args: dict | None = None,
    log_period: float = 1e-3,
    snapshot_period: float | None = None,
) -> SimTrace:
    """Shared driver for open- and closed-loop runs (compiled loop)."""
    grid.check_cfl(mats)
    n_steps = grid.n_steps
    log_every = _log_every(log_period, grid.dt)
    n_log = n_steps // log_every + 1
    snap_every = _log_every(snapshot_period, grid.dt) if snapshot_period else 0
    n_snap = n_steps // snap_every + 1 if snap_every else 0
    N = grid.N
    observer_on = obs_ic is not None

    X = ic.X.copy()
    z = np.ascontiguousarray(ic.z)
    if observer_on:
        Xh = obs_ic.X.copy()
        zh = np.ascontiguousarray(obs_ic.z)
    else:
        Xh = np.zeros(2)
        zh = np.zeros_like(z)
    if noise is None:
        noise = np.zeros((2, 1))
    fa = _empty_filter_args()
    if filter_args:
        fa.update(filter_args)

    off, amp, omg = steering.coefficients(mats.params.chi)
    logs = dict(
        log_t=np.zeros(n_log), log_X=np.zeros((n_log, 2)), log_F=np.zeros((n_log, 2)),
        log_d=np.zeros((n_log, 2)), log_Y=np.zeros((n_log, 2)), log_Ym=np.zeros((n_log, 2)),
        log_Xh=np.zeros((n_log, 2)), log_errX=np.zeros(n_log), log_errz=np.zeros(n_log),
        log_pnorm=np.zeros(n_log), log_onorm=np.zeros(n_log),
    )
    snaps = dict(
        snap_t=np.zeros(n_snap), snap_z=np.zeros((n_snap, 2, N + 1)),
        snap_e=np.zeros((n_snap, 2, N + 1)),
    )
    got, got_snap, abort = _kernels.march(
        X, z, Xh, zh,
        np.ascontiguousarray(mats.A1), np.ascontiguousarray(mats.G),
        np.ascontiguousarray(mats.A2), np.ascontiguousarray(mats.B),
        np.array(mats.lam), np.array(mats.k1), np.array(mats.k2),
        np.array(mats.C2[0]), np.array(mats.L_gain[:, 0]),
        trapezoid_weights(N + 1), float(N), float(grid.dt), n_steps, log_every, snap_every,
        off, amp, omg,
        observer_on, np.asarray(sens_period, dtype=np.int64), np.ascontiguousarray(noise, dtype=float),
        fa["filter_kind"], fa["fphi"], fa["fgam"], fa["residues"], fa["pweight"], fa["Dff"], fa["fstate"],
        fa["taps"], fa["tap_w"], float(fa["dt_kernel"]), int(fa["kernel_every"]), fa["ring"],
        **logs, **snaps,
    )
    aborted_at = None
    if abort >= 0:
        aborted_at = abort * grid.dt
        log.warning("non-finite state detected at t = %.6g s; run aborted", aborted_at)

    sl = slice(0, got)
    X_log = logs["log_X"][sl]
    trace = SimTrace(
        t=logs["log_t"][sl],
        X=X_log,
        beta=X_log[:, 0] / mats.params.v_x,
        forces=logs["log_F"][sl],
        delta=logs["log_d"][sl],
        Y=logs["log_Y"][sl],
        Y_meas=logs["log_Ym"][sl],
        plant_norm=logs["log_pnorm"][sl],
        xi=grid.xi,
        snap_t=snaps["snap_t"][:got_snap],
        z_snap=snaps["snap_z"][:got_snap],
        aborted_at=aborted_at,
        meta={"N": N, "dt": grid.dt, "T": grid.T, "cfl": grid.cfl(mats), "log_every": log_every},
    )
    if observer_on:
        Xh_log = logs["log_Xh"][sl]
        ex = logs["log_errX"][sl]
        ez = logs["log_errz"][sl]
        trace.X_hat = Xh_log
        trace.beta_hat = Xh_log[:, 0] / mats.params.v_x
        trace.err_X = ex
        trace.err_z = ez
        trace.err_total = np.sqrt(ex**2 + ez**2)
        trace.observer_norm = logs["log_onorm"][sl]
        trace.zerr_snap = snaps["snap_e"][:got_snap]
    trace.meta["final_state"] = PlantState(X, z)
    if observer_on:
        trace.meta["final_observer"] = PlantState(Xh, zh)
    return trace


def simulate_open_loop(
    ic: PlantState,
    steering: SteeringSpec,
    grid: GridSpec,
    mats: SystemMatrices,
    *,
    log_period: float = 1e-3,
    snapshot_period: float | None = None,
) -> SimTrace:
    """Simulate the plant alone. A blow-up stops the run and sets ``aborted_at``."""
    ic = _prepare_ic(ic, grid)
    return run_march(mats, grid, steering, ic, log_period=log_period,
                     snapshot_period=snapshot_period)


def simulate_reference(ic: PlantState, steering: SteeringSpec, grid: GridSpec,
                       mats: SystemMatrices, n_steps: int | None = None) -> PlantState:
    """Pure NumPy march with ``step``; slow, used to check the compiled loop."""
    state = _prepare_ic(ic, grid)
    n = grid.n_steps if n_steps is None else n_steps
    for k in range(n):
        state = step(state, steering(k * grid.dt, mats.params.chi), grid.dt, mats)
    return state
