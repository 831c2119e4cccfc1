"""Vehicle parameters, constant system matrices and the output maps.

The lumped state is ``X = [v_y, r]`` and the distributed state ``z`` is the
lateral bristle deformation of the front and rear tire, sampled on ``N + 1``
uniform nodes of the nondimensional contact-patch coordinate ``xi in [0, 1]``.
Grid functions are stored as arrays of shape ``(2, N + 1)``: row ``i`` is the
axle, column ``j`` the node ``xi_j = j / N``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

_POSITIVE_FIELDS = (
    "v_x", "m", "I_z", "l_1", "l_2", "F_z1", "F_z2",
    "L_1", "L_2", "sigma_1", "sigma_2",
)


class ParameterError(ValueError):
    """Raised when a parameter violates its admissible range."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the linear single-track model.

    Defaults are the reference vehicle (50 m/s, 1300 kg). ``psi_i`` is never
    stored; it is always ``1 - phi_i``.
    """

    v_x: float = 50.0
    m: float = 1300.0
    I_z: float = 2000.0
    l_1: float = 1.4
    l_2: float = 1.0
    F_z1: float = 2660.0
    F_z2: float = 3720.0
    L_1: float = 0.1
    L_2: float = 0.1
    sigma_1: float = 263.0
    sigma_2: float = 242.0
    phi_1: float = 0.92
    phi_2: float = 0.92
    chi: int = 0

    def __post_init__(self) -> None:
        for name in _POSITIVE_FIELDS:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ParameterError(name, f"must be finite and > 0, got {value!r}")
        for name in ("phi_1", "phi_2"):
            value = getattr(self, name)
            if not (0.0 < value <= 1.0):
                raise ParameterError(name, f"must lie in (0, 1], got {value!r}")
        if self.chi not in (0, 1):
            raise ParameterError("chi", f"chi must be in {{0, 1}}, got {self.chi!r}")

    @property
    def psi_1(self) -> float:
        return 1.0 - self.phi_1

    @property
    def psi_2(self) -> float:
        return 1.0 - self.phi_2

    def replace(self, **changes) -> "VehicleParams":
        return dataclasses.replace(self, **changes)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemMatrices:
    """Constant matrices of the coupled ODE-PDE model.

    ``lam``, ``k1`` and ``k2`` hold the diagonals of ``Lambda``, ``K1`` and
    ``K2``; the full matrices are exposed as properties.
    """

    params: VehicleParams
    A1: np.ndarray
    A2: np.ndarray
    G: np.ndarray
    B: np.ndarray
    lam: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    L_gain: np.ndarray

    @property
    def Lambda(self) -> np.ndarray:
        return np.diag(self.lam)

    @property
    def K1(self) -> np.ndarray:
        return np.diag(self.k1)

    @property
    def K2(self) -> np.ndarray:
        return np.diag(self.k2)

    @property
    def phi(self) -> np.ndarray:
        return np.array([self.params.phi_1, self.params.phi_2])

    @property
    def psi(self) -> np.ndarray:
        return 1.0 - self.phi


def build_matrices(params: VehicleParams) -> SystemMatrices:
    """Assemble every constant matrix of the model from ``params``."""
    p = params
    if not isinstance(p, VehicleParams):
        raise TypeError("params must be a VehicleParams instance")
    vx = p.v_x
    A1 = [[0.0, -vx], [0.0, 0.0]]
    A2 = [[2.0 * p.phi_1, 2.0 * p.phi_1 * p.l_1],
          [2.0 * p.phi_2, -2.0 * p.phi_2 * p.l_2]]
    G = [[-1.0 / p.m, -1.0 / p.m],
         [-p.l_1 / p.I_z, p.l_2 / p.I_z]]
    B = [[-2.0 * vx * p.phi_1, 0.0],
         [0.0, -2.0 * vx * p.chi * p.phi_2]]
    lam = [vx / p.L_1, vx / p.L_2]
    k1 = [p.F_z1 * p.sigma_1, p.F_z2 * p.sigma_2]
    k2 = [vx * p.psi_1 / p.L_1, vx * p.psi_2 / p.L_2]
    return SystemMatrices(
        params=p,
        A1=_frozen(A1),
        A2=_frozen(A2),
        G=_frozen(G),
        B=_frozen(B),
        lam=_frozen(lam),
        k1=_frozen(k1),
        k2=_frozen(k2),
        C1=_frozen([[0.0, 1.0]]),
        C2=_frozen([[-1.0 / p.m, -1.0 / p.m]]),
        L_gain=_frozen([[vx], [0.0]]),
    )


def trapezoid_weights(n_nodes: int) -> np.ndarray:
    """Composite-trapezoid weights on ``n_nodes`` uniform nodes of [0, 1]."""
    if n_nodes < 2:
        raise ValueError("a grid function needs at least 2 nodes")
    h = 1.0 / (n_nodes - 1)
    w = np.full(n_nodes, h)
    w[0] = w[-1] = 0.5 * h
    return w


def integrate(z: np.ndarray) -> np.ndarray:
    """Trapezoid integral over [0, 1] of each row of the grid function ``z``."""
    z = np.asarray(z, dtype=float)
    return z @ trapezoid_weights(z.shape[-1])


def l2_norm(z: np.ndarray) -> float:
    """L2((0,1); R^2) norm of a grid function (trapezoid quadrature)."""
    z = np.asarray(z, dtype=float)
    return float(np.sqrt(np.sum((z * z) @ trapezoid_weights(z.shape[-1]))))


def apply_K1(z: np.ndarray, mats: SystemMatrices) -> np.ndarray:
    """Integral coupling ``int_0^1 K1 z(xi) dxi``."""
    return mats.k1 * integrate(z)


def apply_K2(z: np.ndarray, mats: SystemMatrices) -> np.ndarray:
    """Boundary coupling ``K2 z(1)``."""
    z = np.asarray(z, dtype=float)
    return mats.k2 * z[:, -1]


def axle_forces(z: np.ndarray, mats: SystemMatrices) -> np.ndarray:
    """Front and rear lateral tire forces (N), i.e. ``K1 z`` before ``G``."""
    return apply_K1(z, mats)


def sideslip(X, params: VehicleParams) -> float:
    """Sideslip angle ``v_y / v_x`` in rad."""
    return float(X[0]) / params.v_x


@dataclass
class PlantState:
    """Lumped state ``X`` plus the distributed state ``z`` of shape (2, N+1)."""

    X: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.array(self.X, dtype=float).reshape(2)
        self.z = np.array(self.z, dtype=float)
        if self.z.ndim != 2 or self.z.shape[0] != 2 or self.z.shape[1] < 2:
            raise ValueError(f"z must have shape (2, N+1) with N >= 1, got {self.z.shape}")

    @property
    def n_cells(self) -> int:
        return self.z.shape[1] - 1

    @classmethod
    def zeros(cls, n_cells: int) -> "PlantState":
        return cls(np.zeros(2), np.zeros((2, n_cells + 1)))

    @classmethod
    def uniform(cls, X, z_value, n_cells: int) -> "PlantState":
        """State with ``z`` constant in xi (node 0 included, see ``project_bc``)."""
        z = np.repeat(np.asarray(z_value, dtype=float).reshape(2, 1), n_cells + 1, axis=1)
        return cls(X, z)

    def project_bc(self) -> bool:
        """Zero node 0 in place. Returns True if the state was modified."""
        changed = bool(np.any(self.z[:, 0] != 0.0))
        self.z[:, 0] = 0.0
        return changed

    def copy(self) -> "PlantState":
        return PlantState(self.X.copy(), self.z.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.z)))


def measurement(state: PlantState, mats: SystemMatrices) -> np.ndarray:
    """Outputs ``[r, a_y]``: yaw rate and lateral acceleration."""
    y1 = float(mats.C1[0] @ state.X)
    y2 = float(mats.C2[0] @ apply_K1(state.z, mats))
    return np.array([y1, y2])
