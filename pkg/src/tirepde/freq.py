"""Laplace-domain transfer functions of the error dynamics and H-infinity tools.

Because ``Lambda``, ``K1`` and ``K2`` are diagonal, every transcendental
object reduces to two scalar functions of ``u = s / lambda_i``::

    e1(u) = (1 - exp(-u)) / u          (-> 1   as u -> 0)
    e2(u) = (u - 1 + exp(-u)) / u**2   (-> 1/2 as u -> 0)

Both are evaluated from their Taylor series near ``u = 0`` to avoid
cancellation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .model import SystemMatrices

SERIES_RADIUS = 1e-3
_N_TERMS = 8
# e1 = sum_k (-u)^k / (k+1)!,  e2 = sum_k (-u)^k / (k+2)!
_E1_COEF = np.array([(-1.0) ** k / math.factorial(k + 1) for k in range(_N_TERMS)])
_E2_COEF = np.array([(-1.0) ** k / math.factorial(k + 2) for k in range(_N_TERMS)])


class SingularityError(ArithmeticError):
    """A matrix that must be inverted is numerically singular."""


def _series(coef, u):
    acc = np.zeros_like(u)
    for c in coef[::-1]:
        acc = acc * u + c
    return acc


def e1(u):
    u = np.asarray(u, dtype=complex)
    small = np.abs(u) < SERIES_RADIUS
    safe = np.where(small, 1.0, u)
    return np.where(small, _series(_E1_COEF, u), -np.expm1(-safe) / safe)


def e2(u):
    u = np.asarray(u, dtype=complex)
    small = np.abs(u) < SERIES_RADIUS
    safe = np.where(small, 1.0, u)
    return np.where(small, _series(_E2_COEF, u), (safe + np.expm1(-safe)) / (safe * safe))


# -- distributed-parameter building blocks -----------------------------------

def gamma_matrix(xi: float, s: complex, mats: SystemMatrices) -> np.ndarray:
    """``Gamma(xi, s) = int_0^xi exp(-Lambda^-1 s (xi - xi')) dxi'`` (diagonal)."""
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [0, 1], got {xi!r}")
    u = complex(s) / mats.lam
    return np.diag(xi * e1(u * xi))


def xi_matrix(xi: float, s: complex, mats: SystemMatrices) -> np.ndarray:
    """``Xi(xi, s) = Gamma(xi, s) Lambda^-1 A2``."""
    return gamma_matrix(xi, s, mats) @ np.diag(1.0 / mats.lam) @ mats.A2


def theta_psi(s: complex, mats: SystemMatrices):
    """``(Theta1, Theta2, Psi1, Psi2)`` at ``s`` in closed form."""
    u = complex(s) / mats.lam
    int_gamma = e2(u)                 # int_0^1 Gamma_ii dxi
    gamma_1 = e1(u)                   # Gamma_ii(1, s)
    inv_lam = np.diag(1.0 / mats.lam)
    theta1 = np.diag(mats.k1 * int_gamma) @ inv_lam
    theta2 = np.diag(mats.k2 * gamma_1) @ inv_lam
    psi1 = theta1 @ mats.A2
    psi2 = theta2 @ mats.A2
    return theta1, theta2, psi1, psi2


def H1(s: complex, mats: SystemMatrices, cond_max: float = 1e12) -> np.ndarray:
    """Map from lumped error to ``K1`` applied to the distributed error."""
    theta1, theta2, psi1, psi2 = theta_psi(s, mats)
    block = np.zeros((4, 4), dtype=complex)
    block[:2, :2] = np.eye(2)
    block[:2, 2:] = -theta1
    block[2:, 2:] = np.eye(2) - theta2
    cond = np.linalg.cond(block)
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularityError(f"H1 block matrix near-singular at s={s!r} (cond ~ {cond:.3g})")
    rhs = np.vstack([psi1, psi2])
    return np.linalg.solve(block, rhs)[:2]


def h_factor(s, mats: SystemMatrices) -> np.ndarray:
    """Scalar factors ``h_i(s)`` with ``H1 = diag(k1_i h_i) A2``; shape (..., 2)."""
    s = np.asarray(s, dtype=complex)
    u = s[..., None] / mats.lam
    return (e2(u) / mats.lam) / (1.0 - mats.psi * e1(u))


def H1_closed(s, mats: SystemMatrices) -> np.ndarray:
    """Vectorized ``H1`` from the diagonal factorization; shape (..., 2, 2)."""
    h = h_factor(s, mats)
    return (mats.k1 * h)[..., :, None] * mats.A2


def H1_discretized(s: complex, mats: SystemMatrices, n_cells: int = 2000) -> np.ndarray:
    """``H1(s)`` from the Laplace-transformed PDE solved on a grid in ``xi``.

    Per axle, ``lambda q' = -s q + 1`` with ``q(0) = 0`` is marched with the
    trapezoidal rule; the boundary feedback then gives
    ``z = q a X / (1 - k2 q(1))`` and the force is ``k1 int z``.
    """
    s = complex(s)
    dxi = 1.0 / n_cells
    out = np.zeros(2, dtype=complex)
    for i in range(2):
        lam = mats.lam[i]
        a = s * dxi / (2.0 * lam)
        q = np.zeros(n_cells + 1, dtype=complex)
        for j in range(n_cells):
            q[j + 1] = ((1.0 - a) * q[j] + dxi / lam) / (1.0 + a)
        int_q = dxi * (q.sum() - 0.5 * (q[0] + q[-1]))
        out[i] = mats.k1[i] * int_q / (1.0 - mats.k2[i] * q[-1])
    return out[:, None] * mats.A2


def C_of_s(s: complex, mats: SystemMatrices) -> np.ndarray:
    """Output map of the lumped error, rows ``C1`` and ``C2 H1(s)``."""
    C = np.zeros((2, 2), dtype=complex)
    C[0] = mats.C1[0]
    C[1] = mats.C2[0] @ H1(s, mats)
    return C


def _inv2(C: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    det = C[..., 0, 0] * C[..., 1, 1] - C[..., 0, 1] * C[..., 1, 0]
    scale = np.max(np.abs(C), axis=(-2, -1)) ** 2
    if np.any(np.abs(det) <= rel_tol * scale):
        raise SingularityError(f"det C = {det!r} is below {rel_tol:g} x scale")
    adj = np.empty_like(C)
    adj[..., 0, 0] = C[..., 1, 1]
    adj[..., 1, 1] = C[..., 0, 0]
    adj[..., 0, 1] = -C[..., 0, 1]
    adj[..., 1, 0] = -C[..., 1, 0]
    return adj / det[..., None, None]


def Cinv_of_s(s: complex, mats: SystemMatrices) -> np.ndarray:
    return _inv2(C_of_s(s, mats))


def detC_reduced(s, mats: SystemMatrices):
    """``F_z1 sigma_1 phi_1 h_1(s) + F_z2 sigma_2 phi_2 h_2(s)``.

    This is the positive combination whose zeros are those of ``det C``; it
    differs from the determinant by the constant factor ``2/m`` (see
    ``detC_closed``). Its value at ``s = 0`` is ``sum(F_zi sigma_i) / (2 lambda)``
    for equal transport rates.
    """
    h = h_factor(s, mats)
    return np.sum(mats.k1 * mats.phi * h, axis=-1)


def detC_closed(s, mats: SystemMatrices):
    """Closed-form ``det C(s)``.

    Row 1 of ``C`` is ``[0, 1]``, so ``det C = -C2 H1[:, 0]``, and the first
    column of ``A2`` is ``2 phi``; with ``C2 = -[1/m, 1/m]`` this gives
    ``(2/m) * detC_reduced``.
    """
    c2 = mats.C2[0]
    a2 = mats.A2[:, 0]
    h = h_factor(s, mats)
    return -np.sum(c2 * mats.k1 * h * a2, axis=-1)


# -- filter and small-gain objects --------------------------------------------

def H2(s, gamma: float, eta: float):
    """``s / (s^2 + gamma s + eta gamma)``."""
    if gamma <= 0 or eta <= 0:
        raise ValueError("gamma and eta must be > 0")
    s = np.asarray(s, dtype=complex)
    return s / (s * s + gamma * s + eta * gamma)


def lowpass(s, gamma: float):
    """First-order filter ``gamma / (s + gamma)``."""
    s = np.asarray(s, dtype=complex)
    return gamma / (s + gamma)


def injection_gain(s, gamma: float, eta: float, mats: SystemMatrices) -> np.ndarray:
    """``-lowpass(s) [eta I + G H1(s)] C^-1(s)``, vectorized over ``s``."""
    s = np.asarray(s, dtype=complex)
    h1 = H1_closed(s, mats)
    C = np.zeros(s.shape + (2, 2), dtype=complex)
    C[..., 0, :] = mats.C1[0]
    C[..., 1, :] = np.einsum("j,...jk->...k", mats.C2[0], h1)
    Cinv = _inv2(C)
    inner = eta * np.eye(2) + mats.G @ h1
    return -lowpass(s, gamma)[..., None, None] * (inner @ Cinv)


@dataclass
class FrequencyResponse:
    """Samples of a transfer function on ``s = i omega``.

    ``samples`` has shape ``(n,)`` for scalar responses or ``(n, p, q)``.
    ``func`` (optional) evaluates the response at arbitrary ``omega`` and is
    used for local refinement of the H-infinity estimate.
    """

    omega: np.ndarray
    samples: np.ndarray
    name: str = ""
    func: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.omega = np.asarray(self.omega, dtype=float)
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.omega.ndim != 1 or np.any(np.diff(self.omega) <= 0):
            raise ValueError("omega grid must be one-dimensional and strictly ascending")
        if self.samples.shape[0] != self.omega.size:
            raise ValueError("sample count must equal grid length")

    @property
    def is_scalar(self) -> bool:
        return self.samples.ndim == 1

    def as_matrix(self) -> np.ndarray:
        if self.is_scalar:
            return self.samples[:, None, None]
        return self.samples

    def sigma_max(self) -> np.ndarray:
        return _sigma_max(self.as_matrix())

    def to_csv(self, path) -> None:
        m = self.as_matrix()
        p, q = m.shape[1:]
        header = ["omega"]
        for i in range(p):
            for j in range(q):
                header += [f"re_{i + 1}{j + 1}", f"im_{i + 1}{j + 1}"]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for k, w in enumerate(self.omega):
                row = [f"{w:.10e}"]
                for i in range(p):
                    for j in range(q):
                        row += [f"{m[k, i, j].real:.10e}", f"{m[k, i, j].imag:.10e}"]
                wr.writerow(row)

    @classmethod
    def from_csv(cls, path, name: str = "") -> "FrequencyResponse":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        omega = data[:, 0]
        vals = data[:, 1::2] + 1j * data[:, 2::2]
        n_entries = vals.shape[1]
        p = int(round(math.sqrt(n_entries)))
        samples = vals[:, 0] if n_entries == 1 else vals.reshape(-1, p, n_entries // p)
        return cls(omega, samples, name=name)


def _sigma_max(m: np.ndarray) -> np.ndarray:
    if m.shape[-2:] == (1, 1):
        return np.abs(m[..., 0, 0])
    return np.linalg.svd(m, compute_uv=False)[..., 0]


def default_grid(n: int = 2000, lo: float = 1e-2, hi: float = 1e5) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def respond(func: Callable, omega, name: str = "") -> FrequencyResponse:
    """Sample ``func(s)`` (vectorized in ``s``) on ``s = i omega``."""
    omega = np.asarray(omega, dtype=float)
    return FrequencyResponse(omega, func(1j * omega), name=name,
                             func=lambda w: func(1j * np.asarray(w, dtype=float)))


def H1_response(mats: SystemMatrices, omega=None) -> FrequencyResponse:
    omega = default_grid() if omega is None else omega
    return respond(lambda s: H1_closed(s, mats), omega, "H1")


def H2_response(gamma: float, eta: float, omega=None) -> FrequencyResponse:
    omega = default_grid() if omega is None else omega
    return respond(lambda s: H2(s, gamma, eta), omega, "H2")


def injection_gain_response(omega, gamma: float, eta: float,
                            mats: SystemMatrices) -> FrequencyResponse:
    """Samples of the injection gain; ``omega = 0`` is allowed (series limits)."""
    resp = respond(lambda s: injection_gain(s, gamma, eta, mats), omega, "Hhat")
    if not np.all(np.isfinite(resp.samples)):
        raise SingularityError("injection gain response contains non-finite samples")
    return resp


@dataclass(frozen=True)
class HinfEstimate:
    value: float
    omega_peak: float


def hinf_estimate(resp: FrequencyResponse) -> HinfEstimate:
    """Grid supremum of the largest singular value, refined by golden section.

    Refinement needs ``resp.func`` and an interior grid maximum; otherwise the
    grid value is returned.
    """
    sig = resp.sigma_max()
    k = int(np.argmax(sig))
    best, w_best = float(sig[k]), float(resp.omega[k])
    if resp.func is None or k == 0 or k == resp.omega.size - 1 or resp.omega[0] <= 0:
        return HinfEstimate(best, w_best)

    def neg_sigma(logw):
        m = np.asarray(resp.func(np.array([10.0 ** logw])), dtype=complex)
        m = m.reshape(1, 1, 1) if m.size == 1 else m.reshape(1, *m.shape[-2:])
        return -float(_sigma_max(m)[0])

    lo, mid, hi = np.log10(resp.omega[[k - 1, k, k + 1]])
    res = minimize_scalar(neg_sigma, bracket=(lo, mid, hi), method="golden",
                          options={"xtol": 1e-10})
    if -res.fun > best and lo <= res.x <= hi:
        best, w_best = float(-res.fun), float(10.0 ** res.x)
    return HinfEstimate(best, w_best)


@dataclass(frozen=True)
class SmallGainReport:
    """Outcome of the small-gain test ``|H2|_inf < 1 / |H1|_inf``.

    ``lhs``/``rhs``/``satisfied`` are the literal test. ``loop_gain`` is
    ``|H2|_inf * |G H1|_inf``, the gain of the loop that actually closes
    around the lumped error, reported alongside for diagnosis.
    """

    gamma: float
    eta: float
    lhs: float
    rhs: float
    satisfied: bool
    hinf_H1: float
    omega_peak_H1: float
    hinf_GH1: float
    loop_gain: float
    margin: float

    @property
    def loop_satisfied(self) -> bool:
        return self.loop_gain * (1.0 + self.margin) < 1.0


def check_small_gain(gamma: float, eta: float, mats: SystemMatrices, *,
                   margin: float = 0.05, omega=None) -> SmallGainReport:
    """Evaluate the small-gain condition for filter corner ``gamma`` and gain ``eta``."""
    omega = default_grid() if omega is None else omega
    h2 = hinf_estimate(H2_response(gamma, eta, omega))
    h1 = hinf_estimate(H1_response(mats, omega))
    gh1 = hinf_estimate(respond(lambda s: mats.G @ H1_closed(s, mats), omega, "GH1"))
    lhs = h2.value
    rhs = 1.0 / h1.value
    return SmallGainReport(
        gamma=gamma, eta=eta, lhs=lhs, rhs=rhs,
        satisfied=bool(lhs * (1.0 + margin) < rhs),
        hinf_H1=h1.value, omega_peak_H1=h1.omega_peak,
        hinf_GH1=gh1.value, loop_gain=lhs * gh1.value, margin=margin,
    )
