"""Stable rational approximation of sampled frequency responses.

Pole relocation follows the vector-fitting scheme: with the poles held
fixed, a weighting function ``sigma(s) = 1 + sum c_n / (s - a_n)`` and the
numerators of every matrix entry are fitted jointly by linear least squares,
and the zeros of ``sigma`` become the new poles. All entries share one pole
set. Unstable poles are reflected into the left half-plane every iteration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .freq import FrequencyResponse, _sigma_max


class FitError(RuntimeError):
    """No model order reached the requested accuracy."""

    def __init__(self, message: str, best: "RationalFilter | None" = None):
        super().__init__(message)
        self.best = best


def _sort_poles(poles: np.ndarray, imag_tol: float = 1e-10) -> np.ndarray:
    """Real poles first, then complex poles as adjacent (a, conj(a)) pairs."""
    poles = np.asarray(poles, dtype=complex)
    real_mask = np.abs(poles.imag) <= imag_tol * np.maximum(1.0, np.abs(poles))
    real = np.sort(poles[real_mask].real).astype(complex)
    upper = poles[~real_mask & (poles.imag > 0)]
    upper = upper[np.argsort(np.abs(upper))]
    pairs = np.empty(2 * upper.size, dtype=complex)
    pairs[0::2] = upper
    pairs[1::2] = upper.conj()
    return np.concatenate([real, pairs])


def _layout(poles: np.ndarray):
    """Per-pole type: 0 real, 1 first of pair, 2 second of pair."""
    kind = np.zeros(poles.size, dtype=int)
    i = 0
    while i < poles.size:
        if poles[i].imag != 0.0:
            kind[i], kind[i + 1] = 1, 2
            i += 2
        else:
            i += 1
    return kind


def _basis(s: np.ndarray, poles: np.ndarray, kind: np.ndarray) -> np.ndarray:
    """Real-coefficient partial-fraction basis, shape (n_s, n_poles)."""
    phi = np.empty((s.size, poles.size), dtype=complex)
    for n, (a, kd) in enumerate(zip(poles, kind)):
        if kd == 0:
            phi[:, n] = 1.0 / (s - a)
        elif kd == 1:
            phi[:, n] = 1.0 / (s - a) + 1.0 / (s - a.conjugate())
            phi[:, n + 1] = 1j / (s - a) - 1j / (s - a.conjugate())
    return phi


def _stack(m: np.ndarray) -> np.ndarray:
    return np.concatenate([m.real, m.imag], axis=0)


def _relocate(s, F, poles, kind):
    """One pole-relocation step; ``F`` has shape (n_s, n_entries)."""
    n_s, n_e = F.shape
    N = poles.size
    phi = _basis(s, poles, kind)
    blocks = []
    rhs = []
    base = np.hstack([phi, np.ones((n_s, 1))])
    k = N + 1
    for e in range(n_e):
        A = _stack(np.hstack([base, -F[:, e : e + 1] * phi]))
        b = _stack(F[:, e])
        scale = np.linalg.norm(A, axis=0)
        scale[scale == 0] = 1.0
        # eliminate the entry's own numerator unknowns, keep the sigma block
        # factor [A | b]: the last column of R holds Q^T b
        R = scipy.linalg.qr(np.hstack([A / scale, b[:, None]]), mode="r",
                            overwrite_a=True, check_finite=False)[0]
        blocks.append(R[k:-1, k:-1] * scale[k:])
        rhs.append(R[k:-1, -1])
    Rs = np.vstack(blocks)
    sc = np.linalg.norm(Rs, axis=0)
    sc[sc == 0] = 1.0
    c_scaled, *_ = np.linalg.lstsq(Rs / sc, np.concatenate(rhs), rcond=None)
    c_sigma = c_scaled / sc

    A = np.zeros((N, N))
    bvec = np.zeros(N)
    for n, (a, kd) in enumerate(zip(poles, kind)):
        if kd == 0:
            A[n, n] = a.real
            bvec[n] = 1.0
        elif kd == 1:
            A[n, n], A[n, n + 1] = a.real, a.imag
            A[n + 1, n], A[n + 1, n + 1] = -a.imag, a.real
            bvec[n], bvec[n + 1] = 2.0, 0.0
    new = np.linalg.eigvals(A - np.outer(bvec, c_sigma))
    new = np.where(new.real > 0, -new.real + 1j * new.imag, new)
    new = np.where(new.real == 0, -1e-12 * np.abs(new) - 1e-300 + 1j * new.imag, new)
    return _sort_poles(new)


def _residues(s, F, poles, kind, with_d: bool = True):
    """Least-squares residues and constant term for fixed poles."""
    n_s, n_e = F.shape
    phi = _basis(s, poles, kind)
    base = np.hstack([phi, np.ones((n_s, 1))]) if with_d else phi
    A = _stack(base)
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    coef, *_ = np.linalg.lstsq(A / scale, _stack(F), rcond=None)
    coef = coef / scale[:, None]
    res = np.zeros((poles.size, n_e), dtype=complex)
    for n, kd in enumerate(kind):
        if kd == 0:
            res[n] = coef[n]
        elif kd == 1:
            res[n] = coef[n] + 1j * coef[n + 1]
            res[n + 1] = coef[n] - 1j * coef[n + 1]
    d = coef[-1] if with_d else np.zeros(n_e)
    return res, d


def initial_poles(order: int, w_min: float, w_max: float) -> np.ndarray:
    """Lightly damped complex pairs log-spaced over the band (plus one real pole if odd)."""
    n_pairs = order // 2
    beta = np.logspace(math.log10(max(w_min, 1e-12)), math.log10(w_max), max(n_pairs, 1))[:n_pairs]
    poles = []
    if order % 2:
        poles.append(-complex(math.sqrt(w_min * w_max)))
    for b in beta:
        poles += [complex(-b / 100.0, b), complex(-b / 100.0, -b)]
    return _sort_poles(np.array(poles))


@dataclass
class RationalFilter:
    """``H(s) ~ D + sum_n R_n / (s - p_n)`` with a shared stable pole set.

    ``residues`` has shape ``(n_poles, p, q)``; conjugate poles carry
    conjugate residues so the impulse response is real.
    """

    poles: np.ndarray
    residues: np.ndarray
    D: np.ndarray
    fit_error: float = float("nan")
    meta: dict | None = None

    def __post_init__(self) -> None:
        self.poles = np.asarray(self.poles, dtype=complex)
        self.residues = np.asarray(self.residues, dtype=complex)
        self.D = np.asarray(self.D, dtype=float)
        if self.residues.ndim == 1:
            self.residues = self.residues[:, None, None]
        if self.D.ndim == 0:
            self.D = self.D.reshape(1, 1)
        if np.any(self.poles.real >= 0):
            raise ValueError("all poles must have negative real part")
        if self.residues.shape[0] != self.poles.size:
            raise ValueError("one residue matrix per pole is required")
        up = self.poles[self.poles.imag > 0]
        lo = self.poles[self.poles.imag < 0]
        if up.size != lo.size or not np.allclose(np.sort_complex(up.conj()), np.sort_complex(lo)):
            raise ValueError("complex poles must come in conjugate pairs")

    @property
    def order(self) -> int:
        return int(self.poles.size)

    @property
    def shape(self) -> tuple:
        return self.residues.shape[1:]

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        terms = self.residues[None] / (s.reshape(-1, 1, 1, 1) - self.poles[None, :, None, None])
        out = terms.sum(axis=1) + self.D[None]
        return out.reshape(s.shape + self.shape)

    def max_stiffness(self, dt: float) -> float:
        return float(np.max(np.abs(self.poles)) * dt) if self.order else 0.0

    def upper(self):
        """Real poles (weight 1) and upper-half-plane poles (weight 2)."""
        keep = self.poles.imag >= 0
        weight = np.where(self.poles[keep].imag > 0, 2.0, 1.0)
        return self.poles[keep], self.residues[keep], weight

    def zoh_coefficients(self, dt: float):
        """Exact zero-order-hold update ``x <- phi x + gam u`` for each state of ``upper()``."""
        poles = self.upper()[0]
        phi = np.exp(poles * dt)
        return phi, np.expm1(poles * dt) / poles

    def to_json(self, path) -> None:
        payload = {
            "format": "rational-filter",
            "version": 1,
            "order": self.order,
            "fit_error": self.fit_error,
            "meta": self.meta or {},
            "poles": [[p.real, p.imag] for p in self.poles],
            "residues_re": self.residues.real.tolist(),
            "residues_im": self.residues.imag.tolist(),
            "D": self.D.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "RationalFilter":
        with open(path) as fh:
            d = json.load(fh)
        if d.get("format") != "rational-filter":
            raise ValueError(f"{path}: not a rational-filter file")
        poles = np.array([complex(a, b) for a, b in d["poles"]])
        res = np.array(d["residues_re"]) + 1j * np.array(d["residues_im"])
        return cls(poles, res.reshape(poles.size, *np.shape(d["D"])), np.array(d["D"]),
                   fit_error=d["fit_error"], meta=d.get("meta"))


def relative_hinf_error(model, resp: FrequencyResponse) -> float:
    """``max sigma(model - data) / max sigma(data)`` over the response grid."""
    data = resp.as_matrix()
    fit = model(1j * resp.omega).reshape(data.shape)
    return float(_sigma_max(fit - data).max() / _sigma_max(data).max())


def vector_fit(resp: FrequencyResponse, order: int, *, n_iter: int = 30,
               poles=None, with_d: bool = True) -> RationalFilter:
    """Fit a rational model of fixed ``order`` to ``resp``."""
    s = 1j * resp.omega
    data = resp.as_matrix()
    n_s, p, q = data.shape
    F = data.reshape(n_s, p * q)
    w_pos = resp.omega[resp.omega > 0]
    if poles is None:
        poles = initial_poles(order, w_pos.min(), w_pos.max())
    poles = _sort_poles(poles)
    last = None
    for _ in range(n_iter):
        poles = _relocate(s, F, poles, _layout(poles))
        if last is not None and last.size == poles.size:
            if np.max(np.abs(poles - last) / np.maximum(np.abs(poles), 1e-12)) < 1e-12:
                break
        last = poles
    res, d = _residues(s, F, poles, _layout(poles), with_d)
    # entries of a real system: the constant term is real by construction
    model = RationalFilter(poles, res.reshape(-1, p, q), d.reshape(p, q))
    model.fit_error = relative_hinf_error(model, resp)
    return model


def fit_rational(resp: FrequencyResponse, order_max: int = 40, tol: float = 1e-3, *,
                 orders=None, dt: float | None = None, max_stiffness: float = 0.1,
                 n_iter: int = 30) -> RationalFilter:
    """Lowest order in ``orders`` (default 4, 8, ..., ``order_max``) meeting ``tol``.

    With ``dt`` given, fits whose fastest pole violates
    ``max|pole| * dt <= max_stiffness`` are rejected. Raises ``FitError``
    (carrying the best fit) when no order succeeds.
    """
    orders = list(range(4, order_max + 1, 4)) if orders is None else list(orders)
    best = None
    tried = []
    for n in orders:
        model = vector_fit(resp, n, n_iter=n_iter)
        stiff_ok = dt is None or model.max_stiffness(dt) <= max_stiffness
        tried.append((n, model.fit_error, stiff_ok))
        if stiff_ok and (best is None or model.fit_error < best.fit_error):
            best = model
        if stiff_ok and model.fit_error <= tol:
            model.meta = {"order": n, "tol": tol, "tried": [[a, b] for a, b, _ in tried]}
            return model
    summary = ", ".join(f"order {n}: {e:.3g}{'' if ok else ' (too stiff)'}" for n, e, ok in tried)
    raise FitError(f"no order reached relative error {tol:g} ({summary})", best)
