"""Multi-branch complex Lambert W and stability certification of ``det C``.

Branch cuts follow the usual convention: ``W_0`` is cut along
``(-inf, -1/e]``, every other branch along ``(-inf, 0]``, and values on a cut
are those reached from above (counter-clockwise continuity).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .freq import detC_closed, h_factor
from .model import SystemMatrices

INV_E = math.exp(-1.0)
TWO_PI = 2.0 * math.pi
K_MAX_DEFAULT = 50
BRANCH_POINT_RADIUS = 1e-6
_SERIES_RADIUS = 0.25


class LambertWError(ArithmeticError):
    """Halley iteration failed or landed on the wrong branch."""


def _branch_point_series(p: complex) -> complex:
    # W = -1 + p - p^2/3 + 11/72 p^3 - 43/540 p^4, with p = +-sqrt(2(e w + 1))
    return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 - p * 43.0 / 540.0)))


def _branch_point_sign(k: int, w: complex) -> float | None:
    """Sign of the square root for branches meeting at -1/e, or None."""
    if k == 0:
        return 1.0
    if k == -1 and w.imag >= 0.0:
        return -1.0
    if k == 1 and w.imag < 0.0:
        return -1.0
    return None


def _branch_of_point(z: complex) -> int:
    """Branch whose range contains ``z`` (``z`` off the branch boundaries).

    Branch ranges are separated by the curves ``x = -y cot y`` for
    ``y`` in ``(2 j pi, (2 j + 1) pi)``; the lower half-plane mirrors the upper.
    """
    x, y = z.real, z.imag
    if y == 0.0:
        return 0 if x >= -1.0 else -1
    if y < 0.0:
        return -_branch_of_point(complex(x, -y))
    j = int(y // TWO_PI)
    rem = y - j * TWO_PI
    if rem == 0.0:
        return j
    if rem < math.pi:
        return j if x > -y / math.tan(y) else j + 1
    return j + 1


def branch_of(z: complex, w: complex) -> int:
    """Branch index of the solution ``z`` of ``z e^z = w``.

    Values of ``w`` on (or within roundoff of) the negative real axis map onto
    branch boundaries. They are classified after nudging ``w`` off the axis
    along the local derivative: upward on the axis itself (counter-clockwise
    rule), otherwise toward the side ``w`` lies on.
    """
    if w.real < 0.0 and abs(w.imag) <= 1e-12 * abs(w) and z != -1:
        eps = (1e-9 if w.imag >= 0.0 else -1e-9) * abs(w)
        z = z + 1j * eps * z / (w * (1.0 + z))
    return _branch_of_point(complex(z))


def _initial_guesses(k: int, w: complex):
    sign = _branch_point_sign(k, w)
    d = w + INV_E
    if sign is not None and abs(d) < _SERIES_RADIUS:
        yield _branch_point_series(sign * np.sqrt(2.0 * math.e * d))
    if k == 0 and abs(w) < 1.0:
        yield complex(np.log1p(w))
    L1 = np.log(w) + 1j * TWO_PI * k
    if L1 != 0:
        yield L1 - np.log(L1)
    if sign is not None:
        yield _branch_point_series(sign * np.sqrt(2.0 * math.e * d))
    yield L1


def _halley(w: complex, z: complex, max_iter: int) -> tuple[complex, bool]:
    # near -1/e the root is ill-conditioned, so a roundoff-level residual
    # counts as convergence even when the step has not shrunk to eps
    for _ in range(max_iter):
        ez = np.exp(z)
        f = z * ez - w
        if abs(f) <= 2e-16 * max(1.0, abs(w)):
            return z, True
        zp1 = z + 1.0
        if zp1 == 0:
            return z, False
        denom = ez * zp1 - (z + 2.0) * f / (2.0 * zp1)
        if denom == 0 or not np.isfinite(denom):
            return z, False
        dz = f / denom
        z = z - dz
        if abs(dz) <= 4e-16 * (1.0 + abs(z)):
            return z, True
    f = z * np.exp(z) - w
    return z, bool(abs(f) <= 1e-13 * max(1.0, abs(w)))


def lambert_w(k: int, w: complex, max_iter: int = 100) -> complex:
    """Branch ``k`` of the Lambert W function: the ``z`` with ``z e^z = w``.

    Uses Halley's method from an asymptotic-logarithm initializer, or the
    square-root expansion near the branch point ``-1/e``. Raises
    ``LambertWError`` rather than return a value from another branch.
    """
    k = int(k)
    w = complex(w)
    if w.imag == 0.0:
        w = complex(w.real, 0.0)  # -0.0 would select the sheet below the cut
    if not (np.isfinite(w.real) and np.isfinite(w.imag)):
        raise LambertWError(f"w must be finite, got {w!r}")
    if w == 0:
        if k == 0:
            return 0j
        raise LambertWError(f"W_{k}(0) is -infinity")
    d = w + INV_E
    sign = _branch_point_sign(k, w)
    if sign is not None and abs(d) < BRANCH_POINT_RADIUS:
        if d == 0:
            return complex(-1.0, 0.0)
        return _branch_point_series(sign * np.sqrt(2.0 * math.e * d))

    scale = max(1.0, abs(w))
    last = None
    for z0 in _initial_guesses(k, w):
        z, ok = _halley(w, complex(z0), max_iter)
        last = z
        if ok and branch_of(z, w) == k and abs(z * np.exp(z) - w) <= 1e-12 * scale:
            return z
    raise LambertWError(f"no convergence to branch {k} for w={w!r} (last iterate {last!r})")


def strip_bounds(k: int) -> tuple[float, float]:
    """Coarse horizontal strip containing ``Im W_k``."""
    if k == 0:
        return -math.pi, math.pi
    if k > 0:
        return (2 * k - 2) * math.pi, (2 * k + 1) * math.pi
    return (2 * k - 1) * math.pi, (2 * k + 2) * math.pi


def h_zeros(axle: int, k_range, mats: SystemMatrices, residual_tol: float = 1e-9) -> list[complex]:
    """Zeros ``s = lambda_i (W_k(-1/e) + 1)`` of the numerator of ``h_i``.

    ``axle`` is 1 or 2. Branches -1 and 0 give ``s = 0`` and are rejected.
    """
    if axle not in (1, 2):
        raise ValueError("axle must be 1 or 2")
    lam = float(mats.lam[axle - 1])
    out = []
    for k in k_range:
        if k in (-1, 0):
            raise ValueError("branches -1 and 0 give s = 0 and are excluded")
        u = lambert_w(k, complex(-INV_E, 0.0)) + 1.0
        res = abs(u + np.exp(-u) - 1.0)
        if res > residual_tol:
            raise LambertWError(f"zero for k={k} has residual {res:.3g}")
        out.append(lam * u)
    return out


def default_k_range(k_max: int = K_MAX_DEFAULT) -> list[int]:
    return [k for k in range(-k_max, k_max + 1) if k not in (-1, 0)]


@dataclass
class PoleCertificate:
    """Evidence that ``C^-1`` has no poles in the closed right half-plane."""

    zeros: dict = field(default_factory=dict)
    max_real_part: float = -math.inf
    max_residual: float = 0.0
    scan_min_abs_det: float = math.inf
    scan_floor: float = 0.0
    scan_argmin: complex = 0j
    min_re_h: float = math.inf
    min_re_h_at: complex = 0j
    det_at_zero: float = 0.0
    offending: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return (not self.offending and self.max_real_part < 0.0
                and self.scan_min_abs_det > self.scan_floor)

    @property
    def verdict(self) -> str:
        return "certified" if self.certified else "not-certified"

    def report(self) -> str:
        n = sum(len(v) for v in self.zeros.values())
        lines = [
            f"verdict: {self.verdict}",
            f"zeros computed: {n}",
            f"max real part of zeros: {self.max_real_part:.6g}",
            f"max transcendental residual: {self.max_residual:.3g}",
            f"det C(0): {self.det_at_zero:.9g}",
            f"min |det C| over right-half-plane scan: {self.scan_min_abs_det:.6g} "
            f"at s = {self.scan_argmin:.6g} (floor {self.scan_floor:.3g})",
            f"min Re h_i at random right-half-plane points: {self.min_re_h:.6g} "
            f"at s = {self.min_re_h_at:.6g}",
        ]
        if self.offending:
            lines.append("offending: " + "; ".join(self.offending))
        return "\n".join(lines) + "\n"

    def zeros_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["axle", "k", "re_s", "im_s"])
            for axle in sorted(self.zeros):
                for k, s in self.zeros[axle]:
                    wr.writerow([axle, k, f"{s.real:.12e}", f"{s.imag:.12e}"])


def rhp_scan_grid(n_re: int = 60, n_im: int = 241, re_max: float = 1e4,
                  im_max: float = 1e4) -> np.ndarray:
    """Right-half-plane sample points, log-spaced in both directions."""
    re = np.concatenate([[0.0], np.logspace(-3, math.log10(re_max), n_re - 1)])
    im_pos = np.logspace(-3, math.log10(im_max), (n_im - 1) // 2)
    im = np.concatenate([-im_pos[::-1], [0.0], im_pos])
    return re[:, None] + 1j * im[None, :]


def certify_no_unstable_poles(mats: SystemMatrices, k_max: int = K_MAX_DEFAULT,
                              scan_grid: np.ndarray | None = None, *,
                              n_random: int = 1000, seed: int = 0,
                              floor_rel: float = 1e-6) -> PoleCertificate:
    """Certify that ``det C`` has no zeros with nonnegative real part.

    The Lambert-W zero computation is the primary evidence; the grid scan of
    ``|det C|`` and the sign of ``Re h_i`` at random points corroborate it.
    """
    cert = PoleCertificate()
    for axle in (1, 2):
        ks = default_k_range(k_max)
        try:
            zs = h_zeros(axle, ks, mats)
        except LambertWError as exc:
            cert.offending.append(f"axle {axle}: {exc}")
            zs = []
        lam = float(mats.lam[axle - 1])
        cert.zeros[axle] = list(zip(ks, zs))
        for k, s in cert.zeros[axle]:
            u = s / lam
            cert.max_residual = max(cert.max_residual, abs(u + np.exp(-u) - 1.0))
            cert.max_real_part = max(cert.max_real_part, s.real)
            if s.real >= 0:
                cert.offending.append(f"axle {axle}, k={k}: zero at s={s:.6g}")

    det0 = complex(detC_closed(0.0, mats))
    cert.det_at_zero = det0.real
    if not det0.real > 0:
        cert.offending.append(f"det C(0) = {det0:.6g} is not positive")

    grid = rhp_scan_grid() if scan_grid is None else np.asarray(scan_grid)
    vals = np.abs(detC_closed(grid, mats))
    i = int(np.argmin(vals))
    cert.scan_min_abs_det = float(vals.flat[i])
    cert.scan_argmin = complex(grid.flat[i])
    cert.scan_floor = floor_rel * abs(det0)

    rng = np.random.default_rng(seed)
    pts = 10.0 ** rng.uniform(-3, 4, n_random) + 1j * rng.uniform(-1e4, 1e4, n_random)
    re_h = h_factor(pts, mats).real
    j = np.unravel_index(int(np.argmin(re_h)), re_h.shape)
    cert.min_re_h = float(re_h[j])
    cert.min_re_h_at = complex(pts[j[0]])
    if cert.min_re_h <= 0:
        cert.offending.append(f"Re h_{j[1] + 1}(s) <= 0 at s={cert.min_re_h_at:.6g}")
    return cert
