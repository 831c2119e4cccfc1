"""Compiled explicit-Euler marching loops.

These mirror the reference NumPy routines in ``transport`` and ``observer``
step for step; tests hold the two paths against each other.
"""

from __future__ import annotations

import numpy as np
from numba import njit

FILTER_NONE = 0
FILTER_RATIONAL = 1
FILTER_KERNEL = 2

CHECK_EVERY = 1000


@njit(cache=True)
def _forces(z, k1, w, out):
    n = z.shape[1]
    for i in range(2):
        acc = 0.0
        for j in range(n):
            acc += w[j] * z[i, j]
        out[i] = k1[i] * acc


@njit(cache=True)
def _l2sq(z, w):
    n = z.shape[1]
    acc = 0.0
    for i in range(2):
        for j in range(n):
            acc += w[j] * z[i, j] * z[i, j]
    return acc


@njit(cache=True)
def _pde_update(z, X, d, A2, B, lam, k2, inv_dxi, dt, znew):
    # first-order upwind, transport from xi = 0 towards xi = 1
    n = z.shape[1]
    for i in range(2):
        src = (k2[i] * z[i, n - 1] + A2[i, 0] * X[0] + A2[i, 1] * X[1]
               + B[i, 0] * d[0] + B[i, 1] * d[1])
        c = lam[i] * inv_dxi
        znew[i, 0] = 0.0
        for j in range(1, n):
            znew[i, j] = z[i, j] + dt * (-c * (z[i, j] - z[i, j - 1]) + src)


@njit(cache=True)
def _steer(t, s_off, s_amp, s_omg, d):
    for c in range(2):
        d[c] = s_off[c] + s_amp[c] * np.sin(s_omg[c] * t)


@njit(cache=True)
def _all_finite(X, z):
    for i in range(2):
        if not np.isfinite(X[i]):
            return False
        for j in range(z.shape[1]):
            if not np.isfinite(z[i, j]):
                return False
    return True


@njit(cache=True)
def march(
    X, z, Xh, zh,
    A1, G, A2, B, lam, k1, k2, C2, Lg,
    w, inv_dxi, dt, n_steps, log_every, snap_every,
    s_off, s_amp, s_omg,
    observer_on, sens_period, noise,
    filter_kind, fphi, fgam, residues, pweight, Dff, fstate,
    taps, tap_w, dt_kernel, kernel_every, ring,
    log_t, log_X, log_F, log_d, log_Y, log_Ym, log_Xh,
    log_errX, log_errz, log_pnorm, log_onorm,
    snap_t, snap_z, snap_e,
):
    """March plant (and optionally observer) ``n_steps`` explicit-Euler steps.

    States are updated in place. Returns ``(n_logged, n_snaps, abort_step)``
    where ``abort_step`` is -1 unless a non-finite value was detected.
    """
    d = np.zeros(2)
    F = np.zeros(2)
    Fh = np.zeros(2)
    Y = np.zeros(2)
    Ym = np.zeros(2)
    Yt = np.zeros(2)
    f = np.zeros(2)
    dX = np.zeros(2)
    dXh = np.zeros(2)
    znew = np.empty_like(z)
    zhnew = np.empty_like(zh)
    n_taps = taps.shape[0]
    ring_pos = 0
    n_log = 0
    n_snap = 0
    abort = -1
    for n in range(n_steps + 1):
        t = n * dt
        _steer(t, s_off, s_amp, s_omg, d)
        _forces(z, k1, w, F)
        Y[0] = X[1]
        Y[1] = C2[0] * F[0] + C2[1] * F[1]
        if observer_on:
            for c in range(2):
                if n % sens_period[c] == 0:
                    Ym[c] = Y[c] + noise[c, n // sens_period[c]]
            _forces(zh, k1, w, Fh)
            Yt[0] = Ym[0] - Xh[1]
            Yt[1] = Ym[1] - (C2[0] * Fh[0] + C2[1] * Fh[1])
            if filter_kind == FILTER_RATIONAL:
                for c in range(2):
                    f[c] = Dff[c, 0] * Yt[0] + Dff[c, 1] * Yt[1]
                for p in range(fphi.shape[0]):
                    for c in range(2):
                        acc = residues[p, c, 0] * fstate[p, 0] + residues[p, c, 1] * fstate[p, 1]
                        f[c] += pweight[p] * acc.real
            elif filter_kind == FILTER_KERNEL:
                if n % kernel_every == 0:
                    ring[ring_pos, 0] = Yt[0]
                    ring[ring_pos, 1] = Yt[1]
                    for c in range(2):
                        f[c] = Dff[c, 0] * Yt[0] + Dff[c, 1] * Yt[1]
                    for j in range(n_taps):
                        idx = ring_pos - j
                        if idx < 0:
                            idx += n_taps
                        wj = tap_w[j] * dt_kernel
                        for c in range(2):
                            f[c] += wj * (taps[j, c, 0] * ring[idx, 0] + taps[j, c, 1] * ring[idx, 1])
                    ring_pos += 1
                    if ring_pos == n_taps:
                        ring_pos = 0
        else:
            Ym[0] = Y[0]
            Ym[1] = Y[1]

        if n % log_every == 0 and n_log < log_t.shape[0]:
            log_t[n_log] = t
            for c in range(2):
                log_X[n_log, c] = X[c]
                log_F[n_log, c] = F[c]
                log_d[n_log, c] = d[c]
                log_Y[n_log, c] = Y[c]
                log_Ym[n_log, c] = Ym[c]
            log_pnorm[n_log] = np.sqrt(X[0] * X[0] + X[1] * X[1] + _l2sq(z, w))
            if observer_on:
                ex0 = X[0] - Xh[0]
                ex1 = X[1] - Xh[1]
                ez = 0.0
                for i in range(2):
                    for j in range(z.shape[1]):
                        e = z[i, j] - zh[i, j]
                        ez += w[j] * e * e
                log_Xh[n_log, 0] = Xh[0]
                log_Xh[n_log, 1] = Xh[1]
                log_errX[n_log] = np.sqrt(ex0 * ex0 + ex1 * ex1)
                log_errz[n_log] = np.sqrt(ez)
                log_onorm[n_log] = np.sqrt(Xh[0] * Xh[0] + Xh[1] * Xh[1] + _l2sq(zh, w))
            n_log += 1
        if snap_every > 0 and n % snap_every == 0 and n_snap < snap_t.shape[0]:
            snap_t[n_snap] = t
            for i in range(2):
                for j in range(z.shape[1]):
                    snap_z[n_snap, i, j] = z[i, j]
                    if observer_on:
                        snap_e[n_snap, i, j] = z[i, j] - zh[i, j]
            n_snap += 1

        if n == n_steps:
            break

        if n % CHECK_EVERY == 0:
            if not _all_finite(X, z) or (observer_on and not _all_finite(Xh, zh)):
                abort = n
                break

        # plant
        dX[0] = A1[0, 0] * X[0] + A1[0, 1] * X[1] + G[0, 0] * F[0] + G[0, 1] * F[1]
        dX[1] = A1[1, 0] * X[0] + A1[1, 1] * X[1] + G[1, 0] * F[0] + G[1, 1] * F[1]
        _pde_update(z, X, d, A2, B, lam, k2, inv_dxi, dt, znew)
        if observer_on:
            for c in range(2):
                dXh[c] = (A1[c, 0] * Xh[0] + A1[c, 1] * Xh[1] + G[c, 0] * Fh[0]
                          + G[c, 1] * Fh[1] - Lg[c] * Yt[0] - f[c])
            _pde_update(zh, Xh, d, A2, B, lam, k2, inv_dxi, dt, zhnew)
            if filter_kind == FILTER_RATIONAL:
                for p in range(fphi.shape[0]):
                    for c in range(2):
                        fstate[p, c] = fphi[p] * fstate[p, c] + fgam[p] * Yt[c]
            for c in range(2):
                Xh[c] += dt * dXh[c]
            zh[:, :] = zhnew
        for c in range(2):
            X[c] += dt * dX[c]
        z[:, :] = znew
    return n_log, n_snap, abort


@njit(cache=True)
def march_error(
    Xe, ze, A2, G, lam, k1, k2, C2, w, inv_dxi, dt, n_steps, log_every,
    filter_kind, fphi, fgam, residues, pweight, Dff, fstate,
    taps, tap_w, dt_kernel, kernel_every, ring,
    log_t, log_errX, log_errz,
):
    """March the estimation-error dynamics directly (no plant, no observer)."""
    F = np.zeros(2)
    Yt = np.zeros(2)
    f = np.zeros(2)
    d0 = np.zeros(2)
    B0 = np.zeros((2, 2))
    dX = np.zeros(2)
    znew = np.empty_like(ze)
    n_taps = taps.shape[0]
    ring_pos = 0
    n_log = 0
    for n in range(n_steps + 1):
        _forces(ze, k1, w, F)
        Yt[0] = Xe[1]
        Yt[1] = C2[0] * F[0] + C2[1] * F[1]
        if filter_kind == FILTER_RATIONAL:
            for c in range(2):
                f[c] = Dff[c, 0] * Yt[0] + Dff[c, 1] * Yt[1]
            for p in range(fphi.shape[0]):
                for c in range(2):
                    acc = residues[p, c, 0] * fstate[p, 0] + residues[p, c, 1] * fstate[p, 1]
                    f[c] += pweight[p] * acc.real
        elif filter_kind == FILTER_KERNEL:
            if n % kernel_every == 0:
                ring[ring_pos, 0] = Yt[0]
                ring[ring_pos, 1] = Yt[1]
                for c in range(2):
                    f[c] = Dff[c, 0] * Yt[0] + Dff[c, 1] * Yt[1]
                for j in range(n_taps):
                    idx = ring_pos - j
                    if idx < 0:
                        idx += n_taps
                    wj = tap_w[j] * dt_kernel
                    for c in range(2):
                        f[c] += wj * (taps[j, c, 0] * ring[idx, 0] + taps[j, c, 1] * ring[idx, 1])
                ring_pos += 1
                if ring_pos == n_taps:
                    ring_pos = 0
        if n % log_every == 0 and n_log < log_t.shape[0]:
            log_t[n_log] = n * dt
            log_errX[n_log] = np.sqrt(Xe[0] * Xe[0] + Xe[1] * Xe[1])
            log_errz[n_log] = np.sqrt(_l2sq(ze, w))
            n_log += 1
        if n == n_steps:
            break
        # the static injection L*Y1 cancels A1*Xe exactly, leaving G*K1*ze + H*Ye
        for c in range(2):
            dX[c] = G[c, 0] * F[0] + G[c, 1] * F[1] + f[c]
        _pde_update(ze, Xe, d0, A2, B0, lam, k2, inv_dxi, dt, znew)
        if filter_kind == FILTER_RATIONAL:
            for p in range(fphi.shape[0]):
                for c in range(2):
                    fstate[p, c] = fphi[p] * fstate[p, c] + fgam[p] * Yt[c]
        for c in range(2):
            Xe[c] += dt * dX[c]
        ze[:, :] = znew
    return n_log
