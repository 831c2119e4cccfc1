"""CSV persistence and SVG figures.

Every figure is drawn from a CSV file alone, so ``plot_*`` functions take CSV
paths rather than in-memory traces and any plot can be regenerated later.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

TRACE_COLUMNS = (
    "t", "v_y", "r", "beta", "F1", "F2", "delta1", "delta2", "Y1_meas", "Y2_meas",
    "vhat_y", "rhat", "betahat", "errX_norm", "errz_L2norm", "err_total_norm",
)
TRACE_UNITS = (
    "s", "m/s", "rad/s", "rad", "N", "N", "rad", "rad", "rad/s", "m/s^2",
    "m/s", "rad/s", "rad", "-", "-", "-",
)
NORM_COLUMNS = ("t", "plant_norm", "observer_norm", "err_total_norm")


def _fmt(x: float) -> str:
    return "nan" if not np.isfinite(x) else f"{x:.9e}"


def _write(path, header, rows, comments=()) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])
    return path


def _read(path):
    """Header and float data of a CSV written by this module (``#`` lines skipped)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2) if len(lines) > 1 else np.zeros((0, len(header)))
    return header, data


def read_csv(path) -> dict:
    header, data = _read(path)
    return {h: data[:, i] for i, h in enumerate(header)}


def trace_header(trace) -> list[str]:
    m = trace.meta
    lines = ["columns: " + ", ".join(f"{c} [{u}]" for c, u in zip(TRACE_COLUMNS, TRACE_UNITS))]
    keys = ("N", "dt", "T", "cfl", "gamma", "eta", "sensors", "realization", "fit_order", "fit_error")
    lines.append(" ".join(f"{k}={m[k]:.6g}" if isinstance(m[k], float) else f"{k}={m[k]}"
                          for k in keys if k in m))
    if trace.aborted_at is not None:
        lines.append(f"aborted at t={trace.aborted_at:.6g} s (non-finite state)")
    return lines


def write_trace_csv(trace, path) -> Path:
    """Fixed 16-column trace; observer columns are ``nan`` for open-loop runs."""
    n = trace.t.size
    nan = np.full(n, np.nan)
    obs = trace.has_observer
    cols = [
        trace.t, trace.X[:, 0], trace.X[:, 1], trace.beta, trace.forces[:, 0], trace.forces[:, 1],
        trace.delta[:, 0], trace.delta[:, 1], trace.Y_meas[:, 0], trace.Y_meas[:, 1],
        trace.X_hat[:, 0] if obs else nan, trace.X_hat[:, 1] if obs else nan,
        trace.beta_hat if obs else nan, trace.err_X if obs else nan,
        trace.err_z if obs else nan, trace.err_total if obs else nan,
    ]
    return _write(path, TRACE_COLUMNS, np.column_stack(cols), trace_header(trace))


def write_norms_csv(trace, path) -> Path:
    n = trace.t.size
    nan = np.full(n, np.nan)
    obs = trace.has_observer
    cols = [trace.t, trace.plant_norm, trace.observer_norm if obs else nan,
            trace.err_total if obs else nan]
    return _write(path, NORM_COLUMNS, np.column_stack(cols))


def write_profile_csv(trace, path, which: str = "zerr") -> Path:
    """Long-format snapshots of the first-axle profile: ``t, xi, value``.

    ``which`` is ``"zerr"`` (estimation error) or ``"z"`` (plant state).
    """
    snaps = trace.zerr_snap if which == "zerr" else trace.z_snap
    if snaps is None:
        raise ValueError("trace has no error snapshots (open-loop run?)")
    rows = [(t, x, v) for t, prof in zip(trace.snap_t, snaps[:, 0, :])
            for x, v in zip(trace.xi, prof)]
    name = "zerr1" if which == "zerr" else "z1"
    return _write(path, ("t", "xi", name), rows)


def write_rows(path, header, rows, comments=()) -> Path:
    return _write(path, header, rows, comments)


# -- figures --------------------------------------------------------------------

def _mpl():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed ids and no timestamp: identical CSV gives an identical SVG
    matplotlib.rcParams["svg.hashsalt"] = "tirepde"
    return plt


def _save(fig, path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    _mpl().close(fig)
    return Path(path)


def plot_norms(norms_csv, svg_path) -> Path:
    """State norm of plant and observer, and the estimation-error norm."""
    plt = _mpl()
    d = read_csv(norms_csv)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 5.6), sharex=True)
    ax1.plot(d["t"], d["plant_norm"], label="plant")
    if np.any(np.isfinite(d["observer_norm"])):
        ax1.plot(d["t"], d["observer_norm"], "--", label="observer")
    ax1.set_ylabel("state norm")
    ax1.legend(frameon=False)
    if np.any(np.isfinite(d["err_total_norm"])):
        ax2.semilogy(d["t"], d["err_total_norm"], color="C3")
    ax2.set_ylabel("estimation error norm")
    ax2.set_xlabel("t [s]")
    fig.tight_layout()
    return _save(fig, svg_path)


def plot_kinematics(trace_csv, svg_path) -> Path:
    """Lateral speed, yaw rate, sideslip, axle forces and steering."""
    plt = _mpl()
    d = read_csv(trace_csv)
    t = d["t"]
    has_obs = np.any(np.isfinite(d["vhat_y"]))
    fig, axes = plt.subplots(2, 2, figsize=(8.0, 5.6), sharex=True)
    panels = (
        (axes[0, 0], "v_y", "vhat_y", "v_y [m/s]"),
        (axes[0, 1], "r", "rhat", "r [rad/s]"),
        (axes[1, 0], "beta", "betahat", "beta [rad]"),
    )
    for ax, key, est, label in panels:
        ax.plot(t, d[key], label="true")
        if has_obs:
            ax.plot(t, d[est], "--", label="estimate")
        ax.set_ylabel(label)
    axes[0, 0].legend(frameon=False)
    ax = axes[1, 1]
    ax.plot(t, d["F1"] * 1e-3, label="F1")
    ax.plot(t, d["F2"] * 1e-3, label="F2")
    ax.set_ylabel("axle force [kN]")
    ax2 = ax.twinx()
    ax2.plot(t, np.degrees(d["delta1"]), color="0.5", lw=0.8, label="delta1")
    ax2.set_ylabel("steering [deg]")
    ax.legend(frameon=False, loc="upper left")
    for a in axes[1]:
        a.set_xlabel("t [s]")
    fig.tight_layout()
    return _save(fig, svg_path)


def plot_profile_heatmap(profile_csv, svg_path) -> Path:
    """Heatmap of a first-axle profile over ``(xi, t)``."""
    plt = _mpl()
    header, data = _read(profile_csv)
    t_vals = np.unique(data[:, 0])
    xi_vals = np.unique(data[:, 1])
    grid = data[:, 2].reshape(t_vals.size, xi_vals.size)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    lim = float(np.max(np.abs(grid))) or 1.0
    mesh = ax.pcolormesh(t_vals, xi_vals, grid.T, shading="nearest", cmap="RdBu_r",
                         vmin=-lim, vmax=lim, rasterized=False)
    fig.colorbar(mesh, ax=ax, label=header[2])
    ax.set_xlabel("t [s]")
    ax.set_ylabel("xi [-]")
    fig.tight_layout()
    return _save(fig, svg_path)


def plot_sigma(freq_csvs: dict, svg_path) -> Path:
    """Largest singular value versus frequency for each ``name -> csv``."""
    from .freq import FrequencyResponse

    plt = _mpl()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, path in freq_csvs.items():
        r = FrequencyResponse.from_csv(path)
        ax.loglog(r.omega, r.sigma_max(), label=name)
    ax.set_xlabel("omega [rad/s]")
    ax.set_ylabel("largest singular value")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, svg_path)


def plot_zeros(zeros_csv, svg_path) -> Path:
    """Zeros of the characteristic factors in the complex plane."""
    plt = _mpl()
    d = read_csv(zeros_csv)
    fig, ax = plt.subplots(figsize=(5.6, 4.8))
    for axle in (1, 2):
        sel = d["axle"] == axle
        ax.plot(d["re_s"][sel], d["im_s"][sel], "o" if axle == 1 else "x", ms=4,
                label=f"axle {axle}")
    ax.axvline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("Re s [1/s]")
    ax.set_ylabel("Im s [1/s]")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, svg_path)
