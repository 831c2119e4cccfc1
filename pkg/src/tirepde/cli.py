"""Command-line entry point: ``tirepde <verb> [--config F] [--out D] [--seed S] [--set k=v]``.

Verbs mirror the scenario modes; ``run`` dispatches on the ``mode`` key of
the scenario file and accepts several ``--config`` files, which run as a
parallel batch (``--jobs``), each in its own output directory. Exit codes:
0 success, 2 configuration error, 3 numerical failure, 4 failed verification
(acceptance criterion or pole certificate). A batch returns the largest code.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import report
from .acceptance import AcceptanceContext, results_table, run_all
from .config import ConfigError, ScenarioConfig, default_config_text, parse_config
from .freq import (
    H1_response,
    H2_response,
    SingularityError,
    check_small_gain,
    injection_gain_response,
)
from .lambertw import LambertWError, certify_no_unstable_poles
from .model import build_matrices
from .observer import ClosedLoopScenario, KernelError, simulate_closed
from .rational import FitError, RationalFilter
from .transport import NumericalFailure, simulate_open_loop

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_FAILED = 0, 2, 3, 4
VERB_MODES = {
    "simulate": "open-loop",
    "observe": "closed-loop",
    "analyze": "freq-analysis",
    "certify": "certify-poles",
    "acceptance": "acceptance",
}

log = logging.getLogger("tirepde")


def _summary(out: Path, lines) -> Path:
    path = out / "summary.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def _check_abort(trace) -> None:
    if trace.aborted_at is not None:
        raise NumericalFailure(f"non-finite state at t = {trace.aborted_at:.6g} s")


def run_open_loop(cfg: ScenarioConfig, out: Path) -> int:
    mats = build_matrices(cfg.vehicle)
    tr = simulate_open_loop(cfg.plant_ic(), cfg.steering, cfg.grid, mats,
                            log_period=cfg.log_period, snapshot_period=cfg.snapshot_period)
    report.write_trace_csv(tr, out / "trace.csv")
    report.write_norms_csv(tr, out / "norms.csv")
    report.write_profile_csv(tr, out / "z1.csv", which="z")
    if cfg.plots:
        report.plot_kinematics(out / "trace.csv", out / "kinematics.svg")
        report.plot_norms(out / "norms.csv", out / "norms.svg")
        report.plot_profile_heatmap(out / "z1.csv", out / "z1_heatmap.svg")
    n = tr.plant_norm
    lines = [cfg.describe(), f"cfl: {tr.meta['cfl']:.4g}",
             f"state norm: t=0 {n[0]:.6g}, t={tr.t[tr.at(0.5)]:.3g} {n[tr.at(0.5)]:.6g}, "
             f"t={tr.t[-1]:.3g} {n[-1]:.6g}"]
    _summary(out, lines)
    _check_abort(tr)
    return EXIT_OK


def _load_or_fit(cfg: ScenarioConfig, scen: ClosedLoopScenario, mats, out: Path):
    o = cfg.observer
    if o.realization == "rational" and o.filter_file and Path(o.filter_file).exists():
        filt = RationalFilter.from_json(o.filter_file)
        log.info("loaded injection filter from %s", o.filter_file)
    else:
        filt = scen.synthesize(mats)
        if isinstance(filt, RationalFilter) and o.filter_file:
            filt.to_json(o.filter_file)
    if isinstance(filt, RationalFilter):
        filt.to_json(out / "filter.json")
    return filt


def run_closed_loop(cfg: ScenarioConfig, out: Path) -> int:
    mats = build_matrices(cfg.vehicle)
    o = cfg.observer
    scen = ClosedLoopScenario(
        params=cfg.vehicle, grid=cfg.grid, steering=cfg.steering, plant_ic=cfg.plant_ic(),
        observer_ic=cfg.observer_ic(), sensors=cfg.sensors, gamma=o.gamma, eta=o.eta,
        realization=o.realization, fit_order_max=o.fit_order_max, fit_tol=o.fit_tol,
        dt_kernel=o.dt_kernel, kernel_horizon=o.kernel_horizon, log_period=cfg.log_period,
        snapshot_period=cfg.snapshot_period,
    )
    scen.filter = _load_or_fit(cfg, scen, mats, out)
    tr = simulate_closed(scen, mats)
    report.write_trace_csv(tr, out / "trace.csv")
    report.write_norms_csv(tr, out / "norms.csv")
    report.write_profile_csv(tr, out / "zerr1.csv", which="zerr")
    scen.injection_response(mats).to_csv(out / "Hhat.csv")
    if cfg.plots:
        report.plot_kinematics(out / "trace.csv", out / "kinematics.svg")
        report.plot_norms(out / "norms.csv", out / "norms.svg")
        report.plot_profile_heatmap(out / "zerr1.csv", out / "zerr1_heatmap.svg")

    sg = tr.meta["small_gain"]
    cert = certify_no_unstable_poles(mats, cfg.analysis.k_max)
    filt = tr.meta["filter"]
    e = tr.err_total
    lines = [cfg.describe(), "", "small-gain check:", *_small_gain_lines(sg), "",
             "pole certificate:", *("  " + ln for ln in cert.report().splitlines()), "",
             "injection realization:"]
    if isinstance(filt, RationalFilter):
        lines += [f"  rational, order {filt.order}, relative fit error {filt.fit_error:.4g}, "
                  f"max |pole| dt = {filt.max_stiffness(cfg.grid.dt):.4g}"]
    else:
        lines += [f"  impulse-response kernel, dt_kernel {filt.dt_kernel:g} s, "
                  f"horizon {filt.horizon:g} s, feedthrough {np.array2string(filt.D, precision=4)}"]
    lines += ["", "error norms:", f"  initial {e[0]:.6g}"]
    for t in sorted({0.5, 1.0, float(tr.t[-1])}):
        if t <= tr.t[-1]:
            lines.append(f"  t = {tr.t[tr.at(t)]:.3g} s: {e[tr.at(t)]:.6g} "
                         f"({e[tr.at(t)] / e[0]:.4g} of initial)")
    _summary(out, lines)
    _check_abort(tr)
    return EXIT_OK


def _small_gain_lines(sg) -> list[str]:
    return [
        f"  gamma = {sg.gamma:g}, eta = {sg.eta:g}",
        f"  lhs = |H2|inf = {sg.lhs:.6g}",
        f"  rhs = 1/|H1|inf = {sg.rhs:.6g} (|H1|inf = {sg.hinf_H1:.6g} at omega = {sg.omega_peak_H1:.4g})",
        f"  satisfied = {'true' if sg.satisfied else 'false'} (margin {sg.margin:g})",
        f"  loop gain |H2|inf |G H1|inf = {sg.loop_gain:.6g}",
    ]


def run_freq_analysis(cfg: ScenarioConfig, out: Path) -> int:
    mats = build_matrices(cfg.vehicle)
    o = cfg.observer
    omega = cfg.analysis.omega()
    paths = {}
    for name, resp in (("H1", H1_response(mats, omega)), ("H2", H2_response(o.gamma, o.eta, omega)),
                       ("Hhat", injection_gain_response(omega, o.gamma, o.eta, mats))):
        paths[name] = out / f"{name}.csv"
        resp.to_csv(paths[name])
    if cfg.plots:
        report.plot_sigma(paths, out / "sigma.svg")
    sg = check_small_gain(o.gamma, o.eta, mats, omega=omega)
    _summary(out, [cfg.describe(), "", "small-gain check:", *_small_gain_lines(sg)])
    return EXIT_OK


def run_certify(cfg: ScenarioConfig, out: Path) -> int:
    mats = build_matrices(cfg.vehicle)
    cert = certify_no_unstable_poles(mats, cfg.analysis.k_max, seed=cfg.seed)
    (out / "certificate.txt").write_text(cert.report())
    cert.zeros_to_csv(out / "zeros.csv")
    if cfg.plots:
        report.plot_zeros(out / "zeros.csv", out / "zeros.svg")
    print(f"certificate: {cert.verdict}")
    return EXIT_OK if cert.certified else EXIT_FAILED


def run_acceptance(cfg: ScenarioConfig, out: Path) -> int:
    o = cfg.observer
    ctx = AcceptanceContext(params=cfg.vehicle, gamma=o.gamma, eta=o.eta, seed=cfg.seed)
    results = run_all(ctx, echo=print)
    header, rows = results_table(results)
    with open(out / "acceptance.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
    lines = []
    for r in results:
        lines.append(r.line())
        lines += [f"    {n}" for n in r.notes]
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    _summary(out, lines)
    print(lines[-1])
    return EXIT_OK if n_pass == len(results) else EXIT_FAILED


RUNNERS = {
    "open-loop": run_open_loop,
    "closed-loop": run_closed_loop,
    "freq-analysis": run_freq_analysis,
    "certify-poles": run_certify,
    "acceptance": run_acceptance,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tirepde", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    helps = {
        "simulate": "open-loop plant simulation",
        "observe": "plant plus observer with sampled, noisy sensors",
        "analyze": "frequency responses and the small-gain check",
        "certify": "certify that the output map has no unstable poles",
        "acceptance": "run the acceptance suite",
        "run": "dispatch on the 'mode' key of the scenario file",
    }
    for verb, text in helps.items():
        sp = sub.add_parser(verb, help=text)
        if verb == "run":
            sp.add_argument("--config", type=Path, action="append", required=True,
                            help="YAML scenario file; repeat for a batch")
            sp.add_argument("--jobs", type=int, default=1, help="parallel runs in a batch")
        else:
            sp.add_argument("--config", type=Path,
                            help="YAML scenario file (default: built-in scenario)")
        sp.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="seed for all random streams")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scenario key, e.g. observer.gamma=100 (repeatable)")
        sp.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("print-config", help="print a scenario file with every default")
    return p


def _execute(cfg: ScenarioConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = RUNNERS[cfg.mode](cfg, out)
    except (NumericalFailure, SingularityError, FitError, KernelError, LambertWError,
            FloatingPointError) as exc:
        print(f"numerical failure ({cfg.source}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"artifacts written to {out}")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "print-config":
        sys.stdout.write(default_config_text())
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.set)
    if args.verb != "run":
        overrides.append(f"mode={VERB_MODES[args.verb]}")
    paths = args.config if isinstance(args.config, list) else [args.config]
    jobs = []
    try:
        for path in paths:
            cfg = parse_config(path, overrides=overrides, seed=args.seed)
            if args.out is None:
                out = Path(cfg.output_dir)
            else:
                out = Path(args.out) / path.stem if len(paths) > 1 else Path(args.out)
            jobs.append((cfg, out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outs = [out.resolve() for _, out in jobs]
    if len(set(outs)) != len(outs):
        print("config error: batch members share an output directory", file=sys.stderr)
        return EXIT_CONFIG
    if len(jobs) == 1:
        return _execute(*jobs[0])
    with ProcessPoolExecutor(max_workers=max(1, getattr(args, "jobs", 1))) as pool:
        codes = list(pool.map(_execute, *zip(*jobs)))
    for (cfg, _), code in zip(jobs, codes):
        print(f"{cfg.source}: exit {code}")
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
