import numpy as np
import pytest

from tirepde import report
from tirepde.cli import main

FAST = ["--set", "grid.T=0.02", "--set", "output.snapshot_period=0.01"]


def test_print_config(capsys):
    assert main(["print-config"]) == 0
    assert "observer:" in capsys.readouterr().out


def test_simulate_writes_artifacts(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--out", str(out), *FAST]) == 0
    for name in ("trace.csv", "norms.csv", "z1.csv", "summary.txt", "kinematics.svg",
                 "norms.svg", "z1_heatmap.svg"):
        assert (out / name).exists(), name
    assert report.read_csv(out / "trace.csv")["t"][-1] == pytest.approx(0.02)


def test_simulate_is_reproducible(tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--out", str(tmp_path / d), *FAST]) == 0
    for name in ("trace.csv", "norms.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_observe_with_cached_filter(tmp_path, injection_filter):
    cache = tmp_path / "filter.json"
    injection_filter.to_json(cache)
    out = tmp_path / "obs"
    args = ["observe", "--out", str(out), "--seed", "3", *FAST,
            "--set", f"observer.filter_file={cache}"]
    assert main(args) == 0
    d = report.read_csv(out / "trace.csv")
    assert np.all(np.isfinite(d["vhat_y"]))
    summary = (out / "summary.txt").read_text()
    assert "rational, order 72" in summary and "seed=3" in summary
    assert (out / "filter.json").exists() and (out / "Hhat.csv").exists()


def test_analyze(tmp_path):
    out = tmp_path / "an"
    assert main(["analyze", "--out", str(out), "--set", "analysis.n_omega=200"]) == 0
    assert "lhs = |H2|inf = 0.002" in (out / "summary.txt").read_text()
    assert (out / "sigma.svg").exists()


def test_certify(tmp_path, capsys):
    out = tmp_path / "cert"
    assert main(["certify", "--out", str(out), "--set", "analysis.k_max=8"]) == 0
    assert "certified" in capsys.readouterr().out
    assert (out / "zeros.svg").exists()


def test_run_dispatches_on_mode(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(f"mode: certify-poles\noutput_dir: {tmp_path / 'o'}\nanalysis:\n  k_max: 4\n")
    assert main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "o" / "certificate.txt").exists()


@pytest.mark.parametrize("setting,fragment", [
    ("vehicle.chi=2", "chi must be in {0, 1}"),
    ("grid.dt=1e-4", "CFL"),
    ("observer.nonsense=1", "unknown key"),
])
def test_config_errors_exit_2(tmp_path, capsys, setting, fragment):
    assert main(["simulate", "--out", str(tmp_path), "--set", setting]) == 2
    assert fragment in capsys.readouterr().err


def test_numerical_failure_exits_3(tmp_path, capsys):
    # a kernel that cannot decay within its horizon
    args = ["observe", "--out", str(tmp_path), *FAST, "--set", "observer.realization=kernel",
            "--set", "observer.kernel_horizon=0.0005"]
    assert main(args) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_batch_runs_in_parallel(tmp_path, capsys):
    paths = []
    for name, k in (("a", 3), ("b", 4)):
        p = tmp_path / f"{name}.yaml"
        p.write_text(f"mode: certify-poles\nanalysis:\n  k_max: {k}\noutput:\n  plots: false\n")
        paths += ["--config", str(p)]
    assert main(["run", *paths, "--jobs", "2", "--out", str(tmp_path / "batch")]) == 0
    for name in ("a", "b"):
        assert (tmp_path / "batch" / name / "certificate.txt").exists()


def test_batch_rejects_shared_output(tmp_path, capsys):
    p = tmp_path / "a.yaml"
    p.write_text("mode: certify-poles\n")
    assert main(["run", "--config", str(p), "--config", str(p)]) == 2
    assert "share an output directory" in capsys.readouterr().err


def test_empty_file_gives_default_scenario(tmp_path):
    from tirepde.config import parse_config

    p = tmp_path / "empty.yaml"
    p.write_text("")
    cfg = parse_config(p)
    assert cfg.vehicle == parse_config().vehicle and cfg.observer.gamma == 500.0
