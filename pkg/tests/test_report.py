import numpy as np
import pytest

from tirepde import PlantState
from tirepde import report
from tirepde.freq import H1_response, H2_response, default_grid
from tirepde.transport import GridSpec, SteeringSpec, simulate_open_loop


@pytest.fixture(scope="module")
def open_trace(mats):
    return simulate_open_loop(PlantState.zeros(50), SteeringSpec(), GridSpec(T=0.03), mats,
                              log_period=1e-3, snapshot_period=0.01)


def test_trace_csv_columns_and_nan_observer(open_trace, tmp_path):
    p = report.write_trace_csv(open_trace, tmp_path / "trace.csv")
    text = p.read_text().splitlines()
    assert text[0].startswith("# columns: t [s], v_y [m/s]")
    d = report.read_csv(p)
    assert tuple(d) == report.TRACE_COLUMNS
    np.testing.assert_allclose(d["v_y"], open_trace.X[:, 0], rtol=1e-9)
    assert np.all(np.isnan(d["vhat_y"]))


def test_profile_csv_long_format(open_trace, tmp_path):
    p = report.write_profile_csv(open_trace, tmp_path / "z1.csv", which="z")
    d = report.read_csv(p)
    assert d["t"].size == open_trace.snap_t.size * 51
    with pytest.raises(ValueError):
        report.write_profile_csv(open_trace, tmp_path / "e.csv", which="zerr")


def test_plots_are_deterministic_svg(open_trace, mats, tmp_path):
    report.write_trace_csv(open_trace, tmp_path / "trace.csv")
    report.write_norms_csv(open_trace, tmp_path / "norms.csv")
    report.write_profile_csv(open_trace, tmp_path / "z1.csv", which="z")
    paths = {"H1": tmp_path / "H1.csv", "H2": tmp_path / "H2.csv"}
    H1_response(mats, default_grid(60)).to_csv(paths["H1"])
    H2_response(500.0, 1.0, default_grid(60)).to_csv(paths["H2"])
    outs = []
    for rep in range(2):
        outs.append([
            report.plot_kinematics(tmp_path / "trace.csv", tmp_path / f"k{rep}.svg"),
            report.plot_norms(tmp_path / "norms.csv", tmp_path / f"n{rep}.svg"),
            report.plot_profile_heatmap(tmp_path / "z1.csv", tmp_path / f"h{rep}.svg"),
            report.plot_sigma(paths, tmp_path / f"s{rep}.svg"),
        ])
    for a, b in zip(*outs):
        assert a.read_text().startswith("<?xml")
        assert a.read_bytes() == b.read_bytes()


def test_number_format():
    assert report._fmt(1.0) == "1.000000000e+00"
    assert report._fmt(float("inf")) == "nan"
