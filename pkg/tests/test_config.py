import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from tirepde.config import ConfigError, build_config, default_config_text, load_raw, parse_config


def _write(tmp_path, text):
    p = tmp_path / "scenario.yaml"
    p.write_text(text)
    return p


def test_defaults():
    cfg = parse_config()
    assert cfg.mode == "closed-loop"
    assert cfg.grid.N == 50 and cfg.grid.dt == 1e-6
    assert cfg.observer.gamma == 500.0 and cfg.observer.fit_order_max == 80
    assert cfg.sensors is not None and cfg.sensors.seed == 0


def test_printed_defaults_roundtrip(tmp_path):
    text = default_config_text()
    assert yaml.safe_load(text)["observer"]["realization"] == "rational"
    cfg = parse_config(_write(tmp_path, text))
    assert cfg.grid == parse_config().grid
    assert cfg.observer == parse_config().observer


def test_exponent_strings_are_numbers(tmp_path):
    cfg = parse_config(_write(tmp_path, "grid:\n  dt: 1e-6\n  T: 0.5\n"))
    assert cfg.grid.dt == 1e-6


def test_string_keys_stay_strings(tmp_path):
    cfg = parse_config(_write(tmp_path, "output_dir: '2024'\n"))
    assert cfg.output_dir == "2024"


def test_precedence(tmp_path):
    p = _write(tmp_path, "seed: 5\nobserver:\n  gamma: 200\n")
    assert parse_config(p).seed == 5
    assert parse_config(p, seed=9).seed == 9
    cfg = parse_config(p, overrides=["seed=11", "observer.gamma=300"], seed=9)
    assert cfg.seed == 11 and cfg.observer.gamma == 300.0
    assert cfg.sensors.seed == 11


def test_sensors_disabled():
    assert parse_config(overrides=["sensors.enabled=false"]).sensors is None


@pytest.mark.parametrize("text,fragment,line", [
    ("grid:\n  N: 50\n  bogus: 1\n", "unknown key 'grid.bogus'", 3),
    ("wheels: 4\n", "unknown key 'wheels'", 1),
    ("vehicle:\n  m: -3\n", "m", 2),
    ("vehicle:\n  chi: 2\n", "chi must be in {0, 1}", 2),
    ("grid:\n  dt: 1e-4\n", "CFL", 2),
    ("grid:\n  N: fifty\n", "expects an integer", 2),
    ("sensors:\n  period: [1.5e-6, 0.01]\n", "multiple", 2),
    ("observer:\n  filter_order: 2\n", "first-order", 2),
    ("mode: sideways\n", "mode must be one of", 1),
    ("schema_version: 2\n", "unsupported schema_version", 1),
    ("steering:\n  units: grad\n", "units", 2),
])
def test_errors_point_at_the_line(tmp_path, text, fragment, line):
    p = _write(tmp_path, text)
    with pytest.raises(ConfigError) as info:
        parse_config(p)
    msg = str(info.value)
    assert fragment in msg
    assert f"{p}:{line}" in msg


def test_unknown_key_lists_known_keys():
    with pytest.raises(ConfigError, match="known: N, dt, T"):
        build_config({"grid": {"n": 50}})


def test_malformed_yaml_has_line(tmp_path):
    p = _write(tmp_path, "grid:\n  N: 50\n dt: [1\n")
    with pytest.raises(ConfigError, match=r"scenario.yaml:\d+: malformed YAML"):
        parse_config(p)


def test_override_errors():
    with pytest.raises(ConfigError, match="key=value"):
        parse_config(overrides=["observer.gamma"])
    with pytest.raises(ConfigError, match="--set"):
        parse_config(overrides=["observer.gamma=abc"])


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "nope.yaml")


@given(st.integers(0, 2**64 - 1))
def test_any_u64_seed_is_accepted(seed):
    assert build_config({"seed": seed}).seed == seed


def test_pair_scalar_broadcast():
    cfg = build_config({"initial": {"z0": 0.002}})
    assert cfg.z0 == (0.002, 0.002)
    ic = cfg.plant_ic()
    assert ic.z[0, 0] == 0.0 and ic.z[1, -1] == 0.002


def test_load_raw_rejects_scalar_document():
    with pytest.raises(ConfigError, match="mapping"):
        load_raw("42\n")
