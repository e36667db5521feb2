import pytest

from spacecluster import config as cfgmod
from spacecluster.cli import EXIT_CONFIG, EXIT_OK, main
from spacecluster.config import ConfigError, SweepSpec, desk_scenario, dump_scenario, dump_sweep, parse_scenario, parse_sweep, preset


@pytest.mark.parametrize("name", sorted(cfgmod.PRESETS))
def test_presets_round_trip(name):
    obj = preset(name)
    if isinstance(obj, SweepSpec):
        assert parse_sweep(dump_sweep(obj)) == obj
    else:
        assert parse_scenario(dump_scenario(obj)) == obj


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("nope")


def test_desk_shorthand_matches_builder():
    got = parse_scenario("seed: 3\ndesk_size: 150\nworkload:\n  count: 7\n")
    assert got == desk_scenario(150, 7, seed=3)


def test_desk_shells_split():
    shells = cfgmod.desk_shells(600)
    assert [s.regime for s in shells] == ["LEO", "MEO", "GEO"]
    assert [s.size for s in shells] == [540, 48, 12]
    with pytest.raises(ValueError):
        cfgmod.desk_shells(0)


@pytest.mark.parametrize(
    "text, line, match",
    [
        ("seed: 1\ndesk_size: 60\nhorizon: abc\n", 3, "expected a number"),
        ("seed: 1\ndesk_size: 60\nworkload:\n  count: 5\n  bogus: 2\n", 5, "unknown field"),
        ("seed: 1\ndesk_size: 60\nseed: 2\n", 3, "duplicate key"),
        ("seed: 1\ndesk_size: -4\n", 2, "desk_size"),
        ("desk_size: 60\n", 1, "missing required field 'seed'"),
        ("seed: 1\ndesk_size: 60\nhorizon: -5\n", 1, "positive"),
        ("seed: [1\n", 2, "malformed"),
    ],
)
def test_errors_carry_line_numbers(text, line, match):
    with pytest.raises(ConfigError, match=match) as exc:
        parse_scenario(text, "s.yaml")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"s.yaml:{line}:")


def test_sweep_errors():
    base = "base:\n  seed: 0\n  desk_size: 60\n"
    with pytest.raises(ConfigError, match="missing required axis"):
        parse_sweep(base + "axes:\n  network_sizes: [60]\n  task_counts: [5]\n  modes: [yuheng]\n")
    with pytest.raises(ConfigError, match="unknown awareness mode") as exc:
        parse_sweep(base + "axes:\n  network_sizes: [60]\n  task_counts: [5]\n  modes: [psychic]\n  seeds: [0]\n")
    assert exc.value.line == 7


def test_sweep_cells_are_distinct():
    spec = preset("fig5-desk")
    names = [n for n, _ in spec.cells()]
    assert len(names) == len(set(names)) == 4 * 4 * 2 * 5
    cfgs = dict(spec.cells())
    c = cfgs["size150_tasks200_baseline_seed3"]
    assert (c.network_size, c.workload.count, c.mode, c.seed) == (150, 200, "baseline", 3)
    assert c.total_compute == cfgmod.DESK_COMPUTE


def test_cli_print_and_validate(tmp_path, capsys):
    assert main(["print-default-config"]) == EXIT_OK
    text = capsys.readouterr().out
    assert parse_scenario(text) == preset("default")
    path = tmp_path / "c.yaml"
    path.write_text(text)
    assert main(["validate", "--config", str(path)]) == EXIT_OK
    assert "valid scenario" in capsys.readouterr().out
    assert main(["validate", "--preset", "fig5-desk"]) == EXIT_OK
    assert "valid sweep" in capsys.readouterr().out


def test_cli_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: 1\ndesk_size: 60\nhorizon: abc\n")
    assert main(["validate", "--config", str(bad)]) == EXIT_CONFIG
    assert f"{bad}:3:" in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert main(["validate"]) == EXIT_CONFIG
    assert main(["run", "--preset", "fig5-desk", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_cli_run_smoke(tmp_path):
    assert main(["run", "--preset", "smoke", "--out", str(tmp_path / "s")]) == EXIT_OK
    for name in ("config.yaml", "metrics.csv", "summary.txt", "events.csv", "tasks.csv"):
        assert (tmp_path / "s" / name).exists()
    assert main(["sweep", "--preset", "smoke", "--out", str(tmp_path / "w"), "--seed-override", "4"]) == EXIT_OK
    assert (tmp_path / "w" / "size2_tasks1_baseline_seed4" / "metrics.csv").exists()
