import csv
import json

import pytest

from schwarzschild_vlasov.cli import (
    ConfigError,
    RunConfig,
    config_from_dict,
    load_config,
    main,
    write_table,
)
from schwarzschild_vlasov.experiments import Table


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_gives_defaults(tmp_path):
    assert load_config(_write(tmp_path, "M = 1\n")) == RunConfig()
    assert load_config(None) == RunConfig()


def test_round_trip_through_dict():
    cfg = RunConfig()
    again = config_from_dict(cfg.to_dict())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()
    other = cfg.with_(seed=1)
    assert other.config_hash() != cfg.config_hash()


@pytest.mark.parametrize("text, fragment", [
    ("r0 = 2.9\n", "red-shift"),
    ("[decay]\np = 2.0\n", "integer"),
    ("[decay]\nbogus = 1\n", "[decay]: unknown key(s) bogus"),
    ("eps_horizon = 0.5\n", "eps_horizon"),
    ("[trapping]\nepsilons = [0.05, 0.1]\n", "strictly decreasing"),
    ("[pointwise]\ns = 1.02\n", "[pointwise] p, s"),
    ("[exterior]\ntaus = [-4.0, 2.0]\n", "negative"),
    ("seed = 1.5\n", "expected an integer"),
    ("[data]\nkind = \"blob\"\n", "[data] kind"),
    ("seed = 0\nM = = 1\n", "line 2"),
])
def test_config_errors_name_the_field(tmp_path, text, fragment):
    with pytest.raises(ConfigError) as ei:
        load_config(_write(tmp_path, text))
    assert fragment in str(ei.value)


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["verify", "--config", str(_write(tmp_path, "r0 = 2.9\n")), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["verify", "--config", str(tmp_path / "missing.toml")]) == 2


def test_write_table_uses_full_precision(tmp_path):
    path = write_table(Table("t", ["x", "n"], [[1.0 / 3.0, 7], [2.0**-30, 0]]), tmp_path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "n"]
    assert float(rows[1][0]) == 1.0 / 3.0
    assert len(rows[1][0].split("e")[0].replace(".", "").lstrip("-")) == 17
    assert rows[1][1] == "7"


def test_geodesic_run_writes_manifest_and_is_deterministic(tmp_path, capsys):
    toml = _write(tmp_path, "[geodesic]\nn_random = 10\ns_max = 100.0\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["geodesic", "--config", str(toml), "--out", str(a), "--seed", "3", "--jobs", "1"]) == 0
    assert main(["geodesic", "--config", str(toml), "--out", str(b), "--seed", "3", "--jobs", "1"]) == 0
    assert "geodesic" in capsys.readouterr().out
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["schema"] == 1 and ma["seed"] == 3 and ma["passed"]
    assert ma["config_hash"] == load_config(toml).config_hash() == mb["config_hash"]
    for rel in ma["experiments"]["geodesic"]["files"]:
        assert (a / rel).read_text() == (b / rel).read_text()
    assert (a / "summary.txt").read_text().startswith("geodesic")


def test_zero_data_decay_runs_clean(tmp_path):
    toml = _write(tmp_path, "[data]\nkind = \"zero\"\n[decay]\nparticles = 1024\nn_seeds = 1\n")
    assert main(["decay", "--config", str(toml), "--out", str(tmp_path / "o"), "--strict"]) == 0
