import csv
import json
import os

import pytest

from smallcosts import cli
from smallcosts.config import ConfigError, load_config, parse_config
from smallcosts.experiments import SWEEP_COLUMNS, Check
from smallcosts.models import BlackScholesModel, StochVolModel

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

SMALL = """
[model]
kind = black-scholes
b = 0.1
sigma = 0.2

[friction]
eps = 1e-2, 1e-3, 1e-4
p = 1
xB = -1.5
xS = 2.5
T = 1

[numerics]
n = 400
paths = 40
seed = 11
"""


def _write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_small_config():
    cfg = parse_config(SMALL)
    assert isinstance(cfg.model, BlackScholesModel) and cfg.model.sigma == 0.2
    assert cfg.eps == (1e-2, 1e-3, 1e-4)
    assert (cfg.n, cfg.paths, cfg.seed, cfg.workers) == (400, 40, 11, 1)
    assert cfg.friction().x == 1.0


def test_parse_sv_config():
    cfg = load_config(os.path.join(ROOT, "configs", "stochvol.ini"))
    assert isinstance(cfg.model, StochVolModel) and cfg.model.b1 == -0.05


@pytest.mark.parametrize("edit, field", [
    (("sigma = 0.2\n", ""), "model.sigma"),
    (("kind = black-scholes", "kind = heston"), "model.kind"),
    (("b = 0.1", "b = abc"), "model.b"),
    (("b = 0.1", "b = 0"), "model"),
    (("eps = 1e-2, 1e-3, 1e-4", "eps = 1e-3, 1e-2, 1e-4"), "friction.eps"),
    (("eps = 1e-2, 1e-3, 1e-4", "eps = 1e-2, 1e-2"), "friction.eps"),
    (("eps = 1e-2, 1e-3, 1e-4", "eps = 0, 1e-3"), "friction.eps"),
    (("p = 1", "p = -1"), "friction"),
    (("T = 1\n", ""), "friction.T"),
    (("n = 400", "n = 1"), "numerics.n"),
    (("paths = 40", "paths = 1"), "numerics.paths"),
])
def test_config_errors_name_the_field(edit, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(SMALL.replace(*edit))


def test_ascending_eps_is_accepted():
    assert parse_config(SMALL.replace("1e-2, 1e-3, 1e-4", "1e-4, 1e-3, 1e-2")).eps == (1e-2, 1e-3, 1e-4)


def test_env_overrides(monkeypatch):
    monkeypatch.setenv("SMALLCOSTS_SEED", "99")
    monkeypatch.setenv("SMALLCOSTS_WORKERS", "3")
    cfg = parse_config(SMALL)
    assert (cfg.seed, cfg.workers) == (99, 3)
    assert parse_config(SMALL, seed=5, workers=1).seed == 5


def test_missing_sigma_exit_code(tmp_path, capsys):
    path = _write(tmp_path, SMALL.replace("sigma = 0.2\n", ""))
    assert cli.main(["sweep", "--config", path]) == 2
    assert "model.sigma" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    assert cli.main(["verify", "--config", str(tmp_path / "nope.ini")]) == 2


def test_sweep_outputs_and_determinism(tmp_path):
    path = _write(tmp_path, SMALL)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["sweep", "--config", path, "--out", str(out)]) == 0
        outs.append(out)
    a = (outs[0] / "sweep.csv").read_bytes()
    assert a == (outs[1] / "sweep.csv").read_bytes()
    rows = list(csv.DictReader(a.decode().splitlines()))
    assert tuple(rows[0]) == SWEEP_COLUMNS and len(rows) == 3
    losses = [float(r["leading_loss"]) for r in rows]
    assert losses[0] > losses[1] > losses[2]
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert {"scaling_slope", "rows", "checks", "config"} <= set(summary)
    assert cli.main(["sweep", "--config", path, "--out", str(outs[0])]) == 0
    assert (outs[0] / "summary.json").read_text() == json.dumps(summary, indent=2, sort_keys=True) + "\n"


def test_seed_changes_results(tmp_path):
    path = _write(tmp_path, SMALL)
    cli.main(["sweep", "--config", path, "--out", str(tmp_path / "a"), "--seed", "1"])
    cli.main(["sweep", "--config", path, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "sweep.csv").read_bytes() != (tmp_path / "b" / "sweep.csv").read_bytes()


def test_simulate_writes_paths(tmp_path):
    path = _write(tmp_path, SMALL.replace("paths = 40", "paths = 5"))
    assert cli.main(["simulate", "--config", path, "--out", str(tmp_path)]) == 0
    rows = list(csv.reader((tmp_path / "paths.csv").read_text().splitlines()))
    assert rows[0][:3] == ["path", "eps", "weight"]
    assert len(rows) == 1 + 5 * 3


def test_large_spread_gives_warnings_not_failures(tmp_path, capsys):
    text = SMALL.replace("eps = 1e-2, 1e-3, 1e-4", "eps = 0.5")
    path = _write(tmp_path, text)
    code = cli.main(["verify", "--config", path, "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "WARN" in out and "FAIL" not in out


def test_failed_check_sets_exit_code(tmp_path, monkeypatch):
    path = _write(tmp_path, SMALL)
    monkeypatch.setattr(cli, "run_verify", lambda cfg, table: [Check("forced", False, -1.0)])
    assert cli.main(["verify", "--config", path, "--out", str(tmp_path)]) == 1
    monkeypatch.setattr(cli, "run_verify", lambda cfg, table: [Check("fine", True, 1.0)])
    assert cli.main(["verify", "--config", path, "--out", str(tmp_path)]) == 0


def test_default_config_verifies(tmp_path, capsys):
    code = cli.main(["verify", "--config", os.path.join(ROOT, "configs", "default.ini"), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0, out
    assert "FAIL" not in out and "WARN" not in out
