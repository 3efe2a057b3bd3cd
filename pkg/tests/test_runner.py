import csv
import json

import pytest

from nlwlab import cli
from nlwlab.runner import (ChecksumMismatch, ConfigError, ExperimentConfig, TRAJECTORY_COLUMNS, config_from_dict,
                           load_config, make_run_id, replay, run_experiment, validate)

SMALL = {"grid.points_per_axis": 16, "solver.T_max": 0.2, "randomization.n_draws": 2}


def small(**extra):
    return load_config(None, {**SMALL, **extra})


def read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))


def test_defaults_are_valid():
    cfg = ExperimentConfig()
    for mode in ("simulate", "tails", "audit", "exponents"):
        assert validate(cfg, mode) == []
    assert (cfg.physics.p, cfg.physics.s, cfg.solver.dt) == (4.0, 0.75, 2e-3)


def test_toml_round_trip(tmp_path):
    cfg = small(**{"campaign.lambda_values": [1.0, 2.0], "physics.delta": 0.1})
    path = tmp_path / "c.toml"
    path.write_text(cfg.to_toml())
    back = load_config(path)
    assert back == cfg and back.hash() == cfg.hash()


def test_hash_ignores_output_location():
    assert small().hash() == small(**{"output.directory": "/elsewhere"}).hash()
    assert small().hash() != small(**{"physics.s": 0.8}).hash()


def test_unknown_keys_reported_together():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"grid": {"points": 3}, "bogus": {}, "physics": {"p": "x"}})
    msg = str(exc.value)
    assert "grid.points" in msg and "[bogus]" in msg and "physics.p" in msg


@pytest.mark.parametrize("override,mode,needle", [
    ({"physics.p": 5.5}, "simulate", "3 < p < 5"),
    ({"physics.s": 0.5}, "simulate", "almost sure global existence window"),
    ({"physics.delta": 0.4}, "simulate", "energy growth bound window"),
    ({"campaign.delta_weight": 1.0}, "tails", "weighted tail bound window"),
    ({"campaign.r": float("inf")}, "tails", "headroom"),
    ({"grid.points_per_axis": 15}, "simulate", "grid"),
    ({"solver.T_max": 0.2011}, "simulate", "multiple of solver.dt"),
    ({"audit.sigma": 0.9}, "audit", "interpolation audit"),
])
def test_validation_messages(override, mode, needle):
    msgs = validate(small(**override), mode)
    assert any(needle in m for m in msgs), msgs


def test_validation_collects_every_problem():
    msgs = validate(small(**{"physics.p": 6.0, "solver.dt": -1.0, "randomization.n_draws": -1}))
    assert len(msgs) >= 3


def test_run_id_embeds_hash():
    cfg = small()
    assert make_run_id(cfg).endswith(cfg.hash()[:10])


def test_zero_draws_writes_manifest(tmp_path):
    code, out = run_experiment(small(**{"randomization.n_draws": 0}), "simulate", tmp_path, 1, "r0")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["draws"] == [] and set(man["artifacts"]) == {"report.json"}
    assert (out / "config.snapshot").read_text().startswith('mode = "simulate"')


def test_exponents_run(tmp_path):
    code, out = run_experiment(small(), "exponents", tmp_path, 1, "ex")
    rows = read_csv(out / "exponents.csv")
    assert rows[0][:5] == ["p", "s_c", "s_low", "q", "alpha"]
    p4 = [r for r in rows[1:] if float(r[0]) == 4.0][0]
    assert [float(x) for x in p4[1:5]] == pytest.approx([5 / 6, 3 / 5, 8.0, 0.5], abs=1e-12)
    assert "# sha256:" in (out / "exponents.csv").read_text()


@pytest.fixture(scope="module")
def sim_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    code, out = run_experiment(small(), "simulate", root, 1, "sim")
    return code, out


def test_simulate_artifacts(sim_run):
    code, out = sim_run
    assert code == 0
    rows = read_csv(out / "draws" / "0" / "trajectory.csv")
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert len(rows) == 1 + 5
    rep = json.loads((out / "report.json").read_text())
    assert rep["statuses"]["reached_Tmax"] == 2
    assert (out / "draws" / "1" / "coefficients.rwcf").read_bytes()[:4] == b"RWCF"


def test_replay_matches_with_more_workers(sim_run):
    _, out = sim_run
    files = replay(out / "manifest.json", workers=2)
    assert "draws/0/trajectory.csv" in files


def test_replay_detects_edited_seed(sim_run, tmp_path):
    _, out = sim_run
    man = json.loads((out / "manifest.json").read_text())
    man["config"]["randomization"]["seed"] += 1
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(man))
    with pytest.raises(ChecksumMismatch):
        replay(path)
    assert cli.main(["replay", str(path)]) == 4


def test_replay_detects_tampered_artifact(tmp_path):
    code, out = run_experiment(small(**{"randomization.n_draws": 1}), "simulate", tmp_path, 1, "t")
    target = out / "draws" / "0" / "trajectory.csv"
    target.write_text(target.read_text() + "\n")
    with pytest.raises(ChecksumMismatch):
        replay(out / "manifest.json")


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["exponents", "--out", str(tmp_path), "--grid.points_per_axis", "16"]) == 0
    assert cli.main(["simulate", "--out", str(tmp_path), "--physics.p", "5.5"]) == 2
    assert "3 < p < 5" in capsys.readouterr().err
    assert cli.main(["tails", "--out", str(tmp_path), "--campaign.delta_weight", "1.0"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid\n")
    assert cli.main(["simulate", "--config", str(bad)]) == 2


def test_cli_tails_run(tmp_path):
    args = ["tails", "--out", str(tmp_path), "--run-id", "t", "--grid.points_per_axis", "16",
            "--campaign.n_samples", "60", "--campaign.T_mc", "1.0", "--campaign.lambda_policy", "explicit",
            "--campaign.lambda_values", "0.5,1,2,3"]
    assert cli.main(args) == 0
    rows = read_csv(tmp_path / "t" / "tails.csv")
    assert rows[0] == ["lambda", "lambda_sq", "log_p_hat"] and len(rows) == 5
