import json
from pathlib import Path

import numpy as np
import pytest

from covbridge import cli, ou_example
from covbridge.bundle import load_solution, read_csv, schema
from covbridge.config import config_hash, example_config, load_config, spec_from_dict

OU_TOML = """
[model]
name = "oscillator"
T = 1.0
A = [[0.0, 1.0], [-1.0, -1.0]]
B = [[0.0], [1.0]]
C = [[0.0, 1.0]]
Sigma0 = [[0.5, 0.0], [0.0, 0.5]]

[target]
kind = "output"
Sigma = [[0.0625]]

[grid]
steps = 200
"""


def write(tmp_path, text, name="model.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_solve_example(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["solve", "--example", "ou", "--out", str(out)]) == 0
    doc = json.loads((out / "solution.json").read_text())
    assert doc["CXCt"][0][0] == pytest.approx(0.0625, abs=1e-12)
    assert doc["Jdyn"] == pytest.approx(doc["Jstatic"], rel=1e-3)
    for k in ("X", "Y", "Z", "Mlag"):
        assert k in doc["static"]
    assert doc["provenance"]["grid"] == {"T": 1.0, "steps": 1000}
    header, data = read_csv(out / "gains.csv")
    assert header == ["t", "Pi_00", "Pi_01", "Pi_10", "Pi_11", "K_00", "K_01"]
    assert data.shape == (1001, 7)
    header, data = read_csv(out / "covariance.csv")
    assert header[:5] == ["t", "Sigma_00", "Sigma_01", "Sigma_10", "Sigma_11"]
    assert "radius_0" in header and "axis_11" in header
    assert "Jdyn" in capsys.readouterr().out


def test_round_trip(tmp_path):
    out = tmp_path / "out"
    code, pipe = cli.run_solve(cli.build_parser().parse_args(
        ["solve", "--example", "ou", "--steps", "100", "--out", str(out)]))
    doc, static = load_solution(out / "solution.json")
    for k in ("X", "Y", "Z", "Mlag"):
        assert np.array_equal(static[k], np.atleast_2d(getattr(pipe.sol, k)))
    assert np.array_equal(static["PiT"], pipe.PiT)
    _, gains = read_csv(out / "gains.csv")
    assert np.array_equal(gains[:, 1:5].reshape(-1, 2, 2), pipe.sched.Pi)
    _, cov = read_csv(out / "covariance.csv")
    assert np.array_equal(cov[:, 1:5].reshape(-1, 2, 2), pipe.cov.Sigma)
    assert doc["residuals"]["stat_x"] == pipe.residuals["stat_x"]


def test_solve_config_file(tmp_path):
    path = write(tmp_path, OU_TOML)
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "solution.json").read_text())
    assert doc["provenance"]["grid"]["steps"] == 200
    assert doc["model"]["model"]["name"] == "oscillator"


def test_zero_control_config(tmp_path):
    from covbridge import TimeGrid, compute_prior_moments
    ST = compute_prior_moments(ou_example(), TimeGrid(1.0, 1000)).ST
    text = OU_TOML.replace('C = [[0.0, 1.0]]', 'C = [[1.0, 0.0], [0.0, 1.0]]')
    text = text.replace("Sigma = [[0.0625]]", f"Sigma = {ST.tolist()}")
    text = text.replace("steps = 200", "steps = 1000")
    path = write(tmp_path, text)
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "solution.json").read_text())
    assert doc["Jdyn"] < 1e-10


@pytest.mark.parametrize("text", [
    "not toml [[[",
    OU_TOML.replace('kind = "output"', 'kind = "bogus"'),
    OU_TOML.replace("B = [[0.0], [1.0]]\n", ""),
    OU_TOML.replace("steps = 200", "steps = 1"),
    OU_TOML.replace("Sigma0 = [[0.5, 0.0], [0.0, 0.5]]", 'Sigma0 = "x"'),
])
def test_parse_errors_exit_2(tmp_path, text, capsys):
    path = write(tmp_path, text)
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_cli_usage_errors():
    assert cli.main(["solve"]) == 2
    assert cli.main(["bogus"]) == 2
    assert cli.main(["solve", "--example", "ou", "--steps", "1"]) == 2
    assert cli.main(["solve", "--config", "/nonexistent.toml"]) == 2


def test_not_controllable_exit_3(tmp_path, capsys):
    text = OU_TOML.replace("A = [[0.0, 1.0], [-1.0, -1.0]]", "A = [[0.0, 0.0], [0.0, 0.0]]")
    path = write(tmp_path, text)
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "o")]) == 3
    assert "NotControllable" in capsys.readouterr().err


def test_rank_deficient_exit_4(tmp_path, capsys):
    text = OU_TOML.replace("C = [[0.0, 1.0]]", "C = [[1.0, 1.0], [2.0, 2.0]]")
    text = text.replace("Sigma = [[0.0625]]", "Sigma = [[1.0, 0.0], [0.0, 1.0]]")
    path = write(tmp_path, text)
    assert cli.main(["solve", "--config", path, "--out", str(tmp_path / "o")]) == 4
    assert "RankDeficient" in capsys.readouterr().err


def test_simulate_single_path(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["simulate", "--example", "ou", "--steps", "100", "--paths", "1",
                     "--store-every", "1", "--out", str(out)])
    assert code == 0
    header, data = read_csv(out / "trajectories.csv")
    assert header == ["path", "t", "x_0", "x_1", "u_0"]
    assert data.shape == (101, 5)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] is True


def test_simulate_deterministic_and_passes(tmp_path):
    files = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["simulate", "--example", "ou", "--paths", "2000", "--seed", "42",
                         "--out", str(out)]) == 0
        files.append((out / "trajectories.csv").read_bytes())
    assert files[0] == files[1]
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["pass"] is True
    assert summary["seed"] == 42 and summary["n_paths"] == 2000
    _, data = read_csv(tmp_path / "a" / "trajectories.csv")
    assert np.unique(data[:, 0]).size == 100


def test_simulate_statistical_failure_exit_5(tmp_path, monkeypatch, capsys):
    import covbridge.mc as mc
    real = mc._check

    def strict(value, expected, stderr, nsigma):
        return real(value, expected, stderr, 0.0)

    monkeypatch.setattr(mc, "_check", strict)
    code = cli.main(["simulate", "--example", "ou", "--steps", "100", "--paths", "200",
                     "--out", str(tmp_path / "o")])
    assert code == 5
    assert "statistical check failed" in capsys.readouterr().err


def test_verify_example_passes(capsys):
    assert cli.main(["verify", "--example", "ou"]) == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out and "oracle_gap" in out


def test_verify_scalar(tmp_path, capsys):
    text = """
[model]
T = 1.0
A = 0.0
B = 1.0
C = 1.0
Sigma0 = 1.0
[target]
Sigma = 1.0
"""
    path = write(tmp_path, text)
    code, rows = cli.run_verify(cli.build_parser().parse_args(["verify", "--config", path]))
    assert code == 0
    vals = {r[0]: r[1] for r in rows}
    for k in ("stat_x", "stat_y", "constraint", "quadratic", "rT", "oracle_gap"):
        assert vals[k] < 1e-6


def test_verify_corrupted_multiplier(capsys):
    assert cli.main(["verify", "--example", "ou", "--steps", "200", "--corrupt-mlag"]) == 6
    assert "stat_x" in capsys.readouterr().err


def test_config_hash_tracks_solver_fields():
    cfg = example_config("ou")
    h = config_hash(cfg.spec, 1000)
    assert config_hash(cfg.spec, 1000) == h
    assert config_hash(cfg.spec, 500) != h
    import dataclasses
    renamed = dataclasses.replace(cfg.spec, name="other")
    assert config_hash(renamed, 1000) == h
    spec2 = dataclasses.replace(cfg.spec, T=2.0)
    assert config_hash(spec2, 1000) != h
    spec3 = dataclasses.replace(cfg.spec, Sigma0=cfg.spec.Sigma0 * (1 + 1e-15))
    assert config_hash(spec3, 1000) != h


def test_time_varying_config(tmp_path):
    text = """
[model]
T = 1.0
A = { times = [0.0, 1.0], values = [[[0.0]], [[1.0]]] }
B = [[1.0]]
C = [[1.0]]
Sigma0 = [[1.0]]
[target]
kind = "state"
Sigma = [[1.0]]
"""
    cfg = load_config(write(tmp_path, text))
    assert not cfg.spec.A.is_constant
    assert cfg.spec.A(0.5)[0, 0] == pytest.approx(0.5)
    assert cli.main(["solve", "--config", write(tmp_path, text, "b.toml"),
                     "--out", str(tmp_path / "o")]) == 0


def test_spec_from_dict_vectors():
    spec = spec_from_dict({"model": {"T": 1, "A": [[0, 1], [0, 0]], "B": [0, 1], "C": [1, 0],
                                     "Sigma0": [[1, 0], [0, 1]]},
                           "target": {"Sigma": 1}})
    assert spec.B.shape == (2, 1) and spec.C.shape == (1, 2)


def test_schema_lists_all_files():
    doc = schema()
    for f in ("solution.json", "gains.csv", "covariance.csv", "trajectories.csv", "summary.json"):
        assert f in doc["files"]


CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.toml"))


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_verify(path, capsys):
    assert cli.main(["verify", "--config", str(path)]) == 0
