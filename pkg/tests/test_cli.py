import json

import pytest

from nilmix.cli import COMMANDS, main
from nilmix.config import SEED_ENV, WORKERS_ENV, data_path

CHAR = {"kind": "character", "m": [1, 0]}
BUMP = {"kind": "bump", "center": [0.25, 0.25, 0.25], "radius": 0.45}

SMALL_CAT = {
    "automorphism": str(data_path("catmap.json")),
    "mixing": {"f0": CHAR, "f1": {"kind": "character", "m": [5, -8]}, "ns": {"start": 1, "stop": 6},
               "budget": 2000},
    "multimix": {"observables": [CHAR, {"kind": "character", "m": [3, 0]}, CHAR], "gaps": [1, 2, 3],
                 "budget": 2000},
    "equid": {"observable": CHAR, "directions": [[1.0, 1.618033988749895]],
              "T": {"base": 2, "exponents": [3, 4, 5, 6]}, "budget": 4096,
              "dichotomy": {"delta": 0.1, "T": 1000.0}},
    "clt": {"observable": CHAR, "n_schedule": [4, 16], "paths": 500, "J": 4, "budget": 2000},
    "donsker": {"observable": CHAR, "n": 64, "paths": 300, "J": 4, "budget": 2000},
    "coboundary": {"psi": {"kind": "character", "m": [1, 1]}, "J": 4, "budget": 4000, "N": 50,
                   "Ns": [25, 50, 100], "sample_count": 300},
    "diophantine": {"direction": [1.0, 1.618033988749895], "zmax": [10, 100]},
}

SMALL_HEIS = {
    "automorphism": str(data_path("heisenberg_aut.json")),
    "mixing": {"f0": BUMP, "ns": [1, 2, 3, 4], "budget": 2000, "min_usable": 1},
    "unstable": {"observable": BUMP, "sides": [4.0], "ns": [0, 1, 2, 3], "budget": 400},
    "diophantine": {"direction": "unstable", "zmax": [10, 100]},
}


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    monkeypatch.delenv(WORKERS_ENV, raising=False)


@pytest.fixture
def cat_cfg(tmp_path):
    p = tmp_path / "cat.json"
    p.write_text(json.dumps(SMALL_CAT))
    return p


@pytest.fixture
def heis_cfg(tmp_path):
    p = tmp_path / "heis.json"
    p.write_text(json.dumps(SMALL_HEIS))
    return p


@pytest.mark.parametrize("command", [c for c in COMMANDS if c not in ("check", "unstable")])
def test_cat_map_commands_are_reproducible(cat_cfg, tmp_path, command):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main([command, "--config", str(cat_cfg), "--seed", "3", "--out", str(out)]) == 0
        outs.append((out / f"{command}_3.csv").read_bytes())
        summary = json.loads((out / "summary.json").read_text())
        assert summary["command"] == command and summary["seed"] == 3
    assert outs[0] == outs[1] and outs[0]


def test_workers_give_reproducible_csv(cat_cfg, tmp_path):
    a = [main(["mixing", "--config", str(cat_cfg), "--workers", "2", "--out", str(tmp_path / d)]) for d in "ab"]
    assert a == [0, 0]
    assert (tmp_path / "a" / "mixing_0.csv").read_bytes() == (tmp_path / "b" / "mixing_0.csv").read_bytes()


def test_seed_changes_output(cat_cfg, tmp_path):
    for s in ("1", "2"):
        assert main(["mixing", "--config", str(cat_cfg), "--seed", s, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "mixing_1.csv").read_bytes() != (tmp_path / "mixing_2.csv").read_bytes()


def test_environment_seed(cat_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "42")
    assert main(["diophantine", "--config", str(cat_cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "diophantine_42.csv").exists()


def test_heisenberg_commands(heis_cfg, tmp_path):
    for command in ("mixing", "unstable", "diophantine"):
        assert main([command, "--config", str(heis_cfg), "--out", str(tmp_path)]) == 0
        assert (tmp_path / f"{command}_0.csv").read_text().count("\n") >= 3


def test_csv_contents(cat_cfg, tmp_path):
    main(["mixing", "--config", str(cat_cfg), "--out", str(tmp_path)])
    lines = (tmp_path / "mixing_0.csv").read_text().splitlines()
    assert lines[0] == "n,mean,se,error,flag,exact"
    assert lines[3].endswith(",0.5")
    main(["diophantine", "--config", str(cat_cfg), "--out", str(tmp_path)])
    lines = (tmp_path / "diophantine_0.csv").read_text().splitlines()
    assert lines[0] == "Zmax,c1_hat,argmin_z,failure"
    assert lines[2].split(",")[2] == "89 -55"


def test_check_output(capsys, tmp_path):
    assert main(["check", "--config", "catmap.json", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "ergodic: true" in text and "[1, -3, 1]" in text and "probe agrees" in text
    assert json.loads((tmp_path / "check.json").read_text())["ergodic"] is True
    assert main(["check", "--config", "heisenberg_aut.json"]) == 0
    text = capsys.readouterr().out
    assert "W^c rational basis: <(0, 0, 1)>" in text and "central 1" in text
    assert main(["check", "--config", "identity.json"]) == 1
    assert "cyclotomic factor of order 1" in capsys.readouterr().out
    assert main(["check", "--config", "heisenberg.json"]) == 0
    assert "no automorphism" in capsys.readouterr().out


def test_exit_codes(tmp_path, capsys):
    # ergodicity gate
    p = tmp_path / "id.json"
    p.write_text(json.dumps({"automorphism": str(data_path("identity.json")), "mixing": SMALL_CAT["mixing"]}))
    assert main(["mixing", "--config", str(p)]) == 1
    assert "NotErgodic" in capsys.readouterr().err
    # unreadable and malformed configs
    assert main(["check", "--config", str(tmp_path / "nope.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["check", "--config", str(bad)]) == 1
    assert "bad.json:1:2" in capsys.readouterr().err
    # runtime error: beyond the orbit horizon
    q = tmp_path / "far.json"
    q.write_text(json.dumps({"automorphism": str(data_path("catmap.json")),
                             "mixing": {**SMALL_CAT["mixing"], "ns": [1, 100000]}}))
    assert main(["mixing", "--config", str(q)]) == 2
    assert "HorizonExceeded" in capsys.readouterr().err
    # command that needs an automorphism on a bare manifold
    assert main(["clt", "--config", "heisenberg.json"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--config", "catmap.json"])
    assert exc.value.code == 2


def test_malformed_observable_is_a_config_error(tmp_path, capsys):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"automorphism": str(data_path("catmap.json")),
                             "mixing": {"f0": {"kind": "character"}, "budget": 10}}))
    assert main(["mixing", "--config", str(p)]) == 1
    assert "ConfigError" in capsys.readouterr().err


@pytest.mark.slow
def test_bundled_heisenberg_mixing(tmp_path):
    assert main(["mixing", "--config", "heisenberg_experiments.json", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "mixing_0.csv").read_text().splitlines()
    assert len(lines) == 13
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert 0 < summary["rho_hat"] < 1 and summary["runtime_s"] > 0
