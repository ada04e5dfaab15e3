import csv
import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from netsched.cli import run_command
from netsched.config import ConfigError, RunConfig, dumps, load_config, loads, to_dict
from netsched.presets import preset

ROOT = Path(__file__).resolve().parents[1]


def toy(a_us, M=1, a_s=0.0, schedule=None):
    data = {
        "M": M,
        "plants": [{"index": i, "A": [[a]], "B": [[1.0]], "K": [[a_s - a]]} for i, a in enumerate(a_us, start=1)],
        "solver": {"h": "1/10"},
    }
    if schedule:
        data["schedule"] = schedule
    return data


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_shipped_experiment1_config():
    run = load_config(ROOT / "configs" / "experiment1.json")
    assert run.ncs.N == 2 and run.ncs.M == 1
    assert run.params.probabilities.values == (Fraction(1, 2), Fraction(1, 2))
    pre = preset("experiment1")
    assert all(np.array_equal(a.A, b.A) and np.array_equal(a.K, b.K) for a, b in zip(run.ncs.plants, pre.plants))
    assert np.array_equal(run.certificates[2].P_u, pre.certificates[2].P_u)


def test_round_trip_canonical():
    run = load_config(ROOT / "configs" / "experiment1.json")
    again = loads(dumps(run))
    assert again == run and to_dict(again) == to_dict(run)
    assert dumps(again) == dumps(run)


def test_capacity_rejected(tmp_path):
    with pytest.raises(ConfigError, match="0<M<N"):
        load_config(write(tmp_path, toy([2.0, 2.0], M=2)))


def test_non_rational_probability_rejected(tmp_path):
    data = toy([2.0, 0.5], schedule={"partition": [[1], [2]], "probabilities": ["half", "1/2"]})
    with pytest.raises(ConfigError, match="schedule/probabilities/0"):
        load_config(write(tmp_path, data))
    data["schedule"]["probabilities"] = [0.5, 0.5]
    with pytest.raises(ConfigError, match="rational"):
        load_config(write(tmp_path, data))


def test_schema_and_syntax_diagnostics(tmp_path):
    data = toy([2.0, 0.5])
    data["plants"][0]["A"] = "2"
    with pytest.raises(ConfigError, match="plants/0/A"):
        load_config(write(tmp_path, data))
    bad = tmp_path / "bad.json"
    bad.write_text('{"M": 1,\n "plants": [}')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(bad)


def test_preset_values():
    assert preset("inverted-pendulum").plants[0].A.tolist() == [[1.0123, 0.0502], [0.4920, 1.0123]]
    A = preset("batch-reactor").plants[0].A
    assert A.shape == (4, 4) and A[0, 0] == 1.0795
    with pytest.raises(KeyError):
        preset("nope")


def test_exit_codes(tmp_path, capsys):
    assert run_command(["check", "--preset", "experiment1"]) == 0
    assert run_command(["verify", "--preset", "experiment1"]) == 0
    assert run_command(["verify", "--preset", "experiment1", "--band", "strict"]) == 2
    assert run_command(["check", "--preset", "experiment1", "--bogus"]) == 1
    assert run_command(["check"]) == 1
    assert run_command(["check", "--config", str(tmp_path / "missing.json")]) == 1
    capsys.readouterr()
    cfg = write(tmp_path, toy([2.0, 2.0]))
    assert run_command(["search", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "report a failure" in capsys.readouterr().out


def test_pipeline_chain(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, toy([2.0, 0.5], schedule={"partition": [[1], [2]], "probabilities": ["4/5", "1/5"]}))
    assert run_command(["synth", "--config", cfg, "--out", str(out)]) == 0
    assert run_command(["search", "--config", str(out / "synthesis.json"), "--out", str(out)]) == 0
    found = load_config(out / "search.json")
    assert found.params.probability_of(1) > Fraction(3, 4)
    assert run_command(["schedule", "--config", str(out / "search.json"), "--out", str(out), "--horizon", "100"]) == 0
    rows = list(csv.DictReader(open(out / "schedule.csv")))
    assert len(rows) == 100
    assert run_command(["simulate", "--config", str(out / "search.json"), "--out", str(out),
                        "--horizon", "100", "--trials", "50"]) == 0
    summary = json.loads((out / "montecarlo.json").read_text())
    assert set(summary) == {"1", "2"} and not any(v["diverged"] for v in summary.values())


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("NETSCHED_THREADS", "many")
    assert run_command(["search", "--preset", "experiment1", "--h", "1/2", "--out", str(tmp_path)]) == 1
    monkeypatch.setenv("NETSCHED_THREADS", "2")
    assert run_command(["search", "--preset", "experiment1", "--h", "1/2", "--out", str(tmp_path)]) == 0


def read_tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
            and p.name != "results.json"}


def test_demo_exp1_deterministic_and_csvs_valid(tmp_path):
    args = ["demo", "exp1", "--seed", "1", "--horizon", "200", "--trials", "100"]
    assert run_command(args + ["--out", str(tmp_path / "a")]) == 0
    assert run_command(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = read_tree(tmp_path / "a"), read_tree(tmp_path / "b")
    assert a == b
    for plant in (1, 2):
        files = sorted((tmp_path / "a" / "costs" / f"plant{plant}").glob("*.csv"))
        assert len(files) == 100
        for f in files[:10]:
            sums = [float(r["partial_sum"]) for r in csv.DictReader(open(f))]
            assert len(sums) == 201 and np.all(np.isfinite(sums)) and np.all(np.diff(sums) >= 0)
    for f in (tmp_path / "a" / "trajectories").glob("*.csv"):
        for r in csv.DictReader(open(f)):
            xs = [float(r[f"x_{k}"]) for k in range(1, 5) if r[f"x_{k}"]]
            assert len(xs) == (4 if r["plant"] == "1" else 2)
            assert all(np.isfinite(xs)) and float(r["norm_sq"]) == pytest.approx(sum(x * x for x in xs))
