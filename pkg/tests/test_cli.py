import json
import os
import subprocess
import sys

import numpy as np
import pytest

from princebart.cli import main
from princebart.data import ColumnSpec, Dataset, write_csv
from princebart.sim import gen_sim2
from princebart.strata import resolve_threads

RUN = {"chains": 2, "iterations": 30, "burn_in": 10, "trees_m": 20, "seed": 3, "propensity_burn_in": 5,
       "propensity_draws": 10}
COLUMNS = [{"name": "z", "role": "assignment", "kind": "binary"},
           {"name": "w", "role": "treatment", "kind": "binary"},
           {"name": "y", "role": "outcome", "kind": "binary"},
           {"name": "x1", "role": "covariate", "kind": "binary"},
           {"name": "x2", "role": "covariate", "kind": "binary"}]


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("inputs")
    d, _ = gen_sim2(seed=2, n=800)
    site = np.arange(d.n) % 3
    d = d.with_covariate("site", site, "ordinal")
    write_csv(d, root / "data.csv")
    cfg = {"columns": COLUMNS, "run": RUN,
           "segments": [{"name": "large_effect", "conditions": {"x1": [1], "x2": [1]}}]}
    (root / "config.json").write_text(json.dumps(cfg))
    return root


@pytest.fixture(scope="module")
def fit_dir(inputs, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert main(["-q", "fit", "--data", str(inputs / "data.csv"), "--config", str(inputs / "config.json"),
                 "--out", str(out), "--threads", "1"]) == 0
    return out


def read(p):
    return json.loads(p.read_text())


def test_fit_outputs(fit_dir):
    names = {p.name for p in fit_dir.iterdir()}
    assert {"draws.csv", "summary.json", "diagnostics.json", "units.csv", "manifest.json", "segments.json",
            "surrogate_selection.csv", "surrogate_tree.txt", "surrogate_tree.dot",
            "marginal_dependence.csv"} <= names
    summ = read(fit_dir / "summary.json")
    est = {e["estimand"]: e for e in summ["estimands"]}
    assert set(est) == {"satt_c", "mate_c", "mcate_c[large_effect]"}
    assert np.isfinite(est["satt_c"]["sd"]) and est["satt_c"]["sd"] > 0
    man = read(fit_dir / "manifest.json")
    assert man["schema_version"] == summ["schema_version"] == "1"
    assert man["seed"] == 3 and man["config"]["chains"] == 2
    assert set(man["timings_seconds"]) >= {"chains", "interpret"}
    assert len(man["inputs"]) == 2 and all(len(h) == 64 for h in man["inputs"].values())
    lines = (fit_dir / "draws.csv").read_text().splitlines()
    assert lines[0] == "chain,iteration,satt_c,mate_c,mcate_c[large_effect]" and len(lines) == 1 + 2 * 20


def test_fit_twice_byte_identical(inputs, fit_dir, tmp_path):
    assert main(["-q", "fit", "--data", str(inputs / "data.csv"), "--config", str(inputs / "config.json"),
                 "--out", str(tmp_path), "--threads", "2"]) == 0
    for name in ("draws.csv", "summary.json", "units.csv", "segments.json", "diagnostics.json"):
        assert (tmp_path / name).read_bytes() == (fit_dir / name).read_bytes(), name


def test_linear_backend_same_schema(inputs, fit_dir, tmp_path):
    assert main(["-q", "fit", "--data", str(inputs / "data.csv"), "--config", str(inputs / "config.json"),
                 "--out", str(tmp_path), "--backend", "linear"]) == 0
    a, b = read(fit_dir / "summary.json"), read(tmp_path / "summary.json")
    assert b["backend"] == "linear"
    assert [sorted(e) for e in a["estimands"]] == [sorted(e) for e in b["estimands"]]
    assert a["estimands"][0]["mean"] != b["estimands"][0]["mean"]


def test_rerun_every_command(fit_dir, tmp_path, capsys):
    assert main(["-q", "rerun", str(fit_dir / "manifest.json"), "--out", str(tmp_path / "fit2")]) == 0
    assert '"reproduced": true' in capsys.readouterr().out
    assert main(["-q", "sensitivity", "--fit", str(fit_dir), "--out", str(tmp_path / "s"), "--zeta-grid", "0,2",
                 "--nu", "0.25"]) == 0
    assert main(["-q", "interpret", "--fit", str(fit_dir), "--out", str(tmp_path / "i")]) == 0
    main(["-q", "diagnose", "--fit", str(fit_dir), "--out", str(tmp_path / "d")])
    capsys.readouterr()
    for sub in ("s", "i", "d"):
        code = main(["-q", "rerun", str(tmp_path / sub / "manifest.json"), "--out", str(tmp_path / (sub + "2"))])
        out = capsys.readouterr().out.strip().splitlines()[-1]
        assert json.loads(out)["reproduced"] is True, sub
        assert code in (0, 4)


def test_sensitivity_zero_equals_baseline(fit_dir, tmp_path):
    assert main(["-q", "sensitivity", "--fit", str(fit_dir), "--out", str(tmp_path), "--zeta-grid", "0",
                 "--nu", "0.25"]) == 0
    s = read(tmp_path / "sensitivity.json")
    base = {e["estimand"]: e for e in read(fit_dir / "summary.json")["estimands"]}["satt_c"]
    assert s["zeta0_matches_baseline"] is True
    assert s["curve"][0]["mean"] == base["mean"] and s["curve"][0]["sd"] == base["sd"]


def test_sensitivity_monotone_on_positive_effect(tmp_path):
    r = np.random.default_rng(8)
    n = 600
    x = r.normal(size=(n, 1))
    z = (r.random(n) < 0.5).astype(int)
    g = r.choice(3, n, p=[0.6, 0.2, 0.2])
    w = np.where(g == 0, z, g == 2).astype(int)
    y = (r.random(n) < np.where(w == 1, 0.75, 0.3)).astype(int)
    write_csv(Dataset(x, z, w, y, (ColumnSpec("x1", "covariate"),)), tmp_path / "d.csv")
    cols = COLUMNS[:3] + [{"name": "x1", "role": "covariate", "kind": "continuous"}]
    (tmp_path / "c.json").write_text(json.dumps({"columns": cols, "run": RUN}))
    assert main(["-q", "fit", "--data", str(tmp_path / "d.csv"), "--config", str(tmp_path / "c.json"),
                 "--out", str(tmp_path / "f")]) == 0
    assert main(["-q", "sensitivity", "--fit", str(tmp_path / "f"), "--out", str(tmp_path / "s"),
                 "--zeta-grid", "0,1,2,3,4,5", "--nu", "0.25"]) == 0
    means = [row["mean"] for row in read(tmp_path / "s" / "sensitivity.json")["curve"]]
    assert all(b < a for a, b in zip(means, means[1:]))


def test_estimate_nu_paths(fit_dir, tmp_path, inputs):
    assert main(["-q", "sensitivity", "--fit", str(fit_dir), "--out", str(tmp_path / "a"), "--zeta-grid", "0,1",
                 "--estimate-nu", "site"]) == 0
    assert read(tmp_path / "a" / "sensitivity.json")["nu"] >= 0
    assert main(["-q", "sensitivity", "--fit", str(fit_dir), "--out", str(tmp_path / "b"), "--zeta-grid", "0",
                 "--estimate-nu", "nope"]) == 3
    # a grouping column with a single level carries no cross-group variation
    one = tmp_path / "one.csv"
    lines = (inputs / "data.csv").read_text().splitlines()
    one.write_text("\n".join([lines[0] + ",city"] + [ln + ",lagos" for ln in lines[1:]]) + "\n")
    cfg = json.loads((inputs / "config.json").read_text())
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["-q", "fit", "--data", str(one), "--config", str(tmp_path / "c.json"),
                 "--out", str(tmp_path / "f1")]) == 0
    code = main(["-q", "sensitivity", "--fit", str(tmp_path / "f1"), "--out", str(tmp_path / "c"),
                 "--estimate-nu", "city"])
    assert code == 3
    assert read(tmp_path / "c" / "error.json")["error"] == "data"


def test_simulate_smoke_and_usage(tmp_path):
    assert main(["-q", "simulate", "--scenario", "sim1", "--reps", "2", "--chains", "1", "--iterations", "6",
                 "--burn-in", "2", "--backend", "linear", "--out", str(tmp_path / "s")]) == 0
    m = read(tmp_path / "s" / "metrics.json")
    assert m["reps"] == 2 and all({"bias", "rmse", "coverage_90"} <= set(r) for r in m["rows"])
    assert main(["-q", "simulate", "--scenario", "sim7", "--out", str(tmp_path / "u")]) == 2
    assert main(["-q", "rerun", str(tmp_path / "s" / "manifest.json"), "--out", str(tmp_path / "s2")]) == 0


def test_simulate_sim2_rows_both_backends(tmp_path):
    assert main(["-q", "simulate", "--scenario", "sim2", "--reps", "2", "--chains", "1", "--iterations", "6",
                 "--burn-in", "2", "--backend", "both", "--out", str(tmp_path)]) == 0
    rows = read(tmp_path / "metrics.json")["rows"]
    labels = {(r["backend"], r["row"]) for r in rows}
    for be in ("bart", "linear"):
        assert (be, "segment with no effect") in labels and (be, "segment with large effect") in labels


def test_error_exit_codes(inputs, tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--config", str(inputs / "config.json"),
                 "--out", str(tmp_path / "o")]) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err == {"error": "data", "message": err["message"], "exit_code": 3}
    bad = tmp_path / "bad.csv"
    bad.write_text("z,w,y,x1,x2\n1,1,2,0,0\n")
    assert main(["-q", "fit", "--data", str(bad), "--config", str(inputs / "config.json"),
                 "--out", str(tmp_path / "o")]) == 3
    assert main(["fit", "--data", "x"]) == 2
    assert main(["-q", "interpret", "--fit", str(tmp_path), "--out", str(tmp_path / "o")]) == 2
    assert main(["-q", "sensitivity", "--fit", str(tmp_path), "--out", str(tmp_path / "o"), "--nu", "1",
                 "--estimate-nu", "site"]) == 2


def test_adequacy_exit_code(tmp_path):
    n = 200
    r = np.random.default_rng(0)
    x = r.normal(size=(n, 1))
    z = (r.random(n) < 0.5).astype(int)
    write_csv(Dataset(x, z, np.zeros(n), r.integers(0, 2, n), (ColumnSpec("x1", "covariate"),)),
              tmp_path / "d.csv")
    cols = COLUMNS[:3] + [{"name": "x1", "role": "covariate", "kind": "continuous"}]
    (tmp_path / "c.json").write_text(json.dumps({"columns": cols, "run": RUN}))
    assert main(["-q", "fit", "--data", str(tmp_path / "d.csv"), "--config", str(tmp_path / "c.json"),
                 "--out", str(tmp_path / "o"), "--backend", "linear"]) == 4
    assert read(tmp_path / "o" / "error.json")["error"] == "adequacy"


def test_diagnose_threshold_exit(fit_dir, tmp_path):
    assert main(["-q", "diagnose", "--fit", str(fit_dir), "--rhat-max", "100", "--ess-min", "1"]) == 0
    assert main(["-q", "diagnose", "--fit", str(fit_dir), "--ess-min", "1e9", "--out", str(tmp_path)]) == 4
    assert read(tmp_path / "diagnose.json")["converged"] is False


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("PRINCE_BART_THREADS", "3")
    assert resolve_threads() == 3
    assert resolve_threads(2) == 2


def test_module_entry_point(fit_dir):
    out = subprocess.run([sys.executable, "-m", "princebart", "diagnose", "--fit", str(fit_dir),
                          "--rhat-max", "100", "--ess-min", "1"], capture_output=True, text=True,
                         env={**os.environ})
    assert out.returncode == 0
    assert json.loads(out.stdout)["converged"] is True
