"""Command-line front end: fit, simulate, sensitivity, interpret, diagnose, rerun.

Every command writes its results to ``--out`` together with a
``manifest.json``; ``prince-bart rerun <manifest> --out DIR`` repeats the
recorded command and checks that every output is byte-identical.

Exit codes: 0 success, 1 unexpected failure or non-reproduced rerun,
2 usage, 3 data, 4 convergence or data adequacy.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._jit import backend_name
from .data import DataError, RunConfig, ingest_csv, load_config, read_column, standardize_covariates
from .strata import DataAdequacyError

log = logging.getLogger("princebart")

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA, EXIT_ADEQUACY = 0, 1, 2, 3, 4
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class ConvergenceError(Exception):
    pass


# ---------------------------------------------------------------- io helpers

def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else None
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    return o


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2) + "\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path: Path, rows: list[dict], columns=None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_cell(r.get(c, "")) for c in columns])


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _software() -> dict:
    import numba
    import scipy

    return {"princebart": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "kernels": backend_name()}


def write_manifest(out: Path, command: str, args: dict, inputs: list, config: dict | None, timings: dict) -> dict:
    outputs = {p.name: sha256(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != MANIFEST}
    man = {"schema_version": SCHEMA_VERSION, "command": command, "args": args, "config": config,
           "seed": (config or {}).get("seed", args.get("seed")),
           "inputs": {str(Path(p).resolve()): sha256(p) for p in inputs}, "software": _software(),
           "timings_seconds": timings, "outputs": outputs}
    write_json(out / MANIFEST, man)
    return man


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(v):
    if v is not None:
        return v
    env = os.environ.get("PRINCE_BART_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


def _run_overrides(a) -> dict:
    return {"seed": a.seed, "chains": a.chains, "iterations": a.iterations, "burn_in": a.burn_in,
            "backend": a.backend, "dependence": a.dependence}


def _load_fit(fit_dir: Path) -> dict:
    mpath = fit_dir / MANIFEST
    if not mpath.exists():
        raise UsageError(f"{fit_dir} has no {MANIFEST}; is it a fit output directory?")
    man = json.loads(mpath.read_text())
    if man.get("command") != "fit":
        raise UsageError(f"{fit_dir} holds a {man.get('command')!r} run, not a fit")
    return man


def _fit_inputs(man: dict):
    doc = load_config(man["args"]["config"])
    cfg = RunConfig.from_dict(man["config"])
    d = ingest_csv(man["args"]["data"], doc["columns"])
    return d, cfg, doc


# ---------------------------------------------------------------- commands

def cmd_fit(a) -> int:
    from .estimands import DrawEstimator, SegmentDefinition, summarize_results
    from .strata import pooled_moments, run_chains

    timings = {}
    t0 = time.perf_counter()
    out = _outdir(a.out)
    doc = load_config(a.config)
    cfg = doc["run"].replace(**_run_overrides(a))
    threads = _threads(a.threads)
    d = ingest_csv(a.data, doc["columns"])
    _, std_warnings = standardize_covariates(d)
    segments = [SegmentDefinition.from_dict(s) for s in doc["segments"]]
    est = DrawEstimator(d, segments=segments, dependence=cfg.dependence)
    timings["ingest"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    log.info("fitting %d chains x %d iterations (%s backend)", cfg.chains, cfg.iterations, cfg.backend)
    results = run_chains(d, cfg, estimator=est, keep_units=True, threads=threads)
    timings["chains"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    summ = summarize_results(results)
    names = list(summ)
    rows = []
    for r in results:
        for j in range(r.retained):
            row = {"chain": r.chain, "iteration": cfg.burn_in + j}
            row.update({k: float(r.estimands[k][j]) for k in names})
            rows.append(row)
    write_rows(out / "draws.csv", rows, ["chain", "iteration", *names])
    write_json(out / "summary.json", {"schema_version": SCHEMA_VERSION, "backend": cfg.backend,
                                      "dependence": cfg.dependence, "n": d.n,
                                      "segments": [s.to_dict() for s in segments],
                                      "estimands": [s.to_dict() for s in summ.values()]})
    mom = pooled_moments(results)
    _write_units(out, d, results[0].propensity, mom)
    diag = _diagnostics_doc(results, summ, std_warnings)
    write_json(out / "diagnostics.json", diag)
    timings["summaries"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cate_draws = np.vstack([r.unit_draws["cate_c"] for r in results]).astype(float)
    pi_draws = np.vstack([r.unit_draws["pi_c"] for r in results]).astype(float)
    _write_interpretation(out, d, mom["cate_c"][0], cate_draws, pi_draws)
    timings["interpret"] = time.perf_counter() - t0
    args = {"data": str(Path(a.data).resolve()), "config": str(Path(a.config).resolve()),
            **{k: v for k, v in _run_overrides(a).items() if v is not None}}
    write_manifest(out, "fit", args, [a.data, a.config], cfg.to_dict(), timings)
    print(json.dumps(_clean({s.name: {"mean": s.mean, "sd": s.sd, "ci90": s.ci90} for s in summ.values()})))
    return EXIT_OK


def _write_units(out, d, propensity, mom):
    from .robustness import CRUMP_BOUND, flag_causal_support, flag_extreme_propensity

    support = flag_causal_support(mom["omega_0c"][1], mom["omega_1c"][1], d.z)
    extreme = flag_extreme_propensity(propensity, CRUMP_BOUND)
    cols = ["unit", "z", "w", "y", "propensity_index", "p_complier", "pi_c_mean", "pi_c_sd", "omega_1c_mean",
            "omega_1c_sd", "omega_0c_mean", "omega_0c_sd", "cate_c_mean", "cate_c_sd", "flag_extreme_propensity",
            "flag_causal_support"]
    rows = []
    for i in range(d.n):
        rows.append({"unit": i, "z": int(d.z[i]), "w": int(d.w[i]), "y": int(d.y[i]),
                     "propensity_index": float(propensity[i]), "p_complier": float(mom["is_complier"][0][i]),
                     "pi_c_mean": float(mom["pi_c"][0][i]), "pi_c_sd": float(mom["pi_c"][1][i]),
                     "omega_1c_mean": float(mom["omega_1c"][0][i]), "omega_1c_sd": float(mom["omega_1c"][1][i]),
                     "omega_0c_mean": float(mom["omega_0c"][0][i]), "omega_0c_sd": float(mom["omega_0c"][1][i]),
                     "cate_c_mean": float(mom["cate_c"][0][i]), "cate_c_sd": float(mom["cate_c"][1][i]),
                     "flag_extreme_propensity": int(extreme[i]), "flag_causal_support": int(support[i])})
    write_rows(out / "units.csv", rows, cols)


def _diagnostics_doc(results, summ, std_warnings, rhat_max=1.05, ess_min=100.0):
    warnings = list(std_warnings)
    est = {}
    for name, s in summ.items():
        rh, es = s.extra.get("rhat"), s.extra.get("ess")
        est[name] = {"rhat": rh, "ess": es, "skipped_draws": s.skipped}
        if rh is not None and math.isfinite(rh) and rh > rhat_max:
            warnings.append(f"{name}: R-hat {rh:.3f} exceeds {rhat_max}")
        if es is not None and math.isfinite(es) and es < ess_min:
            warnings.append(f"{name}: ESS {es:.0f} below {ess_min:g}")
    chains = [{"chain": r.chain, "acceptance": r.acceptance, "empty_fits": r.empty_fits, "skipped": r.skipped}
              for r in results]
    for r in results:
        for k, v in r.empty_fits.items():
            if v:
                warnings.append(f"chain {r.chain}: surface {k} had no units in {v} iteration(s)")
    return {"schema_version": SCHEMA_VERSION, "thresholds": {"rhat_max": rhat_max, "ess_min": ess_min},
            "estimands": est, "chains": chains, "warnings": warnings}


def _write_interpretation(out, d, cate_mean, cate_draws=None, pi_draws=None, min_gain=0.01, max_depth=3,
                          pi_mean=None):
    from .interpret import leaf_summaries, marginal_dependence, surrogate_deep_select, surrogate_shallow

    trace = surrogate_deep_select(cate_mean, d.x, names=d.names, min_gain=min_gain)
    write_rows(out / "surrogate_selection.csv", trace.to_rows(), ["step", "covariate", "r2"])
    seg = {"status": trace.status, "selected": [d.names[v] for v in trace.selected], "segments": []}
    if trace.selected:
        tree = surrogate_shallow(cate_mean, d.x, trace.selected, names=d.names, max_depth=max_depth)
        (out / "surrogate_tree.txt").write_text(tree.to_text())
        (out / "surrogate_tree.dot").write_text(tree.to_dot())
        if cate_draws is not None:
            seg["segments"] = leaf_summaries(tree, d.x, cate_draws, pi_draws)
        else:
            leaf = tree.apply(d.x)
            for k, (nd, path) in enumerate(tree.leaves()):
                m = leaf == k
                w = pi_mean[m]
                seg["segments"].append({"leaf": k, "segment": tree.describe_path(path), "n": int(m.sum()),
                                        "surrogate_value": nd.value,
                                        "weighted_cate_mean": float(np.dot(cate_mean[m], w) / w.sum())})
    write_json(out / "segments.json", seg)
    if pi_draws is not None:
        md = []
        for j, name in enumerate(d.names):
            if 2 <= np.unique(d.x[:, j]).size <= 20:
                for row in marginal_dependence(pi_draws, d.x[:, j]):
                    md.append({"covariate": name, **row})
        write_rows(out / "marginal_dependence.csv", md,
                   ["covariate", "group", "n", "mean", "lo90", "hi90", "small_cell"])


def cmd_simulate(a) -> int:
    from .sim import desk_config, replicate

    if a.scenario not in ("sim1", "sim2"):
        raise UsageError(f"unknown scenario {a.scenario!r}; choose sim1 or sim2")
    out = _outdir(a.out)
    backends = ["bart", "linear"] if a.backend in (None, "both") else [a.backend]
    reps = a.reps if a.reps is not None else (200 if a.full_scale else 50)
    scale = dict(chains=20, iterations=250, burn_in=100) if a.full_scale else {}
    over = {k: v for k, v in dict(chains=a.chains, iterations=a.iterations, burn_in=a.burn_in,
                                  dependence=a.dependence).items() if v is not None}
    base_seed = a.seed if a.seed is not None else 1
    threads = _threads(a.threads)
    timings = {}
    tables = []
    rep_rows = []
    configs = {}
    for be in backends:
        cfg = desk_config(be, **{**scale, **over})
        configs[be] = cfg.to_dict()
        t0 = time.perf_counter()
        res = replicate(a.scenario, reps, cfg, base_seed=base_seed, threads=threads,
                        progress=lambda i, n, be=be: log.info("%s %s: replication %d/%d", a.scenario, be, i, n))
        timings[be] = time.perf_counter() - t0
        for row in res["metrics"]:
            tables.append({"backend": be, **row})
        for r in res["reps"]:
            for k, s in r["summaries"].items():
                rep_rows.append({"backend": be, "seed": r["seed"], "estimand": k, "mean": s["mean"],
                                 "sd": s["sd"], "ci90_lo": s["ci90"][0], "ci90_hi": s["ci90"][1],
                                 "rhat": s.get("rhat"), "ess": s.get("ess")})
    write_json(out / "metrics.json", {"schema_version": SCHEMA_VERSION, "scenario": a.scenario, "reps": reps,
                                      "base_seed": base_seed, "rows": tables})
    write_rows(out / "replications.csv", rep_rows,
               ["backend", "seed", "estimand", "mean", "sd", "ci90_lo", "ci90_hi", "rhat", "ess"])
    args = {"scenario": a.scenario, "reps": reps, "backend": a.backend or "both", "seed": base_seed,
            "full_scale": bool(a.full_scale), **{k: v for k, v in over.items()}}
    write_manifest(out, "simulate", args, [], {"seed": base_seed, "backends": configs}, timings)
    for row in tables:
        print(json.dumps(_clean(row)))
    return EXIT_OK


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad --zeta-grid {text!r}; expected comma-separated numbers") from None
    if not grid:
        raise UsageError("empty --zeta-grid")
    return grid


def cmd_sensitivity(a) -> int:
    from .estimands import SegmentDefinition
    from .robustness import DEFAULT_ZETA, estimate_nu, sensitivity_run

    if (a.nu is None) == (a.estimate_nu is None):
        raise UsageError("give exactly one of --nu or --estimate-nu")
    fit_dir = Path(a.fit)
    man = _load_fit(fit_dir)
    out = _outdir(a.out)
    grid = _parse_grid(a.zeta_grid) if a.zeta_grid else list(DEFAULT_ZETA)
    d, cfg, doc = _fit_inputs(man)
    timings = {}
    t0 = time.perf_counter()
    if a.estimate_nu is not None:
        group = read_column(man["args"]["data"], a.estimate_nu)
        nu = estimate_nu(d, group, cfg)
        nu_source = f"estimated from column {a.estimate_nu!r}"
    else:
        nu = float(a.nu)
        nu_source = "given"
    timings["nu"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    segments = [SegmentDefinition.from_dict(s) for s in doc["segments"]]
    res, _ = sensitivity_run(d, cfg, grid, nu, segments=segments)
    timings["chains"] = time.perf_counter() - t0
    rows = res.to_rows()
    write_rows(out / "sensitivity.csv", rows, list(rows[0]))
    base = json.loads((fit_dir / "summary.json").read_text())
    base_satt = next(e for e in base["estimands"] if e["estimand"] == "satt_c")
    zero = [s for z, s in zip(res.zeta, res.summaries) if z == 0]
    doc_out = {"schema_version": SCHEMA_VERSION, "nu": nu, "nu_source": nu_source, "curve": rows,
               "baseline_satt_c": base_satt,
               "zeta0_matches_baseline": bool(zero) and all(
                   s.mean == base_satt["mean"] and s.sd == base_satt["sd"] for s in zero)}
    write_json(out / "sensitivity.json", doc_out)
    args = {"fit": str(fit_dir.resolve()), "zeta_grid": ",".join(repr(z) for z in grid),
            **({"nu": nu} if a.estimate_nu is None else {"estimate_nu": a.estimate_nu})}
    write_manifest(out, "sensitivity", args, [fit_dir / MANIFEST, man["args"]["data"]], cfg.to_dict(), timings)
    for r in rows:
        print(json.dumps(_clean(r)))
    return EXIT_OK


def cmd_interpret(a) -> int:
    fit_dir = Path(a.fit)
    man = _load_fit(fit_dir)
    out = _outdir(a.out)
    d, cfg, _ = _fit_inputs(man)
    units = read_rows(fit_dir / "units.csv")
    cate = np.array([float(r["cate_c_mean"]) for r in units])
    pi = np.array([float(r["pi_c_mean"]) for r in units])
    if cate.size != d.n:
        raise DataError("units.csv does not match the fitted data")
    t0 = time.perf_counter()
    _write_interpretation(out, d, cate, min_gain=a.min_gain, max_depth=a.max_depth, pi_mean=pi)
    args = {"fit": str(fit_dir.resolve()), "min_gain": a.min_gain, "max_depth": a.max_depth}
    write_manifest(out, "interpret", args, [fit_dir / MANIFEST, fit_dir / "units.csv"], None,
                   {"interpret": time.perf_counter() - t0})
    print((out / "segments.json").read_text(), end="")
    return EXIT_OK


def cmd_diagnose(a) -> int:
    from . import diagnostics

    fit_dir = Path(a.fit)
    _load_fit(fit_dir)
    rows = read_rows(fit_dir / "draws.csv")
    if not rows:
        raise DataError("draws.csv is empty")
    names = [c for c in rows[0] if c not in ("chain", "iteration")]
    chains = sorted({int(r["chain"]) for r in rows})
    report = {}
    failed = []
    for name in names:
        x = np.array([[float(r[name]) for r in rows if int(r["chain"]) == c] for c in chains])
        ok = np.isfinite(x).all()
        rh = diagnostics.rhat(x) if ok else float("nan")
        es = diagnostics.ess(x) if ok else float("nan")
        good = ok and rh <= a.rhat_max and es >= a.ess_min
        report[name] = {"rhat": rh, "ess": es, "ok": bool(good)}
        if not good:
            failed.append(name)
    units = read_rows(fit_dir / "units.csv")
    overlap = {"flag_extreme_propensity": sum(int(r["flag_extreme_propensity"]) for r in units),
               "flag_causal_support": sum(int(r["flag_causal_support"]) for r in units), "n": len(units)}
    doc = {"schema_version": SCHEMA_VERSION, "thresholds": {"rhat_max": a.rhat_max, "ess_min": a.ess_min},
           "estimands": report, "overlap_flags": overlap, "converged": not failed}
    out = _outdir(a.out) if a.out else None
    if out is not None:
        write_json(out / "diagnose.json", doc)
        write_manifest(out, "diagnose", {"fit": str(fit_dir.resolve()), "rhat_max": a.rhat_max,
                                         "ess_min": a.ess_min}, [fit_dir / "draws.csv"], None, {})
    print(json.dumps(_clean(doc), indent=2))
    if failed:
        raise ConvergenceError(f"not converged: {', '.join(failed)}")
    return EXIT_OK


def cmd_rerun(a) -> int:
    man = json.loads(Path(a.manifest).read_text())
    for p, digest in man.get("inputs", {}).items():
        if not Path(p).exists() or sha256(p) != digest:
            raise DataError(f"input {p} is missing or changed since the recorded run")
    if man["software"].get("kernels") != backend_name():
        log.warning("recorded run used %s kernels, this process uses %s; outputs may differ",
                    man["software"].get("kernels"), backend_name())
    argv = [man["command"]]
    for k, v in man["args"].items():
        flag = "--" + k.replace("_", "-")
        if isinstance(v, bool):
            if v:
                argv.append(flag)
        else:
            argv += [flag, str(v)]
    argv += ["--out", a.out]
    if "threads" in a and a.threads is not None and man["command"] in ("fit", "simulate"):
        argv += ["--threads", str(a.threads)]
    code = main(argv)
    mpath = Path(a.out) / MANIFEST
    if not mpath.exists():
        return code
    new = json.loads(mpath.read_text())
    same = new["outputs"] == man["outputs"]
    diff = sorted(k for k in set(new["outputs"]) | set(man["outputs"])
                  if new["outputs"].get(k) != man["outputs"].get(k))
    print(json.dumps({"reproduced": same, "differing_outputs": diff, "exit_code": code}))
    # a diagnose run that failed its thresholds reproduces by failing again
    return code if code != EXIT_OK else (EXIT_OK if same else EXIT_FAIL)


# ---------------------------------------------------------------- parser

def _add_run_flags(p, sim=False):
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int, dest="burn_in")
    if not sim:
        p.add_argument("--backend", choices=["bart", "linear"])
    p.add_argument("--dependence", choices=["independent", "dependent"])
    p.add_argument("--threads", type=int, help="worker processes (default: PRINCE_BART_THREADS or all cores)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prince-bart", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-q", "--quiet", action="store_true", help="only warnings on standard error")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the principal-strata model to a CSV file")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--backend", choices=["bart", "linear", "both"])
    p.add_argument("--full-scale", action="store_true", dest="full_scale",
                   help="200 replications of 20 x 250 chains")
    p.add_argument("--out", required=True)
    _add_run_flags(p, sim=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sensitivity", help="confounding sensitivity curve for a fit")
    p.add_argument("--fit", required=True, help="output directory of a previous fit")
    p.add_argument("--out", required=True)
    p.add_argument("--zeta-grid", dest="zeta_grid")
    p.add_argument("--nu", type=float)
    p.add_argument("--estimate-nu", dest="estimate_nu", metavar="GROUP_COLUMN")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("interpret", help="surrogate trees from a fit's posterior means")
    p.add_argument("--fit", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-gain", type=float, default=0.01, dest="min_gain")
    p.add_argument("--max-depth", type=int, default=3, dest="max_depth")
    p.set_defaults(func=cmd_interpret)

    p = sub.add_parser("diagnose", help="convergence and overlap checks for a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--out")
    p.add_argument("--rhat-max", type=float, default=1.05, dest="rhat_max")
    p.add_argument("--ess-min", type=float, default=100.0, dest="ess_min")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("rerun", help="repeat a recorded command and verify identical outputs")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_rerun)
    return ap


def _error(kind: str, msg: str, code: int, out=None) -> int:
    doc = {"error": kind, "message": msg, "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)
    if out:
        try:
            _outdir(out)
            write_json(Path(out) / "error.json", doc)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.WARNING if a.quiet else logging.INFO, stream=sys.stderr,
                            format="%(asctime)s %(levelname)s %(message)s")
    out = getattr(a, "out", None)
    try:
        return a.func(a)
    except UsageError as e:
        ap.print_usage(sys.stderr)
        return _error("usage", str(e), EXIT_USAGE, out)
    except (DataError, FileNotFoundError) as e:
        return _error("data", str(e), EXIT_DATA, out)
    except (DataAdequacyError, ConvergenceError) as e:
        return _error("adequacy", str(e), EXIT_ADEQUACY, out)
    except ValueError as e:
        return _error("data", str(e), EXIT_DATA, out)


def entry() -> None:  # pragma: no cover
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    entry()
