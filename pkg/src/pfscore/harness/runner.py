"""Experiment execution: seeded replicated runs, raw traces, summaries.

Every run's seed is derived from (seed_root, grid-point label, replicate
index) by hashing, so run identity is independent of scheduling order.  Raw
traces, the oracle trace and summaries contain only deterministic values;
wall-clock timings go to a separate ``timings.csv`` which is the one
non-reproducible artifact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..estimators import (
    fixed_lag_run, poyiadjis_n2_run, poyiadjis_n_run, rb_run,
)
from ..kalman import kalman_score_trace
from ..mle import EstimatorConfig, StepSchedule, batch_ascent, recursive_ascent
from ..models import load_polio_csv, simulate
from ..particle_learning import PlHyper, pl_run
from .config import ExperimentConfig

ORACLE_FILE = "oracle_kalman.csv"
META_FILE = "meta.json"


def derive_seed(seed_root: int, label: str, replicate: int) -> int:
    """Stable 63-bit seed from the run identity (independent of hash salting)."""
    key = f"{seed_root}|{label}|{replicate}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") & (2**63 - 1)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _load_series(config: ExperimentConfig):
    if config.simulate is not None:
        sim = config.simulate
        theta_star = np.asarray(
            sim.get("theta_star", config.eval_theta()), dtype=float
        )
        model = config.build_model()
        rng = np.random.default_rng(int(sim["seed"]))
        _, y = simulate(model, theta_star, int(sim["T"]), rng)
        return y, theta_star
    if config.model_id == "polio":
        return load_polio_csv(config.csv_path), None
    rows = np.loadtxt(config.csv_path, delimiter=",", skiprows=1, ndmin=2)
    return rows[:, 1], None


@dataclass
class RunSummary:
    """Aggregated per-grid-point statistics (written as summary CSVs)."""

    headers: dict  # label -> column names
    tables: dict  # label -> 2-d array


def _run_one(config: ExperimentConfig, model, y, label, gp, rep):
    seed = derive_seed(config.seed_root, label, rep)
    rng = np.random.default_rng(seed)
    theta = config.eval_theta()
    est = config.estimator
    t0 = time.perf_counter()
    if config.mle is not None:
        m = config.mle
        schedule = StepSchedule(
            kind=m.schedule_kind, alpha=m.alpha, scale=m.scale,
            per_coordinate_scale=m.per_coordinate_scale,
        )
        if m.mode == "recursive":
            if est != "rb":
                raise ValueError("recursive mode runs on the rb estimator")
            trace = recursive_ascent(
                model, y, np.asarray(m.theta0), gp["n_particles"], gp["lam"],
                schedule, rng, engine=config.engine,
            )
        else:
            ecfg = EstimatorConfig(
                kind=est,
                n_particles=gp["n_particles"] or 1000,
                lam=gp["lam"] if gp["lam"] is not None else 0.95,
                lag=gp["lag"] if gp["lag"] is not None else 10,
                engine=config.engine,
            )
            trace = batch_ascent(
                model, y, np.asarray(m.theta0), ecfg, schedule,
                m.iterations, rng, use_newton=m.newton,
            )
        k = np.arange(trace.scores.shape[0]) + 1
        score_norm = np.linalg.norm(trace.scores, axis=1)
        rows = np.column_stack([k, trace.thetas[1:], score_norm, trace.step_norms])
        header = (
            ["k"] + [f"theta_{nm}" for nm in model.param_names]
            + ["score_norm", "step_norm"]
        )
        elapsed = time.perf_counter() - t0
        return label, rep, header, rows, elapsed, len(k)

    T = y.size
    tvec = np.arange(1, T + 1)
    if est == "particle_learning":
        res = pl_run(y, gp["n_particles"], PlHyper(), rng)
        rows = np.column_stack([tvec, res.phi_mean, res.sigma2_mean, res.tau2_mean])
        header = ["t", "phi_mean", "sigma2_mean", "tau2_mean"]
        elapsed = time.perf_counter() - t0
        return label, rep, header, rows, elapsed, T
    if est == "kalman":
        s_trace, i_diag = kalman_score_trace(theta, y)
    elif est == "rb":
        r = rb_run(model, theta, y, gp["n_particles"], gp["lam"], rng,
                   with_info=config.with_info, engine=config.engine)
        s_trace, i_diag = r.score_trace, r.info_diag_trace
    elif est == "poyiadjis_n":
        r = poyiadjis_n_run(model, theta, y, gp["n_particles"], rng,
                            with_info=config.with_info, engine=config.engine)
        s_trace, i_diag = r.score_trace, r.info_diag_trace
    elif est == "poyiadjis_n2":
        r = poyiadjis_n2_run(model, theta, y, gp["n_particles"], rng,
                             with_info=config.with_info)
        s_trace, i_diag = r.score_trace, r.info_diag_trace
    else:
        r = fixed_lag_run(model, theta, y, gp["n_particles"], gp["lag"], rng,
                          with_info=config.with_info)
        s_trace, i_diag = r.score_trace, r.info_diag_trace
    if i_diag is None:
        i_diag = np.full_like(s_trace, np.nan)
    rows = np.column_stack([tvec, s_trace, i_diag])
    header = (
        ["t"] + [f"score_{nm}" for nm in model.param_names]
        + [f"info_{nm}" for nm in model.param_names]
    )
    elapsed = time.perf_counter() - t0
    return label, rep, header, rows, elapsed, T


def run_experiment(config: ExperimentConfig, workers: int = None) -> RunSummary:
    """Execute the full grid x replicate design and write all artifacts."""
    model = config.build_model()
    y, theta_star = _load_series(config)
    outdir = config.output_dir
    rawdir = os.path.join(outdir, "raw")
    os.makedirs(rawdir, exist_ok=True)
    workers = workers or config.workers

    jobs = [
        (label, gp, rep)
        for label, gp in config.grid_points()
        for rep in range(config.replicates)
    ]

    def work(job):
        label, gp, rep = job
        return _run_one(config, model, y, label, gp, rep)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    timings = []
    per_label = {}
    for label, rep, header, rows, elapsed, steps in results:
        path = os.path.join(rawdir, f"{label}_rep{rep:04d}.csv")
        _write_csv(path, header, rows)
        per_label.setdefault(label, (header, []))[1].append(rows)
        timings.append((label, rep, elapsed, steps, elapsed / max(steps, 1)))

    score_run = config.mle is None and config.estimator not in (
        "kalman", "particle_learning",
    )
    oracle = None
    if config.model_id == "ar1" and score_run:
        s_trace, i_diag = kalman_score_trace(config.eval_theta(), y)
        oracle = np.column_stack([s_trace, i_diag])
        names = model.param_names
        _write_csv(
            os.path.join(rawdir, ORACLE_FILE),
            ["t"] + [f"score_{n}" for n in names] + [f"info_{n}" for n in names],
            np.column_stack([np.arange(1, y.size + 1), oracle]),
        )

    meta = {
        "estimator": config.estimator,
        "mle": config.mle is not None,
        "model_id": config.model_id,
        "theta_star": None if theta_star is None else [float(v) for v in theta_star],
    }
    with open(os.path.join(outdir, META_FILE), "w") as f:
        json.dump(meta, f, sort_keys=True, indent=1)

    summary = summarize(per_label, oracle=oracle, theta_star=theta_star,
                        is_mle=config.mle is not None)
    for label in summary.headers:
        _write_csv(os.path.join(outdir, f"summary_{label}.csv"),
                   summary.headers[label], summary.tables[label])

    _write_csv(
        os.path.join(outdir, "timings.csv"),
        ["label", "replicate", "seconds", "steps", "seconds_per_step"],
        timings,
    )
    return summary


def summarize(per_label, oracle=None, theta_star=None, is_mle=False) -> RunSummary:
    """Componentwise replicate statistics at each time/iteration row.

    Mean and unbiased (n-1 divisor) variance always; bias columns when an
    oracle trace is supplied; RMSE against theta_star for
    parameter-estimation runs.
    """
    headers = {}
    tables = {}
    for label, (header, traces) in sorted(per_label.items()):
        shapes = {a.shape for a in traces}
        if len(shapes) > 1:
            raise ValueError(f"inconsistent trace shapes for {label}: {shapes}")
        arr = np.stack(traces)  # (R, T, C)
        index = arr[0, :, 0]
        cols = header[1:]
        data = arr[:, :, 1:]
        mean = data.mean(axis=0)
        var = data.var(axis=0, ddof=1) if arr.shape[0] > 1 else np.zeros_like(mean)
        out_header = [header[0]]
        out_cols = [index]
        for j, c in enumerate(cols):
            out_header += [f"mean_{c}", f"var_{c}"]
            out_cols += [mean[:, j], var[:, j]]
        if oracle is not None and not is_mle:
            for j, c in enumerate(cols):
                if j < oracle.shape[1]:
                    out_header.append(f"bias_{c}")
                    out_cols.append(mean[:, j] - oracle[:, j])
        if is_mle and theta_star is not None:
            for j in range(len(theta_star)):
                rmse = np.sqrt(np.mean((data[:, :, j] - theta_star[j]) ** 2, axis=0))
                out_header.append(f"rmse_{cols[j]}")
                out_cols.append(rmse)
        headers[label] = out_header
        tables[label] = np.column_stack(out_cols)
    return RunSummary(headers=headers, tables=tables)


def summarize_directory(outdir: str) -> RunSummary:
    """Recompute summaries from the raw traces on disk (bit-identical)."""
    rawdir = os.path.join(outdir, "raw")
    meta_path = os.path.join(outdir, META_FILE)
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as f:
            meta = json.load(f)
    oracle = None
    oracle_path = os.path.join(rawdir, ORACLE_FILE)
    if os.path.exists(oracle_path):
        oracle = _read_csv(oracle_path)[1][:, 1:]
    per_label = {}
    for name in sorted(os.listdir(rawdir)):
        if not name.endswith(".csv") or "_rep" not in name:
            continue
        label = name.rsplit("_rep", 1)[0]
        header, rows = _read_csv(os.path.join(rawdir, name))
        per_label.setdefault(label, (header, []))[1].append(rows)
    theta_star = meta.get("theta_star")
    summary = summarize(
        per_label, oracle=oracle,
        theta_star=None if theta_star is None else np.asarray(theta_star),
        is_mle=bool(meta.get("mle", False)),
    )
    for label in summary.headers:
        _write_csv(os.path.join(outdir, f"summary_{label}.csv"),
                   summary.headers[label], summary.tables[label])
    return summary


def _read_csv(path):
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        rows = np.array([[float(v) for v in row] for row in r])
    return header, rows
