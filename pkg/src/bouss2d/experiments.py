"""Monte-Carlo orchestration: deterministic seeding, worker fan-out, CSV
persistence and the campaign commands behind the CLI.

Seeds derive from (base_seed, eps_index, sample, stream_id), never from
execution order, so a campaign gives identical output for 1 or N workers.
Stream id 1 is the slow jump noise and is shared bit-identically between a
two-scale run and its paired averaged run; stream id 2 is the fast noise.
"""

import datetime
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import __version__, diagnostics, model
from .config import ExperimentConfig
from .integrate import (
    BlowUpError,
    CoupledNoise,
    StepConfig,
    integrate_averaged,
    integrate_slow_fast,
    run_khasminskii,
)
from .jumps import make_stream
from .spectral import TorusGrid, biot_savart, field_from_function, zero_field

STREAM_SLOW = 1
STREAM_FAST = 2

MSE_NOTE = "mse = mean over samples of error(eps)^2 (sup-norm error squared)"
COUPLING_NOTE = "shared_eta1: paired runs consume identical slow jump events"

# csv schemas, headers exact
HEADERS = {
    "errors.csv": "eps,sample,error",
    "mse.csv": "eps,mean_error,mse,n",
    "fit.csv": "coefficient,exponent,r_squared",
    "contraction.csv": "time,gap,fitted_rate,theoretical_rate,feasible",
    "invariant.csv": "norm_g_hat,stderr,pass",
    "increments.csv": "delta,mean_sq_increment,slope",
    "moments.csv": "eps,p,sup_moment_j,stderr_j,sup_moment_theta,stderr_theta",
    "khasminskii.csv": "delta,gap,trend_pass",
}


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(out_dir: str, name: str, rows: Sequence[Sequence]) -> str:
    path = os.path.join(out_dir, name)
    body = "\n".join(",".join(_cell(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(HEADERS[name] + "\n")
        if body:
            fh.write(body + "\n")
    return path


def initial_fields(grid: TorusGrid, cfg: ExperimentConfig):
    a, b = cfg.j0_amplitude, cfg.theta0_amplitude
    j0 = field_from_function(grid, lambda X, Y: a * (np.cos(X) + np.sin(Y)))
    theta0 = field_from_function(grid, lambda X, Y: b * (np.sin(X) + np.cos(Y)))
    return j0, theta0


def record_times(cfg: ExperimentConfig) -> np.ndarray:
    n_steps = int(round(cfg.t_final / cfg.dt))
    idx = np.unique(np.round(np.linspace(0, n_steps, cfg.record_count)).astype(int))
    return idx * cfg.dt


def slow_fast_noise(cfg: ExperimentConfig, eps_idx: int, sample: int) -> CoupledNoise:
    return CoupledNoise(
        stream1=make_stream(cfg.measure1(), cfg.base_seed, eps_idx, sample, STREAM_SLOW),
        stream2=make_stream(cfg.measure2(), cfg.base_seed, eps_idx, sample, STREAM_FAST),
    )


def averaged_noise(cfg: ExperimentConfig, eps_idx: int, sample: int) -> CoupledNoise:
    # a fresh stream built from the same key replays the slow events
    return CoupledNoise(
        stream1=make_stream(cfg.measure1(), cfg.base_seed, eps_idx, sample, STREAM_SLOW),
        stream2=None,
    )


def _map_tasks(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def write_manifest(cfg: ExperimentConfig, command: str, extra: Optional[dict] = None) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "code_version": __version__,
        "config": cfg.snapshot(),
        "seed_scheme": (
            "stream key = (base_seed, eps_index, sample, stream_id); "
            "stream_id 1 = slow jumps (shared by the paired averaged run), "
            "2 = fast jumps"
        ),
        "seed_table": {
            _cell(eps): {
                "eps_index": i,
                "stream1_key_sample0": [cfg.base_seed, i, 0, STREAM_SLOW],
                "stream2_key_sample0": [cfg.base_seed, i, 0, STREAM_FAST],
            }
            for i, eps in enumerate(cfg.eps_list)
        },
        "interpretation": {"mse": MSE_NOTE, "coupling": COUPLING_NOTE},
        "started_at": _now(),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(cfg.out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    return path


def _finish_manifest(cfg: ExperimentConfig, updates: dict) -> None:
    path = os.path.join(cfg.out_dir, "manifest.json")
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest.update(updates)
    manifest["finished_at"] = _now()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------


def _convergence_task(args):
    cfg, eps_idx, sample = args
    eps = cfg.eps_list[eps_idx]
    grid = TorusGrid(cfg.n)
    j0, theta0 = initial_fields(grid, cfg)
    times = record_times(cfg)
    coeffs = model.CoefficientSet.example()
    avg = model.AveragedSet.example()
    step_sf = StepConfig(
        dt=cfg.dt, eps=eps, fast_substeps=cfg.fast_substeps,
        blowup_threshold=cfg.blowup_threshold,
    )
    step_avg = StepConfig(dt=cfg.dt, blowup_threshold=cfg.blowup_threshold)
    try:
        path_eps = integrate_slow_fast(
            j0, theta0, step_sf, slow_fast_noise(cfg, eps_idx, sample), coeffs,
            cfg.t_final, times, record_j_fields=True,
        )
        path_bar = integrate_averaged(
            j0, step_avg, averaged_noise(cfg, eps_idx, sample), avg,
            cfg.t_final, times, record_j_fields=True,
        )
        return (eps_idx, sample, True, diagnostics.sup_error(path_eps, path_bar))
    except BlowUpError as exc:
        return (eps_idx, sample, False, f"{exc.variable} at t={exc.t:.6g}")


@dataclass
class ConvergenceResult:
    stats: list
    fit: Optional[diagnostics.PowerLawFit]
    failures: list
    mean_decreasing: bool
    mse_decreasing: bool
    exponent_in_band: bool
    r2_ok: bool
    exit_code: int


def run_convergence(cfg: ExperimentConfig, synthetic: Optional[str] = None) -> ConvergenceResult:
    """Paired error(eps) campaign; writes errors.csv, mse.csv, fit.csv."""
    write_manifest(cfg, "convergence", {"synthetic": synthetic} if synthetic else None)
    if synthetic is not None:
        return _run_synthetic(cfg, synthetic)

    tasks = [
        (cfg, i, s) for i in range(len(cfg.eps_list)) for s in range(cfg.n_samples)
    ]
    results = _map_tasks(_convergence_task, tasks, cfg.workers)
    by_key = {(i, s): (ok, val) for (i, s, ok, val) in results}

    error_rows, failures = [], []
    samples_by_eps = {i: [] for i in range(len(cfg.eps_list))}
    for i, eps in enumerate(cfg.eps_list):
        for s in range(cfg.n_samples):
            ok, val = by_key[(i, s)]
            if ok:
                error_rows.append((eps, s, val))
                samples_by_eps[i].append(val)
            else:
                failures.append(
                    {"eps": eps, "sample": s, "reason": val,
                     "seed_key": [cfg.base_seed, i, s]}
                )
    write_csv(cfg.out_dir, "errors.csv", error_rows)

    stats = [
        diagnostics.ErrorStats.from_samples(eps, samples_by_eps[i])
        for i, eps in enumerate(cfg.eps_list)
        if samples_by_eps[i]
    ]
    write_csv(
        cfg.out_dir, "mse.csv",
        [(st.eps, st.mean, st.mse, len(st.samples)) for st in stats],
    )

    fit = None
    if len(stats) >= 3 and all(st.mse > 0 for st in stats):
        fit = diagnostics.power_law_fit(
            [st.eps for st in stats], [st.mse for st in stats]
        )
        write_csv(
            cfg.out_dir, "fit.csv", [(fit.coefficient, fit.exponent, fit.r_squared)]
        )

    ordered = sorted(stats, key=lambda st: st.eps)  # ascending eps
    mean_dec = all(a.mean < b.mean for a, b in zip(ordered[:-1], ordered[1:]))
    mse_dec = all(a.mse < b.mse for a, b in zip(ordered[:-1], ordered[1:]))
    exp_ok = fit is not None and cfg.exponent_lo <= fit.exponent <= cfg.exponent_hi
    r2_ok = fit is not None and fit.r_squared >= cfg.r2_min

    n_total = len(cfg.eps_list) * cfg.n_samples
    too_many_failures = len(failures) > cfg.max_blowup_frac * n_total
    if too_many_failures:
        code = 4
    elif not (mean_dec and mse_dec and exp_ok and r2_ok):
        code = 3
    else:
        code = 0
    _finish_manifest(
        cfg,
        {
            "failures": failures,
            "failed_samples": len(failures),
            "checks": {
                "mean_decreasing": mean_dec,
                "mse_decreasing": mse_dec,
                "exponent_in_band": exp_ok,
                "r2_ok": r2_ok,
            },
            "exit_code": code,
        },
    )
    return ConvergenceResult(stats, fit, failures, mean_dec, mse_dec, exp_ok, r2_ok, code)


_SYNTH_RE = re.compile(
    r"^\s*mse\s*=\s*([0-9.eE+-]+)\s*\*?\s*eps\s*\^\s*([0-9.eE+-]+)\s*$"
)


def _run_synthetic(cfg: ExperimentConfig, spec: str) -> ConvergenceResult:
    """Exercise the fit path on exact power-law data, mse = C * eps^E."""
    m = _SYNTH_RE.match(spec)
    if m is None:
        raise ValueError(f"cannot parse synthetic spec {spec!r}; expected mse=C*eps^E")
    c, e = float(m.group(1)), float(m.group(2))
    stats = []
    error_rows = []
    for eps in cfg.eps_list:
        mse = c * eps**e
        err = math.sqrt(mse)
        for s in range(cfg.n_samples):
            error_rows.append((eps, s, err))
        stats.append(diagnostics.ErrorStats.from_samples(eps, [err] * cfg.n_samples))
    write_csv(cfg.out_dir, "errors.csv", error_rows)
    write_csv(
        cfg.out_dir, "mse.csv",
        [(st.eps, st.mean, st.mse, len(st.samples)) for st in stats],
    )
    fit = diagnostics.power_law_fit([st.eps for st in stats], [st.mse for st in stats])
    write_csv(cfg.out_dir, "fit.csv", [(fit.coefficient, fit.exponent, fit.r_squared)])
    _finish_manifest(cfg, {"failures": [], "failed_samples": 0, "exit_code": 0})
    return ConvergenceResult(
        stats, fit, [], True, True, True, True, 0
    )


# ---------------------------------------------------------------------------
# ergodicity: contraction + invariant-measure symmetry
# ---------------------------------------------------------------------------


@dataclass
class ErgodicityResult:
    contraction: diagnostics.ContractionReport
    invariant: diagnostics.InvariantReport
    exit_code: int


def run_ergodicity(cfg: ExperimentConfig) -> ErgodicityResult:
    write_manifest(cfg, "ergodicity")
    grid = TorusGrid(cfg.n)
    j_ref, _ = initial_fields(grid, cfg)
    u_ref = biot_savart(j_ref)
    rates = cfg.rates()
    theta1 = field_from_function(grid, lambda X, Y: np.sin(X) + np.cos(Y))
    theta2 = zero_field(grid)

    contraction = diagnostics.contraction_test(
        u_ref, theta1, theta2, cfg.contraction_t, cfg.contraction_samples,
        cfg.measure2(), rates, cfg.base_seed, cfg.frozen_dt,
    )
    erg_cfg = model.ErgodicRunConfig(
        dt=cfg.frozen_dt, burn_in=cfg.ergodic_burn_in, window=cfg.ergodic_window,
        spacing=cfg.ergodic_spacing, batches=cfg.ergodic_batches,
    )
    invariant = diagnostics.invariant_g_estimate(
        u_ref,
        make_stream(cfg.measure2(), cfg.base_seed, 42, STREAM_FAST),
        rates,
        cfg=erg_cfg,
        theta0=theta1,
        j=j_ref,
    )

    rows = [
        (t, g, contraction.fitted_rate, contraction.theoretical_rate, rates.feasible)
        for t, g in zip(contraction.times, contraction.gaps)
    ]
    write_csv(cfg.out_dir, "contraction.csv", rows)
    write_csv(
        cfg.out_dir, "invariant.csv",
        [(invariant.norm_g_hat, invariant.stderr, invariant.passed)],
    )
    passed = contraction.passed and invariant.passed
    # contraction claims are refused (not judged) when lambda_p <= 0
    code = 0 if (passed or not rates.feasible) else 3
    _finish_manifest(
        cfg,
        {
            "feasible": rates.feasible,
            "lambda_p": rates.lambda_p,
            "l_sigma2": rates.l_sigma2,
            "checks": {"contraction": contraction.passed, "invariant": invariant.passed},
            "exit_code": code,
        },
    )
    return ErgodicityResult(contraction, invariant, code)


# ---------------------------------------------------------------------------
# increments
# ---------------------------------------------------------------------------


def _increment_record_times(cfg: ExperimentConfig) -> np.ndarray:
    anchors = [round(f * cfg.t_final, 12) for f in (0.2, 0.4, 0.6, 0.8, 1.0)]
    times = set()
    for a in anchors:
        times.add(round(a, 12))
        for lag in cfg.increment_lags:
            t = round(a - lag, 12)
            if t >= 0:
                times.add(t)
    return np.array(sorted(times))


def _increment_task(args):
    cfg, sample = args
    grid = TorusGrid(cfg.n)
    j0, theta0 = initial_fields(grid, cfg)
    step = StepConfig(dt=cfg.dt, eps=cfg.increment_eps, fast_substeps=cfg.fast_substeps)
    # key namespace 90 keeps these streams disjoint from the campaign's
    return integrate_slow_fast(
        j0, theta0, step, slow_fast_noise(cfg, 90, sample),
        model.CoefficientSet.example(), cfg.t_final,
        _increment_record_times(cfg), record_j_fields=True,
    )


@dataclass
class IncrementsResult:
    report: diagnostics.IncrementReport
    slope_ok: bool
    exit_code: int


def run_increments(cfg: ExperimentConfig) -> IncrementsResult:
    write_manifest(cfg, "increments")
    tasks = [(cfg, s) for s in range(cfg.increment_paths)]
    paths = _map_tasks(_increment_task, tasks, cfg.workers)
    report = diagnostics.increment_law(paths, cfg.increment_lags)
    rows = [
        (d, m, report.fitted_slope)
        for d, m in zip(report.delta_grid, report.mean_sq_increments)
    ]
    write_csv(cfg.out_dir, "increments.csv", rows)
    slope_ok = report.fitted_slope >= 0.5 - cfg.slope_slack
    code = 0 if slope_ok else 3
    _finish_manifest(cfg, {"checks": {"slope_ok": slope_ok}, "exit_code": code})
    return IncrementsResult(report, slope_ok, code)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def _moment_task(args):
    cfg, eps_idx, sample = args
    grid = TorusGrid(cfg.n)
    j0, theta0 = initial_fields(grid, cfg)
    step = StepConfig(
        dt=cfg.dt, eps=cfg.eps_list[eps_idx], fast_substeps=cfg.fast_substeps
    )
    return integrate_slow_fast(
        j0, theta0, step, slow_fast_noise(cfg, eps_idx, sample),
        model.CoefficientSet.example(), cfg.t_final, record_times(cfg),
    )


@dataclass
class MomentsResult:
    reports: list
    uniform: bool
    exit_code: int


def run_moments(cfg: ExperimentConfig) -> MomentsResult:
    write_manifest(cfg, "moments")
    reports = []
    for i, eps in enumerate(cfg.eps_list):
        tasks = [(cfg, i, s) for s in range(cfg.moment_samples)]
        paths = _map_tasks(_moment_task, tasks, cfg.workers)
        reports.append(diagnostics.estimate_moments(paths, cfg.p))
    rows = [
        (eps, r.p, r.sup_moment_j, r.stderr_j, r.theta_sup_by_t, r.stderr_theta)
        for eps, r in zip(cfg.eps_list, reports)
    ]
    write_csv(cfg.out_dir, "moments.csv", rows)
    uniform = diagnostics.moments_eps_uniform(reports, band=cfg.sigma_band)
    code = 0 if uniform else 3
    _finish_manifest(cfg, {"checks": {"eps_uniform": uniform}, "exit_code": code})
    return MomentsResult(reports, uniform, code)


# ---------------------------------------------------------------------------
# auxiliary block refinement
# ---------------------------------------------------------------------------


def _khasminskii_task(args):
    cfg, delta, sample = args
    grid = TorusGrid(cfg.n)
    j0, theta0 = initial_fields(grid, cfg)
    step = StepConfig(dt=cfg.dt, eps=cfg.khasminskii_eps, fast_substeps=cfg.fast_substeps)
    # common random numbers across deltas: the key omits delta on purpose
    noise = CoupledNoise(
        stream1=make_stream(cfg.measure1(), cfg.base_seed, 7, sample, STREAM_SLOW),
        stream2=make_stream(cfg.measure2(), cfg.base_seed, 7, sample, STREAM_FAST),
    )
    rec = run_khasminskii(
        j0, theta0, step, noise, model.CoefficientSet.example(),
        cfg.khasminskii_t, delta,
    )
    return rec.theta_gap_integral


@dataclass
class KhasminskiiResult:
    trend: diagnostics.TrendReport
    exit_code: int


def run_khasminskii_study(cfg: ExperimentConfig) -> KhasminskiiResult:
    write_manifest(cfg, "khasminskii")
    gaps = []
    for delta in cfg.delta_list:
        tasks = [(cfg, delta, s) for s in range(cfg.khasminskii_samples)]
        vals = _map_tasks(_khasminskii_task, tasks, cfg.workers)
        gaps.append(float(np.mean(vals)))
    trend = diagnostics.khasminskii_trend(cfg.delta_list, gaps, alpha=cfg.trend_alpha)
    rows = [(d, g, trend.passed) for d, g in zip(trend.deltas, trend.gaps)]
    write_csv(cfg.out_dir, "khasminskii.csv", rows)
    code = 0 if trend.passed else 3
    _finish_manifest(cfg, {"checks": {"trend": trend.passed}, "exit_code": code})
    return KhasminskiiResult(trend, code)
