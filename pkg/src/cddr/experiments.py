"""Experiment pipelines: coverage/volume table, PAC split validation, score study."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import calibrate as cal
from .calibrate import CalibrationMethod, CalibrationResult, ScoreKind, ScoreVariant
from .config import ExperimentConfig
from .metrics import EvaluationReport, evaluate, hausdorff_support, random_directions, score_containment
from .models import fit_global, fit_local_affine
from .reach import ReachResult, UnattainableGuarantee, propagate
from .systems import NoiseSpec, SystemKind, TrajectoryBatch, simulate, trajectory_rng
from .zonotope import polygon_vertices, project

log = logging.getLogger("cddr")

POOL_STREAM = 0
TEST_STREAM = 1
SPLIT_STREAM = 2

RESULT_COLUMNS = [
    "system", "noise", "method", "variant", "coverage_pct", "final_volume", "d_H", "n_min", "seed", "status",
]


@dataclass
class MethodRun:
    method: str
    calibration: CalibrationResult
    reach: ReachResult | None
    report: EvaluationReport | None
    n_min: int | None

    @property
    def attainable(self) -> bool:
        return self.reach is not None


def fit_model(config: ExperimentConfig, train: TrajectoryBatch):
    if config.system.kind is SystemKind.NONLINEAR:
        return fit_local_affine(train)
    return fit_global(train, use_observations=config.use_observations)


def _variant(kind: ScoreKind, train_res: np.ndarray) -> ScoreVariant:
    if kind is ScoreKind.NORMALIZED:
        return ScoreVariant(kind, cal.estimate_scaling(train_res))
    return ScoreVariant(kind)


def calibrate_method(method: str, variant_kind: ScoreKind, train_res, cal_res,
                     alpha: float, delta: float) -> tuple[CalibrationResult, int | None]:
    """Calibrate one method; returns the result and its LTT ``n_min`` (if any)."""
    N, n_x = cal_res.shape[1], cal_res.shape[2]
    if method == "EMP_MAX":
        return cal.empmax_calibration(train_res, alpha, delta), None
    if method == "MARGINAL_CP":
        v = ScoreVariant(ScoreKind.ISOTROPIC)
        return cal.calibrate_all(cal.scores(cal_res, v), alpha, delta, v, N, CalibrationMethod.MARGINAL_CP), None
    kind = ScoreKind.PER_DIM if method == "CDDR_PERDIM" else ScoreKind(variant_kind)
    v = _variant(kind, train_res)
    result = cal.calibrate_all(cal.scores(cal_res, v), alpha, delta, v, N)
    return result, cal.n_min(*cal.budgets(kind, alpha, delta, N, n_x))


def simulate_pool(config: ExperimentConfig, K: int, noise: NoiseSpec | None = None) -> TrajectoryBatch:
    return simulate(config.system, noise or config.noise, config.X0, config.U, K, config.N,
                    config.seed, stream=POOL_STREAM)


def simulate_test(config: ExperimentConfig, n_test: int, noise: NoiseSpec | None = None) -> TrajectoryBatch:
    return simulate(config.system, noise or config.noise, config.X0, config.U, n_test, config.N,
                    config.seed, stream=TEST_STREAM)


def _run_methods(config: ExperimentConfig, pool: TrajectoryBatch, test: TrajectoryBatch,
                 methods, variant_kinds=None) -> tuple[object, list[MethodRun]]:
    train = pool.subset(np.arange(config.K_tr))
    calib = pool.subset(np.arange(config.K_tr, pool.K))
    obs = config.use_observations
    model = fit_model(config, train)
    train_res = cal.residuals(model, train, obs)
    cal_res = cal.residuals(model, calib, obs)
    Z_v = config.system.meas_bound if obs else None
    directions = random_directions(config.n_dirs, config.system.n_x, config.seed)
    runs = []
    for i, method in enumerate(methods):
        kind = variant_kinds[i] if variant_kinds else config.score_variant
        calibration, nmin = calibrate_method(method, kind, train_res, cal_res, config.alpha, config.delta)
        for entry in calibration.trace:
            log.debug(json.dumps({"event": "ltt_scan", "method": method, **entry}))
        try:
            reach = propagate(model, calibration, config.X0, config.U, Z_v,
                              provenance={"config": config.name, "method": method, "seed": config.seed})
        except UnattainableGuarantee:
            log.info("%s: guarantee unattainable at n=%d (n_min=%s)", method, calibration.n_used, nmin)
            runs.append(MethodRun(method, calibration, None, None, nmin))
            continue
        report = evaluate(reach, test, directions, use_observations=obs, calib=calibration, model=model)
        # d_H compares against the true-state cloud even when coverage uses observations
        if obs:
            report.hausdorff_per_step = [
                hausdorff_support(Z, test.states[:, k], directions=directions) for k, Z in enumerate(reach.sets)
            ]
        report.method = method
        log.info("%s/%s: coverage %.4f volume %.6g", method, report.variant, report.trajectory_coverage,
                 report.final_volume)
        runs.append(MethodRun(method, calibration, reach, report, nmin))
    return model, runs


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _row(config: ExperimentConfig, run: MethodRun, noise_label: str | None = None) -> dict:
    variant = run.calibration.variant.kind.value
    row = {
        "system": config.system_label,
        "noise": noise_label or config.noise_label,
        "method": run.method,
        "variant": variant,
        "coverage_pct": None,
        "final_volume": None,
        "d_H": None,
        "n_min": run.n_min,
        "seed": config.seed,
        "status": "ok" if run.attainable else "unattainable",
    }
    if run.report is not None:
        row["coverage_pct"] = 100.0 * run.report.trajectory_coverage
        row["final_volume"] = run.report.final_volume
        row["d_H"] = run.report.hausdorff_final
    return row


def write_rows(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def write_vertices(path: Path, reach: ReachResult, dims) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "vertex", f"x{dims[0] + 1}", f"x{dims[1] + 1}"])
        for k, Z in enumerate(reach.sets):
            for i, v in enumerate(polygon_vertices(project(Z, dims))):
                writer.writerow([k, i, repr(float(v[0])), repr(float(v[1]))])


def run_experiment(config: ExperimentConfig, out_dir=None, allow_unattainable: bool = False) -> list[MethodRun]:
    """Simulate, split, fit, calibrate, propagate and evaluate every method.

    Raises :class:`UnattainableGuarantee` when a method cannot be certified
    at the configured calibration size, unless ``allow_unattainable``.
    """
    pool = simulate_pool(config, config.K)
    test = simulate_test(config, config.n_test)
    model, runs = _run_methods(config, pool, test, config.methods)
    missing = [r for r in runs if not r.attainable]
    if missing and not allow_unattainable:
        names = ", ".join(f"{r.method} (n={r.calibration.n_used}, n_min={r.n_min})" for r in missing)
        raise UnattainableGuarantee(f"guarantee unattainable for {names}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = sorted((_row(config, r) for r in runs), key=lambda r: (r["method"], r["variant"]))
        write_rows(out / "results.csv", rows, RESULT_COLUMNS)
        (out / "model.json").write_text(json.dumps(model.to_dict()) + "\n")
        for r in runs:
            art = {"calibration": r.calibration.to_dict(), "n_min": r.n_min}
            if r.attainable:
                art["reach"] = r.reach.to_dict()
                art["evaluation"] = r.report.to_dict()
                write_vertices(out / f"vertices_{r.method}.csv", r.reach, config.plot_dims)
            (out / f"reach_{r.method}.json").write_text(json.dumps(art) + "\n")
    return runs


def plot_data(config: ExperimentConfig, out_dir) -> None:
    """2-D projection vertex lists plus projected test trajectories."""
    runs = run_experiment(config, out_dir=None, allow_unattainable=True)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dims = config.plot_dims
    for r in runs:
        if r.attainable:
            write_vertices(out / f"vertices_{r.method}.csv", r.reach, dims)
    test = simulate_test(config, min(config.n_test, 200))
    with open(out / "trajectories.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["j", "k", f"x{dims[0] + 1}", f"x{dims[1] + 1}"])
        for j in range(test.K):
            for k in range(test.N + 1):
                writer.writerow([j, k, repr(float(test.states[j, k, dims[0]])),
                                 repr(float(test.states[j, k, dims[1]]))])


PAC_COLUMNS = ["method", "mean_coverage_pct", "std_pct", "min_pct", "fail_pct", "B", "n", "n_test"]


def run_pac_validation(config: ExperimentConfig, out_dir=None) -> dict:
    """Score-containment coverage over ``B`` random train/calibration splits.

    The pool and the test set are simulated once; each split ``b`` permutes
    the pool with its own seeded stream. Returns per-method coverage arrays
    and the summary table.
    """
    pac = config.pac
    if pac is None:
        raise ValueError("config has no pac_validation section")
    pool = simulate_pool(config, pac.K)
    test = simulate_test(config, pac.n_test)
    obs = config.use_observations
    methods = ("CDDR", "MARGINAL_CP", "EMP_MAX")
    cover = {m: np.empty(pac.B) for m in methods}
    for b in range(pac.B):
        perm = trajectory_rng(config.seed, SPLIT_STREAM, b).permutation(pac.K)
        train = pool.subset(perm[: pac.K_tr])
        calib = pool.subset(perm[pac.K_tr :])
        model = fit_model(config, train)
        train_res = cal.residuals(model, train, obs)
        cal_res = cal.residuals(model, calib, obs)
        for m in methods:
            c, _ = calibrate_method(m, ScoreKind.ISOTROPIC, train_res, cal_res, config.alpha, config.delta)
            cover[m][b] = score_containment(c, model, test, obs).mean()
        if (b + 1) % 50 == 0:
            log.info("pac validation: %d/%d splits", b + 1, pac.B)
    level = 1.0 - config.alpha
    summary = []
    for m in methods:
        c = cover[m]
        summary.append({
            "method": m,
            "mean_coverage_pct": 100.0 * float(c.mean()),
            "std_pct": 100.0 * float(c.std(ddof=1)) if c.size > 1 else 0.0,
            "min_pct": 100.0 * float(c.min()),
            "fail_pct": 100.0 * float(np.mean(c < level)),
            "B": pac.B,
            "n": pac.n,
            "n_test": pac.n_test,
        })
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "pac_validation.csv", summary, PAC_COLUMNS)
        per_split = [{"b": b, **{m: float(cover[m][b]) for m in methods}} for b in range(pac.B)]
        write_rows(out / "pac_splits.csv", per_split, ["b", *methods])
    return {"coverage": cover, "summary": summary}


STUDY_COLUMNS = ["noise", "variant", "coverage_pct", "final_volume", "n_min", "status"]


def run_score_study(config: ExperimentConfig, out_dir=None) -> list[dict]:
    """Compare score variants for each noise case of ``config.score_study``."""
    study = config.score_study
    if study is None:
        raise ValueError("config has no score_study section")
    rows = []
    for case in study.noises:
        pool = simulate_pool(config, study.K, case.noise)
        test = simulate_test(config, config.n_test, case.noise)
        kinds = [ScoreKind(v) for v in study.variants]
        _, runs = _run_methods(config, pool, test, ["CDDR"] * len(kinds), kinds)
        for run in runs:
            rows.append({
                "noise": case.label,
                "variant": run.calibration.variant.kind.value,
                "coverage_pct": 100.0 * run.report.trajectory_coverage if run.report else None,
                "final_volume": run.report.final_volume if run.report else None,
                "n_min": run.n_min,
                "status": "ok" if run.attainable else "unattainable",
            })
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "score_study.csv", rows, STUDY_COLUMNS)
    return rows
