"""Acceptance checks for the ten headline properties of the package.

Each test prints one ``criterion N ... PASS|FAIL`` line (visible in ``pytest
-v`` output) before asserting. Tolerances are fixed; see README.
"""

import math
import subprocess
import sys

import mpmath
import numpy as np
import pytest

from cddr import experiments
from cddr.calibrate import ScoreKind, hb_pvalue, ltt_select, n_min, residuals
from cddr.config import load_config
from cddr.reach import error_sets, propagate
from cddr.zonotope import Zonotope, contains_points, linear_map, support_many, volume

from conftest import draw_in, hull_of, in_hull, consistent_rollouts, random_zonotope

mpmath.mp.dps = 50


@pytest.fixture
def report(capsys):
    def _report(num, title, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {num:>2} {title}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return _report


# -- 1 -------------------------------------------------------------------------------


def test_c01_n_min_arithmetic(report):
    a, b = n_min(0.01, 0.01), n_min(0.002, 0.002)
    ok = report(1, "n_min arithmetic", a == 459 and b == 3105, f"n_min(0.01,0.01)={a} n_min(0.002,0.002)={b}")
    assert ok


# -- 2 -------------------------------------------------------------------------------


def mp_pvalue(k, n, a):
    """min(exp(-n kl), sum_{i<=k} C(n,i) a^i (1-a)^(n-i)) at 50 digits."""
    a = mpmath.mpf(a)
    L = mpmath.mpf(k) / n
    if L >= a:
        return mpmath.mpf(1)
    kl = (L * mpmath.log(L / a) if k > 0 else 0) + (1 - L) * mpmath.log((1 - L) / (1 - a))
    tail = mpmath.fsum(mpmath.binomial(n, i) * a**i * (1 - a) ** (n - i) for i in range(k + 1))
    return min(mpmath.exp(-n * kl), tail)


def test_c02_hb_pvalue_oracle(report):
    rng = np.random.default_rng(2024)
    worst, n_checked = 0.0, 0
    for _ in range(1000):
        n = int(rng.integers(1, 201))
        a = float(rng.uniform(0.001, 0.5))
        k = int(rng.integers(0, min(n, math.ceil(1.5 * a * n)) + 1))
        got = hb_pvalue(k / n, n, a)
        ref = mp_pvalue(k, n, a)
        worst = max(worst, float(abs(got - ref) / ref))
        n_checked += 1
    ok = report(2, "HB p-value oracle", worst <= 1e-10, f"{n_checked} triples, max rel err {worst:.2e}")
    assert ok


# -- 3 -------------------------------------------------------------------------------


def test_c03_zonotope_suite(report):
    rng = np.random.default_rng(3)
    # support identities
    worst_id = 0.0
    for _ in range(200):
        d, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        Z1 = random_zonotope(rng, d, int(rng.integers(0, 8)))
        Z2 = random_zonotope(rng, d, int(rng.integers(0, 8)))
        M = rng.normal(size=(m, d))
        U, Um = rng.normal(size=(50, d)), rng.normal(size=(50, m))
        worst_id = max(
            worst_id,
            np.abs(support_many(linear_map(M, Z1), Um) - support_many(Z1, Um @ M)).max(),
            np.abs(support_many(Z1 + Z2, U) - support_many(Z1, U) - support_many(Z2, U)).max(),
        )
    # volume against 10^6-sample Monte Carlo on an independent hull membership test
    worst_vol = 0.0
    for i in range(20):
        d = 2 if i % 2 == 0 else 3
        Z = random_zonotope(rng, d, int(rng.integers(d, 7)))
        half = np.abs(Z.generators).sum(axis=1)
        X = rng.uniform(Z.center - half, Z.center + half, size=(1_000_000, d))
        est = np.prod(2 * half) * in_hull(hull_of(Z), X).mean()
        worst_vol = max(worst_vol, abs(volume(Z) - est) / est)
    # containment against a sampling oracle on 10^4 points
    Z = Zonotope(np.zeros(2), np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
    images = draw_in(Z, rng, 100_000, p_vertex=0.5)
    X = rng.uniform(-2.5, 2.5, size=(10_000, 2))
    oracle = in_hull(hull_of(Z), X)
    sampled_in = contains_points(Z, images).all()
    mismatch = int(np.sum(contains_points(Z, X) != oracle))
    ok = report(
        3, "zonotope suite", worst_id <= 1e-9 and worst_vol <= 0.02 and mismatch == 0 and sampled_in,
        f"identity err {worst_id:.1e}, worst MC vol rel err {100 * worst_vol:.2f}%, "
        f"containment mismatches {mismatch}/10000",
    )
    assert ok


# -- 4 -------------------------------------------------------------------------------


def _rollout_case(name, K=700, n_rollouts=1000, seed=4):
    cfg = load_config(name)
    pool = experiments.simulate_pool(cfg, K)
    train, cal = pool.subset(np.arange(cfg.K_tr)), pool.subset(np.arange(cfg.K_tr, K))
    model = experiments.fit_model(cfg, train)
    obs = cfg.use_observations
    calib, _ = experiments.calibrate_method("CDDR", ScoreKind.ISOTROPIC, residuals(model, train, obs),
                                            residuals(model, cal, obs), cfg.alpha, cfg.delta)
    Z_v = cfg.system.meas_bound if obs else None
    reach = propagate(model, calib, cfg.X0, cfg.U, Z_v)
    errs = error_sets(calib, cfg.system.n_x)
    rng = np.random.default_rng(seed)
    X = consistent_rollouts(model.predict, cfg.X0, cfg.U, errs, cfg.N, rng, n_rollouts, Z_v=Z_v)
    inside = np.ones(n_rollouts, dtype=bool)
    for k in range(cfg.N + 1):
        inside &= contains_points(reach.sets[k], X[:, k])
    violations = int(np.sum(~inside))
    return violations, reach.sets[-1].n_generators


def test_c04_consistent_rollouts(report):
    results = {name: _rollout_case(name) for name in ("lti5_gaussian", "lti5_measurement", "nonlinear2d")}
    total = sum(v for v, _ in results.values())
    detail = ", ".join(f"{k}: {v} violations ({g} gens)" for k, (v, g) in results.items())
    ok = report(4, "containment of score-consistent rollouts", total == 0, detail)
    assert ok


# -- 5 -------------------------------------------------------------------------------


def test_c05_coverage_desk_scale(report):
    lines, ok = [], True
    for name in ("lti5_gaussian", "lti5_student_t"):
        cfg = load_config(name)
        assert (cfg.K, cfg.n, cfg.n_test, cfg.alpha, cfg.delta, cfg.N) == (2000, 1800, 3000, 0.05, 0.05, 5)
        runs = {r.method: r for r in experiments.run_experiment(cfg)}
        cddr, mcp = runs["CDDR"].report, runs["MARGINAL_CP"].report
        good = cddr.trajectory_coverage >= 0.95 and mcp.final_volume <= cddr.final_volume
        ok &= good
        lines.append(f"{cfg.noise_label}: CDDR cov {100 * cddr.trajectory_coverage:.2f}% "
                     f"vol {cddr.final_volume:.4g} >= MCP vol {mcp.final_volume:.4g}")
    assert report(5, "desk-scale coverage", ok, "; ".join(lines))


# -- 6 -------------------------------------------------------------------------------


def test_c06_pac_validation(report):
    cfg = load_config("lti5_gaussian")
    pac = cfg.pac
    assert (pac.B, pac.K, pac.n, pac.n_test) == (200, 1200, 1000, 2000)
    rows = {r["method"]: r for r in experiments.run_pac_validation(cfg)["summary"]}
    c, m = rows["CDDR"], rows["MARGINAL_CP"]
    ok = c["fail_pct"] == 0.0 and m["fail_pct"] >= 1.0 and c["mean_coverage_pct"] >= m["mean_coverage_pct"]
    detail = (f"CDDR mean {c['mean_coverage_pct']:.2f}% fail {c['fail_pct']:.1f}%; "
              f"Marginal CP mean {m['mean_coverage_pct']:.2f}% fail {m['fail_pct']:.1f}%; "
              f"Emp.-max fail {rows['EMP_MAX']['fail_pct']:.1f}%")
    assert report(6, "PAC validation", ok, detail)


# -- 7 -------------------------------------------------------------------------------


def test_c07_score_design_study(report):
    cfg = load_config("lti5_gaussian")
    assert cfg.score_study.K - cfg.K_tr == 3300
    rows = experiments.run_score_study(cfg)
    aniso = {r["variant"]: r for r in rows if r["noise"] == "anisotropic"}
    vol = {v: aniso[v]["final_volume"] for v in ("PER_DIM", "NORMALIZED", "ISOTROPIC")}
    cov = {v: aniso[v]["coverage_pct"] for v in vol}
    attained = all(aniso[v]["status"] == "ok" for v in vol)
    order = attained and vol["PER_DIM"] < vol["NORMALIZED"] < vol["ISOTROPIC"]
    ratio = vol["NORMALIZED"] / vol["ISOTROPIC"] if attained else math.inf
    covered = attained and all(c >= 95.0 for c in cov.values())
    detail = (f"vol PER_DIM {vol['PER_DIM']:.4g}, NORMALIZED {vol['NORMALIZED']:.4g}, "
              f"ISOTROPIC {vol['ISOTROPIC']:.4g}; ratio N/I {ratio:.2e}; "
              f"order {'ok' if order else 'violated'}; min cov {min(cov.values()):.2f}%")
    assert report(7, "score-design study", order and ratio <= 1e-2 and covered, detail)


# -- 8 -------------------------------------------------------------------------------


def test_c08_nonlinear(report):
    cfg = load_config("nonlinear2d")
    assert cfg.n == 1800 and cfg.system.gamma == 0.05 and float(cfg.noise.sigma) == 0.01
    assert np.array_equal(cfg.system.A, [[0.7, 0.35], [-0.35, 0.7]])
    runs = {r.method: r for r in experiments.run_experiment(cfg)}
    cov = runs["CDDR"].report.trajectory_coverage
    assert report(8, "nonlinear coverage", cov >= 0.95,
                  f"CDDR cov {100 * cov:.2f}% vol {runs['CDDR'].report.final_volume:.4g}")


# -- 9 -------------------------------------------------------------------------------


def test_c09_ltt_validity(report):
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(500):
        s = rng.exponential(size=200)
        q = ltt_select(s, 200, 0.05, 0.05)
        bad += math.exp(-q) > 0.05  # P(s > q) for Exp(1)
    frac = bad / 500
    assert report(9, "LTT validity", frac <= 0.05 + 0.03, f"{bad}/500 draws exceed ({frac:.3f})")


# -- 10 ------------------------------------------------------------------------------


def test_c10_determinism(report, tmp_path):
    outs = []
    for d in ("a", "b"):
        subprocess.run([sys.executable, "-m", "cddr.cli", "run", "--config", "lti5_gaussian",
                        "--out", str(tmp_path / d)], check=True, capture_output=True)
        outs.append((tmp_path / d / "results.csv").read_bytes())
    same = outs[0] == outs[1]
    report(10, "determinism", same, f"results.csv {len(outs[0])} bytes, identical={same}")
    assert same
