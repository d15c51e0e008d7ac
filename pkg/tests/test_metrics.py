import numpy as np
import pytest

from cddr.calibrate import (
    CalibrationMethod,
    CalibrationResult,
    ScoreKind,
    ScoreVariant,
    calibrate_all,
    residuals,
    scores,
)
from cddr.metrics import (
    evaluate,
    final_volume,
    geometric_coverage,
    hausdorff_support,
    random_directions,
    score_containment,
    score_coverage,
)
from cddr.models import GlobalLinearModel, fit_global
from cddr.reach import ReachResult, error_zonotope, propagate, propagate_lti
from cddr.systems import NoiseFamily, NoiseSpec, TrajectoryBatch, simulate, standin_lti5
from cddr.zonotope import Zonotope, contains_points, minkowski_sum, polygon_vertices

from conftest import hull_of, in_hull

ISO = ScoreVariant(ScoreKind.ISOTROPIC)


def reach_of(sets, method=CalibrationMethod.LTT):
    return ReachResult(sets, method, ISO)


def small_setup(seed=0, K=700, n_test=300, sigma=0.01):
    noise = NoiseSpec(NoiseFamily.GAUSSIAN_ISO, sigma)
    X0, U = Zonotope.box(np.ones(5), 0.1), Zonotope.box(np.zeros(1), 0.01)
    spec = standin_lti5()
    pool = simulate(spec, noise, X0, U, K, 5, seed)
    test = simulate(spec, noise, X0, U, n_test, 5, seed, stream=1)
    train, cal = pool.subset(np.arange(200)), pool.subset(np.arange(200, K))
    model = fit_global(train)
    calib = calibrate_all(scores(residuals(model, cal), ISO), 0.05, 0.05, ISO)
    return model, calib, propagate(model, calib, X0, U), test


def test_coverage_at_centers_is_one():
    sets = [Zonotope(np.full(2, k), 0.1 * np.eye(2)) for k in range(4)]
    X = np.stack([np.tile(Z.center, (5, 1)) for Z in sets], axis=1)
    test = TrajectoryBatch(X, np.zeros((5, 3, 0)))
    cov, per = geometric_coverage(reach_of(sets), test)
    assert cov == 1.0 and np.all(per == 1.0) and per.shape == (3,)


def test_singleton_sets_noisy_data_is_zero():
    sets = [Zonotope.singleton(np.zeros(2)) for _ in range(4)]
    X = np.random.default_rng(0).normal(size=(50, 4, 2))
    cov, per = geometric_coverage(reach_of(sets), TrajectoryBatch(X, np.zeros((50, 3, 0))))
    assert cov == 0.0 and np.all(per == 0.0)


def test_coverage_horizon_mismatch():
    sets = [Zonotope.singleton(np.zeros(2))] * 3
    with pytest.raises(ValueError):
        geometric_coverage(reach_of(sets), TrajectoryBatch(np.zeros((1, 4, 2)), np.zeros((1, 3, 0))))


def test_coverage_monotone_under_enlargement():
    _, _, res, test = small_setup(seed=1, sigma=0.05)
    shrunk = reach_of([Zonotope(Z.center, 0.5 * Z.generators) for Z in res.sets])
    ball = Zonotope(np.zeros(5), 0.01 * np.eye(5))
    grown = reach_of([minkowski_sum(Z, ball) for Z in shrunk.sets])
    c_small, _ = geometric_coverage(shrunk, test)
    c_big, _ = geometric_coverage(grown, test)
    assert 0.0 < c_small <= c_big


def test_score_coverage_bounds():
    model, calib, res, test = small_setup()
    inf = CalibrationResult(np.full(5, np.inf), ISO, 0.05, 0.05, 5, 500, CalibrationMethod.LTT)
    zero = CalibrationResult(np.zeros(5), ISO, 0.05, 0.05, 5, 500, CalibrationMethod.LTT)
    assert score_coverage(inf, model, test) == 1.0
    assert score_coverage(zero, model, test) == 0.0


def test_score_containment_implies_geometric():
    for seed in range(3):
        model, calib, res, test = small_setup(seed=seed)
        flag = score_containment(calib, model, test)
        X = test.states
        inside = np.ones(test.K, dtype=bool)
        for k in range(1, 6):
            inside &= contains_points(res.sets[k], X[:, k])
        assert np.all(inside[flag])
        assert score_coverage(calib, model, test) <= geometric_coverage(res, test)[0]


def test_score_coverage_monotone_in_thresholds():
    model, calib, _, test = small_setup(sigma=0.02)
    base = score_coverage(calib, model, test)
    for scale in (0.5, 0.8, 1.0, 1.2):
        c = CalibrationResult(calib.thresholds * scale, ISO, 0.05, 0.05, 5, calib.n_used, calib.method)
        cov = score_coverage(c, model, test)
        if scale <= 1.0:
            assert cov <= base
        else:
            assert cov >= base


def test_score_containment_perdim_and_trajmax():
    r = np.zeros((2, 2, 2))
    r[1, 1, 0] = 0.5
    X = np.zeros((2, 3, 2))
    X[:, 1:] = r  # zero model: residual equals next state
    test = TrajectoryBatch(X, np.zeros((2, 2, 0)))
    model = GlobalLinearModel(np.zeros((2, 2)))
    per = CalibrationResult(np.array([[1.0, 1.0], [0.4, 1.0]]), ScoreVariant(ScoreKind.PER_DIM),
                            0.05, 0.05, 2, 10, CalibrationMethod.EMP_MAX)
    assert list(score_containment(per, model, test)) == [True, False]
    tm = CalibrationResult(np.array([0.6, 0.6]), ScoreVariant(ScoreKind.TRAJECTORY_MAX),
                           0.05, 0.05, 2, 10, CalibrationMethod.LTT)
    assert list(score_containment(tm, model, test)) == [True, True]


# -- Hausdorff ---------------------------------------------------------------------


def test_hausdorff_vertices_zero(rng):
    Z = Zonotope(rng.normal(size=2), rng.normal(size=(2, 4)))
    V = polygon_vertices(Z)
    for seed in range(3):
        assert hausdorff_support(Z, V, n_dirs=200, seed=seed) < 1e-9


def test_hausdorff_square_vs_origin():
    Z = Zonotope(np.zeros(2), np.eye(2))
    d = hausdorff_support(Z, np.zeros((1, 2)), n_dirs=200_000, seed=0)
    assert 1.0 <= d <= np.sqrt(2) + 1e-12
    assert d == pytest.approx(np.sqrt(2), abs=1e-6)
    diag = np.array([[1.0, 1.0]]) / np.sqrt(2)
    assert hausdorff_support(Z, np.zeros((1, 2)), directions=diag) == pytest.approx(np.sqrt(2), rel=1e-14)


def test_hausdorff_monotone(rng):
    Z = Zonotope(np.zeros(3), rng.normal(size=(3, 4)))
    cloud = 0.1 * rng.normal(size=(20, 3))
    D = random_directions(500, 3, 0)
    a = hausdorff_support(Z, cloud, directions=D)
    b = hausdorff_support(Zonotope(Z.center, 2 * Z.generators), cloud, directions=D)
    assert b > a
    # refining the direction set can only increase the max
    D2 = np.vstack([D, random_directions(500, 3, 1)])
    assert hausdorff_support(Z, cloud, directions=D2) >= a


def test_hausdorff_errors():
    Z = Zonotope.box(np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        hausdorff_support(Z, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        hausdorff_support(Z, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        random_directions(0, 2, 0)


def test_random_directions_unit_and_seeded():
    D = random_directions(100, 4, 5)
    assert np.allclose(np.linalg.norm(D, axis=1), 1.0)
    assert np.array_equal(D, random_directions(100, 4, 5))


# -- volume ------------------------------------------------------------------------


def test_final_volume_examples():
    assert final_volume(reach_of([Zonotope.singleton(np.zeros(3))] * 2)) == 0.0
    s = 0.3
    box = Zonotope(np.ones(3), s * np.eye(3))
    assert final_volume(reach_of([box, box])) == pytest.approx((2 * s) ** 3, rel=1e-12)


def test_final_volume_mc_after_propagation(rng):
    A = np.array([[0.8, 0.3], [-0.2, 0.9]])
    M = np.hstack([A, [[0.1], [0.5]]])
    X0 = Zonotope(np.array([1.0, 0.5]), 0.1 * rng.normal(size=(2, 2)))
    U = Zonotope.box([0.0], 0.05)
    errs = [error_zonotope(q, ScoreKind.ISOTROPIC, 2) for q in (0.02, 0.01, 0.03, 0.02, 0.01)]
    res = reach_of(propagate_lti(M, X0, U, errs, 5))
    R = res.sets[-1]
    half = np.abs(R.generators).sum(axis=1)
    X = rng.uniform(R.center - half, R.center + half, size=(1_000_000, 2))
    est = np.prod(2 * half) * in_hull(hull_of(R), X).mean()
    assert abs(final_volume(res) - est) / est < 0.02


def test_evaluate_report():
    model, calib, res, test = small_setup()
    D = random_directions(100, 5, 0)
    rep = evaluate(res, test, D, calib=calib, model=model)
    assert rep.method == "CDDR" and rep.variant == "ISOTROPIC" and rep.n_test == 300
    assert 0.0 <= rep.trajectory_coverage <= 1.0 and len(rep.per_step_coverage) == 5
    assert len(rep.hausdorff_per_step) == 6 and rep.hausdorff_final == rep.hausdorff_per_step[-1]
    assert rep.score_coverage <= rep.trajectory_coverage
    assert rep.to_dict()["final_volume"] == rep.final_volume > 0
