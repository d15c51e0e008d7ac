"""Coverage, volume and Hausdorff evaluation of reachable sets."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .calibrate import CalibrationMethod, CalibrationResult, ScoreKind, residuals, scores
from .reach import ReachResult
from .systems import TrajectoryBatch
from .zonotope import Zonotope, contains_points, support_many, volume


@dataclass
class EvaluationReport:
    method: str
    variant: str
    trajectory_coverage: float
    per_step_coverage: list
    final_volume: float
    hausdorff_per_step: list
    n_test: int
    score_coverage: float | None = None

    @property
    def hausdorff_final(self) -> float:
        return self.hausdorff_per_step[-1]

    def to_dict(self) -> dict:
        return asdict(self)


def geometric_coverage(result: ReachResult, test: TrajectoryBatch,
                       use_observations: bool = False) -> tuple[float, np.ndarray]:
    """Fraction of test trajectories inside ``R_k`` for every k = 1..N.

    Returns (trajectory-level coverage, per-step coverage of length N).
    """
    if test.N != result.N:
        raise ValueError(f"test horizon {test.N} differs from reach horizon {result.N}")
    X = test.signal(use_observations)
    inside = np.ones(test.K, dtype=bool)
    per_step = np.empty(result.N)
    for k in range(1, result.N + 1):
        hit = contains_points(result.sets[k], X[:, k])
        per_step[k - 1] = hit.mean()
        inside &= hit
    return float(inside.mean()), per_step


def score_containment(calib: CalibrationResult, model, test: TrajectoryBatch,
                      use_observations: bool = False) -> np.ndarray:
    """Per-trajectory flag: every step's score is within its threshold."""
    r = residuals(model, test, use_observations)
    kind = calib.variant.kind
    s = scores(r, calib.variant)
    q = calib.thresholds
    if kind is ScoreKind.TRAJECTORY_MAX:
        return s <= q[0]
    if kind is ScoreKind.PER_DIM:
        return np.all(s <= q[None], axis=(1, 2))
    return np.all(s <= q[None], axis=1)


def score_coverage(calib: CalibrationResult, model, test: TrajectoryBatch,
                   use_observations: bool = False) -> float:
    return float(score_containment(calib, model, test, use_observations).mean())


def random_directions(n_dirs: int, dim: int, seed: int) -> np.ndarray:
    if n_dirs < 1:
        raise ValueError("need at least one direction")
    U = np.random.default_rng(seed).standard_normal((n_dirs, dim))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def hausdorff_support(A: Zonotope, cloud, n_dirs: int = 1000, seed: int = 0,
                      directions: np.ndarray | None = None) -> float:
    """Sampled-direction Hausdorff distance between ``A`` and hull(cloud).

    ``max_u |h_A(u) - max_s s.u|`` over unit directions ``u``.
    """
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    if cloud.shape[0] == 0:
        raise ValueError("empty point cloud")
    if cloud.shape[1] != A.dim:
        raise ValueError("cloud dimension differs from set dimension")
    if directions is None:
        directions = random_directions(n_dirs, A.dim, seed)
    h_cloud = (cloud @ directions.T).max(axis=0)
    return float(np.max(np.abs(support_many(A, directions) - h_cloud)))


def final_volume(result: ReachResult) -> float:
    return volume(result.sets[-1])


def evaluate(result: ReachResult, test: TrajectoryBatch, directions: np.ndarray,
             use_observations: bool = False, calib: CalibrationResult | None = None,
             model=None) -> EvaluationReport:
    cov, per_step = geometric_coverage(result, test, use_observations)
    X = test.signal(use_observations)
    d_h = [hausdorff_support(Z, X[:, k], directions=directions) for k, Z in enumerate(result.sets)]
    sc = None
    if calib is not None and model is not None:
        sc = score_coverage(calib, model, test, use_observations)
    label = result.method.value if result.method is not CalibrationMethod.LTT else "CDDR"
    return EvaluationReport(
        method=label,
        variant=result.variant.kind.value,
        trajectory_coverage=cov,
        per_step_coverage=per_step.tolist(),
        final_volume=final_volume(result),
        hausdorff_per_step=d_h,
        n_test=test.K,
        score_coverage=sc,
    )
