"""Conformal scores, Learn-Then-Test threshold selection and baselines.

Every threshold is chosen by fixed-sequence testing over the observed
calibration scores (largest first), rejecting ``H: risk > alpha`` while the
Hoeffding-Bentkus p-value stays below the per-hypothesis confidence budget.
Budgets are split by Bonferroni over the hypotheses calibrated jointly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import bdtr

from .models import GlobalLinearModel, LocalAffineFamily
from .systems import TrajectoryBatch
from .zonotope import Zonotope

SCALE_FLOOR = 1e-12


class ScoreKind(str, Enum):
    ISOTROPIC = "ISOTROPIC"
    PER_DIM = "PER_DIM"
    NORMALIZED = "NORMALIZED"
    TRAJECTORY_MAX = "TRAJECTORY_MAX"


class CalibrationMethod(str, Enum):
    LTT = "LTT"
    MARGINAL_CP = "MARGINAL_CP"
    EMP_MAX = "EMP_MAX"


@dataclass(frozen=True, eq=False)
class ScoreVariant:
    kind: ScoreKind = ScoreKind.ISOTROPIC
    scaling: np.ndarray | None = None  # (N, n_x) diagonal of T_k, NORMALIZED only

    def __post_init__(self):
        kind = ScoreKind(self.kind)
        scaling = self.scaling
        if kind is ScoreKind.NORMALIZED:
            if scaling is None:
                raise ValueError("NORMALIZED scores need per-step scaling vectors")
            scaling = np.atleast_2d(np.asarray(scaling, dtype=float))
            if np.any(scaling <= 0):
                raise ValueError("scaling entries must be positive")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "scaling", scaling)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "scaling": None if self.scaling is None else self.scaling.tolist(),
        }


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Per-step thresholds.

    ``thresholds`` has shape (N,) for scalar scores (a trajectory-level
    threshold is repeated for every step) and (N, n_x) for per-dimension
    thresholds. ``inf`` marks a hypothesis that could not be certified.
    """

    thresholds: np.ndarray
    variant: ScoreVariant
    alpha: float
    delta: float
    N: int
    n_used: int
    method: CalibrationMethod
    trace: list = field(default_factory=list)

    @property
    def attainable(self) -> bool:
        return bool(np.all(np.isfinite(self.thresholds)))

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "variant": self.variant.to_dict(),
            "alpha": self.alpha,
            "delta": self.delta,
            "N": self.N,
            "n_used": self.n_used,
            "thresholds": _json_floats(self.thresholds),
            "trace": self.trace,
        }


def _json_floats(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return float(a) if np.isfinite(a) else "inf"
    return [_json_floats(x) for x in a]


# -- scores -----------------------------------------------------------------


def residuals(model, batch: TrajectoryBatch, use_observations: bool = False) -> np.ndarray:
    """One-step prediction residuals, shape (K, N, n_x)."""
    X = batch.signal(use_observations)
    if X.shape[2] != model.n_x or batch.n_u != model.n_u:
        raise ValueError("model and batch dimensions disagree")
    if isinstance(model, LocalAffineFamily) and model.N < batch.N:
        raise ValueError(f"model horizon {model.N} shorter than batch horizon {batch.N}")
    if not isinstance(model, (GlobalLinearModel, LocalAffineFamily)):
        raise TypeError(f"unsupported model type {type(model).__name__}")
    r = np.empty((batch.K, batch.N, batch.n_x))
    for k in range(batch.N):
        r[:, k] = X[:, k + 1] - model.predict(k, X[:, k], batch.inputs[:, k])
    return r


def scores(r: np.ndarray, variant: ScoreVariant) -> np.ndarray:
    """Scores from residuals ``r`` (K, N, n_x).

    ISOTROPIC / NORMALIZED give (K, N); PER_DIM gives (K, N, n_x);
    TRAJECTORY_MAX gives (K,).
    """
    r = np.asarray(r, dtype=float)
    if r.ndim != 3:
        raise ValueError(f"residuals must be (K, N, n_x), got {r.shape}")
    kind = variant.kind
    if kind is ScoreKind.ISOTROPIC:
        return np.abs(r).max(axis=2)
    if kind is ScoreKind.NORMALIZED:
        T = variant.scaling
        if T.shape != r.shape[1:]:
            raise ValueError(f"scaling shape {T.shape} does not match residuals {r.shape[1:]}")
        return np.abs(r / T).max(axis=2)
    if kind is ScoreKind.PER_DIM:
        return np.abs(r)
    return np.abs(r).max(axis=(1, 2))


def estimate_scaling(train_residuals: np.ndarray) -> np.ndarray:
    """Per-step, per-dimension sample standard deviation, floored."""
    sd = np.std(train_residuals, axis=0, ddof=1) if train_residuals.shape[0] > 1 else np.zeros(
        train_residuals.shape[1:]
    )
    return np.maximum(sd, SCALE_FLOOR)


# -- Hoeffding-Bentkus p-values -----------------------------------------------


def binary_kl(q: float, p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    out = 0.0
    if q > 0.0:
        out += q * math.log(q / p)
    if q < 1.0:
        out += (1.0 - q) * (math.log1p(-q) - math.log1p(-p))
    return out


def binomial_cdf(k: int, n: int, p: float) -> float:
    """P(Bin(n, p) <= k) through the regularized incomplete beta function."""
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    return float(bdtr(k, n, p))


def hb_pvalue(L_hat: float, n: int, alpha: float) -> float:
    """Hoeffding-Bentkus p-value for ``H: risk > alpha`` given empirical risk."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 1:
        raise ValueError("n must be at least 1")
    if L_hat >= alpha:
        return 1.0
    # guard against n * (k / n) landing just below k
    k = int(math.floor(n * L_hat + 1e-9))
    hoeffding = math.exp(-n * binary_kl(L_hat, alpha))
    return min(hoeffding, binomial_cdf(k, n, alpha))


def n_min(alpha_step: float, delta_step: float) -> int:
    """Smallest n at which zero empirical risk certifies ``alpha_step``."""
    return math.ceil(math.log(delta_step) / math.log1p(-alpha_step) - 1e-12)


# -- threshold selection ------------------------------------------------------


def ltt_select(scores_k, n: int | None = None, alpha_step: float = 0.05, delta_step: float = 0.05,
               trace: list | None = None) -> float:
    """Fixed-sequence LTT over candidate thresholds ``[inf] + unique scores``.

    Candidates are tested from largest to smallest; the scan stops at the
    first candidate whose p-value exceeds ``delta_step``. Returns the
    smallest rejected candidate, or ``inf`` if none is rejected.
    """
    s = np.sort(np.asarray(scores_k, dtype=float).reshape(-1))
    if s.size == 0:
        raise ValueError("no calibration scores")
    if n is None:
        n = s.size
    if n != s.size:
        raise ValueError(f"n={n} but {s.size} scores were given")
    if not (0 < alpha_step < 1 and 0 < delta_step < 1):
        raise ValueError("budgets must lie in (0, 1)")
    candidates = np.concatenate([[np.inf], np.unique(s)[::-1]])
    # loss is 1{s > lambda}: count of scores strictly above each candidate
    exceed = n - np.searchsorted(s, candidates, side="right")
    selected = np.inf
    for lam, count in zip(candidates, exceed):
        p = hb_pvalue(count / n, n, alpha_step)
        if trace is not None:
            trace.append({"lambda": float(lam) if np.isfinite(lam) else "inf",
                          "loss": count / n, "p_value": p})
        if p > delta_step:
            break
        selected = lam
    return float(selected)


def marginal_cp_quantile(scores_k, alpha_step: float) -> float:
    """The ceil((n+1)(1-alpha))-th order statistic of scores plus ``+inf``."""
    s = np.sort(np.asarray(scores_k, dtype=float).reshape(-1))
    n = s.size
    if n == 0:
        raise ValueError("no calibration scores")
    rank = math.ceil((n + 1) * (1.0 - alpha_step) - 1e-9)
    if rank > n:
        return float("inf")
    return float(s[max(rank, 1) - 1])


def _budget_divisor(kind: ScoreKind, N: int, n_x: int) -> int:
    if kind is ScoreKind.PER_DIM:
        return N * n_x
    if kind is ScoreKind.TRAJECTORY_MAX:
        return 1
    return N


def calibrate_all(
    score_table: np.ndarray,
    alpha: float,
    delta: float,
    variant: ScoreVariant,
    N: int | None = None,
    method: CalibrationMethod = CalibrationMethod.LTT,
) -> CalibrationResult:
    """Calibrate every hypothesis of a score table produced by :func:`scores`.

    LTT splits ``(alpha, delta)`` over N per-step hypotheses (ISOTROPIC,
    NORMALIZED), N * n_x hypotheses (PER_DIM) or a single trajectory-level
    one. The marginal conformal baseline uses the same ``alpha`` split and
    ignores ``delta``.
    """
    method = CalibrationMethod(method)
    if method is CalibrationMethod.EMP_MAX:
        raise ValueError("use empmax_calibration for the empirical-max baseline")
    table = np.asarray(score_table, dtype=float)
    kind = variant.kind
    expected_ndim = {ScoreKind.TRAJECTORY_MAX: 1, ScoreKind.PER_DIM: 3}.get(kind, 2)
    if table.ndim != expected_ndim:
        raise ValueError(f"{kind.value} expects a {expected_ndim}-D score table, got {table.shape}")
    n = table.shape[0]
    if kind is ScoreKind.TRAJECTORY_MAX:
        if N is None:
            raise ValueError("TRAJECTORY_MAX needs the horizon N")
        flat = table[:, None]
    else:
        if N is not None and table.shape[1] != N:
            raise ValueError(f"score table has {table.shape[1]} steps, expected N={N}")
        N = table.shape[1]
        flat = table.reshape(n, -1)
    n_x = table.shape[2] if kind is ScoreKind.PER_DIM else 1
    m = _budget_divisor(kind, N, n_x)
    a_step, d_step = alpha / m, delta / m
    q = np.empty(flat.shape[1])
    trace = []
    for h in range(flat.shape[1]):
        if method is CalibrationMethod.LTT:
            scan: list = []
            q[h] = ltt_select(flat[:, h], n, a_step, d_step, trace=scan)
            trace.append({"hypothesis": h, "alpha_step": a_step, "delta_step": d_step, "scan": scan})
        else:
            q[h] = marginal_cp_quantile(flat[:, h], a_step)
    if kind is ScoreKind.TRAJECTORY_MAX:
        thresholds = np.full(N, q[0])
    elif kind is ScoreKind.PER_DIM:
        thresholds = q.reshape(N, n_x)
    else:
        thresholds = q
    return CalibrationResult(thresholds, variant, alpha, delta, N, n, method, trace)


def budgets(kind: ScoreKind, alpha: float, delta: float, N: int, n_x: int) -> tuple[float, float]:
    m = _budget_divisor(ScoreKind(kind), N, n_x)
    return alpha / m, delta / m


# -- empirical-max baseline ---------------------------------------------------


def empmax_bound(train_residuals: np.ndarray) -> Zonotope:
    """``<0, diag(max_d |r_d|)>`` pooled over all training residuals."""
    r = np.asarray(train_residuals, dtype=float)
    if r.size == 0:
        raise ValueError("no training residuals")
    m = np.abs(r.reshape(-1, r.shape[-1])).max(axis=0)
    G = np.diag(m)[:, m > 0]
    return Zonotope(np.zeros(m.shape[0]), G)


def empmax_calibration(train_residuals: np.ndarray, alpha: float, delta: float) -> CalibrationResult:
    """Empirical-max bound expressed as constant per-dimension thresholds."""
    r = np.asarray(train_residuals, dtype=float)
    m = np.abs(r.reshape(-1, r.shape[-1])).max(axis=0)
    N = r.shape[1]
    return CalibrationResult(
        np.tile(m, (N, 1)), ScoreVariant(ScoreKind.PER_DIM), alpha, delta, N, r.shape[0],
        CalibrationMethod.EMP_MAX,
    )
