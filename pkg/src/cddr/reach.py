"""Propagation of conformalized reachable sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibrate import CalibrationMethod, CalibrationResult, ScoreKind, ScoreVariant
from .models import GlobalLinearModel, LocalAffineFamily
from .zonotope import Zonotope, cartesian_product, linear_map, minkowski_sum, polygon_vertices, project


class UnattainableGuarantee(RuntimeError):
    """A threshold could not be certified at the available calibration size."""


@dataclass(frozen=True, eq=False)
class ReachResult:
    sets: list  # Zonotopes R_0 .. R_N
    method: CalibrationMethod
    variant: ScoreVariant
    provenance: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.sets) - 1

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "variant": self.variant.kind.value,
            "provenance": self.provenance,
            "sets": [Z.to_dict() for Z in self.sets],
        }

    def projection_vertices(self, dims=(0, 1)) -> list[np.ndarray]:
        return [polygon_vertices(project(Z, dims)) for Z in self.sets]


def _diag_zonotope(radii: np.ndarray) -> Zonotope:
    radii = np.asarray(radii, dtype=float)
    return Zonotope(np.zeros(radii.shape[0]), np.diag(radii)[:, radii > 0])


def error_zonotope(q, kind: ScoreKind | str, n_x: int, scaling=None) -> Zonotope:
    """Per-step error set ``Z_k``.

    ISOTROPIC / TRAJECTORY_MAX: ``q * I``; NORMALIZED: ``q * diag(T_k)``;
    PER_DIM: ``diag(q_1, ..., q_n)``. Zero radii contribute no generator.
    """
    kind = ScoreKind(kind)
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise UnattainableGuarantee("threshold is infinite: calibration set too small")
    if kind is ScoreKind.PER_DIM:
        if q.shape != (n_x,):
            raise ValueError(f"per-dimension thresholds need shape ({n_x},), got {q.shape}")
        return _diag_zonotope(q)
    if kind is ScoreKind.NORMALIZED:
        if scaling is None:
            raise ValueError("NORMALIZED error sets need the scaling vector")
        return _diag_zonotope(float(q) * np.asarray(scaling, dtype=float))
    return _diag_zonotope(np.full(n_x, float(q)))


def error_sets(calib: CalibrationResult, n_x: int) -> list[Zonotope]:
    kind = calib.variant.kind
    out = []
    for k in range(calib.N):
        scaling = calib.variant.scaling[k] if kind is ScoreKind.NORMALIZED else None
        out.append(error_zonotope(calib.thresholds[k], kind, n_x, scaling))
    return out


def _check(errors, N, n_x):
    if N < 1:
        raise ValueError("horizon N must be at least 1")
    if len(errors) < N:
        raise ValueError(f"{len(errors)} error sets for horizon {N}")
    for Z in errors[:N]:
        if Z.dim != n_x:
            raise ValueError("error set dimension differs from state dimension")


def propagate_lti(M, X0: Zonotope, U: Zonotope, errors, N: int) -> list[Zonotope]:
    """``R_{k+1} = M (R_k x U) (+) Z_k`` starting from ``R_0 = X0``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (X0.dim, X0.dim + U.dim):
        raise ValueError(f"model shape {M.shape} incompatible with X0 ({X0.dim}) and U ({U.dim})")
    _check(errors, N, X0.dim)
    sets = [X0]
    for k in range(N):
        sets.append(minkowski_sum(linear_map(M, cartesian_product(sets[-1], U)), errors[k]))
    return sets


def propagate_lti_meas(M, X0: Zonotope, U: Zonotope, errors, Z_v: Zonotope, N: int) -> list[Zonotope]:
    """``R_{k+1} = M ((R_k (+) Z_v) x U) (+) Z_k (+) Z_v``."""
    if np.any(Z_v.center != 0):
        raise ValueError("measurement bound must be centred at the origin")
    if Z_v.dim != X0.dim:
        raise ValueError("measurement bound dimension differs from state dimension")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (X0.dim, X0.dim + U.dim):
        raise ValueError(f"model shape {M.shape} incompatible with X0 ({X0.dim}) and U ({U.dim})")
    _check(errors, N, X0.dim)
    sets = [X0]
    for k in range(N):
        obs = minkowski_sum(sets[-1], Z_v)
        nxt = linear_map(M, cartesian_product(obs, U))
        sets.append(minkowski_sum(minkowski_sum(nxt, errors[k]), Z_v))
    return sets


def propagate_nonlinear(family: LocalAffineFamily, X0: Zonotope, U: Zonotope, errors, N: int) -> list[Zonotope]:
    """``R_{k+1} = M'_k ({1} x (R_k - x*_k) x (U - u*_k)) (+) Z_k``."""
    if family.N < N:
        raise ValueError(f"family horizon {family.N} shorter than N={N}")
    if family.n_x != X0.dim or family.n_u != U.dim:
        raise ValueError("family dimensions disagree with X0 / U")
    _check(errors, N, X0.dim)
    one = Zonotope.singleton([1.0])
    sets = [X0]
    for k in range(N):
        reg = cartesian_product(
            cartesian_product(one, sets[-1] - family.x_nominal[k]), U - family.u_nominal[k]
        )
        sets.append(minkowski_sum(linear_map(family.matrices[k], reg), errors[k]))
    return sets


def propagate(model, calib: CalibrationResult, X0: Zonotope, U: Zonotope,
              Z_v: Zonotope | None = None, provenance: dict | None = None) -> ReachResult:
    """Dispatch to the recursion matching the model type and noise setting."""
    errors = error_sets(calib, X0.dim)
    if isinstance(model, LocalAffineFamily):
        sets = propagate_nonlinear(model, X0, U, errors, calib.N)
    elif isinstance(model, GlobalLinearModel):
        if Z_v is not None:
            sets = propagate_lti_meas(model.M, X0, U, errors, Z_v, calib.N)
        else:
            sets = propagate_lti(model.M, X0, U, errors, calib.N)
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    return ReachResult(sets, calib.method, calib.variant, provenance or {})
