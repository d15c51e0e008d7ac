"""Least-squares one-step models fitted on the training split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .systems import TrajectoryBatch


def pseudoinverse(M) -> np.ndarray:
    """Moore-Penrose pseudoinverse by SVD.

    Singular values below ``eps * max(m, n) * sigma_max`` are treated as zero.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    m, n = M.shape
    if M.size == 0:
        return np.zeros((n, m))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = np.finfo(float).eps * max(m, n) * (s[0] if s.size else 0.0)
    inv = np.zeros_like(s)
    big = s > cutoff
    inv[big] = 1.0 / s[big]
    return (Vt.T * inv) @ U.T


@dataclass(frozen=True, eq=False)
class GlobalLinearModel:
    """``x(k+1) ~ M [x(k); u(k)]`` with ``M`` of shape (n_x, n_x + n_u)."""

    M: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if not np.all(np.isfinite(M)):
            raise ValueError("model matrix has non-finite entries")
        object.__setattr__(self, "M", M)

    @property
    def n_x(self) -> int:
        return self.M.shape[0]

    @property
    def n_u(self) -> int:
        return self.M.shape[1] - self.M.shape[0]

    def predict(self, k: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        # k is accepted for interface parity with LocalAffineFamily
        return np.concatenate([x, u], axis=-1) @ self.M.T

    def to_dict(self) -> dict:
        return {"type": "global_linear", "M": self.M.tolist()}


@dataclass(frozen=True, eq=False)
class LocalAffineFamily:
    """Per-step affine models around a nominal trajectory.

    ``matrices[k]`` maps ``[1; x - x_nom[k]; u - u_nom[k]]`` to ``x(k+1)``.
    """

    matrices: np.ndarray  # (N, n_x, 1 + n_x + n_u)
    x_nominal: np.ndarray  # (N+1, n_x)
    u_nominal: np.ndarray  # (N, n_u)

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        xs = np.asarray(self.x_nominal, dtype=float)
        us = np.asarray(self.u_nominal, dtype=float)
        N = mats.shape[0]
        if us.size == 0:
            us = np.zeros((N, 0))
        if xs.shape[0] != N + 1 or us.shape[0] != N:
            raise ValueError("nominal trajectory lengths must be N+1 (states) and N (inputs)")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "x_nominal", xs)
        object.__setattr__(self, "u_nominal", us)

    @property
    def N(self) -> int:
        return self.matrices.shape[0]

    @property
    def n_x(self) -> int:
        return self.x_nominal.shape[1]

    @property
    def n_u(self) -> int:
        return self.u_nominal.shape[1]

    def predict(self, k: int, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        dx = x - self.x_nominal[k]
        du = u - self.u_nominal[k]
        ones = np.ones(dx.shape[:-1] + (1,))
        return np.concatenate([ones, dx, du], axis=-1) @ self.matrices[k].T

    def to_dict(self) -> dict:
        return {
            "type": "local_affine",
            "matrices": self.matrices.tolist(),
            "x_nominal": self.x_nominal.tolist(),
            "u_nominal": self.u_nominal.tolist(),
        }


def model_from_dict(data: dict):
    if data["type"] == "global_linear":
        return GlobalLinearModel(np.asarray(data["M"]))
    if data["type"] == "local_affine":
        return LocalAffineFamily(
            np.asarray(data["matrices"]), np.asarray(data["x_nominal"]), np.asarray(data["u_nominal"])
        )
    raise ValueError(f"unknown model type {data['type']!r}")


def fit_global(batch: TrajectoryBatch, use_observations: bool = False) -> GlobalLinearModel:
    """Fit ``M = X+ [X-; U-]^+`` over every (trajectory, step) pair.

    With ``use_observations`` the observations replace the states on both
    sides of the regression.
    """
    if batch.K == 0:
        raise ValueError("cannot fit a model on an empty batch")
    X = batch.signal(use_observations)
    n_x, n_u = batch.n_x, batch.n_u
    X_minus = X[:, :-1].reshape(-1, n_x).T
    X_plus = X[:, 1:].reshape(-1, n_x).T
    U_minus = batch.inputs.reshape(-1, n_u).T
    regressor = np.vstack([X_minus, U_minus])
    return GlobalLinearModel(X_plus @ pseudoinverse(regressor))


def fit_local_affine(batch: TrajectoryBatch) -> LocalAffineFamily:
    """Per-step affine fit around the per-step mean trajectory."""
    if batch.K < 1:
        raise ValueError("need at least one training trajectory")
    X, Uin = batch.states, batch.inputs
    x_nom = X.mean(axis=0)
    u_nom = Uin.mean(axis=0)
    mats = []
    for k in range(batch.N):
        phi = np.vstack(
            [
                np.ones((1, batch.K)),
                (X[:, k] - x_nom[k]).T,
                (Uin[:, k] - u_nom[k]).T,
            ]
        )
        mats.append(X[:, k + 1].T @ pseudoinverse(phi))
    return LocalAffineFamily(np.array(mats), x_nom, u_nom)
