"""Benchmark systems, noise models and seeded trajectory simulation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .zonotope import Zonotope, sample


class SystemKind(str, Enum):
    LTI = "LTI"
    LTI_MEAS = "LTI_MEAS"
    NONLINEAR = "NONLINEAR"


class NoiseFamily(str, Enum):
    GAUSSIAN_ISO = "GAUSSIAN_ISO"
    GAUSSIAN_DIAG = "GAUSSIAN_DIAG"
    STUDENT_T = "STUDENT_T"


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Discrete-time dynamics ``x+ = A x + B u (+ gamma * phi(x)) + w``.

    ``phi`` is the fractional-damping map ``sqrt(|x_i|) * sign(x_i)`` and is
    only active for ``NONLINEAR``. ``meas_bound`` is the origin-centred
    zonotope containing every measurement error ``y - x`` (``LTI_MEAS``).
    """

    kind: SystemKind
    A: np.ndarray
    B: np.ndarray
    gamma: float = 0.0
    meas_bound: Zonotope | None = None

    def __post_init__(self):
        kind = SystemKind(self.kind)
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.size == 0:
            B = np.zeros((A.shape[0], 0))
        B = B.reshape(A.shape[0], -1) if B.ndim < 2 else B
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        if kind is SystemKind.LTI_MEAS:
            if self.meas_bound is None:
                raise ValueError("LTI_MEAS requires a measurement-noise bound")
            if self.meas_bound.dim != A.shape[0]:
                raise ValueError("measurement bound dimension differs from n_x")
            if np.any(self.meas_bound.center != 0):
                raise ValueError("measurement bound must be centred at the origin")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Noise-free transition for a batch of row vectors."""
        nxt = x @ self.A.T + u @ self.B.T
        if self.kind is SystemKind.NONLINEAR:
            nxt = nxt + self.gamma * fractional_damping(x)
        return nxt


def fractional_damping(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(x)) * np.sign(x)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    family: NoiseFamily
    sigma: float | np.ndarray
    dof: float = 5.0

    def __post_init__(self):
        family = NoiseFamily(self.family)
        sigma = np.asarray(self.sigma, dtype=float)
        if np.any(sigma <= 0):
            raise ValueError("noise scale must be positive")
        if family is NoiseFamily.STUDENT_T and self.dof <= 2:
            raise ValueError("Student-t noise needs dof > 2 for a finite variance")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "sigma", sigma)

    def draw(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        sigma = np.broadcast_to(self.sigma, shape[-1:])
        if self.family is NoiseFamily.STUDENT_T:
            return sigma * sample_student_t(self.dof, 1.0, rng, size=shape)
        return sigma * rng.standard_normal(shape)


def sample_student_t(dof: float, scale: float, rng: np.random.Generator, size=None):
    """``scale * Z / sqrt(V / dof)`` with ``Z ~ N(0, 1)`` and ``V ~ chi2(dof)``."""
    if dof <= 0 or scale <= 0:
        raise ValueError("dof and scale must be positive")
    z = rng.standard_normal(size)
    v = rng.chisquare(dof, size)
    return scale * z / np.sqrt(v / dof)


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """``states``: (K, N+1, n_x); ``inputs``: (K, N, n_u); ``observations``
    optional, same shape as ``states``."""

    states: np.ndarray
    inputs: np.ndarray
    observations: np.ndarray | None = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        inputs = np.asarray(self.inputs, dtype=float)
        if states.ndim != 3:
            raise ValueError(f"states must be (K, N+1, n_x), got {states.shape}")
        K, N1, _ = states.shape
        if inputs.size == 0:
            inputs = np.zeros((K, N1 - 1, 0))
        if inputs.shape[:2] != (K, N1 - 1):
            raise ValueError(f"inputs shape {inputs.shape} inconsistent with states {states.shape}")
        obs = self.observations
        if obs is not None:
            obs = np.asarray(obs, dtype=float)
            if obs.shape != states.shape:
                raise ValueError("observations must have the same shape as states")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "observations", obs)

    @property
    def K(self) -> int:
        return self.states.shape[0]

    @property
    def N(self) -> int:
        return self.states.shape[1] - 1

    @property
    def n_x(self) -> int:
        return self.states.shape[2]

    @property
    def n_u(self) -> int:
        return self.inputs.shape[2]

    def signal(self, use_observations: bool = False) -> np.ndarray:
        if use_observations:
            if self.observations is None:
                raise ValueError("batch carries no observations")
            return self.observations
        return self.states

    def subset(self, idx) -> TrajectoryBatch:
        idx = np.asarray(idx)
        obs = None if self.observations is None else self.observations[idx]
        return TrajectoryBatch(self.states[idx], self.inputs[idx], obs)


def trajectory_rng(seed: int, stream: int, j: int) -> np.random.Generator:
    """Independent generator for trajectory ``j`` of a named stream."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, j)))


def simulate(
    spec: SystemSpec,
    noise: NoiseSpec | None,
    X0: Zonotope,
    U: Zonotope,
    K: int,
    N: int,
    seed: int,
    stream: int = 0,
) -> TrajectoryBatch:
    """Simulate ``K`` trajectories of horizon ``N``.

    Initial states and inputs are drawn with uniform coefficients on the unit
    cube mapped through the generators of ``X0`` and ``U``. Each trajectory
    has its own substream keyed by ``(seed, stream, j)``, so the result does
    not depend on evaluation order. ``noise=None`` simulates without process
    noise.
    """
    if X0.dim != spec.n_x:
        raise ValueError(f"X0 has dimension {X0.dim}, system has n_x={spec.n_x}")
    if U.dim != spec.n_u:
        raise ValueError(f"U has dimension {U.dim}, system has n_u={spec.n_u}")
    if K < 1 or N < 1:
        raise ValueError("K and N must be at least 1")
    n_x, n_u = spec.n_x, spec.n_u
    x0 = np.empty((K, n_x))
    inputs = np.empty((K, N, n_u))
    w = np.zeros((K, N, n_x))
    v = np.zeros((K, N + 1, n_x)) if spec.kind is SystemKind.LTI_MEAS else None
    for j in range(K):
        rng = trajectory_rng(seed, stream, j)
        x0[j] = sample(X0, rng, 1)[0]
        inputs[j] = sample(U, rng, N)
        if noise is not None:
            w[j] = noise.draw(rng, (N, n_x))
        if v is not None:
            v[j] = sample(spec.meas_bound, rng, N + 1)
    states = np.empty((K, N + 1, n_x))
    states[:, 0] = x0
    for k in range(N):
        states[:, k + 1] = spec.step(states[:, k], inputs[:, k]) + w[:, k]
    obs = None if v is None else states + v
    return TrajectoryBatch(states, inputs, obs)


def write_csv(batch: TrajectoryBatch, path) -> None:
    """One row per (trajectory, step); inputs are blank at the final step."""
    n_x, n_u = batch.n_x, batch.n_u
    header = ["j", "k"] + [f"x{i + 1}" for i in range(n_x)] + [f"u{i + 1}" for i in range(n_u)]
    if batch.observations is not None:
        header += [f"y{i + 1}" for i in range(n_x)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j in range(batch.K):
            for k in range(batch.N + 1):
                row = [j, k] + [repr(float(a)) for a in batch.states[j, k]]
                if k < batch.N:
                    row += [repr(float(a)) for a in batch.inputs[j, k]]
                else:
                    row += [""] * n_u
                if batch.observations is not None:
                    row += [repr(float(a)) for a in batch.observations[j, k]]
                writer.writerow(row)


def read_csv(path) -> TrajectoryBatch:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    xs = [i for i, h in enumerate(header) if h.startswith("x")]
    us = [i for i, h in enumerate(header) if h.startswith("u")]
    ys = [i for i, h in enumerate(header) if h.startswith("y")]
    js = np.array([int(r[0]) for r in rows])
    ks = np.array([int(r[1]) for r in rows])
    K, N = js.max() + 1, ks.max()
    states = np.zeros((K, N + 1, len(xs)))
    inputs = np.zeros((K, N, len(us)))
    obs = np.zeros((K, N + 1, len(ys))) if ys else None
    for r, j, k in zip(rows, js, ks):
        states[j, k] = [float(r[i]) for i in xs]
        if k < N:
            inputs[j, k] = [float(r[i]) for i in us]
        if obs is not None:
            obs[j, k] = [float(r[i]) for i in ys]
    return TrajectoryBatch(states, inputs, obs)


def discretize(A_c, B_c, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    A_c = np.atleast_2d(np.asarray(A_c, dtype=float))
    n = A_c.shape[0]
    B_c = np.asarray(B_c, dtype=float).reshape(n, -1)
    m = B_c.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A_c
    aug[:n, n:] = B_c
    E = expm(aug * Ts)
    return E[:n, :n], E[:n, n:]


# Stand-in 5-D system: two lightly damped oscillator pairs plus a first-order
# mode, driven by one input. Any stable system exercises the same pipeline.
STANDIN_5D_CONTINUOUS_A = [
    [-1.0, -4.0, 0.0, 0.0, 0.0],
    [4.0, -1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, -3.0, 1.0, 0.0],
    [0.0, 0.0, -1.0, -3.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, -2.0],
]
STANDIN_5D_CONTINUOUS_B = [[1.0], [1.0], [1.0], [1.0], [1.0]]
STANDIN_5D_TS = 0.05

FRACTIONAL_A = [[0.7, 0.35], [-0.35, 0.7]]
FRACTIONAL_GAMMA = 0.05


def standin_lti5(kind: SystemKind = SystemKind.LTI, meas_bound: Zonotope | None = None) -> SystemSpec:
    A, B = discretize(STANDIN_5D_CONTINUOUS_A, STANDIN_5D_CONTINUOUS_B, STANDIN_5D_TS)
    return SystemSpec(kind, A, B, meas_bound=meas_bound)


def fractional_damping_2d() -> SystemSpec:
    return SystemSpec(SystemKind.NONLINEAR, FRACTIONAL_A, np.zeros((2, 0)), gamma=FRACTIONAL_GAMMA)
