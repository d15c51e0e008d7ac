"""Zonotope arithmetic and geometry queries.

A zonotope ``<c, G>`` is the set ``{c + G @ beta : ||beta||_inf <= 1}``.
Linear images, Minkowski sums and Cartesian products are exact; no order
reduction is performed anywhere in this package.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, islice
from math import comb

import numpy as np
from scipy.optimize import linprog

ZERO_TOL = 1e-12
CONTAINS_TOL = 1e-8

# Above this many facet candidates, batched containment falls back to the LP.
_MAX_FACETS = 250_000
_CHUNK = 100_000


@dataclass(frozen=True, eq=False)
class Zonotope:
    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        G = np.array(self.generators, dtype=float)
        if G.size == 0:
            G = G.reshape(c.shape[0], 0)
        if G.ndim != 2 or G.shape[0] != c.shape[0]:
            raise ValueError(
                f"generator matrix has shape {G.shape}, expected ({c.shape[0]}, p)"
            )
        c.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", G)

    @classmethod
    def singleton(cls, point) -> Zonotope:
        point = np.asarray(point, dtype=float).reshape(-1)
        return cls(point, np.zeros((point.shape[0], 0)))

    @classmethod
    def box(cls, center, radii) -> Zonotope:
        """Axis-aligned box with half-widths ``radii`` (scalar or per axis)."""
        center = np.asarray(center, dtype=float).reshape(-1)
        radii = np.broadcast_to(np.asarray(radii, dtype=float), center.shape)
        return cls(center, np.diag(radii))

    @classmethod
    def from_dict(cls, data: dict) -> Zonotope:
        center = np.asarray(data["center"], dtype=float)
        gens = np.asarray(data.get("generators", []), dtype=float)
        if gens.size == 0:
            gens = np.zeros((center.shape[0], 0))
        return cls(center, gens)

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "generators": self.generators.tolist()}

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def n_generators(self) -> int:
        return self.generators.shape[1]

    def is_singleton(self) -> bool:
        return self.n_generators == 0 or not np.any(np.abs(self.generators) > ZERO_TOL)

    def translate(self, offset) -> Zonotope:
        return Zonotope(self.center + np.asarray(offset, dtype=float), self.generators)

    def __add__(self, other):
        if isinstance(other, Zonotope):
            return minkowski_sum(self, other)
        return self.translate(other)

    def __sub__(self, offset):
        return self.translate(-np.asarray(offset, dtype=float))

    def __rmatmul__(self, M):
        return linear_map(M, self)

    def __repr__(self):
        return f"Zonotope(dim={self.dim}, n_generators={self.n_generators})"


def linear_map(M, Z: Zonotope) -> Zonotope:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != Z.dim:
        raise ValueError(f"matrix with {M.shape[1]} columns cannot map a {Z.dim}-D zonotope")
    return Zonotope(M @ Z.center, M @ Z.generators)


def minkowski_sum(Z1: Zonotope, Z2: Zonotope) -> Zonotope:
    if Z1.dim != Z2.dim:
        raise ValueError(f"dimension mismatch: {Z1.dim} vs {Z2.dim}")
    return Zonotope(Z1.center + Z2.center, np.hstack([Z1.generators, Z2.generators]))


def cartesian_product(Z1: Zonotope, Z2: Zonotope) -> Zonotope:
    G = np.zeros((Z1.dim + Z2.dim, Z1.n_generators + Z2.n_generators))
    G[: Z1.dim, : Z1.n_generators] = Z1.generators
    G[Z1.dim :, Z1.n_generators :] = Z2.generators
    return Zonotope(np.concatenate([Z1.center, Z2.center]), G)


def support(Z: Zonotope, u) -> float:
    """Support function ``max_{x in Z} u.x``; ``u`` is not normalized here."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != Z.dim:
        raise ValueError(f"direction of length {u.shape[-1]} for a {Z.dim}-D zonotope")
    return float(Z.center @ u + np.abs(Z.generators.T @ u).sum())


def support_many(Z: Zonotope, U: np.ndarray) -> np.ndarray:
    """Support function for each row of ``U``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    return U @ Z.center + np.abs(U @ Z.generators).sum(axis=1)


def nonzero_generators(Z: Zonotope, tol: float = ZERO_TOL) -> Zonotope:
    keep = np.linalg.norm(Z.generators, axis=0) >= tol
    return Zonotope(Z.center, Z.generators[:, keep])


def merge_parallel(Z: Zonotope, tol: float = 1e-10) -> Zonotope:
    """Sum parallel (or anti-parallel) generators; the set is unchanged."""
    Z = nonzero_generators(Z)
    if Z.n_generators < 2:
        return Z
    G = Z.generators
    unit = G / np.linalg.norm(G, axis=0)
    # orient each direction so that its first nonzero entry is positive
    first = np.argmax(np.abs(unit) > tol, axis=0)
    sign = np.sign(unit[first, np.arange(unit.shape[1])])
    unit = unit * sign
    G = G * sign
    merged: list[np.ndarray] = []
    dirs: list[np.ndarray] = []
    for i in range(G.shape[1]):
        for m, v in enumerate(dirs):
            if np.max(np.abs(v - unit[:, i])) < tol:
                merged[m] = merged[m] + G[:, i]
                break
        else:
            dirs.append(unit[:, i])
            merged.append(G[:, i].copy())
    return Zonotope(Z.center, np.column_stack(merged))


def _min_inf_norm_lp(G: np.ndarray, rhs: np.ndarray) -> float | None:
    """Solve min t s.t. G beta = rhs, |beta_i| <= t. Returns None if infeasible."""
    d, p = G.shape
    cost = np.zeros(p + 1)
    cost[-1] = 1.0
    eye = np.eye(p)
    ones = np.ones((p, 1))
    A_ub = np.vstack([np.hstack([eye, -ones]), np.hstack([-eye, -ones])])
    A_eq = np.hstack([G, np.zeros((d, 1))])
    res = linprog(
        cost,
        A_ub=A_ub,
        b_ub=np.zeros(2 * p),
        A_eq=A_eq,
        b_eq=rhs,
        bounds=[(None, None)] * p + [(0, None)],
        method="highs",
    )
    if res.status != 0:
        return None
    return float(res.x[-1])


def contains(Z: Zonotope, x, tol: float = CONTAINS_TOL) -> bool:
    """Exact membership test via the min-infinity-norm coefficient LP."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != Z.dim:
        raise ValueError(f"point of length {x.shape[0]} for a {Z.dim}-D zonotope")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    rhs = x - Z.center
    Z = nonzero_generators(Z)
    if Z.n_generators == 0:
        return bool(np.max(np.abs(rhs), initial=0.0) <= tol)
    t = _min_inf_norm_lp(Z.generators, rhs)
    return t is not None and t <= 1.0 + tol


def _subset_chunks(p: int, r: int):
    subsets = combinations(range(p), r)
    while True:
        idx = np.array(list(islice(subsets, _CHUNK)), dtype=int)
        if idx.size == 0:
            return
        yield idx.reshape(-1, r)


def _cofactors(G: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Generalized cross products: row s satisfies n_s.x = +-det([G[:, idx[s]], x])."""
    d = G.shape[0]
    GS = G[:, idx].transpose(1, 0, 2)  # (S, d, d-1)
    rows = np.arange(d)
    n = np.empty((GS.shape[0], d))
    for i in range(d):
        n[:, i] = (-1) ** i * np.linalg.det(GS[:, rows != i, :])
    return n


def _facet_normals(G: np.ndarray) -> np.ndarray:
    """Unit normals of all candidate facets (one per (d-1)-subset of generators)."""
    d, p = G.shape
    if d == 1:
        return np.ones((1, 1))
    normals = []
    floor = ZERO_TOL * max(1.0, np.abs(G).max() ** (d - 1))
    for idx in _subset_chunks(p, d - 1):
        n = _cofactors(G, idx)
        norm = np.linalg.norm(n, axis=1)
        keep = norm > floor
        normals.append(n[keep] / norm[keep, None])
    return np.vstack(normals) if normals else np.zeros((0, d))


def contains_points(Z: Zonotope, X, tol: float = CONTAINS_TOL) -> np.ndarray:
    """Vectorized membership test for the rows of ``X``.

    For full-dimensional zonotopes with a moderate number of generators the
    gauge ``max_n |n.(x - c)| / h(n)`` over facet normals ``n`` is evaluated
    directly; it equals the optimal value of the LP used by :func:`contains`,
    so both paths share the same tolerance semantics. Otherwise each point is
    decided by the LP.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != Z.dim:
        raise ValueError(f"points of dimension {X.shape[1]} for a {Z.dim}-D zonotope")
    Zr = merge_parallel(Z)
    D = X - Zr.center
    if Zr.n_generators == 0:
        return np.max(np.abs(D), axis=1, initial=0.0) <= tol
    d, p = Zr.generators.shape
    full_rank = np.linalg.matrix_rank(Zr.generators) == d
    if not full_rank or comb(p, d - 1) > _MAX_FACETS:
        return np.array([contains(Zr, x, tol) for x in X], dtype=bool)
    normals = _facet_normals(Zr.generators)
    h = np.abs(normals @ Zr.generators).sum(axis=1)
    out = np.empty(X.shape[0], dtype=bool)
    step = max(1, 20_000_000 // max(1, normals.shape[0]))
    for s in range(0, X.shape[0], step):
        gauge = np.max(np.abs(D[s : s + step] @ normals.T) / h, axis=1)
        out[s : s + step] = gauge <= 1.0 + tol
    return out


def volume(Z: Zonotope) -> float:
    """Exact volume ``2^d * sum |det G_S|`` over all d-column subsets S.

    Each (d-1)-subset's cofactor vector is computed once and dotted with
    every later column, which enumerates the same determinants.
    """
    Z = nonzero_generators(Z)
    d, p = Z.generators.shape
    if d == 0 or p < d:
        return 0.0
    G = Z.generators
    if d == 1:
        return float(2.0 * np.abs(G).sum())
    cols = np.arange(p)
    total = 0.0
    for idx in _subset_chunks(p, d - 1):
        dets = np.abs(_cofactors(G, idx) @ G)
        total += np.where(cols[None, :] > idx[:, -1:], dets, 0.0).sum()
    return float(2.0**d * total)


def project(Z: Zonotope, dims) -> Zonotope:
    dims = [int(i) for i in dims]
    if len(set(dims)) != len(dims):
        raise ValueError(f"projection indices must be distinct, got {dims}")
    for i in dims:
        if not 0 <= i < Z.dim:
            raise IndexError(f"index {i} out of range for a {Z.dim}-D zonotope")
    return Zonotope(Z.center[dims], Z.generators[dims, :])


def polygon_vertices(Z: Zonotope) -> np.ndarray:
    """Counter-clockwise vertices of a 2-D zonotope (zonogon)."""
    if Z.dim != 2:
        raise ValueError("polygon_vertices requires a 2-D zonotope")
    Z = merge_parallel(Z)
    if Z.n_generators == 0:
        return Z.center.reshape(1, 2).copy()
    G = Z.generators.copy()
    # point every generator into the upper half plane, angle in [0, pi)
    flip = (G[1] < 0) | ((G[1] == 0) & (G[0] < 0))
    G[:, flip] *= -1
    G = G[:, np.argsort(np.arctan2(G[1], G[0]), kind="stable")]
    start = Z.center - G.sum(axis=1)
    steps = np.hstack([2 * G, -2 * G])
    verts = start + np.cumsum(steps, axis=1).T
    # rotate so the list starts at the lowest vertex and drop the closing copy
    return np.vstack([start, verts[:-1]])


def sample(Z: Zonotope, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw points c + G beta with beta uniform on the unit cube."""
    beta = rng.uniform(-1.0, 1.0, size=(size, Z.n_generators))
    return Z.center + beta @ Z.generators.T


def interval_hull(Z: Zonotope) -> tuple[np.ndarray, np.ndarray]:
    r = np.abs(Z.generators).sum(axis=1)
    return Z.center - r, Z.center + r
