import itertools

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from cddr.zonotope import Zonotope


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def vertex_images(Z: Zonotope) -> np.ndarray:
    """All 2^p images c + G beta with beta in {-1, 1}^p."""
    betas = np.array(list(itertools.product([-1.0, 1.0], repeat=Z.n_generators)))
    return Z.center + betas @ Z.generators.T


def hull_of(Z: Zonotope) -> ConvexHull:
    return ConvexHull(vertex_images(Z))


def in_hull(hull: ConvexHull, X: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    eq = hull.equations
    return np.all(X @ eq[:, :-1].T + eq[:, -1] <= tol, axis=1)


def random_zonotope(rng, d, p, scale=1.0) -> Zonotope:
    return Zonotope(rng.normal(size=d), scale * rng.normal(size=(d, p)))


def draw_in(Z: Zonotope, rng, size: int, p_vertex: float = 0.3) -> np.ndarray:
    """Points of Z; a fraction use beta on the cube corners (boundary points)."""
    beta = rng.uniform(-1.0, 1.0, size=(size, Z.n_generators))
    corner = rng.random(size) < p_vertex
    beta[corner] = np.sign(beta[corner])
    return Z.center + beta @ Z.generators.T


def consistent_rollouts(predict, X0, U, errors, N, rng, size, Z_v=None):
    """Trajectories that respect the set recursion by construction.

    x(0) in X0, u(k) in U, per-step error in errors[k]; with a measurement
    bound the model acts on x + v and the next state is shifted by -v'.
    Returns (size, N+1, n_x) states.
    """
    X = np.empty((size, N + 1, X0.dim))
    X[:, 0] = draw_in(X0, rng, size)
    v = None if Z_v is None else draw_in(Z_v, rng, size)
    for k in range(N):
        u = draw_in(U, rng, size) if U.dim else np.zeros((size, 0))
        x_in = X[:, k] if v is None else X[:, k] + v
        nxt = predict(k, x_in, u) + draw_in(errors[k], rng, size)
        if v is not None:
            v = draw_in(Z_v, rng, size)
            nxt = nxt - v
        X[:, k + 1] = nxt
    return X
