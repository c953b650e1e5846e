"""Shared generators: random feasible points per domain and hypothesis strategies."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from banditlab.geometry import (
    CappedBall,
    Cylinder,
    Domain,
    Hypercube,
    L1Ball,
    ShiftedBall,
    Simplex,
    UnitBall,
)


def _sphere(rng, n, D):
    g = rng.standard_normal((n, D))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _ball(rng, n, D):
    return _sphere(rng, n, D) * rng.random((n, 1)) ** (1.0 / D)


def feasible_points(domain: Domain, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` random points of the domain, half of them on its boundary or extreme set.

    Boundary-heavy sampling keeps a sampled maximum of a linear function close
    to the true one, which is what the sampling oracles rely on.
    """
    D = domain.dim
    half = n // 2
    if isinstance(domain, UnitBall):
        return np.vstack([_sphere(rng, half, D), _ball(rng, n - half, D)])
    if isinstance(domain, ShiftedBall):
        return domain.a + np.vstack([_sphere(rng, half, D), _ball(rng, n - half, D)])
    if isinstance(domain, Cylinder):
        w = np.empty((n, D))
        w[:, 0] = rng.uniform(-1, 1, n)
        w[:half, 0] = rng.choice([-1.0, 1.0], half)
        w[:half, 1:] = _sphere(rng, half, D - 1) if D > 2 else rng.choice([-1.0, 1.0], (half, 1))
        w[half:, 1:] = _ball(rng, n - half, D - 1)
        return w
    if isinstance(domain, CappedBall):
        c = domain.cap
        out = []
        while sum(len(o) for o in out) < half:
            s = _sphere(rng, n, D)
            out.append(s[s[:, 0] <= c])
        sphere = np.vstack(out)[:half]
        k = n - half
        rim = np.empty((k, D))
        rim[:, 0] = c
        tail = _sphere(rng, k, D - 1) if D > 2 else rng.choice([-1.0, 1.0], (k, 1))
        rim[:, 1:] = np.sqrt(1 - c * c) * tail * rng.random((k, 1)) ** 0.5
        return np.vstack([sphere, rim])
    if isinstance(domain, Simplex):
        verts = np.eye(D)[rng.integers(0, D, half)]
        return np.vstack([verts, rng.dirichlet(np.ones(D), n - half)])
    if isinstance(domain, L1Ball):
        verts = np.eye(D)[rng.integers(0, D, half)] * rng.choice([-1.0, 1.0], (half, 1))
        k = n - half
        inner = rng.dirichlet(np.ones(D), k) * rng.choice([-1.0, 1.0], (k, D)) * rng.random((k, 1))
        return np.vstack([verts, inner])
    if isinstance(domain, Hypercube):
        verts = rng.choice([-1.0, 1.0], (half, D))
        return np.vstack([verts, rng.uniform(-1, 1, (n - half, D))])
    raise TypeError(domain)


def all_domains(D: int) -> list[Domain]:
    return [
        UnitBall(D),
        ShiftedBall(D),
        Cylinder(D),
        CappedBall(D, cap=0.4),
        Simplex(D),
        L1Ball(D),
        Hypercube(D),
    ]


DOMAIN_IDS = ["unit_ball", "shifted_ball", "cylinder", "capped_ball", "simplex", "l1_ball", "hypercube"]


def loss_vectors(dim: int, bound: float = 10.0):
    return hnp.arrays(
        np.float64,
        dim,
        elements=st.floats(-bound, bound, allow_nan=False, allow_infinity=False, width=64),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
