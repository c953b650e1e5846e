"""Decision domains for bandit linear optimization.

Every domain is a compact set W in R^D with closed-form membership, linear
minimization, support function and dual norm ``max_{w in W} |<w, x>|``.
The dual norm is defined for non-symmetric domains as well, so it is not
always a norm in the strict sense.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

EPS = 1e-12


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Convert ``x`` to a finite float vector, optionally checking its length."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def _unit(x: np.ndarray) -> np.ndarray:
    """``x / ||x||_2`` without underflow for tiny nonzero ``x``."""
    x = x / np.max(np.abs(x))
    return x / np.linalg.norm(x)


def _sign(x: np.ndarray) -> np.ndarray:
    # np.sign maps 0 -> 0, which is the tie-break we want
    return np.sign(x)


@dataclass(frozen=True)
class Domain:
    """Base class. Subclasses fill in the closed forms."""

    dim: int

    kind = "domain"
    min_dim = 1

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < self.min_dim:
            raise ValueError(f"{self.kind} needs dim >= {self.min_dim}, got {self.dim}")

    # -- queries ---------------------------------------------------------
    def contains(self, w, tol: float = 0.0) -> bool:
        if tol < 0:
            raise ValueError("tol must be nonnegative")
        return bool(self._contains(as_vector(w, self.dim), tol))

    def linear_argmin(self, x) -> np.ndarray:
        """A minimizer of <x, w> over the domain, with deterministic tie-breaks."""
        x = as_vector(x, self.dim)
        if not np.any(x):
            return self.center()
        return self._argmin(x)

    def support(self, y) -> np.ndarray | float:
        """``max_{w in W} <y, w>``; accepts a vector or a stack of row vectors."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: expected {self.dim}, got {y.shape[-1]}")
        out = self._support(y)
        return float(out) if y.ndim == 1 else out

    def dual_norm(self, x) -> np.ndarray | float:
        """``max_{w in W} |<w, x>|``, row-wise for 2-D input."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            as_vector(x, self.dim)
        hi = self.support(x)
        lo = self.support(-x)
        return np.maximum(np.abs(hi), np.abs(lo)) if x.ndim > 1 else max(abs(hi), abs(lo))

    def min_value(self, x) -> float:
        return -self.support(-as_vector(x, self.dim))

    def corner_set_scale(self) -> float | None:
        """Largest mu with every point of {-mu, +mu}^D inside the domain."""
        return None

    def center(self) -> np.ndarray:
        return np.zeros(self.dim)

    # -- serialization ---------------------------------------------------
    def params(self) -> dict[str, Any]:
        return {}

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim, "params": self.params()}

    # -- hooks -----------------------------------------------------------
    def _contains(self, w: np.ndarray, tol: float) -> bool:
        raise NotImplementedError

    def _argmin(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _support(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class UnitBall(Domain):
    kind = "unit_ball"

    def _contains(self, w, tol):
        return np.linalg.norm(w) <= 1.0 + tol

    def _argmin(self, x):
        return -_unit(x)

    def _support(self, y):
        return np.linalg.norm(y, axis=-1)

    def corner_set_scale(self):
        return 1.0 / np.sqrt(self.dim)


@dataclass(frozen=True)
class ShiftedBall(Domain):
    """Unit Euclidean ball translated by ``shift`` (default ``(2, 0, ..., 0)``)."""

    shift: tuple[float, ...] | None = None

    kind = "shifted_ball"
    min_dim = 2

    def __post_init__(self):
        super().__post_init__()
        if self.shift is None:
            a = np.zeros(self.dim)
            a[0] = 2.0
            object.__setattr__(self, "shift", tuple(a))
        else:
            a = as_vector(self.shift, self.dim)
            object.__setattr__(self, "shift", tuple(float(v) for v in a))

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.shift, dtype=float)

    def center(self):
        return self.a.copy()

    def _contains(self, w, tol):
        return np.linalg.norm(w - self.a) <= 1.0 + tol

    def _argmin(self, x):
        return self.a - _unit(x)

    def _support(self, y):
        return y @ self.a + np.linalg.norm(y, axis=-1)

    def params(self):
        return {"shift": list(self.shift)}


@dataclass(frozen=True)
class Cylinder(Domain):
    """``[-1, 1] x {u in R^(D-1) : ||u||_2 <= 1}``."""

    kind = "cylinder"
    min_dim = 2

    def _contains(self, w, tol):
        return abs(w[0]) <= 1.0 + tol and np.linalg.norm(w[1:]) <= 1.0 + tol

    def _argmin(self, x):
        w = np.zeros(self.dim)
        w[0] = -_sign(x[0])
        if np.any(x[1:]):
            w[1:] = -_unit(x[1:])
        return w

    def _support(self, y):
        return np.abs(y[..., 0]) + np.linalg.norm(y[..., 1:], axis=-1)

    def corner_set_scale(self):
        return min(1.0, 1.0 / np.sqrt(self.dim - 1))


@dataclass(frozen=True)
class CappedBall(Domain):
    """Unit ball cut by the half-space ``w_0 <= cap``."""

    cap: float = 0.5

    kind = "capped_ball"
    min_dim = 2

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.cap < 1.0:
            raise ValueError(f"cap must lie strictly in (0, 1), got {self.cap}")

    def _contains(self, w, tol):
        return np.linalg.norm(w) <= 1.0 + tol and w[0] <= self.cap + tol

    def _argmin(self, x):
        w = -_unit(x)
        if w[0] <= self.cap:
            return w
        # the cap binds: optimum sits on the rim of the flat face
        out = np.zeros(self.dim)
        out[0] = self.cap
        if np.any(x[1:]):
            out[1:] = -np.sqrt(1.0 - self.cap**2) * _unit(x[1:])
        return out

    def _support(self, y):
        c = self.cap
        norm = np.linalg.norm(y, axis=-1)
        tail = np.linalg.norm(y[..., 1:], axis=-1)
        y0 = y[..., 0]
        # the ball maximizer y/||y|| is feasible iff y0 <= c ||y||
        capped = c * y0 + np.sqrt(1.0 - c * c) * tail
        return np.where(y0 <= c * norm, norm, capped)

    def corner_set_scale(self):
        return min(self.cap, 1.0 / np.sqrt(self.dim))

    def params(self):
        return {"cap": self.cap}


@dataclass(frozen=True)
class Simplex(Domain):
    kind = "simplex"

    def center(self):
        return np.full(self.dim, 1.0 / self.dim)

    def _contains(self, w, tol):
        return bool(np.all(w >= -tol)) and abs(w.sum() - 1.0) <= tol

    def _argmin(self, x):
        w = np.zeros(self.dim)
        w[int(np.argmin(x))] = 1.0
        return w

    def _support(self, y):
        return np.max(y, axis=-1)


@dataclass(frozen=True)
class L1Ball(Domain):
    kind = "l1_ball"

    def _contains(self, w, tol):
        return np.abs(w).sum() <= 1.0 + tol

    def _argmin(self, x):
        j = int(np.argmax(np.abs(x)))
        w = np.zeros(self.dim)
        w[j] = -_sign(x[j])
        return w

    def _support(self, y):
        return np.max(np.abs(y), axis=-1)

    def corner_set_scale(self):
        return 1.0 / self.dim


@dataclass(frozen=True)
class Hypercube(Domain):
    """The convex cube ``[-1, 1]^D``."""

    kind = "hypercube"

    def _contains(self, w, tol):
        return bool(np.all(np.abs(w) <= 1.0 + tol))

    def _argmin(self, x):
        return -_sign(x)

    def _support(self, y):
        return np.abs(y).sum(axis=-1)

    def corner_set_scale(self):
        return 1.0


DOMAINS: dict[str, type[Domain]] = {
    cls.kind: cls
    for cls in (UnitBall, ShiftedBall, Cylinder, CappedBall, Simplex, L1Ball, Hypercube)
}


def domain_from_spec(spec: dict[str, Any], dim: int | None = None) -> Domain:
    """Build a domain from ``{"kind": ..., "dim": D, "params": {...}}``.

    ``dim`` fills in (or must agree with) the spec's dimension.
    """
    spec = dict(spec)
    unknown = set(spec) - {"kind", "dim", "params"}
    if unknown:
        raise ValueError(f"unknown domain keys: {sorted(unknown)}")
    kind = spec.get("kind")
    if kind not in DOMAINS:
        raise ValueError(f"unknown domain kind {kind!r}; choose from {sorted(DOMAINS)}")
    D = spec.get("dim", dim)
    if D is None:
        raise ValueError("domain dimension missing")
    if dim is not None and D != dim:
        raise ValueError(f"domain dim {D} disagrees with grid dim {dim}")
    params = dict(spec.get("params") or {})
    cls = DOMAINS[kind]
    allowed = {"shift"} if cls is ShiftedBall else {"cap"} if cls is CappedBall else set()
    if set(params) - allowed:
        raise ValueError(f"unknown params for {kind}: {sorted(set(params) - allowed)}")
    if "shift" in params:
        params["shift"] = tuple(params["shift"])
    return cls(int(D), **params)


def vertices(domain: Domain) -> np.ndarray:
    """A finite set of extreme points used as arms by finite-action players."""
    D = domain.dim
    eye = np.eye(D)
    if isinstance(domain, Simplex):
        return eye
    if isinstance(domain, Hypercube):
        if D > 12:
            raise ValueError("too many hypercube corners to enumerate (D > 12)")
        grid = np.array(np.meshgrid(*[[-1.0, 1.0]] * D, indexing="ij"))
        return grid.reshape(D, -1).T
    if isinstance(domain, Cylinder):
        arms = []
        for s0 in (1.0, -1.0):
            for j in range(1, D):
                for sj in (1.0, -1.0):
                    w = np.zeros(D)
                    w[0] = s0
                    w[j] = sj
                    arms.append(w)
        return np.array(arms)
    if isinstance(domain, ShiftedBall):
        return np.vstack([domain.a + eye, domain.a - eye])
    if isinstance(domain, CappedBall):
        arms = np.vstack([eye, -eye])
        arms[0, 0] = domain.cap
        return arms
    return np.vstack([eye, -eye])
