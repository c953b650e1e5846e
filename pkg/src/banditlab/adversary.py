"""Loss-vector models.

The four lower-bound constructions live in R^D with coordinate 0 playing a
special role; their effective dimension is ``d = D - 1``.  The simplex
construction has no special coordinate, so there ``d = D``.

All sampling goes through an explicit ``numpy.random.Generator``; no model
touches global random state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import Domain, as_vector


class SequenceExhausted(RuntimeError):
    pass


class LossModel:
    """Base class for loss distributions and oblivious loss sequences."""

    kind = "loss_model"
    #: scored against the exact mean (True) or realized losses (False)
    stochastic = True
    #: losses are small integers usable on the exact-rational channel
    exact = False

    dim: int

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(rng, 1)[0]

    def sample_batch(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def realization(self) -> str:
        """Short label of the adversary's random draw (sigma or J)."""
        return ""

    def second_moment(self) -> float:
        """``E ||x||_2^2`` when known in closed form."""
        raise NotImplementedError


@dataclass(frozen=True)
class GenericGaussian(LossModel):
    """Independent Gaussian coordinates with given mean and per-coordinate std."""

    mean_vector: tuple[float, ...]
    std: tuple[float, ...]

    kind = "generic_gaussian"

    def __post_init__(self):
        m = as_vector(self.mean_vector)
        s = np.broadcast_to(np.asarray(self.std, dtype=float), m.shape)
        if np.any(s < 0):
            raise ValueError("std must be nonnegative")
        object.__setattr__(self, "mean_vector", tuple(m.tolist()))
        object.__setattr__(self, "std", tuple(s.tolist()))

    @property
    def dim(self) -> int:
        return len(self.mean_vector)

    def mean(self):
        return np.asarray(self.mean_vector)

    def sample_batch(self, rng, n):
        return self.mean() + rng.standard_normal((n, self.dim)) * np.asarray(self.std)

    def second_moment(self):
        return float(np.sum(np.square(self.mean_vector)) + np.sum(np.square(self.std)))


def _sigma_label(sigma: np.ndarray) -> str:
    return "".join("+" if s > 0 else "-" for s in sigma)


def _check_sigma(sigma, d: int) -> np.ndarray:
    s = np.asarray(sigma, dtype=float)
    if s.shape != (d,) or not np.all(np.abs(s) == 1):
        raise ValueError(f"sigma must be a vector in {{-1,+1}}^{d}")
    return s


def draw_sigma(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.integers(0, 2, size=d) * 2.0 - 1.0


class _SignConstruction(LossModel):
    """Shared logic for the sigma-indexed constructions on coordinates 1..d."""

    x0_mean = 0.0
    x0_std = 0.0

    def __init__(self, dim: int, mu: float, sigma: Sequence[float]):
        if dim < 2:
            raise ValueError(f"{self.kind} needs D >= 2")
        self.dim = int(dim)
        self.d = self.dim - 1
        self.sigma = _check_sigma(sigma, self.d)
        self.sigma.setflags(write=False)
        self.mu = float(mu)
        if not 0.0 <= self.mu <= self.mu_cap(self.d) * (1 + 1e-12):
            raise ValueError(f"{self.kind}: mu={mu} exceeds its cap {self.mu_cap(self.d)}")

    @staticmethod
    def mu_cap(d: int) -> float:
        raise NotImplementedError

    def tail_std(self) -> float:
        raise NotImplementedError

    @classmethod
    def draw(cls, dim: int, mu: float, rng: np.random.Generator):
        return cls(dim, mu, draw_sigma(rng, dim - 1))

    def mean(self):
        return np.concatenate([[self.x0_mean], self.mu * self.sigma])

    def sample_batch(self, rng, n):
        x = np.empty((n, self.dim))
        x[:, 0] = self.x0_mean + self.x0_std * rng.standard_normal(n)
        x[:, 1:] = self.mu * self.sigma + self.tail_std() * rng.standard_normal((n, self.d))
        return x

    def second_moment(self):
        m = self.mean()
        return float(m @ m + self.x0_std**2 + self.d * self.tail_std() ** 2)

    def realization(self):
        return _sigma_label(self.sigma)

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, mu={self.mu!r}, sigma={self.realization()})"


class ShiftedBallConstruction(_SignConstruction):
    """x_0 ~ N(0, 1/36); coordinates 1..d fixed at mu * sigma."""

    kind = "shifted_ball_construction"
    x0_std = 1.0 / 6.0

    @staticmethod
    def mu_cap(d):
        return 1.0 / (2.0 * math.sqrt(d))

    def tail_std(self):
        return 0.0


class CylinderConstruction(_SignConstruction):
    """x_0 ~ N(-1/4, 1/16); tail ~ N(mu * sigma, I / (16 d))."""

    kind = "cylinder_construction"
    x0_mean = -0.25
    x0_std = 0.25

    @staticmethod
    def mu_cap(d):
        return 1.0 / (4.0 * math.sqrt(d))

    def tail_std(self):
        return 1.0 / (4.0 * math.sqrt(self.d))


class HypercubeConstruction(_SignConstruction):
    """x_0 ~ N(-1/4, 1/16); tail ~ N(mu * sigma, I / (16 d^2))."""

    kind = "hypercube_construction"
    x0_mean = -0.25
    x0_std = 0.25

    @staticmethod
    def mu_cap(d):
        return 1.0 / (4.0 * d)

    def tail_std(self):
        return 1.0 / (4.0 * self.d)


class SimplexConstruction(LossModel):
    """x ~ N(-mu e_j, I / 4) with ``j`` a 0-based coordinate index."""

    kind = "simplex_construction"

    def __init__(self, dim: int, mu: float, j: int):
        if dim < 2:
            raise ValueError("simplex_construction needs D >= 2")
        if not 0 <= j < dim:
            raise ValueError(f"j must be in [0, {dim}), got {j}")
        if not 0.0 <= mu <= 0.5:
            raise ValueError(f"simplex_construction: mu={mu} exceeds its cap 1/2")
        self.dim = int(dim)
        self.d = self.dim
        self.mu = float(mu)
        self.j = int(j)

    @staticmethod
    def mu_cap(d):
        return 0.5

    @classmethod
    def draw(cls, dim: int, mu: float, rng: np.random.Generator):
        return cls(dim, mu, int(rng.integers(0, dim)))

    def mean(self):
        m = np.zeros(self.dim)
        m[self.j] = -self.mu
        return m

    def sample_batch(self, rng, n):
        x = 0.5 * rng.standard_normal((n, self.dim))
        x[:, self.j] -= self.mu
        return x

    def second_moment(self):
        return self.mu**2 + self.dim / 4.0

    def realization(self):
        return f"J={self.j + 1}"

    def __repr__(self):
        return f"SimplexConstruction(dim={self.dim}, mu={self.mu!r}, j={self.j})"


class BinarySequence(LossModel):
    """An oblivious sequence of loss vectors in {0, 1}^D.

    Either a fixed list, or a ``source(t, rng)`` callback returning the
    t-th vector. The callback must not look at the player's history.
    """

    kind = "binary_sequence"
    stochastic = False
    exact = True

    def __init__(self, dim: int, sequence=None, source: Callable | None = None):
        if (sequence is None) == (source is None):
            raise ValueError("give exactly one of sequence or source")
        self.dim = int(dim)
        self._seq = None
        if sequence is not None:
            arr = np.asarray(sequence, dtype=np.int64).reshape(-1, self.dim)
            if not np.all((arr == 0) | (arr == 1)):
                raise ValueError("binary sequence entries must be 0 or 1")
            self._seq = arr
        self._source = source
        self._t = 0
        self._sum = np.zeros(self.dim, dtype=np.int64)

    @classmethod
    def uniform(cls, dim: int) -> "BinarySequence":
        """I.i.d. uniform bits drawn from the stream passed to ``sample``."""
        return cls(dim, source=lambda t, rng: rng.integers(0, 2, size=dim))

    def sample_batch(self, rng, n):
        if self._seq is not None:
            if self._t + n > len(self._seq):
                raise SequenceExhausted(f"sequence has {len(self._seq)} rounds, asked for {self._t + n}")
            out = self._seq[self._t:self._t + n].copy()
        else:
            out = np.array([self._source(self._t + k, rng) for k in range(n)], dtype=np.int64)
            if out.shape != (n, self.dim) or not np.all((out == 0) | (out == 1)):
                raise ValueError("binary source produced a non-binary vector")
        self._t += n
        self._sum += out.sum(axis=0)
        return out

    def mean(self):
        if self._t == 0:
            return np.zeros(self.dim)
        return self._sum / self._t


@dataclass(frozen=True)
class ShrinkToBounded(LossModel):
    """Scaled inner model with large-norm draws replaced by a fixed clamp vector."""

    inner: LossModel
    domain: Domain
    scale: float
    clamp: tuple[float, ...]
    clamp_probability: float
    calibration_samples: int

    kind = "shrink_to_bounded"

    @property
    def dim(self):
        return self.inner.dim

    def sample_batch(self, rng, n):
        x = self.scale * self.inner.sample_batch(rng, n)
        big = self.domain.dual_norm(x) > 0.5
        if np.any(big):
            x[big] = np.asarray(self.clamp)
        return x

    def mean(self):
        # the clamp value is the conditional mean of the large branch, so
        # clamping preserves the scaled mean
        return self.scale * self.inner.mean()

    def realization(self):
        return self.inner.realization()


def shrink_to_bounded(
    model: LossModel,
    domain: Domain,
    T: int,
    p: float = 8.0,
    calibration_samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> ShrinkToBounded:
    """Wrap ``model`` so every emitted loss has dual norm at most 1.

    Samples are scaled by ``1 / (p sqrt(log T))``.  Draws whose dual norm
    exceeds 1/2 are replaced by ``E[x | ||x||_* >= 1/2]``, estimated once
    here by Monte Carlo.  If no calibration draw is that large the clamp is
    the zero vector.
    """
    if T <= 1:
        raise ValueError("T must exceed 1")
    if p <= 0:
        raise ValueError("p must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    scale = 1.0 / (p * math.sqrt(math.log(T)))
    draws = scale * model.sample_batch(rng, calibration_samples)
    big = domain.dual_norm(draws) >= 0.5
    clamp = draws[big].mean(axis=0) if np.any(big) else np.zeros(model.dim)
    if domain.dual_norm(clamp) > 1.0:
        raise ValueError(
            f"clamp vector has dual norm {domain.dual_norm(clamp):.4g} > 1; increase p"
        )
    return ShrinkToBounded(
        inner=model,
        domain=domain,
        scale=scale,
        clamp=tuple(clamp.tolist()),
        clamp_probability=float(big.mean()),
        calibration_samples=int(calibration_samples),
    )


CONSTRUCTIONS = {
    "shifted_ball": ShiftedBallConstruction,
    "cylinder": CylinderConstruction,
    "simplex": SimplexConstruction,
    "hypercube": HypercubeConstruction,
}


def _construction_key(kind: str) -> str:
    key = kind.removesuffix("_construction")
    if key not in CONSTRUCTIONS:
        raise ValueError(f"unknown construction {kind!r}")
    return key


def effective_dim(kind: str, D: int) -> int:
    """The construction's ``d``: ``D`` for the simplex, ``D - 1`` otherwise."""
    return D if _construction_key(kind) == "simplex" else D - 1


def select_mu(kind: str, d: int, T: int) -> float:
    """Scaling factor mu used by each construction at effective dimension d."""
    key = _construction_key(kind)
    if d < 1 or T < 1:
        raise ValueError("need d >= 1 and T >= 1")
    if key == "shifted_ball":
        if 1.0 / math.sqrt(d) > math.sqrt(d / (144.0 * T)):
            return 0.5 * math.sqrt(d / (144.0 * T))
        return 1.0 / (2.0 * math.sqrt(d))
    if key == "cylinder":
        if T < d**4 / 16:
            raise ValueError(f"cylinder construction needs T >= d^4/16 = {d**4 / 16}")
        return math.sqrt(d / T) / 16.0
    if key == "simplex":
        if T >= d / 4:
            return 0.25 * math.sqrt(d / T)
        return 0.5
    if T < d**4 / 4:
        raise ValueError(f"hypercube construction needs T >= d^4/4 = {d**4 / 4}")
    return 1.0 / (8.0 * math.sqrt(T))


@dataclass
class ValidityReport:
    mean_dual_norm: float
    mean_check_passed: bool
    tail_samples: int
    tail_violations: int
    passed: bool
    #: rows of (z, empirical frequency of ||x||_* > z, allowed frequency)
    tail_table: list[tuple[float, float, float]] = field(default_factory=list)


def check_validity(
    model: LossModel,
    domain: Domain,
    n_samples: int = 1_000_000,
    z_grid: Sequence[float] = (1.0, 1.5, 2.0, 3.0),
    rng: np.random.Generator | None = None,
    chunk: int = 250_000,
) -> ValidityReport:
    """Check ``||E x||_* <= 1`` exactly and the sub-Gaussian tail by sampling."""
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    if any(z < 1 for z in z_grid):
        raise ValueError("tail grid points must be >= 1")
    if model.dim != domain.dim:
        raise ValueError(f"model dim {model.dim} != domain dim {domain.dim}")
    if rng is None:
        rng = np.random.default_rng(0)
    mean_norm = float(domain.dual_norm(model.mean()))
    mean_ok = mean_norm <= 1.0 + 1e-12

    z = np.asarray(z_grid, dtype=float)
    exceed = np.zeros(z.size, dtype=np.int64)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        norms = domain.dual_norm(model.sample_batch(rng, n))
        exceed += (norms[:, None] > z[None, :]).sum(axis=0)
        done += n
    freq = exceed / n_samples
    bound = 2.0 * np.exp(-(z**2) / 2.0)
    allowed = bound + 3.0 * np.sqrt(bound / n_samples)
    violations = int(np.sum(freq > allowed))
    table = [(float(a), float(b), float(c)) for a, b, c in zip(z, freq, allowed)]
    return ValidityReport(
        mean_dual_norm=mean_norm,
        mean_check_passed=mean_ok,
        tail_samples=int(n_samples),
        tail_violations=violations,
        passed=mean_ok and violations == 0,
        tail_table=table,
    )
