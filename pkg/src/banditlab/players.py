"""Player strategies.

A player exposes ``choose()`` and ``observe(loss, x=None)``.  Bandit players
only use the scalar loss; full-information baselines (``Hedge``) also read
the loss vector ``x``.  Players whose plays never depend on feedback set
``oblivious = True`` and additionally implement ``choose_batch`` /
``observe_batch`` so the harness can run them in vectorized chunks.
"""

from __future__ import annotations

import itertools
import math
from decimal import ROUND_DOWN, Decimal
from fractions import Fraction
from typing import Sequence

import numpy as np

from .geometry import Domain, as_vector


class Player:
    kind = "player"
    full_information = False
    exact_channel = False
    oblivious = False

    def choose(self):
        raise NotImplementedError

    def observe(self, loss, x=None) -> None:
        raise NotImplementedError

    def finalize(self):
        """The point returned at the end of the error protocol, if any."""
        return None

    def resolved(self) -> dict:
        """Numeric values of any auto-tuned parameters."""
        return {}


# ---------------------------------------------------------------------------
# corner-sampling estimator


def estimate_loss_vector(v: float, sigma, mu: float) -> np.ndarray:
    """One-round unbiased estimate ``(v / mu) * sigma`` of the loss vector."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return (v / mu) * np.asarray(sigma, dtype=float)


class CornerEstimator(Player):
    """Play ``mu * sigma`` for uniform random signs and average the estimates.

    With ``commit_after = k`` the player stops exploring after k rounds and
    plays the minimizer of the averaged estimate from then on.
    """

    kind = "corner_estimator"
    oblivious = True

    def __init__(
        self,
        domain: Domain,
        rng: np.random.Generator,
        mu: float | None = None,
        commit_after: int | None = None,
    ):
        scale = domain.corner_set_scale()
        if scale is None:
            raise ValueError(f"{domain.kind} contains no scaled sign-vector corners")
        if mu is None:
            mu = scale
        if not 0 < mu <= scale * (1 + 1e-12):
            raise ValueError(f"mu={mu} must lie in (0, {scale}]")
        if commit_after is not None and commit_after < 1:
            raise ValueError("commit_after must be positive")
        self.domain = domain
        self.rng = rng
        self.mu = float(mu)
        self.commit_after = commit_after
        self.estimate_sum = np.zeros(domain.dim)
        self.rounds = 0
        self.committed: np.ndarray | None = None
        self._pending: np.ndarray | None = None

    def _exploring(self) -> bool:
        return self.committed is None

    def max_batch(self, n: int) -> int:
        if self._exploring() and self.commit_after is not None:
            return min(n, self.commit_after - self.rounds)
        return n

    def choose(self):
        return self.choose_batch(1)[0]

    def choose_batch(self, n):
        if not self._exploring():
            self._pending = None
            return np.tile(self.committed, (n, 1))
        sigma = self.rng.integers(0, 2, size=(n, self.domain.dim)) * 2.0 - 1.0
        self._pending = sigma
        return self.mu * sigma

    def observe(self, loss, x=None):
        self.observe_batch(np.array([float(loss)]))

    def observe_batch(self, losses):
        sigma, self._pending = self._pending, None
        if sigma is None:
            return
        losses = np.asarray(losses, dtype=float)
        self.estimate_sum += (losses / self.mu) @ sigma
        self.rounds += len(losses)
        if self.commit_after is not None and self.rounds >= self.commit_after:
            self.committed = self.finalize()

    def finalize(self):
        if self.rounds == 0:
            raise ValueError("no rounds observed")
        return self.domain.linear_argmin(self.estimate_sum / self.rounds)

    def resolved(self):
        return {"mu": self.mu, "commit_after": self.commit_after}


# ---------------------------------------------------------------------------
# exponential weights


def _softmax(logw: np.ndarray) -> np.ndarray:
    z = np.exp(logw - logw.max())
    return z / z.sum()


class Hedge(Player):
    """Full-information exponential weights over the simplex corners.

    Minimizes losses directly: ``w_i <- w_i exp(-eta x_i)``.  Weights are
    kept in log space so they stay positive and finite for long horizons.
    """

    kind = "hedge"
    full_information = True

    def __init__(self, d: int, eta: float | None = None, T: int | None = None):
        if d < 1:
            raise ValueError("d must be positive")
        if eta is None:
            if T is None:
                raise ValueError("need eta or the horizon T")
            eta = math.sqrt(8.0 * math.log(d) / T)
        if eta < 0 or not math.isfinite(eta):
            raise ValueError("eta must be finite and nonnegative")
        self.d = d
        self.eta = float(eta)
        self.log_weights = np.zeros(d)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def choose(self):
        return _softmax(self.log_weights)

    def update(self, x) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,) or not np.all(np.isfinite(x)):
            raise ValueError("loss vector must be finite with length d")
        self.log_weights = self.log_weights - self.eta * x
        # renormalize the log scale; probabilities are unchanged
        self.log_weights -= self.log_weights.max()

    def observe(self, loss, x=None):
        if x is None:
            raise ValueError("Hedge needs the full loss vector")
        self.update(x)

    def resolved(self):
        return {"eta": self.eta}


class Exp3(Player):
    """Bandit exponential weights over a finite arm set.

    Observed losses are clipped to ``[-1, 1]`` and mapped affinely onto
    ``[0, 1]``; the number of clipped rounds is kept in ``clipped``.
    """

    kind = "exp3"

    def __init__(
        self,
        arms: np.ndarray,
        rng: np.random.Generator,
        T: int | None = None,
        gamma: float | None = None,
        eta: float | None = None,
    ):
        arms = np.atleast_2d(np.asarray(arms, dtype=float))
        K = arms.shape[0]
        if K < 2:
            raise ValueError("need at least two arms")
        if gamma is None:
            if T is None:
                raise ValueError("need gamma or the horizon T")
            gamma = min(1.0, math.sqrt(K * math.log(K) / ((math.e - 1) * T)))
        if eta is None:
            eta = gamma / K
        if not 0 < gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        self.arms = arms
        self.rng = rng
        self.K = K
        self.gamma = float(gamma)
        self.eta = float(eta)
        self.log_weights = np.zeros(K)
        self.counts = np.zeros(K, dtype=np.int64)
        self.clipped = 0
        self._last: tuple[int, float] | None = None

    def probabilities(self) -> np.ndarray:
        return (1 - self.gamma) * _softmax(self.log_weights) + self.gamma / self.K

    def choose(self):
        p = self.probabilities()
        i = int(np.searchsorted(np.cumsum(p), self.rng.random() * p.sum(), side="right"))
        i = min(i, self.K - 1)
        self._last = (i, float(p[i]))
        self.counts[i] += 1
        return self.arms[i]

    def observe(self, loss, x=None):
        i, p = self._last
        loss = float(loss)
        if abs(loss) > 1.0:
            self.clipped += 1
            loss = max(-1.0, min(1.0, loss))
        scaled = (loss + 1.0) / 2.0
        self.log_weights[i] -= self.eta * scaled / p
        self.log_weights -= self.log_weights.max()

    def resolved(self):
        return {"gamma": self.gamma, "eta": self.eta, "arms": self.K}


class FixedPoint(Player):
    """Play the same point every round."""

    kind = "fixed_point"
    oblivious = True

    def __init__(self, point):
        self.point = as_vector(point)

    def choose(self):
        return self.point.copy()

    def choose_batch(self, n):
        return np.tile(self.point, (n, 1))

    def max_batch(self, n):
        return n

    def observe(self, loss, x=None):
        pass

    def observe_batch(self, losses):
        pass

    def resolved(self):
        return {"point": self.point.tolist()}


# ---------------------------------------------------------------------------
# digit encoding over the simplex


def _to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    # shortest round-trip decimal, so 0.29 clips to 0.29 rather than 0.28
    return Fraction(repr(float(v)))


def digit_precision(T: int, d: int) -> int:
    """Decimal places ``p`` with ``10^-p <= 1 / (d T)``."""
    if T < 1 or d < 1:
        raise ValueError("need T >= 1 and d >= 1")
    p = 1
    while 10**p < d * T:
        p += 1
    return p


def digit_encode(w_hat, p: int):
    """Perturb a simplex point so its loss reveals a binary loss vector.

    Each entry is truncated to ``p`` decimals and entry ``i`` (1-based)
    gets ``10^-(p+i)`` added.  Returns ``(w_prime, w, l1)`` as exact
    fractions, where ``w = w_prime / l1`` lies on the simplex.
    """
    if p < 1:
        raise ValueError("p must be a positive integer")
    if isinstance(w_hat, np.ndarray):
        w_hat = w_hat.tolist()
    d = len(w_hat)
    if d == 0:
        raise ValueError("empty point")
    if all(isinstance(v, float) for v in w_hat):
        if min(w_hat) < -1e-9 or abs(math.fsum(w_hat) - 1.0) > 1e-9:
            raise ValueError("point is not on the probability simplex")
        # shortest round-trip decimal, truncated exactly at p places
        clipped = [int(Decimal(repr(v)).scaleb(p).to_integral_value(ROUND_DOWN)) for v in w_hat]
    else:
        entries = [_to_fraction(v) for v in w_hat]
        if min(entries) < -Fraction(1, 10**9) or abs(sum(entries) - 1) > Fraction(1, 10**9):
            raise ValueError("point is not on the probability simplex")
        clipped = [math.trunc(v * 10**p) for v in entries]
    scale = 10 ** (p + d)
    # integer numerators over 10^(p+d)
    numer = [c * 10**d + 10 ** (d - i) for i, c in enumerate(clipped, start=1)]
    total = sum(numer)
    w_prime = tuple(Fraction(n, scale) for n in numer)
    w = tuple(Fraction(n, total) for n in numer)
    return w_prime, w, Fraction(total, scale)


def digit_decode(scaled_loss: Fraction, p: int, d: int) -> np.ndarray:
    """Recover ``x`` in {0,1}^d from the exact value ``<x, w_prime>``."""
    n = Fraction(scaled_loss) * 10 ** (p + d)
    if n.denominator != 1:
        raise ValueError("loss is not a multiple of 10^-(p+d); channel was not exact")
    digits = str(n.numerator % 10**d).zfill(d)
    if set(digits) - {"0", "1"}:
        raise ValueError(f"decoded digits {digits!r} are not binary")
    return np.array([int(c) for c in digits], dtype=np.int64)


class DigitDecoder(Player):
    """Bandit player on the simplex that reconstructs binary loss vectors
    from the scalar loss and feeds them to an inner Hedge.

    Requires the exact-rational loss channel.
    """

    kind = "digit_decoder"
    exact_channel = True

    def __init__(self, d: int, T: int, p: int | None = None, eta: float | None = None):
        self.d = d
        self.T = T
        self.p = digit_precision(T, d) if p is None else int(p)
        self.hedge = Hedge(d, eta=eta, T=T)
        self._play = None
        #: per-round exact |<x_t, w_hat_t - w_t>| for the coupling check
        self.coupling_gaps: list[Fraction] = []
        self.decoded: list[np.ndarray] = []
        self.inner_loss = Fraction(0)

    def choose(self):
        w_hat = self.hedge.choose()
        w_prime, w, l1 = digit_encode(w_hat, self.p)
        self._play = (w_hat, w, l1)
        return w

    def observe(self, loss, x=None):
        if not isinstance(loss, (Fraction, int)):
            raise TypeError("DigitDecoder needs an exact rational loss")
        w_hat, w, l1 = self._play
        x_dec = digit_decode(Fraction(loss) * l1, self.p, self.d)
        self.decoded.append(x_dec)
        hedge_loss = sum((Fraction(float(v)) for v, xi in zip(w_hat, x_dec) if xi), Fraction(0))
        self.inner_loss += hedge_loss
        self.coupling_gaps.append(abs(hedge_loss - Fraction(loss)))
        self.hedge.update(x_dec)

    def resolved(self):
        return {"p": self.p, "eta": self.hedge.eta}


def enumerate_estimator_moments(x, mu) -> tuple[list[Fraction], Fraction]:
    """Exact ``E[x_tilde | x]`` and ``E[||x_tilde||^2 | x]`` over all sign vectors.

    ``x`` and ``mu`` are converted to fractions, so the result carries no
    rounding error.  Cost is ``2^d`` terms.
    """
    xs = [_to_fraction(v) for v in x]
    mu = _to_fraction(mu)
    if mu <= 0:
        raise ValueError("mu must be positive")
    d = len(xs)
    mean = [Fraction(0)] * d
    second = Fraction(0)
    for signs in itertools.product((-1, 1), repeat=d):
        v = sum((s * mu * xi for s, xi in zip(signs, xs)), Fraction(0))
        est = [v / mu * s for s in signs]
        mean = [m + e for m, e in zip(mean, est)]
        second += sum(e * e for e in est)
    n = 2**d
    return [m / n for m in mean], second / n
