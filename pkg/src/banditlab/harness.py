"""Regret and error protocols with deterministic seeding.

Regret on stochastic models is scored with the exact mean loss vector, so a
run's regret carries no sampling noise beyond the player's own behaviour.
Realized losses only drive what the player observes.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .adversary import LossModel
from .geometry import Domain
from .players import Player

CHUNK = 4096
TRAJECTORY_LIMIT = 10_000


class ChannelMismatch(ValueError):
    """An exact-channel player was paired with a floating-point loss model."""


def derive_seed(master_seed: int, dim: int, T: int, repetition: int) -> int:
    """Stable 64-bit seed for one grid cell repetition."""
    key = f"{int(master_seed)}:{int(dim)}:{int(T)}:{int(repetition)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for (loss sampling, player, adversary draw)."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.PCG64(c)) for c in children)


@dataclass
class RunResult:
    T: int
    seed: int | None
    realization: str
    #: per-round <x_bar, w_t> (stochastic) or realized <x_t, w_t> (sequences)
    expected_losses: np.ndarray
    observed: np.ndarray
    #: T * min_w <x_bar, w>, or min_w sum_t <x_t, w> for sequences
    optimum: float
    regret: float
    average_point: np.ndarray
    error: float | None = None
    final_point: np.ndarray | None = None
    points: np.ndarray | None = None
    wall_ms: float = 0.0
    extras: dict = field(default_factory=dict)


def average_iterate(points) -> np.ndarray:
    """Coordinate-wise mean of a nonempty sequence of points."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("need a nonempty sequence of equal-length points")
    return arr.mean(axis=0)


def _check(domain: Domain, model: LossModel, player: Player) -> None:
    if model.dim != domain.dim:
        raise ValueError(f"model dim {model.dim} != domain dim {domain.dim}")
    if player.exact_channel and not model.exact:
        raise ChannelMismatch(
            f"{player.kind} needs the exact-rational loss channel; "
            f"{model.kind} emits floating-point losses"
        )


def run_regret_protocol(
    domain: Domain,
    model: LossModel,
    player: Player,
    T: int,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    keep_points: bool | None = None,
) -> RunResult:
    """Play ``T`` rounds and score the cumulative regret.

    Loss vectors are drawn from ``rng`` (default: the loss stream of
    ``seed``).  Points are stored when ``T <= 10^4`` unless overridden.
    """
    _check(domain, model, player)
    if T < 1:
        raise ValueError("T must be positive")
    if rng is None:
        if seed is None:
            raise ValueError("need a seed or an rng")
        rng = streams(seed)[0]
    if keep_points is None:
        keep_points = T <= TRAJECTORY_LIMIT
    start = time.perf_counter()

    D = domain.dim
    exp_losses = np.empty(T)
    observed = np.empty(T)
    points = np.empty((T, D)) if keep_points else None
    point_sum = np.zeros(D)
    loss_sum = np.zeros(D)
    exact_total = Fraction(0)

    t = 0
    while t < T:
        n = min(CHUNK, T - t)
        if player.oblivious:
            n = player.max_batch(n)
        X = model.sample_batch(rng, n)
        if player.oblivious:
            W = player.choose_batch(n)
            v = np.einsum("ij,ij->i", X, W)
            player.observe_batch(v)
        else:
            W = np.empty((n, D))
            v = np.empty(n)
            for k in range(n):
                w = player.choose()
                if player.exact_channel:
                    loss = sum((wi for wi, xi in zip(w, X[k]) if xi), Fraction(0))
                    exact_total += loss
                else:
                    loss = float(np.dot(X[k], w))
                player.observe(loss, X[k] if player.full_information else None)
                W[k] = [float(wi) for wi in w] if player.exact_channel else w
                v[k] = float(loss)
        observed[t:t + n] = v
        if model.stochastic:
            exp_losses[t:t + n] = W @ model.mean()
        else:
            exp_losses[t:t + n] = v
            loss_sum += X.sum(axis=0)
        point_sum += W.sum(axis=0)
        if keep_points:
            points[t:t + n] = W
        t += n

    if model.stochastic:
        xbar = model.mean()
        optimum = T * float(xbar @ domain.linear_argmin(xbar))
    else:
        optimum = float(loss_sum @ domain.linear_argmin(loss_sum))
    if player.exact_channel:
        regret = float(exact_total - Fraction(optimum))
    else:
        regret = math.fsum(exp_losses) - optimum

    return RunResult(
        T=T,
        seed=seed,
        realization=model.realization(),
        expected_losses=exp_losses,
        observed=observed,
        optimum=optimum,
        regret=regret,
        average_point=point_sum / T,
        points=points,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )


def run_error_protocol(
    domain: Domain,
    model: LossModel,
    player: Player,
    T: int,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    keep_points: bool | None = None,
) -> RunResult:
    """Play ``T`` rounds, then score the suboptimality of a single point.

    The point is the player's ``finalize()`` answer, or the average iterate
    for players without one.
    """
    if not model.stochastic:
        raise ValueError("the error protocol needs a stochastic loss model")
    result = run_regret_protocol(domain, model, player, T, seed=seed, rng=rng, keep_points=keep_points)
    w_hat = player.finalize()
    if w_hat is None:
        w_hat = result.average_point
    xbar = model.mean()
    result.final_point = np.asarray(w_hat, dtype=float)
    result.error = float(xbar @ result.final_point) - result.optimum / T
    return result


@dataclass
class AggregateStats:
    dim: int
    T: int
    repetitions: int
    mean: float
    stderr: float
    q05: float
    q50: float
    q95: float


def aggregate(values, dim: int, T: int) -> AggregateStats:
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ValueError("no successful runs to aggregate")
    stderr = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    q05, q50, q95 = np.quantile(vals, [0.05, 0.5, 0.95])
    return AggregateStats(
        dim=dim,
        T=T,
        repetitions=int(vals.size),
        mean=float(vals.mean()),
        stderr=stderr,
        q05=float(q05),
        q50=float(q50),
        q95=float(q95),
    )
