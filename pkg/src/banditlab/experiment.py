"""Declarative experiment sweeps over (dimension, horizon) grids.

A config is a JSON object::

    {
      "experiment_id": "corner-ball",
      "protocol": "error",
      "domain": {"kind": "unit_ball"},
      "adversary": {"kind": "generic_gaussian", "mean": {"norm": "rate"}, "std": {"total": 0.5}},
      "player": {"kind": "corner_estimator", "mu": "auto"},
      "grid": {"dims": [2, 4], "T": [100, 1000]},
      "repetitions": 200,
      "master_seed": 1
    }

``dims`` are ambient dimensions D.  Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import adversary as adv
from .analysis import lower_bound_reference
from .geometry import Domain, Simplex, domain_from_spec, vertices
from .harness import (
    AggregateStats,
    RunResult,
    aggregate,
    derive_seed,
    run_error_protocol,
    run_regret_protocol,
    streams,
)
from .players import CornerEstimator, DigitDecoder, Exp3, FixedPoint, Hedge, Player


class ConfigError(ValueError):
    """The config does not parse or has invalid values (exit code 2)."""


class IncompatibleConfig(ValueError):
    """Domain, adversary and player cannot be combined (exit code 3)."""


RUN_COLUMNS = [
    "experiment_id", "domain_kind", "dim", "adversary_kind", "player_kind", "T",
    "repetition", "seed", "sigma_or_j", "regret", "error", "wall_ms",
]
AGGREGATE_COLUMNS = [
    "experiment_id", "adversary_kind", "dim", "T", "metric", "repetitions",
    "mean", "stderr", "q05", "q50", "q95", "lower_bound",
]

_TOP_KEYS = {
    "experiment_id", "protocol", "domain", "adversary", "player", "grid",
    "repetitions", "master_seed", "output_dir", "record_timing", "resolved",
}
_ADVERSARY_KEYS = {
    "generic_gaussian": {"mean", "std"},
    "shifted_ball_construction": {"mu", "sigma"},
    "cylinder_construction": {"mu", "sigma"},
    "hypercube_construction": {"mu", "sigma"},
    "simplex_construction": {"mu", "j"},
    "binary_sequence": {"source", "sequence"},
    "shrink_to_bounded": {"inner", "p", "calibration_samples"},
}
_PLAYER_KEYS = {
    "corner_estimator": {"mu", "commit_after"},
    "hedge": {"eta"},
    "exp3": {"gamma", "eta", "arms"},
    "digit_decoder": {"p", "eta"},
    "fixed_point": {"point"},
}


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class ExperimentConfig:
    experiment_id: str
    domain: dict
    adversary: dict
    player: dict
    dims: list[int]
    horizons: list[int]
    repetitions: int = 1
    master_seed: int = 0
    protocol: str = "regret"
    output_dir: str | None = None
    record_timing: bool = False

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _check_keys(raw, _TOP_KEYS, "config")
        for key in ("experiment_id", "domain", "adversary", "player", "grid"):
            if key not in raw:
                raise ConfigError(f"config is missing {key!r}")
        grid = raw["grid"]
        _check_keys(grid, {"dims", "T"}, "grid")
        dims = [int(v) for v in grid.get("dims", [])]
        horizons = [int(v) for v in grid.get("T", [])]
        if not dims or not horizons:
            raise ConfigError("grid needs nonempty 'dims' and 'T'")
        reps = int(raw.get("repetitions", 1))
        if reps < 1:
            raise ConfigError("repetitions must be >= 1")
        protocol = raw.get("protocol", "regret")
        if protocol not in ("regret", "error"):
            raise ConfigError("protocol must be 'regret' or 'error'")
        seed = int(raw.get("master_seed", 0))
        if not 0 <= seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        _check_keys(raw["domain"], {"kind", "params"}, "domain")
        adv_spec = raw["adversary"]
        _check_keys(adv_spec, {"kind"} | _ADVERSARY_KEYS.get(adv_spec.get("kind"), set()), "adversary")
        if adv_spec.get("kind") not in _ADVERSARY_KEYS:
            raise ConfigError(f"unknown adversary kind {adv_spec.get('kind')!r}")
        if adv_spec["kind"] == "shrink_to_bounded":
            inner = adv_spec.get("inner", {})
            _check_keys(inner, {"kind"} | _ADVERSARY_KEYS.get(inner.get("kind"), set()), "adversary.inner")
        pl = raw["player"]
        if pl.get("kind") not in _PLAYER_KEYS:
            raise ConfigError(f"unknown player kind {pl.get('kind')!r}")
        _check_keys(pl, {"kind"} | _PLAYER_KEYS[pl["kind"]], "player")
        return cls(
            experiment_id=str(raw["experiment_id"]),
            domain=raw["domain"],
            adversary=adv_spec,
            player=pl,
            dims=dims,
            horizons=horizons,
            repetitions=reps,
            master_seed=seed,
            protocol=protocol,
            output_dir=raw.get("output_dir"),
            record_timing=bool(raw.get("record_timing", False)),
        )

    def to_dict(self) -> dict:
        out = {
            "experiment_id": self.experiment_id,
            "protocol": self.protocol,
            "domain": self.domain,
            "adversary": self.adversary,
            "player": self.player,
            "grid": {"dims": self.dims, "T": self.horizons},
            "repetitions": self.repetitions,
            "master_seed": self.master_seed,
            "record_timing": self.record_timing,
        }
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        return out

    def cells(self) -> list[tuple[int, int]]:
        return [(D, T) for D in self.dims for T in self.horizons]


# ---------------------------------------------------------------------------
# builders


def build_domain(spec: dict, D: int) -> Domain:
    try:
        return domain_from_spec({"kind": spec.get("kind"), "params": spec.get("params", {})}, dim=D)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _direction(spec, D: int) -> np.ndarray:
    if isinstance(spec, list):
        u = np.asarray(spec, dtype=float)
        if u.shape != (D,):
            raise ConfigError("mean direction has the wrong length")
    elif spec == "ones":
        u = np.ones(D)
    elif spec == "e1":
        u = np.eye(D)[0]
    else:
        raise ConfigError(f"unknown mean direction {spec!r}")
    n = np.linalg.norm(u)
    if n == 0:
        raise ConfigError("mean direction must be nonzero")
    return u / n


def _gaussian(spec: dict, D: int, T: int) -> adv.GenericGaussian:
    mean = spec.get("mean", 0.0)
    if isinstance(mean, dict):
        _check_keys(mean, {"norm", "direction", "rate_scale", "cap"}, "adversary.mean")
        norm = mean.get("norm", 0.0)
        if norm == "rate":
            # mean size matched to the estimation noise of a horizon-T run
            norm = min(float(mean.get("cap", 0.5)), float(mean.get("rate_scale", 1.0)) * math.sqrt(D / T))
        m = float(norm) * _direction(mean.get("direction", "ones"), D)
    elif isinstance(mean, (int, float)):
        m = np.full(D, float(mean))
    else:
        m = np.asarray(mean, dtype=float)
        if m.shape != (D,):
            raise ConfigError("mean has the wrong length")
    std = spec.get("std", 0.0)
    if isinstance(std, dict):
        _check_keys(std, {"total"}, "adversary.std")
        std = float(std["total"]) / math.sqrt(D)
    return adv.GenericGaussian(tuple(m), std if isinstance(std, (int, float)) else tuple(std))


def build_model(spec: dict, D: int, T: int, rng: np.random.Generator, domain: Domain | None = None):
    """Build the loss model for one repetition; sigma / J are drawn from ``rng``."""
    kind = spec.get("kind")
    try:
        if kind == "generic_gaussian":
            return _gaussian(spec, D, T)
        if kind == "binary_sequence":
            if "sequence" in spec:
                return adv.BinarySequence(D, sequence=spec["sequence"])
            if spec.get("source", "uniform") != "uniform":
                raise ConfigError(f"unknown binary source {spec.get('source')!r}")
            return adv.BinarySequence.uniform(D)
        if kind == "shrink_to_bounded":
            if domain is None:
                raise ConfigError("shrink_to_bounded needs the domain")
            inner = build_model(spec["inner"], D, T, rng, domain)
            return adv.shrink_to_bounded(
                inner,
                domain,
                T,
                p=float(spec.get("p", 8.0)),
                calibration_samples=int(spec.get("calibration_samples", 100_000)),
                rng=rng,
            )
        if kind in ("shifted_ball_construction", "cylinder_construction", "hypercube_construction", "simplex_construction"):
            mu = spec.get("mu", "auto")
            if mu == "auto":
                mu = adv.select_mu(kind, adv.effective_dim(kind, D), T)
            cls = {
                "shifted_ball_construction": adv.ShiftedBallConstruction,
                "cylinder_construction": adv.CylinderConstruction,
                "hypercube_construction": adv.HypercubeConstruction,
                "simplex_construction": adv.SimplexConstruction,
            }[kind]
            if kind == "simplex_construction":
                if "j" in spec:
                    return cls(D, float(mu), int(spec["j"]))
                return cls.draw(D, float(mu), rng)
            if "sigma" in spec:
                return cls(D, float(mu), spec["sigma"])
            return cls.draw(D, float(mu), rng)
    except ConfigError:
        raise
    except ValueError as exc:
        raise IncompatibleConfig(str(exc)) from exc
    raise ConfigError(f"unknown adversary kind {kind!r}")


def prior_mean(model) -> np.ndarray:
    """Mean loss vector averaged over the adversary's sigma / J draw."""
    if isinstance(model, adv._SignConstruction):
        m = np.zeros(model.dim)
        m[0] = model.x0_mean
        return m
    if isinstance(model, adv.SimplexConstruction):
        return np.full(model.dim, -model.mu / model.dim)
    if isinstance(model, adv.ShrinkToBounded):
        return model.scale * prior_mean(model.inner)
    return model.mean()


def build_player(spec: dict, domain: Domain, model, T: int, rng: np.random.Generator) -> Player:
    kind = spec.get("kind")
    auto = lambda key: spec.get(key, "auto") in (None, "auto")  # noqa: E731
    try:
        if kind == "corner_estimator":
            commit = spec.get("commit_after")
            if commit == "auto":
                commit = min(T, math.ceil(T ** (2.0 / 3.0)))
            return CornerEstimator(
                domain, rng, mu=None if auto("mu") else float(spec["mu"]),
                commit_after=None if commit is None else int(commit),
            )
        if kind == "hedge":
            if not isinstance(domain, Simplex):
                raise IncompatibleConfig("hedge plays on the simplex only")
            return Hedge(domain.dim, eta=None if auto("eta") else float(spec["eta"]), T=T)
        if kind == "digit_decoder":
            if not isinstance(domain, Simplex):
                raise IncompatibleConfig("digit_decoder plays on the simplex only")
            return DigitDecoder(
                domain.dim, T,
                p=None if auto("p") else int(spec["p"]),
                eta=None if auto("eta") else float(spec["eta"]),
            )
        if kind == "exp3":
            arms = spec.get("arms", "auto")
            arms = vertices(domain) if arms == "auto" else np.asarray(arms, dtype=float)
            return Exp3(
                arms, rng, T=T,
                gamma=None if auto("gamma") else float(spec["gamma"]),
                eta=None if auto("eta") else float(spec["eta"]),
            )
        if kind == "fixed_point":
            point = spec.get("point", "agnostic")
            if point == "agnostic":
                # best point that does not depend on the hidden sigma / J
                point = domain.linear_argmin(prior_mean(model))
            elif point == "optimal":
                point = domain.linear_argmin(model.mean())
            return FixedPoint(point)
    except IncompatibleConfig:
        raise
    except ValueError as exc:
        raise IncompatibleConfig(str(exc)) from exc
    raise ConfigError(f"unknown player kind {kind!r}")


def _check_triple(domain: Domain, model, player: Player) -> None:
    if player.exact_channel and not model.exact:
        raise IncompatibleConfig(
            f"{player.kind} requires the exact-rational loss channel "
            f"(binary_sequence); {model.kind} emits floating-point losses"
        )
    for arm in getattr(player, "arms", ()):
        if not domain.contains(arm, 1e-9):
            raise IncompatibleConfig(f"exp3 arm {arm} lies outside {domain.kind}")
    if isinstance(player, FixedPoint) and not domain.contains(player.point, 1e-9):
        raise IncompatibleConfig("fixed point lies outside the domain")


def build_run(config: ExperimentConfig, D: int, T: int, repetition: int):
    seed = derive_seed(config.master_seed, D, T, repetition)
    loss_rng, player_rng, draw_rng = streams(seed)
    domain = build_domain(config.domain, D)
    model = build_model(config.adversary, D, T, draw_rng, domain)
    if model.dim != D:
        raise IncompatibleConfig("adversary dimension does not match the domain")
    player = build_player(config.player, domain, model, T, player_rng)
    _check_triple(domain, model, player)
    return seed, loss_rng, domain, model, player


def resolve(config: ExperimentConfig) -> dict:
    """Validate every grid cell and record the numeric value of each "auto"."""
    out = {}
    for D, T in config.cells():
        seed, _, domain, model, player = build_run(config, D, T, 0)
        info: dict[str, Any] = {"player": player.resolved()}
        if hasattr(model, "mu"):
            info["mu"] = model.mu
        if isinstance(model, adv.GenericGaussian):
            info["mean"] = list(model.mean_vector)
            info["c"] = math.sqrt(model.second_moment())
        if isinstance(model, adv.ShrinkToBounded):
            info["scale"] = model.scale
            info["clamp_probability"] = model.clamp_probability
        scale = domain.corner_set_scale()
        if scale is not None:
            info["corner_scale"] = scale
        out[f"{D}:{T}"] = info
    return out


# ---------------------------------------------------------------------------
# execution


@dataclass
class RunRow:
    dim: int
    T: int
    repetition: int
    seed: int
    realization: str
    regret: float
    error: float | None
    wall_ms: float


def run_one(config: ExperimentConfig, D: int, T: int, repetition: int) -> RunRow:
    seed, loss_rng, domain, model, player = build_run(config, D, T, repetition)
    protocol = run_error_protocol if config.protocol == "error" else run_regret_protocol
    res: RunResult = protocol(domain, model, player, T, seed=seed, rng=loss_rng, keep_points=False)
    return RunRow(D, T, repetition, seed, res.realization, res.regret, res.error, res.wall_ms)


def _run_task(args) -> RunRow:
    raw, D, T, rep = args
    return run_one(ExperimentConfig.from_dict(raw), D, T, rep)


def monte_carlo(config: ExperimentConfig, workers: int = 1) -> tuple[list[RunRow], list[AggregateStats]]:
    """Run every repetition of every grid cell and aggregate per cell.

    Rows come back sorted by (dim, T, repetition) whatever the worker count.
    The aggregated metric is the error for the error protocol and the
    regret otherwise.
    """
    tasks = [
        (config.to_dict(), D, T, rep)
        for D, T in config.cells()
        for rep in range(config.repetitions)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        rows = [_run_task(t) for t in tasks]
    rows.sort(key=lambda r: (r.dim, r.T, r.repetition))
    stats = []
    for D, T in config.cells():
        cell = [r for r in rows if r.dim == D and r.T == T]
        values = [r.error if config.protocol == "error" else r.regret for r in cell]
        stats.append(aggregate(values, D, T))
    return rows, stats


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def runs_csv(config: ExperimentConfig, rows: list[RunRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUN_COLUMNS)
    for r in rows:
        writer.writerow([
            config.experiment_id, config.domain["kind"], r.dim, config.adversary["kind"],
            config.player["kind"], r.T, r.repetition, r.seed, r.realization,
            _fmt(r.regret), _fmt(r.error), _fmt(r.wall_ms) if config.record_timing else "",
        ])
    return buf.getvalue()


def cell_lower_bound(config: ExperimentConfig, D: int, T: int) -> float | None:
    kind = config.adversary["kind"]
    if kind == "shrink_to_bounded" or not kind.endswith("_construction"):
        return None
    try:
        return lower_bound_reference(kind, D, T, as_regret=config.protocol == "regret")
    except ValueError:
        return None


def aggregate_csv(config: ExperimentConfig, stats: list[AggregateStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGGREGATE_COLUMNS)
    metric = "error" if config.protocol == "error" else "regret"
    for s in stats:
        writer.writerow([
            config.experiment_id, config.adversary["kind"], s.dim, s.T, metric, s.repetitions,
            _fmt(s.mean), _fmt(s.stderr), _fmt(s.q05), _fmt(s.q50), _fmt(s.q95),
            _fmt(cell_lower_bound(config, s.dim, s.T)),
        ])
    return buf.getvalue()


def default_workers() -> int:
    return os.cpu_count() or 1
