"""Command-line front end: ``banditlab {run,validate,analyze,selftest}``.

Exit codes: 0 success, 1 runtime failure, 2 invalid config or degenerate
grid, 3 incompatible (domain, adversary, player) triple.  ``validate``
exits 0 only when the distribution passes.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import adversary as adv
from .analysis import fit_scaling, lemma_dw_sweep, lower_bound_reference
from .experiment import (
    ConfigError,
    ExperimentConfig,
    IncompatibleConfig,
    aggregate_csv,
    build_domain,
    build_model,
    default_workers,
    monte_carlo,
    resolve,
    runs_csv,
)
from .players import digit_decode, digit_encode, enumerate_estimator_moments

log = logging.getLogger("banditlab")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_INCOMPATIBLE = 0, 1, 2, 3


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# run


def cmd_run(config_path: str, out: str | None = None, workers: int | None = None,
            seed_override: int | None = None) -> int:
    try:
        raw = _load_json(config_path)
        config = ExperimentConfig.from_dict(raw)
        if seed_override is not None:
            config.master_seed = int(seed_override)
        resolved = resolve(config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IncompatibleConfig as exc:
        print(f"incompatible config: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE

    out_dir = Path(out or config.output_dir or f"results/{config.experiment_id}")
    try:
        rows, stats = monte_carlo(config, workers=workers or default_workers())
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "runs.csv").write_text(runs_csv(config, rows))
        (out_dir / "aggregate.csv").write_text(aggregate_csv(config, stats))
        manifest = config.to_dict()
        manifest["resolved"] = resolved
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except (ConfigError, IncompatibleConfig) as exc:
        print(f"incompatible config: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except Exception as exc:  # noqa: BLE001 - any failure inside a run
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(rows)} runs to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate

_VALIDATE_KEYS = {"domain", "adversary", "T", "n_samples", "seed"}


def cmd_validate(spec: dict, n_samples: int | None = None, seed: int | None = None) -> int:
    """Check an adversary spec for validity on a domain spec.

    ``spec`` holds ``domain`` (with ``dim``), ``adversary``, the horizon
    ``T`` used to resolve ``"auto"`` parameters, and optionally
    ``n_samples`` and ``seed``.
    """
    try:
        unknown = set(spec) - _VALIDATE_KEYS
        if unknown:
            raise ConfigError(f"unknown keys: {sorted(unknown)}")
        dom_spec = dict(spec["domain"])
        if "dim" not in dom_spec:
            raise ConfigError("domain needs 'dim'")
        D = int(dom_spec.pop("dim"))
        domain = build_domain(dom_spec, D)
        T = int(spec.get("T", 1000))
        n = int(n_samples or spec.get("n_samples", 1_000_000))
        rng = np.random.default_rng(int(seed if seed is not None else spec.get("seed", 0)))
        model = build_model(spec["adversary"], D, T, rng, domain)
        report = adv.check_validity(model, domain, n_samples=n, rng=rng)
    except (ConfigError, IncompatibleConfig, KeyError, TypeError, ValueError) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"model: {model!r}")
    print(f"mean_dual_norm: {report.mean_dual_norm:.6f} ({'ok' if report.mean_check_passed else 'exceeds 1'})")
    print(f"{'z':>6} {'freq(||x||_* > z)':>20} {'allowed':>12}")
    for z, freq, allowed in report.tail_table:
        print(f"{z:6.2f} {freq:20.6g} {allowed:12.6g}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# analyze


def _read_aggregates(directory: Path) -> list[dict]:
    rows = []
    for path in sorted(directory.rglob("aggregate*.csv")):
        with open(path, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    return rows


def _overlay(kind: str, D: int, T: int, metric: str):
    if not kind.endswith("_construction"):
        return None
    try:
        return lower_bound_reference(kind, D, T, as_regret=metric == "regret")
    except ValueError:
        return None


def _write_dat(path: Path, header: str, points: list[tuple]) -> None:
    lines = [f"# {header}"]
    for pt in sorted(points):
        lines.append(" ".join("nan" if v is None else repr(float(v)) for v in pt))
    path.write_text("\n".join(lines) + "\n")


def cmd_analyze(directory: str, out: str | None = None) -> int:
    src = Path(directory)
    rows = _read_aggregates(src)
    if not rows:
        print(f"no aggregate CSVs under {src}", file=sys.stderr)
        return EXIT_CONFIG
    cells = [(int(r["dim"]), int(r["T"]), float(r["mean"])) for r in rows]
    try:
        fit = fit_scaling(cells)
    except ValueError as exc:
        print(f"cannot fit: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    dest = Path(out) if out else src
    plots = dest / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    (dest / "fit.json").write_text(json.dumps(fit.to_json(), indent=2, sort_keys=True) + "\n")

    kind = rows[0]["adversary_kind"]
    metric = rows[0].get("metric", "regret")
    has_overlay = kind.endswith("_construction")
    cols = f"mean_{metric}" + (" lower_bound" if has_overlay else "")
    by_d: dict[int, list] = {}
    by_T: dict[int, list] = {}
    for D, T, mean in cells:
        lb = _overlay(kind, D, T, metric)
        by_d.setdefault(D, []).append((T, mean, lb) if has_overlay else (T, mean))
        by_T.setdefault(T, []).append((D, mean, lb) if has_overlay else (D, mean))
    for D, pts in by_d.items():
        _write_dat(plots / f"{metric}_vs_T_d{D}.dat", f"T {cols}", pts)
    for T, pts in by_T.items():
        _write_dat(plots / f"{metric}_vs_d_T{T}.dat", f"dim {cols}", pts)
    print(json.dumps(fit.to_json()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest


def cmd_selftest(seed: int = 0) -> int:
    """Fast exact checks: estimator moments, digit round trips, the lemma grid."""
    from fractions import Fraction

    rng = np.random.default_rng(seed)
    failures = 0
    grid = [Fraction(k, 9) * 2 - 1 for k in range(10)]
    for d in range(2, 9):
        for mu in (Fraction(1, 10), 1 / math.sqrt(d)):
            for _ in range(10):
                x = [grid[i] for i in rng.integers(0, 10, size=d)]
                mean, second = enumerate_estimator_moments(x, mu)
                if mean != x or second != d * sum(v * v for v in x):
                    failures += 1
    print(f"estimator enumeration: {'ok' if failures == 0 else f'{failures} failures'}")

    bad = 0
    for _ in range(1000):
        d = int(rng.integers(2, 7))
        w_hat = rng.dirichlet(np.ones(d))
        x = rng.integers(0, 2, size=d)
        w_prime, _, _ = digit_encode(w_hat, 4)
        loss = sum((w for w, xi in zip(w_prime, x) if xi), Fraction(0))
        bad += not np.array_equal(digit_decode(loss, 4, d), x)
    print(f"digit round trip: {'ok' if bad == 0 else f'{bad} failures'}")

    lemma = lemma_dw_sweep()
    print(f"lemma grid: {'ok' if lemma == 0 else f'{lemma} violations'}")
    ok = failures == 0 and bad == 0 and lemma == 0
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (default: config output_dir)")
    run.add_argument("--workers", type=int, default=None, help="worker processes (default: all CPUs)")
    run.add_argument("--seed-override", type=int, default=None)

    val = sub.add_parser("validate", help="check an adversary for validity on a domain")
    val.add_argument("--config", required=True, help="JSON with domain, adversary and T")
    val.add_argument("--samples", type=int, default=None)
    val.add_argument("--seed-override", type=int, default=None)

    ana = sub.add_parser("analyze", help="fit scaling exponents and emit plot data")
    ana.add_argument("directory")
    ana.add_argument("--out", default=None)

    st = sub.add_parser("selftest", help="run the exact enumeration and grid checks")
    st.add_argument("--seed-override", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.workers, args.seed_override)
    if args.command == "validate":
        try:
            spec = _load_json(args.config)
        except ConfigError as exc:
            print(f"invalid spec: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_validate(spec, args.samples, args.seed_override)
    if args.command == "analyze":
        return cmd_analyze(args.directory, args.out)
    return cmd_selftest(args.seed_override)


if __name__ == "__main__":
    sys.exit(main())
