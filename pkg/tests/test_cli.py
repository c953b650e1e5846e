import csv
import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from banditlab.cli import main
from banditlab.experiment import (
    ConfigError,
    ExperimentConfig,
    IncompatibleConfig,
    build_run,
    monte_carlo,
    resolve,
)

MINIMAL = {
    "experiment_id": "minimal",
    "domain": {"kind": "unit_ball"},
    "adversary": {"kind": "generic_gaussian", "mean": 0.0, "std": 0.3},
    "player": {"kind": "fixed_point", "point": [1, 0]},
    "grid": {"dims": [2], "T": [10]},
    "repetitions": 1,
    "master_seed": 11,
}


def write(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- config parsing ----------------------------------------------------------------------


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(typo=1),
    lambda c: c.pop("player"),
    lambda c: c.update(grid={"dims": [], "T": [10]}),
    lambda c: c.update(grid={"dims": [2], "T": [10], "reps": 3}),
    lambda c: c.update(repetitions=0),
    lambda c: c.update(protocol="sometimes"),
    lambda c: c.update(master_seed=-1),
    lambda c: c["player"].update(colour="red"),
    lambda c: c.update(adversary={"kind": "generic_gaussian", "mean": 0.0, "scale": 1}),
    lambda c: c.update(player={"kind": "ucb"}),
], ids=["top", "missing", "empty-grid", "grid-key", "reps", "protocol", "seed", "player-key",
        "adversary-key", "player-kind"])
def test_config_fails_closed(mutate):
    cfg = json.loads(json.dumps(MINIMAL))
    mutate(cfg)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(cfg)


def test_config_round_trip():
    cfg = ExperimentConfig.from_dict(MINIMAL)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.cells() == [(2, 10)]


# -- run ---------------------------------------------------------------------------------


def test_minimal_run(tmp_path):
    code = main(["run", "--config", write(tmp_path, MINIMAL), "--out", str(tmp_path / "out"), "--workers", "1"])
    assert code == 0
    rows = read_rows(tmp_path / "out" / "runs.csv")
    assert len(rows) == 1
    assert float(rows[0]["regret"]) == 0.0
    assert list(rows[0]) == [
        "experiment_id", "domain_kind", "dim", "adversary_kind", "player_kind", "T",
        "repetition", "seed", "sigma_or_j", "regret", "error", "wall_ms",
    ]
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["resolved"]["2:10"]["c"] == pytest.approx(0.3 * math.sqrt(2))


def test_run_twice_is_byte_identical(tmp_path):
    cfg = dict(MINIMAL, player={"kind": "corner_estimator", "mu": "auto"}, protocol="error",
               adversary={"kind": "generic_gaussian", "mean": [0.2, -0.1], "std": 0.5},
               grid={"dims": [2, 3], "T": [50, 100]}, repetitions=3)
    cfg["adversary"] = {"kind": "generic_gaussian", "mean": {"norm": 0.3}, "std": 0.5}
    path = write(tmp_path, cfg)
    assert main(["run", "--config", path, "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert main(["run", "--config", path, "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    for name in ("runs.csv", "aggregate.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_rerun_reproduces_outputs(tmp_path):
    cfg = dict(MINIMAL, adversary={"kind": "cylinder_construction", "mu": "auto"},
               domain={"kind": "cylinder"}, player={"kind": "corner_estimator", "commit_after": "auto"},
               grid={"dims": [3], "T": [100, 200]}, repetitions=2)
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    manifest = str(tmp_path / "a" / "manifest.json")
    assert main(["run", "--config", manifest, "--out", str(tmp_path / "b"), "--workers", "1"]) == 0
    for name in ("runs.csv", "aggregate.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    resolved = json.loads((tmp_path / "a" / "manifest.json").read_text())["resolved"]
    assert resolved["3:100"]["mu"] == pytest.approx(math.sqrt(2 / 100) / 16)
    assert resolved["3:100"]["player"]["mu"] == pytest.approx(1 / math.sqrt(2))


def test_seed_override_changes_seeds(tmp_path):
    path = write(tmp_path, MINIMAL)
    main(["run", "--config", path, "--out", str(tmp_path / "a"), "--workers", "1"])
    main(["run", "--config", path, "--out", str(tmp_path / "b"), "--workers", "1", "--seed-override", "99"])
    assert read_rows(tmp_path / "a" / "runs.csv")[0]["seed"] != read_rows(tmp_path / "b" / "runs.csv")[0]["seed"]


def test_digit_decoder_on_gaussian_is_incompatible(tmp_path, capsys):
    cfg = dict(MINIMAL, domain={"kind": "simplex"}, player={"kind": "digit_decoder", "p": "auto"})
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    assert "exact-rational" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("cfg", [
    dict(MINIMAL, player={"kind": "hedge"}),
    dict(MINIMAL, player={"kind": "corner_estimator"}, domain={"kind": "simplex"}),
    dict(MINIMAL, player={"kind": "fixed_point", "point": [2, 0]}),
    dict(MINIMAL, adversary={"kind": "cylinder_construction"}, domain={"kind": "cylinder"},
         grid={"dims": [5], "T": [10]}),
], ids=["hedge-ball", "corner-simplex", "outside", "cylinder-horizon"])
def test_incompatible_triples_exit_3(tmp_path, cfg):
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3


def test_invalid_config_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", write(tmp_path, dict(MINIMAL, extra=1))]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_digit_decoder_run_and_resolved_p(tmp_path):
    cfg = dict(MINIMAL, domain={"kind": "simplex"}, adversary={"kind": "binary_sequence", "source": "uniform"},
               player={"kind": "digit_decoder", "p": "auto"}, grid={"dims": [3], "T": [200]}, repetitions=2)
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o"), "--workers", "1"]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["resolved"]["3:200"]["player"]["p"] == 3
    rows = read_rows(tmp_path / "o" / "runs.csv")
    assert all(float(r["regret"]) <= 2 * math.sqrt(200 * math.log(3)) + 2 for r in rows)


def test_record_timing_fills_wall_ms(tmp_path):
    path = write(tmp_path, dict(MINIMAL, record_timing=True))
    main(["run", "--config", path, "--out", str(tmp_path / "o"), "--workers", "1"])
    assert float(read_rows(tmp_path / "o" / "runs.csv")[0]["wall_ms"]) >= 0


# -- monte carlo ---------------------------------------------------------------------------


def test_repetitions_draw_distinct_sigmas():
    cfg = ExperimentConfig.from_dict(dict(
        MINIMAL, domain={"kind": "cylinder"}, adversary={"kind": "cylinder_construction", "mu": "auto"},
        player={"kind": "fixed_point", "point": "agnostic"}, grid={"dims": [9], "T": [10_000]}, repetitions=2))
    rows, _ = monte_carlo(cfg)
    rows_again, _ = monte_carlo(cfg)
    assert rows[0].realization != rows[1].realization
    assert [r.realization for r in rows] == [r.realization for r in rows_again]


def test_fixed_point_closed_form_aggregate():
    D, T = 4, 10_000
    cfg = ExperimentConfig.from_dict(dict(
        MINIMAL, domain={"kind": "unit_ball"}, adversary={"kind": "cylinder_construction", "mu": "auto"},
        player={"kind": "fixed_point", "point": [1, 0, 0, 0]}, grid={"dims": [D], "T": [T]}, repetitions=8))
    _, stats = monte_carlo(cfg)
    d, a = D - 1, 0.25
    mu = math.sqrt(d / T) / 16
    assert stats[0].mean == pytest.approx(T * (-a + math.sqrt(a * a + d * mu * mu)), abs=1e-9)
    assert stats[0].stderr == pytest.approx(0.0, abs=1e-9)


def test_agnostic_and_optimal_fixed_points():
    base = dict(MINIMAL, domain={"kind": "hypercube"}, adversary={"kind": "hypercube_construction"},
                grid={"dims": [3], "T": [10_000]})
    cfg = ExperimentConfig.from_dict(dict(base, player={"kind": "fixed_point", "point": "agnostic"}))
    _, _, _, model, player = build_run(cfg, 3, 10_000, 0)
    np.testing.assert_array_equal(player.point, (1, 0, 0))
    cfg = ExperimentConfig.from_dict(dict(base, player={"kind": "fixed_point", "point": "optimal"}))
    _, _, _, model, player = build_run(cfg, 3, 10_000, 0)
    np.testing.assert_array_equal(player.point, np.concatenate([[1], -model.sigma]))


def test_resolve_records_auto_values():
    cfg = ExperimentConfig.from_dict(dict(
        MINIMAL, domain={"kind": "simplex"}, adversary={"kind": "simplex_construction"},
        player={"kind": "exp3"}, grid={"dims": [4], "T": [100]}))
    info = resolve(cfg)["4:100"]
    assert info["mu"] == pytest.approx(0.25 * math.sqrt(4 / 100))
    assert set(info["player"]) == {"gamma", "eta", "arms"}


def test_shrink_config_builds():
    cfg = ExperimentConfig.from_dict(dict(
        MINIMAL, domain={"kind": "shifted_ball"},
        adversary={"kind": "shrink_to_bounded", "p": 8, "calibration_samples": 20_000,
                   "inner": {"kind": "shifted_ball_construction", "mu": "auto"}},
        player={"kind": "fixed_point", "point": "agnostic"}, grid={"dims": [3], "T": [1000]}))
    info = resolve(cfg)["3:1000"]
    assert info["scale"] == pytest.approx(1 / (8 * math.sqrt(math.log(1000))))


def test_gaussian_rate_mean():
    cfg = ExperimentConfig.from_dict(dict(
        MINIMAL, adversary={"kind": "generic_gaussian", "mean": {"norm": "rate", "rate_scale": 0.5},
                            "std": {"total": 0.4}},
        player={"kind": "fixed_point", "point": "optimal"}, grid={"dims": [4], "T": [400]}))
    _, _, _, model, _ = build_run(cfg, 4, 400, 0)
    assert np.linalg.norm(model.mean()) == pytest.approx(0.5 * math.sqrt(4 / 400))
    assert math.sqrt(sum(s * s for s in model.std)) == pytest.approx(0.4)


# -- validate ---------------------------------------------------------------------------------


def test_validate_cylinder_auto(tmp_path, capsys):
    spec = {"domain": {"kind": "cylinder", "dim": 5}, "adversary": {"kind": "cylinder_construction", "mu": "auto"},
            "T": 10_000}
    assert main(["validate", "--config", write(tmp_path, spec), "--samples", "100000"]) == 0
    out = capsys.readouterr().out
    mu = math.sqrt(4 / 10_000) / 16
    assert f"mean_dual_norm: {0.25 + 2 * mu:.6f}" in out
    assert "PASS" in out


def test_validate_bad_mean(tmp_path, capsys):
    spec = {"domain": {"kind": "unit_ball", "dim": 2},
            "adversary": {"kind": "generic_gaussian", "mean": [2, 0], "std": 0.1}}
    assert main(["validate", "--config", write(tmp_path, spec), "--samples", "10000"]) != 0
    out = capsys.readouterr().out
    assert "mean_dual_norm: 2.000000" in out and "FAIL" in out


def test_validate_simplex(tmp_path):
    spec = {"domain": {"kind": "simplex", "dim": 4}, "adversary": {"kind": "simplex_construction", "mu": 0.5}}
    assert main(["validate", "--config", write(tmp_path, spec), "--samples", "100000"]) == 0


def test_validate_parse_failure(tmp_path):
    assert main(["validate", "--config", write(tmp_path, {"domain": {"kind": "simplex"}})]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[")
    assert main(["validate", "--config", str(bad)]) == 2


# -- analyze -------------------------------------------------------------------------------


def test_analyze_fit_and_overlays(tmp_path):
    cfg = dict(MINIMAL, domain={"kind": "cylinder"}, adversary={"kind": "cylinder_construction"},
               player={"kind": "fixed_point", "point": "agnostic"},
               grid={"dims": [2, 3, 4], "T": [1000, 10_000, 100_000]}, repetitions=1)
    out = tmp_path / "cyl"
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(out), "--workers", "1"]) == 0
    assert main(["analyze", str(out)]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert set(fit) == {"alpha", "beta", "logC", "r2", "cells"} and fit["cells"] == 9
    lines = (out / "plots" / "regret_vs_T_d4.dat").read_text().splitlines()
    assert lines[0].startswith("# T mean_regret lower_bound")
    for line in lines[1:]:
        T, _, lb = map(float, line.split())
        assert lb == pytest.approx(3 * math.sqrt(T) / 128)
    assert (out / "plots" / "regret_vs_d_T1000.dat").exists()


def test_analyze_degenerate_grid(tmp_path):
    out = tmp_path / "one"
    main(["run", "--config", write(tmp_path, MINIMAL), "--out", str(out), "--workers", "1"])
    assert main(["analyze", str(out)]) == 2
    assert main(["analyze", str(tmp_path / "nothing")]) == 2


# -- selftest and entry point ---------------------------------------------------------------


def test_selftest(capsys):
    assert main(["selftest"]) == 0
    assert "PASS" in capsys.readouterr().out


@pytest.mark.skipif(shutil.which("banditlab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["banditlab", "run", "--config", write(tmp_path, MINIMAL),
                           "--out", str(tmp_path / "o"), "--workers", "1"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "banditlab.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "selftest" in proc.stdout
