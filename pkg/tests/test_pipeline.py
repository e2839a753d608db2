"""Orchestration tests: config schema, staged runs, sweeps, determinism."""

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from glvdisc.artifacts import read_csv, read_json
from glvdisc.data import CALIBRATION, VALIDATION
from glvdisc.errors import ConfigurationError, IntegrationError, SweepError
from glvdisc.inference import DramConfig
from glvdisc.models import GenerationConfig
from glvdisc.pipeline import (ExperimentConfig, load_config, run_single,
                              run_sweep, save_config)
from glvdisc.validation import f_gamma


def tiny_config(output_dir, **overrides) -> ExperimentConfig:
    base = dict(
        generation=GenerationConfig(n_species=5),
        reduced_sizes=(2,),
        dram=DramConfig(n_samples=2_000, burn_in=500, thin_to=200),
        ensemble_size=150,
        n_realizations=2,
        output_dir=str(output_dir))
    base.update(overrides)
    return ExperimentConfig(**base)


# ------------------------------------------------------------------ config

def test_default_config_is_valid_and_round_trips():
    cfg = ExperimentConfig()
    assert cfg.generation.n_species == 10
    assert cfg.reduced_sizes == (4,)
    assert cfg.n_calibration == 3 and cfg.n_validation == 3
    assert cfg.n_times == 10
    assert cfg.sigma2_noise == 1e-3
    assert cfg.solver.t_final == 10.0
    assert cfg.ic_range == (0.5, 2.0)
    assert cfg.dram.n_samples == 50_000
    assert cfg.taus == (0.05, 0.01)
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_empty_document_gives_full_defaults():
    assert ExperimentConfig.from_dict({}) == ExperimentConfig()


def test_partial_document_defaults_the_rest():
    cfg = ExperimentConfig.from_dict(
        {"generation": {"n_species": 6}, "reduced_sizes": [2, 3],
         "dram": {"n_samples": 30_000}})
    assert cfg.generation.n_species == 6
    assert cfg.generation.sigma2_offdiag == 1.0
    assert cfg.reduced_sizes == (2, 3)
    assert cfg.dram.n_samples == 30_000
    assert cfg.dram.burn_in == 10_000
    assert cfg.dram.dr_enabled is True
    assert cfg.sigma2_noise == 1e-3


def test_unknown_keys_rejected():
    with pytest.raises(ConfigurationError, match="unknown experiment"):
        ExperimentConfig.from_dict({"n_specie": 5})
    with pytest.raises(ConfigurationError, match="unknown generation"):
        ExperimentConfig.from_dict({"generation": {"species": 5}})
    with pytest.raises(ConfigurationError, match="object of settings"):
        ExperimentConfig.from_dict({"solver": 3})


@pytest.mark.parametrize("bad", [
    {"reduced_sizes": ()},
    {"reduced_sizes": (10,)},
    {"reduced_sizes": (0,)},
    {"n_calibration": 0},
    {"n_times": 0},
    {"sigma2_noise": 0.0},
    {"prior_lower": 0.0},
    {"prior_upper": 0.5},
    {"mode": "imaginary"},
    {"truth_source": "oracle"},
    {"taus": (0.0,)},
    {"taus": ()},
    {"ensemble_size": 50},
    {"n_realizations": 0},
    {"ic_range": (2.0, 0.5)},
    {"complexity_grid": (1,)},
])
def test_config_validation(bad):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(**bad)


def test_config_file_round_trip(tmp_path):
    cfg = ExperimentConfig(reduced_sizes=(3, 5), seed=42,
                           taus=(0.1,), output_dir="elsewhere")
    path = tmp_path / "config.json"
    save_config(cfg, path)
    assert load_config(path) == cfg
    # the file is plain JSON a user can edit
    doc = json.loads(path.read_text())
    assert doc["seed"] == 42


def test_run_hash_ignores_presentation_fields():
    a = ExperimentConfig(output_dir="x", emit_plots=False)
    b = ExperimentConfig(output_dir="y", emit_plots=True)
    c = ExperimentConfig(seed=1)
    assert a.run_hash() == b.run_hash()
    assert a.run_hash() != c.run_hash()


# -------------------------------------------------------------- run_single

@pytest.fixture(scope="module")
def single_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("single")
    cfg = tiny_config(out)
    return cfg, run_single(cfg, 2, realization=0)


def test_single_run_completes_all_stages(single_run):
    _cfg, res = single_run
    assert not res.failed
    assert res.stages_completed == ["generate", "reduce", "observe",
                                    "calibrate", "predict", "validate",
                                    "report"]


def test_single_run_artifacts_on_disk(single_run):
    _cfg, res = single_run
    names = {p.name for p in res.run_dir.iterdir()}
    expected = {"detailed_model.json", "reduced_model.json",
                "observations.json", "observations.csv", "chain.csv",
                "chain.diagnostics.json", "gamma_calibration.csv",
                "gamma_validation.csv", "manifest.json"}
    assert expected <= names
    # one quantile-trajectory file per scenario
    assert sum(n.startswith("trajectory_sc") for n in names) == 6


def test_single_run_manifest(single_run):
    _cfg, res = single_run
    manifest = read_json(res.run_dir / "manifest.json")
    assert all(v == "ok" for v in manifest["stages"].values())
    assert manifest["realization_seed"] == res.seed
    assert "error" not in manifest
    assert manifest["meta"]["package"].startswith("glvdisc ")


def test_single_run_scores_both_partitions(single_run):
    _cfg, res = single_run
    for part in (CALIBRATION, VALIDATION):
        assert res.gamma_reports[part].gammas.shape == (3, 10, 2)
        assert 0.0 <= res.coverage95[part] <= 1.0
        assert res.mse_enriched[part] > 0.0
        assert res.mse_reduced[part] > 0.0


def test_trajectory_files_carry_quantile_bands(single_run):
    _cfg, res = single_run
    path = next(res.run_dir.glob("trajectory_sc*_validation.csv"))
    meta, cols, rows = read_csv(path)
    assert cols == ["time_index", "time", "species", "observed", "truth",
                    "reduced", "pred_mean", "pred_median", "pred_lo50",
                    "pred_hi50", "pred_lo95", "pred_hi95"]
    assert len(rows) == 10 * 2
    for r in rows:
        lo95, hi95 = float(r[10]), float(r[11])
        lo50, hi50 = float(r[8]), float(r[9])
        assert lo95 <= lo50 <= hi50 <= hi95


def test_single_rejects_bad_reduced_size(tmp_path):
    cfg = tiny_config(tmp_path)
    with pytest.raises(ConfigurationError):
        run_single(cfg, 5)


def test_stage_failure_keeps_partial_artifacts(tmp_path, monkeypatch):
    cfg = tiny_config(tmp_path)
    import glvdisc.pipeline as pl

    def boom(*args, **kwargs):
        raise IntegrationError("synthetic calibration failure")

    monkeypatch.setattr(pl, "calibrate", boom)
    res = run_single(cfg, 2)
    assert res.failed and res.failed_stage == "calibrate"
    assert "synthetic calibration failure" in res.error
    manifest = read_json(res.run_dir / "manifest.json")
    assert manifest["failed_stage"] == "calibrate"
    assert manifest["stages"]["observe"] == "ok"
    assert manifest["stages"]["calibrate"] == "failed"
    assert manifest["stages"]["predict"] == "pending"
    assert (res.run_dir / "observations.json").exists()
    assert not (res.run_dir / "chain.csv").exists()


def test_enriched_truth_records_theta(tmp_path):
    cfg = tiny_config(tmp_path, truth_source="enriched")
    res = run_single(cfg, 2)
    assert not res.failed
    assert res.truth_theta is not None and res.truth_theta.shape == (4,)
    assert np.all(res.truth_theta <= 0.0)
    manifest = read_json(res.run_dir / "manifest.json")
    assert manifest["truth_theta"] == [float(v) for v in res.truth_theta]


# --------------------------------------------------------------- run_sweep

def test_sweep_aggregates_and_matches_singles(tmp_path):
    cfg = tiny_config(tmp_path / "sweep")
    sweep = run_sweep(cfg)
    assert sweep.n_failed == 0
    assert sweep.n_jobs == 2
    # 1 reduced size x 2 partitions x 2 taus
    assert len(sweep.f_gamma_rows) == 4
    assert sweep.table_path.exists() and sweep.complexity_path.exists()

    # aggregation over a sweep == aggregation over independent singles
    singles = [run_single(cfg, 2, realization=m, root=tmp_path / "alone")
               for m in range(cfg.n_realizations)]
    for row in sweep.f_gamma_rows:
        reports = [r.gamma_reports[row.partition] for r in singles]
        alone = f_gamma(reports, row.tau)
        assert alone.value == row.value
        assert alone.n_total == row.n_total == 2 * 10 * 3 * 2

    manifest = read_json(sweep.output_dir / "sweep_manifest.json")
    assert manifest["n_excluded"] == 0
    assert manifest["n_completed"] == 2


def test_sweep_table_contents(tmp_path):
    cfg = tiny_config(tmp_path)
    sweep = run_sweep(cfg)
    meta, cols, rows = read_csv(sweep.table_path)
    assert meta["n_excluded"] == "0"
    assert len(rows) == 4
    for r in rows:
        assert r[cols.index("reduced_size")] == "2"
        assert float(r[cols.index("alpha")]) == 2 / 5
    _meta2, cols2, rows2 = read_csv(sweep.complexity_path)
    assert len(rows2) == sum(S - 1 for S in cfg.complexity_grid)


def test_sweep_excludes_failures_below_threshold(tmp_path, monkeypatch):
    cfg = tiny_config(tmp_path, n_realizations=10)
    import glvdisc.pipeline as pl
    real = pl.run_single

    def flaky(config, s, realization=0, root=None):
        res = real(config, s, realization, root)
        if realization == 3:
            res.failed_stage, res.error = "calibrate", "synthetic"
        return res

    monkeypatch.setattr(pl, "run_single", flaky)
    sweep = run_sweep(cfg)
    assert sweep.n_failed == 1
    assert sweep.excluded[0]["realization"] == 3
    assert all(row.n_models == 9 for row in sweep.f_gamma_rows)
    manifest = read_json(sweep.output_dir / "sweep_manifest.json")
    assert manifest["n_excluded"] == 1


def test_sweep_aborts_beyond_failure_budget(tmp_path, monkeypatch):
    cfg = tiny_config(tmp_path, n_realizations=4)
    import glvdisc.pipeline as pl
    real = pl.run_single

    def broken(config, s, realization=0, root=None):
        res = real(config, s, realization, root)
        res.failed_stage, res.error = "observe", "synthetic"
        return res

    monkeypatch.setattr(pl, "run_single", broken)
    with pytest.raises(SweepError, match="4/4"):
        run_sweep(cfg)
    # manifest still written for post-mortems
    manifest = read_json(Path(cfg.output_dir) /
                         f"run-{cfg.run_hash()}" / "sweep_manifest.json")
    assert manifest["n_excluded"] == 4


# ----------------------------------------------------------- determinism

def csv_tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.csv")) + sorted(root.rglob("*.json")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def test_rerun_is_byte_identical(tmp_path):
    cfg_a = tiny_config(tmp_path / "a")
    cfg_b = tiny_config(tmp_path / "b")
    run_sweep(cfg_a)
    run_sweep(cfg_b)
    assert csv_tree_digest(tmp_path / "a") == csv_tree_digest(tmp_path / "b")


def test_parallel_sweep_matches_serial(tmp_path):
    cfg_a = tiny_config(tmp_path / "serial")
    cfg_b = tiny_config(tmp_path / "parallel")
    run_sweep(cfg_a, workers=1)
    run_sweep(cfg_b, workers=2)
    assert csv_tree_digest(tmp_path / "serial") == \
        csv_tree_digest(tmp_path / "parallel")


def test_different_seeds_differ(tmp_path):
    cfg_a = tiny_config(tmp_path / "a")
    cfg_b = tiny_config(tmp_path / "b", seed=1)
    run_single(cfg_a, 2)
    run_single(cfg_b, 2)
    assert csv_tree_digest(tmp_path / "a") != csv_tree_digest(tmp_path / "b")
