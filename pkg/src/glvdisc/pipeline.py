"""Experiment orchestration: seeded single runs and aggregating sweeps.

A single run stages one realization end to end -- generate a detailed
model, carve out the reduced model, synthesize noisy observations,
calibrate the discrepancy parameters against the calibration scenarios,
push the posterior through the enriched model, and score every observation
coordinate with a gamma-value -- writing each stage artifact under one run
directory.  A sweep fans independent seeded realizations (crossed with the
configured reduced sizes) over a worker pool and aggregates the
per-coordinate gamma-values into fraction-below-threshold tables.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .artifacts import config_hash, standard_meta, write_csv, write_json
from .data import (CALIBRATION, VALIDATION, ObservationSet,
                   default_observation_times, observations_to_csv,
                   sample_scenarios, save_observations,
                   synthesize_observations)
from .dynamics import DiscrepancyParams, SolverConfig, State, integrate
from .errors import ConfigurationError, SweepError
from .inference import (DramConfig, PosteriorChain, PredictiveEnsemble,
                        PriorSpec, calibrate, initial_theta,
                        posterior_predictive, save_chain)
from .models import (GenerationConfig, ReducedModel, check_stability,
                     generate_detailed, save_model, subsample_reduced)
from .rng import STREAM_MODEL, STREAM_NOISE, derive_seed, make_rng
from .validation import (GammaReport, complexity_table_to_csv, compute_gammas,
                         f_gamma, f_gamma_table_to_csv, gamma_report_to_csv)

_log = logging.getLogger("glvdisc.pipeline")

TRUTH_DETAILED = "detailed"
TRUTH_ENRICHED = "enriched"

_STAGES = ("generate", "reduce", "observe", "calibrate", "predict",
           "validate", "report")


def _check_keys(doc: dict, cls, label: str) -> None:
    unknown = set(doc) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigurationError(
            f"unknown {label} config keys: {sorted(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs, with reported defaults throughout.

    ``generation.seed`` is a placeholder: runs derive one seed per
    realization from the top-level master ``seed``, so the same config can
    drive many independent model realizations.
    """

    generation: GenerationConfig = field(default_factory=GenerationConfig)
    reduced_sizes: tuple[int, ...] = (4,)
    n_calibration: int = 3
    n_validation: int = 3
    ic_range: tuple[float, float] = (0.5, 2.0)
    solver: SolverConfig = field(default_factory=SolverConfig)
    n_times: int = 10
    sigma2_noise: float = 1e-3
    dram: DramConfig = field(default_factory=DramConfig)
    prior_lower: float = -100.0
    prior_upper: float = 0.0
    mode: str = "explicit"
    truth_source: str = TRUTH_DETAILED
    taus: tuple[float, ...] = (0.05, 0.01)
    ensemble_size: int = 2_000
    n_realizations: int = 20
    complexity_grid: tuple[int, ...] = (10, 20, 50, 100)
    seed: int = 0
    output_dir: str = "runs"
    emit_plots: bool = False

    def __post_init__(self):
        coerce = {"reduced_sizes": tuple(int(s) for s in self.reduced_sizes),
                  "ic_range": tuple(float(v) for v in self.ic_range),
                  "taus": tuple(float(t) for t in self.taus),
                  "complexity_grid": tuple(int(v)
                                           for v in self.complexity_grid)}
        for name, value in coerce.items():
            object.__setattr__(self, name, value)
        self.generation.validate()
        S = self.generation.n_species
        if not self.reduced_sizes or not all(
                1 <= s <= S - 1 for s in self.reduced_sizes):
            raise ConfigurationError(
                f"reduced sizes must lie in [1, {S - 1}]; "
                f"got {self.reduced_sizes}")
        if len(self.ic_range) != 2 or not 0.0 < self.ic_range[0] <= self.ic_range[1]:
            raise ConfigurationError(f"bad ic_range {self.ic_range}")
        if self.n_calibration < 1 or self.n_validation < 1:
            raise ConfigurationError(
                "need at least one calibration and one validation scenario")
        if self.n_times < 1:
            raise ConfigurationError("n_times must be positive")
        if not self.sigma2_noise > 0.0 or not np.isfinite(self.sigma2_noise):
            raise ConfigurationError("sigma2_noise must be positive finite")
        if not (self.prior_lower < self.prior_upper <= 0.0):
            raise ConfigurationError(
                "prior bounds must satisfy lower < upper <= 0")
        if self.mode not in ("explicit", "implicit"):
            raise ConfigurationError(f"unknown enrichment mode {self.mode!r}")
        if self.truth_source not in (TRUTH_DETAILED, TRUTH_ENRICHED):
            raise ConfigurationError(
                f"unknown truth source {self.truth_source!r}")
        if not self.taus or not all(0.0 < t < 1.0 for t in self.taus):
            raise ConfigurationError(f"thresholds must lie in (0,1): {self.taus}")
        if self.ensemble_size < 100:
            raise ConfigurationError("ensemble_size must be at least 100")
        if self.n_realizations < 1:
            raise ConfigurationError("n_realizations must be positive")
        if any(v < 2 for v in self.complexity_grid):
            raise ConfigurationError("complexity grid sizes must be >= 2")

    @property
    def n_scenarios(self) -> int:
        return self.n_calibration + self.n_validation

    def prior(self, reduced_size: int) -> PriorSpec:
        n = 2 * reduced_size
        return PriorSpec(np.full(n, self.prior_lower),
                         np.full(n, self.prior_upper))

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        for key in ("reduced_sizes", "ic_range", "taus", "complexity_grid"):
            doc[key] = list(doc[key])
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        _check_keys(doc, cls, "experiment")
        sub = {"generation": GenerationConfig, "solver": SolverConfig,
               "dram": DramConfig}
        kwargs = {}
        for key, value in doc.items():
            if key in sub:
                if not isinstance(value, dict):
                    raise ConfigurationError(
                        f"{key} must be an object of settings")
                _check_keys(value, sub[key], key)
                kwargs[key] = sub[key](**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def run_hash(self) -> str:
        doc = self.to_dict()
        for presentation in ("output_dir", "emit_plots"):
            doc.pop(presentation)
        return config_hash(doc)


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        doc = json.load(fh)
    return ExperimentConfig.from_dict(doc)


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class RunResult:
    """Outcome of one (reduced size, realization) pipeline run."""

    run_dir: Path
    reduced_size: int
    realization: int
    seed: int
    failed_stage: str | None = None
    error: str | None = None
    stages_completed: list[str] = field(default_factory=list)
    truth_theta: np.ndarray | None = None
    gamma_reports: dict[str, GammaReport] = field(default_factory=dict)
    coverage95: dict[str, float] = field(default_factory=dict)
    mse_reduced: dict[str, float] = field(default_factory=dict)
    mse_enriched: dict[str, float] = field(default_factory=dict)
    chain: PosteriorChain | None = None

    @property
    def failed(self) -> bool:
        return self.failed_stage is not None


def enriched_truth_observations(reduced: ReducedModel, theta: np.ndarray,
                                scenarios, obs_times: np.ndarray,
                                sigma2_noise: float, seed: int,
                                solver: SolverConfig,
                                mode: str) -> ObservationSet:
    """Observations whose truth is the enriched family itself at theta.

    Mirrors the detailed-truth synthesis (same noise streams keyed by
    scenario id) so model-is-truth harnesses differ only in the trajectory
    source.
    """
    params = DiscrepancyParams.from_vector(theta)
    truth = np.empty((len(scenarios), obs_times.shape[0], reduced.size))
    for k, sc in enumerate(scenarios):
        traj = integrate(reduced, State(sc.initial_observed), obs_times,
                         solver=solver, params=params, mode=mode)
        truth[k] = traj.states
    noise_sd = np.sqrt(sigma2_noise)
    values = np.empty_like(truth)
    for k, sc in enumerate(scenarios):
        rng = make_rng(seed, STREAM_NOISE, sc.id)
        values[k] = truth[k] + noise_sd * rng.standard_normal(truth[k].shape)
    return ObservationSet(times=obs_times, values=values, truth=truth,
                          sigma2_noise=sigma2_noise, scenarios=list(scenarios))


def _partition_slice(ensemble: PredictiveEnsemble,
                     observations: ObservationSet,
                     partition: str) -> tuple[PredictiveEnsemble,
                                              ObservationSet]:
    idx = [k for k, sc in enumerate(observations.scenarios)
           if sc.partition == partition]
    sub_obs = observations.restrict(partition)
    sub_ens = PredictiveEnsemble(
        times=ensemble.times,
        scenarios=[ensemble.scenarios[k] for k in idx],
        model_outputs=ensemble.model_outputs[:, idx],
        replicates=ensemble.replicates[:, idx],
        sigma2_noise=ensemble.sigma2_noise,
        n_dropped=ensemble.n_dropped)
    return sub_ens, sub_obs


def _scenario_table(run_dir: Path, observations: ObservationSet,
                    reduced_states: np.ndarray,
                    ensemble: PredictiveEnsemble, meta: dict,
                    emit_plots: bool) -> None:
    """Per-scenario quantile-trajectory CSVs (and optional SVG plots)."""
    bands = ensemble.quantile_bands((0.5, 0.95))
    lo50, hi50 = bands[0.5]
    lo95, hi95 = bands[0.95]
    median = np.quantile(ensemble.replicates, 0.5, axis=0)
    mean = ensemble.model_outputs.mean(axis=0)
    columns = ["time_index", "time", "species", "observed", "truth",
               "reduced", "pred_mean", "pred_median", "pred_lo50",
               "pred_hi50", "pred_lo95", "pred_hi95"]
    for k, sc in enumerate(observations.scenarios):
        rows = []
        for j, t in enumerate(observations.times):
            for i in range(observations.n_observed):
                rows.append([j, repr(float(t)), i,
                             repr(float(observations.values[k, j, i])),
                             repr(float(observations.truth[k, j, i])),
                             repr(float(reduced_states[k, j, i])),
                             repr(float(mean[k, j, i])),
                             repr(float(median[k, j, i])),
                             repr(float(lo50[k, j, i])),
                             repr(float(hi50[k, j, i])),
                             repr(float(lo95[k, j, i])),
                             repr(float(hi95[k, j, i]))])
        sc_meta = dict(meta, scenario=sc.id, partition=sc.partition)
        stem = f"trajectory_sc{sc.id:02d}_{sc.partition}"
        write_csv(run_dir / f"{stem}.csv", columns, rows, sc_meta)
        if emit_plots:
            from .plots import scenario_band_plot
            scenario_band_plot(
                run_dir / f"{stem}.svg", observations.times,
                observed=observations.values[k], truth=observations.truth[k],
                reduced=reduced_states[k], median=median[k],
                lo95=lo95[k], hi95=hi95[k],
                title=f"scenario {sc.id} ({sc.partition})")


def run_single(config: ExperimentConfig, s: int, realization: int = 0,
               root: str | Path | None = None) -> RunResult:
    """One full pipeline pass for reduced size ``s`` and one realization.

    Artifacts land under ``<output_dir>/run-<hash>/s<s>-m<realization>/``.
    Any stage failure keeps the artifacts written so far and records the
    failure in the run manifest instead of raising.
    """
    S = config.generation.n_species
    if not 1 <= s <= S - 1:
        raise ConfigurationError(f"reduced size {s} outside [1, {S - 1}]")
    run_root = Path(root) if root is not None else Path(config.output_dir)
    run_dir = run_root / f"run-{config.run_hash()}" / \
        f"s{s:02d}-m{realization:03d}"
    run_dir.mkdir(parents=True, exist_ok=True)
    seed_r = derive_seed(config.seed, realization)
    result = RunResult(run_dir=run_dir, reduced_size=s,
                       realization=realization, seed=seed_r)
    meta = standard_meta(config=config.run_hash(), reduced_size=s,
                         realization=realization, master_seed=config.seed,
                         realization_seed=seed_r)
    manifest: dict = {"reduced_size": s, "realization": realization,
                      "master_seed": config.seed, "realization_seed": seed_r,
                      "truth_source": config.truth_source,
                      "stages": {name: "pending" for name in _STAGES}}
    obs_times = default_observation_times(config.solver.t_final,
                                          config.n_times)
    stage = "generate"
    try:
        detailed = generate_detailed(
            dataclasses.replace(config.generation, seed=seed_r))
        stability = check_stability(detailed)
        if not stability.passed:
            raise ConfigurationError(
                f"generated model failed structural checks: {stability}")
        save_model(detailed, run_dir / "detailed_model.json")
        manifest["stability_margin"] = stability.min_dominance_margin
        result.stages_completed.append(stage)
        manifest["stages"][stage] = "ok"

        stage = "reduce"
        reduced = subsample_reduced(detailed, s)
        save_model(reduced, run_dir / "reduced_model.json")
        result.stages_completed.append(stage)
        manifest["stages"][stage] = "ok"

        stage = "observe"
        scenarios = sample_scenarios(
            config.n_scenarios, config.n_calibration, n_observed=s,
            n_species=S, ic_range=config.ic_range, seed=seed_r)
        if config.truth_source == TRUTH_ENRICHED:
            theta_star = initial_theta(config.prior(s),
                                       make_rng(seed_r, STREAM_MODEL, 1))
            result.truth_theta = theta_star
            manifest["truth_theta"] = [float(v) for v in theta_star]
            observations = enriched_truth_observations(
                reduced, theta_star, scenarios, obs_times,
                config.sigma2_noise, seed_r, config.solver, config.mode)
        else:
            observations = synthesize_observations(
                detailed, scenarios, obs_times,
                sigma2_noise=config.sigma2_noise, seed=seed_r,
                solver=config.solver)
        save_observations(observations, run_dir / "observations.json",
                          meta=meta)
        observations_to_csv(observations, run_dir / "observations.csv",
                            meta=meta)
        result.stages_completed.append(stage)
        manifest["stages"][stage] = "ok"

        stage = "calibrate"
        chain, _likelihood = calibrate(
            reduced, observations.restrict(CALIBRATION),
            prior=config.prior(s), config=config.dram,
            solver=config.solver, mode=config.mode, seed=seed_r)
        result.chain = chain
        save_chain(chain, run_dir / "chain.csv", meta=meta)
        manifest["acceptance_rate"] = chain.accept_overall
        result.stages_completed.append(stage)
        manifest["stages"][stage] = "ok"

        stage = "predict"
        ensemble = posterior_predictive(
            chain, reduced, observations.scenarios, obs_times,
            config.sigma2_noise, n_draws=config.ensemble_size, seed=seed_r,
            solver=config.solver, mode=config.mode)
        manifest["predictive_draws"] = ensemble.n_draws
        manifest["predictive_dropped"] = ensemble.n_dropped
        result.stages_completed.append(stage)
        manifest["stages"][stage] = "ok"

        stage = "validate"
        reduced_states = np.empty_like(observations.truth)
        for k, sc in enumerate(observations.scenarios):
            traj = integrate(reduced, State(sc.initial_observed), obs_times,
                             solver=config.solver)
            reduced_states[k] = traj.states
        lo95, hi95 = ensemble.quantile_bands((0.95,))[0.95]
        pred_mean = ensemble.model_outputs.mean(axis=0)
        for partition in (CALIBRATION, VALIDATION):
            sub_ens, sub_obs = _partition_slice(ensemble, observations,
                                                partition)
            report = compute_gammas(sub_ens, sub_obs, detailed_size=S,
                                    realization=realization)
            result.gamma_reports[partition] = report
            gamma_report_to_csv(report, run_dir / f"gamma_{partition}.csv",
                                meta=dict(meta, partition=partition))
            idx = [k for k, sc in enumerate(observations.scenarios)
                   if sc.partition == partition]
            obs_p = observations.values[idx]
            inside = (obs_p >= lo95[idx]) & (obs_p <= hi95[idx])
            result.coverage95[partition] = float(inside.mean())
            result.mse_enriched[partition] = float(
                np.mean((obs_p - pred_mean[idx]) ** 2))
            result.mse_reduced[partition] = float(
                np.mean((obs_p - reduced_states[idx]) ** 2))
        manifest["coverage95"] = result.coverage95
        manifest["mse_reduced"] = result.mse_reduced
        manifest["mse_enriched"] = result.mse_enriched
        result.stages_completed.append(stage)
        manifest["stages"][stage] = "ok"

        stage = "report"
        _scenario_table(run_dir, observations, reduced_states, ensemble,
                        meta, config.emit_plots)
        result.stages_completed.append(stage)
        manifest["stages"][stage] = "ok"
    except Exception as exc:  # noqa: BLE001 - stage isolation by design
        result.failed_stage = stage
        result.error = f"{type(exc).__name__}: {exc}"
        manifest["stages"][stage] = "failed"
        manifest["failed_stage"] = stage
        manifest["error"] = result.error
        _log.warning("run s=%d m=%d failed at %s: %s", s, realization,
                     stage, result.error)
    write_json(run_dir / "manifest.json", manifest, meta=meta)
    return result


def _sweep_job(args: tuple) -> RunResult:
    config, s, realization = args
    return run_single(config, s, realization)


@dataclass
class SweepResult:
    """Aggregated sweep outcome plus the table artifact locations."""

    output_dir: Path
    results: list[RunResult]
    f_gamma_rows: list
    n_jobs: int
    n_failed: int
    excluded: list[dict]

    @property
    def table_path(self) -> Path:
        return self.output_dir / "f_gamma_table.csv"

    @property
    def complexity_path(self) -> Path:
        return self.output_dir / "complexity_table.csv"


def run_sweep(config: ExperimentConfig, workers: int = 1) -> SweepResult:
    """All (reduced size, realization) runs plus aggregate tables.

    Individual run failures are logged and excluded from aggregation; the
    sweep manifest records the exclusions.  More than 10% failures aborts
    with a sweep error (the per-run artifacts stay on disk).
    """
    jobs = [(config, s, m) for s in config.reduced_sizes
            for m in range(config.n_realizations)]
    if workers > 1:
        results_by_key = {}
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_sweep_job, job): job[1:]
                       for job in jobs}
            for fut in as_completed(futures):
                results_by_key[futures[fut]] = fut.result()
        results = [results_by_key[(s, m)] for (_c, s, m) in jobs]
    else:
        results = [_sweep_job(job) for job in jobs]

    out_dir = Path(config.output_dir) / f"run-{config.run_hash()}"
    out_dir.mkdir(parents=True, exist_ok=True)
    ok = [r for r in results if not r.failed]
    excluded = [{"reduced_size": r.reduced_size,
                 "realization": r.realization,
                 "failed_stage": r.failed_stage, "error": r.error}
                for r in results if r.failed]
    meta = standard_meta(config=config.run_hash(), master_seed=config.seed,
                         n_realizations=config.n_realizations,
                         n_jobs=len(jobs), n_excluded=len(excluded))
    manifest = {"n_jobs": len(jobs), "n_completed": len(ok),
                "n_excluded": len(excluded), "excluded": excluded,
                "reduced_sizes": list(config.reduced_sizes),
                "truth_source": config.truth_source,
                "coverage95": {f"s{r.reduced_size:02d}-m{r.realization:03d}":
                               r.coverage95 for r in ok},
                "acceptance_rates": {
                    f"s{r.reduced_size:02d}-m{r.realization:03d}":
                    r.chain.accept_overall for r in ok
                    if r.chain is not None}}
    write_json(out_dir / "sweep_manifest.json", manifest, meta=meta)
    if len(excluded) > 0.10 * len(jobs):
        raise SweepError(
            f"{len(excluded)}/{len(jobs)} realizations failed; "
            f"see {out_dir / 'sweep_manifest.json'}")

    rows = []
    for s in config.reduced_sizes:
        for partition in (CALIBRATION, VALIDATION):
            reports = [r.gamma_reports[partition] for r in ok
                       if r.reduced_size == s]
            if not reports:
                continue
            for tau in config.taus:
                rows.append(f_gamma(reports, tau))
    f_gamma_table_to_csv(rows, out_dir / "f_gamma_table.csv", meta=meta)
    complexity_table_to_csv(config.complexity_grid,
                            out_dir / "complexity_table.csv", meta=meta)
    if config.emit_plots:
        from .plots import f_gamma_plot
        f_gamma_plot(out_dir / "f_gamma_vs_alpha.svg", rows)
    return SweepResult(output_dir=out_dir, results=results,
                       f_gamma_rows=rows, n_jobs=len(jobs),
                       n_failed=len(excluded), excluded=excluded)
