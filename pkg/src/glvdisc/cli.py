"""Command-line entry points for the experiment pipeline.

Verbs mirror the pipeline stages (generate, reduce, simulate, observe,
calibrate, validate) plus the orchestrated runs (single, sweep).  Exit
codes: 0 success, 2 configuration problem, 3 numerical failure, 4 sweep
completed with excluded realizations.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .artifacts import standard_meta, write_csv
from .data import (CALIBRATION, VALIDATION, default_observation_times,
                   load_observations, observations_to_csv, sample_scenarios,
                   save_observations, synthesize_observations)
from .dynamics import DiscrepancyParams, State, integrate
from .errors import ConfigurationError, GlvdiscError, SweepError
from .inference import calibrate, load_chain, posterior_predictive, save_chain
from .models import (DetailedModel, ReducedModel, check_stability,
                     generate_detailed, load_model, save_model,
                     subsample_reduced)
from .pipeline import (ExperimentConfig, _partition_slice, _scenario_table,
                       load_config, run_single, run_sweep)
from .validation import compute_gammas, gamma_report_to_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4

_log = logging.getLogger("glvdisc.cli")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="experiment config JSON (defaults throughout)")
    parser.add_argument("--seed", type=int, metavar="N",
                        help="override the master seed")
    parser.add_argument("--output", metavar="DIR",
                        help="override the output directory")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="increase log detail (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true",
                        help="errors only")


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output is not None:
        overrides["output_dir"] = args.output
    if getattr(args, "plots", False):
        overrides["emit_plots"] = True
    return dataclasses.replace(config, **overrides) if overrides else config


def _parse_floats(text: str, label: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise ConfigurationError(f"bad {label} list {text!r}: {exc}") from exc


def _keep(args: argparse.Namespace, config: ExperimentConfig) -> int:
    return args.keep if args.keep is not None else config.reduced_sizes[0]


def _cmd_generate(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    generation = dataclasses.replace(config.generation, seed=config.seed)
    model = generate_detailed(generation)
    report = check_stability(model)
    if not report.passed:
        raise ConfigurationError(f"structural checks failed: {report}")
    save_model(model, args.out)
    print(f"wrote {args.out} (size {model.size}, dominance margin "
          f"{report.min_dominance_margin:.4g})")
    return EXIT_OK


def _cmd_reduce(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    if not isinstance(model, DetailedModel):
        raise ConfigurationError("reduce expects a detailed model file")
    reduced = subsample_reduced(model, args.keep)
    save_model(reduced, args.out)
    print(f"wrote {args.out} (kept {reduced.size} of {model.size} species)")
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    model = load_model(args.model)
    initial = (_parse_floats(args.initial, "initial state")
               if args.initial else np.ones(model.size))
    params = None
    if args.state_coeff or args.rate_coeff:
        if not isinstance(model, ReducedModel):
            raise ConfigurationError(
                "discrepancy coefficients require a reduced model")
        zeros = np.zeros(model.size)
        params = DiscrepancyParams(
            state_coeff=(_parse_floats(args.state_coeff, "state-coeff")
                         if args.state_coeff else zeros),
            rate_coeff=(_parse_floats(args.rate_coeff, "rate-coeff")
                        if args.rate_coeff else zeros))
    solver = config.solver
    if args.t_final is not None:
        solver = solver.with_t_final(args.t_final)
    times = default_observation_times(solver.t_final,
                                      args.n_times or config.n_times)
    traj = integrate(model, State(initial), times, solver=solver,
                     params=params, mode=config.mode)
    rows = [[j, repr(float(t)), i, repr(float(traj.states[j, i]))]
            for j, t in enumerate(times) for i in range(model.size)]
    write_csv(args.out, ["time_index", "time", "species", "value"], rows,
              standard_meta(tag=traj.tag, model=str(args.model),
                            rhs_evals=traj.stats.rhs_evals))
    print(f"wrote {args.out} ({traj.tag}, {len(times)} times, "
          f"{model.size} species)")
    return EXIT_OK


def _cmd_observe(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    model = load_model(args.model)
    if not isinstance(model, DetailedModel):
        raise ConfigurationError("observe expects a detailed model file")
    keep = _keep(args, config)
    scenarios = sample_scenarios(
        config.n_scenarios, config.n_calibration, n_observed=keep,
        n_species=model.size, ic_range=config.ic_range, seed=config.seed)
    times = default_observation_times(config.solver.t_final, config.n_times)
    observations = synthesize_observations(
        model, scenarios, times, sigma2_noise=config.sigma2_noise,
        seed=config.seed, solver=config.solver)
    out = Path(args.out)
    meta = standard_meta(master_seed=config.seed, model=str(args.model))
    save_observations(observations, out, meta=meta)
    observations_to_csv(observations, out.with_suffix(".csv"), meta=meta)
    print(f"wrote {out} and {out.with_suffix('.csv')} "
          f"({observations.n_scenarios} scenarios x "
          f"{observations.n_times} times x {keep} species)")
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    model = load_model(args.model)
    if not isinstance(model, ReducedModel):
        raise ConfigurationError("calibrate expects a reduced model file")
    observations = load_observations(args.observations)
    chain, _ = calibrate(model, observations.restrict(CALIBRATION),
                         prior=config.prior(model.size), config=config.dram,
                         solver=config.solver, mode=config.mode,
                         seed=config.seed)
    save_chain(chain, args.out,
               meta=standard_meta(master_seed=config.seed,
                                  model=str(args.model)))
    print(f"wrote {args.out} (acceptance {chain.accept_overall:.3f}, "
          f"{chain.retained().shape[0]} retained draws)")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    model = load_model(args.model)
    if not isinstance(model, ReducedModel):
        raise ConfigurationError("validate expects a reduced model file")
    observations = load_observations(args.observations)
    chain = load_chain(args.chain)
    times = observations.times
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ensemble = posterior_predictive(
        chain, model, observations.scenarios, times, config.sigma2_noise,
        n_draws=config.ensemble_size, seed=config.seed,
        solver=config.solver, mode=config.mode)
    reduced_states = np.empty_like(observations.truth)
    for k, sc in enumerate(observations.scenarios):
        reduced_states[k] = integrate(model, State(sc.initial_observed),
                                      times, solver=config.solver).states
    meta = standard_meta(master_seed=config.seed, model=str(args.model))
    for partition in (CALIBRATION, VALIDATION):
        if not any(sc.partition == partition
                   for sc in observations.scenarios):
            continue
        sub_ens, sub_obs = _partition_slice(ensemble, observations,
                                            partition)
        report = compute_gammas(sub_ens, sub_obs,
                                detailed_size=observations.scenarios[0]
                                .initial_full.shape[0])
        path = out_dir / f"gamma_{partition}.csv"
        gamma_report_to_csv(report, path,
                            meta=dict(meta, partition=partition))
        print(f"wrote {path} (median gamma "
              f"{float(np.median(report.gammas)):.3f})")
    _scenario_table(out_dir, observations, reduced_states, ensemble, meta,
                    config.emit_plots)
    print(f"wrote {out_dir}/trajectory_sc*.csv")
    return EXIT_OK


def _cmd_single(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    keep = _keep(args, config)
    result = run_single(config, keep, realization=args.realization)
    if result.failed:
        print(f"failed at stage {result.failed_stage}: {result.error}",
              file=sys.stderr)
        print(f"partial artifacts under {result.run_dir}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"completed run under {result.run_dir}")
    for partition, coverage in result.coverage95.items():
        print(f"  {partition}: 95% band coverage {coverage:.3f}, "
              f"enriched mse {result.mse_enriched[partition]:.4g}, "
              f"reduced mse {result.mse_reduced[partition]:.4g}")
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    result = run_sweep(config, workers=args.workers)
    print(f"completed {result.n_jobs - result.n_failed}/{result.n_jobs} "
          f"runs under {result.output_dir}")
    print(f"wrote {result.table_path}")
    print(f"wrote {result.complexity_path}")
    if result.n_failed:
        print(f"{result.n_failed} realizations excluded "
              f"(see sweep_manifest.json)", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glvdisc",
        description="Generate, reduce, enrich, calibrate, and validate "
                    "generalized Lotka-Volterra models.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="draw one stable detailed model")
    p.add_argument("--out", default="detailed_model.json", metavar="FILE")
    _common_flags(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("reduce", help="keep the first species of a model")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--keep", type=int, required=True, metavar="S",
                   help="number of species to keep")
    p.add_argument("--out", default="reduced_model.json", metavar="FILE")
    _common_flags(p)
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("simulate", help="integrate a model over a time grid")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--initial", metavar="X0,X1,...",
                   help="initial concentrations (default all ones)")
    p.add_argument("--state-coeff", metavar="D0,D1,...",
                   help="state-proportional discrepancy coefficients")
    p.add_argument("--rate-coeff", metavar="D0,D1,...",
                   help="rate-proportional discrepancy coefficients")
    p.add_argument("--t-final", type=float, metavar="T")
    p.add_argument("--n-times", type=int, metavar="N")
    p.add_argument("--out", default="trajectory.csv", metavar="FILE")
    _common_flags(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("observe",
                       help="synthesize noisy observations from a model")
    p.add_argument("--model", required=True, metavar="FILE",
                   help="detailed model JSON")
    p.add_argument("--keep", type=int, metavar="S",
                   help="observed species count (default: config)")
    p.add_argument("--out", default="observations.json", metavar="FILE")
    _common_flags(p)
    p.set_defaults(func=_cmd_observe)

    p = sub.add_parser("calibrate",
                       help="sample the discrepancy posterior")
    p.add_argument("--model", required=True, metavar="FILE",
                   help="reduced model JSON")
    p.add_argument("--observations", required=True, metavar="FILE")
    p.add_argument("--out", default="chain.csv", metavar="FILE")
    _common_flags(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("validate",
                       help="predictive bands and gamma-values from a chain")
    p.add_argument("--model", required=True, metavar="FILE",
                   help="reduced model JSON")
    p.add_argument("--observations", required=True, metavar="FILE")
    p.add_argument("--chain", required=True, metavar="FILE")
    p.add_argument("--plots", action="store_true",
                   help="also render SVG band plots")
    _common_flags(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("single",
                       help="run the full pipeline for one realization")
    p.add_argument("--keep", type=int, metavar="S",
                   help="reduced size (default: first configured)")
    p.add_argument("--realization", type=int, default=0, metavar="M")
    p.add_argument("--plots", action="store_true")
    _common_flags(p)
    p.set_defaults(func=_cmd_single)

    p = sub.add_parser("sweep",
                       help="run all realizations and aggregate tables")
    p.add_argument("--workers", type=int, default=1, metavar="N")
    p.add_argument("--plots", action="store_true")
    _common_flags(p)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        level = logging.ERROR
    elif args.verbose >= 2:
        level = logging.DEBUG
    elif args.verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GlvdiscError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
