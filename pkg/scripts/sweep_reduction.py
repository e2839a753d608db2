#!/usr/bin/env python3
"""Fraction of low gamma-values versus reduction ratio.

Runs the full pipeline over a grid of reduced sizes and model
realizations, then prints the aggregated f_gamma table (one row per
reduced size, partition, and threshold) and where the CSV/SVG artifacts
landed.  The companion complexity table covers the same grid.

    python3 scripts/sweep_reduction.py --species 10 --keep 2 4 6 8 \
        --realizations 20 --output runs/sweep
"""

import argparse

from glvdisc import DramConfig, ExperimentConfig, GenerationConfig, run_sweep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--species", type=int, default=10,
                    help="detailed model size (default 10)")
    ap.add_argument("--keep", type=int, nargs="+", default=[2, 4, 6, 8],
                    help="reduced sizes to sweep (default 2 4 6 8)")
    ap.add_argument("--realizations", type=int, default=20,
                    help="model realizations per reduced size (default 20)")
    ap.add_argument("--samples", type=int, default=20_000,
                    help="chain length per calibration (default 20000)")
    ap.add_argument("--seed", type=int, default=0, help="master seed")
    ap.add_argument("--workers", type=int, default=1,
                    help="parallel pipeline workers (default 1)")
    ap.add_argument("--output", default="runs/sweep",
                    help="output root directory")
    args = ap.parse_args(argv)

    config = ExperimentConfig(
        generation=GenerationConfig(n_species=args.species, seed=args.seed),
        reduced_sizes=tuple(args.keep),
        n_realizations=args.realizations,
        dram=DramConfig(n_samples=args.samples,
                        burn_in=args.samples // 5 * 2,
                        thin_to=min(2_000, args.samples // 10)),
        output_dir=args.output,
        emit_plots=True,
        seed=args.seed)

    sweep = run_sweep(config, workers=args.workers)
    if sweep.excluded:
        print(f"excluded {sweep.n_failed}/{sweep.n_jobs} failed runs")
    print(f"{'s':>3s} {'alpha':>6s} {'partition':>12s} {'tau':>5s} "
          f"{'f_gamma':>8s} {'n':>6s}")
    for row in sweep.f_gamma_rows:
        print(f"{row.reduced_size:3d} {row.alpha:6.2f} {row.partition:>12s} "
              f"{row.tau:5.2f} {row.value:8.4f} {row.n_total:6d}")
    print(f"tables: {sweep.table_path}, {sweep.complexity_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
