"""Density-level validation of posterior-predictive ensembles.

The gamma-value of an observation is the predictive probability mass of
outcomes *less likely* than the observation itself: fit a kernel density
to the predictive replicates of that coordinate, then count the fraction
of replicates whose estimated density does not resolvably exceed the
density at the observed value (comparisons within a small multiple of
their standard error count inclusively).  Values near zero flag
observations the calibrated model cannot explain; under a model that
matches the data-generating process the gamma-values are uniform, so the
fraction below a threshold tau tends to tau itself.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .artifacts import standard_meta, write_csv
from .data import ObservationSet
from .errors import ConfigurationError
from .inference import PredictiveEnsemble

MIN_ENSEMBLE = 100
SILVERMAN_FACTOR = 1.06
COMPARISON_SLACK = 1.5


def silverman_bandwidth(sample: np.ndarray) -> float:
    """1.06 * sigma_hat * N^(-1/5); the scale-covariant classic rule."""
    n = sample.shape[0]
    return SILVERMAN_FACTOR * float(sample.std(ddof=1)) * n ** (-0.2)


def _kde_at(points: np.ndarray, sample: np.ndarray, bandwidth: float,
            star_kernels: np.ndarray | None = None,
            chunk: int = 512) -> tuple[np.ndarray, ...]:
    """Gaussian-kernel density of `sample` evaluated at `points`, chunked.

    With star_kernels (the kernel row of a reference point) also returns
    the mean squared kernel and the mean kernel product against that row,
    the raw moments behind the density-difference standard error.
    """
    n_pts, n = points.shape[0], sample.shape[0]
    norm = 1.0 / (bandwidth * math.sqrt(2.0 * math.pi))
    dens = np.empty(n_pts)
    sq = np.empty(n_pts) if star_kernels is not None else None
    cross = np.empty(n_pts) if star_kernels is not None else None
    for start in range(0, n_pts, chunk):
        block = points[start:start + chunk, None]
        z = (block - sample[None, :]) / bandwidth
        k = norm * np.exp(-0.5 * z * z)
        dens[start:start + chunk] = k.mean(axis=1)
        if star_kernels is not None:
            sq[start:start + chunk] = np.mean(k * k, axis=1)
            cross[start:start + chunk] = k @ star_kernels / n
    if star_kernels is None:
        return (dens,)
    return dens, sq, cross


def gamma_value(y_star: float, replicates: np.ndarray,
                bandwidth: float | None = None,
                slack: float = COMPARISON_SLACK) -> float:
    """Fraction of predictive replicates less likely than the observation.

    A replicate counts as "no more likely" unless its estimated density
    exceeds the estimate at y* by more than ``slack`` standard errors of
    their (correlated) difference.  Raw comparisons across a density's
    flat top are decided by evaluation noise, which systematically
    understates gamma for perfectly consistent observations; comparisons
    the estimate cannot resolve therefore count inclusively.  ``slack=0``
    recovers the plain count.

    A degenerate (zero-variance) ensemble cannot support a density
    estimate; it scores 1 when the observation hits the atom, else 0,
    with a warning either way.
    """
    replicates = np.asarray(replicates, dtype=float).ravel()
    if replicates.shape[0] < MIN_ENSEMBLE:
        raise ConfigurationError(
            f"need at least {MIN_ENSEMBLE} replicates, "
            f"got {replicates.shape[0]}")
    y_star = float(y_star)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(replicates)
    if bandwidth <= 0.0:
        warnings.warn("degenerate predictive ensemble (zero variance); "
                      "gamma collapses to an indicator", RuntimeWarning)
        return 1.0 if y_star == replicates[0] else 0.0
    n = replicates.shape[0]
    norm = 1.0 / (bandwidth * math.sqrt(2.0 * math.pi))
    z_star = (y_star - replicates) / bandwidth
    star_kernels = norm * np.exp(-0.5 * z_star * z_star)
    dens_star = star_kernels.mean()
    if slack == 0.0:
        (dens_reps,) = _kde_at(replicates, replicates, bandwidth)
        return float(np.mean(dens_reps <= dens_star))
    dens_reps, sq, cross = _kde_at(replicates, replicates, bandwidth,
                                   star_kernels=star_kernels)
    var_star = (np.mean(star_kernels * star_kernels) - dens_star ** 2) / n
    var_reps = (sq - dens_reps ** 2) / n
    cov = (cross - dens_reps * dens_star) / n
    se = np.sqrt(np.clip(var_reps + var_star - 2.0 * cov, 0.0, None))
    return float(np.mean(dens_reps <= dens_star + slack * se))


@dataclass(eq=False)
class GammaReport:
    """Per-observation gamma-values for one model realization/partition."""

    gammas: np.ndarray            # (n_scenarios, n_times, n_species)
    partition: str
    detailed_size: int
    reduced_size: int
    realization: int = 0
    scenario_ids: list[int] = field(default_factory=list)
    bandwidth_rule: str = (f"silverman {SILVERMAN_FACTOR}*std*N^-0.2, "
                           f"inclusive within {COMPARISON_SLACK} se")

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        if g.ndim != 3:
            raise ConfigurationError(
                "gammas must be (n_scenarios, n_times, n_species)")
        if np.any(g < 0.0) or np.any(g > 1.0):
            raise ConfigurationError("gamma values must lie in [0, 1]")
        g.setflags(write=False)
        self.gammas = g
        if not self.scenario_ids:
            self.scenario_ids = list(range(g.shape[0]))

    @property
    def size(self) -> int:
        return int(np.prod(self.gammas.shape))

    def flat(self) -> np.ndarray:
        return self.gammas.ravel()


def compute_gammas(ensemble: PredictiveEnsemble,
                   observations: ObservationSet,
                   detailed_size: int,
                   realization: int = 0) -> GammaReport:
    """Gamma-value of every observation coordinate against the ensemble.

    The ensemble and observations must cover the same scenarios in the
    same order (one partition at a time).
    """
    if ensemble.replicates.shape[1:] != observations.values.shape:
        raise ConfigurationError(
            "ensemble and observations cover different coordinates: "
            f"{ensemble.replicates.shape[1:]} vs {observations.values.shape}")
    partitions = {sc.partition for sc in observations.scenarios}
    if len(partitions) != 1:
        raise ConfigurationError(
            "gamma reports cover one partition at a time; "
            f"got {sorted(partitions)}")
    n_sc, n_t, n_sp = observations.values.shape
    gammas = np.empty((n_sc, n_t, n_sp))
    for k in range(n_sc):
        for j in range(n_t):
            for i in range(n_sp):
                gammas[k, j, i] = gamma_value(
                    observations.values[k, j, i],
                    ensemble.replicates[:, k, j, i])
    return GammaReport(gammas=gammas, partition=partitions.pop(),
                       detailed_size=detailed_size,
                       reduced_size=n_sp, realization=realization,
                       scenario_ids=[sc.id for sc in observations.scenarios])


@dataclass(frozen=True)
class FGammaRow:
    """One aggregation cell: fraction of gamma-values below tau."""

    detailed_size: int
    reduced_size: int
    partition: str
    n_models: int
    tau: float
    n_below: int
    n_total: int

    @property
    def value(self) -> float:
        return self.n_below / self.n_total

    @property
    def alpha(self) -> float:
        return self.reduced_size / self.detailed_size


def f_gamma(reports: Sequence[GammaReport] | GammaReport,
            tau: float) -> FGammaRow:
    """Exact count of gamma-values strictly below tau across realizations."""
    if isinstance(reports, GammaReport):
        reports = [reports]
    if not reports:
        raise ConfigurationError("need at least one gamma report")
    if not 0.0 < tau < 1.0:
        raise ConfigurationError("tau must lie in (0, 1)")
    keys = {(r.detailed_size, r.reduced_size, r.partition) for r in reports}
    if len(keys) != 1:
        raise ConfigurationError(
            f"reports mix (S, s, partition) cells: {sorted(keys)}")
    detailed_size, reduced_size, partition = keys.pop()
    n_below = sum(int(np.sum(r.flat() < tau)) for r in reports)
    n_total = sum(r.size for r in reports)
    return FGammaRow(detailed_size=detailed_size, reduced_size=reduced_size,
                     partition=partition, n_models=len(reports), tau=tau,
                     n_below=n_below, n_total=n_total)


def relative_complexity(detailed_size: int, reduced_size: int) -> float:
    """Terms added by enrichment over terms omitted by reduction.

    Enrichment adds two coefficient vectors (2s terms); reduction drops
    S^2 - s^2 interaction terms and S - s growth terms.
    """
    S, s = detailed_size, reduced_size
    if not 1 <= s < S:
        raise ConfigurationError("reduced size must lie in [1, S)")
    return 2.0 * s / (S * S - s * s + (S - s))


def complexity_rows(detailed_sizes: Iterable[int]) -> list[dict]:
    """Full complexity curve s = 1..S-1 for each grid size."""
    rows = []
    for S in detailed_sizes:
        for s in range(1, S):
            rows.append({"detailed_size": S, "reduced_size": s,
                         "alpha": s / S,
                         "complexity": relative_complexity(S, s)})
    return rows


def gamma_report_to_csv(report: GammaReport, path: str | Path,
                        meta: dict | None = None) -> None:
    rows = []
    for k, sc_id in enumerate(report.scenario_ids):
        for j in range(report.gammas.shape[1]):
            for i in range(report.gammas.shape[2]):
                rows.append([sc_id, j, i,
                             repr(float(report.gammas[k, j, i]))])
    base = standard_meta(partition=report.partition,
                         detailed_size=report.detailed_size,
                         reduced_size=report.reduced_size,
                         realization=report.realization,
                         bandwidth_rule=report.bandwidth_rule)
    base.update(meta or {})
    write_csv(path, ["scenario", "time_index", "species", "gamma"],
              rows, base)


def f_gamma_table_to_csv(rows: Sequence[FGammaRow], path: str | Path,
                         meta: dict | None = None) -> None:
    """One CSV row per (S, s, partition, tau) cell, alpha included."""
    out = []
    for r in sorted(rows, key=lambda r: (r.detailed_size, r.reduced_size,
                                         r.partition, r.tau)):
        out.append([r.detailed_size, r.reduced_size, repr(r.alpha),
                    r.partition, r.n_models, repr(r.tau), r.n_below,
                    r.n_total, repr(r.value)])
    write_csv(path, ["detailed_size", "reduced_size", "alpha", "partition",
                     "n_models", "tau", "n_below", "n_total", "f_gamma"],
              out, meta or standard_meta())


def complexity_table_to_csv(detailed_sizes: Iterable[int], path: str | Path,
                            meta: dict | None = None) -> None:
    rows = [[r["detailed_size"], r["reduced_size"], repr(r["alpha"]),
             repr(r["complexity"])]
            for r in complexity_rows(detailed_sizes)]
    write_csv(path, ["detailed_size", "reduced_size", "alpha", "complexity"],
              rows, meta or standard_meta())
