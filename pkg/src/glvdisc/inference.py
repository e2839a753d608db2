"""Bayesian calibration of the discrepancy coefficients.

The target is the posterior over theta = (state_coeff, rate_coeff): a
uniform box prior (open interval, default (-100, 0) per coefficient) times
a Gaussian likelihood whose residuals come from integrating the enriched
model through every calibration scenario.  Sampling uses random-walk
Metropolis with two standard upgrades: a single delayed-rejection fallback
stage with a contracted proposal after a first-stage rejection, and
adaptive proposal covariance estimated from the chain history.
"""

from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .artifacts import (read_csv, read_json, standard_meta, write_csv,
                        write_json)
from .data import ObservationSet, Scenario
from .dynamics import DiscrepancyParams, SolverConfig
from .errors import (ConfigurationError, IntegrationError, PredictiveError)
from .models import ReducedModel
from .rng import STREAM_CHAIN, STREAM_PREDICTIVE, make_rng

NEG_INF = float("-inf")


@dataclass(eq=False)
class PriorSpec:
    """Independent uniform bounds per parameter, open-interval support."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ConfigurationError("prior bounds must be matching vectors")
        if not np.all(lo < hi) or not np.all(hi <= 0.0):
            raise ConfigurationError(
                "prior bounds must satisfy lower < upper <= 0")
        lo.setflags(write=False)
        hi.setflags(write=False)
        self.lower, self.upper = lo, hi

    @classmethod
    def default(cls, n_params: int) -> "PriorSpec":
        return cls(np.full(n_params, -100.0), np.zeros(n_params))

    @property
    def n_params(self) -> int:
        return self.lower.shape[0]

    def contains(self, theta: np.ndarray) -> bool:
        return bool(np.all(theta > self.lower) and np.all(theta < self.upper))


def log_prior(theta: np.ndarray | DiscrepancyParams,
              prior: PriorSpec) -> float:
    """Uniform-box log density; -inf outside the open support."""
    vec = theta.to_vector() if isinstance(theta, DiscrepancyParams) \
        else np.asarray(theta, dtype=float)
    if vec.shape != (prior.n_params,):
        raise ConfigurationError(
            f"theta has {vec.shape} entries, prior expects {prior.n_params}")
    if not prior.contains(vec):
        return NEG_INF
    return -float(np.sum(np.log(prior.upper - prior.lower)))


def initial_theta(prior: PriorSpec, rng: np.random.Generator,
                  scale: float = 1.0) -> np.ndarray:
    """Draw a start near zero discrepancy: uniform on [max(lower,-scale), 0).

    Near-zero is the natural reduced-model starting point; full-box starts
    risk long transients.
    """
    low = np.maximum(prior.lower, -abs(scale))
    return rng.uniform(low, np.minimum(prior.upper, 0.0))


def _enriched_outputs(reduced: ReducedModel, theta: np.ndarray,
                      initials: np.ndarray, obs_times: np.ndarray,
                      solver: SolverConfig, mode_code: int) -> np.ndarray:
    """Enriched-model states for each initial condition row; raises on failure."""
    half = theta.shape[0] // 2
    states, status, _acc, _rej, _nfev, failed = _kernels.integrate_glv_batch(
        reduced.growth, reduced.interactions,
        np.ascontiguousarray(theta[:half]), np.ascontiguousarray(theta[half:]),
        mode_code, np.ascontiguousarray(initials), float(solver.t_final),
        np.ascontiguousarray(obs_times), float(solver.rtol),
        float(solver.atol), float(solver.max_step),
        float(solver.negativity_floor))
    if status != _kernels.STATUS_OK:
        raise IntegrationError(
            f"enriched integration failed with status {status} "
            f"for scenario row {failed}")
    return states


class LogLikelihood:
    """Gaussian likelihood of calibration observations given theta.

    Callable on packed parameter vectors; integrates the enriched model
    through every scenario of the supplied observation set (callers pass
    the calibration restriction) and scores residuals against the known
    noise variance.  Trajectory solutions are cached per theta so repeated
    evaluations at a retained chain state or predictive draw are free.
    """

    def __init__(self, reduced: ReducedModel, observations: ObservationSet,
                 solver: SolverConfig | None = None, mode: str = "explicit",
                 cache_size: int = 256):
        if observations.n_observed != reduced.size:
            raise ConfigurationError(
                f"observations cover {observations.n_observed} species, "
                f"reduced model has {reduced.size}")
        self.reduced = reduced
        self.observations = observations
        self.solver = solver or SolverConfig(
            t_final=float(observations.times[-1]))
        if mode not in ("explicit", "implicit"):
            raise ConfigurationError(f"unknown enrichment mode {mode!r}")
        self.mode = mode
        self._mode_code = (_kernels.MODE_EXPLICIT if mode == "explicit"
                           else _kernels.MODE_IMPLICIT)
        self._initials = np.ascontiguousarray(
            [sc.initial_observed for sc in observations.scenarios])
        self._sigma2 = observations.sigma2_noise
        self._norm = -0.5 * observations.size * math.log(
            2.0 * math.pi * self._sigma2)
        self._cache: OrderedDict[bytes, np.ndarray] = OrderedDict()
        self._cache_size = cache_size
        self.n_evals = 0
        self.n_failures = 0

    @property
    def n_params(self) -> int:
        return 2 * self.reduced.size

    def trajectories(self, theta: np.ndarray) -> np.ndarray:
        """Enriched states (n_scenarios, n_times, n_observed) at theta."""
        theta = np.asarray(theta, dtype=float)
        key = theta.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        states = _enriched_outputs(self.reduced, theta, self._initials,
                                   self.observations.times, self.solver,
                                   self._mode_code)
        self._cache[key] = states
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return states

    def __call__(self, theta: np.ndarray) -> float:
        self.n_evals += 1
        try:
            states = self.trajectories(theta)
        except IntegrationError:
            self.n_failures += 1
            return NEG_INF
        resid = self.observations.values - states
        return self._norm - 0.5 * float(np.sum(resid * resid)) / self._sigma2


def make_log_posterior(prior: PriorSpec,
                       likelihood: LogLikelihood) -> Callable[[np.ndarray], float]:
    """Box-gated posterior: skip the ODE solve when theta exits the prior."""
    def log_post(theta: np.ndarray) -> float:
        lp = log_prior(theta, prior)
        if lp == NEG_INF:
            return NEG_INF
        return lp + likelihood(theta)
    return log_post


@dataclass(frozen=True)
class DramConfig:
    """Chain-length and proposal settings for the adaptive sampler.

    initial_step is the standard deviation of the isotropic starting
    proposal; dr_contraction shrinks the second-stage proposal after a
    first-stage rejection; the covariance adaptation rescales the
    empirical chain covariance by the usual 2.38^2/d factor.  On top of
    the covariance, a global scale follows a diminishing Robbins-Monro
    recursion toward target_acceptance, which keeps the sampler moving
    both when the start transient inflates the history covariance and
    when a half-explored ridge deflates it.
    """

    n_samples: int = 50_000
    burn_in: int = 10_000
    thin_to: int = 2_000
    initial_step: float = 0.1
    dr_enabled: bool = True
    dr_contraction: float = 0.2
    adapt_enabled: bool = True
    adapt_start: int = 1_000
    adapt_interval: int = 100
    adapt_reg: float = 1e-8
    target_acceptance: float = 0.234
    stall_window: int = 5_000

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be positive")
        if not 0 <= self.burn_in < self.n_samples:
            raise ConfigurationError("burn_in must lie in [0, n_samples)")
        if self.thin_to < 1:
            raise ConfigurationError("thin_to must be positive")
        if self.initial_step <= 0:
            raise ConfigurationError("initial_step must be positive")
        if not 0.0 < self.dr_contraction < 1.0:
            raise ConfigurationError("dr_contraction must lie in (0, 1)")
        if self.adapt_start < 2 or self.adapt_interval < 1:
            raise ConfigurationError("invalid adaptation schedule")
        if self.adapt_reg < 0:
            raise ConfigurationError("adapt_reg must be >= 0")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ConfigurationError(
                "target_acceptance must lie in (0, 1)")


@dataclass(eq=False)
class PosteriorChain:
    """Full chain (burn-in included) with acceptance diagnostics."""

    samples: np.ndarray
    log_posterior: np.ndarray
    burn_in: int
    thin_to: int
    seed: int
    accept_stage1: float
    accept_stage2: float
    accept_overall: float
    n_stage2_proposals: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        lp = np.asarray(self.log_posterior, dtype=float)
        if s.ndim != 2 or lp.shape != (s.shape[0],):
            raise ConfigurationError("samples (n, d) and log_posterior (n,)")
        if not 0 <= self.burn_in < s.shape[0]:
            raise ConfigurationError("burn_in out of range")
        self.samples, self.log_posterior = s, lp

    @property
    def n_params(self) -> int:
        return self.samples.shape[1]

    def retained(self) -> np.ndarray:
        return self.samples[self.burn_in:]

    def retained_log_posterior(self) -> np.ndarray:
        return self.log_posterior[self.burn_in:]

    def thinned(self, n_draws: int | None = None) -> np.ndarray:
        """Evenly spaced draws from the retained chain."""
        kept = self.retained()
        n = min(n_draws or self.thin_to, kept.shape[0])
        idx = np.unique(np.round(
            np.linspace(0, kept.shape[0] - 1, n)).astype(int))
        return kept[idx]


def _log1mexp(t: float) -> float:
    # log(1 - e^t) for t <= 0; t >= 0 collapses to the empty event
    if t >= 0.0:
        return NEG_INF
    if t == NEG_INF:
        return 0.0
    return math.log1p(-math.exp(t))


def run_dram(log_target: Callable[[np.ndarray], float],
             init: np.ndarray,
             config: DramConfig | None = None,
             seed: int = 0,
             initial_cov: np.ndarray | None = None) -> PosteriorChain:
    """Delayed-rejection adaptive-Metropolis sampling of log_target.

    Stage 1 is a symmetric Gaussian random walk; on rejection a contracted
    second-stage proposal is tried with the standard two-stage acceptance
    ratio (first-stage proposal normalizations cancel, so only quadratic
    forms under the current covariance appear).  The proposal covariance
    re-estimates from the chain history on a fixed schedule, skipping the
    first adapt_start/2 states so a far-off start does not bake its
    transient into the estimate; a diminishing global scale chases
    target_acceptance so mis-scaled history covariance cannot pin the
    chain.
    """
    config = config or DramConfig()
    x = np.asarray(init, dtype=float).copy()
    d = x.shape[0]
    fx = float(log_target(x))
    if not math.isfinite(fx):
        raise ConfigurationError(
            "log-target is not finite at the chain start")

    rng = make_rng(seed, STREAM_CHAIN)
    if initial_cov is None:
        cov = config.initial_step ** 2 * np.eye(d)
    else:
        cov = np.array(initial_cov, dtype=float)
        if cov.shape != (d, d):
            raise ConfigurationError("initial_cov must be (d, d)")
    chol = np.linalg.cholesky(cov)
    sd = 2.38 ** 2 / d
    log_scale = 0.0

    samples = np.empty((config.n_samples, d))
    log_post = np.empty(config.n_samples)
    n_acc1 = 0
    n_acc2 = 0
    n_prop2 = 0
    last_accept = 0
    stall_warned = False

    # running mean / scatter of the visited states for adaptation
    skip = config.adapt_start // 2
    w_n = 0
    w_mean = np.zeros(d)
    w_m2 = np.zeros((d, d))

    for i in range(config.n_samples):
        scale = math.exp(log_scale)
        z = rng.standard_normal(d)
        y1 = x + scale * (chol @ z)
        f1 = float(log_target(y1))
        log_a1 = min(0.0, f1 - fx)
        if math.log(rng.random()) < log_a1:
            x, fx = y1, f1
            n_acc1 += 1
            last_accept = i
        elif config.dr_enabled:
            n_prop2 += 1
            z2 = rng.standard_normal(d)
            y2 = x + config.dr_contraction * scale * (chol @ z2)
            f2 = float(log_target(y2))
            if f2 > NEG_INF:
                w = np.linalg.solve(chol, y1 - y2) / scale
                lnum = f2 - 0.5 * float(w @ w) + _log1mexp(f1 - f2)
                lden = fx - 0.5 * float(z @ z) + _log1mexp(f1 - fx)
                if math.log(rng.random()) < min(0.0, lnum - lden):
                    x, fx = y2, f2
                    n_acc2 += 1
                    last_accept = i

        samples[i] = x
        log_post[i] = fx

        if not stall_warned and i - last_accept >= config.stall_window:
            warnings.warn(
                f"chain stalled: no accepted proposal in the last "
                f"{config.stall_window} iterations", RuntimeWarning)
            stall_warned = True

        if config.adapt_enabled:
            # stage-1 expected acceptance drives the scale recursion
            gamma = (i + 1) ** -0.66
            log_scale += gamma * (math.exp(log_a1)
                                  - config.target_acceptance)
            log_scale = min(max(log_scale, -15.0), 15.0)

        if i >= skip:
            # Welford update with the state the chain settled on
            w_n += 1
            delta = x - w_mean
            w_mean += delta / w_n
            w_m2 += np.outer(delta, x - w_mean)

        if (config.adapt_enabled and w_n > 1
                and i + 1 >= config.adapt_start
                and (i + 1) % config.adapt_interval == 0):
            emp_cov = w_m2 / (w_n - 1)
            try:
                chol = np.linalg.cholesky(
                    sd * emp_cov + sd * config.adapt_reg * np.eye(d))
            except np.linalg.LinAlgError:
                pass  # degenerate history; keep the current proposal

    total_acc = n_acc1 + n_acc2
    return PosteriorChain(
        samples=samples, log_posterior=log_post,
        burn_in=config.burn_in, thin_to=config.thin_to, seed=seed,
        accept_stage1=n_acc1 / config.n_samples,
        accept_stage2=n_acc2 / n_prop2 if n_prop2 else 0.0,
        accept_overall=total_acc / config.n_samples,
        n_stage2_proposals=n_prop2)


def calibrate(reduced: ReducedModel, observations: ObservationSet,
              prior: PriorSpec | None = None,
              config: DramConfig | None = None,
              solver: SolverConfig | None = None,
              mode: str = "explicit", seed: int = 0
              ) -> tuple[PosteriorChain, LogLikelihood]:
    """End-to-end calibration: build the posterior and sample it.

    observations must already be restricted to the calibration partition.
    """
    likelihood = LogLikelihood(reduced, observations, solver=solver, mode=mode)
    prior = prior or PriorSpec.default(likelihood.n_params)
    if prior.n_params != likelihood.n_params:
        raise ConfigurationError(
            f"prior covers {prior.n_params} parameters, "
            f"model needs {likelihood.n_params}")
    target = make_log_posterior(prior, likelihood)
    init = initial_theta(prior, make_rng(seed, STREAM_CHAIN, 1))
    chain = run_dram(target, init, config=config, seed=seed)
    return chain, likelihood


@dataclass(eq=False)
class PredictiveEnsemble:
    """Posterior-predictive outputs per (draw, scenario, time, species).

    model_outputs hold the enriched-model states; replicates add one
    measurement-noise realization per draw, which is what enters the
    density-level validation.
    """

    times: np.ndarray
    scenarios: list[Scenario]
    model_outputs: np.ndarray
    replicates: np.ndarray
    sigma2_noise: float
    n_dropped: int = 0

    def __post_init__(self):
        if self.model_outputs.shape != self.replicates.shape:
            raise ConfigurationError("outputs/replicates shape mismatch")
        if self.model_outputs.ndim != 4:
            raise ConfigurationError(
                "predictive arrays must be (draws, scenarios, times, species)")

    @property
    def n_draws(self) -> int:
        return self.model_outputs.shape[0]

    def coordinate(self, scenario_idx: int, time_idx: int,
                   species_idx: int) -> np.ndarray:
        """Replicate ensemble for one observation coordinate."""
        return self.replicates[:, scenario_idx, time_idx, species_idx]

    def quantile_bands(self, levels: Sequence[float] = (0.5, 0.95)
                       ) -> dict[float, tuple[np.ndarray, np.ndarray]]:
        """Central bands of the replicate ensemble, per coordinate."""
        bands = {}
        for level in levels:
            lo = (1.0 - level) / 2.0
            bands[level] = (
                np.quantile(self.replicates, lo, axis=0),
                np.quantile(self.replicates, 1.0 - lo, axis=0))
        return bands


def posterior_predictive(chain: PosteriorChain, reduced: ReducedModel,
                         scenarios: list[Scenario], obs_times: np.ndarray,
                         sigma2_noise: float, n_draws: int = 2_000,
                         seed: int = 0, solver: SolverConfig | None = None,
                         mode: str = "explicit",
                         max_dropped_fraction: float = 0.01
                         ) -> PredictiveEnsemble:
    """Push thinned posterior draws through the enriched model plus noise."""
    if not scenarios:
        raise ConfigurationError("scenarios must be non-empty")
    obs_times = np.asarray(obs_times, dtype=float)
    solver = solver or SolverConfig(t_final=float(obs_times[-1]))
    mode_code = {"explicit": _kernels.MODE_EXPLICIT,
                 "implicit": _kernels.MODE_IMPLICIT}[mode]
    initials = np.ascontiguousarray(
        [sc.initial_observed for sc in scenarios])
    thetas = chain.thinned(n_draws)

    rng = make_rng(seed, STREAM_PREDICTIVE)
    kept_outputs = []
    dropped = 0
    for theta in thetas:
        try:
            kept_outputs.append(_enriched_outputs(
                reduced, theta, initials, obs_times, solver, mode_code))
        except IntegrationError:
            dropped += 1
    if dropped > max_dropped_fraction * thetas.shape[0]:
        raise PredictiveError(
            f"{dropped}/{thetas.shape[0]} predictive draws failed to "
            "integrate")
    outputs = np.asarray(kept_outputs)
    noise = rng.normal(0.0, math.sqrt(sigma2_noise), size=outputs.shape)
    return PredictiveEnsemble(times=obs_times, scenarios=list(scenarios),
                              model_outputs=outputs,
                              replicates=outputs + noise,
                              sigma2_noise=sigma2_noise, n_dropped=dropped)


def _theta_columns(n_params: int) -> list[str]:
    half = n_params // 2
    return ([f"state_coeff_{i}" for i in range(half)]
            + [f"rate_coeff_{i}" for i in range(half)])


def save_chain(chain: PosteriorChain, csv_path: str | Path,
               diagnostics_path: str | Path | None = None,
               meta: dict | None = None) -> None:
    """Retained samples as CSV plus a JSON diagnostics sidecar."""
    csv_path = Path(csv_path)
    retained = chain.retained()
    lp = chain.retained_log_posterior()
    rows = [[repr(float(v)) for v in row] + [repr(float(l))]
            for row, l in zip(retained, lp)]
    write_csv(csv_path, _theta_columns(chain.n_params) + ["log_posterior"],
              rows, meta or standard_meta(seed=chain.seed))
    side = Path(diagnostics_path) if diagnostics_path else \
        csv_path.with_suffix(".diagnostics.json")
    write_json(side, {
        "n_samples": chain.samples.shape[0],
        "n_params": chain.n_params,
        "burn_in": chain.burn_in,
        "thin_to": chain.thin_to,
        "seed": chain.seed,
        "accept_stage1": chain.accept_stage1,
        "accept_stage2": chain.accept_stage2,
        "accept_overall": chain.accept_overall,
        "n_stage2_proposals": chain.n_stage2_proposals,
    }, meta or standard_meta(seed=chain.seed))


def load_chain(csv_path: str | Path,
               diagnostics_path: str | Path | None = None) -> PosteriorChain:
    """Rebuild a chain from its artifacts.

    Only retained samples are persisted, so the loaded chain has
    burn_in = 0 with diagnostics carried over from the sidecar.
    """
    csv_path = Path(csv_path)
    _meta, columns, rows = read_csv(csv_path)
    data = np.array([[float(v) for v in row] for row in rows])
    side = Path(diagnostics_path) if diagnostics_path else \
        csv_path.with_suffix(".diagnostics.json")
    diag = read_json(side)
    return PosteriorChain(samples=data[:, :-1], log_posterior=data[:, -1],
                          burn_in=0, thin_to=diag["thin_to"],
                          seed=diag["seed"],
                          accept_stage1=diag["accept_stage1"],
                          accept_stage2=diag["accept_stage2"],
                          accept_overall=diag["accept_overall"],
                          n_stage2_proposals=diag["n_stage2_proposals"])
