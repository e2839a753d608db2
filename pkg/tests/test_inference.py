"""Sampler, prior, likelihood, and predictive tests on analytic targets."""

import math

import numpy as np
import pytest

from glvdisc.data import (default_observation_times, sample_scenarios,
                          synthesize_observations)
from glvdisc.dynamics import DiscrepancyParams, SolverConfig
from glvdisc.errors import ConfigurationError, PredictiveError
from glvdisc.inference import (DramConfig, LogLikelihood, PosteriorChain,
                               PriorSpec, calibrate, initial_theta, load_chain,
                               log_prior, make_log_posterior,
                               posterior_predictive, run_dram, save_chain)
from glvdisc.models import GenerationConfig, generate_detailed, subsample_reduced
from glvdisc.rng import STREAM_CHAIN, make_rng

NEG_INF = float("-inf")


# ---------------------------------------------------------------- prior

def test_log_prior_uniform_value():
    prior = PriorSpec.default(8)
    theta = np.full(8, -3.0)
    assert log_prior(theta, prior) == pytest.approx(8 * -math.log(100.0))


def test_log_prior_out_of_support():
    prior = PriorSpec.default(4)
    theta = np.array([-1.0, -1.0, -1.0, 0.5])
    assert log_prior(theta, prior) == NEG_INF


def test_log_prior_boundary_is_outside():
    prior = PriorSpec.default(2)
    assert log_prior(np.array([-100.0, -1.0]), prior) == NEG_INF
    assert log_prior(np.array([-1.0, 0.0]), prior) == NEG_INF


def test_prior_spec_validation():
    with pytest.raises(ConfigurationError):
        PriorSpec(np.array([-1.0]), np.array([0.5]))  # upper > 0
    with pytest.raises(ConfigurationError):
        PriorSpec(np.array([0.0]), np.array([0.0]))   # empty interval


def test_initial_theta_near_zero():
    prior = PriorSpec.default(6)
    rng = np.random.default_rng(0)
    for _ in range(50):
        theta = initial_theta(prior, rng)
        assert np.all(theta >= -1.0) and np.all(theta < 0.0)
        assert prior.contains(theta)


# ---------------------------------------------------------------- sampler

def gaussian_target(x):
    return -0.5 * float(x @ x)


def test_dram_recovers_standard_normal_moments():
    cfg = DramConfig(n_samples=100_000, burn_in=10_000, adapt_start=1_000)
    chain = run_dram(gaussian_target, np.zeros(2), cfg, seed=42)
    kept = chain.retained()
    assert np.max(np.abs(kept.mean(axis=0))) < 0.05
    cov = np.cov(kept.T)
    assert np.max(np.abs(cov - np.eye(2))) < 0.10
    assert 0.0 < chain.accept_overall < 1.0
    assert 0.0 < chain.accept_stage1 < 1.0


def box_target(x):
    return 0.0 if np.all((x > 0.0) & (x < 1.0)) else NEG_INF


def test_dram_uniform_box_chi_square():
    chi2 = pytest.importorskip("scipy.stats").chi2
    cfg = DramConfig(n_samples=100_000, burn_in=5_000, initial_step=0.3)
    chain = run_dram(box_target, np.full(2, 0.5), cfg, seed=7)
    # thin heavily so the chi-square independence assumption is reasonable
    kept = chain.retained()[::50]
    n_bins = 10
    crit = chi2.ppf(0.99, n_bins - 1)
    for dim in range(2):
        counts, _ = np.histogram(kept[:, dim], bins=n_bins, range=(0.0, 1.0))
        expected = kept.shape[0] / n_bins
        stat = float(np.sum((counts - expected) ** 2 / expected))
        assert stat < crit, f"dim {dim}: chi2 {stat:.1f} >= {crit:.1f}"


def test_dram_without_dr_and_adaptation_is_plain_metropolis():
    cfg = DramConfig(n_samples=2_000, burn_in=0, dr_enabled=False,
                     adapt_enabled=False, initial_step=0.5)
    seed = 11
    chain = run_dram(gaussian_target, np.zeros(2), cfg, seed=seed)

    # textbook random-walk Metropolis replay on the identical stream
    rng = make_rng(seed, STREAM_CHAIN)
    x = np.zeros(2)
    fx = gaussian_target(x)
    chol = 0.5 * np.eye(2)
    replay = np.empty((2_000, 2))
    for i in range(2_000):
        y = x + chol @ rng.standard_normal(2)
        fy = gaussian_target(y)
        if math.log(rng.random()) < min(0.0, fy - fx):
            x, fx = y, fy
        replay[i] = x
    np.testing.assert_array_equal(chain.samples, replay)


def test_dram_detailed_balance_between_half_spaces():
    cfg = DramConfig(n_samples=60_000, burn_in=0, dr_enabled=False,
                     adapt_enabled=False, initial_step=0.4)
    chain = run_dram(box_target, np.full(1, 0.5), cfg, seed=3)
    x = chain.samples[:, 0]
    a_to_b = int(np.sum((x[:-1] < 0.5) & (x[1:] >= 0.5)))
    b_to_a = int(np.sum((x[:-1] >= 0.5) & (x[1:] < 0.5)))
    assert abs(a_to_b - b_to_a) <= 4 * math.sqrt(a_to_b + b_to_a)


def test_dram_rejects_non_finite_start():
    with pytest.raises(ConfigurationError):
        run_dram(box_target, np.array([2.0, 2.0]), DramConfig(n_samples=10,
                                                              burn_in=0))


def test_dram_stall_warning():
    calls = {"n": 0}

    def spike(x):
        # finite only at the exact start; every proposal is rejected
        calls["n"] += 1
        return 0.0 if np.array_equal(x, np.zeros(1)) else NEG_INF

    cfg = DramConfig(n_samples=6_000, burn_in=0, stall_window=5_000,
                     adapt_enabled=False)
    with pytest.warns(RuntimeWarning, match="stalled"):
        chain = run_dram(spike, np.zeros(1), cfg, seed=0)
    assert chain.accept_overall == 0.0


def test_dram_is_deterministic():
    cfg = DramConfig(n_samples=5_000, burn_in=1_000)
    a = run_dram(gaussian_target, np.zeros(3), cfg, seed=9)
    b = run_dram(gaussian_target, np.zeros(3), cfg, seed=9)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.accept_overall == b.accept_overall


def test_chain_thinning_and_retention():
    samples = np.arange(100, dtype=float).reshape(50, 2)
    chain = PosteriorChain(samples=samples, log_posterior=np.zeros(50),
                           burn_in=10, thin_to=5, seed=0,
                           accept_stage1=0.3, accept_stage2=0.1,
                           accept_overall=0.4)
    assert chain.retained().shape == (40, 2)
    thin = chain.thinned()
    assert thin.shape == (5, 2)
    np.testing.assert_array_equal(thin[0], samples[10])
    np.testing.assert_array_equal(thin[-1], samples[-1])
    assert chain.thinned(10_000).shape == (40, 2)  # capped at retained size


# ------------------------------------------------------------- likelihood

@pytest.fixture(scope="module")
def small_problem():
    detailed = generate_detailed(GenerationConfig(n_species=5, seed=19))
    reduced = subsample_reduced(detailed, 2)
    times = default_observation_times(10.0, 5)
    scenarios = sample_scenarios(3, 2, 2, 5, seed=4)
    obs = synthesize_observations(detailed, scenarios, times,
                                  sigma2_noise=1e-3, seed=5)
    return reduced, obs.restrict("calibration")


def test_likelihood_maximum_at_zero_residual(small_problem):
    reduced, obs_cal = small_problem
    ll = LogLikelihood(reduced, obs_cal)
    theta = np.array([-0.5, -0.2, -0.1, -0.3])
    states = ll.trajectories(theta)
    from glvdisc.data import ObservationSet
    perfect = ObservationSet(times=obs_cal.times, values=states.copy(),
                             truth=obs_cal.truth, sigma2_noise=1e-3,
                             scenarios=obs_cal.scenarios)
    ll_perfect = LogLikelihood(reduced, perfect)
    max_value = -0.5 * perfect.size * math.log(2 * math.pi * 1e-3)
    assert ll_perfect(theta) == pytest.approx(max_value)

    # one residual of size sqrt(sigma2) costs exactly 1/2
    bumped = states.copy()
    bumped[0, 0, 0] += math.sqrt(1e-3)
    one_off = ObservationSet(times=obs_cal.times, values=bumped,
                             truth=obs_cal.truth, sigma2_noise=1e-3,
                             scenarios=obs_cal.scenarios)
    assert LogLikelihood(reduced, one_off)(theta) == \
        pytest.approx(max_value - 0.5)


def test_likelihood_prefers_generating_parameters(small_problem):
    reduced, obs_cal = small_problem
    ll = LogLikelihood(reduced, obs_cal)
    theta_star = np.array([-0.5, -0.2, -0.1, -0.3])
    perturbed = theta_star.copy()
    perturbed[:2] *= 1.5  # +50% on the state coefficients
    truth = ll.trajectories(theta_star)

    from glvdisc.data import ObservationSet
    wins = 0
    for rep in range(100):
        noise = np.random.default_rng(rep).normal(
            0.0, math.sqrt(1e-3), size=truth.shape)
        obs = ObservationSet(times=obs_cal.times, values=truth + noise,
                             truth=truth, sigma2_noise=1e-3,
                             scenarios=obs_cal.scenarios)
        scorer = LogLikelihood(reduced, obs)
        wins += scorer(theta_star) > scorer(perturbed)
    assert wins >= 95


def test_likelihood_caches_trajectories(small_problem):
    reduced, obs_cal = small_problem
    ll = LogLikelihood(reduced, obs_cal)
    theta = np.array([-0.4, -0.4, -0.4, -0.4])
    first = ll.trajectories(theta)
    second = ll.trajectories(theta)
    assert first is second  # cache hit returns the stored array


def test_likelihood_dimension_check(small_problem):
    reduced, obs_cal = small_problem
    detailed = generate_detailed(GenerationConfig(n_species=5, seed=19))
    with pytest.raises(ConfigurationError):
        LogLikelihood(subsample_reduced(detailed, 3), obs_cal)


# -------------------------------------------------------- calibration run

def test_calibrate_smoke_chain_respects_support(small_problem):
    reduced, obs_cal = small_problem
    cfg = DramConfig(n_samples=2_000, burn_in=500, thin_to=100,
                     adapt_start=200, stall_window=2_000)
    chain, likelihood = calibrate(reduced, obs_cal, config=cfg, seed=1)
    prior = PriorSpec.default(4)
    kept = chain.retained()
    assert np.all(kept > prior.lower) and np.all(kept < prior.upper)
    assert np.all(np.isfinite(chain.retained_log_posterior()))
    assert 0.0 < chain.accept_overall < 1.0
    assert likelihood.n_evals >= cfg.n_samples


def test_posterior_mode_gate_skips_likelihood(small_problem):
    reduced, obs_cal = small_problem
    ll = LogLikelihood(reduced, obs_cal)
    target = make_log_posterior(PriorSpec.default(4), ll)
    before = ll.n_evals
    assert target(np.full(4, 1.0)) == NEG_INF  # outside support
    assert ll.n_evals == before  # no ODE work done


# -------------------------------------------------------------- predictive

def constant_chain(theta, n=500):
    return PosteriorChain(samples=np.tile(theta, (n, 1)),
                          log_posterior=np.zeros(n), burn_in=0,
                          thin_to=n, seed=0, accept_stage1=0.5,
                          accept_stage2=0.1, accept_overall=0.5)


def test_predictive_spread_is_noise_when_chain_degenerate(small_problem):
    reduced, obs_cal = small_problem
    theta = np.array([-0.5, -0.2, -0.1, -0.3])
    ens = posterior_predictive(constant_chain(theta, 2_000), reduced,
                               obs_cal.scenarios, obs_cal.times,
                               sigma2_noise=1e-3, n_draws=2_000, seed=2)
    assert ens.n_draws == 2_000 and ens.n_dropped == 0
    var = ens.replicates.var(axis=0, ddof=1)
    np.testing.assert_allclose(var, 1e-3, rtol=0.2)
    # constant chain: every model output is the same trajectory bit for bit
    assert np.all(ens.model_outputs == ens.model_outputs[0])


def test_predictive_single_draw(small_problem):
    reduced, obs_cal = small_problem
    theta = np.array([-0.5, -0.2, -0.1, -0.3])
    ens = posterior_predictive(constant_chain(theta, 50), reduced,
                               obs_cal.scenarios, obs_cal.times,
                               sigma2_noise=1e-3, n_draws=1, seed=3)
    assert ens.replicates.shape[0] == 1


def test_predictive_quantile_bands(small_problem):
    reduced, obs_cal = small_problem
    theta = np.array([-0.5, -0.2, -0.1, -0.3])
    ens = posterior_predictive(constant_chain(theta, 400), reduced,
                               obs_cal.scenarios, obs_cal.times,
                               sigma2_noise=1e-3, n_draws=400, seed=4)
    bands = ens.quantile_bands((0.5, 0.95))
    lo50, hi50 = bands[0.5]
    lo95, hi95 = bands[0.95]
    assert np.all(lo95 <= lo50) and np.all(hi50 <= hi95)
    assert np.all(lo50 <= hi50)
    inside = np.mean((ens.replicates >= lo95) & (ens.replicates <= hi95))
    assert 0.90 <= inside <= 1.0


def test_predictive_fails_loudly_when_draws_explode(small_problem):
    reduced, obs_cal = small_problem
    # wildly positive coefficients blow the dynamics up -> every draw drops
    bad = np.full(4, 1e160)
    with pytest.raises(PredictiveError):
        posterior_predictive(constant_chain(bad, 50), reduced,
                             obs_cal.scenarios, obs_cal.times,
                             sigma2_noise=1e-3, n_draws=20, seed=5)


def test_coordinate_accessor(small_problem):
    reduced, obs_cal = small_problem
    theta = np.array([-0.5, -0.2, -0.1, -0.3])
    ens = posterior_predictive(constant_chain(theta, 120), reduced,
                               obs_cal.scenarios, obs_cal.times,
                               sigma2_noise=1e-3, n_draws=120, seed=6)
    np.testing.assert_array_equal(ens.coordinate(1, 2, 0),
                                  ens.replicates[:, 1, 2, 0])


# ------------------------------------------------------------ persistence

def test_chain_save_load_round_trip(tmp_path):
    cfg = DramConfig(n_samples=3_000, burn_in=1_000, thin_to=200)
    chain = run_dram(gaussian_target, np.zeros(2), cfg, seed=21)
    path = tmp_path / "chain.csv"
    save_chain(chain, path)
    back = load_chain(path)
    np.testing.assert_array_equal(back.samples, chain.retained())
    np.testing.assert_array_equal(back.log_posterior,
                                  chain.retained_log_posterior())
    assert back.seed == chain.seed
    assert back.accept_overall == chain.accept_overall
    assert (tmp_path / "chain.diagnostics.json").exists()


def test_dram_config_validation():
    with pytest.raises(ConfigurationError):
        DramConfig(n_samples=0)
    with pytest.raises(ConfigurationError):
        DramConfig(burn_in=10, n_samples=10)
    with pytest.raises(ConfigurationError):
        DramConfig(dr_contraction=1.0)
    with pytest.raises(ConfigurationError):
        DramConfig(initial_step=0.0)
