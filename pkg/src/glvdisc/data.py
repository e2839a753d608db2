"""Scenario sampling and synthetic noisy observations.

A scenario is one initial-condition vector; the first ``n_observed``
species are the ones the reduced model keeps and the only ones observed.
Observations come from integrating the detailed model per scenario,
recording the observed species at the observation grid, and adding i.i.d.
Gaussian measurement noise.  The noiseless truth is retained alongside so
downstream checks can separate model error from noise.

Scenarios are tagged calibration or validation; the calibration block
always comes first so the partition is a simple index boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import read_json, standard_meta, write_csv, write_json
from .dynamics import SolverConfig, integrate
from .errors import ConfigurationError, IntegrationError
from .models import DetailedModel
from .rng import STREAM_NOISE, STREAM_SCENARIOS, make_rng

OBSERVATIONS_SCHEMA = "glvdisc.observations/1"

CALIBRATION = "calibration"
VALIDATION = "validation"


@dataclass(eq=False)
class Scenario:
    """One initial-condition draw with its partition tag.

    initial_full covers every species of the detailed model; the leading
    n_observed entries are the reduced set's initial concentrations.
    """

    id: int
    partition: str
    initial_full: np.ndarray
    n_observed: int

    def __post_init__(self):
        if self.partition not in (CALIBRATION, VALIDATION):
            raise ConfigurationError(
                f"partition must be {CALIBRATION!r} or {VALIDATION!r}")
        x = np.asarray(self.initial_full, dtype=float)
        if x.ndim != 1 or not np.all(np.isfinite(x)) or np.any(x <= 0.0):
            raise ConfigurationError(
                "initial concentrations must be finite and strictly positive")
        if not 1 <= self.n_observed <= x.shape[0]:
            raise ConfigurationError(
                "n_observed must lie in [1, len(initial_full)]")
        x.setflags(write=False)
        self.initial_full = x

    @property
    def initial_observed(self) -> np.ndarray:
        return self.initial_full[:self.n_observed]


def sample_scenarios(n_total: int, n_calibration: int, n_observed: int,
                     n_species: int, ic_range: tuple[float, float] = (0.5, 2.0),
                     seed: int = 0) -> list[Scenario]:
    """Draw scenario initial conditions i.i.d. uniform over ic_range.

    The reduced set's initials and the hidden species' initials come from
    one per-scenario stream, so scenario k is reproducible in isolation.
    Calibration scenarios occupy indices 0..n_calibration-1.
    """
    low, high = float(ic_range[0]), float(ic_range[1])
    if not 0.0 < low < high:
        raise ConfigurationError("ic_range must satisfy 0 < low < high")
    if n_total < 2:
        raise ConfigurationError("need at least 2 scenarios")
    if not 0 <= n_calibration <= n_total:
        raise ConfigurationError("n_calibration must lie in [0, n_total]")
    if not 1 <= n_observed <= n_species:
        raise ConfigurationError("n_observed must lie in [1, n_species]")

    scenarios = []
    for k in range(n_total):
        rng = make_rng(seed, STREAM_SCENARIOS, k)
        initial = rng.uniform(low, high, size=n_species)
        partition = CALIBRATION if k < n_calibration else VALIDATION
        scenarios.append(Scenario(id=k, partition=partition,
                                  initial_full=initial,
                                  n_observed=n_observed))
    return scenarios


@dataclass(eq=False)
class ObservationSet:
    """Noisy observations y[k, j, i] plus the noiseless truth.

    Axes: scenario k, observation time j, observed species i.  The noise
    variance is known and fixed; it is not an inference target.
    """

    times: np.ndarray
    values: np.ndarray
    truth: np.ndarray
    sigma2_noise: float
    scenarios: list[Scenario]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.truth, dtype=float)
        if t.ndim != 1 or v.ndim != 3 or v.shape != w.shape:
            raise ConfigurationError(
                "values/truth must be (n_scenarios, n_times, n_observed)")
        if v.shape[0] != len(self.scenarios) or v.shape[1] != t.shape[0]:
            raise ConfigurationError("observation axes mismatch scenarios/times")
        if self.sigma2_noise <= 0.0:
            raise ConfigurationError("sigma2_noise must be positive")
        n_obs = {sc.n_observed for sc in self.scenarios}
        if n_obs and n_obs != {v.shape[2]}:
            raise ConfigurationError(
                "scenario n_observed inconsistent with value array")
        tags = [sc.partition for sc in self.scenarios]
        if tags != sorted(tags):  # calibration < validation alphabetically
            raise ConfigurationError(
                "calibration scenarios must precede validation scenarios")
        for a in (t, v, w):
            a.setflags(write=False)
        self.times, self.values, self.truth = t, v, w

    @property
    def n_scenarios(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def n_observed(self) -> int:
        return self.values.shape[2]

    @property
    def n_calibration(self) -> int:
        return sum(sc.partition == CALIBRATION for sc in self.scenarios)

    @property
    def n_validation(self) -> int:
        return self.n_scenarios - self.n_calibration

    @property
    def size(self) -> int:
        return int(np.prod(self.values.shape))

    def restrict(self, partition: str) -> "ObservationSet":
        """The sub-set for one partition; same code path for both tags."""
        keep = [i for i, sc in enumerate(self.scenarios)
                if sc.partition == partition]
        if not keep:
            raise ConfigurationError(f"no scenarios tagged {partition!r}")
        return ObservationSet(times=self.times.copy(),
                              values=self.values[keep],
                              truth=self.truth[keep],
                              sigma2_noise=self.sigma2_noise,
                              scenarios=[self.scenarios[i] for i in keep])


def default_observation_times(t_final: float = 10.0,
                              n_times: int = 10) -> np.ndarray:
    """Uniform grid j*t_final/n_times, j=1..n_times (t=0 is the known IC)."""
    if t_final <= 0 or n_times < 1:
        raise ConfigurationError("t_final and n_times must be positive")
    return t_final * np.arange(1, n_times + 1) / n_times


def synthesize_observations(detailed: DetailedModel,
                            scenarios: list[Scenario],
                            obs_times: np.ndarray,
                            sigma2_noise: float = 1e-3,
                            seed: int = 0,
                            solver: SolverConfig | None = None
                            ) -> ObservationSet:
    """Integrate the detailed model per scenario and add Gaussian noise."""
    if not scenarios:
        raise ConfigurationError("scenarios must be non-empty")
    if sigma2_noise <= 0.0:
        raise ConfigurationError("sigma2_noise must be positive")
    obs_times = np.asarray(obs_times, dtype=float)
    if solver is None:
        solver = SolverConfig(t_final=float(obs_times[-1]))

    n_observed = scenarios[0].n_observed
    truth = np.empty((len(scenarios), obs_times.shape[0], n_observed))
    values = np.empty_like(truth)
    for idx, sc in enumerate(scenarios):
        if sc.initial_full.shape[0] != detailed.size:
            raise ConfigurationError(
                f"scenario {sc.id} has {sc.initial_full.shape[0]} species, "
                f"detailed model has {detailed.size}")
        try:
            traj = integrate(detailed, sc.initial_full, obs_times,
                             solver=solver)
        except IntegrationError as exc:
            raise type(exc)(f"scenario {sc.id}: {exc}") from exc
        truth[idx] = traj.states[:, :n_observed]
        noise_rng = make_rng(seed, STREAM_NOISE, sc.id)
        values[idx] = truth[idx] + noise_rng.normal(
            0.0, np.sqrt(sigma2_noise), size=truth[idx].shape)
    return ObservationSet(times=obs_times, values=values, truth=truth,
                          sigma2_noise=sigma2_noise, scenarios=scenarios)


def observations_to_dict(obs: ObservationSet) -> dict:
    return {
        "schema": OBSERVATIONS_SCHEMA,
        "times": obs.times.tolist(),
        "sigma2_noise": obs.sigma2_noise,
        "scenarios": [{"id": sc.id, "partition": sc.partition,
                       "initial_full": sc.initial_full.tolist(),
                       "n_observed": sc.n_observed}
                      for sc in obs.scenarios],
        "values": obs.values.tolist(),
        "truth": obs.truth.tolist(),
    }


def observations_from_dict(doc: dict) -> ObservationSet:
    if doc.get("schema") != OBSERVATIONS_SCHEMA:
        raise ConfigurationError(
            f"unsupported observations schema: {doc.get('schema')!r}")
    scenarios = [Scenario(id=d["id"], partition=d["partition"],
                          initial_full=np.asarray(d["initial_full"]),
                          n_observed=d["n_observed"])
                 for d in doc["scenarios"]]
    return ObservationSet(times=np.asarray(doc["times"], dtype=float),
                          values=np.asarray(doc["values"], dtype=float),
                          truth=np.asarray(doc["truth"], dtype=float),
                          sigma2_noise=doc["sigma2_noise"],
                          scenarios=scenarios)


def save_observations(obs: ObservationSet, path: str | Path,
                      meta: dict | None = None) -> None:
    write_json(path, observations_to_dict(obs),
               meta or standard_meta())


def load_observations(path: str | Path) -> ObservationSet:
    return observations_from_dict(read_json(path))


def observations_to_csv(obs: ObservationSet, path: str | Path,
                        meta: dict | None = None) -> None:
    """Flat mirror: one row per (scenario, time, species) entry."""
    rows = []
    for k, sc in enumerate(obs.scenarios):
        for j, t in enumerate(obs.times):
            for i in range(obs.n_observed):
                rows.append([sc.id, sc.partition, i, j, repr(float(t)),
                             repr(float(obs.values[k, j, i])),
                             repr(float(obs.truth[k, j, i]))])
    write_csv(path, ["scenario", "partition", "species", "time_index",
                     "time", "value", "truth"], rows,
              meta or standard_meta())
