"""Forward dynamics: competitive growth models and their enriched variants.

The enriched model augments the reduced dynamics with a per-species linear
damping acting on concentration and on the magnitude of the drift,

    dx_i/dt = R_i(x) + x_i * state_coeff_i + |dx_i/dt| * rate_coeff_i,

with both coefficient vectors constrained non-positive so the correction
can only remove mass.  Two treatments of the |dx/dt| factor are supported:

* ``"explicit"`` (default): the drift magnitude |R(x)| of the unenriched
  model stands in for |dx/dt|, keeping the right-hand side closed-form.
* ``"implicit"``: each component is solved exactly by sign split,
  dx = c/(1 - rate_coeff) when the damped drift c is non-negative and
  dx = c/(1 + rate_coeff) otherwise; the latter has no solution when
  rate_coeff <= -1, which raises :class:`NoSolutionError`.

Trajectories are produced by an adaptive Dormand-Prince 5(4) scheme with
dense output (see ``_kernels``), so observation states come from the
solver's interpolant rather than forced step endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import (ConfigurationError, IntegrationError, NegativeStateError,
                     NoSolutionError, StepSizeUnderflow)
from .models import DetailedModel, ReducedModel


@dataclass(frozen=True, eq=False)
class DiscrepancyParams:
    """Non-positive damping coefficients of the enrichment operator.

    state_coeff multiplies the species concentration, rate_coeff the
    magnitude of its time derivative; one entry of each per species.
    """

    state_coeff: np.ndarray
    rate_coeff: np.ndarray

    def __post_init__(self):
        sc = np.asarray(self.state_coeff, dtype=float)
        rc = np.asarray(self.rate_coeff, dtype=float)
        if sc.ndim != 1 or rc.ndim != 1 or sc.shape != rc.shape:
            raise ConfigurationError(
                "state_coeff and rate_coeff must be 1-d and equally long")
        if not (np.all(np.isfinite(sc)) and np.all(np.isfinite(rc))):
            raise ConfigurationError("discrepancy coefficients must be finite")
        if np.any(sc > 0.0) or np.any(rc > 0.0):
            raise ConfigurationError(
                "discrepancy coefficients must be non-positive")
        object.__setattr__(self, "state_coeff", _readonly(sc))
        object.__setattr__(self, "rate_coeff", _readonly(rc))

    @property
    def n_species(self) -> int:
        return self.state_coeff.shape[0]

    def to_vector(self) -> np.ndarray:
        """Pack as (state_coeff..., rate_coeff...) for samplers."""
        return np.concatenate([self.state_coeff, self.rate_coeff])

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "DiscrepancyParams":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size % 2 != 0:
            raise ConfigurationError("parameter vector must have even length")
        half = theta.size // 2
        return cls(state_coeff=theta[:half], rate_coeff=theta[half:])

    @classmethod
    def zeros(cls, n_species: int) -> "DiscrepancyParams":
        return cls(np.zeros(n_species), np.zeros(n_species))


@dataclass(eq=False)
class State:
    """Instantaneous non-negative concentrations at a time point."""

    concentrations: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.concentrations, dtype=float)
        if x.ndim != 1:
            raise ConfigurationError("concentrations must be a 1-d vector")
        if not np.all(np.isfinite(x)) or np.any(x < 0.0):
            raise ConfigurationError(
                "concentrations must be finite and non-negative")
        self.concentrations = x


@dataclass(frozen=True)
class SolverConfig:
    """Error control and safety settings for the adaptive integrator.

    States that undershoot zero by no more than negativity_floor are
    clamped to zero; deeper excursions abort with NegativeStateError.
    The floor defaults to 100x atol: error control legitimately admits
    per-step excursions of order atol during extinction transients, while
    genuine solver failures overshoot by many orders more.
    """

    rtol: float = 1e-6
    atol: float = 1e-8
    max_step: float = np.inf
    t_final: float = 10.0
    negativity_floor: float = 1e-6

    def __post_init__(self):
        if self.rtol <= 0.0 or self.atol <= 0.0:
            raise ConfigurationError("tolerances must be positive")
        if self.max_step <= 0.0:
            raise ConfigurationError("max_step must be positive")
        if self.t_final <= 0.0:
            raise ConfigurationError("t_final must be positive")
        if self.negativity_floor < 0.0:
            raise ConfigurationError("negativity_floor must be >= 0")

    def with_t_final(self, t_final: float) -> "SolverConfig":
        return replace(self, t_final=float(t_final))


@dataclass(frozen=True)
class SolverStats:
    """Work counters reported by the integrator."""

    accepted_steps: int
    rejected_steps: int
    rhs_evals: int


@dataclass(eq=False)
class Trajectory:
    """States observed along one integration, tagged by model kind."""

    tag: str
    times: np.ndarray
    states: np.ndarray
    stats: SolverStats

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or x.ndim != 2 or x.shape[0] != t.shape[0]:
            raise ConfigurationError(
                "times must be 1-d and states (n_times, n_species)")
        if t.size > 1 and np.any(np.diff(t) < 0.0):
            raise ConfigurationError("times must be non-decreasing")
        if np.any(x < 0.0):
            raise ConfigurationError("trajectory states must be non-negative")
        self.times = _readonly(t)
        self.states = _readonly(x)

    @property
    def n_species(self) -> int:
        return self.states.shape[1]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def rhs_glv(model: DetailedModel | ReducedModel, x: np.ndarray) -> np.ndarray:
    """Drift of the plain competitive model, diag(x)(r + A x)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.size,):
        raise ConfigurationError(
            f"state has {x.shape} entries, model expects ({model.size},)")
    return x * (model.growth + model.interactions @ x)


def solve_implicit_rate(c: np.ndarray, rate_coeff: np.ndarray) -> np.ndarray:
    """Solve dx = c + rate_coeff*|dx| componentwise for dx.

    For c >= 0 the unique solution is c/(1 - rate_coeff); for c < 0 it is
    c/(1 + rate_coeff) provided rate_coeff > -1, otherwise no non-negative
    |dx| satisfies the equation and NoSolutionError is raised.
    """
    c, rate_coeff = np.broadcast_arrays(np.asarray(c, dtype=float),
                                        np.asarray(rate_coeff, dtype=float))
    neg = c < 0.0
    if np.any(neg & (rate_coeff <= -1.0)):
        bad = np.nonzero(neg & (rate_coeff <= -1.0))[0]
        raise NoSolutionError(
            "implicit rate equation has no solution for species "
            f"{bad.tolist()} (negative drift with rate_coeff <= -1)")
    denom = np.where(neg, 1.0 + rate_coeff, 1.0 - rate_coeff)
    return c / denom


def rhs_enriched(model: ReducedModel, params: DiscrepancyParams,
                 x: np.ndarray, mode: str = "explicit") -> np.ndarray:
    """Drift of the enriched model under either rate-magnitude treatment."""
    if params.n_species != model.size:
        raise ConfigurationError(
            f"discrepancy has {params.n_species} species, model {model.size}")
    drift = rhs_glv(model, x)
    x = np.asarray(x, dtype=float)
    if mode == "explicit":
        return drift + x * params.state_coeff + np.abs(drift) * params.rate_coeff
    if mode == "implicit":
        return solve_implicit_rate(x * params.state_coeff + drift,
                                   params.rate_coeff)
    raise ConfigurationError(f"unknown enrichment mode {mode!r}")


_MODE_CODES = {"explicit": _kernels.MODE_EXPLICIT,
               "implicit": _kernels.MODE_IMPLICIT}


def integrate(model: DetailedModel | ReducedModel,
              initial: State | np.ndarray,
              obs_times: np.ndarray,
              solver: SolverConfig | None = None,
              params: DiscrepancyParams | None = None,
              mode: str = "explicit",
              tag: str | None = None) -> Trajectory:
    """Integrate the model forward and sample states at obs_times.

    With params=None this integrates the plain competitive dynamics of
    either model kind; passing params integrates the enriched model (the
    model must then be a ReducedModel carrier of the reduced drift).
    """
    solver = solver or SolverConfig()
    if mode not in _MODE_CODES:
        raise ConfigurationError(f"unknown enrichment mode {mode!r}")
    x0 = initial.concentrations if isinstance(initial, State) else \
        np.asarray(initial, dtype=float)
    if x0.shape != (model.size,):
        raise ConfigurationError(
            f"initial state has shape {x0.shape}, expected ({model.size},)")
    if not np.all(np.isfinite(x0)) or np.any(x0 < 0.0):
        raise ConfigurationError(
            "initial concentrations must be finite and non-negative")

    obs = np.asarray(obs_times, dtype=float)
    if obs.ndim != 1 or obs.size == 0:
        raise ConfigurationError("obs_times must be a non-empty 1-d array")
    if np.any(np.diff(obs) < 0.0):
        raise ConfigurationError("obs_times must be sorted")
    if obs[0] < 0.0 or obs[-1] > solver.t_final:
        raise ConfigurationError(
            f"obs_times must lie within [0, {solver.t_final}]")

    if params is None:
        d = DiscrepancyParams.zeros(model.size)
        kind = "detailed" if isinstance(model, DetailedModel) else "reduced"
    else:
        if params.n_species != model.size:
            raise ConfigurationError(
                f"discrepancy has {params.n_species} species, "
                f"model {model.size}")
        d = params
        kind = "enriched"

    states, status, acc, rej, nfev, t_reached = _kernels.integrate_glv(
        np.ascontiguousarray(model.growth),
        np.ascontiguousarray(model.interactions),
        np.ascontiguousarray(d.state_coeff),
        np.ascontiguousarray(d.rate_coeff),
        _MODE_CODES[mode],
        np.ascontiguousarray(x0),
        float(solver.t_final),
        np.ascontiguousarray(obs),
        float(solver.rtol), float(solver.atol),
        float(solver.max_step), float(solver.negativity_floor),
    )
    if status == _kernels.STATUS_STEP_UNDERFLOW:
        raise StepSizeUnderflow(
            f"step size underflow at t={t_reached:.6g} "
            f"after {acc} accepted / {rej} rejected steps")
    if status == _kernels.STATUS_NEGATIVE_STATE:
        raise NegativeStateError(
            f"state fell below -{solver.negativity_floor:g} "
            f"near t={t_reached:.6g}")
    if status == _kernels.STATUS_NO_SOLUTION:
        raise NoSolutionError(
            f"implicit rate equation became unsolvable near t={t_reached:.6g}"
            " (negative drift with rate_coeff <= -1)")
    if status != _kernels.STATUS_OK:  # pragma: no cover - defensive
        raise IntegrationError(f"integrator returned status {status}")

    return Trajectory(tag=tag or kind, times=obs, states=states,
                      stats=SolverStats(accepted_steps=acc,
                                        rejected_steps=rej,
                                        rhs_evals=nfev))
