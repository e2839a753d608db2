"""Random competitive Lotka-Volterra models and their subsampled reductions.

A detailed model couples ``n_species`` species through a symmetric,
entrywise non-positive, strictly diagonally dominant interaction matrix and a
constant positive growth-rate vector.  Off-diagonal interaction magnitudes are
lognormal draws mirrored across the diagonal; each diagonal magnitude is an
independent lognormal surplus added on top of the row sum of off-diagonal
magnitudes, which is exactly what makes strict diagonal dominance hold row by
row.  The growth rate is the largest diagonal magnitude, shared by all
species.

A reduced model keeps the first ``n_kept`` species: the top-left block of the
interaction matrix and the leading growth entries, nothing re-fit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .rng import make_rng

MODEL_SCHEMA = "glvdisc.model/1"


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs for drawing one random detailed model.

    sigma2_offdiag / sigma2_diag are the variances of the underlying normal
    in the lognormal draws (logN(0, sigma2) convention), for the off-diagonal
    interaction magnitudes and the diagonal surplus respectively.
    """

    n_species: int = 10
    sigma2_offdiag: float = 1.0
    sigma2_diag: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_species < 2:
            raise ConfigurationError("n_species must be at least 2")
        if self.sigma2_offdiag <= 0 or self.sigma2_diag <= 0:
            raise ConfigurationError("lognormal variances must be positive")


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass
class DetailedModel:
    """Full model: growth vector (n,) and interaction matrix (n, n)."""

    growth: np.ndarray
    interactions: np.ndarray
    config: GenerationConfig | None = None

    def __post_init__(self):
        self.growth = _as_readonly(self.growth)
        self.interactions = _as_readonly(self.interactions)
        n = self.growth.shape[0]
        if self.growth.ndim != 1 or self.interactions.shape != (n, n):
            raise ConfigurationError("growth must be (n,) and interactions (n, n)")
        if not np.all(self.growth > 0):
            raise ConfigurationError("growth rates must be strictly positive")

    @property
    def size(self) -> int:
        return self.growth.shape[0]

    @property
    def seed(self) -> int | None:
        return self.config.seed if self.config is not None else None


@dataclass
class ReducedModel:
    """Leading-species submodel of a detailed model."""

    growth: np.ndarray
    interactions: np.ndarray
    parent_size: int
    config: GenerationConfig | None = None

    def __post_init__(self):
        self.growth = _as_readonly(self.growth)
        self.interactions = _as_readonly(self.interactions)
        n = self.growth.shape[0]
        if self.growth.ndim != 1 or self.interactions.shape != (n, n):
            raise ConfigurationError("growth must be (n,) and interactions (n, n)")
        if not 1 <= n < self.parent_size:
            raise ConfigurationError("reduced size must lie in [1, parent_size)")

    @property
    def size(self) -> int:
        return self.growth.shape[0]


Model = DetailedModel | ReducedModel


def generate_detailed(config: GenerationConfig) -> DetailedModel:
    """Draw one detailed model.

    Draw order (the reproducibility contract for a given ``config.seed``):
    first the ``n(n-1)/2`` off-diagonal magnitudes as one lognormal block in
    row-major upper-triangle order, then the ``n`` diagonal surplus draws.
    """
    config.validate()
    n = config.n_species
    rng = make_rng(config.seed)

    offdiag = rng.lognormal(mean=0.0, sigma=math.sqrt(config.sigma2_offdiag),
                            size=n * (n - 1) // 2)
    surplus = rng.lognormal(mean=0.0, sigma=math.sqrt(config.sigma2_diag), size=n)

    mags = np.zeros((n, n))
    mags[np.triu_indices(n, k=1)] = offdiag
    mags = mags + mags.T

    diag = surplus + mags.sum(axis=0)
    interactions = -(mags + np.diag(diag))
    growth = np.full(n, diag.max())
    return DetailedModel(growth=growth, interactions=interactions, config=config)


def subsample_reduced(detailed: DetailedModel, n_kept: int) -> ReducedModel:
    """Keep the first ``n_kept`` species of ``detailed`` verbatim."""
    if not 1 <= n_kept < detailed.size:
        raise ValueError(f"n_kept must be in [1, {detailed.size - 1}], got {n_kept}")
    return ReducedModel(
        growth=detailed.growth[:n_kept].copy(),
        interactions=detailed.interactions[:n_kept, :n_kept].copy(),
        parent_size=detailed.size,
        config=detailed.config,
    )


@dataclass(frozen=True)
class StabilityReport:
    """Per-property diagnostic of the interaction-matrix structure."""

    symmetric: bool
    nonpositive: bool
    diagonally_dominant: bool
    max_asymmetry: float
    max_entry: float
    min_dominance_margin: float

    @property
    def passed(self) -> bool:
        return self.symmetric and self.nonpositive and self.diagonally_dominant


def check_stability(model: Model) -> StabilityReport:
    """Report symmetry, entrywise sign, and strict diagonal dominance.

    Purely diagnostic: hand-built models that violate the generator's
    structure are reported, not rejected.
    """
    a = model.interactions
    max_asym = float(np.abs(a - a.T).max())
    max_entry = float(a.max())
    absa = np.abs(a)
    margins = np.diag(absa) - (absa.sum(axis=1) - np.diag(absa))
    return StabilityReport(
        symmetric=max_asym == 0.0,
        nonpositive=max_entry <= 0.0,
        diagonally_dominant=bool(margins.min() > 0.0),
        max_asymmetry=max_asym,
        max_entry=max_entry,
        min_dominance_margin=float(margins.min()),
    )


def model_to_dict(model: Model) -> dict:
    """JSON-ready dict; interaction rows are stored row-major."""
    doc = {
        "schema": MODEL_SCHEMA,
        "kind": "reduced" if isinstance(model, ReducedModel) else "detailed",
        "size": model.size,
        "growth": model.growth.tolist(),
        "interactions": model.interactions.tolist(),
        "generation": None,
    }
    if model.config is not None:
        doc["generation"] = {
            "n_species": model.config.n_species,
            "sigma2_offdiag": model.config.sigma2_offdiag,
            "sigma2_diag": model.config.sigma2_diag,
            "seed": model.config.seed,
        }
    if isinstance(model, ReducedModel):
        doc["parent_size"] = model.parent_size
    return doc


def model_from_dict(doc: dict) -> Model:
    if doc.get("schema") != MODEL_SCHEMA:
        raise ConfigurationError(f"unsupported model schema: {doc.get('schema')!r}")
    config = None
    if doc.get("generation") is not None:
        g = doc["generation"]
        config = GenerationConfig(
            n_species=g["n_species"],
            sigma2_offdiag=g["sigma2_offdiag"],
            sigma2_diag=g["sigma2_diag"],
            seed=g["seed"],
        )
    growth = np.asarray(doc["growth"], dtype=float)
    interactions = np.asarray(doc["interactions"], dtype=float)
    if doc["kind"] == "reduced":
        return ReducedModel(growth=growth, interactions=interactions,
                            parent_size=doc["parent_size"], config=config)
    return DetailedModel(growth=growth, interactions=interactions, config=config)


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def load_model(path: str | Path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))
