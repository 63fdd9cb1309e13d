"""Shared fixtures: simulated datasets, fitted nuisances, random panels."""

from __future__ import annotations

import numpy as np
import pytest

from didmed.dataset import ObservationalDataset
from didmed.design import DesignSpec
from didmed.nuisance import ContinuousMediatorModel, NuisanceSet, fit_nuisances
from didmed.regression import FittedLinearModel, FittedLogisticModel
from didmed.simulation import DgpConfig, analyst_specs, generate


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20230615)


@pytest.fixture(scope="session")
def s1_data() -> ObservationalDataset:
    return generate(DgpConfig(setting=1, panel="O", n=4000, seed=31))


@pytest.fixture(scope="session")
def s2_data() -> ObservationalDataset:
    return generate(DgpConfig(setting=2, panel="O", n=4000, seed=32))


@pytest.fixture(scope="session")
def s1_nuisances(s1_data):
    return fit_nuisances(s1_data, analyst_specs())


@pytest.fixture(scope="session")
def s2_nuisances(s2_data):
    return fit_nuisances(s2_data, analyst_specs())


def flat_nuisances(pi: float = 0.5, varpi: float = 0.5,
                   delta_coefficients=(0.0, 0.0, 0.0),
                   clip_level: float = 0.01) -> NuisanceSet:
    """Hand-built nuisance set with constant propensity surfaces.

    The outcome-change model uses the spec (1, G, M) with the given
    coefficients, and the mediator working model is standard normal in both
    groups.  Handy for closed-form checks of the estimator formulas.
    """
    from scipy.special import logit

    one = DesignSpec.from_labels(["1"])
    propensity = FittedLogisticModel(np.array([logit(pi)]), True, 1, spec=one)
    pseudo = FittedLogisticModel(np.array([logit(varpi), 0.0]), True, 1,
                                 spec=DesignSpec.from_labels(["1", "M"]))
    outcome = FittedLinearModel(np.asarray(delta_coefficients, dtype=float), 1.0,
                                spec=DesignSpec.from_labels(["1", "G", "M"]))
    mean_zero = FittedLinearModel(np.array([0.0]), 1.0, spec=one)
    dist = ContinuousMediatorModel({0: mean_zero, 1: mean_zero}, {0: 1.0, 1: 1.0})
    return NuisanceSet(propensity=propensity, pseudo_propensity=pseudo,
                       outcome_change=outcome, mediator_mean_control=mean_zero,
                       mediator_dist=dist, clip_level=clip_level,
                       mediator_kind="continuous")


def random_dataset(rng: np.random.Generator, n: int = 120,
                   kind: str = "continuous") -> ObservationalDataset:
    """A small arbitrary-but-valid panel for identity and invariance checks."""
    x1 = rng.standard_normal(n)
    x2 = rng.standard_normal(n)
    g = (rng.uniform(size=n) < 0.5).astype(int)
    if g.sum() == 0:
        g[0] = 1
    if g.sum() == n:
        g[0] = 0
    if kind == "discrete":
        probs = 1.0 / (1.0 + np.exp(-(0.4 * x1 + 0.5 * g)))
        m = (rng.uniform(size=n) < probs).astype(float)
    else:
        m = 0.5 * x1 - 0.2 * x2 + 0.8 * g + rng.standard_normal(n)
    y0 = x1 + rng.standard_normal(n)
    y1 = y0 + 0.7 * g + 0.4 * m + 0.3 * x2 + rng.standard_normal(n)
    return ObservationalDataset(
        g=g, m=m, y0=y0, y1=y1,
        covariates=np.column_stack([x1, x2]), covariate_names=("X1", "X2"),
        mediator_kind=kind,
    )
