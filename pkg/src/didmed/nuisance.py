"""Nuisance models: propensity, pseudo-propensity, outcome change, imputation.

Four fitted objects drive every estimator in the package:

* ``propensity``        π̂(x)    = P̂(G=1 | X=x), logistic.
* ``pseudo_propensity`` ϖ̂(m,x) = P̂(G=1 | M=m, X=x), logistic.  Its odds
  absorb the mediator density ratio, so no conditional density has to be
  estimated for the natural-effect estimators.
* ``outcome_change``    δ̂(g,m,x) = Ê(Y1−Y0 | G=g, M=m, X=x), linear.
* ``mediator_dist``     f̂(m | g, x): per-group Gaussian working model for a
  continuous mediator, per-level logistic models for a discrete one.  Needed
  by the imputation ν̂(0,x) and by the controlled-effect denominators.

ϖ̂ and π̂ are fitted separately and never forced to be mutually compatible.
"""

from __future__ import annotations

import warnings
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .dataset import ObservationalDataset
from .design import DesignSpec, build_design
from .errors import (
    DataError,
    DegenerateSampleError,
    DidmedError,
    SchemaError,
    UnsupportedLevelError,
)
from .regression import FittedLinearModel, FittedLogisticModel, fit_logistic, fit_ols

DEFAULT_CLIP_LEVEL = 0.01
# Base floor for joint density denominators; NuisanceSet's default joint floor
# is clip_level times this, controlled-effect estimators pass it directly.
DENSITY_FLOOR = 1e-4
# Fraction of clipped units above which overlap diagnostics warn.
CLIP_WARN_FRACTION = 0.05


@dataclass(frozen=True)
class NuisanceSpecs:
    """Design specs for the four nuisance models.

    ``propensity`` and ``mediator_mean`` may reference covariates only;
    ``pseudo_propensity`` adds M; ``outcome_change`` adds G and M.
    """

    propensity: DesignSpec
    pseudo_propensity: DesignSpec
    outcome_change: DesignSpec
    mediator_mean: DesignSpec

    @classmethod
    def defaults(cls, covariate_names: tuple[str, ...]) -> "NuisanceSpecs":
        x = list(covariate_names)
        return cls(
            propensity=DesignSpec.from_labels(["1", *x]),
            pseudo_propensity=DesignSpec.from_labels(["1", "M", *x]),
            outcome_change=DesignSpec.from_labels(["1", "G", "M", *x, "G:M"]),
            mediator_mean=DesignSpec.from_labels(["1", *x]),
        )

    def validate(self, covariate_names: tuple[str, ...]) -> None:
        covs = set(covariate_names)
        allowed = {
            "propensity": covs,
            "pseudo_propensity": covs | {"M"},
            "outcome_change": covs | {"M", "G"},
            "mediator_mean": covs,
        }
        for name, spec in (("propensity", self.propensity),
                           ("pseudo_propensity", self.pseudo_propensity),
                           ("outcome_change", self.outcome_change),
                           ("mediator_mean", self.mediator_mean)):
            extra = spec.columns_used - allowed[name]
            if extra:
                raise SchemaError(f"{name} spec references disallowed columns {sorted(extra)}")


class ContinuousMediatorModel:
    """Homoscedastic Gaussian working model per group: M | G=g, X ~ N(x'β_g, σ_g²)."""

    def __init__(self, mean_models: dict[int, FittedLinearModel], residual_sd: dict[int, float]):
        for g, sd in residual_sd.items():
            if not sd > 0.0:
                raise DegenerateSampleError(f"group {g} mediator residual sd must be positive")
        self.mean_models = mean_models
        self.residual_sd = residual_sd

    def mean(self, g: int, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        return self.mean_models[g].predict(columns)

    def density(self, m, g: int, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        return norm.pdf(m, loc=self.mean(g, columns), scale=self.residual_sd[g])


class DiscreteMediatorModel:
    """Per-level conditional probabilities P̂(M=k | G=g, X=x), k = 0..K−1.

    Binary mediators use a single logistic fit per group (complement for
    level 0); K > 2 uses one-vs-rest logistic fits renormalized onto the
    probability simplex.  Levels absent from a group get probability zero
    there.
    """

    def __init__(self, n_levels: int, level_models: dict[int, list[FittedLogisticModel | None]],
                 levels_present: dict[int, np.ndarray]):
        self.n_levels = n_levels
        self.level_models = level_models
        self.levels_present = levels_present

    def probabilities(self, g: int, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """(n × K) matrix of level probabilities; rows sum to one."""
        n = len(next(iter(columns.values())))
        present = self.levels_present[g]
        if int(present.sum()) == 1:
            out = np.zeros((n, self.n_levels))
            out[:, int(np.flatnonzero(present)[0])] = 1.0
            return out
        if self.n_levels == 2:
            p1 = self.level_models[g][1].predict_proba(columns)
            return np.column_stack([1.0 - p1, p1])
        out = np.zeros((n, self.n_levels))
        for k in range(self.n_levels):
            if present[k]:
                out[:, k] = self.level_models[g][k].predict_proba(columns)
        out /= out.sum(axis=1, keepdims=True)
        return out

    def density(self, m, g: int, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        if np.ndim(m) != 0:
            raise DataError("discrete mediator density expects a scalar level")
        level = int(round(float(m)))
        if not 0 <= level < self.n_levels:
            raise UnsupportedLevelError(
                f"level {level} outside the fitted range 0..{self.n_levels - 1}"
            )
        return self.probabilities(g, columns)[:, level]


@dataclass(frozen=True)
class NuisanceSet:
    """Immutable bundle of fitted nuisance models plus the clip level.

    ``mediator_mean_control`` backs the continuous-mediator imputation ν̂;
    it is the control-group mean model (continuous) or the control-group
    level-1 logistic (binary discrete), and None for K > 2 levels, where the
    exact mixture over ``mediator_dist`` is used instead.
    """

    propensity: FittedLogisticModel
    pseudo_propensity: FittedLogisticModel
    outcome_change: FittedLinearModel
    mediator_mean_control: FittedLinearModel | FittedLogisticModel | None
    mediator_dist: ContinuousMediatorModel | DiscreteMediatorModel
    clip_level: float
    mediator_kind: str

    # ---- propensity surfaces ----

    def propensity_probabilities(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """π̂(x) before positivity clipping (prediction-level clip only)."""
        return self.propensity.predict_proba(columns)

    def propensity_odds(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """Clipped odds π̂/(1−π̂), with π̂ forced into [clip, 1−clip]."""
        pi = np.clip(self.propensity_probabilities(columns),
                     self.clip_level, 1.0 - self.clip_level)
        return pi / (1.0 - pi)

    def pseudo_propensity_probabilities(self, columns: Mapping[str, np.ndarray],
                                        m=None) -> np.ndarray:
        overrides = None if m is None else {"M": m}
        return self.pseudo_propensity.predict_proba(columns, overrides)

    def pseudo_propensity_odds(self, columns: Mapping[str, np.ndarray], m=None) -> np.ndarray:
        """Clipped odds ϖ̂/(1−ϖ̂) at the observed M (or an override)."""
        varpi = np.clip(self.pseudo_propensity_probabilities(columns, m),
                        self.clip_level, 1.0 - self.clip_level)
        return varpi / (1.0 - varpi)

    # ---- outcome-change and imputation surfaces ----

    def delta_hat(self, columns: Mapping[str, np.ndarray], g: int, m=None) -> np.ndarray:
        """δ̂(g, m, x) with G overridden to g and M to m (observed M if None)."""
        overrides: dict[str, float | np.ndarray] = {"G": float(g)}
        if m is not None:
            overrides["M"] = m
        return self.outcome_change.predict(columns, overrides)

    def nu_hat(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """ν̂(0,x) = imputed Ê{δ̂(0,M,X) | G=0, X=x}.

        Discrete mediator: the exact mixture Σ_k δ̂(0,k,x)·P̂(M=k|G=0,x).
        Continuous mediator: δ̂(0, m̄̂₀(x), x), exact because product-term
        designs are linear in M for fixed x.
        """
        if isinstance(self.mediator_dist, DiscreteMediatorModel):
            probs = self.mediator_dist.probabilities(0, columns)
            n = probs.shape[0]
            out = np.zeros(n)
            for k in range(self.mediator_dist.n_levels):
                out += probs[:, k] * self.delta_hat(columns, 0, float(k))
            return out
        control_mean = self.mediator_dist.mean(0, columns)
        return self.delta_hat(columns, 0, control_mean)

    # ---- mediator density surfaces ----

    def mediator_density(self, columns: Mapping[str, np.ndarray], m, g: int) -> np.ndarray:
        """f̂(m | g, x): probability mass (discrete) or Gaussian density."""
        return self.mediator_dist.density(m, g, columns)

    def joint_density(self, columns: Mapping[str, np.ndarray], m, g: int,
                      floor: float | None = None) -> np.ndarray:
        """f̂(G=g, M=m | x) = P̂(G=g|x)·f̂(m|g,x), floored from below.

        Default floor is clip_level·1e−4; the controlled-effect estimators
        pass the looser 1e−4 documented there.
        """
        if floor is None:
            floor = self.clip_level * DENSITY_FLOOR
        pi = self.propensity_probabilities(columns)
        group_prob = pi if g == 1 else 1.0 - pi
        return np.maximum(group_prob * self.mediator_density(columns, m, g), floor)


def _annotate(name: str, exc: DidmedError) -> DidmedError:
    return type(exc)(f"while fitting the {name} model: {exc}")


def fit_nuisances(data: ObservationalDataset, specs: NuisanceSpecs | None = None,
                  clip_level: float = DEFAULT_CLIP_LEVEL) -> NuisanceSet:
    """Fit all nuisance models on one dataset.

    π̂ = logistic(G ~ propensity spec); ϖ̂ = logistic(G ~ pseudo spec);
    δ̂ = OLS(ΔY ~ outcome spec over all units); mediator models per kind on
    the per-group subsamples.  Fit errors are re-raised annotated with which
    nuisance failed.
    """
    if not 0.0 < clip_level < 0.5:
        raise DataError(f"clip_level must lie in (0, 0.5), got {clip_level}")
    if specs is None:
        specs = NuisanceSpecs.defaults(data.covariate_names)
    specs.validate(data.covariate_names)

    cols = data.columns()
    g = data.g.astype(float)

    try:
        propensity = fit_logistic(build_design(cols, specs.propensity), g,
                                  spec=specs.propensity)
    except DidmedError as exc:
        raise _annotate("propensity", exc) from exc
    try:
        pseudo = fit_logistic(build_design(cols, specs.pseudo_propensity), g,
                              spec=specs.pseudo_propensity)
    except DidmedError as exc:
        raise _annotate("pseudo-propensity", exc) from exc
    try:
        outcome = fit_ols(build_design(cols, specs.outcome_change), data.dy,
                          spec=specs.outcome_change)
    except DidmedError as exc:
        raise _annotate("outcome-change", exc) from exc

    try:
        if data.mediator_kind == "continuous":
            dist = _fit_continuous_mediator(data, specs.mediator_mean)
            mean_control: FittedLinearModel | FittedLogisticModel | None = dist.mean_models[0]
        else:
            dist = _fit_discrete_mediator(data, specs.mediator_mean)
            mean_control = dist.level_models[0][1] if dist.n_levels == 2 else None
    except DidmedError as exc:
        raise _annotate("mediator-distribution", exc) from exc

    return NuisanceSet(propensity=propensity, pseudo_propensity=pseudo,
                       outcome_change=outcome, mediator_mean_control=mean_control,
                       mediator_dist=dist, clip_level=clip_level,
                       mediator_kind=data.mediator_kind)


def _group_columns(data: ObservationalDataset, mask: np.ndarray) -> dict[str, np.ndarray]:
    cols = {"M": data.m[mask]}
    for j, name in enumerate(data.covariate_names):
        cols[name] = data.covariates[mask, j]
    return cols


def _fit_continuous_mediator(data: ObservationalDataset,
                             mean_spec: DesignSpec) -> ContinuousMediatorModel:
    mean_models: dict[int, FittedLinearModel] = {}
    residual_sd: dict[int, float] = {}
    for g in (0, 1):
        mask = data.g == g
        cols = _group_columns(data, mask)
        model = fit_ols(build_design(cols, mean_spec), data.m[mask], spec=mean_spec)
        mean_models[g] = model
        if model.residual_variance <= 0.0:
            raise DegenerateSampleError(f"group {g} mediator values have no residual spread")
        residual_sd[g] = float(np.sqrt(model.residual_variance))
    return ContinuousMediatorModel(mean_models, residual_sd)


def _fit_discrete_mediator(data: ObservationalDataset,
                           mean_spec: DesignSpec) -> DiscreteMediatorModel:
    n_levels = int(data.n_mediator_levels)
    level_models: dict[int, list[FittedLogisticModel | None]] = {}
    levels_present: dict[int, np.ndarray] = {}
    for g in (0, 1):
        mask = data.g == g
        cols = _group_columns(data, mask)
        m_group = data.m[mask]
        present = np.array([bool(np.any(m_group == k)) for k in range(n_levels)])
        levels_present[g] = present
        models: list[FittedLogisticModel | None] = [None] * n_levels
        if int(present.sum()) > 1:
            design = build_design(cols, mean_spec)
            if n_levels == 2:
                models[1] = fit_logistic(design, (m_group == 1).astype(float), spec=mean_spec)
            else:
                for k in range(n_levels):
                    if present[k]:
                        models[k] = fit_logistic(design, (m_group == k).astype(float),
                                                 spec=mean_spec)
        level_models[g] = models
    return DiscreteMediatorModel(n_levels, level_models, levels_present)


@dataclass(frozen=True)
class OverlapReport:
    """Positivity / overlap diagnostics for one fitted dataset."""

    propensity_min: float
    propensity_max: float
    pseudo_propensity_min: float
    pseudo_propensity_max: float
    density_ratio_min: float
    density_ratio_max: float
    clipped_propensity_n: int
    clipped_pseudo_n: int
    clip_level: float
    n: int
    mediator_support: dict
    warnings: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "propensity_range": [self.propensity_min, self.propensity_max],
            "pseudo_propensity_range": [self.pseudo_propensity_min, self.pseudo_propensity_max],
            "density_ratio_proxy_range": [self.density_ratio_min, self.density_ratio_max],
            "clipped_propensity_n": self.clipped_propensity_n,
            "clipped_pseudo_propensity_n": self.clipped_pseudo_n,
            "clip_level": self.clip_level,
            "n": self.n,
            "mediator_support": self.mediator_support,
            "warnings": list(self.warnings),
        }


def overlap_diagnostics(data: ObservationalDataset, nuisances: NuisanceSet) -> OverlapReport:
    """Min/max of the fitted odds surfaces, clipping counts, mediator support.

    The density-ratio proxy is pseudo-odds / propensity-odds, the fitted
    stand-in for f̂(m|1,x)/f̂(m|0,x).  Warns when more than 5% of units are
    clipped on either surface.
    """
    cols = data.columns()
    clip = nuisances.clip_level
    pi = nuisances.propensity_probabilities(cols)
    varpi = nuisances.pseudo_propensity_probabilities(cols)
    clipped_pi = int(np.count_nonzero((pi < clip) | (pi > 1.0 - clip)))
    clipped_varpi = int(np.count_nonzero((varpi < clip) | (varpi > 1.0 - clip)))
    ratio = nuisances.pseudo_propensity_odds(cols) / nuisances.propensity_odds(cols)

    support: dict = {}
    for g in (0, 1):
        m_group = data.m[data.g == g]
        if data.mediator_kind == "discrete":
            support[f"group_{g}_level_counts"] = {
                str(k): int(np.count_nonzero(m_group == k))
                for k in range(int(data.n_mediator_levels))
            }
        else:
            qs = np.percentile(m_group, [0.0, 25.0, 50.0, 75.0, 100.0])
            support[f"group_{g}_quartiles"] = [float(q) for q in qs]

    notes = []
    for label, count in (("propensity", clipped_pi), ("pseudo-propensity", clipped_varpi)):
        fraction = count / data.n
        if fraction > CLIP_WARN_FRACTION:
            message = (f"{fraction:.1%} of units clipped on the {label} surface "
                       f"at clip_level={clip:g}; overlap looks thin")
            warnings.warn(message, RuntimeWarning)
            notes.append(message)

    return OverlapReport(
        propensity_min=float(pi.min()), propensity_max=float(pi.max()),
        pseudo_propensity_min=float(varpi.min()), pseudo_propensity_max=float(varpi.max()),
        density_ratio_min=float(ratio.min()), density_ratio_max=float(ratio.max()),
        clipped_propensity_n=clipped_pi, clipped_pseudo_n=clipped_varpi,
        clip_level=clip, n=data.n, mediator_support=support,
        warnings=tuple(notes),
    )
