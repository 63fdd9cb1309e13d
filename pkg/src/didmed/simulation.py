"""Monte Carlo study: data-generating processes, truths, comparator, harness.

Two synthetic settings (continuous and binary mediator) with three panels:

* Panel O — every analyst working model is correctly specified.
* Panel A — the outcome equations change, so the outcome-change and
  imputation models become misspecified while the assignment and mediator
  models stay correct.
* Panel B — the assignment mechanism changes (probit with an interaction),
  so both propensity-style models become misspecified while the outcome-side
  models stay correct.

The analyst's working models are FIXED across panels; panels alter only the
truth.  True estimand values come from a large Monte Carlo oracle that
simulates the potential outcomes directly and conditions on the treated
group.  The harness replicates generation + estimation with per-replication
child seeds split from a base seed, so results do not depend on how many
workers run the replications.
"""

from __future__ import annotations

import functools
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit
from scipy.stats import norm

from .controlled import bar_tau_continuous, bar_tau_discrete, cde_from_arms
from .dataset import ObservationalDataset
from .design import DesignSpec, build_design
from .errors import DataError, DidmedError
from .linalg import gram_inverse, gram_matrix, stable_mean, stable_sum
from .natural import Z_95, EffectEstimate, natural_effects
from .nuisance import NuisanceSpecs, fit_nuisances
from .regression import KernelConfig, fit_ols

PANELS = ("O", "A", "B")
SETTINGS = (1, 2)
NATURAL_ESTIMANDS = ("NIE", "NDE", "TE")
CONTROLLED_ESTIMANDS = ("bar_tau_1_0", "bar_tau_0_0", "cde_0")
ESTIMATORS = ("regression_based", "proposed")

# Fixed seed for the truth oracle so reports are reproducible byte-for-byte.
TRUTH_SEED = 202306
_ORACLE_CHUNK = 1_000_000


@dataclass(frozen=True)
class DgpConfig:
    """One simulation cell: setting, misspecification panel, sample size, seed."""

    setting: int
    panel: str
    n: int
    seed: int

    def __post_init__(self) -> None:
        if self.setting not in SETTINGS:
            raise DataError(f"setting must be 1 or 2, got {self.setting}")
        if self.panel not in PANELS:
            raise DataError(f"panel must be one of {PANELS}, got {self.panel}")
        if self.n < 50:
            raise DataError(f"n must be at least 50, got {self.n}")


# ---- data-generating process ----

def _assignment_probability(panel: str, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    if panel == "B":
        return norm.cdf(0.3 + 0.4 * x1 + 0.5 * x2 + 0.3 * x1 * x2)
    return expit(0.3 + 0.4 * x1 + 0.5 * x2)


def _mediator_potential(setting: int, x1: np.ndarray, x2: np.ndarray,
                        g: np.ndarray | float, noise: np.ndarray) -> np.ndarray:
    index = 0.6 * x1 - 0.3 * x2 + g
    if setting == 1:
        return index + noise
    # binary: one shared uniform couples the two potential values per unit
    return (noise < norm.cdf(index)).astype(float)


def _y0_potential(panel: str, x1: np.ndarray, x2: np.ndarray,
                  u: np.ndarray, eps0: np.ndarray) -> np.ndarray:
    trend = 2.0 * x1 * np.log1p(np.abs(x2)) if panel == "A" else 2.0 * x1
    return trend + u + eps0


def _y1_potential(panel: str, x1: np.ndarray, x2: np.ndarray, u: np.ndarray,
                  eps1: np.ndarray, g: np.ndarray | float,
                  m: np.ndarray | float) -> np.ndarray:
    if panel == "A":
        return (x1 + x2) * x2 + g + 0.5 * (1.0 + 0.5 * g * x2) * m + u + eps1
    return x1 + x2 + g + 0.5 * (1.0 + 0.4 * x2) * m + u + eps1


def generate(config: DgpConfig, rng: np.random.Generator | None = None) -> ObservationalDataset:
    """Draw one observed sample from the configured DGP.

    Draw order is fixed (X1, X2, u, mediator noise, ε₀, ε₁, assignment
    uniform) so a seed pins the sample exactly.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    n = config.n
    x1 = rng.standard_normal(n)
    x2 = rng.standard_normal(n)
    u = rng.standard_normal(n)
    m_noise = rng.standard_normal(n) if config.setting == 1 else rng.uniform(size=n)
    eps0 = 0.5 * rng.standard_normal(n)
    eps1 = 0.5 * rng.standard_normal(n)
    g = (rng.uniform(size=n) < _assignment_probability(config.panel, x1, x2)).astype(int)

    m = _mediator_potential(config.setting, x1, x2, g, m_noise)
    y0 = _y0_potential(config.panel, x1, x2, u, eps0)
    y1 = _y1_potential(config.panel, x1, x2, u, eps1, g, m)
    return ObservationalDataset(
        g=g, m=m, y0=y0, y1=y1,
        covariates=np.column_stack([x1, x2]), covariate_names=("X1", "X2"),
        mediator_kind="continuous" if config.setting == 1 else "discrete",
    )


# ---- truths ----

@dataclass(frozen=True)
class TruthSet:
    """Oracle values of every reported estimand for one (setting, panel)."""

    setting: int
    panel: str
    nie: float
    nde: float
    te: float
    bar_tau_1_0: float
    bar_tau_0_0: float
    cde_0: float
    tau11: float
    tau00: float
    tau01: float
    mc_se: dict
    oracle_draws: int

    def value(self, estimand: str) -> float:
        return {
            "NIE": self.nie, "NDE": self.nde, "TE": self.te,
            "bar_tau_1_0": self.bar_tau_1_0, "bar_tau_0_0": self.bar_tau_0_0,
            "cde_0": self.cde_0,
            "tau11": self.tau11, "tau00": self.tau00, "tau01": self.tau01,
        }[estimand]

    def to_dict(self) -> dict:
        return {
            "setting": self.setting, "panel": self.panel,
            "NIE": self.nie, "NDE": self.nde, "TE": self.te,
            "bar_tau_1_0": self.bar_tau_1_0, "bar_tau_0_0": self.bar_tau_0_0,
            "cde_0": self.cde_0,
            "tau11": self.tau11, "tau00": self.tau00, "tau01": self.tau01,
            "mc_se": dict(self.mc_se), "oracle_draws": self.oracle_draws,
        }


@functools.lru_cache(maxsize=32)
def compute_truths(setting: int, panel: str, oracle_draws: int,
                   seed: int = TRUTH_SEED) -> TruthSet:
    """Monte Carlo oracle for the estimand definitions.

    Simulates all potential outcomes, conditions on simulated G=1, and
    averages each estimand's defining contrast; the per-estimand Monte Carlo
    standard error is recorded alongside.  Draws are chunked so memory stays
    flat at any draw count.
    """
    if oracle_draws < 10**6:
        raise DataError("the truth oracle needs at least 1e6 draws")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, setting, ord(panel))))
    keys = ("NIE", "NDE", "TE", "bar_tau_1_0", "bar_tau_0_0", "cde_0",
            "tau11", "tau00", "tau01")
    totals = {k: 0.0 for k in keys}
    squares = {k: 0.0 for k in keys}
    treated_total = 0

    remaining = oracle_draws
    while remaining > 0:
        n = min(_ORACLE_CHUNK, remaining)
        remaining -= n
        x1 = rng.standard_normal(n)
        x2 = rng.standard_normal(n)
        u = rng.standard_normal(n)
        m_noise = rng.standard_normal(n) if setting == 1 else rng.uniform(size=n)
        eps0 = 0.5 * rng.standard_normal(n)
        eps1 = 0.5 * rng.standard_normal(n)
        treated = rng.uniform(size=n) < _assignment_probability(panel, x1, x2)

        x1, x2, u = x1[treated], x2[treated], u[treated]
        m_noise, eps0, eps1 = m_noise[treated], eps0[treated], eps1[treated]
        treated_total += x1.size

        m1 = _mediator_potential(setting, x1, x2, 1.0, m_noise)
        m0 = _mediator_potential(setting, x1, x2, 0.0, m_noise)
        y0 = _y0_potential(panel, x1, x2, u, eps0)
        y1_0_m1 = _y1_potential(panel, x1, x2, u, eps1, 0.0, m1)
        y1_0_m0 = _y1_potential(panel, x1, x2, u, eps1, 0.0, m0)
        y1_1_m1 = _y1_potential(panel, x1, x2, u, eps1, 1.0, m1)
        y1_1_at0 = _y1_potential(panel, x1, x2, u, eps1, 1.0, 0.0)
        y1_0_at0 = _y1_potential(panel, x1, x2, u, eps1, 0.0, 0.0)

        contrasts = {
            "NIE": y1_0_m1 - y1_0_m0,
            "NDE": y1_1_m1 - y1_0_m1,
            "TE": y1_1_m1 - y1_0_m0,
            "bar_tau_1_0": y1_1_at0 - y0,
            "bar_tau_0_0": y1_0_at0 - y0,
            "cde_0": y1_1_at0 - y1_0_at0,
            "tau11": y1_1_m1 - y0,
            "tau00": y1_0_m0 - y0,
            "tau01": y1_0_m1 - y0,
        }
        for key, values in contrasts.items():
            totals[key] += float(np.sum(values))
            squares[key] += float(np.sum(values * values))

    means = {k: totals[k] / treated_total for k in keys}
    mc_se = {
        k: float(np.sqrt(max(squares[k] / treated_total - means[k] ** 2, 0.0) / treated_total))
        for k in keys
    }
    return TruthSet(
        setting=setting, panel=panel,
        nie=means["NIE"], nde=means["NDE"], te=means["TE"],
        bar_tau_1_0=means["bar_tau_1_0"], bar_tau_0_0=means["bar_tau_0_0"],
        cde_0=means["cde_0"],
        tau11=means["tau11"], tau00=means["tau00"], tau01=means["tau01"],
        mc_se=mc_se, oracle_draws=oracle_draws,
    )


# ---- regression-based comparator ----

def _plain_estimate(estimand: str, point: float, variance: float, n_treated: int) -> EffectEstimate:
    """Comparator estimates carry delta-method SEs and no influence vector."""
    se = float(np.sqrt(max(variance, 0.0)))
    if se == 0.0:
        p_value = 1.0 if point == 0.0 else 0.0
    else:
        p_value = float(2.0 * norm.sf(abs(point / se)))
    return EffectEstimate(
        estimand=estimand, point=point, influence_values=np.empty(0), se=se,
        ci_low=point - Z_95 * se, ci_high=point + Z_95 * se,
        p_value=p_value, n_treated=n_treated, degenerate=(se == 0.0),
    )


def _ols_with_covariance(columns, spec: DesignSpec, response: np.ndarray):
    design = build_design(columns, spec)
    model = fit_ols(design, response, spec=spec)
    covariance = model.residual_variance * gram_inverse(gram_matrix(design))
    return model, covariance


def regression_based(data: ObservationalDataset) -> dict[str, EffectEstimate]:
    """Product-of-coefficients comparator.

    Mediator OLS M ~ 1 + G + X (linear probability when M is binary) gives
    the G coefficient a; outcome OLS ΔY ~ 1 + G + M + X gives b_G and b_M.
    NIE = a·b_M with the Sobel variance a²·var(b_M) + b_M²·var(a);
    NDE = b_G; TE = NIE + NDE with the joint delta-method variance.
    """
    cols = data.columns()
    x = list(data.covariate_names)
    mediator_spec = DesignSpec.from_labels(["1", "G", *x])
    outcome_spec = DesignSpec.from_labels(["1", "G", "M", *x])

    med_model, med_cov = _ols_with_covariance(cols, mediator_spec, data.m)
    out_model, out_cov = _ols_with_covariance(cols, outcome_spec, data.dy)

    idx_a = mediator_spec.labels.index("G")
    idx_bg = outcome_spec.labels.index("G")
    idx_bm = outcome_spec.labels.index("M")
    a = float(med_model.coefficients[idx_a])
    b_g = float(out_model.coefficients[idx_bg])
    b_m = float(out_model.coefficients[idx_bm])
    var_a = float(med_cov[idx_a, idx_a])
    var_bg = float(out_cov[idx_bg, idx_bg])
    var_bm = float(out_cov[idx_bm, idx_bm])
    cov_bg_bm = float(out_cov[idx_bg, idx_bm])

    n_treated = int(np.count_nonzero(data.g))
    nie_var = a * a * var_bm + b_m * b_m * var_a
    te_var = nie_var + var_bg + 2.0 * a * cov_bg_bm
    return {
        "NIE": _plain_estimate("NIE", a * b_m, nie_var, n_treated),
        "NDE": _plain_estimate("NDE", b_g, var_bg, n_treated),
        "TE": _plain_estimate("TE", a * b_m + b_g, te_var, n_treated),
    }


def regression_based_controlled(data: ObservationalDataset,
                                m: float) -> dict[str, EffectEstimate]:
    """Comparator for controlled effects: outcome-model predictions at M=m.

    τ̄(g,m) is the treated-group mean prediction of the no-interaction
    outcome model at (G=g, M=m); SEs are delta-method forms c̄'Σc̄ on the
    treated-mean design row.  Without interactions the difference row is the
    G column, so the CDE comparator collapses to b_G with its OLS SE.
    """
    cols = data.columns()
    x = list(data.covariate_names)
    outcome_spec = DesignSpec.from_labels(["1", "G", "M", *x])
    out_model, out_cov = _ols_with_covariance(cols, outcome_spec, data.dy)

    treated = data.g == 1
    n_treated = int(np.count_nonzero(treated))
    estimates: dict[str, EffectEstimate] = {}
    rows = {}
    for g in (1, 0):
        design_g = build_design(cols, outcome_spec, {"G": float(g), "M": m})
        mean_row = np.array([stable_mean(design_g[treated, j])
                             for j in range(design_g.shape[1])])
        rows[g] = mean_row
        point = stable_mean(design_g[treated] @ out_model.coefficients)
        variance = float(mean_row @ out_cov @ mean_row)
        estimates[f"bar_tau_{g}_0" if m == 0 else f"bar_tau_{g}_{m:g}"] = _plain_estimate(
            f"bar_tau_{g}_{m:g}", point, variance, n_treated)
    diff_row = rows[1] - rows[0]
    cde_point = float(diff_row @ out_model.coefficients)
    cde_var = float(diff_row @ out_cov @ diff_row)
    estimates["cde_0" if m == 0 else f"cde_{m:g}"] = _plain_estimate(
        f"cde_{m:g}", cde_point, cde_var, n_treated)
    return estimates


# ---- harness ----

def analyst_specs() -> NuisanceSpecs:
    """The fixed working models every simulated analyst fits.

    The outcome-change terms nest the Panel-O truth
    ΔY = −X1 + X2 + G + 0.5(1+0.4X2)M + noise, plus the remaining two-way
    products and the G:M:X2 triple so the model carries a full G-M-X
    interaction structure.
    """
    return NuisanceSpecs(
        propensity=DesignSpec.from_labels(["1", "X1", "X2"]),
        pseudo_propensity=DesignSpec.from_labels(["1", "M", "X1", "X2"]),
        outcome_change=DesignSpec.from_labels(
            ["1", "G", "M", "X1", "X2", "G:M", "G:X1", "G:X2", "M:X1", "M:X2", "G:M:X2"]),
        mediator_mean=DesignSpec.from_labels(["1", "X1", "X2"]),
    )


def child_seed(base_seed: int, replication: int) -> int:
    """Deterministic per-replication seed, independent of worker scheduling."""
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=(replication,))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def run_replication(setting: int, panel: str, n: int, seed: int,
                    include_controlled: bool = True) -> dict:
    """Generate one sample and run both estimators; returns per-estimand
    (point, se, ci_low, ci_high) tuples keyed by (estimator, estimand)."""
    data = generate(DgpConfig(setting=setting, panel=panel, n=n, seed=seed))
    out: dict[tuple[str, str], tuple[float, float, float, float]] = {}

    nuisances = fit_nuisances(data, analyst_specs())
    for name, est in natural_effects(data, nuisances).items():
        out[("proposed", name)] = (est.point, est.se, est.ci_low, est.ci_high)
    for name, est in regression_based(data).items():
        out[("regression_based", name)] = (est.point, est.se, est.ci_low, est.ci_high)

    if include_controlled:
        if setting == 2:
            tau1 = bar_tau_discrete(1, 0, data, nuisances)
            tau0 = bar_tau_discrete(0, 0, data, nuisances)
        else:
            tau1 = bar_tau_continuous(1, 0.0, data, nuisances, KernelConfig())
            tau0 = bar_tau_continuous(0, 0.0, data, nuisances, KernelConfig())
        cde = cde_from_arms(tau1, tau0)
        out[("proposed", "bar_tau_1_0")] = (tau1.point, tau1.se, tau1.ci_low, tau1.ci_high)
        out[("proposed", "bar_tau_0_0")] = (tau0.point, tau0.se, tau0.ci_low, tau0.ci_high)
        out[("proposed", "cde_0")] = (cde.cde, cde.se, cde.ci_low, cde.ci_high)
        for name, est in regression_based_controlled(data, 0.0).items():
            out[("regression_based", name)] = (est.point, est.se, est.ci_low, est.ci_high)
    return out


@dataclass(frozen=True)
class MetricRow:
    bias: float
    avg_se: float
    sd: float
    cp: float


@dataclass(frozen=True)
class SimulationCellReport:
    setting: int
    panel: str
    n: int
    replications: int
    truths: TruthSet
    metrics: dict
    child_seeds: tuple[int, ...]
    failures: tuple[tuple[int, int, str], ...]

    @property
    def n_failures(self) -> int:
        return len(self.failures)


@dataclass(frozen=True)
class SimulationReport:
    cells: tuple[SimulationCellReport, ...]
    replications: int
    base_seed: int
    include_controlled: bool
    runtime_seconds: float


def _aggregate_cell(setting: int, panel: str, n: int, replications: int,
                    results: list, seeds: list[int], truths: TruthSet,
                    include_controlled: bool) -> SimulationCellReport:
    failures = tuple((idx, seeds[idx], message) for idx, message in
                     ((i, r) for i, r in enumerate(results) if isinstance(r, str)))
    ok = [r for r in results if not isinstance(r, str)]

    estimands = list(NATURAL_ESTIMANDS)
    if include_controlled:
        estimands += list(CONTROLLED_ESTIMANDS)
    metrics: dict[tuple[str, str], MetricRow] = {}
    for estimator in ESTIMATORS:
        for estimand in estimands:
            truth = truths.value(estimand)
            points = np.array([r[(estimator, estimand)][0] for r in ok])
            ses = np.array([r[(estimator, estimand)][1] for r in ok])
            lows = np.array([r[(estimator, estimand)][2] for r in ok])
            highs = np.array([r[(estimator, estimand)][3] for r in ok])
            mean_point = stable_mean(points)
            sd = float(np.sqrt(stable_sum((points - mean_point) ** 2) / max(points.size - 1, 1)))
            metrics[(estimator, estimand)] = MetricRow(
                bias=mean_point - truth,
                avg_se=stable_mean(ses),
                sd=sd,
                cp=stable_mean(((lows <= truth) & (truth <= highs)).astype(float)),
            )
    return SimulationCellReport(
        setting=setting, panel=panel, n=n, replications=replications,
        truths=truths, metrics=metrics, child_seeds=tuple(seeds), failures=failures,
    )


def run_monte_carlo(cells: Sequence, replications: int, base_seed: int, *,
                    n_jobs: int = 1, include_controlled: bool = True,
                    oracle_draws: int = 10**6,
                    truth_seed: int = TRUTH_SEED) -> SimulationReport:
    """Replicate generation + estimation over a grid of simulation cells.

    ``cells`` holds (setting, panel, n) triples.  Each replication gets a
    child seed split from ``base_seed`` by replication index, so any worker
    count yields bit-identical reports.  Replications that raise a package
    error are recorded (index, seed, message) and excluded from the metrics.
    """
    if replications < 1:
        raise DataError("replications must be at least 1")
    started = time.perf_counter()
    seeds = [child_seed(base_seed, r) for r in range(replications)]

    def one(setting: int, panel: str, n: int, seed: int):
        try:
            return run_replication(setting, panel, n, seed, include_controlled)
        except DidmedError as exc:
            return f"{type(exc).__name__}: {exc}"

    reports = []
    for cell in cells:
        setting, panel, n = int(cell[0]), str(cell[1]), int(cell[2])
        truths = compute_truths(setting, panel, oracle_draws, truth_seed)
        results = Parallel(n_jobs=n_jobs)(
            delayed(one)(setting, panel, n, seed) for seed in seeds)
        reports.append(_aggregate_cell(setting, panel, n, replications, results,
                                       seeds, truths, include_controlled))
    return SimulationReport(
        cells=tuple(reports), replications=replications, base_seed=base_seed,
        include_controlled=include_controlled,
        runtime_seconds=time.perf_counter() - started,
    )
