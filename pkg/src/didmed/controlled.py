"""Controlled direct effects: τ̄(g,m) estimators and CDE curves.

τ̄(g,m) is the mean change the treated group would have seen under arm g
with the mediator pinned at m; the controlled direct effect is
τ_DE(m) = τ̄(1,m) − τ̄(0,m).  A discrete mediator admits an exact
indicator-based estimator.  A continuous one replaces the point mass with a
Gaussian kernel K_h and swaps the global outcome-change model for a degree-2
local polynomial in (M − m), fitted within arm g, because the global
interaction-linear model cannot bend in m the way the CDE target can.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .dataset import ObservationalDataset
from .design import DesignSpec, build_design
from .errors import ConfigError, DataError, EstimationError, InsufficientLocalDataError, UnsupportedLevelError
from .linalg import cross_product, solve_gram, stable_mean, stable_sum
from .natural import Z_95
from .nuisance import NuisanceSet
from .regression import KernelConfig, fit_local_polynomial, gaussian_kernel, kernel_weights

# Floor for the joint density denominator f̂(G=g, M=m | X).
CDE_DENSITY_FLOOR = 1e-4
# Minimum effective sample (kernel weights normalized so a unit exactly at m
# counts as 1) required by the smoothed estimator.
MIN_EFFECTIVE_N = 5.0
LOCAL_POLY_DEGREE = 2


@dataclass(frozen=True)
class ControlledEstimate:
    """τ̄̂(g,m) with influence-based inference and local-support diagnostics."""

    g: int
    m: float
    point: float
    influence_values: np.ndarray
    se: float
    ci_low: float
    ci_high: float
    effective_n: float
    bandwidth: float | None
    n_floored: int
    degenerate: bool = False


def _finalize(g: int, m: float, point: float, influence: np.ndarray,
              effective_n: float, bandwidth: float | None, n_floored: int) -> ControlledEstimate:
    n = influence.size
    se = float(np.sqrt(stable_mean(influence * influence) / n))
    influence = influence.copy()
    influence.setflags(write=False)
    return ControlledEstimate(
        g=g, m=m, point=point, influence_values=influence, se=se,
        ci_low=point - Z_95 * se, ci_high=point + Z_95 * se,
        effective_n=effective_n, bandwidth=bandwidth, n_floored=n_floored,
        degenerate=(se == 0.0),
    )


def _floored_joint(nuisances: NuisanceSet, cols, m, g: int) -> tuple[np.ndarray, int]:
    pi = nuisances.propensity_probabilities(cols)
    group_prob = pi if g == 1 else 1.0 - pi
    raw = group_prob * nuisances.mediator_density(cols, m, g)
    return np.maximum(raw, CDE_DENSITY_FLOOR), int(np.count_nonzero(raw < CDE_DENSITY_FLOOR))


def bar_tau_discrete(g: int, m_level: int, data: ObservationalDataset,
                     nuisances: NuisanceSet) -> ControlledEstimate:
    """Exact point-mass estimator of τ̄(g,m) for a discrete mediator.

    Solves P_n φ̂(g,m) = 0 with the point mass realized as I(M_i = m):
    the inverse weight is π̂(X) over the floored joint f̂(G=g, M=m | X).
    """
    if data.mediator_kind != "discrete":
        raise DataError("bar_tau_discrete needs a discrete mediator")
    level = int(m_level)
    cols = data.columns()
    g_vec = data.g.astype(float)
    dy = data.dy

    at_level = data.m == level
    cell = at_level & (data.g == g)
    cell_count = int(np.count_nonzero(cell))
    if cell_count == 0:
        counts = {arm: int(np.count_nonzero(at_level & (data.g == arm))) for arm in (0, 1)}
        raise UnsupportedLevelError(
            f"mediator level {level} has no units in group {g} "
            f"(level counts: group 0 = {counts[0]}, group 1 = {counts[1]})"
        )

    joint, n_floored = _floored_joint(nuisances, cols, level, g)
    pi = nuisances.propensity_probabilities(cols)
    delta_gm = nuisances.delta_hat(cols, g, float(level))

    weight = cell.astype(float) * pi / joint
    residual_term = weight * (dy - delta_gm)
    p_g = stable_mean(g_vec)
    point = stable_mean(residual_term + g_vec * delta_gm) / p_g
    influence = (residual_term + g_vec * (delta_gm - point)) / p_g
    return _finalize(g, float(level), point, influence,
                     effective_n=float(cell_count), bandwidth=None, n_floored=n_floored)


def bar_tau_continuous(g: int, m: float, data: ObservationalDataset,
                       nuisances: NuisanceSet, kernel: KernelConfig = KernelConfig(),
                       x_spec: DesignSpec | None = None) -> ControlledEstimate:
    """Kernel-smoothed estimator of τ̄(g,m) for a continuous mediator.

    The indicator becomes K_h(M_i − m); δ̂(g,·,·) comes from a degree-2 local
    polynomial in (M − m) fitted on arm g (globally linear in the x terms);
    the denominator is the floored Gaussian joint density times π̂.  The
    kernel-weighted residual subtracts the fitted surface at each unit's own
    mediator value, so its conditional mean vanishes wherever the fit is
    right and no first-order smoothing bias leaks in; the plug-in term
    freezes the surface at M = m, which is the quantity τ̄(g,m) averages.

    The local fit's offset coefficients carry kernel-rate noise that feeds
    the estimate through the residual term at the same order as the moment
    itself, so φ̂ adds the exact noise pass-through of the fit (zero-sum by
    its normal equations, leaving P_n φ̂ = 0 intact) and
    se = sqrt(P_n(φ̂²)/n) prices the local estimation error instead of
    understating it.  The bandwidth rule resolves on the arm-g mediator
    values.
    """
    if data.mediator_kind != "continuous":
        raise DataError("bar_tau_continuous needs a continuous mediator")
    m = float(m)
    cols = data.columns()
    g_vec = data.g.astype(float)
    dy = data.dy
    mask = data.g == g

    bandwidth = kernel.resolve_bandwidth(data.m[mask])
    if x_spec is None:
        x_spec = DesignSpec.from_labels(["1", *data.covariate_names])

    kernel_values = gaussian_kernel((data.m - m) / bandwidth)
    effective_n = stable_sum(kernel_values[mask]) / float(gaussian_kernel(0.0))
    if effective_n < MIN_EFFECTIVE_N:
        raise InsufficientLocalDataError(
            f"effective sample {effective_n:.2f} in group {g} at m={m:g} "
            f"is below {MIN_EFFECTIVE_N:g} (bandwidth {bandwidth:g})"
        )

    group_cols = {name: values[mask] for name, values in cols.items()}
    local_fit = fit_local_polynomial(group_cols, dy[mask], m, LOCAL_POLY_DEGREE,
                                     KernelConfig("gaussian", bandwidth), x_spec)
    delta_gm = local_fit.predict(cols)
    delta_at_own_m = local_fit.predict_at_mediator(cols)

    joint, n_floored = _floored_joint(nuisances, cols, m, g)
    pi = nuisances.propensity_probabilities(cols)

    kernel_mass = mask.astype(float) * kernel_weights(data.m, m, bandwidth)
    weight = kernel_mass * pi / joint
    residual = dy - delta_at_own_m
    residual_term = weight * residual
    p_g = stable_mean(g_vec)
    point = stable_mean(residual_term + g_vec * delta_gm) / p_g

    # Noise pass-through of the local fit: the estimate's gradient in the
    # fitted coefficients is q = P_n(G·b(m) − weight·b(M)), so each unit
    # moves the estimate by its own leverage on the fit, n·(b(M)'S⁻¹q) times
    # its kernel-weighted residual; the fit's normal equations make the
    # pass-through sum to zero.
    n = data.n
    offsets = data.m - m
    poly_columns = [offsets ** k for k in range(1, LOCAL_POLY_DEGREE + 1)]
    basis = np.column_stack([build_design(cols, x_spec)] + poly_columns)
    basis_at_m = np.concatenate([
        cross_product(basis[:, :len(x_spec)], g_vec) / n,
        np.zeros(LOCAL_POLY_DEGREE),
    ])
    gradient = basis_at_m - cross_product(basis, weight) / n
    leverage = basis @ solve_gram(local_fit.gram, gradient, allow_singular=True)
    pass_through = n * leverage * kernel_mass * residual
    # The solver's ridge jitter leaves a tiny residue in the analytically
    # zero-sum pass-through; recenter so P_n φ̂ = 0 holds exactly.
    pass_through = pass_through - stable_mean(pass_through)

    influence = (residual_term + g_vec * (delta_gm - point) + pass_through) / p_g
    return _finalize(g, m, point, influence, effective_n=float(effective_n),
                     bandwidth=bandwidth, n_floored=n_floored)


@dataclass(frozen=True)
class CdePoint:
    """One grid point: both arms plus their difference with inference."""

    m: float
    tau1: ControlledEstimate
    tau0: ControlledEstimate
    cde: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    significant: bool


def cde_from_arms(tau1: ControlledEstimate, tau0: ControlledEstimate) -> CdePoint:
    """Difference τ̄̂(1,m) − τ̄̂(0,m) with SE from the differenced influence vector."""
    influence = tau1.influence_values - tau0.influence_values
    n = influence.size
    point = tau1.point - tau0.point
    se = float(np.sqrt(stable_mean(influence * influence) / n))
    if se == 0.0:
        p_value = 1.0 if point == 0.0 else 0.0
    else:
        p_value = float(2.0 * norm.sf(abs(point / se)))
    return CdePoint(
        m=tau1.m, tau1=tau1, tau0=tau0, cde=point, se=se,
        ci_low=point - Z_95 * se, ci_high=point + Z_95 * se,
        p_value=p_value, significant=bool(p_value < 0.05),
    )


@dataclass(frozen=True)
class CdeCurve:
    """CDE over a mediator grid; skipped points carry their reasons."""

    grid: tuple[float, ...]
    points: tuple[CdePoint, ...]
    skipped: tuple[tuple[float, str], ...]
    bandwidth: float | None
    mediator_kind: str

    CSV_COLUMNS = ("m", "tau1", "se1", "tau0", "se0", "cde", "se_cde",
                   "ci_low", "ci_high", "significant", "effective_n1",
                   "effective_n0", "bandwidth")

    def rows(self) -> list[dict]:
        """Plot-ready rows in the documented column order."""
        out = []
        for pt in self.points:
            out.append({
                "m": pt.m,
                "tau1": pt.tau1.point, "se1": pt.tau1.se,
                "tau0": pt.tau0.point, "se0": pt.tau0.se,
                "cde": pt.cde, "se_cde": pt.se,
                "ci_low": pt.ci_low, "ci_high": pt.ci_high,
                "significant": int(pt.significant),
                "effective_n1": pt.tau1.effective_n,
                "effective_n0": pt.tau0.effective_n,
                "bandwidth": self.bandwidth,
            })
        return out


def cde_curve(grid, data: ObservationalDataset, nuisances: NuisanceSet,
              kernel: KernelConfig = KernelConfig(),
              x_spec: DesignSpec | None = None) -> CdeCurve:
    """τ̂_DE(m) across a strictly increasing mediator grid.

    A continuous mediator uses one shared bandwidth for both arms and every
    grid point (the kernel's rule resolved on the pooled mediator sample, or
    the user's fixed value), so the difference at each m compares identically
    smoothed arms and the curve carries a single bandwidth record.  Points
    without support in either arm are skipped with a warning record, never
    silently; significance flags are pointwise at the 5% level.
    """
    grid = [float(v) for v in np.asarray(grid, dtype=float).ravel()]
    if not grid:
        raise ConfigError("empty mediator grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("mediator grid must be strictly increasing")

    shared_bandwidth: float | None = None
    if data.mediator_kind == "continuous":
        shared_bandwidth = kernel.resolve_bandwidth(data.m)
        point_kernel = KernelConfig(kernel.kernel, shared_bandwidth)

    points: list[CdePoint] = []
    skipped: list[tuple[float, str]] = []
    for m in grid:
        try:
            if data.mediator_kind == "discrete":
                if m != int(m):
                    raise UnsupportedLevelError(f"{m:g} is not a level index")
                tau1 = bar_tau_discrete(1, int(m), data, nuisances)
                tau0 = bar_tau_discrete(0, int(m), data, nuisances)
            else:
                tau1 = bar_tau_continuous(1, m, data, nuisances, point_kernel, x_spec)
                tau0 = bar_tau_continuous(0, m, data, nuisances, point_kernel, x_spec)
        except (UnsupportedLevelError, InsufficientLocalDataError) as exc:
            warnings.warn(f"grid point m={m:g} skipped: {exc}", RuntimeWarning)
            skipped.append((m, str(exc)))
            continue
        points.append(cde_from_arms(tau1, tau0))

    if not points:
        raise EstimationError(
            f"every grid point was skipped ({len(skipped)} of {len(grid)}); "
            "the grid does not overlap the mediator support of both groups"
        )
    return CdeCurve(grid=tuple(grid), points=tuple(points), skipped=tuple(skipped),
                    bandwidth=shared_bandwidth, mediator_kind=data.mediator_kind)
