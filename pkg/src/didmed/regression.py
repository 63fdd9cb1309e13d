"""Regression machinery: OLS, IRLS logistic, and kernel-weighted local polynomials.

These are the only model fitters in the package; every nuisance function is
built from them.  Fits are deterministic and permutation-invariant because
all reductions over units go through :mod:`didmed.linalg`.
"""

from __future__ import annotations

import warnings
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .design import DesignSpec, build_design
from .errors import (
    ConfigError,
    DataError,
    DegenerateSampleError,
    EstimationError,
    InsufficientLocalDataError,
    SeparationError,
    SingularFitError,
)
from .linalg import cross_product, gram_matrix, solve_gram, stable_sum

# Logistic predictions are clipped to this open interval for numeric safety;
# positivity-style trimming happens downstream at a looser level.
PROBABILITY_CLIP = 1e-6
IRLS_MAX_ITER = 100
IRLS_TOL = 1e-8
SEPARATION_NORM = 1e4

SQRT_2PI = float(np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class FittedLinearModel:
    """OLS (or weighted LS) fit; prediction needs the originating spec."""

    coefficients: np.ndarray
    residual_variance: float
    spec: DesignSpec | None = None

    def predict(self, columns: Mapping[str, np.ndarray],
                overrides: Mapping[str, float] | None = None) -> np.ndarray:
        if self.spec is None:
            raise EstimationError("model was fitted from a bare matrix; no spec to predict with")
        design = build_design(columns, self.spec, overrides)
        return design @ self.coefficients


@dataclass(frozen=True)
class FittedLogisticModel:
    """Maximum-likelihood logistic fit via IRLS."""

    coefficients: np.ndarray
    converged: bool
    iterations: int
    spec: DesignSpec | None = None

    def predict_proba(self, columns: Mapping[str, np.ndarray],
                      overrides: Mapping[str, float] | None = None) -> np.ndarray:
        if self.spec is None:
            raise EstimationError("model was fitted from a bare matrix; no spec to predict with")
        design = build_design(columns, self.spec, overrides)
        return np.clip(expit(design @ self.coefficients),
                       PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)


@dataclass(frozen=True)
class KernelConfig:
    """Kernel identifier plus a bandwidth value or selection rule."""

    kernel: str = "gaussian"
    bandwidth: float | str = "silverman"

    def __post_init__(self) -> None:
        if self.kernel != "gaussian":
            raise ConfigError(f"unsupported kernel {self.kernel!r}; only 'gaussian' is implemented")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ConfigError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not (float(self.bandwidth) > 0):
            raise ConfigError("bandwidth must be positive")

    def resolve_bandwidth(self, values: np.ndarray) -> float:
        if isinstance(self.bandwidth, str):
            return silverman_bandwidth(values)
        return float(self.bandwidth)


def gaussian_kernel(u: np.ndarray) -> np.ndarray:
    """Standard normal density kernel K(u) = φ(u)."""
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / SQRT_2PI


def kernel_weights(values: np.ndarray, target: float, bandwidth: float) -> np.ndarray:
    """K_h(values − target) = K((values − target)/h)/h."""
    return gaussian_kernel((np.asarray(values, dtype=float) - target) / bandwidth) / bandwidth


def _validate_design(design: np.ndarray, response: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2:
        raise DataError("design must be a 2-d matrix")
    if response.shape != (design.shape[0],):
        raise DataError("response length does not match design rows")
    if not np.all(np.isfinite(design)):
        raise DataError("design contains non-finite values")
    if not np.all(np.isfinite(response)):
        raise DataError("response contains non-finite values")
    return design, response


def fit_ols(design: np.ndarray, response: np.ndarray, *,
            weights: np.ndarray | None = None,
            spec: DesignSpec | None = None,
            allow_singular: bool = False) -> FittedLinearModel:
    """Least squares of ``response`` on ``design``.

    Parameters
    ----------
    design : (n, p) matrix, n ≥ p.
    response : length-n vector.
    weights : optional nonnegative per-row weights (used by the local
        polynomial fitter); plain OLS when omitted.
    spec : optional DesignSpec recorded on the fitted model for prediction.
    allow_singular : ridge-regularize rank-deficient directions instead of
        raising; only kernel-weighted local fits should set this.

    Returns
    -------
    FittedLinearModel with ``residual_variance`` = RSS / (rows − columns)
    (0 when the fit is saturated).
    """
    design, response = _validate_design(design, response)
    n, p = design.shape
    if n < p:
        raise DataError(f"{n} rows cannot identify {p} design columns")
    gram = gram_matrix(design, weights)
    rhs = cross_product(design, response, weights)
    beta = solve_gram(gram, rhs, allow_singular=allow_singular)
    residuals = response - design @ beta
    rss = stable_sum(residuals * residuals if weights is None
                     else weights * residuals * residuals)
    dof = n - p
    return FittedLinearModel(coefficients=beta,
                             residual_variance=rss / dof if dof > 0 else 0.0,
                             spec=spec)


def fit_logistic(design: np.ndarray, response: np.ndarray, *,
                 max_iter: int = IRLS_MAX_ITER, tol: float = IRLS_TOL,
                 spec: DesignSpec | None = None) -> FittedLogisticModel:
    """Logistic maximum likelihood via iteratively reweighted least squares.

    Newton steps solve (X'WX)·step = X'(y − p̂) with W = p̂(1 − p̂), starting
    from zero coefficients.  Convergence is declared when the score max-norm
    drops below ``tol``.  Separation raises: detected when every fitted
    probability saturates while classifying its unit perfectly, when the
    weighted Hessian collapses after a clean first iteration, or when the
    coefficient norm passes SEPARATION_NORM.  Hitting ``max_iter`` without
    any of those warns and flags the fit instead of failing.
    """
    design, response = _validate_design(design, response)
    values = np.unique(response)
    if not np.all(np.isin(values, (0.0, 1.0))):
        raise DataError("logistic response must be coded 0/1")
    if values.size < 2:
        raise EstimationError("logistic response has a single class")
    n, p = design.shape
    beta = np.zeros(p)
    converged = False
    iterations = 0
    for _ in range(max_iter):
        prob = expit(design @ beta)
        saturated = (prob <= PROBABILITY_CLIP) | (prob >= 1.0 - PROBABILITY_CLIP)
        if np.all(saturated) and np.array_equal(prob > 0.5, response > 0.5):
            raise SeparationError(
                "every fitted probability is saturated and classifies its unit "
                "perfectly; classes appear separated"
            )
        score = cross_product(design, response - prob)
        if np.max(np.abs(score)) < tol:
            converged = True
            break
        weights = prob * (1.0 - prob)
        hessian = gram_matrix(design, weights)
        try:
            step = solve_gram(hessian, score)
        except SingularFitError:
            if iterations == 0:
                raise
            # The iteration-0 Hessian is 0.25 X'X, so a later collapse comes
            # from vanishing weights, the numeric signature of separation.
            raise SeparationError(
                f"weighted Hessian collapsed at iteration {iterations}; "
                "classes appear separated"
            )
        beta = beta + step
        iterations += 1
        if float(np.linalg.norm(beta)) > SEPARATION_NORM:
            raise SeparationError(
                f"coefficient norm {np.linalg.norm(beta):.3g} exceeds {SEPARATION_NORM:g}; "
                "classes appear separated"
            )
    if not converged:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations", RuntimeWarning)
    return FittedLogisticModel(coefficients=beta, converged=converged,
                               iterations=iterations, spec=spec)


def silverman_bandwidth(values: np.ndarray) -> float:
    """Normal-reference bandwidth 0.9 · min(sd, IQR/1.34) · n^(−1/5).

    When the IQR is zero but the sample still has spread (point masses at
    the median), the sd alone is used; a sample with no spread at all has no
    usable bandwidth and raises.
    """
    values = np.sort(np.asarray(values, dtype=float))
    if values.size < 2 or values[0] == values[-1]:
        raise DegenerateSampleError("bandwidth needs at least two distinct values")
    sd = float(np.std(values, ddof=1))
    q25, q75 = np.percentile(values, [25.0, 75.0])
    iqr = float(q75 - q25)
    scale = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    if scale <= 0.0:
        raise DegenerateSampleError("sample has no spread")
    return 0.9 * scale * values.size ** (-0.2)


@dataclass(frozen=True)
class LocalPolynomialFit(FittedLinearModel):
    """Kernel-weighted polynomial fit around ``target_m``.

    ``coefficients`` and ``predict`` expose the x part alone, which is the
    fitted response surface frozen at M = target_m; ``predict_at_mediator``
    adds the offset terms back in, evaluating the same surface at each row's
    own mediator value.  ``gram`` keeps the weighted normal-equation matrix
    over the full basis (x terms first, then offset powers) so callers can
    propagate the fit's estimation noise into downstream influence values.
    """

    target_m: float = 0.0
    poly_coefficients: tuple[float, ...] = ()
    mediator: str = "M"
    gram: np.ndarray | None = None

    def predict_at_mediator(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        prediction = self.predict(columns)
        offset = np.asarray(columns[self.mediator], dtype=float) - self.target_m
        for power, coefficient in enumerate(self.poly_coefficients, start=1):
            prediction = prediction + coefficient * offset ** power
        return prediction


def fit_local_polynomial(columns: Mapping[str, np.ndarray], response: np.ndarray,
                         target_m: float, degree: int, kernel: KernelConfig,
                         x_spec: DesignSpec, *, mediator: str = "M") -> LocalPolynomialFit:
    """Kernel-weighted polynomial in (M − target_m), globally linear in x terms.

    Weighted least squares of the response on
    ``[x_spec terms, (M − target_m), …, (M − target_m)^degree]`` with Gaussian
    weights K_h(M_i − target_m).  The returned fit predicts at M = target_m
    through ``predict`` and at the observed mediator values through
    ``predict_at_mediator``.

    The bandwidth rule, when not a fixed value, resolves on the supplied
    mediator values.
    """
    if degree not in (0, 1, 2):
        raise ConfigError(f"degree must be 0, 1, or 2, got {degree}")
    response = np.asarray(response, dtype=float)
    m_values = np.asarray(columns[mediator], dtype=float)
    bandwidth = kernel.resolve_bandwidth(m_values)
    weights = kernel_weights(m_values, float(target_m), bandwidth)

    x_part = build_design(columns, x_spec)
    centered = m_values - float(target_m)
    poly = [centered ** k for k in range(1, degree + 1)]
    design = np.column_stack([x_part] + poly) if poly else x_part

    supported = int(np.count_nonzero(weights > 0.0))
    if supported < degree + len(x_spec) + 1:
        raise InsufficientLocalDataError(
            f"{supported} rows carry kernel weight at m={target_m:g}; "
            f"need at least {degree + len(x_spec) + 1}"
        )
    if stable_sum(weights) <= 0.0:
        raise InsufficientLocalDataError(f"zero total kernel weight at m={target_m:g}")

    # Tiny bandwidths leave the polynomial columns with almost no weighted
    # mass (all local units sit at M = target_m); the ridge pins those
    # coefficients near zero instead of failing.  Solving here instead of
    # through fit_ols keeps the Gram matrix for the returned fit.
    gram = gram_matrix(design, weights)
    rhs = cross_product(design, response, weights)
    beta = solve_gram(gram, rhs, allow_singular=True)
    residuals = response - design @ beta
    rss = stable_sum(weights * residuals * residuals)
    dof = design.shape[0] - design.shape[1]
    return LocalPolynomialFit(coefficients=beta[:len(x_spec)],
                              residual_variance=rss / dof if dof > 0 else 0.0,
                              spec=x_spec, target_m=float(target_m),
                              poly_coefficients=tuple(float(c) for c in beta[len(x_spec):]),
                              mediator=mediator, gram=gram)
