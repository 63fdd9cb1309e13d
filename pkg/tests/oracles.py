"""Independent reference implementations for cross-checking the estimators.

Every function here recomputes a target quantity by a different route than
the library code: closed-form normal equations instead of jittered solves,
fixed-step gradient ascent instead of IRLS, Monte Carlo integration instead
of plug-in imputation, and importance-weighted covariate moments instead of
rejection sampling for the simulation truths.  Agreement between the two
routes is the evidence the tests rely on.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from scipy.stats import norm


# ---- linear and logistic fits ----

def ols_normal_equations(design: np.ndarray, response: np.ndarray) -> np.ndarray:
    gram = design.T @ design
    return np.linalg.solve(gram, design.T @ response)


def ols_coefficient_covariance(design: np.ndarray, response: np.ndarray) -> np.ndarray:
    beta = ols_normal_equations(design, response)
    residuals = response - design @ beta
    dof = design.shape[0] - design.shape[1]
    sigma2 = float(residuals @ residuals) / dof
    return sigma2 * np.linalg.inv(design.T @ design)


def logistic_gradient_ascent(design: np.ndarray, response: np.ndarray,
                             tol: float = 1e-10, max_iter: int = 500_000) -> np.ndarray:
    """Maximum likelihood by fixed-step gradient ascent.

    The step 4 / lambda_max(X'X) is 1/L for the log-likelihood's Lipschitz
    gradient, so ascent converges without a line search. Slow on purpose:
    the point is independence from the IRLS implementation, not speed.
    """
    eigmax = float(np.linalg.eigvalsh(design.T @ design)[-1])
    step = 4.0 / eigmax
    beta = np.zeros(design.shape[1])
    for _ in range(max_iter):
        score = design.T @ (response - expit(design @ beta))
        if float(np.max(np.abs(score))) < tol:
            return beta
        beta = beta + step * score
    raise AssertionError("gradient ascent did not converge; fixture too hard")


def weighted_ls(design: np.ndarray, response: np.ndarray,
                weights: np.ndarray) -> np.ndarray:
    w_design = design * weights[:, None]
    return np.linalg.solve(design.T @ w_design, w_design.T @ response)


# ---- imputation cross-check ----

def nu_hat_monte_carlo(delta_at, mean0: float, sd0: float, draws: int,
                       rng: np.random.Generator) -> float:
    """Average delta(0, m, x) over m ~ N(mean0, sd0^2) for one fixed x.

    ``delta_at`` maps a vector of mediator values to delta evaluations at
    the fixed covariate row.
    """
    m = mean0 + sd0 * rng.standard_normal(draws)
    return float(np.mean(delta_at(m)))


# ---- simulation truths by importance weighting ----

def assignment_weight(panel: str, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    if panel == "B":
        return norm.cdf(0.3 + 0.4 * x1 + 0.5 * x2 + 0.3 * x1 * x2)
    return expit(0.3 + 0.4 * x1 + 0.5 * x2)


def treated_moment(panel: str, fn, draws: int, rng: np.random.Generator) -> float:
    """E[fn(X1, X2) | G=1] via E[fn(X) w(X)] / E[w(X)], no rejection step."""
    x1 = rng.standard_normal(draws)
    x2 = rng.standard_normal(draws)
    w = assignment_weight(panel, x1, x2)
    return float(np.sum(fn(x1, x2) * w) / np.sum(w))


def s1_nie_oracle(panel: str, draws: int, rng: np.random.Generator) -> float:
    """Setting 1: M(1) - M(0) = 1, so the indirect contrast is analytic in X."""
    if panel == "A":
        # control-arm mediator coefficient is 0.5 exactly
        return 0.5
    return 0.5 * (1.0 + 0.4 * treated_moment(panel, lambda x1, x2: x2, draws, rng))


def s1_nde_oracle(panel: str, draws: int, rng: np.random.Generator) -> float:
    if panel == "A":
        # Y1(1,m) - Y1(0,m) = 1 + 0.25 X2 m at m = M(1) = 0.6X1 - 0.3X2 + 1 + eps;
        # eps is mean-zero independent, so only the X-part survives
        moment = treated_moment(
            panel, lambda x1, x2: x2 * (0.6 * x1 - 0.3 * x2 + 1.0), draws, rng)
        return 1.0 + 0.25 * moment
    return 1.0


def s2_nie_oracle(panel: str, draws: int, rng: np.random.Generator) -> float:
    """Setting 2: P(M(g)=1|X) = Phi(index + g); the M-contrast is analytic."""
    def fn(x1, x2):
        index = 0.6 * x1 - 0.3 * x2
        shift = norm.cdf(index + 1.0) - norm.cdf(index)
        scale = 0.5 * (1.0 + (0.5 if panel == "A" else 0.4) * x2)
        if panel == "A":
            # control arm: g=0 in the mediator coefficient 0.5(1+0.5 g X2)
            scale = 0.5
        return scale * shift
    return treated_moment(panel, fn, draws, rng)


def bar_tau_oracle(panel: str, g: int, draws: int, rng: np.random.Generator) -> float:
    """tau_bar(g, 0) = E[Y1(g,0) - Y0(0) | G=1] for both panel families."""
    if panel == "A":
        fn = lambda x1, x2: (x1 + x2) * x2 - 2.0 * x1 * np.log1p(np.abs(x2)) + g
    else:
        fn = lambda x1, x2: x2 - x1 + g
    return treated_moment(panel, fn, draws, rng)
