"""Order-stable reductions and small weighted least-squares helpers.

Every sum over units in this package funnels through :func:`stable_sum`,
which sorts the addends before reducing.  The sorted sequence depends only
on the multiset of values, so permuting unit order leaves every downstream
coefficient and estimate bit-identical, and per-replication results can be
reduced in fixed index order regardless of worker scheduling.
"""

from __future__ import annotations

import numpy as np

from .errors import SingularFitError

# Ridge jitter applied to Gram matrices before solving, scaled by trace/cols.
JITTER_SCALE = 1e-10
# A jittered Gram matrix whose condition number still exceeds this is singular.
CONDITION_LIMIT = 1e12


def stable_sum(values: np.ndarray) -> float:
    """Sum that depends only on the multiset of addends, not their order."""
    return float(np.sum(np.sort(np.asarray(values, dtype=float))))


def stable_mean(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("mean of empty vector")
    return stable_sum(values) / values.size


def gram_matrix(design: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """X'X (or X'WX) with an order-stable reduction per entry."""
    n, p = design.shape
    out = np.empty((p, p))
    for j in range(p):
        base = design[:, j] if weights is None else design[:, j] * weights
        for k in range(j, p):
            s = stable_sum(base * design[:, k])
            out[j, k] = s
            out[k, j] = s
    return out


def cross_product(design: np.ndarray, vector: np.ndarray,
                  weights: np.ndarray | None = None) -> np.ndarray:
    """X'v (or X'Wv) with an order-stable reduction per column."""
    n, p = design.shape
    base = vector if weights is None else vector * weights
    return np.array([stable_sum(design[:, j] * base) for j in range(p)])


def solve_gram(gram: np.ndarray, rhs: np.ndarray, *,
               allow_singular: bool = False) -> np.ndarray:
    """Solve a Gram system with a tiny ridge jitter.

    A raw condition number beyond CONDITION_LIMIT means the design is
    singular; the error names the column most aligned with the null
    direction.  ``allow_singular`` skips that check and lets the jitter
    regularize rank-deficient directions toward zero coefficients, which
    kernel-weighted fits need when a column carries almost no weighted mass.
    Either way the solve adds JITTER_SCALE * trace/cols to the diagonal.
    """
    p = gram.shape[0]
    if not allow_singular:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            eigvals, eigvecs = np.linalg.eigh(gram)
            offending = int(np.argmax(np.abs(eigvecs[:, 0])))
            raise SingularFitError(
                f"design is numerically singular (condition number {cond:.3g}); "
                f"offending column index {offending}"
            )
    scale = float(np.trace(gram)) / p
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    jittered = gram + (JITTER_SCALE * scale) * np.eye(p)
    return np.linalg.solve(jittered, rhs)


def gram_inverse(gram: np.ndarray) -> np.ndarray:
    """Inverse of the jittered Gram matrix (same conditioning policy as solve_gram)."""
    return solve_gram(gram, np.eye(gram.shape[0]))
