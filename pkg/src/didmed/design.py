"""Design-matrix construction from product-term specifications.

A model is specified as an ordered list of terms, each term the product of
raw dataset columns; the empty product is the intercept.  Terms never repeat
a column, so every model is linear in each raw column separately — the
mediator-imputation step in :mod:`didmed.nuisance` relies on that.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SchemaError

INTERCEPT_LABEL = "1"


@dataclass(frozen=True)
class DesignSpec:
    """Ordered product terms over raw column names; ``()`` is the intercept."""

    terms: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise SchemaError("a design needs at least one term")
        if self.terms[0] != ():
            raise SchemaError("the intercept term must appear first")
        seen: set[frozenset[str]] = set()
        for term in self.terms:
            if len(set(term)) != len(term):
                raise SchemaError(f"term {self._label(term)!r} repeats a column")
            key = frozenset(term)
            if key in seen:
                raise SchemaError(f"duplicate term {self._label(term)!r}")
            seen.add(key)

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "DesignSpec":
        """Parse labels like ``["1", "G", "M", "G:M", "M:X2"]``."""
        terms = []
        for label in labels:
            label = str(label).strip()
            if label == INTERCEPT_LABEL:
                terms.append(())
            else:
                terms.append(tuple(part.strip() for part in label.split(":")))
        return cls(tuple(terms))

    @staticmethod
    def _label(term: tuple[str, ...]) -> str:
        return INTERCEPT_LABEL if not term else ":".join(term)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._label(term) for term in self.terms)

    @property
    def columns_used(self) -> frozenset[str]:
        return frozenset(name for term in self.terms for name in term)

    def __len__(self) -> int:
        return len(self.terms)


def build_design(columns: Mapping[str, np.ndarray], spec: DesignSpec,
                 overrides: Mapping[str, float | np.ndarray] | None = None) -> np.ndarray:
    """Build the (n × terms) matrix for ``spec`` from named columns.

    ``overrides`` replace a raw column by a constant (or a per-row vector)
    before any products are formed, so overriding twice with the same value
    equals overriding once.
    """
    if not columns:
        raise SchemaError("no columns supplied")
    n = len(next(iter(columns.values())))
    overrides = overrides or {}
    resolved: dict[str, np.ndarray] = {}
    for name in spec.columns_used:
        if name in overrides:
            value = np.asarray(overrides[name], dtype=float)
            if value.ndim == 0:
                value = np.full(n, float(value))
            elif value.shape != (n,):
                raise DataError(f"override for column {name!r} has shape {value.shape}, expected ({n},)")
            if not np.all(np.isfinite(value)):
                raise DataError(f"override for column {name!r} is not finite")
            resolved[name] = value
        elif name in columns:
            col = np.asarray(columns[name], dtype=float)
            if col.shape != (n,):
                raise DataError(f"column {name!r} has shape {col.shape}, expected ({n},)")
            if not np.all(np.isfinite(col)):
                raise DataError(f"column {name!r} contains non-finite values")
            resolved[name] = col
        else:
            raise SchemaError(f"unknown column {name!r} in design")
    out = np.empty((n, len(spec.terms)))
    for j, term in enumerate(spec.terms):
        if not term:
            out[:, j] = 1.0
        else:
            col = resolved[term[0]].copy()
            for name in term[1:]:
                col *= resolved[name]
            out[:, j] = col
    return out
