"""Two-period observational sample container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, EmptyGroupError

MEDIATOR_KINDS = ("continuous", "discrete")


@dataclass(frozen=True)
class ObservationalDataset:
    """Unit records (G, X, Y0, M, Y1) with mediator-kind metadata.

    ``g`` is the 0/1 treatment-group indicator, ``m`` the mediator (level
    indices 0..K−1 when discrete), ``y0``/``y1`` the pre/post outcomes, and
    ``covariates`` the (n × p) baseline matrix named by ``covariate_names``.
    Arrays are frozen after validation; ``dy`` is the derived change Y1 − Y0.
    """

    g: np.ndarray
    m: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    mediator_kind: str
    n_mediator_levels: int | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "g", np.asarray(self.g, dtype=int))
        for name in ("m", "y0", "y1"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "covariates", np.atleast_2d(np.asarray(self.covariates, dtype=float)))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

        n = self.g.shape[0]
        if self.covariates.shape[0] != n or any(v.shape != (n,) for v in (self.m, self.y0, self.y1)):
            raise DataError("all dataset columns must share the same length")
        if self.covariates.shape[1] != len(self.covariate_names):
            raise DataError("covariate matrix width does not match covariate_names")
        reserved = {"G", "M", "1"}
        clashes = reserved.intersection(self.covariate_names)
        if clashes:
            raise DataError(f"covariate names clash with reserved columns: {sorted(clashes)}")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise DataError("covariate names must be distinct")
        if self.mediator_kind not in MEDIATOR_KINDS:
            raise DataError(f"mediator_kind must be one of {MEDIATOR_KINDS}")

        if not np.all(np.isin(self.g, (0, 1))):
            raise DataError("treatment indicator must be coded 0/1")
        for label, value in (("mediator", self.m), ("pre-period outcome", self.y0),
                             ("post-period outcome", self.y1), ("covariates", self.covariates)):
            if not np.all(np.isfinite(value)):
                raise DataError(f"{label} contains non-finite values")
        if not np.any(self.g == 1):
            raise EmptyGroupError("treated group is empty")
        if not np.any(self.g == 0):
            raise EmptyGroupError("control group is empty")

        if self.mediator_kind == "discrete":
            levels = np.unique(self.m)
            if not np.allclose(levels, np.round(levels)):
                raise DataError("discrete mediator levels must be integers")
            expected = np.arange(levels.size)
            if not np.array_equal(levels.astype(int), expected):
                raise DataError(
                    f"discrete mediator levels must form a contiguous 0..K-1 set, got {levels.tolist()}"
                )
            declared = self.n_mediator_levels
            if declared is not None and declared != levels.size:
                raise DataError(
                    f"declared {declared} mediator levels but observed {levels.size}"
                )
            object.__setattr__(self, "n_mediator_levels", int(levels.size))
        elif self.n_mediator_levels is not None:
            raise DataError("n_mediator_levels only applies to discrete mediators")

        for arr in (self.g, self.m, self.y0, self.y1, self.covariates):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.g.shape[0])

    @property
    def dy(self) -> np.ndarray:
        return self.y1 - self.y0

    def columns(self) -> dict[str, np.ndarray]:
        """Named columns for design construction: G, M, and each covariate."""
        cols = {"G": self.g.astype(float), "M": self.m}
        for j, name in enumerate(self.covariate_names):
            cols[name] = self.covariates[:, j]
        return cols
