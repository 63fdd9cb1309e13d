"""Configuration files for the CLI: parsing, validation, provenance hashing.

Configs are YAML with a fixed schema.  Unknown keys are rejected so typos
fail loudly instead of silently falling back to defaults.  The resolved
config (defaults filled in) is hashed into every output's provenance block.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .dataset import MEDIATOR_KINDS
from .design import DesignSpec
from .errors import ConfigError
from .nuisance import DEFAULT_CLIP_LEVEL, NuisanceSpecs
from .simulation import PANELS, SETTINGS

TRANSFORM_OPS = ("log1p", "ordinal_recode", "unit_interval_four_level")
MODEL_NAMES = ("propensity", "pseudo_propensity", "outcome_change", "mediator_mean")


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key '{key}'")
    return mapping[key]


def _check_keys(mapping: dict, allowed: tuple[str, ...], context: str) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context}: expected a mapping, got {type(mapping).__name__}")
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"{context}: unknown keys {unknown}; allowed keys are {sorted(allowed)}")


def _as_str(value, context: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{context}: expected a non-empty string, got {value!r}")
    return value


def _as_int(value, context: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{context}: expected an integer, got {value!r}")
    return value


def _as_number(value, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{context}: expected a number, got {value!r}")
    return float(value)


def _as_bool(value, context: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{context}: expected true/false, got {value!r}")
    return value


def _as_str_list(value, context: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{context}: expected a list of strings, got {value!r}")
    return tuple(value)


@dataclass(frozen=True)
class ColumnRoles:
    """Which CSV columns play which part in the analysis."""

    treatment: str
    mediator: str
    pre_outcome: str
    post_outcome: str
    covariates: tuple[str, ...]

    def __post_init__(self) -> None:
        roles = [self.treatment, self.mediator, self.pre_outcome, self.post_outcome,
                 *self.covariates]
        if len(set(roles)) != len(roles):
            raise ConfigError(f"column roles must name distinct columns, got {roles}")
        if not self.covariates:
            raise ConfigError("at least one covariate column is required")

    def all_columns(self) -> tuple[str, ...]:
        return (self.treatment, self.mediator, self.pre_outcome, self.post_outcome,
                *self.covariates)


@dataclass(frozen=True)
class Transform:
    """A per-column preprocessing step applied before validation.

    ``log1p`` maps x to log(1+x).  ``ordinal_recode`` maps by strictly
    increasing breakpoints (c_1 < ... < c_L): level 0 for x <= c_1, level j
    for c_j < x <= c_{j+1}, level L for x > c_L.  ``unit_interval_four_level``
    recodes a share in [0,1] to {x=0 -> 0; 0<x<=0.5 -> 1; 0.5<x<1 -> 2;
    x=1 -> 3}, keeping the boundary masses as their own levels.
    """

    column: str
    op: str
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.op not in TRANSFORM_OPS:
            raise ConfigError(f"unknown transform op '{self.op}'; choose from {TRANSFORM_OPS}")
        if self.op == "ordinal_recode":
            if not self.breakpoints:
                raise ConfigError("ordinal_recode requires breakpoints")
            if any(b >= c for b, c in zip(self.breakpoints, self.breakpoints[1:])):
                raise ConfigError(
                    f"ordinal_recode breakpoints must be strictly increasing, got {self.breakpoints}")
        elif self.breakpoints:
            raise ConfigError(f"transform '{self.op}' does not take breakpoints")


@dataclass(frozen=True)
class CdeOptions:
    """Mediator grid plus kernel settings for the controlled-effect curve."""

    grid_min: float
    grid_max: float
    grid_points: int
    kernel: str = "gaussian"
    bandwidth: float | str = "silverman"

    def __post_init__(self) -> None:
        if self.grid_points < 1:
            raise ConfigError(f"cde grid needs at least one point, got {self.grid_points}")
        if self.grid_points > 1 and not self.grid_min < self.grid_max:
            raise ConfigError(
                f"cde grid needs min < max, got [{self.grid_min}, {self.grid_max}]")

    def grid(self) -> tuple[float, ...]:
        if self.grid_points == 1:
            return (float(self.grid_min),)
        step = (self.grid_max - self.grid_min) / (self.grid_points - 1)
        return tuple(float(self.grid_min + k * step) for k in range(self.grid_points))


@dataclass(frozen=True)
class AnalysisConfig:
    """Everything the analyze/cde subcommands need, resolved and validated."""

    input: str
    output_dir: str
    columns: ColumnRoles
    mediator_kind: str
    mediator_levels: int | None = None
    transforms: tuple[Transform, ...] = ()
    models: dict | None = None
    clip_level: float = DEFAULT_CLIP_LEVEL
    cde: CdeOptions | None = None
    figures: bool = True
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.mediator_kind not in MEDIATOR_KINDS:
            raise ConfigError(
                f"mediator_kind must be one of {MEDIATOR_KINDS}, got '{self.mediator_kind}'")
        if self.mediator_kind == "discrete" and self.mediator_levels is not None:
            if self.mediator_levels < 2:
                raise ConfigError(f"mediator_levels must be >= 2, got {self.mediator_levels}")
        if self.mediator_kind == "continuous" and self.mediator_levels is not None:
            raise ConfigError("mediator_levels only applies to a discrete mediator")
        if not 0.0 < self.clip_level < 0.5:
            raise ConfigError(f"clip_level must be in (0, 0.5), got {self.clip_level}")

    def nuisance_specs(self) -> NuisanceSpecs:
        """Working-model specs: configured term lists, or covariate defaults."""
        if self.models is None:
            return NuisanceSpecs.defaults(self.columns.covariates)
        specs = {}
        for name in MODEL_NAMES:
            try:
                specs[name] = DesignSpec.from_labels(self.models[name])
            except ConfigError as exc:
                raise ConfigError(f"models.{name}: {exc}") from exc
        result = NuisanceSpecs(**specs)
        result.validate(self.columns.covariates)
        return result

    def to_dict(self) -> dict:
        return {
            "input": self.input,
            "output_dir": self.output_dir,
            "columns": {
                "treatment": self.columns.treatment,
                "mediator": self.columns.mediator,
                "pre_outcome": self.columns.pre_outcome,
                "post_outcome": self.columns.post_outcome,
                "covariates": list(self.columns.covariates),
            },
            "mediator_kind": self.mediator_kind,
            "mediator_levels": self.mediator_levels,
            "transforms": [
                {"column": t.column, "op": t.op, "breakpoints": list(t.breakpoints)}
                for t in self.transforms
            ],
            "models": None if self.models is None
            else {name: list(self.models[name]) for name in MODEL_NAMES},
            "clip_level": self.clip_level,
            "cde": None if self.cde is None else {
                "grid_min": self.cde.grid_min, "grid_max": self.cde.grid_max,
                "grid_points": self.cde.grid_points, "kernel": self.cde.kernel,
                "bandwidth": self.cde.bandwidth,
            },
            "figures": self.figures,
            "seed": self.seed,
        }

    def hash_surface(self) -> dict:
        """Result-determining fields only; execution knobs stay out so the
        provenance hash is stable across output paths and figure toggles."""
        surface = self.to_dict()
        for key in ("output_dir", "figures"):
            del surface[key]
        return surface


@dataclass(frozen=True)
class SimulateConfig:
    """Grid and harness settings for the simulate subcommand."""

    output_dir: str
    settings: tuple[int, ...] = (1, 2)
    panels: tuple[str, ...] = ("O", "A", "B")
    sample_sizes: tuple[int, ...] = (1000, 5000)
    replications: int = 1000
    base_seed: int = 20230601
    n_jobs: int = 1
    include_controlled: bool = True
    oracle_draws: int = 10**6
    figures: bool = True

    def __post_init__(self) -> None:
        for s in self.settings:
            if s not in SETTINGS:
                raise ConfigError(f"settings entries must be in {SETTINGS}, got {s}")
        for p in self.panels:
            if p not in PANELS:
                raise ConfigError(f"panels entries must be in {PANELS}, got '{p}'")
        for n in self.sample_sizes:
            if n < 50:
                raise ConfigError(f"sample_sizes entries must be >= 50, got {n}")
        if not (self.settings and self.panels and self.sample_sizes):
            raise ConfigError("settings, panels, and sample_sizes must be non-empty")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if self.n_jobs < 1 and self.n_jobs != -1:
            raise ConfigError(f"n_jobs must be >= 1 or -1 (all cores), got {self.n_jobs}")
        if self.oracle_draws < 10**6:
            raise ConfigError(f"oracle_draws must be >= 1e6, got {self.oracle_draws}")

    def cells(self) -> list[tuple[int, str, int]]:
        return [(s, p, n) for s in self.settings for p in self.panels
                for n in self.sample_sizes]

    def to_dict(self) -> dict:
        return {
            "output_dir": self.output_dir,
            "settings": list(self.settings),
            "panels": list(self.panels),
            "sample_sizes": list(self.sample_sizes),
            "replications": self.replications,
            "base_seed": self.base_seed,
            "n_jobs": self.n_jobs,
            "include_controlled": self.include_controlled,
            "oracle_draws": self.oracle_draws,
            "figures": self.figures,
        }

    def hash_surface(self) -> dict:
        """Result-determining fields only: worker count, output path, and
        figure toggles cannot change the numbers, so they are not hashed."""
        surface = self.to_dict()
        for key in ("output_dir", "n_jobs", "figures"):
            del surface[key]
        return surface


def config_hash(resolved: dict) -> str:
    """sha256 of the resolved config in canonical JSON form."""
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _load_yaml(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a YAML mapping at top level")
    return raw


_ANALYSIS_KEYS = ("input", "output_dir", "columns", "mediator_kind", "mediator_levels",
                  "transforms", "models", "clip_level", "cde", "figures", "seed")
_COLUMN_KEYS = ("treatment", "mediator", "pre_outcome", "post_outcome", "covariates")
_TRANSFORM_KEYS = ("column", "op", "breakpoints")
_CDE_KEYS = ("grid_min", "grid_max", "grid_points", "kernel", "bandwidth")
_SIMULATE_KEYS = ("output_dir", "settings", "panels", "sample_sizes", "replications",
                  "base_seed", "n_jobs", "include_controlled", "oracle_draws", "figures")


def parse_analysis_config(raw: dict, context: str = "config") -> AnalysisConfig:
    _check_keys(raw, _ANALYSIS_KEYS, context)
    col_raw = _require(raw, "columns", context)
    _check_keys(col_raw, _COLUMN_KEYS, f"{context}.columns")
    columns = ColumnRoles(
        treatment=_as_str(_require(col_raw, "treatment", f"{context}.columns"),
                          f"{context}.columns.treatment"),
        mediator=_as_str(_require(col_raw, "mediator", f"{context}.columns"),
                         f"{context}.columns.mediator"),
        pre_outcome=_as_str(_require(col_raw, "pre_outcome", f"{context}.columns"),
                            f"{context}.columns.pre_outcome"),
        post_outcome=_as_str(_require(col_raw, "post_outcome", f"{context}.columns"),
                             f"{context}.columns.post_outcome"),
        covariates=_as_str_list(_require(col_raw, "covariates", f"{context}.columns"),
                                f"{context}.columns.covariates"),
    )

    transforms = []
    for i, t_raw in enumerate(raw.get("transforms") or []):
        t_ctx = f"{context}.transforms[{i}]"
        _check_keys(t_raw, _TRANSFORM_KEYS, t_ctx)
        breakpoints = tuple(
            _as_number(b, f"{t_ctx}.breakpoints") for b in t_raw.get("breakpoints") or [])
        transforms.append(Transform(
            column=_as_str(_require(t_raw, "column", t_ctx), f"{t_ctx}.column"),
            op=_as_str(_require(t_raw, "op", t_ctx), f"{t_ctx}.op"),
            breakpoints=breakpoints,
        ))

    models = raw.get("models")
    if models is not None:
        _check_keys(models, MODEL_NAMES, f"{context}.models")
        missing = sorted(set(MODEL_NAMES) - set(models))
        if missing:
            raise ConfigError(
                f"{context}.models: when models are given, all four must be listed; "
                f"missing {missing}")
        models = {name: list(_as_str_list(models[name], f"{context}.models.{name}"))
                  for name in MODEL_NAMES}

    cde_raw = raw.get("cde")
    cde = None
    if cde_raw is not None:
        _check_keys(cde_raw, _CDE_KEYS, f"{context}.cde")
        bandwidth = cde_raw.get("bandwidth", "silverman")
        if isinstance(bandwidth, str):
            if bandwidth != "silverman":
                raise ConfigError(
                    f"{context}.cde.bandwidth: expected 'silverman' or a positive number, "
                    f"got '{bandwidth}'")
        else:
            bandwidth = _as_number(bandwidth, f"{context}.cde.bandwidth")
            if bandwidth <= 0:
                raise ConfigError(f"{context}.cde.bandwidth must be positive, got {bandwidth}")
        cde = CdeOptions(
            grid_min=_as_number(_require(cde_raw, "grid_min", f"{context}.cde"),
                                f"{context}.cde.grid_min"),
            grid_max=_as_number(_require(cde_raw, "grid_max", f"{context}.cde"),
                                f"{context}.cde.grid_max"),
            grid_points=_as_int(_require(cde_raw, "grid_points", f"{context}.cde"),
                                f"{context}.cde.grid_points"),
            kernel=_as_str(cde_raw.get("kernel", "gaussian"), f"{context}.cde.kernel"),
            bandwidth=bandwidth,
        )

    mediator_levels = raw.get("mediator_levels")
    if mediator_levels is not None:
        mediator_levels = _as_int(mediator_levels, f"{context}.mediator_levels")
    seed = raw.get("seed")
    if seed is not None:
        seed = _as_int(seed, f"{context}.seed")

    return AnalysisConfig(
        input=_as_str(_require(raw, "input", context), f"{context}.input"),
        output_dir=_as_str(_require(raw, "output_dir", context), f"{context}.output_dir"),
        columns=columns,
        mediator_kind=_as_str(_require(raw, "mediator_kind", context),
                              f"{context}.mediator_kind"),
        mediator_levels=mediator_levels,
        transforms=tuple(transforms),
        models=models,
        clip_level=_as_number(raw.get("clip_level", DEFAULT_CLIP_LEVEL),
                              f"{context}.clip_level"),
        cde=cde,
        figures=_as_bool(raw.get("figures", True), f"{context}.figures"),
        seed=seed,
    )


def parse_simulate_config(raw: dict, context: str = "config") -> SimulateConfig:
    _check_keys(raw, _SIMULATE_KEYS, context)
    kwargs: dict = {
        "output_dir": _as_str(_require(raw, "output_dir", context), f"{context}.output_dir"),
    }
    if "settings" in raw:
        kwargs["settings"] = tuple(
            _as_int(s, f"{context}.settings") for s in raw["settings"])
    if "panels" in raw:
        kwargs["panels"] = _as_str_list(raw["panels"], f"{context}.panels")
    if "sample_sizes" in raw:
        kwargs["sample_sizes"] = tuple(
            _as_int(n, f"{context}.sample_sizes") for n in raw["sample_sizes"])
    for key in ("replications", "base_seed", "n_jobs", "oracle_draws"):
        if key in raw:
            kwargs[key] = _as_int(raw[key], f"{context}.{key}")
    for key in ("include_controlled", "figures"):
        if key in raw:
            kwargs[key] = _as_bool(raw[key], f"{context}.{key}")
    return SimulateConfig(**kwargs)


def load_analysis_config(path: str | Path) -> AnalysisConfig:
    return parse_analysis_config(_load_yaml(path), context=str(path))


def load_simulate_config(path: str | Path) -> SimulateConfig:
    return parse_simulate_config(_load_yaml(path), context=str(path))
