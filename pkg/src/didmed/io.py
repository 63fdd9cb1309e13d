"""CSV ingestion and report writers.

Numeric output uses ``repr`` of Python floats, the shortest string that
round-trips the exact double, so re-running a deterministic analysis yields
byte-identical files.  Wall-clock timing is written only to ``runlog.txt``,
which is deliberately outside that determinism surface.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .config import AnalysisConfig, Transform
from .controlled import CdeCurve
from .dataset import ObservationalDataset
from .errors import DataError, SchemaError
from .natural import EffectEstimate
from .nuisance import NuisanceSet
from .simulation import ESTIMATORS, SimulationReport

EFFECTS_COLUMNS = ("estimand", "point", "se", "ci_low", "ci_high", "p", "stars")
SIMREPORT_METRICS = ("bias", "avg_se", "sd", "cp")


# ---- dataset loading ----

def _read_numeric_column(frame: pd.DataFrame, column: str, path: str) -> np.ndarray:
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.argmax(bad))
        # +2: header line plus 1-based counting
        raise DataError(
            f"{path}: could not read a finite number from column '{column}' at "
            f"line {row + 2} (value {raw.iloc[row]!r}); missing or non-numeric "
            "values are not accepted")
    return values


def apply_transform(values: np.ndarray, transform: Transform, path: str) -> np.ndarray:
    if transform.op == "log1p":
        if np.any(values <= -1.0):
            raise DataError(
                f"{path}: log1p transform on '{transform.column}' needs values > -1, "
                f"found {values.min():g}")
        return np.log1p(values)
    if transform.op == "ordinal_recode":
        breaks = np.asarray(transform.breakpoints, dtype=float)
        # level 0: x <= c_1; level j: c_j < x <= c_(j+1); top: x > c_L
        return np.searchsorted(breaks, values, side="left").astype(float)
    # unit_interval_four_level: {0} / (0, 0.5] / (0.5, 1) / {1}
    if np.any((values < 0.0) | (values > 1.0)):
        raise DataError(
            f"{path}: unit_interval_four_level on '{transform.column}' needs values "
            f"in [0, 1], found range [{values.min():g}, {values.max():g}]")
    levels = np.full(values.shape, 2.0)
    levels[values == 0.0] = 0.0
    levels[(values > 0.0) & (values <= 0.5)] = 1.0
    levels[values == 1.0] = 3.0
    return levels


def load_dataset(config: AnalysisConfig) -> ObservationalDataset:
    """Read the configured CSV, apply transforms, validate the panel.

    Errors carry coordinates: a missing column names it, a parse failure
    names the column and line. Missing values are rejected outright.
    """
    path = Path(config.input)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)

    needed = config.columns.all_columns()
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise SchemaError(
            f"{path}: missing column(s) {missing}; file has {list(frame.columns)}")
    if len(frame) == 0:
        raise DataError(f"{path}: no data rows")

    columns = {c: _read_numeric_column(frame, c, str(path)) for c in needed}
    for transform in config.transforms:
        if transform.column not in columns:
            raise SchemaError(
                f"transform on '{transform.column}' does not match any declared column")
        transformed = apply_transform(columns[transform.column], transform, str(path))
        if not np.all(np.isfinite(transformed)):
            row = int(np.argmax(~np.isfinite(transformed)))
            raise DataError(
                f"{path}: transform '{transform.op}' on '{transform.column}' produced "
                f"a non-finite value at line {row + 2}")
        columns[transform.column] = transformed

    roles = config.columns
    return ObservationalDataset(
        g=columns[roles.treatment],
        m=columns[roles.mediator],
        y0=columns[roles.pre_outcome],
        y1=columns[roles.post_outcome],
        covariates=np.column_stack([columns[c] for c in roles.covariates]),
        covariate_names=roles.covariates,
        mediator_kind=config.mediator_kind,
        n_mediator_levels=config.mediator_levels,
    )


# ---- formatting ----

def format_value(value) -> str:
    """Shortest exact text form: repr for floats, plain str otherwise."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def _write_csv(path: Path, header: tuple[str, ...], rows: list[dict]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(row[c]) for c in header))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---- effect tables ----

def effect_rows(effects: Mapping[str, EffectEstimate]) -> list[dict]:
    rows = []
    for name in ("NIE", "NDE", "TE"):
        est = effects[name]
        rows.append({
            "estimand": name, "point": est.point, "se": est.se,
            "ci_low": est.ci_low, "ci_high": est.ci_high, "p": est.p_value,
            "stars": significance_stars(est.p_value),
        })
    return rows


def write_effects(out_dir: Path, effects: Mapping[str, EffectEstimate],
                  provenance: dict) -> None:
    rows = effect_rows(effects)
    _write_csv(out_dir / "effects.csv", EFFECTS_COLUMNS, rows)
    write_json(out_dir / "effects.json", {"effects": rows, "provenance": provenance})


def write_cde_csv(out_dir: Path, curve: CdeCurve) -> Path:
    path = out_dir / "cde_curve.csv"
    _write_csv(path, CdeCurve.CSV_COLUMNS, curve.rows())
    return path


def convergence_flags(nuisances: NuisanceSet) -> dict:
    flags = {
        "propensity": {"converged": nuisances.propensity.converged,
                       "iterations": nuisances.propensity.iterations},
        "pseudo_propensity": {"converged": nuisances.pseudo_propensity.converged,
                              "iterations": nuisances.pseudo_propensity.iterations},
    }
    if nuisances.mediator_kind == "discrete":
        unconverged = []
        for g, models in nuisances.mediator_dist.level_models.items():
            for level, model in enumerate(models):
                if model is not None and not model.converged:
                    unconverged.append(f"group {g}, level {level}")
        flags["mediator_levels"] = {"all_converged": not unconverged,
                                    "unconverged": unconverged}
    return flags


def write_diagnostics(out_dir: Path, diagnostics: dict) -> None:
    write_json(out_dir / "diagnostics.json", diagnostics)


def write_summary(out_dir: Path, lines: list[str]) -> None:
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


def write_runlog(out_dir: Path, command: str, seconds: float) -> None:
    """Wall-clock record; the one output allowed to differ between runs."""
    (out_dir / "runlog.txt").write_text(
        f"command: {command}\nruntime_seconds: {seconds:.3f}\n")


# ---- simulation reports ----

_ESTIMAND_ORDER = {"NIE": 0, "NDE": 1, "TE": 2,
                   "bar_tau_1_0": 3, "bar_tau_0_0": 4, "cde_0": 5}


def _report_estimands(report: SimulationReport) -> list[str]:
    present = {estimand for cell in report.cells for _, estimand in cell.metrics}
    return sorted(present, key=lambda e: _ESTIMAND_ORDER.get(e, 99))


def simreport_header(report: SimulationReport) -> tuple[str, ...]:
    return ("setting", "panel", "n", "metric") + tuple(
        f"{estimator}:{estimand}"
        for estimator in ESTIMATORS for estimand in _report_estimands(report))


def simreport_rows(report: SimulationReport) -> list[dict]:
    """Table-style rows: one per (cell, metric), estimator x estimand columns."""
    estimands = _report_estimands(report)
    rows = []
    for cell in report.cells:
        for metric_name in SIMREPORT_METRICS:
            row = {"setting": cell.setting, "panel": cell.panel, "n": cell.n,
                   "metric": metric_name}
            for estimator in ESTIMATORS:
                for estimand in estimands:
                    metric = cell.metrics[(estimator, estimand)]
                    row[f"{estimator}:{estimand}"] = getattr(metric, metric_name)
            rows.append(row)
    return rows


def write_simreport(out_dir: Path, report: SimulationReport, provenance: dict) -> None:
    _write_csv(out_dir / "simreport.csv", simreport_header(report),
               simreport_rows(report))
    cells = []
    for cell in report.cells:
        cells.append({
            "setting": cell.setting, "panel": cell.panel, "n": cell.n,
            "replications": cell.replications,
            "failures": [{"replication": idx, "seed": seed, "error": message}
                         for idx, seed, message in cell.failures],
            "truths": cell.truths.to_dict(),
            "metrics": {
                f"{estimator}:{estimand}": {
                    "bias": metric.bias, "sd": metric.sd,
                    "avg_se": metric.avg_se, "cp": metric.cp,
                }
                for (estimator, estimand), metric in sorted(cell.metrics.items())
            },
        })
    write_json(out_dir / "simreport.json", {
        "base_seed": report.base_seed,
        "child_seeds": list(report.cells[0].child_seeds) if report.cells else [],
        "replications": report.replications,
        "include_controlled": report.include_controlled,
        "cells": cells,
        "provenance": provenance,
    })
