"""Figure rendering for the report path.

Uses the Agg backend and fixed PNG metadata so identical inputs produce
identical bytes; figures land next to the delimited files they visualize.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .controlled import CdeCurve  # noqa: E402
from .natural import EffectEstimate  # noqa: E402
from .simulation import ESTIMATORS, SimulationReport  # noqa: E402

PNG_METADATA = {"Software": "didmed"}
DPI = 150


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def render_effects(path: Path, effects: Mapping[str, EffectEstimate]) -> None:
    """Point estimates with 95% intervals for NIE / NDE / TE."""
    names = ["NIE", "NDE", "TE"]
    points = [effects[n].point for n in names]
    low_err = [effects[n].point - effects[n].ci_low for n in names]
    high_err = [effects[n].ci_high - effects[n].point for n in names]

    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    positions = range(len(names))
    ax.errorbar(points, positions, xerr=[low_err, high_err], fmt="o",
                color="black", capsize=4)
    ax.axvline(0.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_yticks(list(positions))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlabel("effect on the treated (95% CI)")
    fig.tight_layout()
    _save(fig, path)


def render_cde_curve(path: Path, curve: CdeCurve) -> None:
    """CDE across the mediator grid with its pointwise band.

    Filled markers flag grid points significant at the 5% level.
    """
    ms = [pt.m for pt in curve.points]
    cde = [pt.cde for pt in curve.points]
    low = [pt.ci_low for pt in curve.points]
    high = [pt.ci_high for pt in curve.points]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.fill_between(ms, low, high, color="lightsteelblue", alpha=0.6,
                    label="pointwise 95% CI")
    ax.plot(ms, cde, color="navy", linewidth=1.5, label="CDE")
    sig = [pt for pt in curve.points if pt.significant]
    if sig:
        ax.plot([pt.m for pt in sig], [pt.cde for pt in sig], "o",
                color="navy", markersize=4, label="significant at 5%")
    ax.axhline(0.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlabel("mediator value m")
    ax.set_ylabel("controlled direct effect")
    if curve.bandwidth is not None:
        ax.set_title(f"bandwidth h = {curve.bandwidth:.4g}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def render_simreport(path: Path, report: SimulationReport) -> None:
    """Bias and coverage by simulation cell, one marker per estimator."""
    labels = []
    series: dict[str, dict[str, list[float]]] = {
        est: {"bias": [], "cp": []} for est in ESTIMATORS}
    for cell in report.cells:
        for estimand in sorted({e for _, e in cell.metrics}):
            labels.append(f"S{cell.setting}/{cell.panel}/n={cell.n}\n{estimand}")
            for est in ESTIMATORS:
                series[est]["bias"].append(cell.metrics[(est, estimand)].bias)
                series[est]["cp"].append(cell.metrics[(est, estimand)].cp)

    positions = range(len(labels))
    fig, (ax_bias, ax_cp) = plt.subplots(
        2, 1, figsize=(max(6.0, 0.9 * len(labels)), 6.4), sharex=True)
    markers = {"proposed": "o", "regression_based": "x"}
    for est in ESTIMATORS:
        ax_bias.plot(positions, series[est]["bias"], markers[est],
                     label=est, alpha=0.85)
        ax_cp.plot(positions, series[est]["cp"], markers[est],
                   label=est, alpha=0.85)
    ax_bias.axhline(0.0, color="gray", linewidth=0.8, linestyle="--")
    ax_bias.set_ylabel("bias")
    ax_bias.legend(loc="best", fontsize=8)
    ax_cp.axhline(0.95, color="gray", linewidth=0.8, linestyle="--")
    ax_cp.set_ylabel("coverage (95% target)")
    ax_cp.set_xticks(list(positions))
    ax_cp.set_xticklabels(labels, fontsize=6, rotation=45, ha="right")
    fig.tight_layout()
    _save(fig, path)
