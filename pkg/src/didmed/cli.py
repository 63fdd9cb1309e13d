"""Command-line entry points: analyze, cde, simulate.

Each subcommand reads a YAML config, runs the corresponding library calls,
and writes its reports into the configured output directory.  Every output
carries a provenance block (config hash, seed, input digest, version), and
all failures exit nonzero with a machine-parsable JSON error record on
stderr: 2 for config/schema problems, 3 for data problems, 4 for
estimation problems.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import click

from . import __version__
from .config import (
    AnalysisConfig,
    SimulateConfig,
    config_hash,
    load_analysis_config,
    load_simulate_config,
)
from .controlled import CdeCurve, cde_curve
from .errors import ConfigError, DataError, DidmedError, EstimationError
from .io import (
    convergence_flags,
    effect_rows,
    load_dataset,
    write_cde_csv,
    write_diagnostics,
    write_effects,
    write_runlog,
    write_simreport,
    write_summary,
)
from .natural import EffectEstimate, natural_effects
from .nuisance import fit_nuisances, overlap_diagnostics
from .regression import KernelConfig
from .simulation import SimulationReport, run_monte_carlo


@dataclass(frozen=True)
class ResultBundle:
    """What a data-analysis subcommand produced and where it wrote it."""

    effects: dict[str, EffectEstimate] | None
    curve: CdeCurve | None
    curve_path: str | None
    diagnostics: dict
    provenance: dict


def _provenance(config_dict: dict, seed, input_path: str | None = None) -> dict:
    block = {
        "config_hash": config_hash(config_dict),
        "seed": seed,
        "version": __version__,
    }
    if input_path is not None:
        block["input_sha256"] = hashlib.sha256(Path(input_path).read_bytes()).hexdigest()
    return block


def _prepare(config: AnalysisConfig):
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = load_dataset(config)
    nuisances = fit_nuisances(data, config.nuisance_specs(), clip_level=config.clip_level)
    provenance = _provenance(config.hash_surface(), config.seed, config.input)
    return out_dir, data, nuisances, provenance


def _diagnostics_payload(data, nuisances, provenance: dict) -> dict:
    return {
        "n": data.n,
        "n_treated": int(data.g.sum()),
        "mediator_kind": data.mediator_kind,
        "overlap": overlap_diagnostics(data, nuisances).to_dict(),
        "convergence": convergence_flags(nuisances),
        "provenance": provenance,
    }


def _header_lines(title: str, data, provenance: dict) -> list[str]:
    return [
        title,
        "=" * len(title),
        f"version: {provenance['version']}",
        f"config hash: {provenance['config_hash']}",
        f"n: {data.n} (treated {int(data.g.sum())}, control {data.n - int(data.g.sum())})",
        f"mediator kind: {data.mediator_kind}",
        "",
    ]


def cmd_analyze(config: AnalysisConfig) -> ResultBundle:
    """Natural indirect, direct, and total effects with diagnostics."""
    started = time.perf_counter()
    out_dir, data, nuisances, provenance = _prepare(config)
    effects = natural_effects(data, nuisances)
    diagnostics = _diagnostics_payload(data, nuisances, provenance)

    write_effects(out_dir, effects, provenance)
    write_diagnostics(out_dir, diagnostics)

    lines = _header_lines("didmed analyze", data, provenance)
    lines.append(f"{'estimand':<10}{'point':>12}{'se':>12}{'95% CI':>24}{'p':>10}")
    for row in effect_rows(effects):
        ci = f"[{row['ci_low']:.4f}, {row['ci_high']:.4f}]"
        lines.append(f"{row['estimand']:<10}{row['point']:>12.4f}{row['se']:>12.4f}"
                     f"{ci:>24}{row['p']:>10.4f} {row['stars']}")
    lines += ["", "stars: * p<0.05, ** p<0.01, *** p<0.001",
              "NIE + NDE = TE by construction."]
    for note in diagnostics["overlap"]["warnings"]:
        lines.append(f"warning: {note}")
    write_summary(out_dir, lines)

    if config.figures:
        from .plots import render_effects
        render_effects(out_dir / "effects.png", effects)
    write_runlog(out_dir, "analyze", time.perf_counter() - started)
    return ResultBundle(effects=effects, curve=None, curve_path=None,
                        diagnostics=diagnostics, provenance=provenance)


def _check_grid_support(grid, data) -> None:
    lo, hi = float(data.m.min()), float(data.m.max())
    if grid[0] < lo or grid[-1] > hi:
        raise ConfigError(
            f"cde grid [{grid[0]:g}, {grid[-1]:g}] extends beyond the observed "
            f"mediator support [{lo:g}, {hi:g}]")


def cmd_cde(config: AnalysisConfig) -> ResultBundle:
    """Controlled-direct-effect curve over the configured mediator grid."""
    if config.cde is None:
        raise ConfigError("the cde subcommand needs a 'cde' section in the config")
    started = time.perf_counter()
    out_dir, data, nuisances, provenance = _prepare(config)
    grid = config.cde.grid()
    _check_grid_support(grid, data)
    kernel = KernelConfig(kernel=config.cde.kernel, bandwidth=config.cde.bandwidth)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curve = cde_curve(grid, data, nuisances, kernel)
    curve_path = write_cde_csv(out_dir, curve)

    diagnostics = _diagnostics_payload(data, nuisances, provenance)
    diagnostics["cde"] = {
        "bandwidth": curve.bandwidth,
        "grid_points": len(curve.grid),
        "estimated_points": len(curve.points),
        "skipped": [{"m": m, "reason": reason} for m, reason in curve.skipped],
    }
    write_diagnostics(out_dir, diagnostics)

    lines = _header_lines("didmed cde", data, provenance)
    if curve.bandwidth is not None:
        lines.append(f"bandwidth: {curve.bandwidth:.6g}")
    lines.append(f"grid: {len(curve.grid)} points, {len(curve.points)} estimated, "
                 f"{len(curve.skipped)} skipped")
    for run_lo, run_hi in _significant_runs(curve):
        lines.append(f"CDE significant at the 5% level for m in [{run_lo:g}, {run_hi:g}]")
    if not any(pt.significant for pt in curve.points):
        lines.append("no grid point reaches 5% significance")
    for m, reason in curve.skipped:
        lines.append(f"skipped m={m:g}: {reason}")
    for note in caught:
        if issubclass(note.category, RuntimeWarning):
            lines.append(f"warning: {note.message}")
    write_summary(out_dir, lines)

    if config.figures:
        from .plots import render_cde_curve
        render_cde_curve(out_dir / "cde_curve.png", curve)
    write_runlog(out_dir, "cde", time.perf_counter() - started)
    return ResultBundle(effects=None, curve=curve, curve_path=str(curve_path),
                        diagnostics=diagnostics, provenance=provenance)


def _significant_runs(curve: CdeCurve) -> list[tuple[float, float]]:
    runs = []
    start = None
    previous = None
    for pt in curve.points:
        if pt.significant:
            if start is None:
                start = pt.m
            previous = pt.m
        elif start is not None:
            runs.append((start, previous))
            start = None
    if start is not None:
        runs.append((start, previous))
    return runs


def cmd_simulate(config: SimulateConfig) -> SimulationReport:
    """Monte Carlo study over the configured (setting, panel, n) grid."""
    started = time.perf_counter()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_monte_carlo(
        config.cells(), config.replications, config.base_seed,
        n_jobs=config.n_jobs, include_controlled=config.include_controlled,
        oracle_draws=config.oracle_draws)
    provenance = _provenance(config.hash_surface(), config.base_seed)
    write_simreport(out_dir, report, provenance)

    lines = [
        "didmed simulate",
        "===============",
        f"version: {provenance['version']}",
        f"config hash: {provenance['config_hash']}",
        f"replications: {config.replications}, base seed: {config.base_seed}",
        "",
        f"{'cell':<16}{'estimator':<20}{'estimand':<14}{'bias':>9}{'sd':>9}"
        f"{'avg_se':>9}{'cp':>7}",
    ]
    for cell in report.cells:
        label = f"S{cell.setting}/{cell.panel}/n={cell.n}"
        for (estimator, estimand), metric in sorted(
                cell.metrics.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            lines.append(f"{label:<16}{estimator:<20}{estimand:<14}"
                         f"{metric.bias:>9.3f}{metric.sd:>9.3f}"
                         f"{metric.avg_se:>9.3f}{metric.cp:>7.3f}")
        if cell.n_failures:
            lines.append(f"{label}: {cell.n_failures} failed replication(s), "
                         "see simreport.json")
    write_summary(out_dir, lines)

    if config.figures:
        from .plots import render_simreport
        render_simreport(out_dir / "simreport.png", report)
    write_runlog(out_dir, "simulate", time.perf_counter() - started)
    return report


# ---- click wiring ----

def _exit_code(exc: DidmedError) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, EstimationError):
        return 4
    return 4


def _run_command(fn) -> None:
    try:
        fn()
    except DidmedError as exc:
        record = {"error": type(exc).__name__, "message": str(exc),
                  "exit_code": _exit_code(exc)}
        click.echo(json.dumps(record), err=True)
        sys.exit(record["exit_code"])


@click.group()
@click.version_option(version=__version__, prog_name="didmed")
def main() -> None:
    """Difference-in-differences mediation analysis."""


_config_option = click.option(
    "-c", "--config", "config_path", required=True,
    type=click.Path(), help="YAML configuration file.")
_no_figures_option = click.option(
    "--no-figures", is_flag=True, default=False,
    help="Skip PNG rendering; write only delimited and text outputs.")


def _maybe_disable_figures(config, no_figures: bool):
    if no_figures and config.figures:
        import dataclasses
        return dataclasses.replace(config, figures=False)
    return config


@main.command()
@_config_option
@_no_figures_option
def analyze(config_path: str, no_figures: bool) -> None:
    """Estimate natural indirect, direct, and total effects."""
    def run():
        config = _maybe_disable_figures(load_analysis_config(config_path), no_figures)
        bundle = cmd_analyze(config)
        for row in effect_rows(bundle.effects):
            click.echo(f"{row['estimand']}: {row['point']:.4f} "
                       f"(se {row['se']:.4f}){row['stars']}")
        click.echo(f"outputs in {config.output_dir}")
    _run_command(run)


@main.command()
@_config_option
@_no_figures_option
def cde(config_path: str, no_figures: bool) -> None:
    """Estimate the controlled-direct-effect curve."""
    def run():
        config = _maybe_disable_figures(load_analysis_config(config_path), no_figures)
        bundle = cmd_cde(config)
        n_sig = sum(1 for pt in bundle.curve.points if pt.significant)
        click.echo(f"{len(bundle.curve.points)} grid points estimated "
                   f"({n_sig} significant at 5%), {len(bundle.curve.skipped)} skipped")
        click.echo(f"outputs in {config.output_dir}")
    _run_command(run)


@main.command()
@_config_option
@click.option("--setting", type=int, default=None, help="Restrict to one setting.")
@click.option("--panel", type=str, default=None, help="Restrict to one panel.")
@click.option("--n", "sample_size", type=int, default=None,
              help="Restrict to one sample size.")
@click.option("--replications", type=int, default=None,
              help="Override the configured replication count.")
@click.option("--jobs", type=int, default=None,
              help="Override the configured worker count.")
@_no_figures_option
def simulate(config_path: str, setting: int | None, panel: str | None,
             sample_size: int | None, replications: int | None,
             jobs: int | None, no_figures: bool) -> None:
    """Run the Monte Carlo study; filters restrict the configured grid."""
    def run():
        import dataclasses
        config = load_simulate_config(config_path)
        updates: dict = {}
        if setting is not None:
            if setting not in config.settings:
                raise ConfigError(f"--setting {setting} is not in the configured "
                                  f"settings {list(config.settings)}")
            updates["settings"] = (setting,)
        if panel is not None:
            if panel not in config.panels:
                raise ConfigError(f"--panel {panel} is not in the configured "
                                  f"panels {list(config.panels)}")
            updates["panels"] = (panel,)
        if sample_size is not None:
            if sample_size not in config.sample_sizes:
                raise ConfigError(f"--n {sample_size} is not in the configured "
                                  f"sample sizes {list(config.sample_sizes)}")
            updates["sample_sizes"] = (sample_size,)
        if replications is not None:
            updates["replications"] = replications
        if jobs is not None:
            updates["n_jobs"] = jobs
        if no_figures:
            updates["figures"] = False
        if updates:
            config = dataclasses.replace(config, **updates)
        report = cmd_simulate(config)
        total_failures = sum(cell.n_failures for cell in report.cells)
        click.echo(f"{len(report.cells)} cell(s) x {config.replications} replications "
                   f"({total_failures} failures)")
        click.echo(f"outputs in {config.output_dir}")
    _run_command(run)


if __name__ == "__main__":
    main()
