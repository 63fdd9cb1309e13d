"""End-to-end acceptance checks for the estimator suite.

Each test prints one verdict line (``ACCEPTANCE <k>: PASS/FAIL - detail``) on
the real stdout so the verdicts survive pytest's capture, then asserts on the
same condition.  The two Monte Carlo grids are module-scoped fixtures: they
run once, at the full 1000-replication budget, and every criterion that needs
them reads from the shared report.  Everything is seeded, so reruns reproduce
the verdicts bit for bit.
"""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

import oracles
from conftest import random_dataset
from didmed.cli import cmd_analyze
from didmed.config import load_analysis_config
from didmed.controlled import bar_tau_continuous, bar_tau_discrete, cde_curve
from didmed.dataset import ObservationalDataset
from didmed.natural import component_estimates, natural_effects
from didmed.nuisance import fit_nuisances
from didmed.regression import KernelConfig, fit_logistic, fit_ols
from didmed.simulation import (
    DgpConfig,
    analyst_specs,
    child_seed,
    generate,
    run_monte_carlo,
)

BASE_SEED = 20230601
REPLICATIONS = 1000
ORACLE_DRAWS = 4_000_000
NATURAL = ("NIE", "NDE", "TE")
JOBCORPS_CSV = Path(__file__).resolve().parent.parent / "data/jobcorps/jobcorps.csv"


_CAPTURE = None


@pytest.fixture(autouse=True)
def _live_verdicts(capfd):
    # verdict lines must reach the terminal even under fd-level capture
    global _CAPTURE
    _CAPTURE = capfd
    yield
    _CAPTURE = None


def _announce(line: str) -> None:
    if _CAPTURE is not None:
        with _CAPTURE.disabled():
            print(line, flush=True)
    else:
        print(line, file=sys.__stdout__, flush=True)


def _verdict(criterion: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    _announce(f"ACCEPTANCE {criterion}: {status} - {detail}")
    assert passed, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def panel_o_report():
    # correctly specified models, both mediator kinds, both sample sizes
    return run_monte_carlo(
        [(1, "O", 1000), (1, "O", 5000), (2, "O", 1000), (2, "O", 5000)],
        replications=REPLICATIONS, base_seed=BASE_SEED, n_jobs=1,
        include_controlled=True, oracle_draws=ORACLE_DRAWS)


@pytest.fixture(scope="module")
def misspecified_report():
    # panel A: wrong outcome-change model; panel B: wrong propensity model
    return run_monte_carlo(
        [(1, "A", 5000), (1, "B", 5000)],
        replications=REPLICATIONS, base_seed=BASE_SEED, n_jobs=1,
        include_controlled=False, oracle_draws=ORACLE_DRAWS)


def _cell(report, setting: int, panel: str, n: int):
    for cell in report.cells:
        if (cell.setting, cell.panel, cell.n) == (setting, panel, n):
            return cell
    raise AssertionError(f"cell S{setting}/{panel}/n={n} missing from report")


def test_natural_effects_unbiased_and_covered_when_models_correct(panel_o_report):
    rows = []
    ok = True
    for setting in (1, 2):
        cell = _cell(panel_o_report, setting, "O", 5000)
        for estimand in NATURAL:
            m = cell.metrics[("proposed", estimand)]
            good = abs(m.bias) <= 0.01 and 0.93 <= m.cp <= 0.97
            ok = ok and good
            rows.append(f"S{setting} {estimand} bias={m.bias:+.4f} cp={m.cp:.3f}"
                        + ("" if good else " <-"))
    _verdict(1, ok, "; ".join(rows))


def test_multiply_robust_beats_regression_under_misspecification(misspecified_report):
    checks = []

    cell_a = _cell(misspecified_report, 1, "A", 5000)
    for estimand in NATURAL:
        m = cell_a.metrics[("proposed", estimand)]
        checks.append((f"A proposed {estimand} bias={m.bias:+.4f} cp={m.cp:.3f}",
                       abs(m.bias) <= 0.02 and m.cp >= 0.90))
    nde_reg = cell_a.metrics[("regression_based", "NDE")]
    checks.append((f"A regression NDE cp={nde_reg.cp:.3f}", nde_reg.cp <= 0.20))

    cell_b = _cell(misspecified_report, 1, "B", 5000)
    for estimand in NATURAL:
        m = cell_b.metrics[("proposed", estimand)]
        checks.append((f"B proposed {estimand} cp={m.cp:.3f}", m.cp >= 0.88))
    nie_reg = cell_b.metrics[("regression_based", "NIE")]
    checks.append((f"B regression NIE cp={nie_reg.cp:.3f}", nie_reg.cp <= 0.60))

    ok = all(good for _, good in checks)
    detail = "; ".join(text + ("" if good else " <-") for text, good in checks)
    _verdict(2, ok, detail)


def test_controlled_direct_effect_at_zero_bias_and_coverage(panel_o_report):
    m2 = _cell(panel_o_report, 2, "O", 5000).metrics[("proposed", "cde_0")]
    m1 = _cell(panel_o_report, 1, "O", 5000).metrics[("proposed", "cde_0")]
    ok2 = abs(m2.bias) <= 0.02 and 0.90 <= m2.cp <= 0.97
    ok1 = abs(m1.bias) <= 0.03 and 0.90 <= m1.cp <= 0.98
    detail = (f"S2 cde(0) bias={m2.bias:+.4f} cp={m2.cp:.3f}"
              f"{'' if ok2 else ' <-'}; "
              f"S1 cde(0) bias={m1.bias:+.4f} cp={m1.cp:.3f}"
              f"{'' if ok1 else ' <-'}")
    _verdict(3, ok2 and ok1, detail)


def test_standard_errors_track_monte_carlo_spread(panel_o_report):
    ratios = []
    flagged = []
    for cell in panel_o_report.cells:
        for (estimator, estimand), m in sorted(cell.metrics.items()):
            if estimator != "proposed":
                continue
            ratio = m.avg_se / m.sd
            ratios.append(ratio)
            if not 0.85 <= ratio <= 1.15:
                flagged.append(f"S{cell.setting}/n={cell.n} {estimand} "
                               f"se/sd={ratio:.3f} <-")
    detail = (f"se/sd over {len(ratios)} estimand cells in "
              f"[{min(ratios):.3f}, {max(ratios):.3f}]")
    if flagged:
        detail += "; " + "; ".join(flagged)
    _verdict(4, not flagged, detail)


def _influence_means(data, nuisances, kernel_grid=()):
    estimates = list(natural_effects(data, nuisances).values())
    estimates += list(component_estimates(data, nuisances).values())
    if data.mediator_kind == "discrete":
        for g in (0, 1):
            for m in (0.0, 1.0):
                estimates.append(bar_tau_discrete(g, m, data, nuisances))
    else:
        for g in (0, 1):
            estimates.append(bar_tau_continuous(g, 0.0, data, nuisances))
        if kernel_grid:
            curve = cde_curve(np.asarray(kernel_grid), data, nuisances)
            for point in curve.points:
                estimates.append(point.tau1)
                estimates.append(point.tau0)
    return [abs(float(np.mean(est.influence_values))) for est in estimates]


def test_estimator_identities_match_independent_oracles(rng):
    parts = []
    ok = True

    # (a) logistic IRLS vs fixed-step gradient ascent on five random fixtures
    worst = 0.0
    fixtures = 0
    while fixtures < 5:
        design = np.column_stack([np.ones(200), rng.standard_normal((200, 2))])
        truth = rng.uniform(-1, 1, 3)
        response = (rng.uniform(size=200) < expit(design @ truth)).astype(float)
        if response.min() == response.max():
            continue
        fixtures += 1
        fitted = fit_logistic(design, response).coefficients
        oracle = oracles.logistic_gradient_ascent(design, response)
        worst = max(worst, float(np.max(np.abs(fitted - oracle))))
    ok &= worst < 1e-6
    parts.append(f"logistic vs ascent {worst:.1e}")

    # (b) least squares vs closed-form normal equations
    design = np.column_stack([np.ones(300), rng.standard_normal((300, 3))])
    response = design @ rng.uniform(-1, 1, 4) + rng.standard_normal(300)
    diff = float(np.max(np.abs(fit_ols(design, response).coefficients
                               - oracles.ols_normal_equations(design, response))))
    ok &= diff < 1e-8
    parts.append(f"ols vs normal-eq {diff:.1e}")

    # (c) empirical mean of every returned influence vector is zero
    s1 = generate(DgpConfig(setting=1, panel="O", n=2000, seed=31))
    s2 = generate(DgpConfig(setting=2, panel="O", n=2000, seed=32))
    means = _influence_means(s1, fit_nuisances(s1, analyst_specs()),
                             kernel_grid=(-0.5, 0.5, 1.5))
    means += _influence_means(s2, fit_nuisances(s2, analyst_specs()))
    worst_mean = max(means)
    ok &= worst_mean <= 1e-10
    parts.append(f"max |mean influence| {worst_mean:.1e} over {len(means)} estimates")

    # (d) indirect + direct = total on one hundred random panels
    worst_gap = 0.0
    for draw in range(100):
        data = random_dataset(rng, n=150,
                              kind="discrete" if draw % 2 else "continuous")
        effects = natural_effects(data, fit_nuisances(data))
        gap = abs(effects["NIE"].point + effects["NDE"].point
                  - effects["TE"].point)
        worst_gap = max(worst_gap, gap)
    ok &= worst_gap <= 1e-12
    parts.append(f"NIE+NDE-TE {worst_gap:.1e}")

    # (e) discrete imputation equals the explicit two-level mixture
    nu2 = fit_nuisances(s2, analyst_specs())
    cols2 = s2.columns()
    mixture = (nu2.mediator_density(cols2, 0.0, 0) * nu2.delta_hat(cols2, 0, 0.0)
               + nu2.mediator_density(cols2, 1.0, 0) * nu2.delta_hat(cols2, 0, 1.0))
    mix_diff = float(np.max(np.abs(nu2.nu_hat(cols2) - mixture)))
    ok &= mix_diff <= 1e-12
    parts.append(f"discrete mixture {mix_diff:.1e}")

    # (f) continuous imputation equals Monte Carlo integration of delta-hat
    nu1 = fit_nuisances(s1, analyst_specs())
    cols1 = s1.columns()
    values = nu1.nu_hat(cols1)
    mc_worst = 0.0
    mc_rng = np.random.default_rng(5150)
    for i in range(5):
        row = {name: np.asarray([vals[i]]) for name, vals in cols1.items()}
        mean0 = float(nu1.mediator_dist.mean(0, row)[0])
        sd0 = float(nu1.mediator_dist.residual_sd[0])

        def delta_at(m: np.ndarray) -> np.ndarray:
            out = np.empty(m.size)
            for start in range(0, m.size, 1_000_000):
                chunk = m[start:start + 1_000_000]
                tiled = {name: np.full(chunk.size, vals[0])
                         for name, vals in row.items()}
                out[start:start + chunk.size] = nu1.delta_hat(tiled, 0, chunk)
            return out

        mc = oracles.nu_hat_monte_carlo(delta_at, mean0, sd0, 8_000_000, mc_rng)
        mc_worst = max(mc_worst, abs(mc - float(values[i])))
    ok &= mc_worst <= 1e-3
    parts.append(f"continuous imputation vs MC {mc_worst:.1e}")

    _verdict(5, ok, "; ".join(parts))


def test_nie_centered_and_covered_when_mediator_is_inert():
    # outcome DGP with a zero mediator coefficient: the true NIE is exactly 0
    n, reps = 5000, 200
    points, covered = [], []
    for r in range(reps):
        rng = np.random.default_rng(child_seed(424242, r))
        x1 = rng.standard_normal(n)
        x2 = rng.standard_normal(n)
        u = rng.standard_normal(n)
        g = (rng.uniform(size=n) < expit(0.3 + 0.4 * x1 + 0.5 * x2)).astype(int)
        m = 0.6 * x1 - 0.3 * x2 + g + rng.standard_normal(n)
        y0 = 2 * x1 + u + 0.5 * rng.standard_normal(n)
        y1 = x1 + x2 + g + u + 0.5 * rng.standard_normal(n)
        data = ObservationalDataset(g=g, m=m, y0=y0, y1=y1,
                                    covariates=np.column_stack([x1, x2]),
                                    covariate_names=("X1", "X2"),
                                    mediator_kind="continuous")
        nie = natural_effects(data, fit_nuisances(data, analyst_specs()))["NIE"]
        points.append(nie.point)
        covered.append(nie.ci_low <= 0.0 <= nie.ci_high)
    points = np.asarray(points)
    mean = float(points.mean())
    mc_se = float(points.std(ddof=1) / np.sqrt(reps))
    cp = float(np.mean(covered))
    ok = abs(mean) <= 3.0 * mc_se and cp >= 0.90
    _verdict(6, ok, f"mean NIE {mean:+.5f} ({abs(mean) / mc_se:.2f} MC SEs), "
                    f"cp {cp:.3f} over {reps} replications")


SIMULATE_CONFIG = """\
output_dir: {out}
settings: [1, 2]
panels: [O]
sample_sizes: [200]
replications: 20
base_seed: 11
n_jobs: 1
include_controlled: true
oracle_draws: 1000000
figures: true
"""


def _snapshot(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "runlog.txt"}


def test_simulate_cli_byte_identical_across_runs_and_workers(tmp_path):
    outputs = {}
    for label, jobs in (("first", 1), ("second", 1), ("workers", 2)):
        out_dir = tmp_path / label
        config = tmp_path / f"{label}.yaml"
        config.write_text(SIMULATE_CONFIG.format(out=out_dir.as_posix()))
        result = subprocess.run(
            ["didmed", "simulate", "-c", str(config), "--jobs", str(jobs)],
            capture_output=True, text=True)
        assert result.returncode == 0, result.stderr
        outputs[label] = _snapshot(out_dir)

    names = sorted(outputs["first"])
    same_rerun = outputs["first"] == outputs["second"]
    same_workers = outputs["first"] == outputs["workers"]
    ok = same_rerun and same_workers and len(names) >= 4
    detail = (f"{len(names)} files ({', '.join(names)}): "
              f"rerun identical={same_rerun}, jobs=2 identical={same_workers}")
    _verdict(7, ok, detail)


def test_jobcorps_pipeline_reproduces_reference_magnitudes(tmp_path):
    if not JOBCORPS_CSV.exists():
        _announce(f"ACCEPTANCE 8: SKIP - Job Corps extract not present at {JOBCORPS_CSV}")
        pytest.skip("Job Corps extract not available in this environment")
    import dataclasses

    root = Path(__file__).resolve().parent.parent
    year2 = dataclasses.replace(
        load_analysis_config(root / "configs/jobcorps_year2.yaml"),
        output_dir=str(tmp_path / "year2"), figures=False)
    effects2 = cmd_analyze(year2).effects
    year1 = dataclasses.replace(
        load_analysis_config(root / "configs/jobcorps_year1.yaml"),
        output_dir=str(tmp_path / "year1"), figures=False)
    effects1 = cmd_analyze(year1).effects

    te2, nde2 = effects2["TE"], effects2["NDE"]
    nde1 = effects1["NDE"]
    ok = (abs(te2.point - 0.4129) <= 0.05 and abs(nde2.point - 0.3834) <= 0.05
          and nde1.point > 0.0 and nde1.p_value < 0.05)
    detail = (f"year-2 TE {te2.point:.4f} (ref 0.4129), "
              f"NDE {nde2.point:.4f} (ref 0.3834); "
              f"year-1 NDE {nde1.point:.4f} (p={nde1.p_value:.4f})")
    _verdict(8, ok, detail)
