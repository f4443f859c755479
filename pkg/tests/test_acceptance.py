"""Desk-scale reproduction of the published tables and figures (10000 replications).

Run with `pytest -m slow`.
"""
import os

import numpy as np
import pytest

from app.core.numerics import RngStream
from app.models.common import Adjustment, Link
from app.models.fits import DesignMatrix
from app.models.study import StudySpec
from app.services import dgp_service as dgp
from app.services import harness_service as harness
from app.services.regression_service import fit_glm_binary

pytestmark = pytest.mark.slow

REPS = 10000
WORKERS = os.cpu_count() or 1


def _cell(scenario_id, n, rho, adjustment):
    spec = StudySpec(scenario=dgp.scenario_config(scenario_id), n_values=[n], rho_values=[rho],
                     n_replications=REPS, adjustments=[adjustment], workers=WORKERS)
    (report,) = harness.run_study(spec)
    return report


@pytest.mark.parametrize("scenario_id,n,rho,adjustment,expected", [
    (1, 40, 0.0, Adjustment.UNADJ, (0.15, 0.12)),
    (1, 80, 0.6, Adjustment.CF, (0.89, 0.89)),
    (2, 40, 0.9, Adjustment.CF, (0.71, 0.74)),
    (2, 120, 0.0, Adjustment.UNADJ, (0.38, 0.36)),
    (2, 120, 0.9, Adjustment.CF, (0.76, 0.78)),
])
def test_published_variance_ratios(scenario_id, n, rho, adjustment, expected):
    report = _cell(scenario_id, n, rho, adjustment)
    assert report.ratio_variance_vs_dr == pytest.approx(expected, abs=0.05)


def test_published_mse_ratios_of_confounded_unadjusted_fit():
    report = _cell(1, 120, 0.9, Adjustment.UNADJ)
    assert report.ratio_mse_vs_dr == pytest.approx((7.15, 8.11), rel=0.15)
    assert abs(report.bias_der[1]) > 0.25


def test_unadjusted_slope_bias_grows_with_confounding():
    spec = StudySpec(scenario=dgp.scenario_config(1), n_values=[120], rho_values=[0.3, 0.6, 0.9],
                     n_replications=REPS, adjustments=[Adjustment.UNADJ], workers=WORKERS)
    biases = [abs(r.bias_der[1]) for r in harness.run_study(spec)]
    assert biases[0] < biases[1] < biases[2]


def test_cf_mse_ratios_at_moderate_confounding():
    report = _cell(1, 80, 0.6, Adjustment.CF)
    assert report.ratio_mse_vs_dr == pytest.approx((0.87, 0.88), abs=0.05)


def test_dr_bias_shrinks_with_sample_size():
    spec = StudySpec(scenario=dgp.scenario_config(1), n_values=[40, 80, 120], rho_values=[0.0],
                     n_replications=REPS, adjustments=[Adjustment.CF], workers=WORKERS)
    biases = [abs(r.bias_dr[0]) for r in harness.run_study(spec)]
    assert biases[0] > biases[1] > biases[2]


def test_figure_properties():
    spec = StudySpec(scenario=dgp.scenario_config(1), n_values=[40, 80], rho_values=[0.0, 0.3, 0.6, 0.9],
                     n_replications=REPS, unadjusted_rho_values=[0.0], workers=WORKERS)
    reports = {(r.n, r.rho, r.adjustment): r for r in harness.run_study(spec)}
    for r in reports.values():
        assert max(r.per_dose_variance_ratio) < 1.0
    for n in (40, 80):
        unadj = reports[(n, 0.0, Adjustment.UNADJ)].per_dose_variance_ratio
        cf = reports[(n, 0.0, Adjustment.CF)].per_dose_variance_ratio
        assert all(u <= c for u, c in zip(unadj, cf))
    middle = 2
    for rho in (0.0, 0.3, 0.6, 0.9):
        assert (reports[(80, rho, Adjustment.CF)].per_dose_variance_ratio[middle]
                <= reports[(40, rho, Adjustment.CF)].per_dose_variance_ratio[middle])


def test_linear_model_closed_forms():
    spec = StudySpec(scenario=dgp.scenario_config(1), n_values=[200], rho_values=[0.0],
                     n_replications=REPS, workers=WORKERS, jackknife_blocks=100)
    (report,) = harness.run_linear_check(spec)
    assert report.discrepancy_unadjusted_se_units < 3.0
    assert report.discrepancy_cf_se_units < 3.0
    assert report.identity_violations == 0
    assert report.variance_der_unadjusted == pytest.approx(report.analytic_variance_der_unadjusted, rel=0.10)
    assert report.variance_dr == pytest.approx(report.analytic_variance_dr, rel=0.10)


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.6, 0.9])
def test_marginal_truth_against_large_fit(rho):
    cfg = dgp.scenario_config(1, rho=rho)
    data = dgp.generate_trial(cfg, RngStream(99, 0), n=2_000_000)
    fit = fit_glm_binary(DesignMatrix.build([("dose", data.dose)]), data.response, Link.probit)
    assert fit.coefficients == pytest.approx(dgp.marginal_dr_truth(cfg), abs=0.01)


@pytest.mark.parametrize("scenario_id,rates,printed_tol", [
    (1, (0.08, 0.24, 0.50, 0.76, 0.92), 0.005),
    # printed rates for the rescaled grid are rounded loosely (Phi gives 0.407 and 0.593 at the top)
    (2, (0.05, 0.12, 0.24, 0.40, 0.60), 0.01),
])
def test_per_dose_rates_at_large_n(scenario_id, rates, printed_tol):
    cfg = dgp.scenario_config(scenario_id)
    data = dgp.generate_trial(cfg, RngStream(5, 0), n=1_000_000)
    doses = np.asarray(cfg.dose_levels)
    observed = [data.response[np.isclose(data.dose, d)].mean() for d in doses]
    assert observed == pytest.approx(dgp.per_dose_truth(cfg), abs=0.005)
    assert observed == pytest.approx(rates, abs=printed_tol)
