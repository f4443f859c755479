# app/services/harness_service.py
"""
Monte Carlo engine.

Replication r of every cell draws from RngStream(master_seed, r), so the cells
of one study share common random numbers (every cell restarts from the same
streams) and results do not depend on the worker count. Chunks are
computed in any order and reduced in replication-index order.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from typing import IO, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.errors import FitError, GoldStandardError
from app.core.log import log_write
from app.core.numerics import RngStream
from app.models.common import Adjustment, ExclusionMode, Link, PredictionForm, TruthMode
from app.models.fits import DesignMatrix
from app.models.scenario import ScenarioConfig
from app.models.study import (
    GOLD_STANDARD_N,
    GOLD_STREAM_INDEX,
    AggregateReport,
    LinearCheckReport,
    StudySpec,
    TruthRecord,
)
from app.services import dgp_service as dgp
from app.services import estimator_service as est
from app.services.regression_service import fit_glm_binary

ADJUSTMENT_ORDER = (Adjustment.UNADJ, Adjustment.CF)
IDENTITY_TOL = 1e-10


# ---------- gold standard ----------

def compute_gold_standard(cfg: ScenarioConfig, mode: TruthMode = TruthMode.analytic,
                          master_seed: int = 123) -> TruthRecord:
    if mode == TruthMode.analytic:
        alpha0, alpha_d = dgp.marginal_dr_truth(cfg)
        return TruthRecord(mode=mode, alpha0=alpha0, alpha_d=alpha_d,
                           per_dose=[float(p) for p in dgp.per_dose_truth(cfg)])

    data = dgp.generate_trial(cfg, RngStream(master_seed, GOLD_STREAM_INDEX), n=GOLD_STANDARD_N)
    try:
        fit = fit_glm_binary(DesignMatrix.build([("dose", data.dose)]), data.response, Link.probit)
    except FitError as e:
        raise GoldStandardError(f"gold-standard probit fit failed at n={GOLD_STANDARD_N}: {e}") from e
    # saturated per-dose means, the dummy-coded OLS fit without intercept
    means = pd.Series(data.response).groupby(data.dose).mean()
    per_dose = means.reindex(np.asarray(cfg.dose_levels, dtype=float)).to_numpy()
    return TruthRecord(mode=mode, alpha0=float(fit.coefficients[0]), alpha_d=float(fit.coefficients[1]),
                       per_dose=[float(p) for p in per_dose])


# ---------- statistics ----------

def _masked_var(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    sel = values[mask]
    if sel.shape[0] < 2:
        return np.full(values.shape[1:], np.nan)
    return np.var(sel, axis=0, ddof=1)


def _blocks(n_rows: int, n_blocks: int) -> List[np.ndarray]:
    return np.array_split(np.arange(n_rows), min(n_blocks, n_rows))


def jackknife_ratio_se(num: np.ndarray, num_mask: np.ndarray, den: np.ndarray, den_mask: np.ndarray,
                       n_blocks: int) -> np.ndarray:
    """Delete-one-block jackknife SE of var(num)/var(den), column-wise.

    Blocks are contiguous runs of replication indices.
    """
    blocks = _blocks(num.shape[0], n_blocks)
    b = len(blocks)
    thetas = []
    for idx in blocks:
        keep = np.ones(num.shape[0], dtype=bool)
        keep[idx] = False
        thetas.append(_masked_var(num, num_mask & keep) / _masked_var(den, den_mask & keep))
    thetas = np.asarray(thetas)
    centered = thetas - thetas.mean(axis=0)
    return np.sqrt((b - 1) / b * np.sum(centered ** 2, axis=0))


def aggregate_cell(n: int, rho: float, adjustment: Adjustment, truth: TruthRecord,
                   dr: np.ndarray, dr_valid: np.ndarray, dr_pred: np.ndarray,
                   der: np.ndarray, der_valid: np.ndarray, der_pred: np.ndarray,
                   exclusion: ExclusionMode = ExclusionMode.pairwise,
                   jackknife_blocks: int = 50,
                   der_pred_valid: Optional[np.ndarray] = None) -> AggregateReport:
    """Reduce one cell.

    Parameter statistics use der_valid; per-dose statistics use der_pred_valid,
    which differs only when the prediction comes from a separate fit.
    """
    if der_pred_valid is None:
        der_pred_valid = der_valid
    both = dr_valid & der_valid
    both_pred = dr_valid & der_pred_valid
    if exclusion == ExclusionMode.pairwise:
        mask_dr = mask_der = both
        pmask_dr = pmask_der = both_pred
    else:
        mask_dr, mask_der = dr_valid, der_valid
        pmask_dr, pmask_der = dr_valid, der_pred_valid

    theta = np.array([truth.alpha0, truth.alpha_d])
    per_dose_truth = np.asarray(truth.per_dose)

    bias_dr = np.mean(dr[mask_dr] - theta, axis=0)
    bias_der = np.mean(der[mask_der] - theta, axis=0)
    var_dr = _masked_var(dr, mask_dr)
    var_der = _masked_var(der, mask_der)
    mse_dr = var_dr + bias_dr ** 2
    mse_der = var_der + bias_der ** 2

    with np.errstate(invalid="ignore", divide="ignore"):
        ratio_var = var_der / var_dr
        ratio_mse = mse_der / mse_dr
        ratio_var_se = jackknife_ratio_se(der, mask_der, dr, mask_dr, jackknife_blocks)
        dose_ratio = _masked_var(der_pred, pmask_der) / _masked_var(dr_pred, pmask_dr)
        dose_ratio_se = jackknife_ratio_se(der_pred, pmask_der, dr_pred, pmask_dr, jackknife_blocks)
        per_dose_bias_dr = np.mean(dr_pred[pmask_dr] - per_dose_truth, axis=0)
        per_dose_bias_der = np.mean(der_pred[pmask_der] - per_dose_truth, axis=0)

    # excluded is always the pairwise count; the per-estimator counts follow the mode
    used = int(both.sum())
    return AggregateReport(
        n=n,
        rho=rho,
        adjustment=adjustment,
        bias_dr=bias_dr.tolist(),
        bias_der=bias_der.tolist(),
        variance_dr=var_dr.tolist(),
        variance_der=var_der.tolist(),
        mse_dr=mse_dr.tolist(),
        mse_der=mse_der.tolist(),
        ratio_variance_vs_dr=ratio_var.tolist(),
        ratio_mse_vs_dr=ratio_mse.tolist(),
        ratio_variance_se=ratio_var_se.tolist(),
        per_dose_variance_ratio=dose_ratio.tolist(),
        per_dose_variance_ratio_se=dose_ratio_se.tolist(),
        per_dose_bias_dr=per_dose_bias_dr.tolist(),
        per_dose_bias_der=per_dose_bias_der.tolist(),
        n_replications=len(dr_valid),
        used_replications=used,
        excluded_replications=len(dr_valid) - used,
        used_replications_dr=int(mask_dr.sum()),
        used_replications_der=int(mask_der.sum()),
    )


# ---------- replication workers (top-level so they pickle) ----------

def _der_replicate(data, adjustment: Adjustment, form: PredictionForm, link: Link,
                   doses: np.ndarray) -> Tuple[np.ndarray, bool, np.ndarray, bool]:
    """(marginal estimate, estimate ok, per-dose prediction, prediction ok).

    The empirical prediction under a non-probit link uses its own fit, so it
    survives a failed probit fit and vice versa.
    """
    use_control = adjustment == Adjustment.CF
    values = np.full(2, np.nan)
    pred = np.full(len(doses), np.nan)
    try:
        bundle = est.fit_cf_bundle(data, Link.probit, use_control=use_control)
        estimate = est.convert_cf_to_marginal(bundle)
        values = estimate.as_array()
        if form == PredictionForm.modelbased:
            pred = est.predict_dr_curve(estimate, doses)
        elif link == Link.probit:
            pred = est.predict_response_empirical(bundle, doses)
    except FitError:
        pass
    if form == PredictionForm.empirical and link != Link.probit:
        try:
            pred = est.predict_response_empirical(est.fit_cf_bundle(data, link, use_control=use_control), doses)
        except FitError:
            pass
    ok = bool(np.all(np.isfinite(values)))
    pred_ok = bool(np.all(np.isfinite(pred)))
    if form == PredictionForm.modelbased or link == Link.probit:
        ok = pred_ok = ok and pred_ok
    return values, ok, pred, pred_ok


def _binary_chunk(payload: Dict, start: int, stop: int) -> Dict[str, np.ndarray]:
    cfg: ScenarioConfig = payload["cfg"]
    adjustments: Sequence[Adjustment] = payload["adjustments"]
    doses = np.asarray(cfg.dose_levels, dtype=float)
    m, k = stop - start, len(doses)
    out = {
        "dr": np.full((m, 2), np.nan),
        "dr_valid": np.zeros(m, dtype=bool),
        "dr_pred": np.full((m, k), np.nan),
    }
    for adj in adjustments:
        out[f"der_{adj.value}"] = np.full((m, 2), np.nan)
        out[f"der_valid_{adj.value}"] = np.zeros(m, dtype=bool)
        out[f"der_pred_{adj.value}"] = np.full((m, k), np.nan)
        out[f"der_pred_valid_{adj.value}"] = np.zeros(m, dtype=bool)

    for i, r in enumerate(range(start, stop)):
        data = dgp.generate_trial(cfg, RngStream(payload["seed"], r))
        dr = est.estimate_dr(data)
        if dr.valid:
            out["dr"][i] = dr.as_array()
            out["dr_pred"][i] = est.predict_dr_curve(dr, doses)
            out["dr_valid"][i] = True
        for adj in adjustments:
            values, ok, pred, pred_ok = _der_replicate(data, adj, payload["form"], payload["link"], doses)
            out[f"der_{adj.value}"][i] = values
            out[f"der_valid_{adj.value}"][i] = ok
            out[f"der_pred_{adj.value}"][i] = pred
            out[f"der_pred_valid_{adj.value}"][i] = pred_ok
    return out


def _linear_chunk(payload: Dict, start: int, stop: int) -> Dict[str, np.ndarray]:
    cfg: ScenarioConfig = payload["cfg"]
    slopes = np.empty((stop - start, 3))
    for i, r in enumerate(range(start, stop)):
        data = dgp.generate_linear_trial(cfg, RngStream(payload["seed"], r))
        slopes[i] = est.linear_slopes(data)
    return {"slopes": slopes}


def _run_chunks(worker: Callable, payload: Dict, n_replications: int, workers: int) -> Dict[str, np.ndarray]:
    n_chunks = 1 if workers <= 1 else min(n_replications, workers * 4)
    bounds = np.linspace(0, n_replications, n_chunks + 1).astype(int)
    spans = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers <= 1:
        parts = [worker(payload, a, b) for a, b in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(worker, payload, a, b) for a, b in spans]
            parts = [f.result() for f in futures]   # index order
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


# ---------- studies ----------

def _ordered_adjustments(spec: StudySpec, rho: float) -> List[Adjustment]:
    return [a for a in ADJUSTMENT_ORDER if spec.wants(a, rho)]


def run_study(spec: StudySpec, log_fh: Optional[IO[str]] = None) -> List[AggregateReport]:
    reports: List[AggregateReport] = []
    truths: Dict[float, TruthRecord] = {}
    for n, rho in spec.cells():
        adjustments = _ordered_adjustments(spec, rho)
        if not adjustments:
            continue
        cfg = spec.scenario.model_copy(update={"n": n, "rho": rho})
        if rho not in truths:
            truths[rho] = compute_gold_standard(cfg, spec.truth_mode, spec.master_seed)
            log_write(log_fh, f"[GOLD] rho={rho} mode={spec.truth_mode.value} "
                              f"alpha=({truths[rho].alpha0:.4f}, {truths[rho].alpha_d:.4f})")
        t0 = time.perf_counter()
        payload = {
            "cfg": cfg,
            "seed": spec.master_seed,
            "adjustments": adjustments,
            "form": spec.prediction_form,
            "link": spec.prediction_link,
        }
        res = _run_chunks(_binary_chunk, payload, spec.n_replications, spec.workers)
        for adj in adjustments:
            report = aggregate_cell(
                n, rho, adj, truths[rho],
                res["dr"], res["dr_valid"], res["dr_pred"],
                res[f"der_{adj.value}"], res[f"der_valid_{adj.value}"], res[f"der_pred_{adj.value}"],
                exclusion=spec.exclusion,
                jackknife_blocks=spec.jackknife_blocks,
                der_pred_valid=res[f"der_pred_valid_{adj.value}"],
            )
            reports.append(report)
            log_write(log_fh, f"[HARNESS] n={n} rho={rho} adj={adj.value} reps={spec.n_replications} "
                              f"excluded={report.excluded_replications} "
                              f"used=(dr {report.used_replications_dr}, der {report.used_replications_der}) "
                              f"vratio=({report.ratio_variance_vs_dr[0]:.3f}, {report.ratio_variance_vs_dr[1]:.3f}) "
                              f"elapsed={time.perf_counter() - t0:.1f}s")
    return reports


def _se_units(diff: float, se: float, floor: float = 1e-9) -> float:
    if abs(diff) <= floor:
        return 0.0
    return abs(diff) / se if se > 0 else math.inf


def run_linear_check(spec: StudySpec, log_fh: Optional[IO[str]] = None) -> List[LinearCheckReport]:
    out: List[LinearCheckReport] = []
    sc = spec.scenario
    sigma_d2 = float(np.var(np.asarray(sc.dose_levels, dtype=float)))
    sigma_eta2, sigma_eps2 = sc.sigma_eta ** 2, sc.sigma_eps ** 2
    for n, rho in spec.cells():
        cfg = sc.model_copy(update={"n": n, "rho": rho})
        t0 = time.perf_counter()
        slopes = _run_chunks(_linear_chunk, {"cfg": cfg, "seed": spec.master_seed},
                             spec.n_replications, spec.workers)["slopes"]
        finite = np.all(np.isfinite(slopes), axis=1)
        dr, unadj, cf = slopes[:, :1], slopes[:, 1:2], slopes[:, 2:3]
        var_dr = float(_masked_var(dr, finite)[0])
        var_unadj = float(_masked_var(unadj, finite)[0])
        var_cf = float(_masked_var(cf, finite)[0])
        ratio_unadj, ratio_cf = var_unadj / var_dr, var_cf / var_dr
        se_unadj = float(jackknife_ratio_se(unadj, finite, dr, finite, spec.jackknife_blocks)[0])
        se_cf = float(jackknife_ratio_se(cf, finite, dr, finite, spec.jackknife_blocks)[0])
        analytic_unadj = est.linear_variance_ratio_unadjusted(sc.beta_c, sc.gamma_d, sigma_d2,
                                                              sigma_eta2, sigma_eps2)
        analytic_cf = est.linear_variance_ratio_cf()
        diffs = np.abs(cf[finite, 0] - dr[finite, 0])
        max_diff = float(diffs.max()) if diffs.size else 0.0
        report = LinearCheckReport(
            n=n,
            rho=rho,
            n_replications=spec.n_replications,
            used_replications=int(finite.sum()),
            variance_dr=var_dr,
            variance_der_unadjusted=var_unadj,
            variance_der_cf=var_cf,
            analytic_variance_dr=est.linear_variance_dr(n, sc.beta_c, sigma_d2, sigma_eta2, sigma_eps2),
            analytic_variance_der_unadjusted=est.linear_variance_der_unadjusted(
                n, sc.beta_c, sc.gamma_d, sigma_d2, sigma_eta2, sigma_eps2),
            analytic_variance_der_cf=est.linear_variance_der_cf(n, sc.beta_c, sigma_d2, sigma_eta2, sigma_eps2),
            ratio_unadjusted=ratio_unadj,
            ratio_unadjusted_se=se_unadj,
            ratio_unadjusted_analytic=analytic_unadj,
            ratio_cf=ratio_cf,
            ratio_cf_se=se_cf,
            ratio_cf_analytic=analytic_cf,
            discrepancy_unadjusted_se_units=_se_units(ratio_unadj - analytic_unadj, se_unadj),
            discrepancy_cf_se_units=_se_units(ratio_cf - analytic_cf, se_cf),
            identity_max_abs_diff=max_diff,
            identity_violations=int(np.sum(diffs > IDENTITY_TOL)),
            identity_tolerance=IDENTITY_TOL,
        )
        out.append(report)
        log_write(log_fh, f"[HARNESS] linear n={n} rho={rho} ratio_unadj={ratio_unadj:.4f} "
                          f"(analytic {analytic_unadj:.4f}) ratio_cf={ratio_cf:.4f} "
                          f"identity_violations={report.identity_violations} "
                          f"elapsed={time.perf_counter() - t0:.1f}s")
    return out
