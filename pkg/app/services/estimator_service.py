# app/services/estimator_service.py
"""
DR and DER estimators of the marginal probit dose-response curve.

DR:        probit of response on dose.
DER_UNADJ: OLS of exposure on dose, probit of response on exposure, then the
           probit marginalization over the DE residual.
DER_CF:    same, with the DE residual (control function) as an extra ER regressor.
           The ER coefficients are rescaled by sqrt(1 - rho^2) before
           marginalization.
"""
from __future__ import annotations

import math
from typing import Optional, Tuple, Union

import numpy as np

from app.core import numerics
from app.core.errors import FitError, NonPositiveVarianceError
from app.models.common import Link, Method
from app.models.fits import CfFitBundle, DesignMatrix, MarginalDrEstimate, TrialDataset
from app.services import regression_service as reg

DoseLike = Union[float, np.ndarray]


# ---------- DR ----------

def estimate_dr(data: TrialDataset) -> MarginalDrEstimate:
    X = DesignMatrix.build([("dose", data.dose)])
    try:
        fit = reg.fit_glm_binary(X, data.response, Link.probit)
    except FitError:
        return MarginalDrEstimate.missing(Method.DR)
    b0, bd = fit.coefficients
    return MarginalDrEstimate(float(b0), float(bd), Method.DR)


# ---------- DER ----------

def fit_cf_bundle(data: TrialDataset, link: Link = Link.probit, use_control: bool = True) -> CfFitBundle:
    """Two-step fit: DE residuals first, then the ER model on (exposure, residual).

    Raises RankDeficientError / SeparationError / OneClassOnlyError.
    """
    de_fit = reg.fit_ols(DesignMatrix.build([("dose", data.dose)]), data.exposure)
    eta_hat = de_fit.residuals
    sigma_eta2 = float(de_fit.residual_variance)  # RSS / (n - 2)

    covariates = [("exposure", data.exposure)]
    if use_control:
        covariates.append(("eta_hat", eta_hat))
    er_fit = reg.fit_glm_binary(DesignMatrix.build(covariates), data.response, link)

    rho2 = 0.0
    if use_control:
        # rho^2 = b_eta^2 s^2 / (1 + b_eta^2 s^2); the coefficient enters squared
        t = er_fit.coefficients[2] ** 2 * sigma_eta2
        rho2 = float(t / (1.0 + t))
    return CfFitBundle(
        de_fit=de_fit,
        eta_hat=eta_hat,
        sigma_eta2_hat=sigma_eta2,
        er_fit=er_fit,
        rho2_hat=rho2,
        use_control=use_control,
        link=link,
    )


def convert_cf_to_marginal(bundle: CfFitBundle) -> MarginalDrEstimate:
    method = Method.DER_CF if bundle.use_control else Method.DER_UNADJ
    if bundle.link != Link.probit:
        raise ValueError("marginal conversion is defined for the probit link only")
    b0s, bcs, bes = bundle.beta_star
    shrink = math.sqrt(1.0 - bundle.rho2_hat)
    b0, bc, be = b0s * shrink, bcs * shrink, bes * shrink
    # (bc + be) enters squared
    denom = math.sqrt(1.0 - bundle.rho2_hat + (bc + be) ** 2 * bundle.sigma_eta2_hat)
    alpha0 = (b0 + bc * bundle.gamma0_hat) / denom
    alpha_d = bc * bundle.gamma_d_hat / denom
    return MarginalDrEstimate(float(alpha0), float(alpha_d), method)


def estimate_der_cf(data: TrialDataset) -> MarginalDrEstimate:
    try:
        return convert_cf_to_marginal(fit_cf_bundle(data, Link.probit, use_control=True))
    except FitError:
        return MarginalDrEstimate.missing(Method.DER_CF)


def estimate_der_unadjusted(data: TrialDataset) -> MarginalDrEstimate:
    try:
        return convert_cf_to_marginal(fit_cf_bundle(data, Link.probit, use_control=False))
    except FitError:
        return MarginalDrEstimate.missing(Method.DER_UNADJ)


# ---------- response prediction ----------

def predict_response_modelbased(est: MarginalDrEstimate, dose: DoseLike) -> DoseLike:
    if not est.valid:
        return np.full(np.shape(dose), np.nan) if np.ndim(dose) else float("nan")
    return numerics.std_normal_cdf(est.alpha0 + est.alpha_d * np.asarray(dose, dtype=float))


def predict_dr_curve(est: MarginalDrEstimate, doses) -> np.ndarray:
    return np.atleast_1d(predict_response_modelbased(est, np.asarray(doses, dtype=float)))


def predict_response_empirical(bundle: CfFitBundle, dose: DoseLike,
                               link: Optional[Link] = None) -> DoseLike:
    """Average of g(b0* + bc*·C_i(d) + be*·eta_i) over subjects, C_i(d) = g0 + gd·d + eta_i."""
    link = bundle.link if link is None else link
    if link != bundle.link:
        raise ValueError(f"bundle was fitted with the {bundle.link.value} link, not {link.value}")
    b0s, bcs, bes = bundle.beta_star
    eta = bundle.eta_hat
    d = np.atleast_1d(np.asarray(dose, dtype=float))
    c_hat = bundle.gamma0_hat + bundle.gamma_d_hat * d[:, None] + eta[None, :]
    lp = b0s + bcs * c_hat + bes * eta[None, :]
    g = numerics.std_normal_cdf(lp) if link == Link.probit else numerics.expit(lp)
    out = np.mean(g, axis=1)
    return float(out[0]) if np.ndim(dose) == 0 else out


# ---------- linear models: closed forms ----------

def _check_variances(**variances: float) -> None:
    for name, v in variances.items():
        if not v > 0:
            raise NonPositiveVarianceError(f"{name} must be > 0, got {v}")


def linear_variance_ratio_unadjusted(beta_c: float, gamma_d: float, sigma_d2: float,
                                     sigma_eta2: float, sigma_eps2: float) -> float:
    _check_variances(sigma_d2=sigma_d2, sigma_eta2=sigma_eta2, sigma_eps2=sigma_eps2)
    gain = sigma_eta2 * sigma_eps2 / (
        (beta_c ** 2 * sigma_eta2 + sigma_eps2) * (gamma_d ** 2 * sigma_d2 + sigma_eta2)
    )
    return 1.0 - gain


def linear_variance_ratio_cf() -> float:
    return 1.0


def linear_variance_dr(n: int, beta_c: float, sigma_d2: float, sigma_eta2: float,
                       sigma_eps2: float) -> float:
    _check_variances(sigma_d2=sigma_d2, sigma_eta2=sigma_eta2, sigma_eps2=sigma_eps2)
    return (beta_c ** 2 * sigma_eta2 + sigma_eps2) / (sigma_d2 * n)


def linear_variance_der_unadjusted(n: int, beta_c: float, gamma_d: float, sigma_d2: float,
                                   sigma_eta2: float, sigma_eps2: float) -> float:
    """Delta-method variance of gamma_d_hat * beta_c_hat."""
    _check_variances(sigma_d2=sigma_d2, sigma_eta2=sigma_eta2, sigma_eps2=sigma_eps2)
    sigma_c2 = gamma_d ** 2 * sigma_d2 + sigma_eta2
    return (beta_c ** 2 * sigma_eta2 / sigma_d2 + gamma_d ** 2 * sigma_eps2 / sigma_c2) / n


def linear_variance_der_cf(n: int, beta_c: float, sigma_d2: float, sigma_eta2: float,
                           sigma_eps2: float) -> float:
    """Delta-method variance with the 2SLS variance of the CF slope."""
    _check_variances(sigma_d2=sigma_d2, sigma_eta2=sigma_eta2, sigma_eps2=sigma_eps2)
    return (beta_c ** 2 * sigma_eta2 / sigma_d2 + sigma_eps2 / sigma_d2) / n


def linear_slopes(data: TrialDataset) -> Tuple[float, float, float]:
    """(OLS DR slope, unadjusted DER product, CF DER product) for a continuous-response trial."""
    alpha_d = reg.fit_ols(DesignMatrix.build([("dose", data.dose)]), data.response).coefficients[1]
    de_fit = reg.fit_ols(DesignMatrix.build([("dose", data.dose)]), data.exposure)
    gamma_d = de_fit.coefficients[1]
    beta_c = reg.fit_ols(DesignMatrix.build([("exposure", data.exposure)]), data.response).coefficients[1]
    beta_c_cf = reg.fit_ols(
        DesignMatrix.build([("exposure", data.exposure), ("eta_hat", de_fit.residuals)]),
        data.response,
    ).coefficients[1]
    return float(alpha_d), float(gamma_d * beta_c), float(gamma_d * beta_c_cf)
