# app/services/dgp_service.py
"""
Synthetic dose-finding trials.

Two parameterizations are supported:

* code  (table reproduction): C = gamma_d*d + shift + sigma_eta*(a*u + b*e_c),
        latent response = beta_c*C + a*u + b*e_y, with a = rho, b = sqrt(1 - rho^2).
        The DE intercept carries the offset and cor(eta, eps) = rho^2.
* prose: C = gamma_d*d + sigma_eta*u, latent = shift + beta_c*C + rho*u + b*e_y,
        so the ER intercept carries the offset and cor(eta, eps) = rho.

Both induce a marginal probit dose-response law; its parameters come from
`marginal_dr_truth`.
"""
from __future__ import annotations

import math
from typing import Dict, List, Tuple

import numpy as np

from app.core import numerics
from app.core.errors import UnknownScenarioError
from app.core.numerics import RngStream
from app.models.common import DgpMode
from app.models.fits import TrialDataset
from app.models.scenario import ScenarioConfig

SCENARIO_SCALES: Dict[int, float] = {1: 1.0, 2: 1.5}
BASE_DOSES = (1.0, 2.0, 3.0, 4.0, 5.0)


# ---------- presets ----------

def scenario_doses(scenario_id: int) -> List[float]:
    if scenario_id not in SCENARIO_SCALES:
        raise UnknownScenarioError(f"unknown scenario {scenario_id!r}; expected 1 or 2")
    scal = SCENARIO_SCALES[scenario_id]
    return [d / scal for d in BASE_DOSES]


def scenario_config(scenario_id: int, **overrides) -> ScenarioConfig:
    fields = {"name": f"scenario{scenario_id}", "dose_levels": scenario_doses(scenario_id)}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig(**fields)


# ---------- model parameters ----------

def intercepts(cfg: ScenarioConfig) -> Tuple[float, float]:
    """(beta0, gamma0) of the ER and DE models."""
    if cfg.dgp_mode == DgpMode.code:
        return 0.0, cfg.shift
    return cfg.shift, 0.0


def latent_correlation(cfg: ScenarioConfig) -> float:
    return cfg.rho ** 2 if cfg.dgp_mode == DgpMode.code else cfg.rho


def latent_covariance(cfg: ScenarioConfig) -> float:
    """cov(eta, eps) with var(eps) = 1."""
    return cfg.sigma_eta * latent_correlation(cfg)


def assign_doses(cfg: ScenarioConfig, n: int) -> np.ndarray:
    # cycles through the grid in order
    return np.resize(np.asarray(cfg.dose_levels, dtype=float), n)


def _noise(cfg: ScenarioConfig, stream: RngStream, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """(eta, eps) for n subjects; draws are one block ordered (u, e_c, e_y)."""
    z = numerics.draw_std_normal(stream, 3 * n)
    u, e_c, e_y = z[:n], z[n:2 * n], z[2 * n:]
    a = cfg.rho
    b = math.sqrt(1.0 - a * a)
    if cfg.dgp_mode == DgpMode.code:
        eta = cfg.sigma_eta * (a * u + b * e_c)
    else:
        eta = cfg.sigma_eta * u
    eps = a * u + b * e_y
    return eta, eps


# ---------- generation ----------

def generate_trial(cfg: ScenarioConfig, stream: RngStream, n: int | None = None) -> TrialDataset:
    n = cfg.n if n is None else n
    beta0, gamma0 = intercepts(cfg)
    dose = assign_doses(cfg, n)
    eta, eps = _noise(cfg, stream, n)
    exposure = gamma0 + cfg.gamma_d * dose + eta
    response = (beta0 + cfg.beta_c * exposure + eps > 0).astype(float)
    return TrialDataset(dose=dose, exposure=exposure, response=response, binary=True)


def generate_linear_trial(cfg: ScenarioConfig, stream: RngStream, n: int | None = None) -> TrialDataset:
    """Same skeleton with a continuous response Y = beta0 + beta_c*C + sigma_eps*eps."""
    n = cfg.n if n is None else n
    beta0, gamma0 = intercepts(cfg)
    dose = assign_doses(cfg, n)
    eta, eps = _noise(cfg, stream, n)
    exposure = gamma0 + cfg.gamma_d * dose + eta
    response = beta0 + cfg.beta_c * exposure + cfg.sigma_eps * eps
    return TrialDataset(dose=dose, exposure=exposure, response=response, binary=False)


# ---------- truth ----------

def marginal_dr_truth(cfg: ScenarioConfig) -> Tuple[float, float]:
    """Marginal probit (alpha0, alpha_d): linear predictor over sd(beta_c*eta + eps)."""
    beta0, gamma0 = intercepts(cfg)
    total_var = (cfg.beta_c ** 2 * cfg.sigma_eta ** 2 + 1.0
                 + 2.0 * cfg.beta_c * latent_covariance(cfg))
    scale = math.sqrt(total_var)
    return (beta0 + cfg.beta_c * gamma0) / scale, cfg.beta_c * cfg.gamma_d / scale


def per_dose_truth(cfg: ScenarioConfig) -> np.ndarray:
    alpha0, alpha_d = marginal_dr_truth(cfg)
    return numerics.std_normal_cdf(alpha0 + alpha_d * np.asarray(cfg.dose_levels, dtype=float))
