# app/models/fits.py
"""Numeric containers passed between the regression, dgp and estimator services."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from app.models.common import Link, Method

MAX_COVARIATES = 3


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    names: Tuple[str, ...]
    has_intercept: bool = True

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("design matrix must be 2-dimensional")
        if self.values.shape[1] != len(self.names):
            raise ValueError("one name per design column")
        if self.values.shape[1] > MAX_COVARIATES + int(self.has_intercept):
            raise ValueError(f"at most {MAX_COVARIATES} covariates plus intercept")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("design matrix entries must be finite")

    @classmethod
    def build(cls, covariates: Sequence[Tuple[str, np.ndarray]] = (), n: Optional[int] = None,
              intercept: bool = True) -> "DesignMatrix":
        cols, names = [], []
        if covariates:
            n = len(covariates[0][1])
        if n is None:
            raise ValueError("n is required for an intercept-only design")
        if intercept:
            cols.append(np.ones(n))
            names.append("(Intercept)")
        for name, col in covariates:
            cols.append(np.asarray(col, dtype=float))
            names.append(name)
        return cls(np.column_stack(cols), tuple(names), intercept)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    names: Tuple[str, ...] = ()
    residuals: Optional[np.ndarray] = None        # OLS only
    residual_variance: Optional[float] = None     # OLS only, denominator n - p
    deviance: Optional[float] = None              # GLM only
    link: Optional[Link] = None

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


@dataclass(frozen=True)
class TrialDataset:
    dose: np.ndarray
    exposure: np.ndarray
    response: np.ndarray
    binary: bool = True

    def __post_init__(self):
        if not (len(self.dose) == len(self.exposure) == len(self.response)):
            raise ValueError("dose, exposure and response must have the same length")
        if self.binary and not np.all((self.response == 0) | (self.response == 1)):
            raise ValueError("binary response must be 0/1")

    @property
    def n(self) -> int:
        return len(self.dose)


@dataclass(frozen=True)
class MarginalDrEstimate:
    alpha0: float
    alpha_d: float
    method: Method
    valid: bool = True

    @classmethod
    def missing(cls, method: Method) -> "MarginalDrEstimate":
        return cls(float("nan"), float("nan"), method, valid=False)

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha0, self.alpha_d])


@dataclass(frozen=True)
class CfFitBundle:
    de_fit: FitResult
    eta_hat: np.ndarray
    sigma_eta2_hat: float
    er_fit: FitResult
    rho2_hat: float
    use_control: bool = True
    link: Link = Link.probit

    @property
    def gamma0_hat(self) -> float:
        return float(self.de_fit.coefficients[0])

    @property
    def gamma_d_hat(self) -> float:
        return float(self.de_fit.coefficients[1])

    @property
    def beta_star(self) -> np.ndarray:
        """(β0*, βc*, βη*) with βη* = 0 for the unadjusted fit."""
        b = self.er_fit.coefficients
        if self.use_control:
            return np.asarray(b, dtype=float)
        return np.array([b[0], b[1], 0.0])
