import numpy as np
import pytest

from app.core import numerics
from app.core.errors import OneClassOnlyError, RankDeficientError, SeparationError
from app.models.common import Link
from app.models.fits import DesignMatrix
from app.services import regression_service as reg


def _probit_data(rng, n, b0=0.3, b1=0.8):
    x = rng.standard_normal(n)
    y = (rng.uniform(size=n) < numerics.std_normal_cdf(b0 + b1 * x)).astype(float)
    return x, y


def _newton_logit_oracle(X, y, iters=60):
    beta = np.zeros(X.shape[1])
    for _ in range(iters):
        mu = 1.0 / (1.0 + np.exp(-(X @ beta)))
        grad = X.T @ (y - mu)
        hess = X.T @ ((mu * (1 - mu))[:, None] * X)
        beta = beta + np.linalg.solve(hess, grad)
    return beta


# ---------- OLS ----------

def test_ols_intercept_only_is_the_mean():
    fit = reg.fit_ols(DesignMatrix.build(n=3), np.array([1.0, 2.0, 3.0]))
    assert fit.coefficients == pytest.approx([2.0])
    assert fit.residual_variance == pytest.approx(1.0)


def test_ols_exact_fit_has_zero_residuals():
    x = np.arange(10.0)
    fit = reg.fit_ols(DesignMatrix.build([("x", x)]), 2.0 + 3.0 * x)
    assert fit.coefficients == pytest.approx([2.0, 3.0], abs=1e-12)
    assert np.allclose(fit.residuals, 0.0, atol=1e-12)
    assert fit.residual_variance == pytest.approx(0.0, abs=1e-20)


def test_ols_hand_example_matches_normal_equations():
    d = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([2.1, 3.9, 6.2, 7.8])
    fit = reg.fit_ols(DesignMatrix.build([("dose", d)]), y)
    # slope = (4*59.7 - 10*20) / (4*30 - 10^2), intercept = (20 - 10*slope) / 4
    assert fit.coefficients == pytest.approx([0.15, 1.94], abs=1e-9)
    assert fit.coef("dose") == pytest.approx(1.94, abs=1e-9)


def test_ols_normal_equations_and_residual_sum():
    rng = np.random.default_rng(3)
    x1, x2 = rng.standard_normal(50), rng.standard_normal(50)
    y = 1.0 + 0.5 * x1 - 2.0 * x2 + rng.standard_normal(50)
    X = DesignMatrix.build([("x1", x1), ("x2", x2)])
    fit = reg.fit_ols(X, y)
    lhs = X.values.T @ X.values @ fit.coefficients
    rhs = X.values.T @ y
    assert np.allclose(lhs, rhs, rtol=1e-8, atol=1e-8)
    assert abs(fit.residuals.sum()) < 1e-8 * 50
    assert fit.residual_variance == pytest.approx(fit.residuals @ fit.residuals / 47)


def test_ols_single_dose_level_is_rank_deficient():
    with pytest.raises(RankDeficientError):
        reg.fit_ols(DesignMatrix.build([("dose", np.full(20, 2.0))]), np.arange(20.0))


def test_ols_collinear_columns_are_rank_deficient():
    x = np.arange(12.0)
    with pytest.raises(RankDeficientError):
        reg.fit_ols(DesignMatrix.build([("a", x), ("b", 2.0 * x)]), np.ones(12) + x)


def test_ols_needs_more_rows_than_columns():
    with pytest.raises(RankDeficientError):
        reg.fit_ols(DesignMatrix.build([("x", np.array([1.0, 2.0]))]), np.array([1.0, 2.0]))


# ---------- design matrix ----------

def test_design_matrix_validation():
    x = np.arange(10.0)
    with pytest.raises(ValueError):
        DesignMatrix.build([("a", x), ("b", x ** 2), ("c", x ** 3), ("d", x ** 4)])
    with pytest.raises(ValueError):
        DesignMatrix.build([("a", np.array([1.0, np.nan, 3.0]))])
    X = DesignMatrix.build([("dose", x)])
    assert X.names == ("(Intercept)", "dose")
    assert (X.n_rows, X.n_cols) == (10, 2)


# ---------- binary GLM ----------

def test_glm_rejects_constant_response():
    x = np.arange(10.0)
    with pytest.raises(OneClassOnlyError):
        reg.fit_glm_binary(DesignMatrix.build([("x", x)]), np.zeros(10))


def test_glm_rejects_non_binary_response():
    x = np.arange(4.0)
    with pytest.raises(ValueError):
        reg.fit_glm_binary(DesignMatrix.build([("x", x)]), np.array([0.0, 1.0, 2.0, 1.0]))


@pytest.mark.parametrize("link", [Link.probit, Link.logit])
def test_glm_complete_separation(link):
    x = np.arange(1.0, 11.0)
    y = (x > 5).astype(float)
    with pytest.raises(SeparationError):
        reg.fit_glm_binary(DesignMatrix.build([("x", x)]), y, link)


def test_glm_null_model_recovery():
    rng = np.random.default_rng(42)
    n = 4000
    x = rng.standard_normal(n)
    y = (rng.uniform(size=n) < 0.5).astype(float)
    fit = reg.fit_glm_binary(DesignMatrix.build([("x", x)]), y, Link.probit)
    # Fisher information per subject at beta = 0 is phi(0)^2 / 0.25
    se = 1.0 / np.sqrt(n * numerics.std_normal_pdf(0.0) ** 2 / 0.25)
    assert fit.converged
    assert np.all(np.abs(fit.coefficients) < 4 * se)


def test_logit_matches_newton_oracle():
    x = np.array([-2.0, -1.0, 0.0, 0.0, 1.0, 2.0])
    y = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 1.0])
    X = DesignMatrix.build([("x", x)])
    fit = reg.fit_glm_binary(X, y, Link.logit)
    assert fit.coefficients == pytest.approx(_newton_logit_oracle(X.values, y), abs=1e-12)


@pytest.mark.parametrize("link", [Link.probit, Link.logit])
def test_score_vanishes_at_convergence(link):
    rng = np.random.default_rng(100 if link == Link.probit else 200)
    fitted = 0
    for _ in range(50):
        x, y = _probit_data(rng, 60)
        X = DesignMatrix.build([("x", x)])
        try:
            fit = reg.fit_glm_binary(X, y, link)
        except (SeparationError, OneClassOnlyError):
            continue
        fitted += 1
        assert np.linalg.norm(reg.score_binary(X, y, fit.coefficients, link)) < 1e-6
    assert fitted >= 45


@pytest.mark.parametrize("link", [Link.probit, Link.logit])
def test_score_matches_finite_differences(link):
    rng = np.random.default_rng(9)
    x, y = _probit_data(rng, 80)
    X = DesignMatrix.build([("x", x)])
    beta = np.array([0.2, -0.4])
    h = 1e-6
    fd = np.empty(2)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd[j] = (reg.log_likelihood_binary(X, y, beta + e, link)
                 - reg.log_likelihood_binary(X, y, beta - e, link)) / (2 * h)
    score = reg.score_binary(X, y, beta, link)
    assert np.allclose(score, fd, rtol=1e-4, atol=1e-6)


def test_probit_swapped_response_negates_coefficients():
    rng = np.random.default_rng(11)
    x, y = _probit_data(rng, 80)
    X = DesignMatrix.build([("x", x)])
    fit = reg.fit_glm_binary(X, y, Link.probit)
    swapped = reg.fit_glm_binary(X, 1.0 - y, Link.probit)
    assert np.allclose(swapped.coefficients, -fit.coefficients, atol=1e-8)


def test_logit_swapped_response_negates_coefficients():
    rng = np.random.default_rng(14)
    x, y = _probit_data(rng, 80)
    X = DesignMatrix.build([("x", x)])
    fit = reg.fit_glm_binary(X, y, Link.logit)
    swapped = reg.fit_glm_binary(X, 1.0 - y, Link.logit)
    assert np.allclose(swapped.coefficients, -fit.coefficients, atol=1e-8)


def test_probit_negated_covariate_negates_slope():
    rng = np.random.default_rng(12)
    x, y = _probit_data(rng, 80)
    fit = reg.fit_glm_binary(DesignMatrix.build([("x", x)]), y, Link.probit)
    neg = reg.fit_glm_binary(DesignMatrix.build([("x", -x)]), y, Link.probit)
    assert neg.coefficients[0] == pytest.approx(fit.coefficients[0], abs=1e-8)
    assert neg.coefficients[1] == pytest.approx(-fit.coefficients[1], abs=1e-8)


def test_glm_refit_is_bit_identical():
    rng = np.random.default_rng(13)
    x, y = _probit_data(rng, 40)
    X = DesignMatrix.build([("x", x)])
    a = reg.fit_glm_binary(X, y, Link.probit)
    b = reg.fit_glm_binary(X, y, Link.probit)
    assert np.array_equal(a.coefficients, b.coefficients)
    assert a.iterations == b.iterations


def _deviance_never_improves(monkeypatch):
    real = reg.log_likelihood_binary
    calls = []

    def fake(X, y, beta, link):
        calls.append(1)
        return real(X, y, beta, link) if len(calls) == 1 else -np.inf

    monkeypatch.setattr(reg, "log_likelihood_binary", fake)


def test_exhausted_step_halving_is_not_reported_as_converged(monkeypatch):
    rng = np.random.default_rng(15)
    x, y = _probit_data(rng, 60)
    X = DesignMatrix.build([("x", x)])
    _deviance_never_improves(monkeypatch)
    with pytest.raises(SeparationError, match="step halving"):
        reg.fit_glm_binary(X, y, Link.probit)


def test_exhausted_step_halving_at_a_stationary_point_keeps_beta(monkeypatch):
    # starting values already solve the score equations
    x = np.array([-1.0, 1.0, -1.0, 1.0])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    X = DesignMatrix.build([("x", x)])
    _deviance_never_improves(monkeypatch)
    fit = reg.fit_glm_binary(X, y, Link.probit)
    assert fit.converged
    assert fit.iterations == 1
    assert fit.coefficients == pytest.approx([0.0, 0.0], abs=1e-12)
