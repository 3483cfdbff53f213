import numpy as np
import pytest
from scipy import integrate
from scipy.optimize import minimize
from scipy.special import expit

from conftest import survival_sample
from simreg.exceptions import DataError
from simreg.null_ph import fit_cox_null, influence_components_ph
from simreg.null_po import (
    PROPORTIONAL_HAZARDS,
    PROPORTIONAL_ODDS,
    TransformationFamily,
    fit_po_null,
    fit_transformation_null,
    get_family,
    influence_components_po,
    po_residuals,
    residual_weight,
)
from simreg.schemas import SurvivalSample


def test_families():
    u = np.linspace(-4.0, 4.0, 9)
    np.testing.assert_allclose(PROPORTIONAL_ODDS.cumulative(u), np.log1p(np.exp(u)))
    np.testing.assert_allclose(PROPORTIONAL_ODDS.hazard(u), np.exp(u) / (1 + np.exp(u)))
    np.testing.assert_allclose(PROPORTIONAL_ODDS.ratio(u), 1 / (1 + np.exp(u)))
    np.testing.assert_allclose(PROPORTIONAL_HAZARDS.ratio(u), 1.0)
    assert get_family("po") is PROPORTIONAL_ODDS
    with pytest.raises(DataError):
        get_family("probit")
    with pytest.raises(TypeError):
        TransformationFamily()


def test_ph_family_reproduces_cox(ph_sample):
    cox = fit_cox_null(ph_sample)
    generic = fit_transformation_null(ph_sample, PROPORTIONAL_HAZARDS)
    assert generic.model == "ph"
    np.testing.assert_allclose(generic.gamma_hat, cox.gamma_hat, atol=1e-5)
    np.testing.assert_allclose(generic.jumps, cox.jumps, rtol=1e-5)
    np.testing.assert_allclose(generic.residuals, cox.residuals, atol=1e-5)


def test_po_fit_stationarity(po_sample):
    fit = fit_po_null(po_sample)
    assert fit.model == "po"
    assert fit.converged
    assert fit.score_norm <= 1e-5
    assert fit.baseline_residual <= 1e-6
    assert abs(fit.residuals.sum()) <= 1e-6
    assert np.all(fit.jumps > 0)
    assert np.all(np.diff(fit.H_hat) > 0)
    np.testing.assert_allclose(po_residuals(fit, po_sample), fit.residuals, atol=1e-10)


def test_po_recovers_direction():
    # log-odds of failure increase with x1, so gamma_1 is negative
    sample = survival_sample(2000, seed=11, coefficients=(1.0, 0.0), model="po")
    fit = fit_po_null(sample)
    assert fit.gamma_hat[0] == pytest.approx(-1.0, abs=0.15)
    assert abs(fit.gamma_hat[1]) < 0.2


def test_residuals_against_quadrature(po_sample):
    fit = fit_po_null(po_sample)
    baseline = fit.cumulative_at(po_sample.time)
    inside = np.flatnonzero(baseline > 0)[:10]
    e = np.log(baseline[inside]) - po_sample.covariates[inside] @ fit.gamma_hat
    slope = lambda u: expit(u) * expit(-u)
    for j, i in enumerate(inside):
        integral, _ = integrate.quad(slope, -np.inf, e[j], epsabs=1e-13, epsrel=1e-12)
        expected = po_sample.event[i] * expit(-e[j]) - integral
        assert fit.residuals[i] == pytest.approx(expected, abs=1e-8)


def test_censored_before_first_event(small_sample):
    fit = fit_po_null(small_sample)
    assert fit.residuals[-1] == 0.0
    assert po_residuals(fit, small_sample)[-1] == 0.0


def test_residual_weight_bounds(po_sample):
    fit = fit_po_null(po_sample)
    t = np.sort(po_sample.time)[::20]
    omega = residual_weight(fit, po_sample.covariates, t)
    assert omega.shape == (po_sample.n, t.shape[0])
    assert np.all((omega > 0) & (omega <= 1))
    assert np.all(np.diff(omega, axis=1) <= 0)


def test_location_shift_moves_baseline(po_sample):
    fit = fit_po_null(po_sample)
    c = np.array([2.0, -1.0])
    moved = po_sample.with_covariates(po_sample.covariates + c, po_sample.covariate_names)
    shifted = fit_po_null(moved)
    np.testing.assert_allclose(shifted.residuals, fit.residuals, atol=1e-6)
    np.testing.assert_allclose(shifted.gamma_hat, fit.gamma_hat, atol=1e-6)
    np.testing.assert_allclose(shifted.cumulative, fit.cumulative * np.exp(fit.gamma_hat @ c), rtol=1e-5)


def test_covariate_free_fit_matches_direct_maximisation():
    rng = np.random.default_rng(21)
    n = 10
    time = rng.exponential(size=n)
    event = np.array([1, 1, 0, 1, 1, 0, 1, 1, 1, 0])
    sample = SurvivalSample(sample_ids=[str(i) for i in range(n)], time=time, event=event)
    fit = fit_po_null(sample)

    event_times = np.unique(time[event == 1])
    k_of = np.searchsorted(event_times, time, side="right")

    def negative_loglik(theta):
        L = np.concatenate(([0.0], np.cumsum(np.exp(theta))))[k_of]
        return -(np.sum(theta) - np.sum((1 + event) * np.log1p(L)))

    def gradient(theta):
        g = np.exp(theta)
        L = np.concatenate(([0.0], np.cumsum(g)))[k_of]
        weight = (1 + event) / (1 + L)
        tail = np.array([weight[k_of > k].sum() for k in range(event_times.shape[0])])
        return -(1.0 - g * tail)

    start = np.zeros(event_times.shape[0])
    oracle = minimize(negative_loglik, start, jac=gradient, method="BFGS", options={"gtol": 1e-11, "maxiter": 10_000})
    survival = 1.0 / (1.0 + np.cumsum(np.exp(oracle.x)))
    np.testing.assert_allclose(1.0 / (1.0 + fit.cumulative), survival, atol=1e-5)
    assert np.all(np.diff(1.0 / (1.0 + fit.cumulative)) < 0)


def test_generic_influence_reduces_to_closed_form(ph_sample):
    rng = np.random.default_rng(22)
    root = rng.standard_normal((ph_sample.n, 3))
    cox = fit_cox_null(ph_sample)
    generic = fit_transformation_null(ph_sample, PROPORTIONAL_HAZARDS)
    np.testing.assert_allclose(
        influence_components_po(generic, ph_sample, root),
        influence_components_ph(cox, ph_sample, root),
        atol=1e-5,
    )


def test_po_influence_shape_and_sum(po_sample):
    rng = np.random.default_rng(23)
    root = rng.standard_normal((po_sample.n, 2))
    fit = fit_po_null(po_sample)
    psi = influence_components_po(fit, po_sample, root)
    assert psi.shape == (po_sample.n, 2)
    assert np.all(np.isfinite(psi))
    # the likelihood scores sum to zero at the fit, leaving only the residual term
    np.testing.assert_allclose(psi.sum(axis=0), fit.residuals @ root, atol=1e-3)


def test_influence_rejects_foreign_fit(po_sample, ph_sample):
    fit = fit_po_null(po_sample)
    with pytest.raises(DataError):
        influence_components_po(fit, ph_sample, np.ones((ph_sample.n, 1)))


def test_constant_covariate_is_rejected(po_sample):
    flat = po_sample.with_covariates(
        np.column_stack((po_sample.covariates[:, 0], np.ones(po_sample.n))), ["age_z", "sex"]
    )
    with pytest.raises(DataError, match="sex"):
        fit_po_null(flat)


@pytest.mark.slow
def test_po_estimator_is_consistent():
    estimates = []
    for rep in range(200):
        sample = survival_sample(1000, seed=5000 + 3 * rep, coefficients=(-0.5, 0.0), model="po")
        estimates.append(fit_po_null(sample).gamma_hat[0])
    estimates = np.asarray(estimates)
    se = estimates.std(ddof=1) / np.sqrt(estimates.shape[0])
    assert abs(estimates.mean() - 0.5) <= 3 * se
