import numpy as np
import pandas as pd
import pytest
from scipy.optimize import minimize_scalar

from conftest import survival_sample
from simreg.exceptions import DataError, NumericalError, SeparationError
from simreg.null_ph import fit_cox_null, influence_components_ph, martingale_residuals
from simreg.schemas import SurvivalSample
from simreg.simulator import gen_censoring, gen_survival_ph


def _partial_loglik(gamma, sample):
    """Breslow log partial likelihood for one covariate and distinct times, in gamma = -beta."""
    x = sample.covariates[:, 0]
    eta = -gamma * x
    total = 0.0
    for i in np.flatnonzero(sample.event):
        at_risk = sample.time >= sample.time[i]
        total += eta[i] - np.log(np.exp(eta[at_risk]).sum())
    return total


def test_nelson_aalen_without_covariates():
    sample = SurvivalSample(sample_ids=["a", "b", "c"], time=[1.0, 2.0, 3.0], event=[1, 1, 1])
    fit = fit_cox_null(sample)
    np.testing.assert_allclose(fit.jumps, [1 / 3, 1 / 2, 1.0])
    np.testing.assert_allclose(fit.residuals, [2 / 3, 1 / 6, -5 / 6])
    assert fit.gamma_hat.shape == (0,)
    assert fit.iterations == 0


def test_all_censored_is_unidentifiable():
    sample = SurvivalSample(sample_ids=["a", "b"], time=[1.0, 2.0], event=[0, 0])
    with pytest.raises(DataError, match="no events"):
        fit_cox_null(sample)


def test_matches_brute_force_maximiser(small_sample):
    grid = np.arange(-5.0, 5.0, 0.001)
    values = [_partial_loglik(g, small_sample) for g in grid]
    best = grid[int(np.argmax(values))]
    polished = minimize_scalar(
        lambda g: -_partial_loglik(g, small_sample),
        bounds=(best - 0.01, best + 0.01),
        method="bounded",
        options={"xatol": 1e-12},
    )
    fit = fit_cox_null(small_sample)
    assert fit.gamma_hat[0] == pytest.approx(polished.x, abs=1e-6)
    assert fit.log_likelihood == pytest.approx(-polished.fun, abs=1e-8)


def test_matches_lifelines(ph_sample):
    lifelines = pytest.importorskip("lifelines")
    df = pd.DataFrame(ph_sample.covariates, columns=ph_sample.covariate_names)
    df["T"] = ph_sample.time
    df["E"] = ph_sample.event
    cph = lifelines.CoxPHFitter().fit(df, duration_col="T", event_col="E")
    np.testing.assert_allclose(-cph.params_[ph_sample.covariate_names].to_numpy(), fit_cox_null(ph_sample).gamma_hat, atol=1e-4)


def test_residual_properties(ph_sample):
    fit = fit_cox_null(ph_sample)
    assert fit.score_norm <= 1e-8
    assert abs(fit.residuals.sum()) <= 1e-8
    assert np.all(fit.residuals <= 1.0)
    np.testing.assert_allclose(ph_sample.covariates.T @ fit.residuals, 0.0, atol=1e-7)
    assert np.all(np.diff(fit.cumulative) > 0)
    np.testing.assert_allclose(martingale_residuals(fit, ph_sample), fit.residuals, atol=1e-10)


def test_censored_before_first_event_has_zero_residual(small_sample):
    fit = fit_cox_null(small_sample)
    assert fit.residuals[-1] == 0.0
    assert fit.cumulative_at([0.5])[0] == 0.0


def test_covariate_location_and_scale(ph_sample):
    fit = fit_cox_null(ph_sample)
    shifted = fit_cox_null(ph_sample.with_covariates(ph_sample.covariates + np.array([10.0, -3.0]), ph_sample.covariate_names))
    np.testing.assert_allclose(shifted.residuals, fit.residuals, atol=1e-10)
    np.testing.assert_allclose(shifted.gamma_hat, fit.gamma_hat, atol=1e-10)
    scaled = fit_cox_null(ph_sample.with_covariates(ph_sample.covariates * np.array([2.0, 1.0]), ph_sample.covariate_names))
    assert scaled.gamma_hat[0] == pytest.approx(fit.gamma_hat[0] / 2.0, abs=1e-8)


def test_sign_convention():
    # hazard exp(0.8 x): gamma is the negative log hazard ratio
    sample = survival_sample(2000, seed=3, coefficients=(0.8, 0.0))
    fit = fit_cox_null(sample)
    assert fit.gamma_hat[0] == pytest.approx(-0.8, abs=0.1)


def test_separated_covariate_raises():
    time = np.arange(1.0, 11.0)
    x = np.array([1.0] * 5 + [0.0] * 5)
    sample = SurvivalSample(sample_ids=[str(i) for i in range(10)], time=time, event=np.ones(10, dtype=int), covariates=x[:, None])
    with pytest.raises(SeparationError):
        fit_cox_null(sample)


def test_heavy_tailed_covariate_is_not_separation():
    # an overshooting first Newton step must not be mistaken for divergence
    rng = np.random.default_rng(11)
    n = 500
    x = np.exp(2.0 * rng.standard_normal(n))
    T = gen_survival_ph(0.05 * x, seed=12)
    C = gen_censoring(n, "15%", seed=13)
    sample = SurvivalSample(
        sample_ids=[str(i) for i in range(n)],
        time=np.minimum(T, C),
        event=(T <= C).astype(int),
        covariates=x[:, None],
    )
    fit = fit_cox_null(sample)
    best = minimize_scalar(
        lambda g: -_partial_loglik(g, sample), bounds=(-0.3, 0.3), method="bounded", options={"xatol": 1e-10}
    )
    assert fit.gamma_hat[0] == pytest.approx(best.x, abs=1e-6)


def test_constant_or_collinear_covariates_are_rejected():
    base = survival_sample(100, seed=20)
    age = base.covariates[:, 0]
    with pytest.raises(DataError, match="sex"):
        fit_cox_null(base.with_covariates(np.column_stack((age, np.ones(100))), ["age_z", "sex"]))
    with pytest.raises(DataError, match="collinear"):
        fit_cox_null(base.with_covariates(np.column_stack((age, 2.0 * age - 1.0)), ["age_z", "age_rescaled"]))


def test_influence_with_singular_information_raises(ph_sample):
    fit = fit_cox_null(ph_sample)
    broken = fit.model_copy(update={"information": np.zeros((2, 2))})
    root = np.random.default_rng(21).standard_normal((ph_sample.n, 2))
    with pytest.raises(NumericalError):
        influence_components_ph(broken, ph_sample, root)


def test_influence_without_covariates_matches_direct_sums():
    rng = np.random.default_rng(4)
    n = 15
    sample = SurvivalSample(
        sample_ids=[str(i) for i in range(n)],
        time=rng.exponential(size=n),
        event=(rng.random(n) < 0.7).astype(int),
    )
    root = rng.standard_normal((n, 3))
    fit = fit_cox_null(sample)
    psi = influence_components_ph(fit, sample, root)

    times = fit.event_times
    expected = np.zeros((n, 3))
    for i in range(n):
        expected[i] = fit.residuals[i] * root[i]
        for k, t in enumerate(times):
            at_risk = sample.time >= t
            abar = root[at_risk].mean(axis=0)
            if sample.event[i] and sample.time[i] == t:
                expected[i] -= abar
            if sample.time[i] >= t:
                expected[i] += abar * fit.jumps[k]
    np.testing.assert_allclose(psi, expected, atol=1e-12)


def test_influence_sums_to_residual_term(ph_sample):
    rng = np.random.default_rng(5)
    root = rng.standard_normal((ph_sample.n, 4))
    fit = fit_cox_null(ph_sample)
    psi = influence_components_ph(fit, ph_sample, root)
    assert psi.shape == (ph_sample.n, 4)
    np.testing.assert_allclose(psi.sum(axis=0), fit.residuals @ root, atol=1e-6)


def test_influence_is_location_invariant(ph_sample):
    rng = np.random.default_rng(6)
    root = rng.standard_normal((ph_sample.n, 2))
    fit = fit_cox_null(ph_sample)
    moved = ph_sample.with_covariates(ph_sample.covariates + 5.0, ph_sample.covariate_names)
    np.testing.assert_allclose(
        influence_components_ph(fit_cox_null(moved), moved, root),
        influence_components_ph(fit, ph_sample, root),
        atol=1e-8,
    )


def test_influence_rejects_wrong_root(ph_sample):
    fit = fit_cox_null(ph_sample)
    with pytest.raises(DataError):
        influence_components_ph(fit, ph_sample, np.ones((3, 2)))


@pytest.mark.slow
def test_influence_covariance_matches_replicates():
    """Empirical variance of n^{-1/2} sum r_i s_i across replicates against the mean plug-in estimate."""
    n, reps = 400, 300
    s = np.random.default_rng(7).standard_normal(n)
    stats, plugin = [], []
    for rep in range(reps):
        sample = survival_sample(n, seed=1000 + 3 * rep)
        fit = fit_cox_null(sample)
        root = s[:, None]
        stats.append(fit.residuals @ s / np.sqrt(n))
        psi = influence_components_ph(fit, sample, root)
        plugin.append(float(psi[:, 0] @ psi[:, 0]) / n)
    assert np.var(stats) == pytest.approx(np.mean(plugin), rel=0.2)
