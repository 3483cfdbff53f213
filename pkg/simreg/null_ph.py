"""Null Cox proportional-hazards fit.

The transformation-model parameterisation uses lambda{H(t) - gamma'X}, so the
stored gamma_hat is the negative of the usual log hazard ratio beta. The
solver works with beta and centered covariates; everything exposed uses gamma.
"""

import logging
from typing import Tuple

import numpy as np

from .config import (
    MAX_STEP_HALVINGS,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    SEPARATION_BOUND,
    SEPARATION_INFO_RATIO,
    STEP_TOL,
)
from .exceptions import ConvergenceError, DataError, NumericalError, SeparationError
from .risksets import RiskSets
from .schemas import NullFitPH, SurvivalSample

logger = logging.getLogger(__name__)


class _PartialLikelihood:
    """Breslow log partial likelihood with its score and information at beta."""

    def __init__(self, risk: RiskSets, X: np.ndarray):
        self.risk = risk
        self.X = X
        self.event_sum = X[risk.event].sum(axis=0)

    def evaluate(self, beta: np.ndarray):
        risk, X = self.risk, self.X
        eta = X @ beta
        w = np.exp(eta)
        s0 = risk.risk_sum(w)
        s1 = risk.risk_sum(w[:, None] * X)
        s2 = risk.risk_sum(w[:, None, None] * X[:, :, None] * X[:, None, :])
        d = risk.deaths
        xbar = s1 / s0[:, None]
        loglik = float(eta[risk.event].sum() - np.sum(d * np.log(s0)))
        score = self.event_sum - np.sum(d[:, None] * xbar, axis=0)
        information = np.einsum("k,kab->ab", d, s2 / s0[:, None, None] - xbar[:, :, None] * xbar[:, None, :])
        return loglik, score, information, s0, xbar


def centered_covariates(sample: SurvivalSample) -> Tuple[np.ndarray, np.ndarray]:
    """Column means and centered covariates; rejects constant or collinear columns."""
    center = sample.covariates.mean(axis=0)
    Xc = sample.covariates - center
    p = Xc.shape[1]
    if p:
        constant = [name for name, spread in zip(sample.covariate_names, np.ptp(Xc, axis=0)) if spread == 0.0]
        if constant:
            raise DataError(f"covariate(s) constant across subjects: {', '.join(constant)}")
        if np.linalg.matrix_rank(Xc) < p:
            raise DataError("covariates are collinear; drop redundant columns")
    return center, Xc


def _separated(beta: np.ndarray, spread: np.ndarray, information: np.ndarray, initial: np.ndarray) -> bool:
    """Monotone likelihood: a coefficient ran off to a huge hazard ratio while its information vanished."""
    diverged = np.abs(beta) * spread > SEPARATION_BOUND
    collapsed = np.diag(information) <= SEPARATION_INFO_RATIO * np.diag(initial)
    return bool(np.any(diverged & collapsed))


def fit_cox_null(
    sample: SurvivalSample,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> NullFitPH:
    """Maximise the Breslow partial likelihood by Newton-Raphson with step halving.

    Separation is judged once the iteration stops, never on intermediate iterates.
    """
    if sample.n_events == 0:
        raise DataError("null model unidentifiable: no events")

    risk = RiskSets(sample.time, sample.event)
    center, Xc = centered_covariates(sample)
    p = Xc.shape[1]
    pl = _PartialLikelihood(risk, Xc)
    spread = np.ptp(Xc, axis=0) if p else np.zeros(0)

    beta = np.zeros(p)
    loglik, score, information, s0, xbar = pl.evaluate(beta)
    initial_information = information
    iterations = 0
    failure = None
    while p and np.max(np.abs(score)) > tol:
        if iterations >= max_iter:
            failure = "Cox partial likelihood did not converge"
            break
        try:
            step = np.linalg.solve(information, score)
        except np.linalg.LinAlgError:
            failure = "Cox information matrix became singular"
            break
        if np.max(np.abs(step) * spread) <= STEP_TOL:
            # rounding floor of the score reached
            break

        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for _ in range(MAX_STEP_HALVINGS):
                candidate = beta + step
                new = pl.evaluate(candidate)
                if np.isfinite(new[0]) and new[0] >= loglik - 1e-12 * abs(loglik):
                    break
                step = step / 2.0
            else:
                failure = "step halving could not increase the partial likelihood"
                break

        beta = candidate
        loglik, score, information, s0, xbar = new
        iterations += 1
        logger.debug("Cox iteration %d: loglik=%.10g score=%.3e", iterations, loglik, np.max(np.abs(score)))

    if p and _separated(beta, spread, information, initial_information):
        raise SeparationError(
            f"Cox fit diverged after {iterations} iteration(s): monotone likelihood (separation) "
            f"with a log hazard ratio above {SEPARATION_BOUND:g} across a covariate's range"
        )
    if failure:
        raise ConvergenceError(failure, iterations, float(np.max(np.abs(score))))

    # Breslow jumps for the uncentered covariates
    jumps = risk.deaths / s0 * np.exp(-center @ beta)
    gamma_hat = -beta
    fit_residuals = sample.event - risk.accumulate(risk.deaths / s0) * np.exp(Xc @ beta)

    logger.info("Cox null fit: %d events, %d covariate(s), %d iteration(s)", sample.n_events, p, iterations)
    return NullFitPH(
        gamma_hat=gamma_hat,
        event_times=risk.event_times,
        jumps=jumps,
        residuals=fit_residuals,
        n_events=sample.n_events,
        iterations=iterations,
        score_norm=float(np.max(np.abs(score))) if p else 0.0,
        information=information,
        risk_means=xbar + center[None, :],
        log_likelihood=loglik,
    )


def martingale_residuals(fit: NullFitPH, sample: SurvivalSample) -> np.ndarray:
    """r_i = delta_i - Gamma(T_i) exp(-gamma'X_i)."""
    return sample.event - fit.cumulative_at(sample.time) * np.exp(-sample.covariates @ fit.gamma_hat)


def influence_components_ph(fit: NullFitPH, sample: SurvivalSample, root: np.ndarray) -> np.ndarray:
    """Per-subject influence psi_i of n^{-1/2} sum_i r_i s_i, one row per subject.

    ``root`` is any L with L L^T = S (rows s_i). The three terms are the
    plug-in residual term, the correction for estimating the Breslow
    baseline, and the correction for estimating gamma.
    """
    root = np.asarray(root, dtype=float)
    if root.shape[0] != sample.n:
        raise DataError(f"kernel root has {root.shape[0]} rows for {sample.n} subjects")

    risk = RiskSets(sample.time, sample.event)
    beta = -fit.gamma_hat
    Xc = sample.covariates - sample.covariates.mean(axis=0)
    w = np.exp(Xc @ beta)
    s0 = risk.risk_sum(w)
    hazard = risk.deaths / s0
    r = risk.delta - risk.accumulate(hazard) * w

    # baseline correction: integral of the risk-set mean of s against dM_i
    abar = risk.risk_sum(w[:, None] * root) / s0[:, None]
    psi = r[:, None] * root - (risk.at_event(abar) - w[:, None] * risk.accumulate(abar * hazard[:, None]))

    if Xc.shape[1]:
        xbar = risk.risk_sum(w[:, None] * Xc) / s0[:, None]
        score_terms = risk.at_event(xbar)
        score_terms = (risk.delta[:, None] * Xc - score_terms) - w[:, None] * (
            Xc * risk.accumulate(hazard)[:, None] - risk.accumulate(xbar * hazard[:, None])
        )
        cross = risk.risk_sum(w[:, None, None] * root[:, :, None] * Xc[:, None, :]) / s0[:, None, None]
        derivative = np.einsum("k,kab->ab", risk.deaths, cross - abar[:, :, None] * xbar[:, None, :])
        try:
            psi -= score_terms @ np.linalg.solve(fit.information, derivative.T)
        except np.linalg.LinAlgError:
            raise NumericalError("Cox information matrix is singular; covariate effects are not identifiable")
    return psi
