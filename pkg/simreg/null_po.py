"""Null semiparametric transformation model fits.

The model states that Lambda{H(t) - gamma'X} is the cumulative hazard of a
subject with covariates X, with Lambda the integrated error hazard. The
baseline Gamma = exp(H) is a step function with jumps g_k at the distinct
event times. Both gamma and the jumps are estimated by joint Newton-Raphson on
the discrete-baseline likelihood, whose stationarity conditions are

    sum_i X_i r_i = 0       and       g_k * sum_{i in R_k} (delta_i - r_i) / Gamma(T_i) = d_k,

with r_i = delta_i * (lambda_dot / lambda)(e_i) - lambda(e_i) and
e_i = log Gamma(T_i) - gamma'X_i. Summing the second equation over k gives
sum_i r_i = 0 exactly at the solution.
"""

import logging
from abc import ABC, abstractmethod
from typing import Dict

import numpy as np
from scipy.special import expit

from .config import MAX_STEP_HALVINGS, PO_MAX_OUTER, PO_TOL
from .exceptions import ConvergenceError, DataError, NumericalError
from .null_ph import centered_covariates
from .risksets import RiskSets
from .schemas import NullFitPO, SurvivalSample

logger = logging.getLogger(__name__)


class TransformationFamily(ABC):
    """Error distribution of a transformation model, as functions of u = H(t) - gamma'X."""

    name = ""

    @abstractmethod
    def cumulative(self, u):
        ...

    @abstractmethod
    def hazard(self, u):
        ...

    @abstractmethod
    def log_hazard(self, u):
        ...

    @abstractmethod
    def hazard_slope(self, u):
        """lambda_dot(u)."""

    @abstractmethod
    def ratio(self, u):
        """lambda_dot / lambda, the residual weight omega."""

    @abstractmethod
    def ratio_slope(self, u):
        """(lambda_ddot * lambda - lambda_dot^2) / lambda^2."""

    @abstractmethod
    def baseline_from_hazard(self, cumulative_hazard):
        """Gamma for which Lambda(log Gamma) equals the given cumulative hazard."""


class ProportionalHazards(TransformationFamily):
    name = "ph"

    def cumulative(self, u):
        return np.exp(u)

    def hazard(self, u):
        return np.exp(u)

    def log_hazard(self, u):
        return np.asarray(u, dtype=float)

    def hazard_slope(self, u):
        return np.exp(u)

    def ratio(self, u):
        return np.ones_like(np.asarray(u, dtype=float))

    def ratio_slope(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def baseline_from_hazard(self, cumulative_hazard):
        return np.asarray(cumulative_hazard, dtype=float)


class ProportionalOdds(TransformationFamily):
    name = "po"

    def cumulative(self, u):
        return np.logaddexp(0.0, u)

    def hazard(self, u):
        return expit(u)

    def log_hazard(self, u):
        return -np.logaddexp(0.0, -np.asarray(u, dtype=float))

    def hazard_slope(self, u):
        return expit(u) * expit(-np.asarray(u, dtype=float))

    def ratio(self, u):
        return expit(-np.asarray(u, dtype=float))

    def ratio_slope(self, u):
        return -self.hazard_slope(u)

    def baseline_from_hazard(self, cumulative_hazard):
        return np.expm1(cumulative_hazard)


PROPORTIONAL_HAZARDS = ProportionalHazards()
PROPORTIONAL_ODDS = ProportionalOdds()
FAMILIES: Dict[str, TransformationFamily] = {f.name: f for f in (PROPORTIONAL_HAZARDS, PROPORTIONAL_ODDS)}


def get_family(name: str) -> TransformationFamily:
    if name not in FAMILIES:
        raise DataError(f"unknown transformation family '{name}'")
    return FAMILIES[name]


class _ModelState:
    """Residual quantities at (beta, jumps) with beta = -gamma."""

    def __init__(self, family: TransformationFamily, risk: RiskSets, X: np.ndarray, beta: np.ndarray, jumps: np.ndarray):
        self.family, self.risk, self.X = family, risk, X
        self.beta, self.jumps = beta, jumps
        self.baseline = risk.accumulate(jumps)
        self.inside = self.baseline > 0
        with np.errstate(divide="ignore"):
            self.e = np.log(self.baseline) + X @ beta
        delta = risk.delta
        self.r = np.where(self.inside, delta * family.ratio(self.e) - family.hazard(self.e), 0.0)
        self.q = np.where(self.inside, delta * family.ratio_slope(self.e) - family.hazard_slope(self.e), 0.0)
        safe = np.where(self.inside, self.baseline, 1.0)
        self.inv_baseline = np.where(self.inside, 1.0 / safe, 0.0)

    def loglik(self) -> float:
        ev = self.risk.event
        family = self.family
        value = np.sum(family.log_hazard(self.e[ev]) + np.log(self.jumps[self.risk.event_index[ev]]) - np.log(self.baseline[ev]))
        return float(value - np.sum(family.cumulative(self.e[self.inside])))

    def score_beta(self) -> np.ndarray:
        return self.X.T @ self.r

    def baseline_denominator(self) -> np.ndarray:
        """D_k = sum over R_k of (delta_i - r_i) / Gamma(T_i)."""
        return self.risk.risk_sum((self.risk.delta - self.r) * self.inv_baseline)

    def score_jumps(self) -> np.ndarray:
        """Derivative of the log likelihood in each jump g_k."""
        return self.risk.deaths / self.jumps - self.baseline_denominator()

    def information(self) -> np.ndarray:
        """Observed information in (beta, g), negative Hessian of the log likelihood."""
        risk, X, q = self.risk, self.X, self.q
        p, K = X.shape[1], risk.n_times
        curvature = (q - (self.r - risk.delta)) * self.inv_baseline ** 2
        tail = risk.risk_sum(curvature)
        idx = np.arange(K)
        J = np.zeros((p + K, p + K))
        J[:p, :p] = -(X * q[:, None]).T @ X
        J[:p, p:] = -risk.risk_sum(X * (q * self.inv_baseline)[:, None]).T
        J[p:, :p] = J[:p, p:].T
        J[p:, p:] = -tail[np.maximum.outer(idx, idx)]
        J[p + idx, p + idx] += risk.deaths / self.jumps ** 2
        return J


def _newton_direction(gradient: np.ndarray, information: np.ndarray) -> np.ndarray:
    """Solve (J + mu I) step = gradient, raising mu until J + mu I is positive definite."""
    scale = max(float(np.max(np.abs(np.diag(information)))), 1.0)
    mu = 0.0
    for _ in range(20):
        try:
            chol = np.linalg.cholesky(information + mu * np.eye(information.shape[0]))
        except np.linalg.LinAlgError:
            mu = max(mu * 10.0, 1e-10 * scale)
            continue
        return np.linalg.solve(chol.T, np.linalg.solve(chol, gradient))
    raise NumericalError("transformation-model information could not be regularised")


def fit_transformation_null(
    sample: SurvivalSample,
    family: TransformationFamily,
    tol: float = PO_TOL,
    max_iter: int = PO_MAX_OUTER,
) -> NullFitPO:
    """Joint Newton fit of gamma and log baseline jumps, started at gamma = 0 and the
    covariate-free baseline implied by the Nelson-Aalen estimator."""
    if sample.n_events == 0:
        raise DataError("null model unidentifiable: no events")

    risk = RiskSets(sample.time, sample.event)
    center, X = centered_covariates(sample)
    p = X.shape[1]

    at_risk = risk.risk_sum(np.ones(risk.n))
    start = family.baseline_from_hazard(np.cumsum(risk.deaths / at_risk))
    log_jumps = np.log(np.diff(start, prepend=0.0))
    beta = np.zeros(p)

    def state_at(b, lg):
        return _ModelState(family, risk, X, b, np.exp(lg))

    state = state_at(beta, log_jumps)
    loglik = state.loglik()
    iterations = 0
    while True:
        grad_beta = state.score_beta()
        grad_theta = state.jumps * state.score_jumps()
        score_norm = float(np.max(np.abs(grad_beta))) if p else 0.0
        baseline_residual = float(np.sum(np.abs(grad_theta)))
        if score_norm <= tol and baseline_residual <= tol:
            break
        if iterations >= max_iter:
            raise ConvergenceError(
                f"{family.name.upper()} transformation model did not converge",
                iterations,
                max(score_norm, baseline_residual),
            )

        # information in (beta, theta = log g)
        J = state.information()
        g = state.jumps
        J[:p, p:] *= g[None, :]
        J[p:, :p] *= g[:, None]
        J[p:, p:] *= np.outer(g, g)
        J[p:, p:] -= np.diag(grad_theta)
        step = _newton_direction(np.concatenate((grad_beta, grad_theta)), J)

        for _ in range(MAX_STEP_HALVINGS):
            candidate = state_at(beta + step[:p], log_jumps + step[p:])
            new_loglik = candidate.loglik()
            if np.isfinite(new_loglik) and new_loglik >= loglik - 1e-12 * abs(loglik):
                break
            step = step / 2.0
        else:
            raise ConvergenceError(
                f"{family.name.upper()} line search failed", iterations, max(score_norm, baseline_residual)
            )
        beta, log_jumps = beta + step[:p], log_jumps + step[p:]
        state, loglik = candidate, new_loglik
        iterations += 1
        logger.debug(
            "%s iteration %d: loglik=%.10g score=%.3e baseline=%.3e",
            family.name, iterations, loglik, score_norm, baseline_residual,
        )

    # rescale the baseline from centered to raw covariates
    jumps = state.jumps * np.exp(-center @ beta)
    logger.info(
        "%s null fit: %d events, %d covariate(s), %d iteration(s)",
        family.name.upper(), sample.n_events, p, iterations,
    )
    return NullFitPO(
        model=family.name,
        family=family.name,
        gamma_hat=-beta,
        event_times=risk.event_times,
        jumps=jumps,
        residuals=state.r,
        n_events=sample.n_events,
        iterations=iterations,
        score_norm=float(np.max(np.abs(sample.covariates.T @ state.r))) if p else 0.0,
        baseline_residual=baseline_residual,
        converged=True,
    )


def fit_po_null(sample: SurvivalSample, tol: float = PO_TOL, max_iter: int = PO_MAX_OUTER) -> NullFitPO:
    return fit_transformation_null(sample, PROPORTIONAL_ODDS, tol=tol, max_iter=max_iter)


def _linear_index(fit: NullFitPO, sample: SurvivalSample) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(fit.cumulative_at(sample.time)) - sample.covariates @ fit.gamma_hat


def po_residuals(fit: NullFitPO, sample: SurvivalSample) -> np.ndarray:
    """r_i = delta_i * (lambda_dot / lambda)(e_i) - lambda(e_i), e_i = H(T_i) - gamma'X_i.

    Zero for subjects censored before the first event time (H = -inf there).
    """
    family = get_family(fit.family)
    e = _linear_index(fit, sample)
    inside = np.isfinite(e)
    return np.where(inside, sample.event * family.ratio(e) - family.hazard(e), 0.0)


def residual_weight(fit: NullFitPO, covariates: np.ndarray, t) -> np.ndarray:
    """omega_i(t) = (lambda_dot / lambda){H(t) - gamma'X_i}, shape (n, len(t))."""
    family = get_family(fit.family)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    with np.errstate(divide="ignore"):
        H = np.log(fit.cumulative_at(t))
    return family.ratio(H[None, :] - (np.asarray(covariates, dtype=float) @ fit.gamma_hat)[:, None])


def influence_components_po(fit: NullFitPO, sample: SurvivalSample, root: np.ndarray) -> np.ndarray:
    """Influence psi_i of n^{-1/2} sum_i r_i s_i under a transformation-model null.

    psi_i = r_i s_i + C J^{-1} l_i, where l_i is subject i's likelihood score in
    (beta, g_1..g_K), J the observed information and C the derivative of
    sum_i r_i s_i in the same parameters.
    """
    root = np.asarray(root, dtype=float)
    if root.shape[0] != sample.n:
        raise DataError(f"kernel root has {root.shape[0]} rows for {sample.n} subjects")
    family = get_family(fit.family)
    risk = RiskSets(sample.time, sample.event)
    if risk.n_times != fit.event_times.shape[0] or not np.allclose(risk.event_times, fit.event_times):
        raise DataError("null fit does not belong to this sample")

    X = sample.covariates
    state = _ModelState(family, risk, X, -fit.gamma_hat, fit.jumps)
    r, q, inv_baseline = state.r, state.q, state.inv_baseline

    at_risk = risk.at_risk()
    events = np.zeros((risk.n, risk.n_times))
    events[risk.event, risk.event_index[risk.event]] = 1.0
    scores = np.hstack((
        X * r[:, None],
        events / state.jumps[None, :] + at_risk * ((r - risk.delta) * inv_baseline)[:, None],
    ))

    derivative = np.hstack((
        (root * q[:, None]).T @ X,
        risk.risk_sum(root * (q * inv_baseline)[:, None]).T,
    ))
    J = state.information()
    try:
        correction = scores @ np.linalg.solve(J, derivative.T)
    except np.linalg.LinAlgError:
        raise NumericalError("transformation-model information is singular")
    return r[:, None] * root + correction
