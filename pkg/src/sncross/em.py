"""EM engine for skew-normal crossover mixed models.

Fits the random-intercept model y_ij = X_ij beta + Z b_ij + e_ij by maximum
likelihood for three scenarios: skew-normal errors with a normal random
effect, a skew-normal random effect with normal errors, and the all-normal
baseline.  The skewed component is rewritten through its additive
representation, which puts the model in the conditional form

    y_ij | t_ij ~ N(X_ij beta + d t_ij, V),   t_ij ~ half normal,

so the E-step reduces to the first two conditional moments of a truncated
normal (closed form via the Mills ratio) and the M-step to a generalized
least squares update of beta plus a safeguarded Newton-Raphson update of
the variance/skewness components xi = (sigma_e2, sigma_s2, lambda) with
analytic gradient and Hessian of the Q-function.

Scenario-specific structure (pm observations per subject, Z = 1_pm,
delta = lambda / sqrt(1 + lambda^2), J the all-ones matrix, E11 the
first-coordinate projector):

    errors SN:  V = sigma_s2 J + sigma_e2 (I - delta^2 E11),
                d = sigma_e * delta * e1
    effect SN:  V = sigma_s2 (1 - delta^2) J + sigma_e2 I,
                d = sigma_s * delta * 1_pm
    normal:     V = sigma_s2 J + sigma_e2 I, d = 0, lambda pinned at 0

Every M-step increases the Q-function (beta update exactly, the NR step by
step halving), so the observed-data log-likelihood trajectory is
non-decreasing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import linalg as sla
from scipy import special

from .design import TrialData
from .skewnormal import SQRT_2_OVER_PI, delta_of_lambda, mills

_LOG_2PI = float(np.log(2.0 * np.pi))
_VARIANCE_FLOOR = 1e-10
_MAX_HALVINGS = 30
LAMBDA_SINGULARITY_THRESHOLD = 0.05


class Scenario(Enum):
    """Which model component carries the skewness."""

    ERROR_SN = "error-sn"
    EFFECT_SN = "effect-sn"
    NORMAL = "normal"


@dataclass(frozen=True)
class ThetaState:
    """Full parameter state: fixed effects, variance components, shape."""

    beta: np.ndarray
    sigma_e2: float
    sigma_s2: float
    lam: float
    scenario: Scenario

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if not (self.sigma_e2 > 0 and self.sigma_s2 > 0):
            raise ValueError("variance components must be positive")

    @property
    def xi(self) -> np.ndarray:
        """Variance/shape subvector ordered (sigma_e2, sigma_s2, lambda)."""
        return np.array([self.sigma_e2, self.sigma_s2, self.lam])

    def with_xi(self, xi) -> "ThetaState":
        return replace(self, sigma_e2=float(xi[0]), sigma_s2=float(xi[1]), lam=float(xi[2]))


@dataclass
class EStepCache:
    """Conditional moments and covariance bundle from one E-step.

    V, its inverse and d are shared by all subjects (Z is the all-ones
    column); eta, T01 and T02 are per-subject vectors.  T01/T02 stay frozen
    while the M-step moves the parameters.
    """

    V: np.ndarray
    Vinv: np.ndarray
    logdet: float
    d: np.ndarray
    dVinvd: float
    zeta2: float
    eta: np.ndarray
    T01: np.ndarray
    T02: np.ndarray


@dataclass
class FitResult:
    """Converged estimates and fit summary."""

    theta: ThetaState
    param_names: tuple[str, ...]
    se: np.ndarray | None
    corrected_intercept: float
    loglik: float
    aic: float
    bic: float
    iterations: int
    converged: bool
    trajectory: list[float]
    n_free: int
    n_obs: int
    lambda_warning: bool = False
    nr_stalls: int = 0


class RankDeficiencyError(np.linalg.LinAlgError):
    """Normal equations for the fixed effects are singular."""


# ---------------------------------------------------------------------------
# Covariance assembly and scenario derivatives
# ---------------------------------------------------------------------------


def assemble(theta: ThetaState, z: np.ndarray):
    """Conditional covariance V and skew loading d for one subject.

    Returns (V, d) with V symmetric positive definite (for admissible
    parameters) and d of the same length as z.  Positive definiteness is
    not checked here; downstream Cholesky factorizations raise LinAlgError
    on parameter escapes, which the NR safeguards catch.
    """
    z = np.asarray(z, dtype=float)
    pm = z.shape[0]
    delta = delta_of_lambda(theta.lam)
    J = np.outer(z, z)
    if theta.scenario is Scenario.ERROR_SN:
        R = np.eye(pm)
        R[0, 0] -= delta * delta
        V = theta.sigma_s2 * J + theta.sigma_e2 * R
        d = np.zeros(pm)
        d[0] = np.sqrt(theta.sigma_e2) * delta
    elif theta.scenario is Scenario.EFFECT_SN:
        V = theta.sigma_s2 * (1.0 - delta * delta) * J + theta.sigma_e2 * np.eye(pm)
        d = np.sqrt(theta.sigma_s2) * delta * z
    else:
        V = theta.sigma_s2 * J + theta.sigma_e2 * np.eye(pm)
        d = np.zeros(pm)
    return V, d


def _chol_bundle(V: np.ndarray):
    """Cholesky-based inverse and log-determinant; raises LinAlgError if not PD."""
    L = np.linalg.cholesky(V)
    Vinv = sla.cho_solve((L, True), np.eye(V.shape[0]))
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return Vinv, logdet


def _xi_derivatives(theta: ThetaState, pm: int):
    """First and second derivatives of (V, d) in xi = (se2, ss2, lambda).

    Returns (V_first, d_first, V_second, d_second) where the firsts are
    length-3 lists and the seconds are dicts keyed by upper-triangle index
    pairs; absent keys mean a zero derivative.
    """
    lam = theta.lam
    delta = delta_of_lambda(lam)
    one_p = 1.0 + lam * lam
    ddelta = one_p**-1.5
    d2delta = -3.0 * lam * one_p**-2.5
    ones = np.ones(pm)
    J = np.ones((pm, pm))
    eye = np.eye(pm)
    E11 = np.zeros((pm, pm))
    E11[0, 0] = 1.0
    e1 = np.zeros(pm)
    e1[0] = 1.0

    if theta.scenario is Scenario.ERROR_SN:
        se = np.sqrt(theta.sigma_e2)
        R = eye - delta * delta * E11
        Rl = -2.0 * delta * ddelta * E11
        Rll = -2.0 * (delta * d2delta + ddelta * ddelta) * E11
        V_first = [R, J, theta.sigma_e2 * Rl]
        d_first = [delta / (2.0 * se) * e1, np.zeros(pm), se * ddelta * e1]
        V_second = {(0, 2): Rl, (2, 2): theta.sigma_e2 * Rll}
        d_second = {
            (0, 0): -delta / (4.0 * se**3) * e1,
            (0, 2): ddelta / (2.0 * se) * e1,
            (2, 2): se * d2delta * e1,
        }
    elif theta.scenario is Scenario.EFFECT_SN:
        ss = np.sqrt(theta.sigma_s2)
        Rs = 1.0 - delta * delta
        Rl = -2.0 * delta * ddelta
        Rll = -2.0 * (delta * d2delta + ddelta * ddelta)
        V_first = [eye, Rs * J, theta.sigma_s2 * Rl * J]
        d_first = [np.zeros(pm), delta / (2.0 * ss) * ones, ss * ddelta * ones]
        V_second = {(1, 2): Rl * J, (2, 2): theta.sigma_s2 * Rll * J}
        d_second = {
            (1, 1): -delta / (4.0 * ss**3) * ones,
            (1, 2): ddelta / (2.0 * ss) * ones,
            (2, 2): ss * d2delta * ones,
        }
    else:
        V_first = [eye, J, np.zeros((pm, pm))]
        d_first = [np.zeros(pm)] * 3
        V_second = {}
        d_second = {}
    return V_first, d_first, V_second, d_second


# ---------------------------------------------------------------------------
# E-step and M-step pieces
# ---------------------------------------------------------------------------


def conditional_t_moments(eta, zeta):
    """First two moments of N(eta, zeta^2) truncated to the positive axis.

    T01 = eta + zeta * mills(eta/zeta),
    T02 = eta^2 + zeta^2 + eta * zeta * mills(eta/zeta).
    """
    eta = np.asarray(eta, dtype=float)
    ratio = mills(eta / zeta)
    T01 = eta + zeta * ratio
    T02 = eta * eta + zeta * zeta + eta * zeta * ratio
    return T01, T02


def e_step(theta: ThetaState, data: TrialData) -> EStepCache:
    """Conditional moments of the latent half-normal given the data.

    For each subject, with u = y - X beta,

        eta  = d' V^{-1} u / (1 + d' V^{-1} d),
        zeta^2 = 1 / (1 + d' V^{-1} d),

    and (T01, T02) are the positive-truncated N(eta, zeta^2) moments.
    """
    pm = data.layout.pm
    V, d = assemble(theta, np.ones(pm))
    Vinv, logdet = _chol_bundle(V)
    A = Vinv @ d
    c = float(d @ A)
    zeta2 = 1.0 / (1.0 + c)
    resid = data.y - data.X @ theta.beta
    eta = (resid @ A) * zeta2
    T01, T02 = conditional_t_moments(eta, np.sqrt(zeta2))
    return EStepCache(
        V=V, Vinv=Vinv, logdet=logdet, d=d, dVinvd=c, zeta2=zeta2,
        eta=eta, T01=T01, T02=T02,
    )


def update_beta(theta: ThetaState, data: TrialData, cache: EStepCache) -> np.ndarray:
    """Closed-form Q maximizer over the fixed effects.

    beta = (sum X' V^{-1} X)^{-1} sum X' V^{-1} (y - d T01).
    Raises RankDeficiencyError naming the dependent columns when the pooled
    normal equations are singular.
    """
    Xt = data.X.transpose(0, 2, 1)
    XtV = Xt @ cache.Vinv
    M = np.einsum("nqp,npr->qr", XtV, data.X)
    adj = data.y - np.outer(cache.T01, cache.d)
    rhs = np.einsum("nqp,np->q", XtV, adj)
    try:
        L = np.linalg.cholesky(M)
        return sla.cho_solve((L, True), rhs)
    except np.linalg.LinAlgError:
        names = np.asarray(data.param_names)
        rank = np.linalg.matrix_rank(M)
        _, _, piv = sla.qr(M, pivoting=True)
        dependent = sorted(names[piv[rank:]])
        raise RankDeficiencyError(
            "fixed-effects normal equations are singular; "
            f"dependent columns: {', '.join(dependent)}"
        ) from None


def q_value(theta: ThetaState, data: TrialData, cache: EStepCache) -> float:
    """Expected complete-data log-likelihood at theta, T01/T02 frozen.

    Q = -1/2 sum_ij [ log|V| + (1 + d'V^{-1}d) T02
                      + u' V^{-1} (u - 2 d T01) ],  u = y - X beta.
    """
    pm = data.layout.pm
    V, d = assemble(theta, np.ones(pm))
    Vinv, logdet = _chol_bundle(V)
    A = Vinv @ d
    c = float(d @ A)
    resid = data.y - data.X @ theta.beta
    quad = np.einsum("np,pq,nq->n", resid, Vinv, resid)
    lin = resid @ A
    n = data.n_subjects
    total = (
        n * logdet
        + (1.0 + c) * float(cache.T02.sum())
        + float(quad.sum())
        - 2.0 * float(cache.T01 @ lin)
    )
    return -0.5 * total


def q_gradient(theta: ThetaState, data: TrialData, cache: EStepCache) -> np.ndarray:
    """Analytic gradient of the Q-function in xi = (sigma_e2, sigma_s2, lambda).

    T01/T02 are held fixed at the cached E-step values.  For the normal
    baseline the third component is identically zero (lambda pinned).
    """
    pm = data.layout.pm
    V, d = assemble(theta, np.ones(pm))
    Vinv, _ = _chol_bundle(V)
    V_first, d_first, _, _ = _xi_derivatives(theta, pm)
    resid = data.y - data.X @ theta.beta
    n = data.n_subjects
    sum_T02 = float(cache.T02.sum())
    grad = np.zeros(3)
    for a in range(3):
        Pa = Vinv @ V_first[a]
        Wa = -Pa @ Vinv
        tr_a = float(np.trace(Pa))
        qd = float(d @ Wa @ d) + 2.0 * float(d @ Vinv @ d_first[a])
        quad = np.einsum("np,pq,nq->n", resid, Wa, resid)
        lin = resid @ (Wa @ d + Vinv @ d_first[a])
        grad[a] = -0.5 * (
            n * tr_a + qd * sum_T02 + float(quad.sum()) - 2.0 * float(cache.T01 @ lin)
        )
    return grad


def q_hessian(theta: ThetaState, data: TrialData, cache: EStepCache) -> np.ndarray:
    """Analytic Hessian of the Q-function in xi, symmetric by construction.

    Uses the exact second derivative of V^{-1},

        S_ab = V^{-1} V_a V^{-1} V_b V^{-1} + V^{-1} V_b V^{-1} V_a V^{-1}
               - V^{-1} V_ab V^{-1},

    so the matrix agrees with finite differences of the gradient entrywise.
    """
    pm = data.layout.pm
    V, d = assemble(theta, np.ones(pm))
    Vinv, _ = _chol_bundle(V)
    V_first, d_first, V_second, d_second = _xi_derivatives(theta, pm)
    resid = data.y - data.X @ theta.beta
    n = data.n_subjects
    sum_T02 = float(cache.T02.sum())
    zeros_m = np.zeros((pm, pm))
    zeros_v = np.zeros(pm)
    P = [Vinv @ V_first[a] for a in range(3)]
    W = [-P[a] @ Vinv for a in range(3)]
    H = np.zeros((3, 3))
    for a in range(3):
        for b in range(a, 3):
            V_ab = V_second.get((a, b), zeros_m)
            d_ab = d_second.get((a, b), zeros_v)
            S_ab = (P[a] @ P[b] + P[b] @ P[a]) @ Vinv - Vinv @ V_ab @ Vinv
            tr_term = -float(np.trace(P[b] @ P[a])) + float(np.trace(Vinv @ V_ab))
            qd = (
                float(d @ S_ab @ d)
                + 2.0 * float(d @ W[a] @ d_first[b])
                + 2.0 * float(d_first[b] @ Vinv @ d_first[a])
                + 2.0 * float(d @ W[b] @ d_first[a])
                + 2.0 * float(d @ Vinv @ d_ab)
            )
            quad = np.einsum("np,pq,nq->n", resid, S_ab, resid)
            w_vec = S_ab @ d + W[a] @ d_first[b] + W[b] @ d_first[a] + Vinv @ d_ab
            lin = resid @ w_vec
            H[a, b] = -0.5 * (
                n * tr_term
                + qd * sum_T02
                + float(quad.sum())
                - 2.0 * float(cache.T01 @ lin)
            )
            H[b, a] = H[a, b]
    return H


def nr_step(
    theta: ThetaState,
    data: TrialData,
    cache: EStepCache,
    active: np.ndarray | None = None,
):
    """One safeguarded Newton-Raphson update of the active xi components.

    Starts from xi - H^{-1} grad; falls back to a scaled gradient-ascent
    direction when H is singular or the Newton direction is not an ascent
    direction; halves the step (at most 30 times) until Q does not decrease
    and the variance components stay above 1e-10.  Returns (xi_new,
    stalled); a stalled step returns the current xi unchanged.
    """
    if active is None:
        active = np.array([True, True, theta.scenario is not Scenario.NORMAL])
    xi0 = theta.xi
    q0 = q_value(theta, data, cache)
    grad = q_gradient(theta, data, cache)[active]
    hess = q_hessian(theta, data, cache)[np.ix_(active, active)]
    step_act = None
    try:
        cand = -np.linalg.solve(hess, grad)
        if np.all(np.isfinite(cand)) and float(grad @ cand) > 0.0:
            step_act = cand
    except np.linalg.LinAlgError:
        pass
    if step_act is None:
        gnorm = float(np.linalg.norm(grad))
        step_act = grad / (1.0 + gnorm)
    step = np.zeros(3)
    step[active] = step_act

    scale = 1.0
    for _ in range(_MAX_HALVINGS + 1):
        xi_try = xi0 + scale * step
        scale *= 0.5
        if xi_try[0] <= _VARIANCE_FLOOR or xi_try[1] <= _VARIANCE_FLOOR:
            continue
        try:
            q_try = q_value(theta.with_xi(xi_try), data, cache)
        except np.linalg.LinAlgError:
            continue
        if np.isfinite(q_try) and q_try >= q0 - 1e-12:
            return xi_try, False
    return xi0, True


# ---------------------------------------------------------------------------
# Likelihood, initialization, standard errors
# ---------------------------------------------------------------------------


def marginal_loglik(theta: ThetaState, data: TrialData) -> float:
    """Observed-data log-likelihood, latent half-normal integrated out.

    Per subject, f(y) = 2 phi_pm(y | X beta, Sigma) Phi(eta / zeta) with
    Sigma = V + d d'; the rank-one structure gives
    log|Sigma| = log|V| + log(1 + d'V^{-1}d) and the Sherman-Morrison
    quadratic form.
    """
    pm = data.layout.pm
    V, d = assemble(theta, np.ones(pm))
    Vinv, logdet = _chol_bundle(V)
    A = Vinv @ d
    c = float(d @ A)
    resid = data.y - data.X @ theta.beta
    quad_v = np.einsum("np,pq,nq->n", resid, Vinv, resid)
    u = resid @ A
    quad_sigma = quad_v - u * u / (1.0 + c)
    eta = u / (1.0 + c)
    zeta = np.sqrt(1.0 / (1.0 + c))
    n = data.n_subjects
    const = np.log(2.0) - 0.5 * pm * _LOG_2PI - 0.5 * (logdet + np.log1p(c))
    return float(n * const - 0.5 * quad_sigma.sum() + special.log_ndtr(eta / zeta).sum())


def initialize(
    data: TrialData, scenario: Scenario, freeze_lambda: bool = False
) -> ThetaState:
    """Starting values: normal-model moments for beta and the variances.

    beta comes from GLS under moment-estimated variance components; the
    components themselves come from the between/within subject mean squares
    of OLS residuals (the one-way ANOVA estimators), floored at 1e-6.
    lambda starts at 1 for skew scenarios (away from the lambda = 0
    information singularity) and at 0 for the baseline or when frozen.
    """
    n, pm, q = data.n_subjects, data.layout.pm, data.layout.n_fixed
    X_flat = data.X.reshape(-1, q)
    beta_ols, *_ = np.linalg.lstsq(X_flat, data.y.ravel(), rcond=None)
    resid = data.y - data.X @ beta_ols
    if pm > 1:
        subj_mean = resid.mean(axis=1)
        msw = float(((resid - subj_mean[:, None]) ** 2).sum()) / (n * (pm - 1))
        if n > 1:
            msb = pm * float(((subj_mean - subj_mean.mean()) ** 2).sum()) / (n - 1)
        else:
            msb = msw
        sigma_e2 = msw
        sigma_s2 = (msb - msw) / pm
    else:
        total = float(resid.var())
        sigma_e2 = sigma_s2 = total / 2.0
    if sigma_e2 < 1e-6:
        warnings.warn("degenerate (near-constant) response; flooring error variance")
        sigma_e2 = 1e-6
    sigma_s2 = max(sigma_s2, 1e-6)

    V0 = sigma_s2 * np.ones((pm, pm)) + sigma_e2 * np.eye(pm)
    Vinv0, _ = _chol_bundle(V0)
    Xt = data.X.transpose(0, 2, 1)
    XtV = Xt @ Vinv0
    M = np.einsum("nqp,npr->qr", XtV, data.X)
    rhs = np.einsum("nqp,np->q", XtV, data.y)
    beta0 = np.linalg.solve(M, rhs)
    lam0 = 0.0 if (scenario is Scenario.NORMAL or freeze_lambda) else 1.0
    return ThetaState(
        beta=beta0, sigma_e2=sigma_e2, sigma_s2=sigma_s2, lam=lam0, scenario=scenario
    )


def corrected_intercept(theta: ThetaState) -> float:
    """Intercept shifted by the mean of the skew term, d_1 * sqrt(2/pi).

    Reported alongside the raw intercept, never substituted for it.  For
    the baseline (or lambda = 0) it equals the raw intercept.
    """
    delta = delta_of_lambda(theta.lam)
    if theta.scenario is Scenario.ERROR_SN:
        d1 = np.sqrt(theta.sigma_e2) * delta
    elif theta.scenario is Scenario.EFFECT_SN:
        d1 = np.sqrt(theta.sigma_s2) * delta
    else:
        d1 = 0.0
    return float(theta.beta[0] + d1 * SQRT_2_OVER_PI)


def _free_vector(theta: ThetaState, include_lambda: bool) -> np.ndarray:
    parts = [theta.beta, [theta.sigma_e2, theta.sigma_s2]]
    if include_lambda:
        parts.append([theta.lam])
    return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])


def _theta_from_vector(vec: np.ndarray, q: int, theta: ThetaState, include_lambda: bool) -> ThetaState:
    lam = float(vec[q + 2]) if include_lambda else theta.lam
    return replace(
        theta, beta=vec[:q], sigma_e2=float(vec[q]), sigma_s2=float(vec[q + 1]), lam=lam
    )


def standard_errors(
    theta: ThetaState, data: TrialData, include_lambda: bool | None = None
) -> np.ndarray:
    """SEs from the numerical Hessian of the marginal log-likelihood.

    Central differences with per-coordinate step 1e-4 * max(1, |theta_k|)
    (shrunk where a variance would be driven non-positive); SE_k is the
    square root of the k-th diagonal entry of the inverse of the negated
    Hessian.  A non-positive-definite information matrix yields NaN for the
    affected coordinates, with a warning.
    """
    if include_lambda is None:
        include_lambda = theta.scenario is not Scenario.NORMAL
    q = data.layout.n_fixed
    x0 = _free_vector(theta, include_lambda)
    p = x0.size

    bundles: dict[tuple[float, float, float], tuple] = {}

    def loglik_at(vec: np.ndarray) -> float:
        th = _theta_from_vector(vec, q, theta, include_lambda)
        key = (th.sigma_e2, th.sigma_s2, th.lam)
        bundle = bundles.get(key)
        if bundle is None:
            pm = data.layout.pm
            V, d = assemble(th, np.ones(pm))
            Vinv, logdet = _chol_bundle(V)
            A = Vinv @ d
            c = float(d @ A)
            const = (
                np.log(2.0)
                - 0.5 * pm * _LOG_2PI
                - 0.5 * (logdet + np.log1p(c))
            )
            bundle = (Vinv, A, c, const)
            bundles[key] = bundle
        Vinv, A, c, const = bundle
        resid = data.y - data.X @ th.beta
        quad_v = np.einsum("np,pq,nq->n", resid, Vinv, resid)
        u = resid @ A
        quad_sigma = quad_v - u * u / (1.0 + c)
        zeta = np.sqrt(1.0 / (1.0 + c))
        eta = u / (1.0 + c)
        return float(
            data.n_subjects * const
            - 0.5 * quad_sigma.sum()
            + special.log_ndtr(eta / zeta).sum()
        )

    h = 1e-4 * np.maximum(1.0, np.abs(x0))
    for k in (q, q + 1):  # keep variance perturbations positive
        if x0[k] - h[k] <= 0:
            h[k] = x0[k] / 2.0

    f0 = loglik_at(x0)
    H = np.zeros((p, p))
    for k in range(p):
        ek = np.zeros(p)
        ek[k] = h[k]
        H[k, k] = (loglik_at(x0 + ek) - 2.0 * f0 + loglik_at(x0 - ek)) / h[k] ** 2
    for k in range(p):
        for l in range(k + 1, p):
            ek = np.zeros(p)
            el = np.zeros(p)
            ek[k] = h[k]
            el[l] = h[l]
            H[k, l] = (
                loglik_at(x0 + ek + el)
                - loglik_at(x0 + ek - el)
                - loglik_at(x0 - ek + el)
                + loglik_at(x0 - ek - el)
            ) / (4.0 * h[k] * h[l])
            H[l, k] = H[k, l]

    info = -H
    try:
        L = np.linalg.cholesky(info)
        cov = sla.cho_solve((L, True), np.eye(p))
        return np.sqrt(np.diag(cov))
    except np.linalg.LinAlgError:
        warnings.warn("information matrix not positive definite; some SEs set to NaN")
        cov = np.linalg.pinv(info)
        diag = np.diag(cov).copy()
        bad = ~np.isfinite(diag) | (diag <= 0)
        diag[bad] = np.nan
        return np.sqrt(diag)


# ---------------------------------------------------------------------------
# Main fitting loop
# ---------------------------------------------------------------------------


def fit(
    data: TrialData,
    scenario: Scenario,
    *,
    tol: float = 5e-3,
    max_iter: int = 500,
    freeze_lambda: bool = False,
    compute_se: bool = True,
) -> FitResult:
    """Maximum-likelihood fit by EM.

    Alternates the closed-form E-step with the beta update and the
    safeguarded NR update of the variance components until the largest
    absolute change over all free parameters drops below ``tol`` (default
    5e-3) or ``max_iter`` is reached.  Non-convergence is reported through
    the ``converged`` flag, not an exception.
    """
    lambda_free = scenario is not Scenario.NORMAL and not freeze_lambda
    active = np.array([True, True, lambda_free])
    theta = initialize(data, scenario, freeze_lambda=freeze_lambda)
    trajectory = [marginal_loglik(theta, data)]
    converged = False
    iterations = 0
    stalls = 0
    for it in range(1, max_iter + 1):
        cache = e_step(theta, data)
        beta_new = update_beta(theta, data, cache)
        theta_b = replace(theta, beta=beta_new)
        xi_new, stalled = nr_step(theta_b, data, cache, active)
        stalls += int(stalled)
        theta_new = theta_b.with_xi(xi_new)
        trajectory.append(marginal_loglik(theta_new, data))
        delta = max(
            float(np.max(np.abs(beta_new - theta.beta))),
            float(np.max(np.abs((xi_new - theta.xi)[active]), initial=0.0)),
        )
        theta = theta_new
        iterations = it
        if delta < tol:
            converged = True
            break

    loglik = trajectory[-1]
    k = data.layout.n_fixed + int(active.sum())
    n_obs = data.n_obs
    aic = 2.0 * k - 2.0 * loglik
    bic = k * float(np.log(n_obs)) - 2.0 * loglik
    se = standard_errors(theta, data, include_lambda=lambda_free) if compute_se else None
    names = list(data.param_names) + ["sigma_e2", "sigma_s2"]
    if lambda_free:
        names.append("lambda")
    lambda_warning = lambda_free and abs(theta.lam) < LAMBDA_SINGULARITY_THRESHOLD
    if lambda_warning:
        warnings.warn(
            f"|lambda| = {abs(theta.lam):.4f} < {LAMBDA_SINGULARITY_THRESHOLD}: "
            "information matrix is near-singular at lambda = 0; "
            "standard errors may be unreliable"
        )
    return FitResult(
        theta=theta,
        param_names=tuple(names),
        se=se,
        corrected_intercept=corrected_intercept(theta),
        loglik=loglik,
        aic=aic,
        bic=bic,
        iterations=iterations,
        converged=converged,
        trajectory=trajectory,
        n_free=k,
        n_obs=n_obs,
        lambda_warning=lambda_warning,
        nr_stalls=stalls,
    )
