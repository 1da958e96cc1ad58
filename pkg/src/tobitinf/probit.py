"""Probit maximum likelihood by damped Newton iterations."""

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import AllSameLabel, RankDeficient, Separation

__all__ = ["ProbitFit", "is_separable", "probit_loglik", "probit_score", "probit_hessian", "fit_probit"]

# max |x_i^T alpha| beyond which an improving fit is taken as separation
SEPARATION_BOUND = 35.0
# margin above which a converged fit is double-checked for separation
SEPARATION_CHECK_MARGIN = 5.0


@dataclass
class ProbitFit:
    alpha_hat: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    grad_norm: float


def _signed(z):
    z = np.asarray(z)
    return 2.0 * z - 1.0


def probit_loglik(alpha, X, z):
    """Sum of z_i log Phi(x_i'a) + (1 - z_i) log(1 - Phi(x_i'a))."""
    q = _signed(z)
    return float(np.sum(special.log_ndtr(q * (X @ alpha))))


def _ratio(t):
    # phi(t) / Phi(t), stable for large negative t
    return np.exp(-0.5 * t * t - 0.5 * np.log(2 * np.pi) - special.log_ndtr(t))


def probit_score(alpha, X, z):
    q = _signed(z)
    r = _ratio(q * (X @ alpha))
    return X.T @ (q * r)


def probit_hessian(alpha, X, z):
    q = _signed(z)
    t = q * (X @ alpha)
    r = _ratio(t)
    w = r * (r + t)
    return -(X.T * w) @ X


def is_separable(X, z, tol=1e-7):
    """True if some nonzero direction classifies every row weakly correctly.

    Solves the linear program max sum_i q_i x_i'a subject to q_i x_i'a >= 0 and
    |a|_inf <= 1, with q = 2z - 1. A positive optimum is a recession direction
    of the log-likelihood, so the MLE does not exist.
    """
    M = _signed(z)[:, None] * np.asarray(X, dtype=float)
    n, p = M.shape
    res = optimize.linprog(
        -M.sum(axis=0),
        A_ub=-M,
        b_ub=np.zeros(n),
        bounds=[(-1.0, 1.0)] * p,
        method="highs",
    )
    return bool(res.status == 0 and -res.fun > tol * max(1.0, np.abs(M).sum()))


def fit_probit(X, z, tol=1e-8, max_iter=100):
    """Fit a probit model by Newton's method with step halving.

    Parameters
    ----------
    X : (n, p) array
        Design matrix. No intercept column is added.
    z : (n,) array of 0/1
        Binary responses.
    tol : float
        Convergence threshold on the infinity norm of the score.
    max_iter : int
        Newton iteration cap.

    Returns
    -------
    ProbitFit

    Raises
    ------
    AllSameLabel
        If ``z`` is constant.
    RankDeficient
        If ``X`` does not have full column rank.
    Separation
        If the linear predictor diverges while the likelihood keeps improving,
        which happens when the classes are (quasi-)separable and no finite MLE
        exists.
    """
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    n, p = X.shape
    if z.shape != (n,):
        raise ValueError("X and z are not conformable")
    if not np.all((z == 0) | (z == 1)):
        raise ValueError("z must be binary")
    if z.min() == z.max():
        raise AllSameLabel("probit step needs at least one 0 and one 1")
    if n < p or np.linalg.matrix_rank(X) < p:
        raise RankDeficient("probit design is not of full column rank")

    alpha = np.zeros(p)
    ll = probit_loglik(alpha, X, z)
    g = probit_score(alpha, X, z)
    it = 0
    while np.max(np.abs(g)) > tol and it < max_iter:
        it += 1
        H = probit_hessian(alpha, X, z)
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-H, g, rcond=None)[0]
        slack = 1e-13 * (1.0 + abs(ll))
        t = 1.0
        cand = alpha + step
        ll_cand = probit_loglik(cand, X, z)
        while ll_cand < ll - slack and t > 1e-10:
            t *= 0.5
            cand = alpha + t * step
            ll_cand = probit_loglik(cand, X, z)
        if ll_cand < ll - slack:
            # no ascent along the Newton direction: at the optimum to working precision
            break
        alpha, ll = cand, ll_cand
        g = probit_score(alpha, X, z)
        if np.max(np.abs(X @ alpha)) > SEPARATION_BOUND and np.max(np.abs(g)) > tol:
            raise Separation(
                "linear predictor exceeds %g while the likelihood still improves; "
                "the data look separable" % SEPARATION_BOUND
            )

    gnorm = float(np.max(np.abs(g)))
    if np.max(np.abs(X @ alpha)) > SEPARATION_CHECK_MARGIN and is_separable(X, z):
        raise Separation("the classes are separable by a hyperplane; no finite probit MLE")
    return ProbitFit(
        alpha_hat=alpha,
        loglik=ll,
        iterations=it,
        converged=gnorm <= tol,
        grad_norm=gnorm,
    )
