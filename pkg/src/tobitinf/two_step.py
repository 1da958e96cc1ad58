"""Two-step (Heckman-type) estimators for Type 1, 2 and 3 Tobit models.

Step one fits a probit model to the censoring indicator. Step two regresses
the uncensored responses on their covariates augmented with the estimated
selection-correction column. No intercept is ever inserted; callers add a
column of ones themselves if they want one.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import (
    InvariantViolation,
    NonPositiveVariance,
    RankDeficient,
    TooFewUncensored,
)
from .normal_dist import inverse_mills
from .probit import ProbitFit, fit_probit

__all__ = [
    "Tobit1Data",
    "Tobit2Data",
    "Tobit3Data",
    "TwoStepFit",
    "correction_column",
    "lstsq_qr",
    "ls_standard_errors",
    "fit_tobit1",
    "fit_tobit2",
    "fit_tobit3",
    "aft_transform",
    "aft_data",
]


def _matrix(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvariantViolation(f"{name} must be a 2-d array")
    if not np.all(np.isfinite(X)):
        raise InvariantViolation(f"{name} has non-finite entries")
    return X


def _vector(v, n, name):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise InvariantViolation(f"{name} has length {v.shape[0]}, expected {n}")
    return v


@dataclass
class Tobit1Data:
    """Responses censored at zero, ``y = max(0, X beta + eps)``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = _matrix(self.X, "X")
        self.y = _vector(self.y, self.X.shape[0], "y")
        if not np.all(np.isfinite(self.y)):
            raise InvariantViolation("y has non-finite entries")
        bad = np.flatnonzero(self.y < 0)
        if bad.size:
            raise InvariantViolation(f"y must be nonnegative (negative at row {bad[0]})")

    @property
    def selected(self):
        return self.y > 0


@dataclass
class Tobit3Data:
    """Type 3 model: y1 censored at zero, y2 observed only where y1 > 0."""

    X1: np.ndarray
    y1: np.ndarray
    X2: np.ndarray
    y2: np.ndarray

    def __post_init__(self):
        self.X1 = _matrix(self.X1, "X1")
        n = self.X1.shape[0]
        self.X2 = _matrix(self.X2, "X2")
        if self.X2.shape[0] != n:
            raise InvariantViolation("X1 and X2 have different row counts")
        self.y1 = _vector(self.y1, n, "y1")
        self.y2 = _vector(self.y2, n, "y2")
        bad = np.flatnonzero(self.y1 < 0)
        if bad.size:
            raise InvariantViolation(f"y1 must be nonnegative (negative at row {bad[0]})")
        bad = np.flatnonzero((self.y1 == 0) & (self.y2 != 0))
        if bad.size:
            raise InvariantViolation(f"y1 zero but y2 nonzero at row {bad[0]}")

    @property
    def selected(self):
        return self.y1 > 0


@dataclass
class Tobit2Data:
    """Sample selection model: only the indicator z = 1{y1* > 0} is seen.

    Entries of ``y2`` at rows with ``z == 0`` are ignored (they may be NaN).
    """

    X1: np.ndarray
    z: np.ndarray
    X2: np.ndarray
    y2: np.ndarray

    def __post_init__(self):
        self.X1 = _matrix(self.X1, "X1")
        n = self.X1.shape[0]
        self.X2 = _matrix(self.X2, "X2")
        if self.X2.shape[0] != n:
            raise InvariantViolation("X1 and X2 have different row counts")
        self.z = _vector(self.z, n, "z")
        if not np.all((self.z == 0) | (self.z == 1)):
            raise InvariantViolation("z must be 0/1")
        self.y2 = _vector(self.y2, n, "y2")
        bad = np.flatnonzero((self.z == 1) & ~np.isfinite(self.y2))
        if bad.size:
            raise InvariantViolation(f"y2 missing at selected row {bad[0]}")

    @property
    def selected(self):
        return self.z == 1


@dataclass
class TwoStepFit:
    """Result of a two-step fit.

    ``gamma_hat`` is the second-step coefficient vector: the regression
    coefficients followed by the coefficient on the correction column (sigma
    for Type 1 and the first Type 3 equation, tau = sigma12 / sigma1 for the
    outcome equation of Types 2 and 3).
    """

    alpha_hat: np.ndarray
    lambda_hat: np.ndarray
    Z_hat: np.ndarray
    gamma_hat: np.ndarray
    selected_rows: np.ndarray
    y_bar: np.ndarray
    probit: ProbitFit
    sigma2_hat: float | None = None
    n_total: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def beta_hat(self):
        return self.gamma_hat[:-1]

    @property
    def scale_hat(self):
        return float(self.gamma_hat[-1])

    @property
    def X_bar(self):
        return self.Z_hat[:, :-1]

    @property
    def residuals(self):
        return self.y_bar - self.Z_hat @ self.gamma_hat

    def to_dict(self):
        out = {
            "alpha_hat": self.alpha_hat.tolist(),
            "beta_hat": self.beta_hat.tolist(),
            "correction_coef": self.scale_hat,
            "gamma_hat": self.gamma_hat.tolist(),
            "sigma2_hat": self.sigma2_hat,
            "n_total": int(self.n_total),
            "n_selected": int(self.selected_rows.size),
            "selected_rows": self.selected_rows.tolist(),
            "probit": {
                "loglik": self.probit.loglik,
                "iterations": int(self.probit.iterations),
                "converged": bool(self.probit.converged),
                "grad_norm": self.probit.grad_norm,
            },
        }
        out.update(self.extra)
        return out


def correction_column(index):
    """Selection correction E[eps | eps > -c] for standard normal eps.

    Equals phi(c) / Phi(c), i.e. the inverse Mills ratio evaluated at -c.
    """
    return inverse_mills(-np.asarray(index, dtype=float))


def lstsq_qr(Z, y):
    """Least squares by Householder QR; raises RankDeficient on a singular R."""
    Z = np.asarray(Z, dtype=float)
    n, k = Z.shape
    if n < k:
        raise RankDeficient(f"{n} rows for {k} regressors")
    Q, R = np.linalg.qr(Z, mode="reduced")
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() <= max(n, k) * np.finfo(float).eps * d.max():
        raise RankDeficient("second-step design is rank deficient")
    return linalg.solve_triangular(R, Q.T @ y, lower=False)


def ls_standard_errors(fit):
    """Textbook least-squares standard errors of the second-step coefficients.

    Treats the correction column as fixed and the errors as homoscedastic,
    i.e. what an ordinary regression routine would report for ``gamma_hat``.
    Returns ``(se, s2)`` with ``s2 = RSS / (n_selected - k)``.
    """
    Z = fit.Z_hat
    n, k = Z.shape
    if n <= k:
        raise TooFewUncensored("no residual degrees of freedom")
    r = fit.residuals
    s2 = float(r @ r) / (n - k)
    R = np.linalg.qr(Z, mode="r")
    Rinv = linalg.solve_triangular(R, np.eye(k), lower=False)
    return np.sqrt(s2 * np.sum(Rinv**2, axis=1)), s2


def _second_step(X_sel, y_sel, correction):
    Z = np.column_stack([X_sel, correction])
    gamma = lstsq_qr(Z, y_sel)
    return Z, gamma


def _check_counts(n_sel, p, n):
    if n_sel == n:
        raise TooFewUncensored("no censored observations; the probit step is degenerate")
    if n_sel < p + 2:
        raise TooFewUncensored(f"{n_sel} uncensored rows; need at least {p + 2}")


def fit_tobit1(data):
    """Two-step estimator for the standard Tobit model."""
    X, y = data.X, data.y
    n, p = X.shape
    sel = np.flatnonzero(data.selected)
    _check_counts(sel.size, p, n)
    pf = fit_probit(X, data.selected.astype(float))
    lam = correction_column(X[sel] @ pf.alpha_hat)
    Z, gamma = _second_step(X[sel], y[sel], lam)
    return TwoStepFit(
        alpha_hat=pf.alpha_hat,
        lambda_hat=lam,
        Z_hat=Z,
        gamma_hat=gamma,
        selected_rows=sel,
        y_bar=y[sel],
        probit=pf,
        n_total=n,
        extra={"model": "tobit1", "sigma_hat": float(gamma[-1])},
    )


def _outcome_variance(resid, p2, tau, index, lam):
    # residual variance plus the selection shrinkage tau^2 * mean(c*m + m^2)
    n_sel = resid.size
    s2 = float(resid @ resid) / (n_sel - p2) + tau**2 * float(np.mean(index * lam + lam**2))
    if not s2 > 0:
        raise NonPositiveVariance(f"estimated outcome variance {s2:g} is not positive")
    return s2


def _outcome_equation(X1, X2, y2, selected):
    n, p1 = X1.shape
    p2 = X2.shape[1]
    sel = np.flatnonzero(selected)
    _check_counts(sel.size, max(p1, p2), n)
    pf = fit_probit(X1, selected.astype(float))
    index = X1[sel] @ pf.alpha_hat
    lam = correction_column(index)
    Z, gamma = _second_step(X2[sel], y2[sel], lam)
    resid = y2[sel] - Z @ gamma
    s2 = _outcome_variance(resid, p2, gamma[-1], index, lam)
    return pf, sel, index, lam, Z, gamma, s2


def fit_tobit3(data):
    """Heckman two-step estimator for the Type 3 model.

    Returns ``(fit1, fit2)``: the censored first equation (correction
    coefficient sigma1) and the outcome equation (correction coefficient
    tau, with ``fit2.sigma2_hat`` the outcome error variance).
    """
    pf, sel, index, lam, Z2, gamma2, s2 = _outcome_equation(
        data.X1, data.X2, data.y2, data.selected
    )
    Z1, gamma1 = _second_step(data.X1[sel], data.y1[sel], lam)
    n = data.X1.shape[0]
    sigma1 = float(gamma1[-1])
    tau = float(gamma2[-1])
    fit1 = TwoStepFit(
        alpha_hat=pf.alpha_hat,
        lambda_hat=lam,
        Z_hat=Z1,
        gamma_hat=gamma1,
        selected_rows=sel,
        y_bar=data.y1[sel],
        probit=pf,
        n_total=n,
        extra={"model": "tobit3", "equation": 1, "sigma1_hat": sigma1},
    )
    fit2 = TwoStepFit(
        alpha_hat=pf.alpha_hat,
        lambda_hat=lam,
        Z_hat=Z2,
        gamma_hat=gamma2,
        selected_rows=sel,
        y_bar=data.y2[sel],
        probit=pf,
        sigma2_hat=s2,
        n_total=n,
        extra={
            "model": "tobit3",
            "equation": 2,
            "tau_hat": tau,
            "sigma12_hat": tau * sigma1,
        },
    )
    return fit1, fit2


def fit_tobit2(data):
    """Heckman two-step estimator for the sample selection model.

    The selection error variance is normalized to one, so the correction
    coefficient ``tau`` doubles as the error covariance estimate.
    """
    y2 = np.where(data.selected, data.y2, 0.0)
    pf, sel, index, lam, Z, gamma, s2 = _outcome_equation(data.X1, data.X2, y2, data.selected)
    return TwoStepFit(
        alpha_hat=pf.alpha_hat,
        lambda_hat=lam,
        Z_hat=Z,
        gamma_hat=gamma,
        selected_rows=sel,
        y_bar=y2[sel],
        probit=pf,
        sigma2_hat=s2,
        n_total=data.X1.shape[0],
        extra={"model": "tobit2", "tau_hat": float(gamma[-1]), "sigma12_hat": float(gamma[-1])},
    )


def aft_transform(t, T):
    """Map failure times right-censored at ``T`` to a Tobit response.

    Returns ``log(T) - log(t)``; units that survived the whole period
    (``t == T``) map to exactly zero.
    """
    t = np.asarray(t, dtype=float)
    T = np.broadcast_to(np.asarray(T, dtype=float), t.shape)
    if np.any(~(t > 0)) or np.any(~(T > 0)):
        raise InvariantViolation("failure and censoring times must be positive")
    bad = np.flatnonzero(t > T)
    if bad.size:
        raise InvariantViolation(f"failure time exceeds censoring time at row {bad[0]}")
    y = np.log(T) - np.log(t)
    y[t == T] = 0.0
    return y


def aft_data(X, t, T):
    return Tobit1Data(X, aft_transform(t, T))
