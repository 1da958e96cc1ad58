"""Truncated-normal pivots for linear targets of a constrained normal vector.

For ``y ~ N(mu, Sigma)`` restricted to the polyhedron ``{A y <= b}`` and a
direction ``eta``, the statistic ``eta'y`` is conditionally a normal variable
truncated to ``[v_minus, v_plus]``, where the bounds depend on ``y`` only
through its component orthogonal (in the ``Sigma`` metric) to ``eta``. The
truncated-normal CDF evaluated at ``eta'y`` is then uniform, which gives exact
intervals and tests.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import (
    BracketFailure,
    DegenerateDirection,
    InfeasibleObservation,
    RankDeficient,
)
from .normal_dist import Phi_inv, tn_cdf

__all__ = [
    "ScaledIdentity",
    "BlockCovariance",
    "PolyhedralConstraint",
    "PivotContext",
    "InferenceResult",
    "orthant_constraint",
    "first_block_orthant",
    "truncation_bounds",
    "pivot_context",
    "pivot",
    "invert_interval",
    "naive_interval",
    "significance_test",
    "naive_test",
    "pinv_directions",
    "target_eta",
]

# |a_j| at or below this fraction of max|a| counts as a_j = 0
TIE_TOL = 1e-12


class ScaledIdentity:
    """Covariance ``sigma2 * I_n``."""

    def __init__(self, sigma2, n):
        if not sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        self.sigma2 = float(sigma2)
        self.n = int(n)
        self.shape = (self.n, self.n)

    def __matmul__(self, v):
        return self.sigma2 * np.asarray(v, dtype=float)

    def to_dense(self):
        return self.sigma2 * np.eye(self.n)


class BlockCovariance:
    """Covariance ``[[s11 I, s12 I], [s12 I, s22 I]]`` of a stacked pair of n-vectors."""

    def __init__(self, s11, s12, s22, n):
        if not (s11 > 0 and s22 > 0 and s11 * s22 - s12 * s12 > 0):
            raise ValueError("block covariance is not positive definite")
        self.s11, self.s12, self.s22 = float(s11), float(s12), float(s22)
        self.n = int(n)
        self.shape = (2 * self.n, 2 * self.n)

    def __matmul__(self, v):
        v = np.asarray(v, dtype=float)
        v1, v2 = v[: self.n], v[self.n :]
        return np.concatenate([self.s11 * v1 + self.s12 * v2, self.s12 * v1 + self.s22 * v2])

    def to_dense(self):
        I = np.eye(self.n)
        return np.block([[self.s11 * I, self.s12 * I], [self.s12 * I, self.s22 * I]])


@dataclass
class PolyhedralConstraint:
    """The event ``{y : A y <= b}``. ``A`` may be dense or scipy-sparse."""

    A: object
    b: np.ndarray

    def __post_init__(self):
        if not sparse.issparse(self.A):
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("A and b are not conformable")

    @property
    def m(self):
        return self.A.shape[0]


def orthant_constraint(n):
    """``y > 0`` written as ``-I y <= 0``."""
    return PolyhedralConstraint(-sparse.identity(n, format="csr"), np.zeros(n))


def first_block_orthant(n1, n):
    """Positivity of the first ``n1`` coordinates of an ``n``-vector, ``[-I 0] y <= 0``."""
    A = sparse.hstack(
        [-sparse.identity(n1, format="csr"), sparse.csr_matrix((n1, n - n1))], format="csr"
    )
    return PolyhedralConstraint(A, np.zeros(n1))


@dataclass
class PivotContext:
    """Everything the pivot needs: the observed statistic, its variance and truncation."""

    eta_y: float
    variance: float
    v_minus: float = -math.inf
    v_plus: float = math.inf
    v_zero: float = math.inf
    eta: np.ndarray | None = None
    a_vec: np.ndarray | None = None

    def __post_init__(self):
        if not self.variance > 0:
            raise DegenerateDirection("eta' Sigma eta must be positive")

    @property
    def sd(self):
        return math.sqrt(self.variance)


@dataclass
class InferenceResult:
    """Interval and two-sided test for one target.

    ``alpha`` is the significance level; the interval has coverage ``1 - alpha``.
    """

    lower: float
    upper: float
    alpha: float
    pivot_value: float
    p_value: float
    reject: bool


def _as_cov(Sigma):
    if isinstance(Sigma, (ScaledIdentity, BlockCovariance)) or sparse.issparse(Sigma):
        return Sigma
    return np.atleast_2d(np.asarray(Sigma, dtype=float))


def _bounds(y, constraint, Sigma, eta, feas_tol):
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    Sigma = _as_cov(Sigma)
    Sigma_eta = Sigma @ eta
    var = float(eta @ Sigma_eta)
    if not var > 0:
        raise DegenerateDirection("eta' Sigma eta must be positive")
    eta_y = float(eta @ y)
    if constraint is None or constraint.m == 0:
        return eta_y, var, -math.inf, math.inf, math.inf, np.zeros(0)
    A, b = constraint.A, constraint.b
    slack = b - A @ y
    viol = np.flatnonzero(slack < -feas_tol)
    if viol.size:
        raise InfeasibleObservation(
            f"observation violates constraint {viol[0]} by {-slack[viol[0]]:.3g}"
        )
    a = np.asarray(A @ Sigma_eta).reshape(-1) / var
    amax = np.max(np.abs(a)) if a.size else 0.0
    zero = np.abs(a) <= TIE_TOL * amax
    pos = (a > 0) & ~zero
    neg = (a < 0) & ~zero
    v_plus = float(np.min(slack[pos] / a[pos] + eta_y)) if pos.any() else math.inf
    v_minus = float(np.max(slack[neg] / a[neg] + eta_y)) if neg.any() else -math.inf
    v_zero = float(np.min(slack[zero])) if zero.any() else math.inf
    return eta_y, var, v_minus, v_plus, v_zero, a


def truncation_bounds(y, constraint, Sigma, eta, feas_tol=1e-9):
    """Truncation interval of ``eta'y`` given ``A y <= b``.

    Parameters
    ----------
    y : array
        Observation, must satisfy the constraint to within ``feas_tol``.
    constraint : PolyhedralConstraint or None
        ``None`` (or zero rows) means unconstrained.
    Sigma : array, ScaledIdentity or BlockCovariance
        Covariance of ``y``.
    eta : array
        Target direction.

    Returns
    -------
    v_minus, v_plus, v_zero : float
        Lower and upper truncation for ``eta'y`` and the smallest slack among
        constraints that do not involve the ``eta`` direction. These equal the
        extent of the line ``{y + t Sigma eta}`` inside the polyhedron,
        expressed in units of ``eta'y``.
    """
    _, _, vm, vp, v0, _ = _bounds(y, constraint, Sigma, eta, feas_tol)
    return vm, vp, v0


def pivot_context(y, constraint, Sigma, eta, feas_tol=1e-9):
    eta_y, var, vm, vp, v0, a = _bounds(y, constraint, Sigma, eta, feas_tol)
    return PivotContext(
        eta_y=eta_y,
        variance=var,
        v_minus=vm,
        v_plus=vp,
        v_zero=v0,
        eta=np.asarray(eta, dtype=float),
        a_vec=a,
    )


def pivot(ctx, mu_target):
    """Truncated-normal CDF of the observed statistic at candidate mean ``mu_target``."""
    return tn_cdf(ctx.eta_y, mu_target, ctx.variance, ctx.v_minus, ctx.v_plus)


def _solve_decreasing(f, target, start, scale, tol, max_doublings=200):
    """Root of a decreasing function ``f(nu) = target`` by bracketing and bisection."""
    f0 = f(start)
    if f0 == target:
        return start
    # f decreasing: move right if f(start) > target
    direction = 1.0 if f0 > target else -1.0
    lo = start
    step = scale
    hi = start + direction * step
    for _ in range(max_doublings):
        fh = f(hi)
        if (fh - target) * direction <= 0:
            break
        lo = hi
        step *= 2.0
        hi = start + direction * step
        if not math.isfinite(hi):
            break
    else:
        hi = math.inf
    if not math.isfinite(hi):
        raise BracketFailure(
            "pivot saturates before reaching %g" % target, half_width=abs(lo - start)
        )
    a, b = (lo, hi) if lo < hi else (hi, lo)
    # invariant: f(a) >= target >= f(b)
    while b - a > tol:
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        if f(mid) > target:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def invert_interval(ctx, alpha, rtol=1e-9):
    """Equal-tailed ``1 - alpha`` interval by inverting the pivot in its mean.

    The pivot decreases in the candidate mean, so the lower endpoint solves
    ``pivot = 1 - alpha/2`` and the upper endpoint ``pivot = alpha/2``.
    Endpoints are accurate to ``rtol * sd`` in absolute terms.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    sd = ctx.sd
    f = lambda nu: pivot(ctx, nu)
    tol = rtol * sd
    lo = _solve_decreasing(f, 1.0 - alpha / 2.0, ctx.eta_y, sd, tol)
    hi = _solve_decreasing(f, alpha / 2.0, ctx.eta_y, sd, tol)
    return lo, hi


def naive_interval(ctx, alpha):
    """The classical interval ``eta'y +/- z sd`` that ignores truncation."""
    z = Phi_inv(1.0 - alpha / 2.0)
    return ctx.eta_y - z * ctx.sd, ctx.eta_y + z * ctx.sd


def _upper_tail(ctx, mu_target):
    # 1 - pivot without cancellation: reflect the truncated normal about zero
    return tn_cdf(-ctx.eta_y, -mu_target, ctx.variance, -ctx.v_plus, -ctx.v_minus)


def _decision(ctx, null_value, alpha):
    u = float(pivot(ctx, null_value))
    tail = min(u, float(_upper_tail(ctx, null_value)))
    reject = bool(u < alpha / 2.0 or u > 1.0 - alpha / 2.0)
    return u, reject, min(1.0, 2.0 * tail)


def significance_test(ctx, null_value=0.0, alpha=0.05):
    """Two-sided level-``alpha`` test of ``eta'mu = null_value`` plus the matching interval."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    u, reject, p = _decision(ctx, null_value, alpha)
    lo, hi = invert_interval(ctx, alpha)
    return InferenceResult(lower=lo, upper=hi, alpha=alpha, pivot_value=u, p_value=p, reject=reject)


def naive_test(ctx, null_value=0.0, alpha=0.05):
    """Classical z-test and interval, ignoring the truncation."""
    plain = PivotContext(eta_y=ctx.eta_y, variance=ctx.variance)
    u, reject, p = _decision(plain, null_value, alpha)
    lo, hi = naive_interval(ctx, alpha)
    return InferenceResult(lower=lo, upper=hi, alpha=alpha, pivot_value=u, p_value=p, reject=reject)


def pinv_directions(X):
    """Columns ``eta_j = pinv(X)' e_j`` for a full-column-rank ``X``.

    Uses ``pinv(X) = R^{-1} Q'`` from a thin QR factorization.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < p:
        raise RankDeficient(f"{n} rows for {p} columns")
    Q, R = np.linalg.qr(X, mode="reduced")
    d = np.abs(np.diag(R))
    if d.min() <= max(n, p) * np.finfo(float).eps * d.max():
        raise RankDeficient("uncensored design is rank deficient")
    return Q @ np.linalg.inv(R).T


def target_eta(kind, X_bar, j, sigma2=1.0, X2_bar=None, sigma2_2=None, sigma12=0.0):
    """Direction, covariance and constraint for inference on one coefficient.

    Parameters
    ----------
    kind : {"tobit1-beta", "tobit3-beta1", "tobit3-beta2"}
        ``tobit1-beta`` and ``tobit3-beta1`` act on the uncensored first-equation
        responses with covariance ``sigma2 * I`` and constraint ``-I y <= 0``.
        ``tobit3-beta2`` acts on the stacked vector ``(y1_bar, y2_bar)`` with the
        block covariance and constraint ``[-I 0] y <= 0``.
    X_bar : array
        Uncensored rows of the (first-equation) design.
    j : int
        Coefficient index.
    sigma2 : float
        First-equation error variance.
    X2_bar, sigma2_2, sigma12 : optional
        Outcome-equation design, error variance and error covariance
        (``tobit3-beta2`` only).

    Returns
    -------
    eta, Sigma, constraint
    """
    if kind in ("tobit1-beta", "tobit3-beta1"):
        E = pinv_directions(X_bar)
        if not 0 <= j < E.shape[1]:
            raise IndexError(f"coefficient index {j} out of range")
        n = E.shape[0]
        return E[:, j], ScaledIdentity(sigma2, n), orthant_constraint(n)
    if kind == "tobit3-beta2":
        if X2_bar is None or sigma2_2 is None:
            raise ValueError("tobit3-beta2 needs X2_bar and sigma2_2")
        E = pinv_directions(X2_bar)
        if not 0 <= j < E.shape[1]:
            raise IndexError(f"coefficient index {j} out of range")
        n = E.shape[0]
        eta = np.concatenate([np.zeros(n), E[:, j]])
        Sigma = BlockCovariance(sigma2, sigma12, sigma2_2, n)
        return eta, Sigma, first_block_orthant(n, 2 * n)
    raise ValueError(f"unknown target kind {kind!r}")
