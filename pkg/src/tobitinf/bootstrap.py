"""Parametric bootstrap for the outcome coefficients of the sample selection model.

The selection response is never observed in the Type 2 model, so the
truncation bounds of the exact pivot cannot be computed. Instead the
sampling distribution of the two-step estimate is simulated from the fitted
model and refit replicate by replicate.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPDCovariance, TobitError, TooManyFailures
from .normal_dist import Phi, Phi_inv, tn_quantile
from .two_step import Tobit2Data, fit_tobit2

__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "sample_selected_pair",
    "sample_selected_pairs",
    "simulate_tobit2",
    "percentile_interval",
    "bias_corrected_interval",
    "bootstrap_tobit2",
]

MAX_FAILURE_FRACTION = 0.05


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 1000
    seed: int = 0
    alpha: float = 0.05
    method: str = "bias-corrected"

    def __post_init__(self):
        if self.B < 100:
            raise ValueError("need at least 100 bootstrap replications")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.method not in ("percentile", "bias-corrected"):
            raise ValueError(f"unknown interval method {self.method!r}")


@dataclass
class BootstrapResult:
    estimate: float
    replicates: np.ndarray
    lower: float
    upper: float
    bias_correction_z0: float
    n_failed: int
    method: str
    alpha: float

    def to_dict(self):
        return {
            "estimate": self.estimate,
            "lower": self.lower,
            "upper": self.upper,
            "bias_correction_z0": self.bias_correction_z0,
            "n_replicates": int(self.replicates.size),
            "n_failed": self.n_failed,
            "method": self.method,
            "alpha": self.alpha,
        }


def _conditional_sd(sigma12, sigma2_2):
    v = sigma2_2 - sigma12**2
    if not v > 0:
        raise NonPDCovariance(
            f"sigma2^2 - sigma12^2 = {v:g}; the estimated error covariance is not positive definite"
        )
    return math.sqrt(v)


def sample_selected_pairs(X1, X2, alpha1, beta2, sigma12, sigma2_2, rng):
    """Draw (y1*, y2*) for every row, conditioned on y1* > 0.

    y1* is drawn from N(x1'alpha1, 1) truncated to (0, inf) by inverse CDF,
    then y2* from its conditional normal given y1*.
    """
    sd = _conditional_sd(sigma12, sigma2_2)
    m1 = np.asarray(X1, dtype=float) @ alpha1
    m2 = np.asarray(X2, dtype=float) @ beta2
    u = rng.uniform(size=m1.shape)
    # uniform draws of exactly 0 are impossible for numpy's generator, 1 is excluded
    y1 = tn_quantile(u, m1, 1.0, 0.0, math.inf)
    y1 = np.maximum(y1, np.nextafter(0.0, 1.0))
    y2 = m2 + sigma12 * (y1 - m1) + sd * rng.standard_normal(m1.shape)
    return y1, y2


def sample_selected_pair(x1row, x2row, alpha1, beta2, sigma12, sigma2_2, rng):
    """Single-row version of :func:`sample_selected_pairs`."""
    y1, y2 = sample_selected_pairs(
        np.atleast_2d(x1row), np.atleast_2d(x2row), alpha1, beta2, sigma12, sigma2_2, rng
    )
    return float(y1[0]), float(y2[0])


def simulate_tobit2(X1, X2, alpha1, beta2, sigma12, sigma2_2, rng):
    """A full Type 2 dataset from the fitted model.

    The latent selection response is drawn for all rows so the probit step of
    the refit sees both selected and unselected units. On selected rows the
    pairs follow the same law as :func:`sample_selected_pairs`.
    """
    sd = _conditional_sd(sigma12, sigma2_2)
    e1 = rng.standard_normal(X1.shape[0])
    z = (X1 @ alpha1 + e1 > 0).astype(float)
    y2 = X2 @ beta2 + sigma12 * e1 + sd * rng.standard_normal(X1.shape[0])
    return Tobit2Data(X1, z, X2, np.where(z == 1, y2, np.nan))


def percentile_interval(replicates, alpha):
    lo, hi = np.quantile(replicates, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def bias_corrected_interval(replicates, estimate, alpha):
    """Bias-corrected (BC) percentile interval.

    ``z0 = Phi^{-1}(share of replicates below the estimate)`` with ties
    counted as half, clamped to ``[0.5/B, 1 - 0.5/B]``. The interval takes the
    replicate quantiles at ``Phi(2 z0 -/+ z_{1 - alpha/2})``.

    Returns
    -------
    lower, upper, z0
    """
    r = np.asarray(replicates, dtype=float)
    B = r.size
    share = (np.sum(r < estimate) + 0.5 * np.sum(r == estimate)) / B
    share = min(max(share, 0.5 / B), 1.0 - 0.5 / B)
    z0 = float(Phi_inv(share))
    zc = float(Phi_inv(1.0 - alpha / 2.0))
    levels = [Phi(2 * z0 - zc), Phi(2 * z0 + zc)]
    lo, hi = np.quantile(r, levels)
    return float(lo), float(hi), z0


def _replicate(data, fit, j, seed, index):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    sim = simulate_tobit2(
        data.X1, data.X2, fit.alpha_hat, fit.beta_hat, fit.scale_hat, fit.sigma2_hat, rng
    )
    try:
        return float(fit_tobit2(sim).beta_hat[j])
    except TobitError:
        return math.nan


def bootstrap_tobit2(data, fit, j, config=BootstrapConfig(), n_jobs=1):
    """Parametric bootstrap interval for outcome coefficient ``j``.

    Each replicate uses its own generator seeded from ``(config.seed, index)``,
    so the replicate vector does not depend on ``n_jobs``. Replicates whose
    refit fails are dropped and counted; more than 5% failures raises
    ``TooManyFailures``.
    """
    _conditional_sd(fit.scale_hat, fit.sigma2_hat)
    if n_jobs == 1:
        reps = [_replicate(data, fit, j, config.seed, b) for b in range(config.B)]
    else:
        from joblib import Parallel, delayed

        reps = Parallel(n_jobs=n_jobs)(
            delayed(_replicate)(data, fit, j, config.seed, b) for b in range(config.B)
        )
    reps = np.asarray(reps)
    ok = np.isfinite(reps)
    n_failed = int(np.sum(~ok))
    if n_failed > MAX_FAILURE_FRACTION * config.B:
        raise TooManyFailures(f"{n_failed} of {config.B} bootstrap refits failed")
    reps = reps[ok]
    estimate = float(fit.beta_hat[j])
    if config.method == "percentile":
        lo, hi = percentile_interval(reps, config.alpha)
        z0 = 0.0
    else:
        lo, hi, z0 = bias_corrected_interval(reps, estimate, config.alpha)
    return BootstrapResult(
        estimate=estimate,
        replicates=reps,
        lower=lo,
        upper=hi,
        bias_correction_z0=z0,
        n_failed=n_failed,
        method=config.method,
        alpha=config.alpha,
    )
