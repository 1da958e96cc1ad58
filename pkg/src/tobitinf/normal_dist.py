"""Gaussian and truncated-Gaussian primitives.

All routines work in standardized units and evaluate tail probabilities in
log space, so truncation intervals lying tens of standard deviations out
still give finite, accurate answers.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DegenerateTruncation

__all__ = [
    "TruncatedNormalParams",
    "phi",
    "Phi",
    "Phi_inv",
    "log_Phi",
    "inverse_mills",
    "truncnorm_cdf",
    "truncnorm_quantile",
    "tn_cdf",
    "tn_quantile",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class TruncatedNormalParams:
    """N(mu, sigma2) restricted to the interval [lo, hi].

    ``lo`` and ``hi`` may be ``-inf`` / ``+inf``.
    """

    mu: float
    sigma2: float
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2}")
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)


def _scalar_or_array(out):
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def phi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(np.exp(-0.5 * x * x - _LOG_SQRT_2PI))


def Phi(x):
    """Standard normal CDF (erfc based, accurate in both tails)."""
    return _scalar_or_array(special.ndtr(np.asarray(x, dtype=float)))


def log_Phi(x):
    return _scalar_or_array(special.log_ndtr(np.asarray(x, dtype=float)))


def Phi_inv(p):
    """Standard normal quantile. Rejects ``p`` outside the open unit interval."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("Phi_inv requires 0 < p < 1")
    return _scalar_or_array(special.ndtri(p))


def inverse_mills(x):
    """phi(x) / (1 - Phi(x)).

    Uses the scaled complementary error function, ``1 - Phi(x) =
    erfcx(x/sqrt2) * phi(x) * sqrt(pi/2)``, so the ratio never forms 0/0 for
    large ``x``. For ``x`` below about -37 the true value is smaller than the
    least positive double and 0.0 is returned.
    """
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(_SQRT_2_OVER_PI / special.erfcx(x / math.sqrt(2.0)))


def _standardize(x, mu, sigma2, lo, hi):
    x, mu, sigma2, lo, hi = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (x, mu, sigma2, lo, hi))
    )
    s = np.sqrt(sigma2)
    a = (lo - mu) / s
    b = (hi - mu) / s
    z = (x - mu) / s
    return z, a, b


def _log_masses(a, b):
    """Pieces of the interval mass, picking the side where it does not cancel.

    Returns ``(upper, lead, rel)``. On ``upper`` entries, ``lead`` is
    ``log(1 - Phi(a))`` and the mass is ``exp(lead) * rel``; otherwise ``lead``
    is ``log Phi(b)`` with the same convention.
    """
    with np.errstate(invalid="ignore"):
        upper = (a + b) > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        la = special.log_ndtr(-a)
        lb = special.log_ndtr(-b)
        La = special.log_ndtr(a)
        Lb = special.log_ndtr(b)
        rel_upper = -np.expm1(lb - la)
        rel_lower = -np.expm1(La - Lb)
    lead = np.where(upper, la, Lb)
    rel = np.where(upper, rel_upper, rel_lower)
    return upper, lead, rel


def tn_cdf(x, mu, sigma2, lo=-math.inf, hi=math.inf):
    """Vectorized CDF of N(mu, sigma2) truncated to [lo, hi].

    ``x`` outside the interval is clamped. Raises ``DegenerateTruncation`` if
    the interval carries no representable mass.
    """
    z, a, b = _standardize(x, mu, sigma2, lo, hi)
    upper, _, rel = _log_masses(a, b)
    if np.any(~(rel > 0)):
        raise DegenerateTruncation("truncation interval has no probability mass")
    zc = np.clip(z, a, b)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        # upper side: [S(a) - S(z)] / [S(a) - S(b)], S = 1 - Phi
        la = special.log_ndtr(-a)
        num_u = -np.expm1(special.log_ndtr(-zc) - la)
        f_upper = num_u / rel
        # lower side: [Phi(z) - Phi(a)] / [Phi(b) - Phi(a)]
        Lz = special.log_ndtr(zc)
        num_l = np.exp(Lz - special.log_ndtr(b)) * -np.expm1(special.log_ndtr(a) - Lz)
        f_lower = num_l / rel
    out = np.where(upper, f_upper, f_lower)
    out = np.where(z <= a, 0.0, np.where(z >= b, 1.0, out))
    return _scalar_or_array(np.clip(out, 0.0, 1.0))


def tn_quantile(p, mu, sigma2, lo=-math.inf, hi=math.inf):
    """Vectorized inverse of :func:`tn_cdf` for 0 < p < 1."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise ValueError("quantile requires 0 < p < 1")
    p_arr, mu, sigma2, lo, hi = np.broadcast_arrays(
        p_arr, *(np.asarray(v, dtype=float) for v in (mu, sigma2, lo, hi))
    )
    _, a, b = _standardize(0.0, mu, sigma2, lo, hi)
    upper, lead, rel = _log_masses(a, b)
    if np.any(~(rel > 0)):
        raise DegenerateTruncation("truncation interval has no probability mass")
    with np.errstate(invalid="ignore", divide="ignore"):
        # S(z) = S(a) * (1 - p * rel)
        z_upper = -special.ndtri_exp(lead + np.log1p(-p_arr * rel))
        # Phi(z) = Phi(b) * (r + p * (1 - r)), r = Phi(a)/Phi(b) = 1 - rel
        z_lower = special.ndtri_exp(lead + np.log1p(-(1.0 - p_arr) * rel))
    z = np.clip(np.where(upper, z_upper, z_lower), a, b)
    return _scalar_or_array(mu + np.sqrt(sigma2) * z)


def truncnorm_cdf(x, params):
    """CDF at ``x`` of the truncated normal described by ``params``."""
    return tn_cdf(x, params.mu, params.sigma2, params.lo, params.hi)


def truncnorm_quantile(p, params):
    """Quantile at level ``p`` of the truncated normal described by ``params``."""
    return tn_quantile(p, params.mu, params.sigma2, params.lo, params.hi)
