"""Data generators and Monte Carlo drivers for the validation studies.

Every driver derives one generator per replication from ``(seed, index)``,
so results do not depend on the number of workers.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

from .bootstrap import BootstrapConfig, bootstrap_tobit2
from .errors import (
    AcceptanceTooLow,
    NonPDCovariance,
    NumericalError,
    TobitError,
    TooManyFailures,
)
from .normal_dist import Phi_inv
from .polyhedral_pivot import (
    PivotContext,
    ScaledIdentity,
    invert_interval,
    naive_interval,
    pinv_directions,
    pivot,
    pivot_context,
    target_eta,
)
from .two_step import (
    Tobit1Data,
    Tobit2Data,
    Tobit3Data,
    fit_tobit1,
    fit_tobit2,
    fit_tobit3,
    ls_standard_errors,
)

__all__ = [
    "SimDesign",
    "KSReport",
    "CoverageReport",
    "replication_rng",
    "draw_coefficients",
    "gen_tobit1",
    "gen_tobit2",
    "gen_tobit3",
    "rejection_sample_conditional",
    "pivot_uniformity_experiment",
    "coverage_experiment",
    "interval_width_curve",
    "binomial_band",
    "write_csv",
    "write_json",
]

MIN_ACCEPTANCE = 1e-4
MAX_FAILURE_FRACTION = 0.05


@dataclass
class SimDesign:
    """Parameters of a simulation study.

    Coefficients left as ``None`` are drawn i.i.d. N(0, 1) per replication and
    multiplied by ``signal``. ``selection_scale`` further multiplies the drawn
    selection-equation coefficients of the Type 2 model; ``None`` means
    ``1/sqrt(p1)``, which gives the selection index unit variance.
    """

    n: int = 100
    p: int = 10
    p2: int | None = None
    beta: np.ndarray | None = None
    beta2: np.ndarray | None = None
    sigma2: float = 1.0
    sigma2_2: float = 1.0
    sigma12: float = 0.0
    signal: float = 1.0
    selection_scale: float | None = None
    design: str = "standard-gaussian"
    seed: int = 0
    replications: int = 1000

    def __post_init__(self):
        if self.p2 is None:
            self.p2 = self.p
        if not self.n > max(self.p, self.p2):
            raise ValueError("need n > p")
        if self.design != "standard-gaussian":
            raise ValueError(f"unsupported design {self.design!r}")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        for name in ("beta", "beta2"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))

    def check_pd(self):
        if not (
            self.sigma2 > 0
            and self.sigma2_2 > 0
            and self.sigma2 * self.sigma2_2 - self.sigma12**2 > 0
        ):
            raise NonPDCovariance(
                "error covariance [[%g, %g], [%g, %g]] is not positive definite"
                % (self.sigma2, self.sigma12, self.sigma12, self.sigma2_2)
            )

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d


def replication_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _child_seed(seed, index):
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def draw_coefficients(given, size, scale, rng):
    if given is not None:
        return np.array(given, dtype=float)
    return scale * rng.standard_normal(size)


def gen_tobit1(design, rng):
    """Standard Tobit data, ``y = max(0, X beta + eps)``, ``eps ~ N(0, sigma2 I)``."""
    n, p = design.n, design.p
    beta = draw_coefficients(design.beta, p, design.signal, rng)
    X = rng.standard_normal((n, p))
    y_star = X @ beta + math.sqrt(design.sigma2) * rng.standard_normal(n)
    y = np.maximum(y_star, 0.0)
    return Tobit1Data(X, y), {"beta": beta, "y_star": y_star}


def _bivariate_errors(design, n, rng):
    design.check_pd()
    L = np.linalg.cholesky(
        np.array([[design.sigma2, design.sigma12], [design.sigma12, design.sigma2_2]])
    )
    e = rng.standard_normal((n, 2)) @ L.T
    return e[:, 0], e[:, 1]


def gen_tobit3(design, rng):
    """Type 3 data: y1 censored at zero, y2 observed where y1* > 0."""
    design.check_pd()
    n = design.n
    beta1 = draw_coefficients(design.beta, design.p, design.signal, rng)
    beta2 = draw_coefficients(design.beta2, design.p2, design.signal, rng)
    X1 = rng.standard_normal((n, design.p))
    X2 = rng.standard_normal((n, design.p2))
    e1, e2 = _bivariate_errors(design, n, rng)
    y1s = X1 @ beta1 + e1
    y2s = X2 @ beta2 + e2
    sel = y1s > 0
    data = Tobit3Data(X1, np.where(sel, y1s, 0.0), X2, np.where(sel, y2s, 0.0))
    return data, {"beta1": beta1, "beta2": beta2, "y1_star": y1s, "y2_star": y2s}


def gen_tobit2(design, rng):
    """Sample selection data; the selection error variance is fixed at ``design.sigma2``."""
    design.check_pd()
    n = design.n
    sel_scale = design.selection_scale
    if sel_scale is None:
        sel_scale = 1.0 / math.sqrt(design.p)
    beta1 = draw_coefficients(design.beta, design.p, design.signal * sel_scale, rng)
    beta2 = draw_coefficients(design.beta2, design.p2, design.signal, rng)
    X1 = rng.standard_normal((n, design.p))
    X2 = rng.standard_normal((n, design.p2))
    e1, e2 = _bivariate_errors(design, n, rng)
    y1s = X1 @ beta1 + e1
    y2s = X2 @ beta2 + e2
    z = (y1s > 0).astype(float)
    data = Tobit2Data(X1, z, X2, np.where(z == 1, y2s, np.nan))
    return data, {"beta1": beta1, "beta2": beta2, "y1_star": y1s, "y2_star": y2s}


def _is_axis_aligned(constraint, Sigma):
    """Constraints that each touch one coordinate, with independent coordinates."""
    from scipy import sparse

    A = constraint.A
    A = A.toarray() if sparse.issparse(A) else np.asarray(A)
    if np.any(np.count_nonzero(A, axis=1) != 1):
        return False
    return bool(np.allclose(Sigma, np.diag(np.diag(Sigma))))


def rejection_sample_conditional(mu, Sigma, constraint, count, rng, batch=None):
    """Draws from N(mu, Sigma) conditioned on ``A y <= b`` by accept/reject.

    When every constraint involves a single coordinate and ``Sigma`` is
    diagonal, the event factorizes and each coordinate is accepted or
    rejected on its own, which is the same law at a far higher acceptance
    rate.

    Raises
    ------
    AcceptanceTooLow
        If the estimated acceptance probability (per coordinate in the
        factorized case) is below 1e-4.
    """
    mu = np.asarray(mu, dtype=float)
    if isinstance(Sigma, ScaledIdentity):
        Sigma = Sigma.to_dense()
    elif hasattr(Sigma, "to_dense"):
        Sigma = Sigma.to_dense()
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    d = mu.size
    if count <= 0:
        return np.empty((0, d))
    if constraint is None or constraint.m == 0:
        L = np.linalg.cholesky(Sigma)
        return mu + rng.standard_normal((count, d)) @ L.T
    if _is_axis_aligned(constraint, Sigma):
        return _sample_axis_aligned(mu, np.sqrt(np.diag(Sigma)), constraint, count, rng)
    L = np.linalg.cholesky(Sigma)
    A, b = constraint.A, constraint.b
    batch = batch or max(1000, 2 * count)
    out = []
    have = drawn = 0
    while have < count:
        y = mu + rng.standard_normal((batch, d)) @ L.T
        ok = np.all((A @ y.T).T <= b, axis=1)
        drawn += batch
        out.append(y[ok])
        have += int(ok.sum())
        if have / drawn < MIN_ACCEPTANCE:
            raise AcceptanceTooLow(
                f"acceptance rate {have / drawn:.2e} below {MIN_ACCEPTANCE:g}", rate=have / drawn
            )
    return np.concatenate(out)[:count]


def _sample_axis_aligned(mu, sd, constraint, count, rng):
    from scipy import sparse

    A = constraint.A
    A = A.toarray() if sparse.issparse(A) else np.asarray(A)
    d = mu.size
    lo = np.full(d, -math.inf)
    hi = np.full(d, math.inf)
    rows, cols = np.nonzero(A)
    for r, c in zip(rows, cols):
        bound = constraint.b[r] / A[r, c]
        if A[r, c] > 0:
            hi[c] = min(hi[c], bound)
        else:
            lo[c] = max(lo[c], bound)
    rate = special.ndtr((hi - mu) / sd) - special.ndtr((lo - mu) / sd)
    if np.any(rate < MIN_ACCEPTANCE):
        worst = float(rate.min())
        raise AcceptanceTooLow(
            f"per-coordinate acceptance rate {worst:.2e} below {MIN_ACCEPTANCE:g}", rate=worst
        )
    out = np.empty((count, d))
    for k in range(d):
        need = count
        filled = 0
        while need:
            m = int(need / rate[k] * 1.1) + 16
            x = mu[k] + sd[k] * rng.standard_normal(m)
            x = x[(x >= lo[k]) & (x <= hi[k])][:need]
            out[filled : filled + x.size, k] = x
            filled += x.size
            need -= x.size
    return out


@dataclass
class KSReport:
    statistic: float
    critical_value: float
    passed: bool
    count: int
    p_value: float
    pivots: np.ndarray = field(repr=False)
    design: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "passed": self.passed,
            "count": self.count,
            "p_value": self.p_value,
            "design": self.design,
        }


def ks_critical_value(count, level=0.01):
    """Asymptotic Kolmogorov critical value, about 1.63/sqrt(count) at the 1% level."""
    return float(special.kolmogi(level) / math.sqrt(count))


def pivot_uniformity_experiment(design, count=10_000, j=0, mu_shift=0.0, level=0.01):
    """Empirical distribution of the Type 1 pivot under repeated conditional sampling.

    One dataset is generated and its uncensored design held fixed. ``count``
    responses are drawn from N(X_bar beta, sigma2 I) conditioned on positivity
    and the pivot for coefficient ``j`` is evaluated at the true coefficient
    plus ``mu_shift`` standard deviations of ``eta'y``.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(design.seed)
    data, truth = gen_tobit1(design, rng)
    sel = data.selected
    X_bar = data.X[sel]
    mu_bar = X_bar @ truth["beta"]
    eta, Sigma, constraint = target_eta("tobit1-beta", X_bar, j, sigma2=design.sigma2)
    sd = math.sqrt(design.sigma2) * float(np.linalg.norm(eta))
    target = float(truth["beta"][j]) + mu_shift * sd
    samples = rejection_sample_conditional(mu_bar, Sigma, constraint, count, rng)
    u = np.empty(count)
    for i, y in enumerate(samples):
        u[i] = pivot(pivot_context(y, constraint, Sigma, eta), target)
    ks = stats.kstest(u, "uniform")
    crit = ks_critical_value(count, level)
    return KSReport(
        statistic=float(ks.statistic),
        critical_value=crit,
        passed=bool(ks.statistic < crit),
        count=count,
        p_value=float(ks.pvalue),
        pivots=u,
        design={**design.to_dict(), "j": j, "mu_shift": mu_shift, "n_selected": int(sel.sum())},
    )


def binomial_band(p, reps, level=0.99):
    """Central region holding ``level`` of the Binomial(reps, p) proportion."""
    tail = (1.0 - level) / 2.0
    lo = stats.binom.ppf(tail, reps, p) / reps
    hi = stats.binom.isf(tail, reps, p) / reps
    return float(lo), float(hi)


@dataclass
class CoverageReport:
    """Coverage of the corrected interval and two comparators.

    ``normal`` is the untruncated z interval with the same variance as the
    pivot; ``twostep`` is the textbook least-squares interval around the
    two-step estimate. ``twostep`` statistics run over replications whose
    two-step fit succeeded (``n_twostep``).
    """

    model: str
    alpha: float
    rows: list
    n_success: int
    n_failed: int
    coverage: float
    band: tuple
    median_width: float
    normal_coverage: float
    median_normal_width: float
    twostep_coverage: float
    median_twostep_width: float
    n_twostep: int
    design: dict = field(default_factory=dict)

    @property
    def in_band(self):
        return self.band[0] <= self.coverage <= self.band[1]

    def to_dict(self):
        return {
            "model": self.model,
            "alpha": self.alpha,
            "n_success": self.n_success,
            "n_failed": self.n_failed,
            "coverage": self.coverage,
            "band": list(self.band),
            "in_band": self.in_band,
            "median_width": self.median_width,
            "normal_coverage": self.normal_coverage,
            "median_normal_width": self.median_normal_width,
            "twostep_coverage": self.twostep_coverage,
            "median_twostep_width": self.median_twostep_width,
            "n_twostep": self.n_twostep,
            "design": self.design,
        }


COVERAGE_MODELS = ("tobit1", "tobit3-beta1", "tobit3-beta2", "tobit2-bootstrap")


def _twostep_interval(fit, j, alpha):
    se, _ = ls_standard_errors(fit)
    z = float(Phi_inv(1.0 - alpha / 2.0))
    b = float(fit.gamma_hat[j])
    return b, b - z * se[j], b + z * se[j]


def _try_fit(fitter, data):
    try:
        return fitter(data)
    except TobitError:
        return None


def _coverage_one(model, design, alpha, j, index, sigma_known, boot_B):
    rng = replication_rng(design.seed, index)
    row = {"replication": index, "error": ""}
    twostep = None
    try:
        if model == "tobit1":
            data, truth = gen_tobit1(design, rng)
            fit = _try_fit(fit_tobit1, data)
            twostep = fit
            if sigma_known:
                s2 = design.sigma2
            elif fit is None:
                raise NumericalError("plug-in variance needs a two-step fit")
            else:
                s2 = fit.scale_hat**2
            sel = data.selected
            eta, Sigma, con = target_eta("tobit1-beta", data.X[sel], j, sigma2=s2)
            y = data.y[sel]
            true_value = truth["beta"][j]
        elif model in ("tobit3-beta1", "tobit3-beta2"):
            data, truth = gen_tobit3(design, rng)
            fits = _try_fit(fit_tobit3, data)
            if sigma_known:
                s11, s12, s22 = design.sigma2, design.sigma12, design.sigma2_2
            elif fits is None:
                raise NumericalError("plug-in variance needs a two-step fit")
            else:
                s11 = fits[0].scale_hat**2
                s12 = fits[1].extra["sigma12_hat"]
                s22 = fits[1].sigma2_hat
            sel = data.selected
            if model == "tobit3-beta1":
                twostep = fits[0] if fits else None
                eta, Sigma, con = target_eta("tobit3-beta1", data.X1[sel], j, sigma2=s11)
                y = data.y1[sel]
                true_value = truth["beta1"][j]
            else:
                twostep = fits[1] if fits else None
                eta, Sigma, con = target_eta(
                    "tobit3-beta2",
                    data.X1[sel],
                    j,
                    sigma2=s11,
                    X2_bar=data.X2[sel],
                    sigma2_2=s22,
                    sigma12=s12,
                )
                y = np.concatenate([data.y1[sel], data.y2[sel]])
                true_value = truth["beta2"][j]
        elif model == "tobit2-bootstrap":
            data, truth = gen_tobit2(design, rng)
            fit = fit_tobit2(data)
            twostep = fit
            sel = data.selected
            res = bootstrap_tobit2(
                data, fit, j, BootstrapConfig(B=boot_B, seed=_child_seed(design.seed, index), alpha=alpha)
            )
            E = pinv_directions(data.X2[sel])
            s22 = design.sigma2_2 if sigma_known else fit.sigma2_hat
            ctx = PivotContext(
                eta_y=float(E[:, j] @ data.y2[sel]),
                variance=s22 * float(E[:, j] @ E[:, j]),
            )
            lo, hi = res.lower, res.upper
            true_value = truth["beta2"][j]
            row.update(z0=res.bias_correction_z0, n_boot_failed=res.n_failed)
        else:
            raise ValueError(f"unknown coverage model {model!r}")
        if model != "tobit2-bootstrap":
            ctx = pivot_context(y, con, Sigma, eta)
            lo, hi = invert_interval(ctx, alpha)
            row.update(v_minus=ctx.v_minus, v_plus=ctx.v_plus)
        nlo, nhi = naive_interval(ctx, alpha)
    except TobitError as exc:
        row["error"] = type(exc).__name__
        return row
    tv = float(true_value)
    row.update(
        truth=tv,
        eta_y=ctx.eta_y,
        lower=float(lo),
        upper=float(hi),
        covered=bool(lo <= tv <= hi),
        width=float(hi - lo),
        normal_lower=float(nlo),
        normal_upper=float(nhi),
        normal_covered=bool(nlo <= tv <= nhi),
        normal_width=float(nhi - nlo),
    )
    if twostep is not None:
        est, tlo, thi = _twostep_interval(twostep, j, alpha)
        row.update(
            estimate=est,
            twostep_lower=tlo,
            twostep_upper=thi,
            twostep_covered=bool(tlo <= tv <= thi),
            twostep_width=thi - tlo,
        )
    return row


def coverage_experiment(
    model, design, alpha=0.05, j=0, sigma_known=True, boot_B=1000, n_jobs=1, band_level=0.99
):
    """Empirical coverage of corrected intervals for coefficient ``j``.

    Parameters
    ----------
    model : {"tobit1", "tobit3-beta1", "tobit3-beta2", "tobit2-bootstrap"}
    design : SimDesign
    alpha : float
        Intervals have nominal coverage ``1 - alpha``.
    sigma_known : bool
        Use the true error (co)variances in the pivot; otherwise plug in the
        two-step estimates.
    boot_B : int
        Bootstrap replications per dataset for ``tobit2-bootstrap``.

    Replications where the corrected interval cannot be formed are excluded
    and counted. With known variances the pivot does not depend on the
    two-step fit, so a failed fit only removes the ``twostep`` comparator.

    Raises
    ------
    TooManyFailures
        If more than 5% of replications fail to produce a corrected interval.
    """
    if model not in COVERAGE_MODELS:
        raise ValueError(f"unknown coverage model {model!r}")
    args = (model, design, alpha, j)
    idx = range(design.replications)
    if n_jobs == 1:
        rows = [_coverage_one(*args, i, sigma_known, boot_B) for i in idx]
    else:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs)(
            delayed(_coverage_one)(*args, i, sigma_known, boot_B) for i in idx
        )
    good = [r for r in rows if not r["error"]]
    n_failed = len(rows) - len(good)
    if n_failed > MAX_FAILURE_FRACTION * len(rows):
        raise TooManyFailures(f"{n_failed} of {len(rows)} replications failed")
    ts = [r for r in good if "twostep_covered" in r]

    def mean_of(rs, key):
        return float(np.mean([r[key] for r in rs])) if rs else math.nan

    def median_of(rs, key):
        return float(np.median([r[key] for r in rs])) if rs else math.nan

    return CoverageReport(
        model=model,
        alpha=alpha,
        rows=rows,
        n_success=len(good),
        n_failed=n_failed,
        coverage=mean_of(good, "covered"),
        band=binomial_band(1.0 - alpha, len(good), band_level),
        median_width=median_of(good, "width"),
        normal_coverage=mean_of(good, "normal_covered"),
        median_normal_width=median_of(good, "normal_width"),
        twostep_coverage=mean_of(ts, "twostep_covered"),
        median_twostep_width=median_of(ts, "twostep_width"),
        n_twostep=len(ts),
        design={**design.to_dict(), "j": j, "sigma_known": sigma_known},
    )


TRUNCATIONS = {
    "lower": (-3.0, math.inf),
    "both": (-3.0, 3.0),
}


def interval_width_curve(sigma=1.0, truncation="both", grid=None, alpha=0.05):
    """Corrected and normal intervals for a scalar truncated normal observation.

    ``truncation`` is ``"lower"`` for [-3 sigma, inf), ``"both"`` for
    [-3 sigma, 3 sigma], or an explicit ``(lo, hi)`` pair in units of sigma.
    Returns one dict per grid point ``x / sigma``.
    """
    lo_s, hi_s = TRUNCATIONS[truncation] if isinstance(truncation, str) else truncation
    if grid is None:
        top = hi_s if math.isfinite(hi_s) else 6.0
        grid = np.linspace(lo_s + 0.05, top - 0.05, 119)
    z = float(Phi_inv(1.0 - alpha / 2.0))
    rows = []
    for g in np.asarray(grid, dtype=float):
        x = g * sigma
        ctx = PivotContext(eta_y=x, variance=sigma**2, v_minus=lo_s * sigma, v_plus=hi_s * sigma)
        clo, chi = invert_interval(ctx, alpha)
        rows.append(
            {
                "x_over_sigma": float(g),
                "corrected_lower": clo,
                "corrected_upper": chi,
                "normal_lower": x - z * sigma,
                "normal_upper": x + z * sigma,
                "width_ratio": (chi - clo) / (2 * z * sigma),
            }
        )
    return rows


def write_csv(rows, path):
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})


def write_json(obj, path, pretty=False):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2 if pretty else None, sort_keys=True)
        fh.write("\n")
