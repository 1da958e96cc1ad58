import math

import numpy as np
import pytest

from tobitinf.errors import (
    InvariantViolation,
    NonPositiveVariance,
    RankDeficient,
    TooFewUncensored,
)
from tobitinf.normal_dist import Phi, inverse_mills, phi
from tobitinf.probit import fit_probit
from tobitinf.simulate import SimDesign, gen_tobit1, gen_tobit2, gen_tobit3, replication_rng
from tobitinf.two_step import (
    Tobit1Data,
    Tobit2Data,
    Tobit3Data,
    aft_data,
    aft_transform,
    correction_column,
    fit_tobit1,
    fit_tobit2,
    fit_tobit3,
    ls_standard_errors,
    lstsq_qr,
)


def _tobit1(n=400, p=3, seed=1):
    return gen_tobit1(SimDesign(n=n, p=p, seed=seed), replication_rng(seed, 0))


def test_correction_column_is_truncated_mean():
    # E[e | e > -c] = phi(c) / Phi(c)
    c = np.array([-3.0, -0.5, 0.0, 1.2, 6.0])
    np.testing.assert_allclose(correction_column(c), phi(c) / Phi(c), rtol=1e-13)
    np.testing.assert_allclose(correction_column(c), inverse_mills(-c), rtol=0)


def test_correction_column_monte_carlo(rng):
    e = rng.normal(size=2_000_000)
    for c in (-0.7, 0.4):
        sub = e[e > -c]
        assert abs(sub.mean() - correction_column(c)) < 4 * sub.std() / math.sqrt(sub.size)


def test_type1_fields_and_orthogonality():
    data, _ = _tobit1()
    fit = fit_tobit1(data)
    sel = data.selected
    np.testing.assert_array_equal(fit.selected_rows, np.flatnonzero(sel))
    np.testing.assert_allclose(fit.lambda_hat, correction_column(data.X[sel] @ fit.alpha_hat))
    np.testing.assert_array_equal(fit.Z_hat[:, :-1], data.X[sel])
    # least-squares normal equations: residuals orthogonal to the design
    r = fit.residuals
    assert np.max(np.abs(fit.Z_hat.T @ r)) <= 1e-10 * np.linalg.norm(fit.Z_hat) * np.linalg.norm(fit.y_bar)
    # the probit step is the plain probit fit of the censoring indicator
    pf = fit_probit(data.X, sel.astype(float))
    np.testing.assert_allclose(fit.alpha_hat, pf.alpha_hat, rtol=1e-12)
    assert fit.beta_hat.shape == (3,)
    assert fit.scale_hat == fit.gamma_hat[-1]


def test_scale_equivariance():
    data, _ = _tobit1()
    fit = fit_tobit1(data)
    for c in (0.1, 3.0, 1e3):
        scaled = fit_tobit1(Tobit1Data(data.X, c * data.y))
        np.testing.assert_array_equal(scaled.alpha_hat, fit.alpha_hat)
        np.testing.assert_allclose(scaled.gamma_hat, c * fit.gamma_hat, rtol=1e-10)


def test_lstsq_matches_normal_equations(rng):
    Z = rng.normal(size=(50, 4))
    y = rng.normal(size=50)
    g = lstsq_qr(Z, y)
    np.testing.assert_allclose(Z.T @ Z @ g, Z.T @ y, atol=1e-10)


def test_lstsq_rank_deficient(rng):
    Z = rng.normal(size=(20, 3))
    Z = np.column_stack([Z, Z[:, 0] + Z[:, 1]])
    with pytest.raises(RankDeficient):
        lstsq_qr(Z, rng.normal(size=20))


def test_ls_standard_errors_match_textbook(rng):
    data, _ = _tobit1()
    fit = fit_tobit1(data)
    se, s2 = ls_standard_errors(fit)
    Z = fit.Z_hat
    ref_s2 = np.sum(fit.residuals**2) / (Z.shape[0] - Z.shape[1])
    assert s2 == pytest.approx(ref_s2, rel=1e-12)
    np.testing.assert_allclose(se, np.sqrt(ref_s2 * np.diag(np.linalg.inv(Z.T @ Z))), rtol=1e-10)


def test_type3_duplicate_reduces_to_type1():
    data, _ = _tobit1()
    t1 = fit_tobit1(data)
    f1, f2 = fit_tobit3(Tobit3Data(data.X, data.y, data.X, data.y))
    np.testing.assert_allclose(f1.gamma_hat, t1.gamma_hat, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(f2.gamma_hat, t1.gamma_hat, rtol=1e-10, atol=1e-12)
    # eps1 = eps2: tau = sigma1, sigma12 = sigma1^2
    assert f2.extra["tau_hat"] == pytest.approx(t1.scale_hat, rel=1e-10)
    assert f2.extra["sigma12_hat"] == pytest.approx(t1.scale_hat**2, rel=1e-10)


def test_type1_consistency_large_n():
    design = SimDesign(n=100_000, p=5, seed=11)
    data, truth = gen_tobit1(design, replication_rng(11, 0))
    fit = fit_tobit1(data)
    assert np.max(np.abs(fit.beta_hat - truth["beta"])) <= 0.05
    assert fit.scale_hat == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("sigma12", [0.0, 0.5, -0.6])
def test_type3_consistency_large_n(sigma12):
    design = SimDesign(n=100_000, p=4, sigma12=sigma12, sigma2_2=1.5, seed=3)
    data, truth = gen_tobit3(design, replication_rng(3, 0))
    f1, f2 = fit_tobit3(data)
    assert np.max(np.abs(f1.beta_hat - truth["beta1"])) <= 0.05
    assert np.max(np.abs(f2.beta_hat - truth["beta2"])) <= 0.05
    assert f2.extra["tau_hat"] == pytest.approx(sigma12, abs=0.05)
    assert f2.sigma2_hat == pytest.approx(1.5, abs=0.1)


def test_type2_consistency_large_n():
    design = SimDesign(n=100_000, p=4, sigma12=0.5, seed=4)
    data, truth = gen_tobit2(design, replication_rng(4, 0))
    fit = fit_tobit2(data)
    assert np.max(np.abs(fit.beta_hat - truth["beta2"])) <= 0.05
    assert fit.extra["tau_hat"] == pytest.approx(0.5, abs=0.05)
    assert fit.sigma2_hat == pytest.approx(1.0, abs=0.1)


def test_type2_matches_type3_outcome_equation():
    design = SimDesign(n=2000, p=3, sigma12=0.4, seed=8)
    data, _ = gen_tobit3(design, replication_rng(8, 0))
    _, f2 = fit_tobit3(data)
    z = data.selected.astype(float)
    fit = fit_tobit2(Tobit2Data(data.X1, z, data.X2, np.where(z == 1, data.y2, np.nan)))
    # Type 3 sigma1 is not normalized, but the outcome equation only uses alpha
    np.testing.assert_allclose(fit.gamma_hat, f2.gamma_hat, rtol=1e-12)
    assert fit.sigma2_hat == pytest.approx(f2.sigma2_hat, rel=1e-12)


def test_consistency_drift():
    errs = {}
    for n in (1_000, 10_000, 100_000):
        e = []
        for i in range(7):
            design = SimDesign(n=n, p=3, seed=100 + i, beta=np.array([1.0, -0.5, 0.25]))
            data, truth = gen_tobit1(design, replication_rng(design.seed, 0))
            e.append(np.max(np.abs(fit_tobit1(data).beta_hat - truth["beta"])))
        errs[n] = np.median(e)
    assert errs[1_000] > errs[10_000] > errs[100_000]


def test_tobit1_invariants():
    with pytest.raises(InvariantViolation, match="negative at row 1"):
        Tobit1Data(np.ones((3, 1)), [0.0, -1.0, 2.0])
    with pytest.raises(InvariantViolation):
        Tobit1Data(np.ones((3, 1)), [0.0, 1.0])
    with pytest.raises(InvariantViolation):
        Tobit1Data(np.ones((2, 1)), [0.0, np.inf])


def test_tobit3_invariant_message():
    y1 = np.zeros(20)
    y1[:10] = 1.0
    y2 = np.where(y1 > 0, 2.0, 0.0)
    y2[17] = 0.3
    with pytest.raises(InvariantViolation, match="y1 zero but y2 nonzero at row 17"):
        Tobit3Data(np.ones((20, 1)), y1, np.ones((20, 1)), y2)


def test_tobit2_invariants():
    with pytest.raises(InvariantViolation):
        Tobit2Data(np.ones((3, 1)), [0, 1, 2], np.ones((3, 1)), [0, 1, 1])
    with pytest.raises(InvariantViolation, match="selected row 2"):
        Tobit2Data(np.ones((3, 1)), [0, 1, 1], np.ones((3, 1)), [np.nan, 1, np.nan])
    d = Tobit2Data(np.ones((3, 1)), [0, 1, 1], np.ones((3, 1)), [np.nan, 1, 2])
    np.testing.assert_array_equal(d.selected, [False, True, True])


def test_all_censored_and_none_censored():
    X = np.random.default_rng(0).normal(size=(30, 2))
    with pytest.raises(TooFewUncensored):
        fit_tobit1(Tobit1Data(X, np.zeros(30)))
    with pytest.raises(TooFewUncensored):
        fit_tobit1(Tobit1Data(X, np.ones(30)))


def test_extreme_censoring_from_generator():
    design = SimDesign(n=200, p=1, beta=np.array([-10.0]), seed=0)
    rng = replication_rng(0, 0)
    X = np.ones((200, 1))
    data = Tobit1Data(X, np.maximum(0.0, X @ design.beta + rng.normal(size=200)))
    assert np.all(data.y == 0)
    with pytest.raises(TooFewUncensored):
        fit_tobit1(data)


def test_nonpositive_outcome_variance():
    from tobitinf.two_step import _outcome_variance

    with pytest.raises(NonPositiveVariance):
        _outcome_variance(np.zeros(10), 2, 1.0, -np.ones(10) * 5, np.ones(10) * 0.1)


def test_aft_transform():
    t = np.array([1.0, 2.0, 5.0, 5.0])
    y = aft_transform(t, 5.0)
    np.testing.assert_allclose(y, [math.log(5), math.log(2.5), 0.0, 0.0])
    assert y[2] == 0.0 and y[3] == 0.0
    with pytest.raises(InvariantViolation, match="row 1"):
        aft_transform([1.0, 6.0], 5.0)
    with pytest.raises(InvariantViolation):
        aft_transform([0.0, 1.0], 5.0)


def test_aft_fit_recovers_log_linear_model():
    # log t* = log T - x'beta - eps, censored at T; log T sits in the intercept
    rng = np.random.default_rng(9)
    n = 50_000
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    beta = np.array([0.2, 0.8, -0.5])
    T = np.exp(rng.uniform(1.0, 2.0, size=n))
    X_full = np.column_stack([X, np.log(T)])
    t_star = np.exp(np.log(T) - X @ beta - 0.7 * rng.normal(size=n))
    t = np.minimum(t_star, T)
    fit = fit_tobit1(aft_data(X_full, t, T))
    np.testing.assert_allclose(fit.beta_hat[:3], beta, atol=0.05)
    assert fit.beta_hat[3] == pytest.approx(0.0, abs=0.05)
    assert fit.scale_hat == pytest.approx(0.7, abs=0.05)


def test_to_dict_is_plain():
    import json

    data, _ = _tobit1()
    d = fit_tobit1(data).to_dict()
    back = json.loads(json.dumps(d))
    assert back["beta_hat"] == d["beta_hat"]
    assert back["model"] == "tobit1"
