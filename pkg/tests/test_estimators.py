import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from admshp import (
    Dataset,
    adm_shp_fit,
    build_posterior,
    estimate_A_adm,
    estimate_A_mle,
    exact_B_moments,
    james_stein_B,
    reml_loglik,
)
from admshp.estimators import adm_shp_batch, maximize_batch
from admshp.exceptions import BadQ, NotApplicable, UnequalVariances
from admshp.likelihood import LikelihoodProfile

from conftest import equal_variance_dataset, random_dataset


def grid_argmax(d, q, n=200_001, hi=60.0):
    """Brute-force maximizer of q ln A + l(A) on a fine grid, refined once."""
    A = np.linspace(0.0, hi, n)
    prof = LikelihoodProfile.from_dataset(d)
    with np.errstate(divide="ignore"):
        f = prof.loglik(A, d.y) + (q * np.log(A) if q else 0.0)
    i = int(np.argmax(f))
    lo, up = A[max(i - 1, 0)], A[min(i + 1, n - 1)]
    A2 = np.linspace(lo, up, 20_001)
    with np.errstate(divide="ignore"):
        f2 = prof.loglik(A2, d.y) + (q * np.log(A2) if q else 0.0)
    return float(A2[np.argmax(f2)])


def adm_root(k, V, S, q=1.0, df=None):
    m = (k - 1) if df is None else df
    roots = np.roots([2 * q - m, 4 * q * V - m * V + S, 2 * q * V * V])
    roots = roots[np.isreal(roots)].real
    return float(roots[roots > 0].max())


@pytest.mark.parametrize("k,V,S,expected", [(10, 1.0, 18.0, 1.0), (10, 1.0, 5.0, 0.0), (4, 2.0, 30.0, 8.0)])
def test_mle_examples(k, V, S, expected):
    d = equal_variance_dataset(k, V, S)
    est = estimate_A_mle(d)
    assert est.method == "MLE" and est.q is None
    assert est.A_hat == pytest.approx(expected, abs=1e-8)
    assert grid_argmax(d, 0.0) == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize("q,S,expected", [(1.0, 18.0, 2.0), (1.0, 5.0, np.sqrt(1 / 3.5)), (0.5, 5.0, 0.25)])
def test_adm_examples(q, S, expected):
    d = equal_variance_dataset(10, 1.0, S)
    est = estimate_A_adm(d, q)
    assert est.method == "ADM" and est.q == q and est.converged
    assert est.A_hat == pytest.approx(expected, rel=1e-8)
    assert grid_argmax(d, q) == pytest.approx(expected, abs=1e-4)


def test_adm_b_hat_one_third(s18):
    A = estimate_A_adm(s18).A_hat
    assert 1.0 / (A + 1.0) == pytest.approx(1 / 3, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(k=st.integers(4, 40), V=st.floats(0.1, 10.0), ratio=st.floats(0.05, 30.0))
def test_closed_forms(k, V, ratio):
    S = ratio * (k - 1) * V
    d = equal_variance_dataset(k, V, S)
    assert estimate_A_mle(d).A_hat == pytest.approx(max(0.0, S / (k - 1) - V), rel=1e-8, abs=1e-8 * V)
    assert estimate_A_adm(d).A_hat == pytest.approx(adm_root(k, V, S), rel=1e-8)


def test_bad_q(s18):
    for q in (0.0, -1.0, 1.5):
        with pytest.raises(BadQ):
            estimate_A_adm(s18, q)


def test_adm_strictly_positive(rng):
    # vectorized check on many datasets sharing a design
    for trial in range(4):
        k = int(rng.integers(4, 30))
        V = rng.uniform(0.2, 3.0, k)
        prof = LikelihoodProfile(V, np.ones((k, 1)))
        A = rng.choice([0.0, 0.1, 1.0], size=2500)[:, None]
        Y = np.sqrt(A + V) * rng.normal(size=(2500, k))
        res = maximize_batch(prof, Y, 1.0)
        assert not res.failed.any()
        assert np.all(res.A_hat > 0)


def test_monotone_in_q(rng):
    for _ in range(40):
        d = random_dataset(rng)
        a = [estimate_A_adm(d, q).A_hat for q in (0.1, 0.4, 0.7, 1.0)]
        assert np.all(np.diff(a) >= -1e-9 * max(a))


def test_adm_at_least_mle(rng):
    for _ in range(60):
        k = int(rng.integers(4, 30))
        V = rng.uniform(0.2, 3.0)
        d = equal_variance_dataset(k, V, rng.uniform(0.1, 5.0) * (k - 1) * V)
        assert estimate_A_adm(d).A_hat >= estimate_A_mle(d).A_hat


def test_equivalence_with_beta_fit(rng):
    for _ in range(25):
        k = int(rng.integers(4, 30))
        V = rng.uniform(0.2, 3.0)
        d = equal_variance_dataset(k, V, rng.uniform(0.1, 5.0) * (k - 1) * V)
        A, _, groups = adm_shp_fit(d)
        for g in groups:
            assert g.B_mean == pytest.approx(V / (A.A_hat + V), rel=1e-8)


def test_under_shrinkage(rng):
    for _ in range(20):
        k = int(rng.integers(4, 30))
        V = rng.uniform(0.2, 3.0)
        d = equal_variance_dataset(k, V, rng.uniform(0.1, 5.0) * (k - 1) * V)
        B_hat = V / (estimate_A_adm(d).A_hat + V)
        mean, _ = exact_B_moments(build_posterior(d), d, 0)
        assert B_hat <= mean


def test_james_stein_examples():
    z = np.array([1.0, -1.0] * 5)
    d16 = Dataset.from_arrays(2.0 + z * np.sqrt(16 / 10), 1.0)
    assert james_stein_B(d16, known_mean=2.0) == pytest.approx((0.5, 0.5))
    d4 = Dataset.from_arrays(2.0 + z * np.sqrt(4 / 10), 1.0)
    raw, plus = james_stein_B(d4, known_mean=2.0)
    assert raw == pytest.approx(2.0) and plus == 1.0
    raw, plus = james_stein_B(equal_variance_dataset(4, 1.0, 3.0))
    assert raw == pytest.approx(1 / 3) and plus == pytest.approx(1 / 3)


def test_james_stein_errors(rng):
    with pytest.raises(UnequalVariances):
        james_stein_B(Dataset.from_arrays([1.0, 2, 3, 4], [1.0, 2, 1, 1]))
    small = Dataset.from_arrays([1.0, 2.0], 1.0, validate=False)
    with pytest.raises(NotApplicable):
        james_stein_B(small, known_mean=0.0)
    X = np.column_stack([np.ones(6), np.arange(6.0)])
    with pytest.raises(NotApplicable):
        james_stein_B(Dataset.from_arrays(rng.normal(size=6), 1.0, X))


def test_theta_var_plugin_example(s18):
    A, beta, groups = adm_shp_fit(s18)
    ybar = s18.y.mean()
    # plug-in composition at the central value: B = 1/3, zero residual, Var(b) = 1/(k B) ... = 3/10
    var = 1.0 * (2 / 3) + 0.0 + (1 / 9) * (A.A_hat + 1.0) / 10
    assert var == pytest.approx(0.7)
    d = s18.with_y(np.where(np.arange(10) == 0, ybar, s18.y))
    # the central group has its residual removed, so theta_hat is the GLS mean
    A2, beta2, g2 = adm_shp_fit(d)
    e = d.y[0] - beta2[0]
    assert g2[0].theta_hat == pytest.approx(d.y[0] - g2[0].B_mean * e)
    central = equal_variance_dataset(11, 1.0, 20.0)
    gc = adm_shp_fit(central).per_group[5]
    assert gc.theta_hat == pytest.approx(central.y[5])
    assert gc.B_var > 0 and gc.theta_var > gc.B_mean**2 * 0 + 1.0 * (1 - gc.B_mean)


def test_degenerate_interval_is_conditional_normal():
    from admshp.estimators import normal_quantile

    y, V, mu, B = 4.0, 1.0, 3.0, 0.25
    th = y - B * (y - mu)
    half = normal_quantile(0.975) * np.sqrt(V * (1 - B))
    # zero outer variance terms reduce the composition to V (1 - B)
    var = V * (1 - B) + 0.0 * (y - mu) ** 2 + B**2 * 0.0
    assert np.sqrt(var) * normal_quantile(0.975) == pytest.approx(half)
    assert th - half < th < th + half


def test_intervals_are_ordered(rng):
    for _ in range(10):
        d = random_dataset(rng)
        for g in adm_shp_fit(d, level=0.9).per_group:
            assert g.lo < g.theta_hat < g.hi
            assert 0 < g.B_hat < 1 and g.theta_var > 0 and g.level == 0.9


def test_permutation(rng):
    d = random_dataset(rng, k=8)
    order = rng.permutation(8)
    a = adm_shp_fit(d).per_group
    b = adm_shp_fit(d.permuted(order)).per_group
    for i, j in enumerate(order):
        assert b[i].theta_hat == pytest.approx(a[j].theta_hat, rel=1e-9)
        assert b[i].hi == pytest.approx(a[j].hi, rel=1e-9)


def test_translation_equivariance(rng):
    d = random_dataset(rng, k=9)
    A1, _, g1 = adm_shp_fit(d)
    A2, _, g2 = adm_shp_fit(d.with_y(d.y + 7.5))
    assert A2.A_hat == pytest.approx(A1.A_hat, rel=1e-9)
    for a, b in zip(g1, g2):
        assert b.theta_hat == pytest.approx(a.theta_hat + 7.5, rel=1e-9)
        assert b.lo == pytest.approx(a.lo + 7.5, rel=1e-9)
        assert b.B_hat == pytest.approx(a.B_hat, rel=1e-9)


def test_batch_matches_scalar(rng):
    k = 7
    V = rng.uniform(0.3, 2.0, k)
    X = np.column_stack([np.ones(k), rng.normal(size=k)])
    prof = LikelihoodProfile(V, X)
    Y = 3.0 + rng.normal(size=(6, k)) * 2.0
    for q in (1.0, 0.5):
        batch = adm_shp_batch(prof, Y, q)
        for i in range(Y.shape[0]):
            d = Dataset.from_arrays(Y[i], V, X)
            res = adm_shp_fit(d, q)
            assert batch.A_hat[i] == pytest.approx(res.A.A_hat, rel=1e-9)
            got = [g.theta_var for g in res.per_group]
            np.testing.assert_allclose(batch.theta_var[i], got, rtol=1e-8)
            np.testing.assert_allclose(batch.theta_hat[i], [g.theta_hat for g in res.per_group], rtol=1e-7)


def test_objective_value_reported(s18):
    est = estimate_A_adm(s18)
    assert est.objective_at_opt == pytest.approx(np.log(2.0) + reml_loglik(2.0, s18), rel=1e-10)
