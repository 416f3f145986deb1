import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from ci_robust import models
from ci_robust.errors import DimensionMismatch, OneClassOnly, SingularSystem, UnsupportedKind
from ci_robust.models import ConditionalModel, Dataset, FittedModel, IntegrationConfig
from ci_robust.rng import RngStream


def gen(seed):
    return RngStream(seed).generator()


# -- Dataset / FittedModel ----------------------------------------------------

def test_dataset_shapes_and_split():
    d = Dataset(np.arange(5.0), np.ones(5), np.zeros((5, 2)))
    assert d.n == 5 and d.x.shape == (5, 1) and d.xz.shape == (5, 3)
    tr, te = d.split(3)
    assert tr.n == 3 and te.n == 2 and te.x[0, 0] == 3.0
    with pytest.raises(DimensionMismatch):
        Dataset(np.ones(3), np.ones(4), np.ones(3))
    with pytest.raises(ValueError):
        Dataset(np.array([1.0, np.nan]), np.ones(2), np.ones(2))


def test_sup_bound_clips_l1_norm():
    m = FittedModel.from_function(lambda a: np.column_stack([a[:, 0], -a[:, 0]]), 1, 2).bounded(3.0)
    out = m.predict(np.array([[10.0], [0.5]]))
    assert np.abs(out).sum(axis=1).max() <= 3.0 + 1e-12
    assert np.allclose(out[1], [0.5, -0.5])
    with pytest.raises(DimensionMismatch):
        m.predict(np.ones((2, 3)))


# -- least squares --------------------------------------------------------------

def test_ols_examples():
    m = models.fit_ols([[1], [2], [3]], [[2], [4], [6]], intercept=False)
    assert m.params["coef"][0, 0] == pytest.approx(2.0, abs=1e-10)
    m = models.fit_ols(np.zeros((3, 0)), [1, 2, 3])
    assert np.allclose(m.predict(np.zeros((4, 0))), 2.0)


def test_ols_matches_normal_equations():
    g = gen(3)
    a = g.normal(size=(50, 3))
    b = g.normal(size=(50, 1))
    oracle = np.linalg.solve(a.T @ a, a.T @ b)
    coef = models.fit_ols(a, b, intercept=False).params["coef"]
    assert np.allclose(coef, oracle, rtol=1e-8, atol=1e-12)
    resid = b - a @ coef
    assert np.abs(a.T @ resid).max() <= 1e-8 * np.abs(a.T @ b).max()


def test_ols_rank_deficient_falls_back_to_minnorm():
    g = gen(4)
    a = g.normal(size=(20, 2))
    a = np.hstack([a, a[:, :1]])
    b = g.normal(size=20)
    assert np.allclose(models.fit_ols(a, b, intercept=False).params["coef"],
                       models.fit_minnorm(a, b).params["coef"], atol=1e-10)


def test_minnorm_examples():
    m = models.fit_minnorm([[1.0, 1.0]], [2.0])
    assert np.allclose(m.params["coef"][:, 0], [1.0, 1.0], atol=1e-12)
    m = models.fit_minnorm(gen(1).normal(size=(10, 4)), np.zeros(10))
    assert np.all(m.params["coef"] == 0)
    with pytest.raises(DimensionMismatch):
        models.fit_minnorm(np.ones((3, 2)), np.ones(4))


def test_minnorm_equals_ols_full_rank():
    g = gen(5)
    a = g.normal(size=(40, 5))
    b = g.normal(size=40)
    oracle = np.linalg.solve(a.T @ a, a.T @ b)
    assert np.allclose(models.fit_minnorm(a, b).params["coef"][:, 0], oracle, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_minnorm_smallest_norm_underdetermined(seed):
    g = gen(seed)
    n, p = 5, 9
    a = g.normal(size=(n, p))
    b = g.normal(size=n)
    coef = models.fit_minnorm(a, b).params["coef"][:, 0]
    assert np.allclose(a @ coef, b, atol=1e-8)
    for _ in range(5):
        cols = np.sort(g.choice(p, n, replace=False))
        sub = np.zeros(p)
        sub[cols] = np.linalg.solve(a[:, cols], b)
        assert np.linalg.norm(coef) <= np.linalg.norm(sub) + 1e-10


def test_least_squares_agree_100_systems():
    g = gen(6)
    for _ in range(100):
        n, p = int(g.integers(10, 40)), int(g.integers(1, 5))
        a = g.normal(size=(n, p))
        b = a @ g.normal(size=p) + g.normal(size=n)
        ols = models.fit_ols(a, b, intercept=False).predict(a)
        mn = models.fit_minnorm(a, b).predict(a)
        assert np.allclose(ols, mn, atol=1e-5)
        ols_i = models.fit_ols(a, b).predict(a)
        lasso = models.fit_lasso(a, b, lam=0.0).predict(a)
        assert np.allclose(ols_i, lasso, atol=1e-5)


# -- LASSO -------------------------------------------------------------------

def test_lasso_zero_above_lambda_max():
    g = gen(8)
    a = g.normal(size=(30, 6))
    y = a[:, 0] * 2 + g.normal(size=30)
    lam = models.lambda_max(a, y)
    assert np.all(models.fit_lasso(a, y, lam=lam).params["coef"] == 0)
    assert np.all(models.fit_lasso(a, y, lam=2 * lam).params["coef"] == 0)
    assert np.any(models.fit_lasso(a, y, lam=0.9 * lam).params["coef"] != 0)


def test_lasso_single_feature_soft_threshold():
    g = gen(9)
    x = g.normal(size=50)
    x = (x - x.mean()) / x.std()
    y = 0.8 * x + g.normal(size=50)
    beta_ols = float(x @ (y - y.mean()) / 50)
    lam = 0.3 * abs(beta_ols)
    coef = models.fit_lasso(x, y, lam=lam).params["coef"][0, 0]
    assert coef == pytest.approx(math.copysign(abs(beta_ols) - lam, beta_ols), abs=1e-7)


def test_lasso_objective_minimized():
    g = gen(10)
    a = g.normal(size=(40, 5))
    y = a @ np.array([1.5, 0, 0, -2, 0]) + g.normal(size=40)
    xs = (a - a.mean(0)) / a.std(0)
    yc = y - y.mean()
    lam = 0.1

    def obj(b):
        r = yc - xs @ b
        return r @ r / (2 * 40) + lam * np.abs(b).sum()

    beta = models.fit_lasso(a, y, lam=lam).params["coef"][:, 0] * a.std(0)
    best = optimize.minimize(obj, np.zeros(5), method="Powell",
                             options=dict(xtol=1e-12, ftol=1e-14, maxiter=100_000))
    assert obj(beta) <= best.fun + 1e-9


def test_lasso_cv_deterministic_and_sparse():
    g = gen(11)
    a = g.normal(size=(120, 30))
    y = 3 * a[:, 0] - 2 * a[:, 1] + g.normal(size=120)
    m1 = models.fit_lasso(a, y, rng=RngStream(5))
    m2 = models.fit_lasso(a, y, rng=RngStream(5))
    assert np.array_equal(m1.params["coef"], m2.params["coef"])
    coef = m1.params["coef"][:, 0]
    assert abs(coef[0] - 3) < 0.3 and abs(coef[1] + 2) < 0.3
    grid = models.lambda_grid(models.lambda_max(a, y))
    assert len(grid) == 50 and grid[-1] == pytest.approx(grid[0] * 1e-3)
    assert m1.params["lam"] in set(grid)


# -- KRR ----------------------------------------------------------------------

def test_krr_constant_targets():
    a = gen(12).normal(size=(15, 3))
    m = models.fit_krr_poly(a, np.full(15, 4.2))
    assert np.allclose(m.predict(a), 4.2, atol=1e-6)


def test_krr_interpolates_three_points():
    a = np.array([[0.0], [1.0], [3.0]])
    t = np.array([1.0, -2.0, 0.5])
    m = models.fit_krr_poly(a, t, degree=3, ridge=1e-10)
    assert np.allclose(m.predict(a)[:, 0], t, atol=1e-4)
    # dense-solve oracle on the same kernel
    u = (a - a.mean()) / a.std()
    k = (1 + u @ u.T) ** 3 + 1e-10 * 3 * np.eye(3)
    alpha = np.linalg.solve(k, t - t.mean())
    assert np.allclose(m.params["alpha"][:, 0], alpha, rtol=1e-6, atol=1e-8)


def test_krr_alpha_shrinks_with_ridge():
    g = gen(13)
    a = g.normal(size=(25, 2))
    t = g.normal(size=25)
    norms = [np.linalg.norm(models.fit_krr_poly(a, t, ridge=r).params["alpha"])
             for r in (1e-4, 1e-2, 1, 100, 1e4)]
    assert all(x > y for x, y in zip(norms, norms[1:]))


def test_krr_singular_and_dimension_errors():
    with pytest.raises(DimensionMismatch):
        models.fit_krr_poly(np.ones((3, 1)), np.ones(2))
    with pytest.raises(SingularSystem):
        models.fit_krr_poly(np.array([[np.nan], [1.0]]), np.ones(2))


# -- logistic ----------------------------------------------------------------

def test_logistic_intercept_only_rate():
    labels = np.array([1] * 3 + [0] * 7, dtype=float)
    m = models.fit_logistic(np.zeros((10, 0)), labels)
    assert np.allclose(m.predict(np.zeros((4, 0))), 0.3, atol=1e-6)


def test_logistic_antisymmetric():
    x = np.array([0.5, 1.0, 2.0, 0.3])
    f = np.concatenate([x, -x])[:, None]
    labels = np.concatenate([np.ones(4), np.zeros(4)])
    # separable data: the tiny penalty keeps the fit finite
    m = models.fit_logistic(f, labels, max_iter=200)
    assert m.predict(np.array([[0.0]]))[0, 0] == pytest.approx(0.5, abs=1e-9)


def test_logistic_matches_first_order_oracle():
    g = gen(14)
    a = g.normal(size=(200, 2))
    labels = (g.random(200) < 1 / (1 + np.exp(-(0.5 + a @ [1.0, -2.0])))).astype(float)
    m = models.fit_logistic(a, labels)
    fitted = models.logistic_objective(m.params["coef"], a, labels)
    res = optimize.minimize(models.logistic_objective, np.zeros(3), args=(a, labels),
                            method="L-BFGS-B", options=dict(gtol=1e-12, ftol=1e-15, maxiter=10_000))
    assert abs(fitted - res.fun) <= 1e-6
    assert fitted <= res.fun + 1e-12


def test_logistic_errors():
    with pytest.raises(OneClassOnly):
        models.fit_logistic(np.ones((4, 1)), np.ones(4))
    with pytest.raises(DimensionMismatch):
        models.fit_logistic(np.ones((4, 1)), np.array([0, 1, 0.0]))


def test_factory_registry():
    f = models.make_factory("krr_poly", degree=2, ridge=0.5)
    m = f(np.ones((3, 1)) * [[1], [2], [3]], np.ones(3))
    assert m.params["degree"] == 2 and m.params["ridge"] == 0.5
    with pytest.raises(ValueError):
        models.make_factory("catboost")


# -- conditional models ---------------------------------------------------------

def test_gaussian_density_integrates_to_one():
    q = ConditionalModel.gaussian_shift(lambda z: z[:, 0], 0.7, 0.3)
    xs = np.linspace(-10, 10, 4001)
    dens = q.density(xs, np.full((xs.size, 1), 0.5))
    assert abs(integrate.trapezoid(dens, xs) - 1) <= 1e-3


def test_logistic_probabilities_open_interval():
    q = ConditionalModel.logistic_binary(lambda z: 1 / (1 + np.exp(-50 * z[:, 0])))
    p = q.probability(np.array([[-10.0], [0.0], [10.0]]))
    assert np.all((p > 0) & (p < 1))


def test_sample_conditional_examples():
    q = ConditionalModel.gaussian_shift(lambda z: 2 * z[:, 0], 1e-12, 0.5)
    x = models.sample_conditional(q, np.array([1.5]), RngStream(1))
    assert abs(x[0] - 3.5) <= 1e-6
    q = ConditionalModel.gaussian_shift(lambda z: np.zeros(len(z)), 1.0, 1.0)
    z = np.array([0.0])
    a = models.sample_conditional(q, z, RngStream(2))
    b = models.sample_conditional(q, z, RngStream(2))
    assert np.array_equal(a, b)
    draws = q.sample(np.zeros((10_000, 1)), RngStream(3))
    assert abs(draws.mean() - 1) <= 0.04


def test_rb_integrate_examples():
    q = ConditionalModel.gaussian_shift(lambda z: 3 * z[:, 0], 1.3)
    g_x = FittedModel.from_function(lambda a: a[:, 0], 2)
    z = np.array([[0.2], [-1.0], [2.0]])
    assert np.allclose(models.rb_integrate(g_x, z, q)[:, 0], 3 * z[:, 0], atol=1e-8)
    g_z = FittedModel.from_function(lambda a: np.sin(a[:, 1]), 2)
    assert np.allclose(models.rb_integrate(g_z, z, q)[:, 0], np.sin(z[:, 0]), atol=1e-14)
    qb = ConditionalModel.logistic_binary(lambda z: np.full(len(z), 0.5))
    assert models.rb_integrate(g_x, np.array([0.3]), qb)[0] == 0.5


@given(st.floats(0.01, 0.99), st.floats(-3, 3))
def test_rb_integrate_logistic_two_point_exact(p, zval):
    qb = ConditionalModel.logistic_binary(lambda z: np.full(len(z), p))
    g = FittedModel.from_function(lambda a: np.exp(a[:, 0]) + a[:, 1] ** 2, 2)
    got = models.rb_integrate(g, np.array([zval]), qb)[0]
    assert got == p * (math.e + zval ** 2) + (1 - p) * (1.0 + zval ** 2)


@given(st.integers(0, 7), st.floats(-2, 2), st.floats(0.2, 2), st.floats(-1, 1))
def test_quadrature_exact_for_polynomials(k, mu, s, theta):
    q = ConditionalModel.gaussian_shift(lambda z: np.full(len(z), mu), s, theta)
    g = FittedModel.from_function(lambda a: a[:, 0] ** k, 2)
    m = mu + theta
    # E[(m + sW)^k] from Gaussian moments E[W^j] = (j-1)!! for even j
    exact = sum(math.comb(k, j) * m ** (k - j) * s ** j * (math.prod(range(j - 1, 0, -2)) if j % 2 == 0 else 0)
                for j in range(k + 1))
    got = models.rb_integrate(g, np.array([0.0]), q)[0]
    assert got == pytest.approx(exact, rel=1e-10, abs=1e-10)


def test_monte_carlo_error_shrinks():
    q = ConditionalModel.gaussian_shift(lambda z: z[:, 0], 1.0)
    g = FittedModel.from_function(lambda a: np.cos(a[:, 0]) * a[:, 1], 2)
    z = np.linspace(-1, 1, 200)[:, None]
    exact = models.rb_integrate(g, z, q)
    errs = []
    for k in (100, 10_000):
        mc = models.rb_integrate(g, z, q, IntegrationConfig("monte_carlo", mc_draws=k), RngStream(k))
        errs.append(float(np.sqrt(np.mean((mc - exact) ** 2))))
    # O(1/sqrt(K)): a factor of 10 expected; allow slack
    assert errs[1] < errs[0] / 5


def test_user_sampler_monte_carlo_and_errors():
    q = ConditionalModel.user_sampler(lambda z, g: z[:, 0] + g.standard_normal(len(z)))
    g = FittedModel.from_function(lambda a: a[:, 0], 2)
    got = models.rb_integrate(g, np.array([[1.0]]), q, IntegrationConfig(mc_draws=20_000), RngStream(1))
    assert abs(got[0, 0] - 1.0) < 0.04
    with pytest.raises(UnsupportedKind):
        models.rb_integrate(g, np.array([[1.0]]), q, IntegrationConfig("quadrature"))
