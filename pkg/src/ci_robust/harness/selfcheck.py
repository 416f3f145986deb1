"""Fast invariant checks runnable without pytest (``ci-robust selfcheck``)."""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .. import core_stats as cs
from .. import models, theory
from ..rng import RngStream


def _cdf_roundtrip():
    grid = np.linspace(0.001, 0.999, 999)
    return float(np.max(np.abs(cs.std_normal_cdf(cs.std_normal_quantile(grid)) - grid))) <= 1e-8


def _sigma_hat_bruteforce():
    gen = RngStream(11).generator()
    for _ in range(200):
        t = gen.normal(gen.normal(), 1 + gen.random(), size=int(gen.integers(2, 50)))
        m = math.fsum(t) / t.size
        s = math.sqrt(max(math.fsum((v - m) ** 2 for v in t) / t.size, 0.0))
        t_bar, sigma = cs.mean_and_sigma_hat(t)
        if abs(t_bar - m) > 1e-12 * max(1, abs(m)) or abs(sigma - s) > 1e-12 * max(1, s):
            return False
    return True


def _spearman_monotone():
    gen = RngStream(12).generator()
    u, v = gen.normal(size=30), gen.normal(size=30)
    return cs.spearman_rho(u, v) == cs.spearman_rho(np.exp(u), v ** 3)


def _permutation_bounds():
    gen = RngStream(13).generator()
    ps = [cs.permutation_pvalue(gen.normal(), gen.normal(size=19)) for _ in range(200)]
    return min(ps) >= 1 / 20 and max(ps) <= 1


def _least_squares_agree():
    gen = RngStream(14).generator()
    a = gen.normal(size=(60, 4))
    b = a @ gen.normal(size=4) + 0.1 * gen.normal(size=60)
    c_ols = models.fit_ols(a, b, intercept=False).params["coef"]
    c_mn = models.fit_minnorm(a, b).params["coef"]
    lasso = models.fit_lasso(a, b, lam=0.0)
    return (np.allclose(c_ols, c_mn, atol=1e-8)
            and np.allclose(lasso.predict(a), models.fit_ols(a, b).predict(a), atol=1e-5))


def _quadrature_exact():
    q = models.ConditionalModel.gaussian_shift(lambda z: z[:, 0], 2.0, 0.5)
    g = models.FittedModel.from_function(lambda a: a[:, 0] ** 3, 2)
    z = np.array([[0.3], [-1.0]])
    m = z[:, 0] + 0.5
    exact = m ** 3 + 3 * m * 4.0
    return np.allclose(models.rb_integrate(g, z, q)[:, 0], exact, atol=1e-8)


def _gaussian_closed_forms():
    ok = True
    for theta in (0.1, 0.5, 1.0, 2.0):
        tv = 0.5 * integrate.quad(lambda x: abs(math.exp(-0.5 * (x - theta) ** 2)
                                                - math.exp(-0.5 * x * x)) / math.sqrt(2 * math.pi),
                                  -np.inf, np.inf, epsabs=1e-13)[0]
        ok &= abs(theory.gaussian_tv(theta) - tv) <= 1e-6
        chi = integrate.quad(lambda x: math.exp(-((x - theta) ** 2) + 0.5 * x * x) / math.sqrt(2 * math.pi),
                             -np.inf, np.inf, epsabs=1e-13)[0] - 1
        ok &= abs(theory.gaussian_chi2_shift(theta) - chi) <= 1e-6
    return ok


CHECKS = {
    "normal cdf/quantile round trip <= 1e-8": _cdf_roundtrip,
    "sigma_hat matches exact two-pass sum": _sigma_hat_bruteforce,
    "spearman invariant to monotone maps": _spearman_monotone,
    "permutation p-value within [1/(1+B), 1]": _permutation_bounds,
    "ols / minnorm / lasso(0) agree": _least_squares_agree,
    "Gauss-Hermite exact on cubic": _quadrature_exact,
    "Gaussian TV and chi^2 closed forms": _gaussian_closed_forms,
}


def run_selfcheck(out=print) -> bool:
    all_ok = True
    for name, check in CHECKS.items():
        ok = bool(check())
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}")
    return all_ok
