"""Regression-based conditional independence tests.

Each test fits its plug-in models on ``train``, evaluates per-sample terms on
``test`` and returns a :class:`~ci_robust.core_stats.TestOutcome`. The
``*_from_terms`` helpers take precomputed terms and are what the fitted tests
call internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core_stats import (
    Method,
    TestOutcome,
    average_ranks,
    mean_and_sigma_hat,
    one_sided_pvalue,
    permutation_pvalue,
    two_sided_pvalue,
)
from .errors import (
    DegenerateInput,
    DegenerateVariance,
    InsufficientData,
    NonConvexLoss,
    UnsupportedDimension,
)
from .models import ConditionalModel, Dataset, IntegrationConfig, ModelFactory, rb_integrate
from .rng import as_generator

SIGMA_FLOOR = 1e-12

SQUARED_L2 = "SquaredL2"
ABSOLUTE_L1 = "AbsoluteL1"


@dataclass(frozen=True)
class LossFunction:
    """Row-wise loss ``l(prediction, target)`` summed over output columns.

    ``lipschitz_const`` is only meaningful on a bounded prediction domain
    and is supplied by the caller. ``fn`` overrides the built-in kinds.
    """

    kind: str = SQUARED_L2
    lipschitz_const: Optional[float] = None
    fn: Optional[Callable] = None
    convex: bool = True

    def __call__(self, pred, target) -> np.ndarray:
        pred = np.asarray(pred, dtype=float)
        target = np.asarray(target, dtype=float)
        if pred.ndim == 1:
            pred = pred[:, None]
        if target.ndim == 1:
            target = target[:, None]
        if self.fn is not None:
            return np.asarray(self.fn(pred, target), dtype=float).ravel()
        r = pred - target
        if self.kind == SQUARED_L2:
            return np.sum(r * r, axis=1)
        if self.kind == ABSOLUTE_L1:
            return np.sum(np.abs(r), axis=1)
        raise ValueError(f"unknown loss kind {self.kind!r}")


SQUARED = LossFunction(SQUARED_L2)
ABSOLUTE = LossFunction(ABSOLUTE_L1, lipschitz_const=1.0)


@dataclass(frozen=True)
class StfrConfig:
    rho: float = 0.0
    alpha: float = 0.1

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def _standardized(terms, method, hint=""):
    t_bar, sigma = mean_and_sigma_hat(terms)
    if sigma <= SIGMA_FLOOR:
        raise DegenerateVariance(
            f"{method.value}: test terms have zero spread (sigma_hat={sigma:.3g}){hint}"
        )
    n = np.size(terms)
    return math.sqrt(n) * t_bar / sigma, t_bar, sigma, n


def one_sided_from_terms(terms, method=Method.STFR, alpha=0.1, hint="") -> TestOutcome:
    """Reject for large ``sqrt(n) * mean / sigma_hat``; p = 1 - Phi(stat)."""
    method = Method(method)
    stat, t_bar, sigma, n = _standardized(terms, method, hint)
    return TestOutcome(stat, one_sided_pvalue(stat), t_bar, sigma, n, method, alpha)


def two_sided_from_terms(terms, method=Method.GCM, alpha=0.1) -> TestOutcome:
    method = Method(method)
    stat, t_bar, sigma, n = _standardized(terms, method)
    return TestOutcome(abs(stat), two_sided_pvalue(stat), t_bar, sigma, n, method, alpha)


def _check_test_rows(test: Dataset, minimum: int):
    if test.n < minimum:
        raise InsufficientData(f"test set needs at least {minimum} rows, has {test.n}")


def _null_x(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.hstack([np.zeros_like(x), z])


# -- STFR ------------------------------------------------------------------

def fit_stfr_models(train: Dataset, fit_g1: ModelFactory, fit_g2: Optional[ModelFactory] = None):
    """Full model on (X, Z) and reduced model on (0, Z), both predicting Y."""
    g1 = fit_g1(train.xz, train.y)
    g2 = (fit_g2 or fit_g1)(_null_x(train.x, train.z), train.y)
    return g1, g2


def stfr_terms(g1, g2, test: Dataset, loss: LossFunction, rho=0.0, gen=None, x=None) -> np.ndarray:
    """``l(g2(0, Z), Y) - l(g1(X, Z), Y) + eps`` with ``eps ~ N(0, rho^2)``.

    ``x`` replaces the test-set X (used by the randomization test).
    """
    x = test.x if x is None else x
    reduced = loss(g2.predict(_null_x(test.x, test.z)), test.y)
    full = loss(g1.predict(np.hstack([x, test.z])), test.y)
    terms = reduced - full
    if rho > 0:
        terms = terms + rho * as_generator(gen).standard_normal(terms.shape[0])
    return terms


def stfr(train: Dataset, test: Dataset, fit_g1: ModelFactory, fit_g2: Optional[ModelFactory] = None,
         loss: LossFunction = SQUARED, cfg: StfrConfig = StfrConfig(), rng=None) -> TestOutcome:
    """Significance test of feature relevance.

    ``fit_g2`` defaults to ``fit_g1``; either way the reduced model is trained
    with the X columns zeroed out. With ``cfg.rho == 0`` and a full model that
    ignores X the terms vanish and :class:`DegenerateVariance` is raised.
    """
    _check_test_rows(test, 2)
    g1, g2 = fit_stfr_models(train, fit_g1, fit_g2)
    terms = stfr_terms(g1, g2, test, loss, cfg.rho, as_generator(rng))
    return one_sided_from_terms(
        terms, Method.STFR, cfg.alpha, hint="; set rho > 0 to add artificial noise"
    )


# -- GCM -------------------------------------------------------------------

def _require_univariate(data: Dataset, method: str):
    if data.x.shape[1] != 1 or data.y.shape[1] != 1:
        raise UnsupportedDimension(f"{method} needs univariate X and Y")


def residuals(train: Dataset, test: Dataset, fit_gx: ModelFactory, fit_gy: ModelFactory):
    """Test-set residuals of X and Y after regressing each on Z."""
    gx = fit_gx(train.z, train.x)
    gy = fit_gy(train.z, train.y)
    return test.x - gx.predict(test.z), test.y - gy.predict(test.z)


def gcm(train: Dataset, test: Dataset, fit_gx: ModelFactory, fit_gy: ModelFactory,
        alpha: float = 0.1) -> TestOutcome:
    """Generalized covariance measure: two-sided z-test on residual products."""
    _require_univariate(test, "GCM")
    _check_test_rows(test, 2)
    ex, ey = residuals(train, test, fit_gx, fit_gy)
    return two_sided_from_terms(ex[:, 0] * ey[:, 0], Method.GCM, alpha)


# -- RESIT -----------------------------------------------------------------

def _centered_ranks(a: np.ndarray) -> np.ndarray:
    """Average ranks minus their mean: half-integers, so cross-products and
    their sums are exact in floating point."""
    ranks = np.column_stack([average_ranks(col) for col in a.T])
    return ranks - (a.shape[0] + 1) / 2.0


def resit_from_residuals(eps, eta, B: int = 100, alpha: float = 0.1, rng=None) -> TestOutcome:
    """Permutation test of residual independence.

    Statistic: the largest absolute Spearman correlation over (eps_j, eta_k)
    column pairs (plain ``|rho|`` for scalar residuals). Permutations shuffle
    the rows of ``eta``: ``gen.permuted(tile(arange(n), (B, 1)), axis=1)``.
    Numerators are exact and the norms do not change under permutation, so
    ties between permuted and observed statistics are detected exactly.
    """
    eps = np.asarray(eps, dtype=float).reshape(len(eps), -1)
    eta = np.asarray(eta, dtype=float).reshape(len(eta), -1)
    n = eps.shape[0]
    if n < 3:
        raise InsufficientData(f"RESIT needs at least 3 test rows, has {n}")
    if B < 1:
        raise ValueError("B must be >= 1")
    for name, a in (("X", eps), ("Y", eta)):
        if np.any(np.all(a == a[0], axis=0)):
            raise DegenerateInput(f"RESIT: a {name} residual column is constant")
    re, rh = _centered_ranks(eps), _centered_ranks(eta)
    norms = np.sqrt(np.outer((re * re).sum(axis=0), (rh * rh).sum(axis=0)))
    corr = (re.T @ rh) / norms
    j, k = np.unravel_index(np.argmax(np.abs(corr)), corr.shape)
    observed = float(np.abs(corr).max())
    perms = as_generator(rng).permuted(np.tile(np.arange(n), (B, 1)), axis=1)
    # (B, d_eps, d_eta) numerators of permuted eta ranks against fixed eps ranks
    permuted = np.abs(np.einsum("ni,bnk->bik", re, rh[perms]) / norms).reshape(B, -1).max(axis=1)
    p = permutation_pvalue(observed, permuted)
    return TestOutcome(observed, p, float(corr[j, k]), 0.0, n, Method.RESIT, alpha)


def resit(train: Dataset, test: Dataset, fit_gx: ModelFactory, fit_gy: ModelFactory,
          B: int = 100, alpha: float = 0.1, rng=None) -> TestOutcome:
    """Regression with subsequent independence test.

    ``t_bar`` carries the signed Spearman correlation and ``sigma_hat`` is 0
    (there is no variance estimate in a permutation test).
    """
    ex, ey = residuals(train, test, fit_gx, fit_gy)
    return resit_from_residuals(ex, ey, B, alpha, rng)


# -- RBPT / RBPT2 ----------------------------------------------------------

_RBPT_HINT = (
    "; the predictor ignores X so its Rao-Blackwellization is identical. "
    "Add artificial N(0, rho^2) noise to the terms as in STFR (cfg.rho > 0)"
)


def _require_convex(loss: LossFunction):
    if not loss.convex:
        raise NonConvexLoss("Rao-Blackwellized tests need a loss convex in the prediction")


def rbpt_terms(g, h_values, test: Dataset, loss: LossFunction) -> np.ndarray:
    return loss(h_values, test.y) - loss(g.predict(test.xz), test.y)


def rbpt(train: Dataset, test: Dataset, fit_g: ModelFactory, q: ConditionalModel,
         loss: LossFunction = SQUARED, integration: Optional[IntegrationConfig] = None,
         alpha: float = 0.1, rng=None) -> TestOutcome:
    """Rao-Blackwellized predictor test.

    The smoothed predictor is ``h(z) = E_q[g(X, z)]``, integrated by quadrature
    for Gaussian ``q``, an exact two-point sum for binary ``q`` and Monte Carlo
    (draws from ``rng``) for sampler-only ``q``.
    """
    _require_convex(loss)
    _check_test_rows(test, 2)
    g = fit_g(train.xz, train.y)
    h_values = rb_integrate(g, test.z, q, integration, rng)
    return one_sided_from_terms(rbpt_terms(g, h_values, test, loss), Method.RBPT, alpha, _RBPT_HINT)


def rbpt2(train: Dataset, test: Dataset, fit_g: ModelFactory, fit_h: ModelFactory,
          loss: LossFunction = SQUARED, alpha: float = 0.1) -> TestOutcome:
    """RBPT with the smoothed predictor learned by regressing g(X, Z) on Z."""
    _require_convex(loss)
    _check_test_rows(test, 2)
    g = fit_g(train.xz, train.y)
    h = fit_h(train.z, g.predict(train.xz))
    terms = rbpt_terms(g, h.predict(test.z), test, loss)
    return one_sided_from_terms(terms, Method.RBPT2, alpha, _RBPT_HINT)


# -- CRT -------------------------------------------------------------------

def crt(train: Dataset, test: Dataset, fit_g1: ModelFactory, fit_g2: Optional[ModelFactory],
        q: ConditionalModel, loss: LossFunction = SQUARED, B: int = 100, alpha: float = 0.1,
        rng=None, rho: float = 0.0) -> TestOutcome:
    """Conditional randomization test on the STFR statistic.

    Models are fitted once; each of the ``B`` resamples replaces the test X by
    a draw from ``q`` and recomputes the standardized statistic. Randomness is
    consumed as: all ``B`` X-draws first, then (when ``rho > 0``) noise for the
    observed terms followed by noise for each resample.
    """
    _check_test_rows(test, 2)
    if B < 1:
        raise ValueError("B must be >= 1")
    gen = as_generator(rng)
    g1, g2 = fit_stfr_models(train, fit_g1, fit_g2)
    x_tilde = q.sample(test.z, gen, size=B)
    observed = stfr_terms(g1, g2, test, loss, rho, gen)
    out = one_sided_from_terms(observed, Method.CRT, alpha)
    resampled = np.empty(B)
    for b in range(B):
        terms = stfr_terms(g1, g2, test, loss, rho, gen, x=x_tilde[b])
        resampled[b] = _standardized(terms, Method.CRT)[0]
    p = permutation_pvalue(out.statistic, resampled)
    return TestOutcome(out.statistic, p, out.t_bar, out.sigma_hat, out.n_test, Method.CRT, alpha)
