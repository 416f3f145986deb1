"""Regression models and conditional models used as test plug-ins.

Every fitter takes ``features`` of shape ``(n, p)`` and returns a
:class:`FittedModel`, whose ``predict`` maps an ``(k, p)`` array to ``(k, q)``.
Joint models over ``(X, Z)`` always take the X columns first.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np
from scipy import linalg

from .errors import (
    DimensionMismatch,
    NonConvergence,
    OneClassOnly,
    SingularSystem,
    UnsupportedKind,
)
from .rng import RngStream, as_generator

ModelFactory = Callable[[np.ndarray, np.ndarray], "FittedModel"]


def _as_2d(a, name="array") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 1-D or 2-D, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Dataset:
    """Aligned sample of (X, Y, Z) rows."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x, y, z = (_as_2d(getattr(self, k), k) for k in ("x", "y", "z"))
        n = x.shape[0]
        if y.shape[0] != n or z.shape[0] != n:
            raise DimensionMismatch(
                f"row counts differ: x={x.shape[0]}, y={y.shape[0]}, z={z.shape[0]}"
            )
        if n < 1:
            raise DimensionMismatch("dataset has no rows")
        for k, a in (("x", x), ("y", y), ("z", z)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite entries in {k}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def xz(self) -> np.ndarray:
        return np.hstack([self.x, self.z])

    def take(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.z[idx])

    def split(self, n_train: int) -> tuple["Dataset", "Dataset"]:
        """First ``n_train`` rows for training, the rest for testing."""
        if not 0 < n_train < self.n:
            raise DimensionMismatch(f"cannot split {self.n} rows at {n_train}")
        return self.take(slice(0, n_train)), self.take(slice(n_train, None))


@dataclass(frozen=True)
class FittedModel:
    predict_fn: Callable[[np.ndarray], np.ndarray]
    input_dim: int
    output_dim: int = 1
    sup_bound: Optional[float] = None
    name: str = "model"
    params: dict = field(default_factory=dict, compare=False, repr=False)

    def predict(self, features) -> np.ndarray:
        a = np.asarray(features, dtype=float)
        single = a.ndim == 1
        a = a[None, :] if single else a
        if a.ndim != 2 or a.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"{self.name} expects {self.input_dim} features, got shape {np.shape(features)}"
            )
        out = np.asarray(self.predict_fn(a), dtype=float).reshape(a.shape[0], self.output_dim)
        if self.sup_bound is not None:
            out = _clip_l1(out, self.sup_bound)
        return out[0] if single else out

    __call__ = predict

    @classmethod
    def from_function(cls, fn, input_dim, output_dim=1, sup_bound=None, name="function"):
        """Wrap a vectorized closed-form predictor."""
        return cls(fn, int(input_dim), int(output_dim), sup_bound, name)

    def bounded(self, sup_bound: float) -> "FittedModel":
        return FittedModel(
            self.predict_fn, self.input_dim, self.output_dim, float(sup_bound), self.name, self.params
        )


def _clip_l1(out: np.ndarray, bound: float) -> np.ndarray:
    norms = np.abs(out).sum(axis=1, keepdims=True)
    scale = np.where(norms > bound, bound / np.maximum(norms, 1e-300), 1.0)
    return out * scale


def _check_rows(features, targets):
    f = _as_2d(features, "features")
    t = _as_2d(targets, "targets")
    if f.shape[0] != t.shape[0]:
        raise DimensionMismatch(f"features have {f.shape[0]} rows, targets {t.shape[0]}")
    if f.shape[0] < 1:
        raise DimensionMismatch("no training rows")
    return f, t


def _linear_model(coef, intercept, name, params=None) -> FittedModel:
    coef = np.asarray(coef, dtype=float)
    intercept = np.asarray(intercept, dtype=float)

    def predict(a):
        return a @ coef + intercept

    return FittedModel(predict, coef.shape[0], coef.shape[1], None, name,
                       dict(coef=coef, intercept=intercept, **(params or {})))


# -- least squares ---------------------------------------------------------

_MINNORM_RCOND = 1e-10


def _minnorm_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] == 0:
        return np.zeros((0, b.shape[1]))
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > _MINNORM_RCOND * (s[0] if s.size else 0.0)
    return vt[keep].T @ ((u[:, keep].T @ b) / s[keep][:, None])


def _center(features, targets, intercept):
    if not intercept:
        return features, targets, np.zeros(features.shape[1]), np.zeros(targets.shape[1])
    fm = features.mean(axis=0)
    tm = targets.mean(axis=0)
    return features - fm, targets - tm, fm, tm


def fit_ols(features, targets, intercept: bool = True) -> FittedModel:
    """Ordinary least squares; rank-deficient systems get the minimum-norm fit."""
    f, t = _check_rows(features, targets)
    fc, tc, fm, tm = _center(f, t, intercept)
    coef, _, rank, _ = np.linalg.lstsq(fc, tc, rcond=None)
    if rank < fc.shape[1]:
        coef = _minnorm_solve(fc, tc)
    return _linear_model(coef, tm - fm @ coef, "ols")


def fit_minnorm(features, targets, intercept: bool = False) -> FittedModel:
    """Minimum-Euclidean-norm least squares via SVD (relative cutoff 1e-10)."""
    f, t = _check_rows(features, targets)
    fc, tc, fm, tm = _center(f, t, intercept)
    coef = _minnorm_solve(fc, tc)
    return _linear_model(coef, tm - fm @ coef, "minnorm")


# -- LASSO -----------------------------------------------------------------

LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 10_000


@numba.njit(cache=True)
def _lasso_cd(gram, cov, lam, beta, tol, max_sweeps):
    """Covariance-update coordinate descent for
    0.5 b'Gb - c'b + lam |b|_1. Updates ``beta`` in place; returns sweeps used
    or -1 when the sweep budget runs out."""
    p = beta.shape[0]
    gb = gram @ beta
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            r = cov[j] - gb[j] + gjj * old
            if r > lam:
                new = (r - lam) / gjj
            elif r < -lam:
                new = (r + lam) / gjj
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                beta[j] = new
                for k in range(p):
                    gb[k] += gram[k, j] * d
                if abs(d) > max_delta:
                    max_delta = abs(d)
        if max_delta < tol:
            return sweep + 1
    return -1


def _standardize(f):
    mean = f.mean(axis=0)
    sd = f.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (f - mean) / sd, mean, sd


LASSO_SATURATION_R2 = 0.999


def _lasso_path(xs, yc, lambdas, truncate=False):
    """Coefficient path on standardized features; one column per lambda.

    With ``truncate`` the path stops once the training R^2 reaches
    ``LASSO_SATURATION_R2`` and the remaining columns repeat the last
    solution (the interpolating end of a p > n path, as glmnet does).
    """
    n, p = xs.shape
    gram = (xs.T @ xs) / n
    cov = (xs.T @ yc) / n
    tss = float(yc @ yc) / n
    beta = np.zeros(p)
    path = np.empty((p, len(lambdas)))
    for i, lam in enumerate(lambdas):
        if _lasso_cd(gram, cov, float(lam), beta, LASSO_TOL, LASSO_MAX_SWEEPS) < 0:
            raise NonConvergence(f"LASSO did not converge in {LASSO_MAX_SWEEPS} sweeps at lambda={lam:g}")
        path[:, i] = beta
        if truncate and tss > 0:
            rss = tss - 2.0 * beta @ cov + beta @ gram @ beta
            if 1.0 - rss / tss >= LASSO_SATURATION_R2:
                path[:, i + 1:] = beta[:, None]
                break
    return path


def lambda_max(features, target) -> float:
    xs, _, _ = _standardize(_as_2d(features))
    y = np.asarray(target, dtype=float).ravel()
    return float(np.max(np.abs(xs.T @ (y - y.mean()))) / xs.shape[0]) if xs.shape[1] else 0.0


def lambda_grid(lam_max: float, n_points: int = 50, ratio: float = 1e-3) -> np.ndarray:
    return lam_max * np.geomspace(1.0, ratio, n_points)


def fit_lasso(features, targets, lam="cv", n_folds: int = 5, n_lambdas: int = 50,
              rng: Optional[RngStream] = None) -> FittedModel:
    """L1-penalized least squares with an unpenalized intercept.

    Minimizes ``(1/2n)||y - Xb||^2 + lam*||b||_1`` on internally standardized
    features; coefficients are returned on the original scale. ``lam="cv"``
    picks the penalty by K-fold cross-validation over a geometric grid from
    ``lambda_max`` down to ``1e-3 * lambda_max``; fold assignment comes from
    ``rng`` (a fixed default stream when omitted).
    """
    f, t = _check_rows(features, targets)
    if t.shape[1] != 1:
        raise DimensionMismatch("fit_lasso takes a single target column")
    y = t[:, 0]
    xs, mean, sd = _standardize(f)
    yc = y - y.mean()
    if isinstance(lam, str):
        if lam != "cv":
            raise ValueError(f"lam must be a number or 'cv', got {lam!r}")
        grid = lambda_grid(lambda_max(f, y), n_lambdas)
        lam_value = _cv_select(f, y, grid, n_folds, rng) if grid[0] > 0 else 0.0
        path_grid = grid[grid >= lam_value]
    else:
        lam_value = float(lam)
        if lam_value < 0:
            raise ValueError("lam must be non-negative")
        path_grid = np.array([lam_value])
    beta = _lasso_path(xs, yc, path_grid)[:, -1] if xs.shape[1] else np.zeros(0)
    coef = (beta / sd)[:, None]
    intercept = np.array([y.mean() - mean @ coef[:, 0]])
    return _linear_model(coef, intercept, "lasso", dict(lam=lam_value))


def _cv_select(f, y, grid, n_folds, rng) -> float:
    n = f.shape[0]
    if n < 2:
        raise DimensionMismatch("cross-validation needs at least 2 rows")
    k = min(n_folds, n)
    perm = as_generator(rng if rng is not None else RngStream(0)).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % k
    sse = np.zeros(len(grid))
    for fold in range(k):
        tr, te = folds != fold, folds == fold
        xs, mean, sd = _standardize(f[tr])
        ytr = y[tr]
        path = _lasso_path(xs, ytr - ytr.mean(), grid, truncate=True)
        coefs = path / sd[:, None]
        pred = ytr.mean() + (f[te] - mean) @ coefs
        sse += ((y[te][:, None] - pred) ** 2).sum(axis=0)
    return float(grid[int(np.argmin(sse))])


# -- kernel ridge ----------------------------------------------------------

def poly_kernel(u: np.ndarray, v: np.ndarray, degree: int) -> np.ndarray:
    d = max(u.shape[1], 1)
    return (1.0 + (u @ v.T) / d) ** degree


def fit_krr_poly(features, targets, degree: int = 3, ridge: float = 1e-3) -> FittedModel:
    """Kernel ridge regression with kernel ``(1 + u.v/d)**degree``.

    Inputs are standardized and targets centered (unpenalized offset);
    dual coefficients solve ``(K + ridge*n*I) alpha = y - mean(y)``.
    """
    f, t = _check_rows(features, targets)
    if degree < 1 or ridge <= 0:
        raise ValueError("degree must be >= 1 and ridge > 0")
    n = f.shape[0]
    mean = f.mean(axis=0)
    sd = f.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    u = (f - mean) / sd
    tm = t.mean(axis=0)
    gram = poly_kernel(u, u, degree)
    gram[np.diag_indices_from(gram)] += ridge * n
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=False)
        alpha = linalg.cho_solve(factor, t - tm, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystem("regularized Gram matrix is not positive definite") from exc
    if not np.all(np.isfinite(alpha)):
        raise SingularSystem("regularized Gram matrix is numerically singular")

    def predict(a):
        return poly_kernel((a - mean) / sd, u, degree) @ alpha + tm

    return FittedModel(predict, f.shape[1], t.shape[1], None, "krr_poly",
                       dict(alpha=alpha, degree=degree, ridge=ridge))


# -- logistic --------------------------------------------------------------

LOGISTIC_PENALTY = 1e-6


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def logistic_objective(coef, features, labels, penalty=LOGISTIC_PENALTY) -> float:
    """Mean negative log-likelihood plus ``penalty*||slopes||^2``.

    ``coef[0]`` is the (unpenalized) intercept.
    """
    s = coef[0] + features @ coef[1:]
    nll = np.mean(np.logaddexp(0.0, s) - labels * s)
    return float(nll + penalty * coef[1:] @ coef[1:])


def fit_logistic(features, labels, penalty: float = LOGISTIC_PENALTY,
                 tol: float = 1e-8, max_iter: int = 100) -> FittedModel:
    """L2-penalized logistic regression by Newton's method; predicts P(label=1)."""
    f = _as_2d(features, "features")
    yv = np.asarray(labels, dtype=float).ravel()
    if f.shape[0] != yv.shape[0]:
        raise DimensionMismatch(f"features have {f.shape[0]} rows, labels {yv.shape[0]}")
    if not np.all((yv == 0) | (yv == 1)):
        raise ValueError("labels must be 0/1")
    if yv.min() == yv.max():
        raise OneClassOnly("both classes must be present")
    n, p = f.shape
    a = np.hstack([np.ones((n, 1)), f])
    pen = np.full(p + 1, 2.0 * penalty)
    pen[0] = 0.0
    rate = yv.mean()
    coef = np.zeros(p + 1)
    coef[0] = math.log(rate / (1 - rate))
    for _ in range(max_iter):
        prob = _sigmoid(a @ coef)
        grad = a.T @ (prob - yv) / n + pen * coef
        if np.max(np.abs(grad)) < tol:
            break
        hess = (a.T * (prob * (1 - prob))) @ a / n + np.diag(pen)
        try:
            step = linalg.solve(hess, grad, assume_a="pos")
        except linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        coef = coef - step
    else:
        prob = _sigmoid(a @ coef)
        grad = a.T @ (prob - yv) / n + pen * coef
        if np.max(np.abs(grad)) >= tol:
            raise NonConvergence(f"logistic Newton did not converge in {max_iter} iterations")

    def predict(x):
        return _sigmoid(coef[0] + x @ coef[1:])

    return FittedModel(predict, p, 1, None, "logistic", dict(coef=coef))


# -- factories -------------------------------------------------------------

def _nointercept_ols(features, targets):
    return fit_ols(features, targets, intercept=False)


FACTORIES = {
    "ols": fit_ols,
    "ols_nointercept": _nointercept_ols,
    "minnorm": fit_minnorm,
    "lasso": fit_lasso,
    "krr_poly": fit_krr_poly,
    "logistic": fit_logistic,
}


def make_factory(name: str, **hyper) -> ModelFactory:
    """Look up a fitter by name and bind hyperparameters."""
    try:
        fit = FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(FACTORIES)}") from None
    return functools.partial(fit, **hyper) if hyper else fit


# -- conditional models ----------------------------------------------------

GAUSSIAN_SHIFT = "GaussianShift"
LOGISTIC_BINARY = "LogisticBinary"
USER_SAMPLER = "UserSampler"


@dataclass(frozen=True)
class ConditionalModel:
    """A model of X | Z.

    Build with :meth:`gaussian_shift`, :meth:`logistic_binary` or
    :meth:`user_sampler`. Mean, probability and sampler callables are
    vectorized over the rows of a ``(k, d_z)`` array.
    """

    kind: str
    mean_fn: Optional[Callable] = None
    scale: float = 1.0
    theta: float = 0.0
    prob_fn: Optional[Callable] = None
    sampler: Optional[Callable] = None
    x_dim: int = 1

    @classmethod
    def gaussian_shift(cls, mean_fn, scale=1.0, theta=0.0):
        if not scale > 0:
            raise ValueError("scale must be positive")
        return cls(GAUSSIAN_SHIFT, mean_fn=mean_fn, scale=float(scale), theta=float(theta))

    @classmethod
    def logistic_binary(cls, prob_fn):
        return cls(LOGISTIC_BINARY, prob_fn=prob_fn)

    @classmethod
    def user_sampler(cls, sampler, x_dim=1):
        """``sampler(z, generator)`` returns one draw of X per row of ``z``."""
        return cls(USER_SAMPLER, sampler=sampler, x_dim=int(x_dim))

    def with_theta(self, theta: float) -> "ConditionalModel":
        return ConditionalModel(self.kind, self.mean_fn, self.scale, float(theta),
                                self.prob_fn, self.sampler, self.x_dim)

    def location(self, z) -> np.ndarray:
        """Mean of the Gaussian kind, shift included."""
        self._require(GAUSSIAN_SHIFT)
        return np.asarray(self.mean_fn(_as_2d(z)), dtype=float).ravel() + self.theta

    def probability(self, z) -> np.ndarray:
        self._require(LOGISTIC_BINARY)
        p = np.asarray(self.prob_fn(_as_2d(z)), dtype=float).ravel()
        return np.clip(p, 1e-15, 1 - 1e-15)

    def density(self, x, z) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if self.kind == GAUSSIAN_SHIFT:
            r = (x - self.location(z)) / self.scale
            return np.exp(-0.5 * r * r) / (self.scale * math.sqrt(2 * math.pi))
        if self.kind == LOGISTIC_BINARY:
            p = self.probability(z)
            return np.where(x == 1, p, np.where(x == 0, 1 - p, 0.0))
        raise UnsupportedKind("a user sampler has no density")

    def sample(self, z, rng, size=None) -> np.ndarray:
        """Draws of X for each row of ``z``: shape ``(k, x_dim)``, or
        ``(size, k, x_dim)`` when ``size`` is given."""
        gen = as_generator(rng)
        z = _as_2d(z)
        k = z.shape[0]
        reps = 1 if size is None else int(size)
        if self.kind == GAUSSIAN_SHIFT:
            out = self.location(z) + self.scale * gen.standard_normal((reps, k))
            out = out[..., None]
        elif self.kind == LOGISTIC_BINARY:
            out = (gen.random((reps, k)) < self.probability(z)).astype(float)[..., None]
        else:
            out = np.stack([_as_2d(self.sampler(z, gen)) for _ in range(reps)])
        return out[0] if size is None else out

    def _require(self, kind):
        if self.kind != kind:
            raise UnsupportedKind(f"operation requires {kind}, model is {self.kind}")


@dataclass(frozen=True)
class IntegrationConfig:
    """``method`` is ``auto`` (quadrature / exact sum / Monte Carlo by kind),
    ``quadrature`` or ``monte_carlo``."""

    method: str = "auto"
    n_nodes: int = 32
    mc_draws: int = 100


@functools.lru_cache(maxsize=8)
def _hermite_rule(n_nodes: int):
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    return nodes, weights / math.sqrt(2 * math.pi)


def rb_integrate(g: FittedModel, z, q: ConditionalModel,
                 config: Optional[IntegrationConfig] = None, rng=None) -> np.ndarray:
    """Integrate ``g(x, z)`` over ``x ~ q(. | z)`` for each row of ``z``.

    Returns ``(k, output_dim)``, or a vector when ``z`` is a single row.
    """
    config = config or IntegrationConfig()
    single = np.ndim(z) == 1
    z = np.atleast_2d(np.asarray(z, dtype=float))
    k, dz = z.shape
    if g.input_dim != q.x_dim + dz:
        raise DimensionMismatch(f"g takes {g.input_dim} inputs, q/z supply {q.x_dim}+{dz}")
    method = config.method
    if method == "auto":
        method = {GAUSSIAN_SHIFT: "quadrature", LOGISTIC_BINARY: "exact"}.get(q.kind, "monte_carlo")
    if method == "quadrature" and q.kind != GAUSSIAN_SHIFT:
        raise UnsupportedKind(f"quadrature needs a Gaussian conditional, got {q.kind}")

    if method == "quadrature":
        nodes, weights = _hermite_rule(config.n_nodes)
        xs = q.location(z)[None, :] + q.scale * nodes[:, None]
        vals = _eval_on_grid(g, xs, z)
        out = np.tensordot(weights, vals, axes=1)
    elif method == "exact":
        p = q.probability(z)
        ones = _eval_on_grid(g, np.ones((1, k)), z)[0]
        zeros = _eval_on_grid(g, np.zeros((1, k)), z)[0]
        out = p[:, None] * ones + (1 - p)[:, None] * zeros
    elif method == "monte_carlo":
        draws = q.sample(z, rng, size=config.mc_draws)
        vals = _eval_on_grid(g, draws, z)
        out = vals.mean(axis=0)
    else:
        raise ValueError(f"unknown integration method {config.method!r}")
    return out[0] if single else out


def _eval_on_grid(g, xs, z):
    """Evaluate g on stacked draws ``xs`` of shape (m, k[, dx]) -> (m, k, out)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 2:
        xs = xs[..., None]
    m, k, dx = xs.shape
    feats = np.concatenate([xs, np.broadcast_to(z, (m, k, z.shape[1]))], axis=2)
    return g.predict(feats.reshape(m * k, dx + z.shape[1])).reshape(m, k, g.output_dim)


def sample_conditional(q: ConditionalModel, z_row, rng) -> np.ndarray:
    """One draw from ``q(. | z)``; a row vector in, an ``x_dim`` vector out."""
    z = np.atleast_2d(np.asarray(z_row, dtype=float))
    out = q.sample(z, rng)
    return out[0] if np.ndim(z_row) == 1 else out
