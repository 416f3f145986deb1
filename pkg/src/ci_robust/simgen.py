"""Synthetic data-generating processes and the semi-synthetic null."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyBin, UnsupportedDimension
from .models import ConditionalModel, Dataset
from .rng import as_generator


@dataclass(frozen=True)
class QuadraticDgpParams:
    """Z ~ N(0, I); X | Z ~ N((b'Z)^2, 1); Y | X, Z ~ SN(cX + a'Z + gamma (b'Z)^2, 1, s).

    ``skew_shape`` = 0 gives a normal Y. ``theta`` only shifts the
    conditional model returned by :meth:`x_given_z`; the data are unaffected.
    """

    d_z: int
    a: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)
    c: float = 0.0
    gamma: float = 0.0
    skew_shape: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.d_z < 1:
            raise ValueError("d_z must be >= 1")
        for name in ("a", "b"):
            v = getattr(self, name)
            v = np.zeros(self.d_z) if v is None else np.asarray(v, dtype=float).ravel()
            if v.shape != (self.d_z,):
                raise ValueError(f"{name} must have length d_z={self.d_z}")
            object.__setattr__(self, name, v)

    def with_(self, **changes) -> "QuadraticDgpParams":
        return replace(self, **changes)

    def x_mean(self, z) -> np.ndarray:
        return (np.asarray(z) @ self.b) ** 2

    def y_location(self, x, z) -> np.ndarray:
        z = np.asarray(z)
        return self.c * np.asarray(x).ravel() + z @ self.a + self.gamma * (z @ self.b) ** 2

    def x_given_z(self, theta=None) -> ConditionalModel:
        """Gaussian model ``N((b'Z)^2 + theta, 1)``; exact for X|Z when theta=0."""
        b = self.b.copy()
        return ConditionalModel.gaussian_shift(
            lambda z: (z @ b) ** 2, 1.0, self.theta if theta is None else theta
        )


def draw_generative_params(d_z: int, rng) -> QuadraticDgpParams:
    """a, b iid N(0, I_{d_z}); a is drawn first, then b."""
    gen = as_generator(rng)
    a = gen.standard_normal(d_z)
    b = gen.standard_normal(d_z)
    return QuadraticDgpParams(d_z, a, b)


def skewnorm_delta(shape: float) -> float:
    return shape / math.sqrt(1.0 + shape * shape)


def skew_normal_noise(shape: float, size, gen) -> np.ndarray:
    """Location-0, scale-1 skew-normal draws via ``delta|U0| + sqrt(1-delta^2) U1``.

    For ``shape == 0`` this is a plain standard normal draw (one normal per
    entry, so the stream matches the normal model exactly).
    """
    if shape == 0:
        return gen.standard_normal(size)
    delta = skewnorm_delta(shape)
    u0 = np.abs(gen.standard_normal(size))
    u1 = gen.standard_normal(size)
    return delta * u0 + math.sqrt(1.0 - delta * delta) * u1


def gen_quadratic(params: QuadraticDgpParams, n: int, rng) -> Dataset:
    """Draw ``n`` rows. Randomness order: Z, X noise, Y noise."""
    gen = as_generator(rng)
    z = gen.standard_normal((n, params.d_z))
    x = params.x_mean(z) + gen.standard_normal(n)
    y = params.y_location(x, z) + skew_normal_noise(params.skew_shape, n, gen)
    return Dataset(x[:, None], y[:, None], z)


GCM_TOY = "GcmToy"
STFR_TOY = "StfrToy"


@dataclass(frozen=True)
class HighDimDgpParams:
    """Sparse high-dimensional linear Gaussian designs (both satisfy H0).

    ``GcmToy``: beta_X has its first ``sparsity`` entries equal to ``signal``,
    beta_Y its last ``sparsity``. ``StfrToy``: one shared beta for X and Y.
    """

    variant: str = GCM_TOY
    n: int = 250
    d: int = 500
    signal: float = 20.0
    sparsity: int = 5

    def __post_init__(self):
        if self.variant not in (GCM_TOY, STFR_TOY):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 1 <= self.sparsity <= self.d:
            raise ValueError("need 1 <= sparsity <= d")
        if self.variant == GCM_TOY and 2 * self.sparsity > self.d:
            raise ValueError("GcmToy supports must be disjoint: 2*sparsity <= d")

    @classmethod
    def gcm_toy(cls, n=250):
        return cls(GCM_TOY, n, 500, 20.0, 5)

    @classmethod
    def stfr_toy(cls, n=250, d=300):
        return cls(STFR_TOY, n, d, 1.0, 30)

    def betas(self) -> tuple[np.ndarray, np.ndarray]:
        beta_x = np.zeros(self.d)
        beta_x[: self.sparsity] = self.signal
        if self.variant == STFR_TOY:
            return beta_x, beta_x.copy()
        beta_y = np.zeros(self.d)
        beta_y[-self.sparsity:] = self.signal
        return beta_x, beta_y


def gen_highdim(params: HighDimDgpParams, rng, n=None) -> Dataset:
    gen = as_generator(rng)
    n = params.n if n is None else n
    beta_x, beta_y = params.betas()
    z = gen.standard_normal((n, params.d))
    x = z @ beta_x + gen.standard_normal(n)
    y = z @ beta_y + gen.standard_normal(n)
    return Dataset(x[:, None], y[:, None], z)


def quantile_bins(values, n_bins: int) -> np.ndarray:
    """Equal-frequency bin index in ``0..n_bins-1`` for each value."""
    v = np.asarray(values, dtype=float).ravel()
    edges = np.quantile(v, np.linspace(0, 1, n_bins + 1)[1:-1])
    idx = np.searchsorted(edges, v, side="right")
    counts = np.bincount(idx, minlength=n_bins)
    if np.any(counts == 0):
        raise EmptyBin(f"quantile binning left bins {np.flatnonzero(counts == 0).tolist()} empty")
    return idx


def semi_synthetic_null(data: Dataset, n_bins: int = 20, rng=None) -> Dataset:
    """Discretize univariate Z into quantile bins and shuffle Y within each bin."""
    if data.z.shape[1] != 1:
        raise UnsupportedDimension("semi_synthetic_null needs univariate Z")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    gen = as_generator(rng)
    bins = quantile_bins(data.z[:, 0], n_bins)
    y = data.y.copy()
    for k in range(n_bins):
        rows = np.flatnonzero(bins == k)
        y[rows] = data.y[gen.permutation(rows)]
    return Dataset(data.x.copy(), y, bins[:, None].astype(float))
