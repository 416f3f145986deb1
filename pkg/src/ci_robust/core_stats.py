"""Probability and statistics primitives shared by the CI tests."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special, stats

from .errors import DegenerateInput, DomainError, InsufficientData


class Method(str, enum.Enum):
    STFR = "STFR"
    GCM = "GCM"
    RESIT = "RESIT"
    RBPT = "RBPT"
    RBPT2 = "RBPT2"
    CRT = "CRT"


@dataclass(frozen=True)
class TestOutcome:
    """Result of one conditional-independence test.

    ``statistic`` is the standardized statistic (absolute value for GCM; the
    Spearman magnitude for RESIT). ``t_bar``/``sigma_hat`` are the mean and
    plug-in standard deviation of the per-sample terms; for the permutation
    based tests they describe the observed statistic's terms.
    """

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    p_value: float
    t_bar: float
    sigma_hat: float
    n_test: int
    method: Method
    alpha: float = 0.1

    @property
    def rejected(self) -> bool:
        return self.p_value <= self.alpha

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = Method(self.method).value
        d["rejected"] = self.rejected
        return d


def std_normal_cdf(x):
    """Standard normal distribution function. NaN propagates."""
    out = special.ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_quantile(q):
    """Inverse of :func:`std_normal_cdf` on the open unit interval."""
    q_arr = np.asarray(q, dtype=float)
    if np.any(~((q_arr > 0) & (q_arr < 1))):
        raise DomainError(f"quantile level must lie in (0, 1), got {q}")
    out = special.ndtri(q_arr)
    return float(out) if out.ndim == 0 else out


def mean_and_sigma_hat(values) -> tuple[float, float]:
    """Mean and plug-in (1/n) standard deviation of a sequence.

    Evaluated in two passes, which equals ``mean(t**2) - mean(t)**2`` in exact
    arithmetic without its cancellation error; a radicand that still comes out
    negative (it cannot exceed rounding size) is clamped to zero.
    """
    t = np.asarray(values, dtype=float).ravel()
    if t.size < 2:
        raise InsufficientData(f"need at least 2 values, got {t.size}")
    t_bar = float(t.mean())
    dev = t - t_bar
    radicand = float(dev @ dev) / t.size
    return t_bar, math.sqrt(max(radicand, 0.0))


def average_ranks(values) -> np.ndarray:
    return stats.rankdata(np.asarray(values, dtype=float), method="average")


def _pearson(u: np.ndarray, v: np.ndarray) -> float:
    du = u - u.mean()
    dv = v - v.mean()
    denom = math.sqrt(float(du @ du) * float(dv @ dv))
    return float(np.clip((du @ dv) / denom, -1.0, 1.0))


def spearman_rho(u, v) -> float:
    """Spearman rank correlation with average ranks for ties."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise DomainError(f"length mismatch: {u.size} vs {v.size}")
    if u.size < 2:
        raise InsufficientData("spearman_rho needs at least 2 pairs")
    if np.all(u == u[0]) or np.all(v == v[0]):
        raise DegenerateInput("spearman_rho is undefined for a constant sequence")
    return _pearson(average_ranks(u), average_ranks(v))


def permutation_pvalue(observed: float, permuted) -> float:
    """(1 + #{permuted >= observed}) / (1 + B)."""
    permuted = np.asarray(permuted, dtype=float).ravel()
    if permuted.size < 1:
        raise InsufficientData("need at least one permuted statistic")
    return (1.0 + float(np.count_nonzero(permuted >= observed))) / (1.0 + permuted.size)


def one_sided_pvalue(statistic: float) -> float:
    # upper tail computed directly to keep precision for large statistics
    return float(np.clip(special.ndtr(-statistic), 0.0, 1.0))


def two_sided_pvalue(statistic: float) -> float:
    return float(np.clip(2.0 * special.ndtr(-abs(statistic)), 0.0, 1.0))
