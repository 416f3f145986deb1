import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ci_robust import core_stats as cs
from ci_robust.errors import DegenerateInput, DomainError, InsufficientData
from ci_robust.rng import RngStream

mpmath.mp.dps = 40


def mp_cdf(x):
    return float(mpmath.ncdf(mpmath.mpf(x)))


def mp_quantile(q):
    # bisection on the high-precision CDF
    lo, hi = mpmath.mpf(-40), mpmath.mpf(40)
    for _ in range(200):
        mid = (lo + hi) / 2
        if mpmath.ncdf(mid) < q:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# -- normal cdf / quantile ------------------------------------------------

def test_cdf_examples():
    assert cs.std_normal_cdf(0.0) == 0.5
    assert abs(cs.std_normal_cdf(1.281552) - 0.9) <= 1e-4
    assert cs.std_normal_cdf(-38.0) < 1e-300
    assert math.isnan(cs.std_normal_cdf(float("nan")))
    assert cs.std_normal_cdf(float("inf")) == 1.0
    assert cs.std_normal_cdf(float("-inf")) == 0.0


@pytest.mark.parametrize("x", [-8.0, -3.3, -1.0, -0.2, 0.0, 0.7, 1.281552, 2.5, 6.0])
def test_cdf_matches_mpmath(x):
    assert abs(cs.std_normal_cdf(x) - mp_cdf(x)) <= 1e-10


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_cdf_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert cs.std_normal_cdf(lo) <= cs.std_normal_cdf(hi)


def test_quantile_examples():
    assert cs.std_normal_quantile(0.5) == 0.0
    assert abs(cs.std_normal_quantile(0.9) - 1.281552) <= 1e-5
    assert abs(cs.std_normal_quantile(0.975) - 1.959964) <= 1e-5
    assert abs(cs.std_normal_quantile(0.9) - mp_quantile(0.9)) <= 1e-9


@pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_quantile_domain(q):
    with pytest.raises(DomainError):
        cs.std_normal_quantile(q)


def test_cdf_quantile_roundtrip_grid():
    grid = np.round(np.arange(1, 1000) / 1000, 3)
    err = np.abs(cs.std_normal_cdf(cs.std_normal_quantile(grid)) - grid)
    assert err.max() <= 1e-8


@given(st.floats(1e-12, 1 - 1e-12))
def test_quantile_inverts_cdf(q):
    assert abs(cs.std_normal_cdf(cs.std_normal_quantile(q)) - q) <= 1e-9


# -- mean and sigma_hat -----------------------------------------------------

def eq1_exact(values):
    """Literal plug-in formula evaluated in exact rational arithmetic."""
    fr = [Fraction(v) for v in values]
    n = len(fr)
    mean = sum(fr) / n
    rad = sum(v * v for v in fr) / n - mean * mean
    return float(mean), math.sqrt(max(float(rad), 0.0))


@pytest.mark.parametrize("values, expected", [
    ([1, 1, 1], (1.0, 0.0)),
    ([0, 2], (1.0, 1.0)),
    ([-1, 0, 1], (0.0, math.sqrt(2 / 3))),
])
def test_sigma_hat_examples(values, expected):
    t_bar, sigma = cs.mean_and_sigma_hat(values)
    assert t_bar == pytest.approx(expected[0], abs=1e-15)
    assert sigma == pytest.approx(expected[1], abs=1e-15)


@pytest.mark.parametrize("values", [[], [3.0]])
def test_sigma_hat_needs_two(values):
    with pytest.raises(InsufficientData):
        cs.mean_and_sigma_hat(values)


def test_sigma_hat_bruteforce_1000_sequences():
    gen = RngStream(101).generator()
    for _ in range(1000):
        n = int(gen.integers(2, 40))
        t = gen.normal(gen.normal(0, 5), gen.uniform(0.01, 3), size=n)
        m = math.fsum(t) / n
        s = math.sqrt(math.fsum((v - m) ** 2 for v in t) / n)
        t_bar, sigma = cs.mean_and_sigma_hat(t)
        assert abs(t_bar - m) <= 1e-12 * max(1.0, abs(m))
        assert abs(sigma - s) <= 1e-12 * max(1.0, s)


@given(st.lists(finite, min_size=2, max_size=30))
def test_sigma_hat_matches_exact_rational(values):
    t_bar, sigma = cs.mean_and_sigma_hat(values)
    m, s = eq1_exact(values)
    scale = max(1.0, max(abs(v) for v in values))
    assert abs(t_bar - m) <= 1e-12 * scale
    assert sigma >= 0
    assert abs(sigma - s) <= 1e-9 * scale


# -- ranks and Spearman --------------------------------------------------------

def brute_spearman(u, v):
    def ranks(a):
        out = []
        for x in a:
            below = sum(1 for y in a if y < x)
            ties = sum(1 for y in a if y == x)
            out.append(below + (ties + 1) / 2)
        return out
    ru, rv = ranks(u), ranks(v)
    mu, mv = sum(ru) / len(ru), sum(rv) / len(rv)
    num = sum((a - mu) * (b - mv) for a, b in zip(ru, rv))
    den = math.sqrt(sum((a - mu) ** 2 for a in ru) * sum((b - mv) ** 2 for b in rv))
    return num / den


def test_spearman_examples():
    assert cs.spearman_rho([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0, abs=1e-15)
    assert cs.spearman_rho([1, 2, 3], [30, 20, 10]) == pytest.approx(-1.0, abs=1e-15)
    # ranks u = (1, 2.5, 2.5, 4), v = (1, 3, 2, 4)
    expected = 4.5 / math.sqrt(4.5 * 5.0)
    assert brute_spearman([1, 2, 2, 4], [1, 3, 2, 4]) == pytest.approx(expected, abs=1e-15)
    assert cs.spearman_rho([1, 2, 2, 4], [1, 3, 2, 4]) == pytest.approx(expected, abs=1e-14)


def test_spearman_degenerate():
    with pytest.raises(DegenerateInput):
        cs.spearman_rho([1, 1, 1], [1, 2, 3])
    with pytest.raises(DegenerateInput):
        cs.spearman_rho([1, 2, 3], [4, 4, 4])


@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=2, max_size=15))
def test_spearman_matches_bruteforce_with_ties(pairs):
    u = [p[0] for p in pairs]
    v = [p[1] for p in pairs]
    if len(set(u)) < 2 or len(set(v)) < 2:
        return
    rho = cs.spearman_rho(u, v)
    assert -1 <= rho <= 1
    assert rho == pytest.approx(brute_spearman(u, v), abs=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=20, unique=True),
       st.integers(0, 2**32 - 1))
def test_spearman_invariant_to_increasing_maps(u, seed):
    v = RngStream(seed).generator().permutation(len(u)).astype(float)
    base = cs.spearman_rho(u, v)
    assert cs.spearman_rho(np.arctan(u), v) == base
    assert cs.spearman_rho(u, np.exp(v / 10) + 3) == base


# -- p-values ---------------------------------------------------------------

def test_permutation_pvalue_examples():
    assert cs.permutation_pvalue(5, [1, 2, 3]) == 0.25
    assert cs.permutation_pvalue(0, [1, 2, 3]) == 1.0
    assert cs.permutation_pvalue(2, [1, 2, 3, 4]) == pytest.approx(0.8)


@given(finite, st.lists(finite, min_size=1, max_size=50))
def test_permutation_pvalue_bounds(observed, permuted):
    p = cs.permutation_pvalue(observed, permuted)
    b = len(permuted)
    assert 1 / (1 + b) <= p <= 1
    assert p == (1 + sum(x >= observed for x in permuted)) / (1 + b)


def test_permutation_pvalue_superuniform():
    gen = RngStream(7).generator()
    trials, B, alpha = 10_000, 99, 0.1
    draws = gen.standard_normal((trials, B + 1))
    count = (draws[:, 1:] >= draws[:, :1]).sum(axis=1)
    p = (1 + count) / (1 + B)
    rate = float(np.mean(p <= alpha))
    se = math.sqrt(alpha * (1 - alpha) / trials)
    assert rate <= alpha + 1 / (1 + B) + 3 * se
    # and the vectorized count agrees with the library on a sample
    for i in range(50):
        assert cs.permutation_pvalue(draws[i, 0], draws[i, 1:]) == p[i]


def test_one_and_two_sided():
    assert cs.one_sided_pvalue(0.0) == 0.5
    assert cs.two_sided_pvalue(0.0) == 1.0
    assert abs(cs.one_sided_pvalue(1.281552) - 0.1) <= 1e-4
    assert cs.two_sided_pvalue(-2.0) == cs.two_sided_pvalue(2.0)


@given(st.floats(-40, 40))
def test_pvalues_match_oracle(s):
    assert abs(cs.one_sided_pvalue(s) - (1 - mp_cdf(s))) <= 1e-10
    assert abs(cs.two_sided_pvalue(s) - min(1.0, 2 * (1 - mp_cdf(abs(s))))) <= 1e-10
    assert 0 <= cs.two_sided_pvalue(s) <= 1


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_pvalues_nonincreasing(a, b):
    lo, hi = min(a, b), max(a, b)
    assert cs.one_sided_pvalue(hi) <= cs.one_sided_pvalue(lo)
    assert cs.two_sided_pvalue(max(abs(a), abs(b))) <= cs.two_sided_pvalue(min(abs(a), abs(b)))


def test_outcome_to_dict():
    out = cs.TestOutcome(1.5, 0.0668, 0.3, 0.2, 10, cs.Method.STFR)
    d = out.to_dict()
    assert d["method"] == "STFR" and d["rejected"] is True
    assert set(d) >= {"method", "statistic", "p_value", "t_bar", "sigma_hat", "n_test"}


# -- streams ----------------------------------------------------------------

@settings(max_examples=30)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_rng_stream_reproducible(seed, sid):
    a = RngStream(seed, sid).generator().random(5)
    b = RngStream(seed, sid).generator().random(5)
    assert np.array_equal(a, b)


def test_rng_streams_distinct_and_uncorrelated():
    a = RngStream(1, 0).generator().standard_normal(20_000)
    b = RngStream(1, 1).generator().standard_normal(20_000)
    c = RngStream(2, 0).generator().standard_normal(20_000)
    for u, v in ((a, b), (a, c), (b, c)):
        assert abs(np.corrcoef(u, v)[0, 1]) < 4 / math.sqrt(20_000)


def test_splitmix_reference_values():
    from ci_robust.rng import mix_indices, splitmix64
    # reference outputs of the SplitMix64 generator seeded at 0
    state, outs = 0, []
    for _ in range(3):
        outs.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & ((1 << 64) - 1)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert mix_indices(1, 2) != mix_indices(2, 1)
