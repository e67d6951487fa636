import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from cavitymimo.errors import ConfigError, RunAborted
from cavitymimo.model import ChannelParams, DeterministicProfile, exact_mean_no_crosstalk
from cavitymimo.montecarlo import (
    BLOCK_SIZE,
    RunConfig,
    StreamingMoments,
    block_rng,
    cdf_grid,
    empirical_cdf,
    joint_covariance,
    ks_statistic,
    mix64,
    run_ensemble,
)
from conftest import r_star_params, r_star_profile


def small_config(runs=10_000, seed=11, chunks=1, gamma=0.5, rho0=2.0, **kw):
    return RunConfig(r_star_params(rho0).replace(gamma=gamma), r_star_profile(), runs,
                     seed=seed, chunks=chunks, **kw)


# --- configuration -----------------------------------------------------------

@pytest.mark.parametrize("kw, field", [
    (dict(runs=0), "runs"),
    (dict(runs=10, chunks=11), "chunks"),
    (dict(runs=10, seed=-1), "seed"),
    (dict(runs=10, threads=0), "threads"),
])
def test_run_config_validation(kw, field):
    with pytest.raises(ConfigError) as err:
        RunConfig(r_star_params(2.0), r_star_profile(), **kw)
    assert err.value.field == field


def test_mix64_avalanche():
    a, b = mix64(7, 0), mix64(7, 1)
    assert a != b and 0 <= a < 2**64
    # One flipped input bit changes about half of the output bits.
    flips = [bin(mix64(7, 0) ^ mix64(7 ^ (1 << k), 0)).count("1") for k in range(64)]
    assert 20 < np.mean(flips) < 44
    assert block_rng(7, 3).random() == block_rng(7, 3).random()


# --- ensemble ----------------------------------------------------------------

def test_gamma_zero_samples_are_exact():
    res = run_ensemble(small_config(runs=2000, gamma=0.0))
    exact = exact_mean_no_crosstalk(r_star_profile(), r_star_params(2.0).rho)
    assert np.max(np.abs(res.i - exact)) < 1e-10
    assert res.moments.variance < 1e-20
    v1, v2, cov, vd = joint_covariance(res.i1, res.i2)
    assert max(abs(v1), abs(v2), abs(cov), abs(vd)) < 1e-20


def test_same_config_is_deterministic():
    a = run_ensemble(small_config(chunks=3))
    b = run_ensemble(small_config(chunks=3))
    assert np.array_equal(a.i, b.i)
    assert a.moments == b.moments


@pytest.mark.parametrize("chunks", [1, 2, 5])
def test_sample_multiset_independent_of_chunks(chunks):
    runs = 3 * BLOCK_SIZE + 17
    ref = run_ensemble(small_config(runs=runs, chunks=1))
    res = run_ensemble(small_config(runs=runs, chunks=chunks, threads=2))
    assert np.array_equal(np.sort(ref.i), np.sort(res.i))
    assert res.moments.mean == pytest.approx(ref.moments.mean, rel=1e-12)
    assert res.moments.variance == pytest.approx(ref.moments.variance, rel=1e-9)


def test_different_seeds_differ():
    assert not np.array_equal(run_ensemble(small_config(seed=1)).i,
                              run_ensemble(small_config(seed=2)).i)


def test_moments_without_samples():
    full = run_ensemble(small_config())
    lean = run_ensemble(small_config(keep_samples=False))
    assert lean.i is None
    assert lean.moments == full.moments


def test_streaming_moments_match_numpy():
    res = run_ensemble(small_config())
    m = res.moments
    assert m.count == res.i.size
    assert m.mean == pytest.approx(res.i.mean(), rel=1e-12)
    assert m.variance == pytest.approx(np.var(res.i, ddof=1), rel=1e-10)
    assert m.covariance == pytest.approx(np.cov(res.i1, res.i2)[0, 1], rel=1e-10)
    # var(I) = var(I1) + var(I2) - 2 cov(I1, I2) on the same samples.
    assert m.variance == pytest.approx(m.var1 + m.var2 - 2 * m.covariance, rel=1e-10)


def test_paired_samples_increase_with_rho():
    lo = run_ensemble(small_config(rho0=2.0))
    hi = run_ensemble(small_config(rho0=8.0))
    assert np.all(lo.i >= 0)
    assert np.all(hi.i > lo.i)


def test_singular_regime_aborts():
    prof = DeterministicProfile(np.zeros(2), np.zeros(2))
    cfg = RunConfig(ChannelParams(2, 1.0, 0.0, 1.0), prof, 100)
    with pytest.raises(RunAborted) as err:
        run_ensemble(cfg)
    assert err.value.rejected == 100


# --- streaming moments -------------------------------------------------------

samples = st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=40)


@settings(max_examples=100, deadline=None)
@given(samples, samples, samples)
def test_merge_associative_and_order_free(a, b, c):
    def mk(x):
        arr = np.array(x)
        return StreamingMoments.from_samples(arr[:, 0], arr[:, 1])

    ma, mb, mc = mk(a), mk(b), mk(c)
    left = ma.merge(mb).merge(mc)
    right = mc.merge(ma.merge(mb))
    whole = mk(a + b + c)
    for m in (left, right):
        assert m.count == whole.count
        for name in ("mean", "m2", "mean1", "mean2", "m2_1", "m2_2", "cross"):
            ref = getattr(whole, name)
            assert getattr(m, name) == pytest.approx(ref, rel=1e-9, abs=1e-9 * (1 + abs(ref)))


def test_merge_with_empty_keeps_rejections():
    m = StreamingMoments.from_samples([1.0, 2.0], [0.0, 0.0], rejected=1)
    e = StreamingMoments(rejected=2)
    assert m.merge(e).rejected == 3 and e.merge(m).rejected == 3
    assert m.merge(e).mean == m.mean


# --- empirical CDF and KS ----------------------------------------------------

def test_empirical_cdf_examples():
    cdf = empirical_cdf([3, 1, 2])
    assert list(cdf.sorted_samples) == [1, 2, 3]
    assert cdf(2) == pytest.approx(2 / 3)
    one = empirical_cdf([5])
    assert one(4.9) == 0.0 and one(5) == 1.0
    with pytest.raises(ValueError):
        empirical_cdf([])


def test_empirical_cdf_normal_median():
    x = np.random.default_rng(0).standard_normal(10_000)
    assert abs(empirical_cdf(x)(0.0) - 0.5) < 0.02


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_cdf_bounds(xs):
    cdf = empirical_cdf(xs)
    grid = np.sort(np.r_[xs, -np.inf, np.inf])
    values = cdf(grid)
    assert np.all(np.diff(values) >= 0)
    assert cdf(-np.inf) == 0.0
    assert cdf(max(xs)) == 1.0
    for i, v in enumerate(cdf.sorted_samples):
        if i == len(xs) - 1 or cdf.sorted_samples[i + 1] != v:
            assert cdf(v) == pytest.approx((i + 1) / len(xs))


def test_ks_examples():
    assert ks_statistic(empirical_cdf([0.0]), 0.0, 1.0).statistic == pytest.approx(0.5)
    ks = ks_statistic(empirical_cdf([-1.0, 1.0]), 0.0, 1.0)
    assert ks.statistic == pytest.approx(0.5 - ndtr(-1.0), abs=1e-12)
    assert ks.statistic == pytest.approx(0.34134, abs=1e-5)
    with pytest.raises(ValueError):
        ks_statistic(empirical_cdf([0.0]), 0.0, 0.0)


def test_ks_large_sample_same_distribution():
    rng = np.random.default_rng(1)
    x = rng.normal(3.0, 2.0, 1_000_000)
    assert ks_statistic(empirical_cdf(x), 3.0, 4.0).statistic < 0.002


def test_ks_matches_scipy():
    from scipy import stats

    x = np.random.default_rng(2).normal(0.1, 1.3, 500)
    ours = ks_statistic(empirical_cdf(x), 0.0, 1.0).statistic
    assert ours == pytest.approx(stats.kstest(x, "norm").statistic, rel=1e-12)


# --- joint covariance ----------------------------------------------------------

def test_joint_covariance_identical_streams():
    x = np.random.default_rng(3).standard_normal(100)
    assert joint_covariance(x, x)[3] == 0.0


def test_joint_covariance_independent_streams():
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal(100_000), rng.standard_normal(100_000)
    v1, v2, cov, vd = joint_covariance(a, b)
    se = math.sqrt(v1 * v2 / a.size)
    assert abs(cov) < 3 * se
    assert vd == pytest.approx(v1 + v2 - 2 * cov, rel=1e-12)
    with pytest.raises(ValueError):
        joint_covariance([1.0], [1.0])


def test_cdf_grid():
    assert cdf_grid([2.0, 2.0]).tolist() == [2.0]
    g = cdf_grid([0.0, 1.0, 4.0], points=5)
    assert g[0] == 0.0 and g[-1] == 4.0 and g.size == 5
