"""Seeded, chunk-parallel ensemble simulation of the mutual information.

Random numbers come from fixed-size blocks of draws.  Block ``k`` owns its
own PCG64 stream seeded with a 64-bit avalanche mix of ``(seed, k)``, so
the sample multiset depends only on ``(seed, runs)``; the ``chunks`` knob
only decides how blocks are grouped onto workers and in which order the
streaming moments are merged.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, RunAborted
from .model import (
    EPS_SING,
    ChannelParams,
    DeterministicProfile,
    clamp_eigenvalues,
    effective_matrices,
    sample_crosstalk_batch,
)

BLOCK_SIZE = 4096
MAX_REJECTION_RATE = 0.01

_MASK64 = (1 << 64) - 1


def mix64(seed: int, k: int) -> int:
    """SplitMix64 finalizer applied to ``seed + (k + 1) * golden``."""
    z = (int(seed) + (int(k) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def block_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix64(seed, k)))


@dataclass(frozen=True)
class RunConfig:
    params: ChannelParams
    profile: DeterministicProfile
    runs: int
    seed: int = 0
    chunks: int = 1
    keep_samples: bool = True
    threads: int | None = None

    def __post_init__(self):
        self.profile.check(self.params)
        if int(self.runs) != self.runs or self.runs < 1:
            raise ConfigError("runs", "must be a positive integer")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if int(self.chunks) != self.chunks or not 1 <= self.chunks <= self.runs:
            raise ConfigError("chunks", "must satisfy 1 <= chunks <= runs")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads", "must be >= 1")


@dataclass
class StreamingMoments:
    """Mergeable first and second moments of (I, I1, I2).

    ``m2`` is the sum of squared deviations of I, ``m2_1``/``m2_2`` those of
    I1/I2 and ``cross`` the sum of co-deviations of I1 and I2.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    mean1: float = 0.0
    mean2: float = 0.0
    m2_1: float = 0.0
    m2_2: float = 0.0
    cross: float = 0.0
    rejected: int = 0

    @classmethod
    def from_samples(cls, i1, i2, rejected=0) -> "StreamingMoments":
        i1 = np.asarray(i1, dtype=float)
        i2 = np.asarray(i2, dtype=float)
        n = i1.size
        if n == 0:
            return cls(rejected=rejected)
        i = i1 - i2
        # Shifting by the first sample keeps constant streams exactly constant.
        s, s1, s2 = i - i[0], i1 - i1[0], i2 - i2[0]
        c, c1, c2 = s.mean(), s1.mean(), s2.mean()
        d, d1, d2 = s - c, s1 - c1, s2 - c2
        return cls(n, float(i[0] + c), float(d @ d), float(i1[0] + c1), float(i2[0] + c2),
                   float(d1 @ d1), float(d2 @ d2), float(d1 @ d2), rejected)

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        if other.count == 0:
            return StreamingMoments(**{**self.__dict__, "rejected": self.rejected + other.rejected})
        if self.count == 0:
            return StreamingMoments(**{**other.__dict__, "rejected": self.rejected + other.rejected})
        na, nb = self.count, other.count
        n = na + nb
        w = nb / n
        delta = other.mean - self.mean
        d1 = other.mean1 - self.mean1
        d2 = other.mean2 - self.mean2
        f = na * nb / n
        return StreamingMoments(
            count=n,
            mean=self.mean + delta * w,
            m2=self.m2 + other.m2 + delta * delta * f,
            mean1=self.mean1 + d1 * w,
            mean2=self.mean2 + d2 * w,
            m2_1=self.m2_1 + other.m2_1 + d1 * d1 * f,
            m2_2=self.m2_2 + other.m2_2 + d2 * d2 * f,
            cross=self.cross + other.cross + d1 * d2 * f,
            rejected=self.rejected + other.rejected,
        )

    def _unbiased(self, s):
        return s / (self.count - 1) if self.count > 1 else 0.0

    @property
    def variance(self) -> float:
        return self._unbiased(self.m2)

    @property
    def var1(self) -> float:
        return self._unbiased(self.m2_1)

    @property
    def var2(self) -> float:
        return self._unbiased(self.m2_2)

    @property
    def covariance(self) -> float:
        return self._unbiased(self.cross)

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count else math.nan


@dataclass
class EnsembleResult:
    moments: StreamingMoments
    attempted: int
    i: np.ndarray | None = field(default=None, repr=False)
    i1: np.ndarray | None = field(default=None, repr=False)
    i2: np.ndarray | None = field(default=None, repr=False)

    @property
    def rejected(self) -> int:
        return self.moments.rejected


def simulate_block(params: ChannelParams, profile: DeterministicProfile,
                   rng: np.random.Generator, size: int, seed_tag=None):
    """Draw ``size`` realizations; return ``(i1, i2, rejected)`` for the accepted ones."""
    g = sample_crosstalk_batch(params.n_modes, size, rng)
    m = effective_matrices(profile, g, params.gamma)
    mu = clamp_eigenvalues(np.linalg.eigvalsh(m), seed=seed_tag)
    ok = mu.min(axis=1) > EPS_SING
    mu = mu[ok]
    rho = params.rho
    i1 = np.log(mu + rho).sum(axis=1)
    i2 = np.log(mu).sum(axis=1)
    return i1, i2, int(size - ok.sum())


def _block_sizes(runs: int) -> list[int]:
    full, rest = divmod(runs, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def _run_chunk(config: RunConfig, blocks):
    moments = StreamingMoments()
    parts1, parts2 = [], []
    for k, size in blocks:
        i1, i2, rejected = simulate_block(
            config.params, config.profile, block_rng(config.seed, k), size,
            seed_tag=(config.seed, k))
        moments = moments.merge(StreamingMoments.from_samples(i1, i2, rejected))
        if config.keep_samples:
            parts1.append(i1)
            parts2.append(i2)
    return moments, parts1, parts2


def run_ensemble(config: RunConfig) -> EnsembleResult:
    sizes = _block_sizes(config.runs)
    blocks = list(enumerate(sizes))
    groups = [list(g) for g in np.array_split(np.arange(len(blocks)), config.chunks)]
    work = [[blocks[j] for j in group] for group in groups]
    threads = min(config.threads or config.chunks, config.chunks)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: _run_chunk(config, b), work))
    else:
        results = [_run_chunk(config, b) for b in work]

    moments = StreamingMoments()
    parts1, parts2 = [], []
    for m, p1, p2 in results:
        moments = moments.merge(m)
        parts1.extend(p1)
        parts2.extend(p2)

    if moments.rejected > MAX_REJECTION_RATE * config.runs:
        raise RunAborted(
            f"{moments.rejected} of {config.runs} realizations were singular "
            f"(limit {MAX_REJECTION_RATE:.0%}); parameter regime too singular",
            rejected=moments.rejected, attempted=config.runs)
    if moments.count == 0:
        raise RunAborted("no accepted realizations", rejected=moments.rejected,
                         attempted=config.runs)

    result = EnsembleResult(moments, config.runs)
    if config.keep_samples:
        result.i1 = np.concatenate(parts1)
        result.i2 = np.concatenate(parts2)
        result.i = result.i1 - result.i2
    return result


@dataclass(frozen=True)
class EmpiricalCdf:
    sorted_samples: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return self.sorted_samples.size

    def __call__(self, x):
        """``F(x) = #(samples <= x) / count``; vectorized over ``x``."""
        out = np.searchsorted(self.sorted_samples, x, side="right") / self.count
        return float(out) if np.ndim(out) == 0 else out


def empirical_cdf(samples) -> EmpiricalCdf:
    s = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if s.size == 0:
        raise ValueError("empirical CDF needs at least one sample")
    s.setflags(write=False)
    return EmpiricalCdf(s)


@dataclass(frozen=True)
class KsResult:
    statistic: float
    n_samples: int


def gaussian_cdf(x, mean, var):
    return ndtr((np.asarray(x, dtype=float) - mean) / math.sqrt(var))


def ks_statistic(cdf: EmpiricalCdf, ref_mean: float, ref_var: float) -> KsResult:
    """Sup distance to the N(ref_mean, ref_var) CDF, checked on both sides of every step."""
    if not ref_var > 0:
        raise ValueError("reference variance must be positive")
    x = cdf.sorted_samples
    n = x.size
    f = gaussian_cdf(x, ref_mean, ref_var)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(n) / n
    return KsResult(float(max(upper.max(), lower.max())), n)


def joint_covariance(i1, i2):
    """Unbiased ``(var1, var2, cov, var_of_difference)`` from paired samples."""
    i1 = np.asarray(i1, dtype=float)
    i2 = np.asarray(i2, dtype=float)
    if i1.shape != i2.shape or i1.size < 2:
        raise ValueError("need at least two paired samples")
    c = np.cov(np.vstack([i1, i2]))
    var_diff = float(np.var(i1 - i2, ddof=1))
    return float(c[0, 0]), float(c[1, 1]), float(c[0, 1]), var_diff


def cdf_grid(samples, points: int = 401) -> np.ndarray:
    """Evenly spaced evaluation grid spanning the sample range."""
    lo, hi = float(np.min(samples)), float(np.max(samples))
    if hi == lo:
        return np.array([lo])
    return np.linspace(lo, hi, points)
