"""Channel parameters, random crosstalk and per-realization mutual information.

The effective channel Gram matrix is

    M = (H0 + gamma * G)^2 + Gamma^2

with diagonal line-of-sight part ``H0``, diagonal mode-dependent loss
``Gamma`` and a Hermitian Gaussian crosstalk matrix ``G`` drawn with weight
``exp(-(N/2) Tr G^2)``.  All information quantities are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SingularChannel

EPS_PSD = 1e-10
EPS_SING = 1e-12


def derive_rho(alpha: float, rho0: float) -> float:
    """Effective SNR ``4 alpha^2 pi^2 rho0``."""
    if not (math.isfinite(alpha) and math.isfinite(rho0)):
        raise ValueError("alpha and rho0 must be finite")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if rho0 < 0:
        raise ValueError("rho0 must be non-negative")
    return 4.0 * alpha**2 * math.pi**2 * rho0


@dataclass(frozen=True)
class ChannelParams:
    n_modes: int
    alpha: float
    gamma: float
    rho0: float

    def __post_init__(self):
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ConfigError("n", f"n_modes must be a positive integer, got {self.n_modes!r}")
        for name in ("alpha", "gamma", "rho0"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(name, "must be finite")
        if self.alpha <= 0:
            raise ConfigError("alpha", "must be positive")
        if self.gamma < 0:
            raise ConfigError("gamma", "must be non-negative")
        if self.rho0 < 0:
            raise ConfigError("rho0", "must be non-negative")

    @property
    def rho(self) -> float:
        return derive_rho(self.alpha, self.rho0)

    def replace(self, **changes) -> "ChannelParams":
        values = {"n_modes": self.n_modes, "alpha": self.alpha,
                  "gamma": self.gamma, "rho0": self.rho0}
        values.update(changes)
        return ChannelParams(**values)

    @classmethod
    def from_rho(cls, n_modes, gamma, rho, alpha=1.0 / (2.0 * math.pi)):
        """Build parameters that yield effective SNR ``rho`` for the given alpha."""
        return cls(n_modes, alpha, gamma, rho / (4.0 * alpha**2 * math.pi**2))


@dataclass(frozen=True)
class DeterministicProfile:
    """Diagonals of the line-of-sight matrix ``H0`` and of the loss matrix ``Gamma``."""

    h0_diag: np.ndarray
    gamma_diag: np.ndarray

    def __post_init__(self):
        h0 = np.array(self.h0_diag, dtype=float).reshape(-1)
        gl = np.array(self.gamma_diag, dtype=float).reshape(-1)
        if h0.shape != gl.shape:
            raise ConfigError(
                "loss", f"profile lengths differ: h0 has {h0.size}, loss has {gl.size}")
        if not (np.all(np.isfinite(h0)) and np.all(np.isfinite(gl))):
            raise ConfigError("h0", "profile entries must be finite")
        if np.any(gl < 0):
            raise ConfigError("loss", "loss entries must be >= 0")
        h0.setflags(write=False)
        gl.setflags(write=False)
        object.__setattr__(self, "h0_diag", h0)
        object.__setattr__(self, "gamma_diag", gl)

    @property
    def n_modes(self) -> int:
        return self.h0_diag.size

    @property
    def has_scalar_loss(self) -> bool:
        return bool(np.all(self.gamma_diag == self.gamma_diag[0]))

    def check(self, params: ChannelParams) -> None:
        if self.n_modes != params.n_modes:
            raise ConfigError(
                "n", f"profile has {self.n_modes} entries but n_modes={params.n_modes}")

    @classmethod
    def uniform(cls, n, h0=0.0, loss=0.0):
        return cls(np.full(n, float(h0)), np.full(n, float(loss)))


@dataclass(frozen=True)
class CrosstalkMatrix:
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = np.asarray(self.entries, dtype=complex)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("crosstalk matrix must be square")
        if not np.allclose(g, g.conj().T, rtol=0, atol=1e-14):
            raise ValueError("crosstalk matrix must be Hermitian")
        g.setflags(write=False)
        object.__setattr__(self, "entries", g)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class ChannelRealization:
    m: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray


def sample_crosstalk_batch(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` Hermitian crosstalk matrices, shape ``(size, n, n)``.

    Diagonal entries are real N(0, 1/n); strictly-upper entries have
    independent real and imaginary parts N(0, 1/(2n)); the lower triangle is
    the conjugate of the upper one.  Draw order is diagonal, real parts,
    imaginary parts, so a batch of one matches :func:`sample_crosstalk`.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    iu = np.triu_indices(n, k=1)
    m = iu[0].size
    diag = rng.standard_normal((size, n)) * math.sqrt(1.0 / n)
    re = rng.standard_normal((size, m)) * math.sqrt(0.5 / n)
    im = rng.standard_normal((size, m)) * math.sqrt(0.5 / n)
    g = np.zeros((size, n, n), dtype=complex)
    idx = np.arange(n)
    g[:, idx, idx] = diag
    upper = re + 1j * im
    g[:, iu[0], iu[1]] = upper
    g[:, iu[1], iu[0]] = upper.conj()
    return g


def sample_crosstalk(n: int, rng: np.random.Generator) -> CrosstalkMatrix:
    return CrosstalkMatrix(sample_crosstalk_batch(n, 1, rng)[0])


def effective_matrices(profile: DeterministicProfile, g: np.ndarray, gamma: float) -> np.ndarray:
    """``(diag(h0) + gamma G)^2 + diag(loss^2)`` for a stack of ``G``, Hermitian-symmetrized."""
    a = gamma * g
    idx = np.arange(profile.n_modes)
    a[..., idx, idx] += profile.h0_diag
    m = a @ a
    m[..., idx, idx] += profile.gamma_diag**2
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def clamp_eigenvalues(mu: np.ndarray, seed=None) -> np.ndarray:
    """Clamp PSD round-off to zero; anything below ``-EPS_PSD`` is a hard error."""
    if np.any(mu < -EPS_PSD):
        raise SingularChannel(
            f"effective matrix not positive semidefinite (min eigenvalue {mu.min():.3e})",
            eigenvalues=mu, seed=seed)
    return np.where(mu < EPS_PSD, np.maximum(mu, 0.0), mu)


def build_effective_matrix(profile: DeterministicProfile, g: CrosstalkMatrix,
                           params: ChannelParams, seed=None) -> ChannelRealization:
    profile.check(params)
    if g.n != params.n_modes:
        raise ConfigError("n", f"crosstalk is {g.n}x{g.n}, expected n={params.n_modes}")
    m = effective_matrices(profile, np.array(g.entries), params.gamma)
    try:
        mu = np.linalg.eigvalsh(m)
    except np.linalg.LinAlgError as exc:
        raise SingularChannel(f"eigendecomposition failed: {exc}", seed=seed) from exc
    mu = clamp_eigenvalues(mu, seed=seed)
    m.setflags(write=False)
    mu.setflags(write=False)
    return ChannelRealization(m, mu)


def mutual_information(real: ChannelRealization, rho: float) -> float:
    """``sum_k ln(1 + rho / mu_k)`` in nats."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if rho == 0:
        return 0.0
    mu = real.eigenvalues
    if np.any(mu <= EPS_SING):
        raise SingularChannel(
            f"singular channel realization (min eigenvalue {mu.min():.3e})", eigenvalues=mu)
    return float(np.sum(np.log1p(rho / mu)))


def exact_mean_no_crosstalk(profile: DeterministicProfile, rho: float) -> float:
    """Mutual information of the crosstalk-free (gamma = 0) channel; it is deterministic."""
    mu = profile.h0_diag**2 + profile.gamma_diag**2
    if rho == 0:
        return 0.0
    if np.any(mu == 0):
        raise SingularChannel("h0^2 + loss^2 vanishes for some mode", eigenvalues=mu)
    return float(np.sum(np.log1p(rho / mu)))
