"""Saddle-point equations and the large-N mean of the mutual information.

For a diagonal shift ``Delta`` (``Gamma^2 + rho`` for I1, ``Gamma^2`` for I2)
the order parameters solve

    r = (1/N) Tr gamma (1 + gamma r) / Z1
    p = (1/N) Tr gamma (H0 - gamma p) / Z1
    t = (1/N) Tr gamma (Delta + gamma t) / Z1

with ``Z1 = (Delta + gamma t)(1 + gamma r) + (H0 - gamma p)^2`` and q = 0.
At the solution ``<log det[(H0 + gamma G)^2 + Delta]> = -N (t r - p^2) + Tr log Z1``
to leading order in N.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSaddleRegion, SaddleNotConverged
from .model import ChannelParams, DeterministicProfile

log = logging.getLogger(__name__)

CONTINUATION_STEPS = 32
MAX_DAMPING_HALVINGS = 5


@dataclass(frozen=True)
class SaddleVariant:
    label: str
    delta_diag: np.ndarray

    @classmethod
    def i1(cls, profile: DeterministicProfile, params: ChannelParams) -> "SaddleVariant":
        return cls("I1", profile.gamma_diag**2 + params.rho)

    @classmethod
    def i2(cls, profile: DeterministicProfile) -> "SaddleVariant":
        return cls("I2", profile.gamma_diag**2)

    @classmethod
    def both(cls, profile, params):
        return cls.i1(profile, params), cls.i2(profile)


@dataclass(frozen=True)
class SolverSettings:
    damping: float = 0.5
    tol: float = 1e-12
    max_iter: int = 100_000
    init: tuple = (0.0, 0.0, 0.0)
    continuation: bool = False

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.tol < 1e-14:
            raise ValueError("tol must be >= 1e-14")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def replace(self, **changes) -> "SolverSettings":
        values = dict(self.__dict__)
        values.update(changes)
        return SolverSettings(**values)


@dataclass(frozen=True)
class SaddleSolution:
    t: float
    r: float
    p: float
    residual: float
    iterations: int
    converged: bool
    variant: str = ""
    q: float = 0.0

    @property
    def point(self):
        return self.t, self.r, self.p


def z1_diag(variant: SaddleVariant, profile: DeterministicProfile, params: ChannelParams,
            t: float, r: float, p: float) -> np.ndarray:
    g = params.gamma
    z = (variant.delta_diag + g * t) * (1.0 + g * r) + (profile.h0_diag - g * p) ** 2
    if not np.all(z > 0):
        raise InvalidSaddleRegion(f"Z1 has non-positive entries at t={t}, r={r}, p={p}")
    return z


def _rhs(variant, profile, params, t, r, p):
    g = params.gamma
    z = z1_diag(variant, profile, params, t, r, p)
    n = profile.n_modes
    r_new = g * np.sum((1.0 + g * r) / z) / n
    p_new = g * np.sum((profile.h0_diag - g * p) / z) / n
    t_new = g * np.sum((variant.delta_diag + g * t) / z) / n
    return float(t_new), float(r_new), float(p_new)


def saddle_residual(variant, profile, params, t, r, p):
    """Right-hand sides minus current values, ordered ``(dr, dp, dt)``."""
    t_new, r_new, p_new = _rhs(variant, profile, params, t, r, p)
    return r_new - r, p_new - p, t_new - t


def _iterate(variant, profile, params, settings, damping):
    t, r, p = (float(v) for v in settings.init)
    best = None
    for it in range(settings.max_iter + 1):
        t_new, r_new, p_new = _rhs(variant, profile, params, t, r, p)
        res = max(abs(t_new - t), abs(r_new - r), abs(p_new - p))
        if not math.isfinite(res):
            raise InvalidSaddleRegion("fixed-point iteration produced non-finite values")
        if best is None or res < best[0]:
            best = (res, t, r, p, it)
        if res < settings.tol:
            return SaddleSolution(t, r, p, res, it, True, variant.label)
        if it == settings.max_iter:
            break
        t += damping * (t_new - t)
        r += damping * (r_new - r)
        p += damping * (p_new - p)
    res, t, r, p, it = best
    return SaddleSolution(t, r, p, res, settings.max_iter, False, variant.label)


def _solve_direct(variant, profile, params, settings):
    damping = settings.damping
    for attempt in range(MAX_DAMPING_HALVINGS + 1):
        try:
            return _iterate(variant, profile, params, settings, damping)
        except InvalidSaddleRegion:
            if attempt == MAX_DAMPING_HALVINGS:
                raise
            damping /= 2
            log.debug("saddle iteration left the valid region; damping -> %g", damping)


def solve_by_continuation(variant, profile, params, settings, steps=CONTINUATION_STEPS):
    """Step gamma from 0 to its target, warm-starting every stage from the previous one.

    A stage that stalls is retried from the same warm start with halved damping.
    """
    point = (0.0, 0.0, 0.0)
    total = 0
    sol = None
    for k in range(1, steps + 1):
        stage = params.replace(gamma=params.gamma * k / steps)
        damping = settings.damping
        for _ in range(MAX_DAMPING_HALVINGS + 1):
            sol = _solve_direct(variant, profile, stage,
                                settings.replace(init=point, damping=damping))
            total += sol.iterations
            if sol.converged:
                break
            damping /= 2
        point = sol.point
    return SaddleSolution(sol.t, sol.r, sol.p, sol.residual, total, sol.converged, variant.label)


def solve_saddle(variant: SaddleVariant, profile: DeterministicProfile, params: ChannelParams,
                 settings: SolverSettings | None = None) -> SaddleSolution:
    """Damped fixed-point iteration ``x <- (1 - d) x + d RHS(x)``.

    Returns the best iterate with ``converged=False`` if the tolerance is not
    reached.  With ``settings.continuation`` a stalled direct solve is
    retried by gamma-continuation.
    """
    settings = settings or SolverSettings()
    profile.check(params)
    sol = _solve_direct(variant, profile, params, settings)
    if not sol.converged and settings.continuation:
        log.info("direct saddle solve stalled (residual %.3e); trying continuation", sol.residual)
        cont = solve_by_continuation(variant, profile, params, settings)
        if cont.converged or cont.residual < sol.residual:
            sol = cont
    return sol


def mean_log_det(variant: SaddleVariant, profile: DeterministicProfile, params: ChannelParams,
                 solution: SaddleSolution) -> float:
    if not solution.converged:
        raise SaddleNotConverged(f"saddle for {variant.label} did not converge "
                                 f"(residual {solution.residual:.3e})", solution.residual)
    z = z1_diag(variant, profile, params, *solution.point)
    n = profile.n_modes
    return float(-n * (solution.t * solution.r - solution.p**2) + np.sum(np.log(z)))


@dataclass(frozen=True)
class ReplicaMean:
    mean: float
    mean_i1: float
    mean_i2: float
    solution_i1: SaddleSolution
    solution_i2: SaddleSolution


def solve_both(profile, params, settings=None):
    v1, v2 = SaddleVariant.both(profile, params)
    s1 = solve_saddle(v1, profile, params, settings)
    s2 = solve_saddle(v2, profile, params, settings)
    for v, s in ((v1, s1), (v2, s2)):
        if not s.converged:
            raise SaddleNotConverged(
                f"saddle for {v.label} did not converge (residual {s.residual:.3e})", s.residual)
    return (v1, s1), (v2, s2)


def replica_mean(profile, params, settings=None) -> ReplicaMean:
    (v1, s1), (v2, s2) = solve_both(profile, params, settings)
    m1 = mean_log_det(v1, profile, params, s1)
    m2 = mean_log_det(v2, profile, params, s2)
    return ReplicaMean(m1 - m2, m1, m2, s1, s2)


def mean_mutual_information(profile: DeterministicProfile, params: ChannelParams,
                            settings: SolverSettings | None = None) -> float:
    """Large-N mean ``<I1> - <I2>`` in nats."""
    if params.rho == 0:
        return 0.0
    return replica_mean(profile, params, settings).mean
