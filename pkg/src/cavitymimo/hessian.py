"""Gaussian-fluctuation variance and covariance of the mutual information.

Fluctuations of the order parameters around the saddle are weighted by the
4x4 Hessian of the replica action in the coordinates ``(t, r, p, q)``.  The
variance of a single log-determinant is

    var = -ln |det Sigma| + ln |det Sigma_free|

where ``Sigma_free`` is the Hessian of the gamma-independent part
``-N (t r - p^2 - q^2)``.  The covariance of I1 and I2 follows from the
mixed Hessian of the coupled two-variant action with respect to the cross
order parameters, and

    Var(I) = -ln|det Sigma_I1| - ln|det Sigma_I2| + 2 ln|det Sigma_cov| + C

with ``C`` fixed by the free determinants (it vanishes in these coordinates).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConventionError, SaddleNotConverged, UnsupportedProfile
from .model import ChannelParams, DeterministicProfile
from .montecarlo import RunConfig, run_ensemble
from .replica import SaddleSolution, SaddleVariant, SolverSettings, solve_both, z1_diag

log = logging.getLogger(__name__)

# Additive constant printed in the source derivation of the variance formula.
QUOTED_CONSTANT = 4.0 * math.log(2.0)
VARIANCE_FLOOR = -1e-10
DEFAULT_STEP = 1e-4


@dataclass(frozen=True)
class Hessian4:
    entries: np.ndarray = field(repr=False)
    variant: str

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.shape != (4, 4):
            raise ValueError("Hessian4 must be 4x4")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.entries))

    @property
    def log_abs_det(self) -> float:
        return float(np.linalg.slogdet(self.entries)[1])


def free_hessian(n: int) -> np.ndarray:
    """Hessian of ``-N (t r - p^2 - q^2)``; ``|det| = 4 N^4``."""
    return np.array([[0.0, -n, 0, 0], [-n, 0, 0, 0], [0, 0, 2.0 * n, 0], [0, 0, 0, 2.0 * n]])


def _require_converged(solution):
    if not solution.converged:
        raise SaddleNotConverged(f"saddle {solution.variant or ''} not converged "
                                 f"(residual {solution.residual:.3e})", solution.residual)


def sigma_analytic(variant: SaddleVariant, profile: DeterministicProfile,
                   params: ChannelParams, solution: SaddleSolution) -> Hessian4:
    """Closed-form second derivatives of the single-variant action at the saddle."""
    _require_converged(solution)
    g = params.gamma
    n = profile.n_modes
    t, r, p = solution.point
    a = variant.delta_diag + g * t
    b = 1.0 + g * r
    c = profile.h0_diag - g * p
    z = z1_diag(variant, profile, params, t, r, p)
    g2 = g * g
    z2 = z * z
    s = np.zeros((4, 4))
    s[0, 0] = -np.sum(g2 * b * b / z2)
    s[0, 1] = -n + np.sum(g2 / z - g2 * a * b / z2)
    s[0, 2] = np.sum(2 * g2 * b * c / z2)
    s[1, 1] = -np.sum(g2 * a * a / z2)
    s[1, 2] = np.sum(2 * g2 * a * c / z2)
    s[2, 2] = 2 * n + np.sum(2 * g2 / z - 4 * g2 * c * c / z2)
    s[3, 3] = 2 * n - np.sum(2 * g2 / z)
    s[1, 0], s[2, 0], s[2, 1] = s[0, 1], s[0, 2], s[1, 2]
    return Hessian4(s, variant.label)


def sigma_transcribed(variant, profile, params, solution) -> Hessian4:
    """Literal closed-form Hessian table with its original sign conventions.

    Kept as a reference only: its antisymmetric (t, r) pair and the signs
    of several ``gamma^2 / Z1`` terms disagree with the derivatives of the
    action, so its determinant does not give the fluctuation variance.
    """
    _require_converged(solution)
    g = params.gamma
    n = profile.n_modes
    t, r, p = solution.point
    a = variant.delta_diag + g * t
    b = 1.0 + g * r
    c = profile.h0_diag - g * p
    z = z1_diag(variant, profile, params, t, r, p)
    g2 = g * g
    z2 = z * z
    tr_one = float(n)
    s = np.zeros((4, 4))
    s[0, 0] = -np.sum(g2 / z2 * b * b)
    s[0, 1] = -(np.sum(g2 / z2 * b * a + g2 / z) - tr_one)
    s[0, 2] = -np.sum(2 * g2 / z2 * b * c)
    s[1, 0] = np.sum(g2 / z2 * b * a + g2 / z) - tr_one
    s[1, 1] = -np.sum(g2 / z2 * a * a)
    s[1, 2] = -np.sum(2 * g2 / z2 * a * c)
    s[2, 0] = s[0, 2]
    s[2, 1] = s[1, 2]
    s[2, 2] = -(np.sum(4 * g2 / z2 * c * c + 2 * g2 / z) - 2 * tr_one)
    s[3, 3] = 2 * n - np.sum(2 * g2 / z)
    return Hessian4(s, variant.label)


class ActionEvaluator:
    """Scalar replica action of one variant as a function of ``(t, r, p, q)``."""

    def __init__(self, variant: SaddleVariant, profile: DeterministicProfile,
                 params: ChannelParams):
        self.variant = variant
        self.profile = profile
        self.params = params

    def __call__(self, x) -> float:
        t, r, p, q = (float(v) for v in x)
        g = self.params.gamma
        n = self.profile.n_modes
        z = ((self.variant.delta_diag + g * t) * (1 + g * r)
             + (self.profile.h0_diag - g * p) ** 2 - g * g * q * q)
        if not np.all(z > 0):
            return math.nan
        return float(-n * (t * r - p * p - q * q) + np.sum(np.log(z)))

    def centered(self, x0):
        """Callable ``d -> S(x0 + d) - S(x0)`` that avoids cancellation for small ``d``."""
        t0, r0, p0, q0 = (float(v) for v in x0)
        g = self.params.gamma
        n = self.profile.n_modes
        a = self.variant.delta_diag + g * t0
        b = 1 + g * r0
        c = self.profile.h0_diag - g * p0
        z0 = a * b + c * c - g * g * q0 * q0

        def increment(d):
            dt, dr, dp, dq = (float(v) for v in d)
            da, db, dc = g * dt, g * dr, -g * dp
            dz = (a * db + b * da + da * db + 2 * c * dc + dc * dc
                  - g * g * (2 * q0 * dq + dq * dq))
            ratio = dz / z0
            if not np.all(ratio > -1):
                return math.nan
            quad = -n * (t0 * dr + r0 * dt + dt * dr - 2 * p0 * dp - dp * dp
                         - 2 * q0 * dq - dq * dq)
            return float(quad + np.sum(np.log1p(ratio)))

        return increment


class CoupledAction:
    """Action of both variants with cross order parameters switched on.

    ``x12`` and ``x21`` are the (t, r, p, q) cross couplings of the two
    replica groups.  Per mode the log-determinant is taken of the 4x4 block
    matrix over (X1, Y1, X2, Y2); at vanishing cross couplings it equals
    ``log Z1(I1) + log Z1(I2)``.
    """

    def __init__(self, profile, params, variant1, solution1, variant2, solution2):
        self.profile = profile
        self.params = params
        g = params.gamma
        h = profile.h0_diag
        n = profile.n_modes
        base = np.zeros((n, 4, 4), dtype=complex)
        for off, v, s in ((0, variant1, solution1), (2, variant2, solution2)):
            base[:, off, off] = v.delta_diag + g * s.t
            base[:, off, off + 1] = 1j * (h - g * s.p)
            base[:, off + 1, off] = 1j * (h - g * s.p)
            base[:, off + 1, off + 1] = 1.0 + g * s.r
        self._base = base
        self._base_log_det = float(np.sum(np.linalg.slogdet(base)[1]))
        self._r1 = np.linalg.inv(base[:, :2, :2])
        self._r2 = np.linalg.inv(base[:, 2:, 2:])
        self._saddle_quadratic = -n * (solution1.t * solution1.r - solution1.p**2
                                       + solution2.t * solution2.r - solution2.p**2)

    def quadratic_part(self, x12, x21) -> float:
        n = self.profile.n_modes
        t12, r12, p12, q12 = x12
        t21, r21, p21, q21 = x21
        return float(self._saddle_quadratic
                     - n * (t12 * r21 + t21 * r12) + 2 * n * (p12 * p21 + q12 * q21))

    def log_det_increment(self, x12, x21) -> float:
        """``log det`` change caused by the cross couplings, to full relative precision.

        The base matrix is block diagonal and the couplings fill the
        off-diagonal blocks, so per mode the increment is
        ``log det(I - R1 E12 R2 E21)``, a 2x2 determinant near one.
        """
        g = self.params.gamma
        t12, r12, p12, q12 = x12
        t21, r21, p21, q21 = x21
        e12 = g * np.array([[t12, -1j * (p12 + q12)], [-1j * (p12 - q12), r12]])
        e21 = g * np.array([[t21, -1j * (p21 + q21)], [-1j * (p21 - q21), r21]])
        y = self._r1 @ e12 @ self._r2 @ e21
        tr = y[:, 0, 0] + y[:, 1, 1]
        det = y[:, 0, 0] * y[:, 1, 1] - y[:, 0, 1] * y[:, 1, 0]
        w = det - tr
        # Re log(1 + w) without forming 1 + w.
        return float(np.sum(0.5 * np.log1p(2 * w.real + w.real**2 + w.imag**2)))

    def log_det_part(self, x12, x21) -> float:
        return self._base_log_det + self.log_det_increment(x12, x21)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.quadratic_part(x[:4], x[4:]) + self.log_det_part(x[:4], x[4:])


def _fd_hessian(f, x0, h):
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    f0 = f(x0)
    out = np.zeros((d, d))
    e = np.eye(d) * h
    for i in range(d):
        out[i, i] = (f(x0 + e[i]) - 2 * f0 + f(x0 - e[i])) / (h * h)
        for j in range(i + 1, d):
            v = (f(x0 + e[i] + e[j]) - f(x0 + e[i] - e[j])
                 - f(x0 - e[i] + e[j]) + f(x0 - e[i] - e[j])) / (4 * h * h)
            out[i, j] = out[j, i] = v
    return out


def _check_step(step):
    if not 1e-6 <= step <= 1e-3:
        raise ValueError("finite-difference step must lie in [1e-6, 1e-3]")


def sigma_fd(action, at, step: float = DEFAULT_STEP, richardson: bool = True,
             variant: str = "fd") -> Hessian4:
    """Central-difference Hessian of a scalar action around ``at``.

    ``at`` is a :class:`SaddleSolution` (expanded to ``(t, r, p, 0)``) or any
    4-vector.  Richardson extrapolation combines steps ``h`` and ``h/2``.
    Actions exposing ``centered`` are differenced through their increments.
    """
    _check_step(step)
    x0 = [at.t, at.r, at.p, at.q] if isinstance(at, SaddleSolution) else at
    if hasattr(action, "centered"):
        action, x0 = action.centered(x0), np.zeros(4)
    h1 = _fd_hessian(action, x0, step)
    out = (4 * _fd_hessian(action, x0, step / 2) - h1) / 3 if richardson else h1
    if not np.all(np.isfinite(out)):
        raise ValueError("action returned non-finite values near the expansion point")
    return Hessian4(out, variant)


def _fd_mixed(f, h):
    out = np.zeros((4, 4))
    z = np.zeros(4)
    for i in range(4):
        ei = z.copy()
        ei[i] = h
        for j in range(4):
            ej = z.copy()
            ej[j] = h
            out[i, j] = (f(ei, ej) - f(ei, -ej) - f(-ei, ej) + f(-ei, -ej)) / (4 * h * h)
    return out


def sigma_cov(profile: DeterministicProfile, params: ChannelParams, first, second,
              step: float = DEFAULT_STEP) -> Hessian4:
    """Mixed Hessian d^2 S / d x12 d x21 of the coupled action at the block-diagonal saddle.

    ``first`` and ``second`` are ``(variant, solution)`` pairs.  The
    quadratic part is exact; the log-determinant increment is differenced
    numerically with Richardson extrapolation.
    """
    if not profile.has_scalar_loss:
        raise UnsupportedProfile("covariance Hessian needs mode-independent loss")
    _check_step(step)
    (v1, s1), (v2, s2) = first, second
    _require_converged(s1)
    _require_converged(s2)
    action = CoupledAction(profile, params, v1, s1, v2, s2)
    coarse = _fd_mixed(action.log_det_increment, step)
    fine = _fd_mixed(action.log_det_increment, step / 2)
    return Hessian4(free_hessian(profile.n_modes) + (4 * fine - coarse) / 3, "cross")


@dataclass(frozen=True)
class VarianceReport:
    var_i1: float
    var_i2: float
    covar: float
    var_total: float
    method: str
    det_sigma_i1: float = math.nan
    det_sigma_i2: float = math.nan
    det_sigma_cov: float = math.nan
    normalization_constant: float = 0.0
    quoted_constant: float = QUOTED_CONSTANT

    @property
    def constant_discrepancy(self) -> float:
        return self.normalization_constant - self.quoted_constant

    def as_dict(self) -> dict:
        return {
            "var_i1": self.var_i1,
            "var_i2": self.var_i2,
            "covar": self.covar,
            "var_total": self.var_total,
            "method": self.method,
            "det_sigma_i1": self.det_sigma_i1,
            "det_sigma_i2": self.det_sigma_i2,
            "det_sigma_cov": self.det_sigma_cov,
            "normalization_constant": self.normalization_constant,
            "quoted_constant": self.quoted_constant,
            "constant_discrepancy": self.constant_discrepancy,
        }


def _clamp_variance(v):
    if v >= 0:
        return v
    if v >= VARIANCE_FLOOR:
        log.warning("variance %.3e slightly negative; clamped to 0", v)
        return 0.0
    raise ConventionError(
        f"determinant formula gave negative variance {v:.6e}; "
        "compare sigma_analytic with sigma_fd for a sign convention problem")


def variance(profile: DeterministicProfile, params: ChannelParams,
             settings: SolverSettings | None = None, step: float = DEFAULT_STEP,
             fallback_runs: int = 200_000, seed: int = 0) -> VarianceReport:
    """Variance of I = I1 - I2 from the three fluctuation determinants.

    For mode-dependent loss the covariance Hessian is unavailable; the
    covariance is then estimated by Monte Carlo and ``method`` reports it.
    """
    first, second = solve_both(profile, params, settings)
    s1 = sigma_analytic(first[0], profile, params, first[1])
    s2 = sigma_analytic(second[0], profile, params, second[1])
    free = np.linalg.slogdet(free_hessian(profile.n_modes))[1]
    var_i1 = float(free - s1.log_abs_det)
    var_i2 = float(free - s2.log_abs_det)

    if profile.has_scalar_loss:
        sc = sigma_cov(profile, params, first, second, step)
        covar = float(free - sc.log_abs_det)
        constant = float(free + free - 2 * free)
        total = float(-s1.log_abs_det - s2.log_abs_det + 2 * sc.log_abs_det + constant)
        return VarianceReport(var_i1, var_i2, covar, _clamp_variance(total), "analytic",
                              s1.det, s2.det, sc.det, constant)

    mc = run_ensemble(RunConfig(params, profile, fallback_runs, seed=seed, keep_samples=False))
    covar = float(mc.moments.covariance)
    total = var_i1 + var_i2 - 2 * covar
    return VarianceReport(var_i1, var_i2, covar, _clamp_variance(total), "monte-carlo",
                          s1.det, s2.det, math.nan)
