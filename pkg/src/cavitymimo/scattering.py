"""Cavity scattering matrix and extraction of the transmission block.

The 2N x 2N scattering matrix of a chaotic cavity coupled to leads through
``W`` is

    S = I - 2 pi i W^dag (Hc + i pi W W^dag + i L)^{-1} W

where ``Hc = [[0, H^dag], [H, 0]]`` carries no backscattering and
``L = [[0, Gamma], [Gamma, 0]]`` is the mode-dependent loss block.  For weak
coupling the ``i pi W W^dag`` term is dropped.  With perfect leads
``W = sqrt(alpha) I`` and the transmission block of the weak-coupling S
obeys ``U^dag U = 4 alpha^2 pi^2 (H^2 + Gamma^2)^{-1}`` whenever H and Gamma
commute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SingularResolvent

# Above this 1-norm condition number the resolvent is treated as singular.
MAX_CONDITION = 1e13


@dataclass(frozen=True)
class BlockHamiltonian:
    h: np.ndarray = field(repr=False)

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=complex))
        if h.shape[0] != h.shape[1]:
            raise ValueError("H must be square")
        if not np.allclose(h, h.conj().T, rtol=0, atol=1e-12):
            raise ValueError("H must be Hermitian")
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.h.shape[0]

    @property
    def assembled(self) -> np.ndarray:
        n = self.n
        out = np.zeros((2 * n, 2 * n), dtype=complex)
        out[:n, n:] = self.h.conj().T
        out[n:, :n] = self.h
        return out


@dataclass(frozen=True)
class CouplingMatrix:
    w: np.ndarray = field(repr=False)

    @classmethod
    def perfect(cls, alpha: float, n: int) -> "CouplingMatrix":
        """Lossless leads, ``W = sqrt(alpha) I_2N``."""
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        return cls(math.sqrt(alpha) * np.eye(2 * n, dtype=complex))

    @property
    def alpha(self) -> float:
        """Mean diagonal of ``W W^dag``; equals alpha for perfect leads."""
        ww = self.w @ self.w.conj().T
        return float(np.real(np.trace(ww))) / ww.shape[0]


@dataclass(frozen=True)
class LossBlock:
    gamma_diag: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma_diag, dtype=float).reshape(-1)
        if np.any(g < 0):
            raise ValueError("loss entries must be >= 0")
        object.__setattr__(self, "gamma_diag", g)

    @property
    def gamma_block(self) -> np.ndarray:
        n = self.gamma_diag.size
        out = np.zeros((2 * n, 2 * n))
        out[:n, n:] = np.diag(self.gamma_diag)
        out[n:, :n] = np.diag(self.gamma_diag)
        return out


@dataclass(frozen=True)
class SelectionMasks:
    a_diag: np.ndarray
    b_diag: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_diag)
        b = np.asarray(self.b_diag)
        for m in (a, b):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("masks must be square matrices")
            if np.any(m - np.diag(np.diag(m))) or not np.all(np.isin(np.diag(m), (0, 1))):
                raise ValueError("masks must be diagonal 0/1 matrices")
        if a.shape != b.shape:
            raise ValueError("masks must have the same shape")
        if np.any(a @ b):
            raise ValueError("masks overlap: A_diag B_diag must vanish")
        if np.count_nonzero(np.diag(a)) != np.count_nonzero(np.diag(b)):
            raise ValueError("masks must select equally many rows and columns")

    @classmethod
    def standard(cls, n: int) -> "SelectionMasks":
        """Left outputs (rows 0..N-1) and right inputs (columns N..2N-1)."""
        a = np.diag(np.r_[np.ones(n), np.zeros(n)])
        b = np.diag(np.r_[np.zeros(n), np.ones(n)])
        return cls(a, b)


def _solve_resolvent(k: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        cond = np.linalg.cond(k, 1)
    except np.linalg.LinAlgError:
        cond = math.inf
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularResolvent("cavity resolvent is singular", cond)
    lu = scipy.linalg.lu_factor(k, check_finite=False)
    return scipy.linalg.lu_solve(lu, rhs, check_finite=False)


def _scattering(kernel: np.ndarray, w: CouplingMatrix) -> np.ndarray:
    wm = w.w
    if wm.shape != kernel.shape:
        raise ValueError("coupling matrix and Hamiltonian sizes differ")
    x = _solve_resolvent(kernel, wm)
    return np.eye(kernel.shape[0]) - 2j * math.pi * (wm.conj().T @ x)


def _kernel(h: BlockHamiltonian, loss: LossBlock | None) -> np.ndarray:
    k = h.assembled.copy()
    if loss is not None:
        if loss.gamma_diag.size != h.n:
            raise ValueError("loss and Hamiltonian sizes differ")
        k = k + 1j * loss.gamma_block
    return k


def build_exact_s(h: BlockHamiltonian, w: CouplingMatrix,
                  loss: LossBlock | None = None) -> np.ndarray:
    wm = w.w
    k = _kernel(h, loss) + 1j * math.pi * (wm @ wm.conj().T)
    return _scattering(k, w)


def build_approx_s(h: BlockHamiltonian, w: CouplingMatrix,
                   loss: LossBlock | None = None) -> np.ndarray:
    """Weak-coupling S with the lead self-energy ``i pi W W^dag`` dropped."""
    return _scattering(_kernel(h, loss), w)


def extract_u(s: np.ndarray, masks: SelectionMasks) -> np.ndarray:
    rows = np.flatnonzero(np.diag(masks.a_diag))
    cols = np.flatnonzero(np.diag(masks.b_diag))
    if s.shape != masks.a_diag.shape:
        raise ValueError("scattering matrix and masks have different shapes")
    return s[np.ix_(rows, cols)]


def gram_deviation(h_matrix, gamma_diag, alpha: float) -> float:
    """``max |U^dag U - 4 alpha^2 pi^2 (H^2 + Gamma^2)^{-1}|`` for the weak-coupling S."""
    h = BlockHamiltonian(h_matrix)
    gl = np.asarray(gamma_diag, dtype=float).reshape(-1)
    s = build_approx_s(h, CouplingMatrix.perfect(alpha, h.n), LossBlock(gl))
    u = extract_u(s, SelectionMasks.standard(h.n))
    target = h.h @ h.h + np.diag(gl**2)
    rhs = 4.0 * alpha**2 * math.pi**2 * _solve_resolvent(target, np.eye(h.n))
    return float(np.max(np.abs(u.conj().T @ u - rhs)))


def verify_gram_identity(h_matrix, gamma_diag, params) -> float:
    """Maximum deviation from the closed-form Gram matrix.

    Exact (to round-off) only when H commutes with Gamma, e.g. scalar loss.
    Otherwise the deviation measures the commutator obstruction and is
    returned without any assertion.
    """
    return gram_deviation(h_matrix, gamma_diag, params.alpha)


def unitarity_deviation(s: np.ndarray) -> float:
    return float(np.max(np.abs(s @ s.conj().T - np.eye(s.shape[0]))))


def approximation_gap(h: BlockHamiltonian, alpha: float, loss: LossBlock | None = None) -> float:
    w = CouplingMatrix.perfect(alpha, h.n)
    return float(np.max(np.abs(build_approx_s(h, w, loss) - build_exact_s(h, w, loss))))
