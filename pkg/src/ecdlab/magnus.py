"""Magnus expansion terms: nested quadrature, closed forms, short-time expansions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, commutator, dagger

PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
CONVERGENCE_TOL = 1e-8


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class MagnusTerms:
    """First three Magnus exponents over [t0, t0 + T] (skew-Hermitian)."""

    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray
    t0: float
    T: float
    quadrature_nodes: int

    def total(self, order: int = 3) -> np.ndarray:
        return sum((self.M1, self.M2, self.M3)[:order])


def _gauss(n: int, a, b):
    """Gauss-Legendre nodes/weights mapped to [a, b] (a, b may be arrays)."""
    x, w = np.polynomial.legendre.leggauss(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = (b - a) / 2
    return a + half * (x + 1), half * w


def _eval(Hfun: Callable, ts: np.ndarray) -> np.ndarray:
    flat = ts.ravel()
    out = np.asarray(Hfun(flat), dtype=complex)
    if out.ndim != 3 or out.shape[0] != flat.size:
        out = np.array([Hfun(float(t)) for t in flat], dtype=complex)
    return out.reshape(ts.shape + out.shape[-2:])


def _terms(Hfun, t0, T, order, n):
    n_dim = None
    t1, w1 = _gauss(n, t0, t0 + T)
    H1 = _eval(Hfun, t1)
    n_dim = H1.shape[-1]
    zero = np.zeros((n_dim, n_dim), dtype=complex)
    M1 = -1j * np.einsum("i,ijk->jk", w1, H1)
    M2 = M3 = zero
    if order >= 2:
        t2, w2 = _gauss(n, t0, t1)  # (n, n)
        H2 = _eval(Hfun, t2)
        C = commutator(H1[:, None], H2)
        # (1/2) (-i)^2 int int [H1, H2]
        M2 = -0.5 * np.einsum("i,ij,ijkl->kl", w1, w2, C)
        if order >= 3:
            t3, w3 = _gauss(n, t0, t2)  # (n, n, n)
            H3 = _eval(Hfun, t3)
            A1 = H1[:, None, None]
            A2 = H2[:, :, None]
            inner = commutator(A1, commutator(A2, H3)) + commutator(H3, commutator(A2, A1))
            # (1/6) (-i)^3 int int int (...)
            M3 = (1j / 6) * np.einsum("i,ij,ijk,ijklm->lm", w1, w2, w3, inner)
    return M1, M2, M3


def magnus_numeric(Hfun: Callable, t0: float, T: float, order: int = 3,
                   nodes: int = 32, check: bool = True) -> MagnusTerms:
    """Magnus terms of ``Hfun`` over [t0, t0 + T] by nested Gauss-Legendre.

    ``Hfun`` maps a time (or an array of times) to H. With ``check`` the
    node count is doubled and the two results must agree to 1e-8
    (relative to the term size), otherwise :class:`QuadratureError`.
    """
    if not T > 0:
        raise ValueError("interval length T must be positive")
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if nodes < 16:
        raise ValueError("use at least 16 quadrature nodes")
    terms = _terms(Hfun, t0, T, order, nodes)
    if check:
        fine = _terms(Hfun, t0, T, order, 2 * nodes)
        for a, b in zip(terms, fine):
            if np.linalg.norm(a - b) > CONVERGENCE_TOL * max(1.0, np.linalg.norm(b)):
                raise QuadratureError(f"Magnus quadrature not converged with {nodes} nodes")
        terms = fine
        nodes *= 2
    M1, M2, M3 = ((M - dagger(M)) / 2 for M in terms)
    return MagnusTerms(M1, M2, M3, t0, T, nodes)


def levi_civita(i: int, j: int, k: int) -> int:
    return (i - j) * (j - k) * (k - i) // 2


_AXES = "xyz"


def magnus2_su2_analytic(ansatz, generators=("z", "x")) -> np.ndarray:
    """Second Magnus term over one period for two Pauli channels.

    ``ansatz`` carries ``omega``, ``X`` and amplitude arrays ``A``, ``B`` of
    shape (2, L); row 0 drives ``sigma_i``, row 1 ``sigma_j``. Only
    sine/cosine pairs on the same harmonic contribute.
    """
    gi, gj = (_AXES.index(g) if isinstance(g, str) else int(g) for g in generators)
    if gi == gj:
        raise ValueError("need two different generators")
    gk = 3 - gi - gj
    A = np.asarray(ansatz.A, dtype=float)
    B = np.asarray(ansatz.B, dtype=float)
    n = np.arange(1, A.shape[1] + 1)
    mix = np.sum((A[0] * B[1] - B[0] * A[1]) / n)
    pref = 2 * np.pi / ansatz.omega ** (2 - 2 * ansatz.X)
    return -1j * levi_civita(gi, gj, gk) * pref * mix * PAULI[_AXES[gk]]


# coefficient of [a_k, b_l] t^(k+l+2) in the midpoint expansion of Omega_2
_OMEGA2_COEFFS = {
    (0, 0): 1 / 4,
    (1, 0): 1 / 24, (0, 1): -1 / 24,
    (2, 0): 1 / 48, (0, 2): 1 / 48, (1, 1): 0.0,
}


def _taylor_coeffs(F: Callable, x: float, h: float, kmax: int) -> list:
    """f^(k)(x)/k! for k <= kmax by 4th-order central differences."""
    offs = np.arange(-3, 4)
    vals = {o: np.asarray(F(x + o * h), dtype=complex) for o in offs}
    out = [vals[0]]
    if kmax >= 1:
        d1 = (vals[-2] - 8 * vals[-1] + 8 * vals[1] - vals[2]) / (12 * h)
        out.append(d1)
    if kmax >= 2:
        d2 = (-vals[-2] + 16 * vals[-1] - 30 * vals[0] + 16 * vals[1] - vals[2]) / (12 * h * h)
        out.append(d2 / 2)
    return out


def omega2_taylor(A: Callable, B: Callable, t: float, order: int = 4,
                  step: float | None = None) -> np.ndarray:
    """(1/2) int_0^t dt1 int_0^t1 dt2 [A(t1), B(t2)] truncated at t**order.

    Derivatives at the midpoint t/2 come from central differences with
    step ``t/100`` unless ``step`` is given.
    """
    if order > 4:
        raise ValueError("expansion implemented up to t**4")
    if order < 2:
        raise ValueError("the expansion starts at t**2")
    h = step if step is not None else t / 100
    kmax = order - 2
    a = _taylor_coeffs(A, t / 2, h, kmax)
    b = _taylor_coeffs(B, t / 2, h, kmax)
    out = np.zeros_like(a[0])
    for (k, l), c in _OMEGA2_COEFFS.items():
        if k + l + 2 <= order and c:
            out = out + c * t ** (k + l + 2) * commutator(a[k], b[l])
    return out


def omega2_quadrature(A: Callable, B: Callable, t: float, nodes: int = 48) -> np.ndarray:
    """Direct nested-quadrature value of the generalized second Magnus term."""
    t1, w1 = _gauss(nodes, 0.0, t)
    t2, w2 = _gauss(nodes, 0.0, t1)
    A1 = _eval(A, t1)
    B2 = _eval(B, t2)
    return 0.5 * np.einsum("i,ij,ijkl->kl", w1, w2, commutator(A1[:, None], B2))


def infidelity_order(m_solved: int) -> int:
    """Predicted single-period infidelity exponent after matching m CD orders."""
    if m_solved < 0:
        raise ValueError("m_solved must be non-negative")
    return 2 * m_solved + 1
