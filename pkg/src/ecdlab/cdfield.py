"""Exact counterdiabatic fields, the generator identity, adiabatic targets."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .algebra import ControlSet
from .linalg import commutator, dagger, hermitian_eig

S_SLACK = 1e-12
DEFAULT_GAP_TOL = 1e-8


class DegenerateSpectrum(ArithmeticError):
    def __init__(self, gap: float, s: float):
        super().__init__(f"instantaneous gap {gap:.3e} below tolerance at s={s:.6g}")
        self.gap = gap
        self.s = s


class GaugeTrackingError(RuntimeError):
    pass


def _const(value: float) -> Callable:
    def f(s):
        return np.full(np.shape(s), float(value))
    return f


@dataclass(frozen=True)
class ControlSystem:
    """H(s) = sum_k u_k(s) H_k over rescaled time s in [0, 1].

    ``u`` and ``du`` hold vectorized callables of s; ``du`` are derivatives
    with respect to s. Physical time is t = s * tau, so d/dt = (1/tau) d/ds.
    """

    controls: ControlSet
    u: tuple
    du: tuple
    tau: float
    name: str = ""

    def __post_init__(self):
        if len(self.u) != len(self.controls) or len(self.du) != len(self.controls):
            raise ValueError("need one control function and one derivative per channel")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "u", tuple(self.u))
        object.__setattr__(self, "du", tuple(self.du))

    @property
    def dim(self) -> int:
        return self.controls.dim

    @property
    def matrices(self) -> np.ndarray:
        return self.controls.matrices

    def with_tau(self, tau: float) -> "ControlSystem":
        return ControlSystem(self.controls, self.u, self.du, tau, self.name)

    def coefficients(self, s) -> np.ndarray:
        """Control values u_k(s), shape (M,) + shape(s)."""
        return np.array([np.broadcast_to(f(s), np.shape(s)) for f in self.u], dtype=float)


def constant_system(H: np.ndarray, tau: float = 1.0) -> ControlSystem:
    """A time-independent system with the single channel H."""
    return ControlSystem(ControlSet(np.asarray(H)[None]), (_const(1.0),), (_const(0.0),), tau)


def _check_s(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if np.any(s < -S_SLACK) or np.any(s > 1 + S_SLACK):
        raise ValueError("rescaled time s must lie in [0, 1]")
    return s


def _combine(coeffs: np.ndarray, mats: np.ndarray) -> np.ndarray:
    return np.tensordot(np.moveaxis(coeffs, 0, -1), mats, axes=([-1], [0]))


def evaluate_H(sys: ControlSystem, s) -> np.ndarray:
    s = _check_s(s)
    return _combine(sys.coefficients(s), sys.matrices)


def evaluate_dH(sys: ControlSystem, s) -> np.ndarray:
    """d H / d s (multiply by 1/tau for the physical-time derivative)."""
    s = _check_s(s)
    coeffs = np.array([np.broadcast_to(f(s), s.shape) for f in sys.du], dtype=float)
    return _combine(coeffs, sys.matrices)


def _min_gaps(w: np.ndarray) -> np.ndarray:
    if w.shape[-1] < 2:
        return np.full(w.shape[:-1], np.inf)
    return np.min(np.diff(w, axis=-1), axis=-1)


def _raise_if_degenerate(w, s, gap_tol):
    gaps = _min_gaps(w)
    bad = np.nonzero(np.atleast_1d(gaps) <= gap_tol)[0]
    if bad.size:
        k = bad[0]
        raise DegenerateSpectrum(float(np.atleast_1d(gaps)[k]), float(np.atleast_1d(s)[k]))


def cd_exact(sys: ControlSystem, s, gap_tol: float = DEFAULT_GAP_TOL) -> np.ndarray:
    """Counterdiabatic field in physical-time units at s (scalar or array).

    Built from spectral projectors only, so no eigenvector gauge enters:
    H_CD = i sum_{m != n} P_m (dH/dt) P_n / (E_n - E_m).
    The sum runs inside each common invariant subspace of the controls;
    levels in different subspaces are never coupled, so crossings between
    them are harmless and only intra-block gaps are checked.
    """
    s = _check_s(s)
    H = evaluate_H(sys, s)
    dH = evaluate_dH(sys, s) / sys.tau
    Hcd = np.zeros_like(H)
    for Q in sys.controls.blocks:
        if Q.shape[1] < 2:
            continue
        Qd = np.conj(Q.T)
        w, V = hermitian_eig(Qd @ H @ Q)
        _raise_if_degenerate(w, s, gap_tol)
        Md = dagger(V) @ (Qd @ dH @ Q) @ V
        denom = w[..., None, :] - w[..., :, None]  # E_n - E_m at [m, n]
        off = ~np.eye(Q.shape[1], dtype=bool)
        K = np.zeros_like(Md)
        K[..., off] = 1j * Md[..., off] / denom[..., off]
        W = Q @ V
        Hcd = Hcd + W @ K @ dagger(W)
    return (Hcd + dagger(Hcd)) / 2


def cd_su2_analytic(ux, uz, dux, duz):
    """sigma_y coefficient of H_CD for H = ux sigma_x + uz sigma_z (time derivatives)."""
    ux, uz, dux, duz = (np.asarray(v, dtype=float) for v in (ux, uz, dux, duz))
    r2 = ux * ux + uz * uz
    if np.any(r2 == 0):
        raise ZeroDivisionError("zero field: H_CD undefined where ux = uz = 0")
    out = -0.5 * (ux * duz - dux * uz) / r2
    return float(out) if out.ndim == 0 else out


def generator_residual(sys: ControlSystem, s: float, fd_step: float = 1e-6,
                       gap_tol: float = DEFAULT_GAP_TOL) -> float:
    """Frobenius norm of dH/dt - i[H, H_CD] - dD at s.

    dE_n/dt comes from a finite difference in s with step ``fd_step``.
    """
    s = float(_check_s(s))
    H = evaluate_H(sys, s)
    dH = evaluate_dH(sys, s) / sys.tau
    Hcd = cd_exact(sys, s, gap_tol)
    # second-order stencils: central inside, one-sided at the ends
    if s - fd_step < 0:
        pts, coef = s + fd_step * np.arange(3), np.array([-1.5, 2.0, -0.5])
    elif s + fd_step > 1:
        pts, coef = s - fd_step * np.arange(3), np.array([1.5, -2.0, 0.5])
    else:
        pts, coef = np.array([s - fd_step, s + fd_step]), np.array([-0.5, 0.5])
    H_pts = evaluate_H(sys, pts)
    dD = np.zeros_like(H)
    for Q in sys.controls.blocks:
        Qd = np.conj(Q.T)
        w, V = hermitian_eig(Qd @ H @ Q)
        w_pts = hermitian_eig(Qd @ H_pts @ Q).eigenvalues
        dE = (coef @ w_pts) / (fd_step * sys.tau)
        W = Q @ V
        dD = dD + (W * dE[None, :]) @ dagger(W)
    R = dH - 1j * commutator(H, Hcd) - dD
    return float(np.linalg.norm(R))


def _fix_gauge(V: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of each column real positive."""
    k = np.argmax(np.abs(V), axis=-2)
    pivot = np.take_along_axis(V, k[..., None, :], axis=-2)
    return V * (np.conj(pivot) / np.abs(pivot))


def _check_level_gap(w, s, label, gap_tol):
    """Raise if level ``label`` comes within ``gap_tol`` of a neighbour."""
    w = np.atleast_2d(w)
    near = np.full(w.shape[0], np.inf)
    if label > 0:
        near = np.minimum(near, w[:, label] - w[:, label - 1])
    if label < w.shape[1] - 1:
        near = np.minimum(near, w[:, label + 1] - w[:, label])
    bad = np.nonzero(near <= gap_tol)[0]
    if bad.size:
        k = bad[0]
        raise DegenerateSpectrum(float(near[k]), float(np.atleast_1d(s)[k]))


def eigenbasis(sys: ControlSystem, s):
    """Eigenvalues and gauge-fixed eigenvectors at s (no continuity tracking)."""
    s = _check_s(s)
    w, V = hermitian_eig(evaluate_H(sys, s))
    return w, _fix_gauge(V)


def ground_state(sys: ControlSystem, s, gap_tol: float = 0.0) -> np.ndarray:
    """Instantaneous ground state(s); phase is gauge-fixed but not tracked."""
    w, V = eigenbasis(sys, s)
    _check_level_gap(w, s, 0, gap_tol)
    return V[..., :, 0]


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _energy_integral(sys: ControlSystem, s_grid: np.ndarray, label: int) -> np.ndarray:
    """int_0^s E_label(s') ds' at each grid point (Gauss-Legendre panels)."""
    a, b = s_grid[:-1], s_grid[1:]
    half = (b - a) / 2
    nodes = (a + half)[:, None] + half[:, None] * _GL_X[None, :]
    w = hermitian_eig(evaluate_H(sys, nodes.ravel())).eigenvalues[:, label].reshape(nodes.shape)
    panels = half * (w @ _GL_W)
    return np.concatenate([[0.0], np.cumsum(panels)])


def adiabatic_path(sys: ControlSystem, s_grid: Sequence[float], label: int = 0,
                   max_step: float = 1e-3, gap_tol: float = DEFAULT_GAP_TOL) -> np.ndarray:
    """Adiabatically evolved eigenvector ``label`` at each point of ``s_grid``.

    Includes the dynamic phase exp(-i tau int_0^s E ds'); the eigenvector
    gauge is carried continuously from s = 0 on a sub-grid of spacing at
    most ``max_step``.
    """
    s_out = np.asarray(_check_s(s_grid), dtype=float)
    if np.any(np.diff(s_out) < 0):
        raise ValueError("s_grid must be ascending")
    end = float(s_out[-1]) if s_out.size else 0.0
    n = max(1, int(np.ceil(end / max_step)))
    fine = np.union1d(np.linspace(0.0, end, n + 1), s_out)
    w, V = hermitian_eig(evaluate_H(sys, fine))
    _check_level_gap(w, fine, label, gap_tol)
    vecs = _fix_gauge(V)[:, :, label]
    for k in range(1, len(fine)):
        ov = np.vdot(vecs[k - 1], vecs[k])
        if abs(ov) < 0.5:
            raise GaugeTrackingError(f"eigenvector {label} jumped between s={fine[k - 1]:.6g} and s={fine[k]:.6g}")
        vecs[k] *= np.conj(ov) / abs(ov)
    phase = np.exp(-1j * sys.tau * _energy_integral(sys, fine, label)) if len(fine) > 1 else np.ones(1)
    idx = np.searchsorted(fine, s_out)
    return vecs[idx] * phase[idx, None]


def adiabatic_target(sys: ControlSystem, s: float, psi0_label: int = 0) -> np.ndarray:
    """Single-point version of :func:`adiabatic_path`."""
    return adiabatic_path(sys, [float(s)], psi0_label)[0]
