"""Effective counterdiabatic (E-CD) schedules built from the Fourier ansatz.

A correction drives only the channels already present in the base system:
H_E(s) = sum_k c_k(s) H_k, with c_k oscillating at multiples of omega in
physical time t = s * tau. Amplitudes are fixed by matching the second
Magnus term of H_E over one period to the first Magnus term of H_CD.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .algebra import ControlSet
from .cdfield import ControlSystem, cd_exact, evaluate_H
from .linalg import commutator, hs_inner

log = logging.getLogger(__name__)

MODES = ("standalone", "ontop")
SIGN_TOL = 1e-12


class OmegaTooSmall(ValueError):
    """No full correction period fits into the protocol."""


class InfeasibleTarget(ValueError):
    """A constraint target has a component no channel commutator can reach."""


@dataclass(frozen=True)
class FourierAnsatz:
    """c_k(t) = omega^X sum_j [A_kj sin(j omega t) + B_kj cos(j omega t)].

    ``A`` and ``B`` have shape (M, L) for frozen amplitudes, or (P, M, L)
    together with ``s_nodes`` (P,) for amplitudes interpolated in s.
    """

    omega: float
    A: np.ndarray
    B: np.ndarray
    X: float = 0.5
    s_nodes: np.ndarray | None = None
    residuals: np.ndarray | None = None

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.shape != B.shape or A.ndim not in (2, 3):
            raise ValueError("A and B need equal shape (M, L) or (P, M, L)")
        if A.ndim == 3 and (self.s_nodes is None or len(self.s_nodes) != A.shape[0]):
            raise ValueError("interpolated amplitudes need one s node per row")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def L(self) -> int:
        return self.A.shape[-1]

    @property
    def n_channels(self) -> int:
        return self.A.shape[-2]

    def amplitudes(self, s):
        """(A, B) at s, shapes (M, L) + shape(s)."""
        s = np.asarray(s, dtype=float)
        if self.A.ndim == 2:
            shape = self.A.shape + s.shape
            return (np.broadcast_to(self.A.reshape(self.A.shape + (1,) * s.ndim), shape),
                    np.broadcast_to(self.B.reshape(self.B.shape + (1,) * s.ndim), shape))
        nodes = np.asarray(self.s_nodes, dtype=float)

        def interp(arr):
            flat = arr.reshape(arr.shape[0], -1)
            out = np.array([np.interp(s, nodes, col) for col in flat.T])
            return out.reshape(arr.shape[1:] + s.shape)

        return interp(self.A), interp(self.B)

    def coefficients(self, t, s=None) -> np.ndarray:
        """c_k at physical time t, shape (M,) + shape(t).

        Interpolated amplitudes are read at rescaled time ``s`` (same shape
        as t); frozen amplitudes ignore it.
        """
        t = np.asarray(t, dtype=float)
        if self.A.ndim == 3 and s is None:
            raise ValueError("interpolated amplitudes need the rescaled time s")
        A, B = self.amplitudes(t if s is None else np.broadcast_to(s, t.shape))
        j = np.arange(1, self.L + 1).reshape((1, -1) + (1,) * t.ndim)
        ph = j * self.omega * t
        return self.omega ** self.X * np.sum(A * np.sin(ph) + B * np.cos(ph), axis=1)


@dataclass(frozen=True)
class ECDSchedule:
    """Base system plus an oscillating correction on its own channels.

    ``correction(s)`` returns the coefficients c_k(s), shape (M,) + shape(s),
    in physical-time energy units. In ``standalone`` mode only H_E drives the
    system; in ``ontop`` mode the total is H + H_E.
    """

    base: ControlSystem
    correction: Callable
    omega: float = 0.0
    mode: str = "standalone"
    n_periods: int = 0
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def tau(self) -> float:
        return self.base.tau

    @property
    def dim(self) -> int:
        return self.base.dim

    def coefficients(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        c = np.asarray(self.correction(s), dtype=float)
        return np.broadcast_to(c, (len(self.base.controls),) + s.shape)

    def correction_hamiltonian(self, s) -> np.ndarray:
        c = self.coefficients(s)
        return np.tensordot(np.moveaxis(c, 0, -1), self.base.matrices, axes=([-1], [0]))

    def base_hamiltonian(self, s) -> np.ndarray:
        return evaluate_H(self.base, s)

    def hamiltonian(self, s) -> np.ndarray:
        """The Hamiltonian actually applied (physical-time units)."""
        H_E = self.correction_hamiltonian(s)
        if self.mode == "ontop":
            return self.base_hamiltonian(s) + H_E
        return H_E

    def with_mode(self, mode: str) -> "ECDSchedule":
        return ECDSchedule(self.base, self.correction, self.omega, mode, self.n_periods,
                           self.label, dict(self.meta))


@dataclass(frozen=True)
class ExactCDSchedule:
    """Reference protocol driven by the exact CD field (alone or on top of H)."""

    base: ControlSystem
    mode: str = "standalone"
    omega: float = 0.0
    label: str = "exact_cd"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def tau(self) -> float:
        return self.base.tau

    def correction_hamiltonian(self, s) -> np.ndarray:
        return cd_exact(self.base, s)

    def base_hamiltonian(self, s) -> np.ndarray:
        return evaluate_H(self.base, s)

    def hamiltonian(self, s) -> np.ndarray:
        Hcd = cd_exact(self.base, s)
        return Hcd + evaluate_H(self.base, s) if self.mode == "ontop" else Hcd


def adiabatic_schedule(base: ControlSystem) -> ECDSchedule:
    """The uncorrected protocol expressed as a schedule (zero correction)."""
    M = len(base.controls)
    return ECDSchedule(base, lambda s: np.zeros((M,) + np.shape(s)), 0.0, "ontop", 0, "adiabatic")


def n_periods_for(omega: float, tau: float) -> int:
    """Largest integer number of full periods: floor(omega tau / 2 pi)."""
    return int(np.floor(omega * tau / (2 * np.pi) + 1e-12))


def snap_omega(omega: float, tau: float) -> tuple:
    """(omega', N_T) with omega' = 2 pi N_T / tau so N_T periods fit exactly."""
    n = n_periods_for(omega, tau)
    if n < 1:
        raise OmegaTooSmall(f"omega={omega:.6g} fits no full period in tau={tau:.6g}")
    return 2 * np.pi * n / tau, n


def _resolve_omega(omega, tau, snap):
    if not omega > 0:
        raise OmegaTooSmall("omega must be positive")
    if snap:
        return snap_omega(omega, tau)
    return float(omega), n_periods_for(omega, tau)


def _pair_generator(base: ControlSystem, k: int, l: int) -> np.ndarray:
    """[H_k, H_l] / (2i): the direction a sin(k)/cos(l) pair generates."""
    mats = base.matrices
    return commutator(mats[k], mats[l]) / 2j


def projected_fcd(base: ControlSystem, G: np.ndarray) -> Callable:
    """f(s) = <G, H_CD(s)> / <G, G> from the exact CD field."""
    norm = hs_inner(G, G).real

    def f(s):
        Hcd = cd_exact(base, s)
        return np.real(np.einsum("ij,...ij->...", np.conj(G), Hcd)) / norm

    return f


def synth_su2_first_order(base: ControlSystem, fcd: Callable | None, omega: float,
                          gens: tuple = (0, 1), mode: str = "standalone", snap: bool = True,
                          amp_offset: float = 0.0, phase_offset: float = 0.0,
                          third_order: bool = False) -> ECDSchedule:
    """Interpolated first-order E-CD schedule on two channels.

    ``gens = (i, j)``: channel i carries sqrt(|f| w) sin(w t), channel j
    carries sign(f) sqrt(|f| w) cos(w t), where f is the coefficient of H_CD
    along G = [H_i, H_j]/(2i) (computed from the exact field when ``fcd`` is
    None). ``amp_offset`` and ``phase_offset`` perturb the sine channel as
    (1 + delta) sin(w t) and sin(w t + 2 pi delta).
    """
    i, j = gens
    if i == j:
        raise ValueError("need two different channels")
    tau = base.tau
    w, n = _resolve_omega(omega, tau, snap)
    if fcd is None:
        fcd = projected_fcd(base, _pair_generator(base, i, j))
    M = len(base.controls)

    def correction(s):
        s = np.asarray(s, dtype=float)
        f = np.asarray(fcd(s), dtype=float)
        amp = np.sqrt(np.abs(f) * w)
        sgn = np.where(f >= 0, 1.0, -1.0)
        ph = w * s * tau
        out = np.zeros((M,) + s.shape)
        out[i] = (1 + amp_offset) * amp * np.sin(ph + 2 * np.pi * phase_offset)
        out[j] = sgn * amp * np.cos(ph)
        if third_order:
            out[i] = out[i] - 4 * amp * np.sin(2 * ph)
        return out

    order = "third" if third_order else "first"
    return ECDSchedule(base, correction, w, mode, n, f"su2_{order}_order",
                       {"gens": (i, j), "amp_offset": amp_offset, "phase_offset": phase_offset})


def synth_su2_third_order(base: ControlSystem, fcd: Callable | None, omega: float,
                          gens: tuple = (0, 1), mode: str = "standalone",
                          snap: bool = True) -> ECDSchedule:
    """First-order schedule plus -4 A sqrt(w) sin(2 w t) on the sine channel,
    which cancels the third Magnus term of H_E over each period."""
    return synth_su2_first_order(base, fcd, omega, gens, mode, snap, third_order=True)


def synth_two_qubit(base: ControlSystem, fcd: Callable | None, omega: float,
                    mode: str = "standalone", snap: bool = True, **kw) -> ECDSchedule:
    """c1 = -sqrt(|f| w) cos(w s tau) on H1, c2 = sqrt(|f| w) sin(w s tau) on H2,
    with f the coefficient of H_CD along H3 = [H1, H2]/(2i)."""
    if fcd is None:
        from .models import TQ_H3
        fcd = projected_fcd(base, TQ_H3)
    # G for (sin on H2, cos on H1) is [H2, H1]/(2i) = -H3, so f_G = -f
    sched = synth_su2_first_order(base, lambda s: -np.asarray(fcd(s)), omega, (1, 0), mode, snap, **kw)
    return ECDSchedule(sched.base, sched.correction, sched.omega, mode, sched.n_periods,
                       "two_qubit", sched.meta)


def _three_level_fcd(base: ControlSystem):
    from .models import three_level_fcd

    def f(s):
        return three_level_fcd(cd_exact(base, s))

    return f


def _sign_changes(s, f, fun=None) -> np.ndarray:
    """Zeros of a sampled function; refined with brentq when ``fun`` is given."""
    sg = np.sign(f)
    idx = np.nonzero(sg[:-1] * sg[1:] < 0)[0]
    if fun is None:
        return 0.5 * (s[idx] + s[idx + 1])
    return np.array([brentq(fun, s[i], s[i + 1], xtol=1e-15, rtol=1e-15) for i in idx])


def synth_three_level(base: ControlSystem, fcds: Callable | None, omega: float,
                      mode: str = "standalone", snap: bool = True,
                      check_points: int = 2001) -> ECDSchedule:
    """Three-level E-CD schedule on channels (sweep, x12, x23).

    c1 = A cos(wt) - B cos(2wt) on x12, c2 = C sin(wt) - D cos(3wt) on x23,
    c3 = B sin(2wt) + D sin(3wt) on the sweep channel, all times sqrt(w), with
    A = -sign(f13) sqrt(2|f13|), B = 2 sqrt(|f12|), C = sqrt(2|f13|),
    D = sqrt(6|f23|). ``fcds(s)`` returns (f12, f23, f13); None means the
    exact field.
    """
    tau = base.tau
    w, n = _resolve_omega(omega, tau, snap)
    if fcds is None:
        fcds = _three_level_fcd(base)
    grid = np.linspace(0.0, 1.0, check_points)
    f12, f23, f13 = (np.asarray(v) for v in fcds(grid))
    for name, vals in (("f12", f12), ("f23", f23)):
        worst = float(np.max(vals))
        if worst > SIGN_TOL:
            k = int(np.argmax(vals))
            raise ValueError(f"{name} must be non-positive; found {worst:.3e} at s={grid[k]:.4f}")
    crossings = _sign_changes(grid, f13, lambda x: float(np.asarray(fcds(np.array([x]))[2])[0]))
    if crossings.size:
        log.info("f13 changes sign near s = %s", ", ".join(f"{c:.4f}" for c in crossings))
    sw = np.sqrt(w)
    M = len(base.controls)

    def correction(s):
        s = np.asarray(s, dtype=float)
        a12, a23, a13 = (np.asarray(v, dtype=float) for v in fcds(s))
        A = -np.where(a13 >= 0, 1.0, -1.0) * np.sqrt(2 * np.abs(a13))
        B = 2 * np.sqrt(np.abs(a12))
        C = np.sqrt(2 * np.abs(a13))
        D = np.sqrt(6 * np.abs(a23))
        ph = w * s * tau
        out = np.zeros((M,) + s.shape)
        out[1] = sw * (A * np.cos(ph) - B * np.cos(2 * ph))
        out[2] = sw * (C * np.sin(ph) - D * np.cos(3 * ph))
        out[0] = sw * (B * np.sin(2 * ph) + D * np.sin(3 * ph))
        return out

    zeros = [float(c) for c in crossings]
    # sqrt(|f13|) has square-root kinks at the zeros; the engine grades its steps there
    return ECDSchedule(base, correction, w, mode, n, "three_level",
                       {"f13_sign_changes": zeros, "breakpoints": zeros})


# --- generic per-period solver -------------------------------------------------

def _pairs(M: int) -> list:
    return [(k, l) for k in range(M) for l in range(M) if k != l]


def solve_constraints_numeric(targets: Sequence[np.ndarray], channels: ControlSet, omega: float,
                              L: int, pairs: Sequence[tuple] | None = None,
                              s_nodes: Sequence[float] | None = None,
                              tol: float = 1e-8) -> FourierAnsatz:
    """Amplitudes whose second Magnus term over each period equals -i K_n.

    ``targets`` are the per-period integrals K_n = int H_CD dt. For a
    sine on channel k and a cosine on channel l at harmonic n the second
    Magnus term over one period is -(T/(2n)) A B [H_k, H_l] (X = 1/2), so
    each period reduces to a linear least-squares problem for the products
    x_kl followed by a square-root split. Each active pair gets its own
    harmonic so pairs never interfere; ``pairs`` fixes the
    (sine channel, cosine channel) assignment in harmonic order.
    """
    mats = channels.matrices
    M = len(mats)
    T = 2 * np.pi / omega
    cand = list(pairs) if pairs is not None else [(k, l) for k in range(M) for l in range(k + 1, M)]
    gens = np.array([(commutator(mats[k], mats[l]) / 2j).ravel() for k, l in cand])
    # K = (T/2) sum_p x_p (2 G_p) / n_p  ->  solve for y_p = x_p / n_p
    Gm = np.concatenate([gens.real, gens.imag], axis=1).T * T
    targets = [np.asarray(K, dtype=complex) for K in targets]
    A = np.zeros((len(targets), M, L))
    B = np.zeros((len(targets), M, L))
    residuals = np.zeros(len(targets))
    for p, K in enumerate(targets):
        rhs = np.concatenate([K.real.ravel(), K.imag.ravel()])
        y, *_ = np.linalg.lstsq(Gm, rhs, rcond=None)
        R = (rhs - Gm @ y)[: K.size] + 1j * (rhs - Gm @ y)[K.size:]
        residuals[p] = np.linalg.norm(R)
        scale = max(1.0, float(np.linalg.norm(K)))
        if residuals[p] > tol * scale:
            R = R.reshape(K.shape)
            m, n = np.unravel_index(np.argmax(np.abs(R)), R.shape)
            raise InfeasibleTarget(
                f"period {p}: target not reachable by channel commutators; "
                f"largest unreachable entry ({m}, {n}) = {R[m, n]:.3e}, residual {residuals[p]:.3e}")
        active = [q for q in range(len(cand)) if abs(y[q]) > 0]
        if pairs is None:
            active = [q for q in active if abs(y[q]) > 1e-14 * max(1.0, np.max(np.abs(y)))]
        if len(active) > L:
            raise ValueError(f"need L >= {len(active)} harmonics for the active channel pairs")
        slots = range(len(cand)) if pairs is not None else active
        for h, q in enumerate(slots):
            if q not in active:
                continue
            k, l = cand[q]
            n = h + 1
            x = y[q] * n
            A[p, k, h] = np.sqrt(n * abs(y[q]))
            B[p, l, h] = np.sign(x) * np.sqrt(n * abs(y[q]))
    if s_nodes is None and len(targets) == 1:
        return FourierAnsatz(omega, A[0], B[0], 0.5, None, residuals)
    if s_nodes is None:
        s_nodes = (np.arange(len(targets)) + 0.5) / len(targets)
    return FourierAnsatz(omega, A, B, 0.5, np.asarray(s_nodes, dtype=float), residuals)


def period_targets(base: ControlSystem, omega: float, nodes: int = 16) -> tuple:
    """(K_n, s_mid) with K_n = int over period n of H_CD dt (Gauss-Legendre)."""
    tau = base.tau
    w, n = snap_omega(omega, tau)
    edges = np.linspace(0.0, 1.0, n + 1)
    x, wt = np.polynomial.legendre.leggauss(nodes)
    a, b = edges[:-1], edges[1:]
    half = (b - a) / 2
    s = (a + half)[:, None] + half[:, None] * x[None, :]
    Hcd = cd_exact(base, s)
    K = np.einsum("pq,pqij->pij", half[:, None] * wt[None, :] * tau, Hcd)
    return list(K), 0.5 * (a + b)


def schedule_from_ansatz(base: ControlSystem, ansatz: FourierAnsatz,
                         mode: str = "standalone") -> ECDSchedule:
    """Wrap a (possibly interpolated) ansatz as a schedule on ``base``."""
    if ansatz.n_channels != len(base.controls):
        raise ValueError("ansatz channel count differs from the base control set")
    tau = base.tau

    def correction(s):
        s = np.asarray(s, dtype=float)
        return ansatz.coefficients(s * tau, s if ansatz.A.ndim == 3 else None)

    return ECDSchedule(base, correction, ansatz.omega, mode,
                       n_periods_for(ansatz.omega, tau), "numeric")
