"""Propagation of i d/ds psi = tau H_total(s) psi and scalar figures of merit.

The integrator is the fourth-order commutator-free scheme with two
exponentials per step, each evaluated from Gauss-node samples of H:

    U_step = exp(-i h tau (a1 H1 + a2 H2)) exp(-i h tau (a2 H1 + a1 H2)),

with a1 = (3 - 2 sqrt 3)/12, a2 = (3 + 2 sqrt 3)/12 and H1, H2 taken at
the Gauss points c = 1/2 -+ sqrt(3)/6 of the step. All step exponentials
of a chunk are computed in one batched eigendecomposition.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cdfield import ControlSystem, evaluate_H, ground_state
from .ecd import ECDSchedule, ExactCDSchedule, adiabatic_schedule
from .linalg import expm_skew, frobenius, hermitian_eig, ordered_product

log = logging.getLogger(__name__)

SQ3 = np.sqrt(3.0)
NODES = (0.5 - SQ3 / 6, 0.5 + SQ3 / 6)
ALPHA1 = (3 - 2 * SQ3) / 12
ALPHA2 = (3 + 2 * SQ3) / 12

CERT_TOL = 1e-8
MIN_STEPS_PER_PERIOD = 32
MIN_TOTAL_STEPS = 1000
MAX_PHASE_PER_STEP = 0.25  # tau * h * |E|_max, keeps the error constant small
CHUNK = 1 << 15
TAIL_FRACTION = 0.1
MOVING_WINDOW = 20
GRADE_BAND = 16  # graded region half-width, in uniform steps
GRADE_POINTS = 64
GRADE_POWER = 4


class NonConvergence(RuntimeError):
    """Step halving failed to certify the final infidelity.

    ``delta`` is the last step-halving change and ``trajectory`` the finest
    (uncertified) run, so sweeps can record the point as non-certified.
    """

    def __init__(self, msg: str, delta: float = np.nan, trajectory=None):
        super().__init__(msg)
        self.delta = delta
        self.trajectory = trajectory


class BudgetInfeasible(ValueError):
    """No frequency with at least one full period meets the strength budget."""


@dataclass
class Trajectory:
    s_grid: np.ndarray
    states: np.ndarray
    populations: np.ndarray
    infidelity_series: np.ndarray
    n_steps: int = 0
    cert_delta: float = np.nan
    meta: dict = field(default_factory=dict)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_infidelity(self) -> float:
        return float(self.infidelity_series[-1])

    def tail_average(self, fraction: float = TAIL_FRACTION) -> float:
        return tail_average(self.s_grid, self.infidelity_series, fraction)


def tail_average(s: np.ndarray, y: np.ndarray, fraction: float = TAIL_FRACTION) -> float:
    """Mean of ``y`` over the last ``fraction`` of the s range."""
    s = np.asarray(s)
    mask = s >= s[-1] - fraction * (s[-1] - s[0])
    return float(np.mean(np.asarray(y)[mask]))


def moving_average(y: Sequence[float], window: int = MOVING_WINDOW) -> np.ndarray:
    """Centred average of ``window`` surrounding samples (shrinks at the edges)."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    out = np.empty(n)
    lo_off = window // 2
    for i in range(n):
        lo = max(0, i - lo_off)
        hi = min(n, lo + window)
        lo = max(0, hi - window)
        out[i] = np.mean(y[lo:hi])
    return out


def infidelity(psi: np.ndarray, gs: np.ndarray) -> float | np.ndarray:
    """1 - |<psi|gs>|^2 for unit vectors (stacks allowed along leading axes).

    Evaluated as the squared norm of the part of psi orthogonal to gs, which
    keeps full relative precision for tiny infidelities.
    """
    psi = np.asarray(psi, dtype=complex)
    gs = np.asarray(gs, dtype=complex)
    ov = np.sum(np.conj(gs) * psi, axis=-1)
    perp = psi - ov[..., None] * gs
    val = np.clip(np.sum(np.abs(perp) ** 2, axis=-1), 0.0, 1.0)
    return float(val) if np.ndim(val) == 0 else val


def _hamiltonian_fn(target) -> tuple:
    """(H_total(s), tau, base system) for a schedule or a bare ControlSystem."""
    if isinstance(target, (ECDSchedule, ExactCDSchedule)):
        return target.hamiltonian, target.tau, target.base
    if isinstance(target, ControlSystem):
        return (lambda s: evaluate_H(target, s)), target.tau, target
    raise TypeError("expected an ECDSchedule or a ControlSystem")


def _step_unitaries(Hfun, tau, s0: np.ndarray, hh: np.ndarray, clip: bool = True) -> np.ndarray:
    a, b = s0 + NODES[0] * hh, s0 + NODES[1] * hh
    if clip:
        a, b = np.clip(a, 0.0, 1.0), np.clip(b, 0.0, 1.0)
    H1, H2 = Hfun(a), Hfun(b)
    scale = (tau * hh)[:, None, None]
    first = expm_skew(scale * (ALPHA2 * H1 + ALPHA1 * H2))
    second = expm_skew(scale * (ALPHA1 * H1 + ALPHA2 * H2))
    return second @ first


def interval_propagator(Hfun: Callable, t0: float, t1: float, n_steps: int) -> np.ndarray:
    """CF4 propagator of i dU/dt = H(t) U over [t0, t1] (any time variable)."""
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    e = np.linspace(t0, t1, n_steps + 1)
    return ordered_product(_step_unitaries(Hfun, 1.0, e[:-1], np.diff(e), clip=False))


def _segment_propagators(Hfun: Callable, tau: float, edges: np.ndarray, per_seg: int,
                         skip: frozenset = frozenset()) -> np.ndarray:
    """Propagator over each [edges[k], edges[k+1]] using ``per_seg`` CF4 steps.

    Segments listed in ``skip`` are left as identity for the caller to fill.
    """
    n_seg = len(edges) - 1
    frac = np.arange(per_seg) / per_seg
    todo = np.array([k for k in range(n_seg) if k not in skip], dtype=int)
    probe = Hfun(np.array([0.0]))
    dim = probe.shape[-1]
    out = np.broadcast_to(np.eye(dim, dtype=complex), (n_seg, dim, dim)).copy()
    segs_per_chunk = max(1, CHUNK // per_seg)
    for c0 in range(0, len(todo), segs_per_chunk):
        ks = todo[c0:c0 + segs_per_chunk]
        width = edges[ks + 1] - edges[ks]
        s0 = (edges[ks][:, None] + width[:, None] * frac[None, :]).ravel()
        hh = np.repeat(width / per_seg, per_seg)
        U = _step_unitaries(Hfun, tau, s0, hh).reshape(len(ks), per_seg, dim, dim)
        # ordered product along the step axis: later steps multiply on the left
        while U.shape[1] > 1:
            if U.shape[1] % 2:
                eye = np.broadcast_to(np.eye(dim, dtype=complex), (U.shape[0], 1, dim, dim))
                U = np.concatenate([U, eye], axis=1)
            U = U[:, 1::2] @ U[:, 0::2]
        out[ks] = U[:, 0]
    return out


def _graded_edges(a: float, b: float, per_seg: int, breaks: Sequence[float]) -> np.ndarray:
    """Step edges on [a, b]: uniform, except geometrically graded towards each
    breakpoint so square-root kinks in the controls keep the full order."""
    h = (b - a) / per_seg
    edges = [np.linspace(a, b, per_seg + 1)]
    for c in breaks:
        band = GRADE_BAND * h
        j = np.arange(1, GRADE_POINTS + 1) / GRADE_POINTS
        offs = band * j ** GRADE_POWER
        edges.append(c - offs)
        edges.append(c + offs)
        edges.append([c])
    e = np.unique(np.clip(np.concatenate(edges), a, b))
    # drop uniform edges that crowd the graded points
    keep = np.concatenate([[True], np.diff(e) > 1e-14 * max(1.0, abs(b))])
    return e[keep]


def _edges_propagator(Hfun, tau, edges: np.ndarray) -> np.ndarray:
    """Ordered product of CF4 steps on an arbitrary edge grid (chunked)."""
    total = None
    for c0 in range(0, len(edges) - 1, CHUNK):
        e = edges[c0:c0 + CHUNK + 1]
        U = ordered_product(_step_unitaries(Hfun, tau, e[:-1], np.diff(e)))
        total = U if total is None else U @ total
    return total


def _run(Hfun, tau, psi0, s_out, per_seg, breaks=()):
    edges = np.concatenate([[0.0], s_out]) if s_out[0] > 0 else np.asarray(s_out, dtype=float)
    n_seg = len(edges) - 1
    owner = {}
    for c in breaks:
        k = int(np.clip(np.searchsorted(edges, c, side="right") - 1, 0, n_seg - 1))
        owner.setdefault(k, []).append(c)
    U = _segment_propagators(Hfun, tau, edges, per_seg, frozenset(owner))
    for k, inside in owner.items():
        U[k] = _edges_propagator(Hfun, tau, _graded_edges(edges[k], edges[k + 1], per_seg, inside))
    states = np.empty((len(edges), len(psi0)), dtype=complex)
    states[0] = psi0
    for k in range(n_seg):
        states[k + 1] = U[k] @ states[k]
    return states if s_out[0] == 0 else states[1:]


def default_steps(target, n_out: int, steps_per_period: int = MIN_STEPS_PER_PERIOD * 2) -> int:
    """Total CF4 step count from the oscillation and energy-scale contracts."""
    Hfun, tau, _ = _hamiltonian_fn(target)
    probe = np.linspace(0.0, 1.0, 257)
    emax = float(np.max(np.abs(hermitian_eig(Hfun(probe)).eigenvalues)))
    n = max(MIN_TOTAL_STEPS, int(np.ceil(tau * emax / MAX_PHASE_PER_STEP)))
    omega = getattr(target, "omega", 0.0)
    if omega:
        periods = omega * tau / (2 * np.pi)
        n = max(n, int(np.ceil(max(MIN_STEPS_PER_PERIOD, steps_per_period) * periods)))
    return max(n, n_out)


def propagate(target, psi0: np.ndarray | None = None, steps_per_period: int = 64,
              outputs: Sequence[float] | int = 1001, n_steps: int | None = None,
              certify: bool = True, max_refine: int = 4, cert_tol: float = CERT_TOL) -> Trajectory:
    """Integrate from s = 0 to 1 and record the state on ``outputs``.

    ``target`` is an :class:`ECDSchedule` or a bare ControlSystem (the
    uncorrected protocol). ``psi0`` defaults to the ground state of the base
    Hamiltonian at s = 0. With ``certify`` the run is repeated with half the
    step; the final-infidelity change is the convergence certificate and
    must stay below ``cert_tol``, refining up to ``max_refine`` times.
    """
    Hfun, tau, base = _hamiltonian_fn(target)
    if isinstance(outputs, (int, np.integer)):
        s_out = np.linspace(0.0, 1.0, int(outputs))
    else:
        s_out = np.asarray(outputs, dtype=float)
    if s_out.size == 0 or np.any(np.diff(s_out) <= 0) or s_out[0] < 0 or s_out[-1] > 1:
        raise ValueError("outputs must be strictly increasing within [0, 1]")
    if psi0 is None:
        psi0 = ground_state(base, 0.0)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("psi0 must be a unit vector")
    if steps_per_period < MIN_STEPS_PER_PERIOD:
        raise ValueError(f"steps_per_period must be at least {MIN_STEPS_PER_PERIOD}")
    n_seg = len(s_out) if s_out[0] > 0 else len(s_out) - 1
    total = n_steps if n_steps is not None else default_steps(target, n_seg, steps_per_period)
    per_seg = max(1, int(np.ceil(total / max(n_seg, 1))))

    gs = ground_state(base, s_out)
    if gs.ndim == 1:
        gs = gs[None]

    breaks = tuple(getattr(target, "meta", {}).get("breakpoints", ()))

    def run(k):
        st = _run(Hfun, tau, psi0, s_out, k, breaks)
        return st, infidelity(st, gs)

    states, inf = run(per_seg)
    delta = np.nan
    if certify:
        for _ in range(max_refine + 1):
            fine_states, fine_inf = run(2 * per_seg)
            delta = float(abs(fine_inf[-1] - inf[-1]))
            per_seg *= 2
            states, inf = fine_states, fine_inf
            if delta < cert_tol:
                break
        else:
            traj = Trajectory(s_out, states, np.abs(states) ** 2, np.atleast_1d(inf),
                              per_seg * n_seg, delta, {"tau": tau, "certified": False})
            raise NonConvergence(
                f"final infidelity changed by {delta:.2e} under step halving "
                f"({per_seg * n_seg} steps); raise steps_per_period", delta, traj)
    norms = np.linalg.norm(states, axis=-1)
    if np.max(np.abs(norms - 1)) > 1e-9:
        raise NonConvergence(f"norm drift {np.max(np.abs(norms - 1)):.2e} exceeds 1e-9")
    return Trajectory(s_out, states, np.abs(states) ** 2, np.atleast_1d(inf),
                      per_seg * n_seg, delta, {"tau": tau})


def _sample_grid(target, samples: int) -> np.ndarray:
    n = max(int(samples), 1000)
    omega = getattr(target, "omega", 0.0) or 0.0
    if omega:
        n = max(n, int(np.ceil(8 * omega * target.tau / (2 * np.pi))) * 8 + 1)
    return np.linspace(0.0, 1.0, n)


def _part(sched, part: str) -> Callable:
    if isinstance(sched, ControlSystem):
        return lambda s: evaluate_H(sched, s)
    if part == "corr" and not hasattr(sched, "correction_hamiltonian"):
        raise ValueError("target has no correction part")
    if part == "base":
        return sched.base_hamiltonian
    if part == "corr":
        return sched.correction_hamiltonian
    if part == "total":
        return sched.hamiltonian
    raise ValueError(f"unknown Hamiltonian part {part!r}")


def strength(sched, convention: str = "literal", samples: int = 4001, part: str = "corr") -> float:
    """max_s ||H_part(s)||_F on a grid with at least 8 points per period."""
    s = _sample_grid(sched, samples)
    return float(np.max(frobenius(_part(sched, part)(s), convention)))


def integral_norm(sched, convention: str = "literal", samples: int = 4001, part: str = "total") -> float:
    """int dt ||H_part||_F = tau int_0^1 ds ||H_part(s)||_F (trapezoidal)."""
    s = _sample_grid(sched, samples)
    vals = frobenius(_part(sched, part)(s), convention)
    return float(sched.tau * np.trapezoid(vals, s))


def max_omega_for_budget(template: Callable, k: float, base_strength: float, tau: float,
                         convention: str = "literal", rtol: float = 1e-6,
                         samples: int = 4001) -> tuple:
    """Largest omega with S(H_E(omega)) <= k S(H), then N_T = floor(omega tau / 2 pi).

    ``template(omega)`` builds the correction schedule without snapping.
    Bisection in log omega to relative tolerance ``rtol``. Returns
    (omega_budget, N_T, omega_snapped).
    """
    if not k > 0:
        raise BudgetInfeasible("budget factor k must be positive")
    limit = k * base_strength

    def ok(w):
        return strength(template(w), convention, samples) <= limit

    lo, hi = 1e-6, 1.0
    if not ok(lo):
        raise BudgetInfeasible("even a vanishing frequency exceeds the strength budget")
    while ok(hi):
        lo, hi = hi, hi * 2
        if hi > 1e12:
            raise BudgetInfeasible("strength budget never binds; correction does not scale with omega")
    while hi / lo - 1 > rtol:
        mid = np.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    n = int(np.floor(lo * tau / (2 * np.pi) + 1e-12))
    if n < 1:
        raise BudgetInfeasible(
            f"budget k={k:g} allows omega <= {lo:.4g}, below one period in tau={tau:g} "
            f"(needs omega >= {2 * np.pi / tau:.4g})")
    return lo, n, 2 * np.pi * n / tau


def uncorrected(base: ControlSystem) -> ECDSchedule:
    return adiabatic_schedule(base)
