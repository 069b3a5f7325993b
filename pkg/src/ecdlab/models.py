"""The three benchmark systems: LZM sweep, two-qubit Bell preparation, three-level chain.

All models use rescaled time s in [0, 1] with physical-time Hamiltonian
H(s); the propagator integrates i d/ds psi = tau H(s) psi.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import ControlSet
from .cdfield import ControlSystem, _const
from .linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, IDENTITY_2

MODEL_NAMES = ("lzm", "two_qubit", "three_level")


@dataclass(frozen=True)
class ModelParams:
    epsilon: float
    tau: float
    d: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.d < 0:
            raise ValueError(f"d must be non-negative, got {self.d}")


def lzm(p: ModelParams) -> ControlSystem:
    """(1/2)[eps (s - 1/2) sigma_z + sigma_x]; channels (sigma_z, sigma_x)."""
    eps = p.epsilon
    controls = ControlSet(np.array([SIGMA_Z, SIGMA_X]), ("sigma_z", "sigma_x"))
    return ControlSystem(
        controls,
        u=(lambda s: 0.5 * eps * (np.asarray(s) - 0.5), _const(0.5)),
        du=(_const(0.5 * eps), _const(0.0)),
        tau=p.tau,
        name="lzm",
    )


def lzm_fcd(p: ModelParams, s):
    """Closed-form sigma_y coefficient of the LZM counterdiabatic field."""
    x = np.asarray(s, dtype=float) - 0.5
    return -(0.5 / p.tau) * p.epsilon / (p.epsilon ** 2 * x * x + 1.0)


def lz_formula(p: ModelParams) -> float:
    """Asymptotic Landau-Zener transition probability exp(-pi tau / (2 eps))."""
    return float(np.exp(-np.pi * p.tau / (2.0 * p.epsilon)))


def kron(*ops) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


TQ_H1 = -(kron(SIGMA_Z, IDENTITY_2) + kron(IDENTITY_2, SIGMA_Z))
TQ_H2 = -(kron(SIGMA_X, SIGMA_X) + kron(SIGMA_Z, SIGMA_Z))
TQ_H3 = kron(SIGMA_X, SIGMA_Y) + kron(SIGMA_Y, SIGMA_X)
BELL_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


def two_qubit(p: ModelParams) -> ControlSystem:
    """B(s) H1 + g H2 with B(s) = eps (1 - s), g = 1.

    H1 = -(Z1 + Z2) is local, H2 = -(X1 X2 + Z1 Z2) the interaction.
    Basis order |00>, |01>, |10>, |11>.
    """
    eps = p.epsilon
    controls = ControlSet(np.array([TQ_H1, TQ_H2]), ("local", "interaction"))
    return ControlSystem(
        controls,
        u=(lambda s: eps * (1.0 - np.asarray(s)), _const(1.0)),
        du=(_const(-eps), _const(0.0)),
        tau=p.tau,
        name="two_qubit",
    )


def two_qubit_fcd(p: ModelParams, s):
    """Coefficient f with H_CD = f H3 (physical-time units)."""
    s = np.asarray(s, dtype=float)
    eps = p.epsilon
    return (0.5 / p.tau) * eps / (4 * eps ** 2 * (1 - s) ** 2 + 1)


def two_qubit_cd_analytic(p: ModelParams, s) -> np.ndarray:
    f = two_qubit_fcd(p, s)
    return np.multiply.outer(f, TQ_H3)


def two_qubit_theta(p: ModelParams, s):
    """Mixing angle of the coupled |00>, |11> block."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        return 0.5 * np.arctan2(1.0, 2 * p.epsilon * (1 - s))


TL_SWEEP = np.diag([1.0, 0.0, -1.0]).astype(complex)
TL_X12 = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex)
TL_X23 = np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex)
TL_SPLIT = np.diag([1.0, -2.0, 1.0]).astype(complex)


def three_level(p: ModelParams) -> ControlSystem:
    """Spin-1-like chain with a linear sweep through two avoided crossings.

    Channels: sweep diag(1,0,-1) with u = eps (s - 1/2); couplings 1-2 and
    2-3 held at 1; splitting diag(1,-2,1) held at d. The two couplings are
    separate channels because the oscillating correction drives them
    independently.
    """
    eps = p.epsilon
    controls = ControlSet(np.array([TL_SWEEP, TL_X12, TL_X23, TL_SPLIT]),
                          ("sweep", "x12", "x23", "split"))
    return ControlSystem(
        controls,
        u=(lambda s: eps * (np.asarray(s) - 0.5), _const(1.0), _const(1.0), _const(p.d)),
        du=(_const(eps), _const(0.0), _const(0.0), _const(0.0)),
        tau=p.tau,
        name="three_level",
    )


def three_level_fcd(Hcd: np.ndarray):
    """(f12, f23, f13) from H_CD[..., m, n] = -i f^(mn) above the diagonal."""
    Hcd = np.asarray(Hcd)
    return -Hcd[..., 0, 1].imag, -Hcd[..., 1, 2].imag, -Hcd[..., 0, 2].imag


BUILDERS = {"lzm": lzm, "two_qubit": two_qubit, "three_level": three_level}


def build(name: str, p: ModelParams) -> ControlSystem:
    try:
        return BUILDERS[name](p)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}") from None
