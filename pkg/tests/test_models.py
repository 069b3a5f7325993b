from __future__ import annotations

import numpy as np
import pytest

from ecdlab.cdfield import cd_exact, evaluate_H
from ecdlab.ecd import projected_fcd
from ecdlab.linalg import SIGMA_X, SIGMA_Z, commutator
from ecdlab.models import (BELL_PLUS, TQ_H1, TQ_H2, TQ_H3, ModelParams, build, kron, lz_formula,
                           lzm, lzm_fcd, three_level, three_level_fcd, two_qubit, two_qubit_fcd,
                           two_qubit_theta)

I2 = np.eye(2)


def test_lzm_hamiltonian():
    p = ModelParams(20, 20)
    for s in (0.0, 0.3, 1.0):
        ref = 0.5 * (20 * (s - 0.5) * SIGMA_Z + SIGMA_X)
        assert np.allclose(evaluate_H(lzm(p), s), ref)


def test_lz_formula_value():
    # exp(-pi/2) at tau = eps
    assert lz_formula(ModelParams(20, 20)) == pytest.approx(0.20787957635076193, rel=1e-14)


def test_two_qubit_hamiltonian():
    p = ModelParams(5, 5)
    Z1, Z2 = kron(SIGMA_Z, I2), kron(I2, SIGMA_Z)
    XX, ZZ = kron(SIGMA_X, SIGMA_X), kron(SIGMA_Z, SIGMA_Z)
    for s in (0.0, 0.6, 1.0):
        ref = -5 * (1 - s) * (Z1 + Z2) - (XX + ZZ)
        assert np.allclose(evaluate_H(two_qubit(p), s), ref)


def test_two_qubit_generator_relation():
    assert np.allclose(commutator(TQ_H1, TQ_H2) / 2j, TQ_H3)


def test_two_qubit_end_states():
    sys = two_qubit(ModelParams(5, 5))
    g0 = np.linalg.eigh(evaluate_H(sys, 0.0))[1][:, 0]
    g1 = np.linalg.eigh(evaluate_H(sys, 1.0))[1][:, 0]
    assert abs(g0[0]) ** 2 > 0.98  # close to |00>
    assert abs(np.vdot(BELL_PLUS, g1)) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_two_qubit_fcd_matches_projection_and_theta():
    p = ModelParams(5, 5)
    s = np.linspace(0, 1, 51)
    assert np.allclose(two_qubit_fcd(p, s), projected_fcd(two_qubit(p), TQ_H3)(s), atol=1e-14)
    # H3 acts as 2 sigma_y on the |00>,|11> block, so d(theta)/dt = 2 f
    h = 1e-6
    dtheta = (two_qubit_theta(p, s[1:-1] + h) - two_qubit_theta(p, s[1:-1] - h)) / (2 * h) / p.tau
    assert np.allclose(np.abs(dtheta), 2 * np.abs(two_qubit_fcd(p, s[1:-1])), rtol=1e-6)


def test_three_level_hamiltonian():
    p = ModelParams(40, 25, 2.5)
    s = 0.3
    x = 40 * (s - 0.5)
    ref = np.array([[2.5 + x, 1, 0], [1, -5, 1], [0, 1, 2.5 - x]])
    assert np.allclose(evaluate_H(three_level(p), s), ref)


def test_three_level_fcd_signs():
    sys = three_level(ModelParams(40, 25, 2.5))
    s = np.linspace(0, 1, 2001)
    f12, f23, f13 = three_level_fcd(cd_exact(sys, s))
    assert np.all(f12 < 0) and np.all(f23 < 0)
    assert np.any(f13 > 0) and np.any(f13 < 0)


def test_lzm_fcd_peak():
    p = ModelParams(20, 20)
    assert lzm_fcd(p, 0.5) == pytest.approx(-0.5 * 20 / 20)


def test_invalid_params():
    with pytest.raises(ValueError):
        ModelParams(-1, 1)
    with pytest.raises(ValueError):
        ModelParams(1, 0)
    with pytest.raises(ValueError):
        ModelParams(1, 1, -2)
    with pytest.raises(ValueError):
        build("qutrit", ModelParams(1, 1))
