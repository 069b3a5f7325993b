from __future__ import annotations

import numpy as np
import pytest

from ecdlab.algebra import ControlSet
from ecdlab.cdfield import (ControlSystem, DegenerateSpectrum, _const, adiabatic_path,
                            adiabatic_target, cd_exact, cd_su2_analytic, constant_system,
                            evaluate_dH, evaluate_H, generator_residual, ground_state)
from ecdlab.linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, hs_inner
from ecdlab.models import ModelParams, build, lzm, lzm_fcd, two_qubit, two_qubit_cd_analytic

MODELS = [("lzm", ModelParams(20, 20)), ("two_qubit", ModelParams(5, 5)),
          ("three_level", ModelParams(40, 25, 2.5))]
S_GRID = np.linspace(0, 1, 13)


def cd_reference(sys, s):
    """i sum_{m != n} |m><m| dH/dt |n><n| / (E_n - E_m) from numpy eigh."""
    H = evaluate_H(sys, s)
    dH = evaluate_dH(sys, s) / sys.tau
    w, V = np.linalg.eigh(H)
    M = V.conj().T @ dH @ V
    K = np.zeros_like(M)
    for m in range(len(w)):
        for n in range(len(w)):
            # levels of different invariant blocks may cross; they never couple
            if m != n and abs(M[m, n]) > 1e-13:
                K[m, n] = 1j * M[m, n] / (w[n] - w[m])
    return V @ K @ V.conj().T


def test_lzm_matches_closed_form():
    p = ModelParams(20, 20)
    sys = lzm(p)
    s = np.linspace(0, 1, 101)
    Hcd = cd_exact(sys, s)
    f = lzm_fcd(p, s)
    assert np.allclose(Hcd, f[:, None, None] * SIGMA_Y, atol=1e-14)
    ux, uz = 0.5 * np.ones_like(s), 0.5 * 20 * (s - 0.5)
    g = cd_su2_analytic(ux, uz, 0 * s, 0.5 * 20 / p.tau * np.ones_like(s))
    assert np.allclose(g, f, atol=1e-15)


def test_two_qubit_matches_closed_form():
    p = ModelParams(5, 5)
    s = np.linspace(0, 1, 41)
    assert np.allclose(cd_exact(two_qubit(p), s), two_qubit_cd_analytic(p, s), atol=1e-13)


@pytest.mark.parametrize("name,p", MODELS)
def test_matches_independent_eigh_construction(name, p):
    sys = build(name, p)
    for s in S_GRID:
        assert np.allclose(cd_exact(sys, s), cd_reference(sys, s), atol=1e-11)


@pytest.mark.parametrize("name,p", MODELS)
def test_hs_orthogonal_to_H_and_dH(name, p):
    sys = build(name, p)
    for s in S_GRID:
        Hcd = cd_exact(sys, s)
        H = evaluate_H(sys, s)
        dH = evaluate_dH(sys, s) / sys.tau
        scale = np.linalg.norm(Hcd) * max(np.linalg.norm(H), np.linalg.norm(dH))
        assert abs(hs_inner(H, Hcd)) < 1e-9 * max(scale, 1e-300)
        assert abs(hs_inner(dH, Hcd)) < 1e-9 * max(scale, 1e-300)


@pytest.mark.parametrize("name,p", MODELS)
def test_generator_identity(name, p):
    sys = build(name, p)
    for s in (0.0, 0.2, 0.41, 0.5, 0.77, 1.0):
        assert generator_residual(sys, s) < 1e-6


@pytest.mark.parametrize("name,p", MODELS)
def test_inverse_tau_scaling(name, p):
    sys = build(name, p)
    a = cd_exact(sys.with_tau(3.0), S_GRID) * 3.0
    b = cd_exact(sys.with_tau(17.0), S_GRID) * 17.0
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


@pytest.mark.parametrize("name,p", MODELS)
def test_hermitian_and_imaginary(name, p):
    Hcd = cd_exact(build(name, p), S_GRID)
    assert np.allclose(Hcd, np.conj(np.swapaxes(Hcd, -1, -2)), atol=1e-15)
    assert np.max(np.abs(Hcd.real)) < 1e-12


def test_degenerate_point_raises():
    ramp = lambda s: np.asarray(s) - 0.5
    sys = ControlSystem(ControlSet(np.array([SIGMA_Z, SIGMA_X])), (ramp, ramp),
                        (_const(1.0), _const(1.0)), 1.0)
    with pytest.raises(DegenerateSpectrum) as err:
        cd_exact(sys, 0.5)
    assert err.value.s == pytest.approx(0.5)
    cd_exact(sys, 0.25)


def test_crossing_between_invariant_blocks_is_allowed():
    # two-qubit levels from different blocks cross; the field stays finite
    sys = two_qubit(ModelParams(5, 5))
    w = np.linalg.eigvalsh(evaluate_H(sys, np.linspace(0, 1, 2001)))
    assert np.min(np.diff(w, axis=-1)) < 1e-2
    assert np.all(np.isfinite(cd_exact(sys, np.linspace(0, 1, 2001))))


def test_constant_system_has_zero_field():
    sys = constant_system(SIGMA_X + 0.3 * SIGMA_Z, 2.0)
    assert np.allclose(cd_exact(sys, [0.0, 0.5, 1.0]), 0)


def test_s_out_of_range():
    with pytest.raises(ValueError):
        cd_exact(lzm(ModelParams(20, 20)), 1.5)


def test_ground_state_gauge_and_energy():
    sys = build("three_level", ModelParams(40, 25, 2.5))
    for s in S_GRID:
        g = ground_state(sys, s)
        H = evaluate_H(sys, s)
        assert np.allclose(H @ g, np.linalg.eigvalsh(H)[0] * g, atol=1e-11)
        k = np.argmax(np.abs(g))
        assert abs(g[k].imag) < 1e-14 and g[k].real > 0


def test_adiabatic_path_constant_hamiltonian():
    H = 0.7 * SIGMA_X + 0.2 * SIGMA_Z
    sys = constant_system(H, tau=3.0)
    s = np.array([0.0, 0.4, 1.0])
    path = adiabatic_path(sys, s)
    E0 = np.linalg.eigvalsh(H)[0]
    g = ground_state(sys, 0.0)
    for k, sk in enumerate(s):
        assert np.allclose(path[k], np.exp(-1j * 3.0 * E0 * sk) * g, atol=1e-12)
    assert np.allclose(adiabatic_target(sys, 0.4), path[1], atol=1e-14)


def test_adiabatic_path_is_continuous_on_lzm():
    sys = lzm(ModelParams(20, 20))
    s = np.linspace(0, 1, 201)
    path = adiabatic_path(sys, s)
    ov = np.abs(np.sum(np.conj(path[:-1]) * path[1:], axis=-1))
    assert np.min(ov) > 0.9
    gs = ground_state(sys, s)
    assert np.allclose(np.abs(np.sum(np.conj(gs) * path, axis=-1)), 1.0, atol=1e-12)
