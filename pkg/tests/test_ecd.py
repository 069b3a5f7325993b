from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import quad

from ecdlab.algebra import ControlSet
from ecdlab.cdfield import cd_exact, evaluate_H
from ecdlab.ecd import (ExactCDSchedule, FourierAnsatz, InfeasibleTarget,
                        OmegaTooSmall, adiabatic_schedule, n_periods_for, period_targets,
                        schedule_from_ansatz, snap_omega, solve_constraints_numeric,
                        synth_su2_first_order, synth_three_level, synth_two_qubit)
from ecdlab.linalg import SIGMA_X, SIGMA_Y, SIGMA_Z
from ecdlab.magnus import magnus_numeric
from ecdlab.models import TQ_H3, ModelParams, lzm, three_level, three_level_fcd, two_qubit

LZ = ModelParams(20, 20)
TQ = ModelParams(5, 5)
TL = ModelParams(40, 25, 2.5)


def frozen(vals):
    """Constant field coefficient(s), broadcast to the shape of s."""
    if np.ndim(vals) == 0:
        return lambda s: vals + 0 * np.asarray(s, dtype=float)
    return lambda s: tuple(v + 0 * np.asarray(s, dtype=float) for v in vals)


def period_m2(sched, n=0):
    T = 2 * np.pi / sched.omega
    H = lambda t: sched.correction_hamiltonian(np.asarray(t) / sched.tau)
    return magnus_numeric(H, n * T, T).M2, T


def builders():
    return [
        ("lzm", lzm(LZ), lambda sys, w, s0: synth_su2_first_order(
            sys, frozen(float(cd_exact(sys, s0)[1, 0].imag)), w)),
        ("two_qubit", two_qubit(TQ), lambda sys, w, s0: synth_two_qubit(
            sys, frozen(float(np.real(np.vdot(TQ_H3, cd_exact(sys, s0))) / 8)), w)),
        ("three_level", three_level(TL), lambda sys, w, s0: synth_three_level(
            sys, frozen(three_level_fcd(cd_exact(sys, s0))), w)),
    ]


@pytest.mark.parametrize("name,sys,make", builders())
@pytest.mark.parametrize("s0", [0.3, 0.45, 0.5])
def test_closed_form_and_numeric_solver_agree(name, sys, make, s0):
    w = 2 * np.pi * 8 / sys.tau
    sched = make(sys, w, s0)
    M2, T = period_m2(sched)
    K = T * cd_exact(sys, s0)
    scale = max(1.0, np.max(np.abs(K)))
    # both constructions reproduce the first Magnus term of the exact field
    assert np.max(np.abs(M2 + 1j * K)) < 1e-8 * scale
    an = solve_constraints_numeric([K], sys.controls, w, L=6)
    M2n, _ = period_m2(schedule_from_ansatz(sys, an))
    assert np.max(np.abs(M2n - M2)) < 1e-8 * scale


def test_lzm_closed_form_sign_convention():
    sys = lzm(LZ)
    f = float(cd_exact(sys, 0.5)[1, 0].imag)
    assert f == pytest.approx(-0.5)  # H_CD = f sigma_y with f = -eps/(2 tau) at the centre
    sched = synth_su2_first_order(sys, frozen(f), 2 * np.pi * 4 / sys.tau)
    c = sched.coefficients(np.array([0.0, 0.25 / 4]))
    assert c[0, 0] == pytest.approx(0.0, abs=1e-14)  # sine on sigma_z
    assert c[1, 0] == pytest.approx(-np.sqrt(abs(f) * sched.omega))  # sign(f) cos on sigma_x


def test_interpolated_schedule_follows_field_each_period():
    sys = lzm(LZ)
    sched = synth_su2_first_order(sys, None, 2 * np.pi * 40 / sys.tau)
    K, mid = period_targets(sys, sched.omega)
    for n in (3, 20, 33):
        M2, T = period_m2(sched, n)
        # amplitudes drift within a period, so agreement is to O(T^2) relative
        assert np.max(np.abs(M2 + 1j * K[n])) < 2e-2 * np.max(np.abs(K[n]))


def test_period_targets_integrate_the_field():
    sys = lzm(LZ)
    K, mid = period_targets(sys, 2 * np.pi * 5 / sys.tau)
    assert len(K) == 5 and np.allclose(mid, [0.1, 0.3, 0.5, 0.7, 0.9])
    f = lambda s: float(cd_exact(sys, s)[1, 0].imag)
    ref = quad(f, 0.4, 0.6)[0] * sys.tau
    assert K[2][1, 0].imag == pytest.approx(ref, rel=1e-6)
    fine, _ = period_targets(sys, 2 * np.pi * 5 / sys.tau, nodes=64)
    assert fine[2][1, 0].imag == pytest.approx(ref, rel=1e-12)


def test_snap_omega():
    w, n = snap_omega(1.0, 20.0)
    assert n == 3 and w == pytest.approx(2 * np.pi * 3 / 20)
    assert n_periods_for(2 * np.pi, 1.0) == 1
    with pytest.raises(OmegaTooSmall):
        snap_omega(0.2, 20.0)
    with pytest.raises(OmegaTooSmall):
        synth_su2_first_order(lzm(LZ), None, 0.0)


def test_unsnapped_frequency_is_kept():
    sched = synth_su2_first_order(lzm(LZ), None, 1.0, snap=False)
    assert sched.omega == 1.0 and sched.n_periods == 3


@pytest.mark.parametrize("K,channels", [
    (SIGMA_Z, ControlSet(np.array([SIGMA_Z, SIGMA_X]))),
    (np.kron(SIGMA_X, SIGMA_Y) - np.kron(SIGMA_Y, SIGMA_X),
     two_qubit(TQ).controls),
])
def test_infeasible_target(K, channels):
    with pytest.raises(InfeasibleTarget) as err:
        solve_constraints_numeric([K], channels, 2.0, L=4)
    assert "residual" in str(err.value)


def test_numeric_solver_needs_enough_harmonics():
    sys = three_level(TL)
    K = cd_exact(sys, 0.5) * 2.0
    with pytest.raises(ValueError):
        solve_constraints_numeric([K], sys.controls, 2.0, L=1)


def test_three_level_rejects_wrong_sign():
    sys = three_level(TL)
    with pytest.raises(ValueError, match="f12"):
        synth_three_level(sys, frozen((0.1, -0.1, 0.2)), 5.0)


def test_three_level_records_f13_zeros():
    sched = synth_three_level(three_level(TL), None, 2 * np.pi * 64 / 25)
    zeros = sched.meta["f13_sign_changes"]
    assert len(zeros) == 2
    assert zeros[0] + zeros[1] == pytest.approx(1.0, abs=1e-10)  # mirror symmetric sweep
    f13 = lambda s: three_level_fcd(cd_exact(three_level(TL), s))[2]
    for z in zeros:
        assert abs(f13(z)) < 1e-12
    assert sched.meta["breakpoints"] == zeros


def test_schedule_modes():
    sys = lzm(LZ)
    sched = synth_su2_first_order(sys, None, 3.0)
    s = np.linspace(0, 1, 7)
    on = sched.with_mode("ontop")
    assert np.allclose(on.hamiltonian(s), evaluate_H(sys, s) + sched.hamiltonian(s))
    with pytest.raises(ValueError):
        sched.with_mode("sideways")
    ad = adiabatic_schedule(sys)
    assert np.allclose(ad.hamiltonian(s), evaluate_H(sys, s))
    ex = ExactCDSchedule(sys, "ontop")
    assert np.allclose(ex.hamiltonian(s), evaluate_H(sys, s) + cd_exact(sys, s))


def test_offsets_perturb_sine_channel():
    sys = lzm(LZ)
    ref = synth_su2_first_order(sys, None, 3.0)
    amp = synth_su2_first_order(sys, None, 3.0, amp_offset=0.1)
    s = np.linspace(0, 1, 101)
    assert np.allclose(amp.coefficients(s)[0], 1.1 * ref.coefficients(s)[0])
    assert np.allclose(amp.coefficients(s)[1], ref.coefficients(s)[1])
    ph = synth_su2_first_order(sys, None, 3.0, phase_offset=0.25)
    # a quarter-period shift turns the sine into a cosine
    assert np.allclose(np.abs(ph.coefficients(s)[0]), np.abs(ref.coefficients(s)[1]))


def test_fourier_ansatz_validation():
    with pytest.raises(ValueError):
        FourierAnsatz(0.0, np.ones((2, 1)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        FourierAnsatz(1.0, np.ones((2, 1)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        FourierAnsatz(1.0, np.ones((3, 2, 1)), np.ones((3, 2, 1)))
    an = FourierAnsatz(1.0, np.ones((2, 2, 1)), np.ones((2, 2, 1)), s_nodes=[0.0, 1.0])
    with pytest.raises(ValueError):
        an.coefficients(0.3)
    assert an.coefficients(np.array([0.3]), np.array([0.3])).shape == (2, 1)


def test_schedule_from_ansatz_channel_mismatch():
    an = FourierAnsatz(1.0, np.ones((3, 1)), np.ones((3, 1)))
    with pytest.raises(ValueError):
        schedule_from_ansatz(lzm(LZ), an)
