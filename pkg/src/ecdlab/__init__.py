"""Effective counterdiabatic (E-CD) driving: fields, synthesis, propagation, experiments."""
from __future__ import annotations

from .algebra import ControlSet, lie_closure, theorem2_check
from .cdfield import (ControlSystem, DegenerateSpectrum, GaugeTrackingError, adiabatic_path,
                      cd_exact, ground_state)
from .config import ConfigError, ExperimentConfig, load_config
from .ecd import (ECDSchedule, ExactCDSchedule, FourierAnsatz, InfeasibleTarget, OmegaTooSmall,
                  solve_constraints_numeric, synth_su2_first_order, synth_su2_third_order,
                  synth_three_level, synth_two_qubit)
from .engine import (BudgetInfeasible, NonConvergence, Trajectory, integral_norm,
                     max_omega_for_budget, propagate, strength)
from .linalg import LinalgError, frobenius, hermitian_eig
from .magnus import magnus_numeric
from .models import ModelParams, build, lzm, three_level, two_qubit

__version__ = "0.1.0"

__all__ = [
    "BudgetInfeasible", "ConfigError", "ControlSet", "ControlSystem", "DegenerateSpectrum",
    "ECDSchedule", "ExactCDSchedule", "ExperimentConfig", "FourierAnsatz", "GaugeTrackingError",
    "InfeasibleTarget", "LinalgError", "ModelParams", "NonConvergence", "OmegaTooSmall",
    "Trajectory", "adiabatic_path", "build", "cd_exact", "frobenius", "ground_state",
    "hermitian_eig", "integral_norm", "lie_closure", "load_config", "lzm", "magnus_numeric",
    "max_omega_for_budget", "propagate", "solve_constraints_numeric", "strength",
    "synth_su2_first_order", "synth_su2_third_order", "synth_three_level", "synth_two_qubit",
    "theorem2_check", "three_level", "two_qubit",
]
