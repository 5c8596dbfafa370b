"""Optimal control of coupled subsystems that share their actions."""

from .belief import (BeliefPoint, LocalBelief, action_probabilities, initial_points, initial_xi, joint_from_theta,
                     update_theta, update_xi)
from .dp import (BeliefSet, CoordinatorPolicy, ValueFunction, bellman_backup, enumerate_prescriptions,
                 reachable_beliefs, solve_average_reward, solve_discounted, solve_finite_horizon)
from .estimators import CoordinatorSolver, MabSolver
from .exceptions import (ClosureViolation, CombinatorialBlowup, CtrlShareError, InconsistentObservation,
                         InfeasibleActionError, MissingSuccessor, ModelFormatError, ModelValidationError,
                         NonConvergence)
from .mab import (MabParams, MabSolution, RState, alpha_root, apply_A, closed_form, mab_filter, mab_model,
                  mab_relative_vi, phi, reachable_set, tau, validate_mab_consistency, verify_fixed_point)
from .model import (CoupledModel, Trajectory, check_model, load_model, model_from_dict, model_to_dict,
                    random_model, sample_trajectory, save_model, transition_local, validate_model)
from .sim import SimReport, replay_beliefs, simulate_policy

__version__ = "0.1.0"

__all__ = [
    "BeliefPoint",
    "BeliefSet",
    "ClosureViolation",
    "CombinatorialBlowup",
    "CoordinatorPolicy",
    "CoordinatorSolver",
    "CoupledModel",
    "CtrlShareError",
    "InconsistentObservation",
    "InfeasibleActionError",
    "LocalBelief",
    "MabParams",
    "MabSolution",
    "MabSolver",
    "MissingSuccessor",
    "ModelFormatError",
    "ModelValidationError",
    "NonConvergence",
    "RState",
    "SimReport",
    "Trajectory",
    "ValueFunction",
    "action_probabilities",
    "alpha_root",
    "apply_A",
    "bellman_backup",
    "check_model",
    "closed_form",
    "enumerate_prescriptions",
    "initial_points",
    "initial_xi",
    "joint_from_theta",
    "load_model",
    "mab_filter",
    "mab_model",
    "mab_relative_vi",
    "model_from_dict",
    "model_to_dict",
    "phi",
    "random_model",
    "reachable_beliefs",
    "reachable_set",
    "replay_beliefs",
    "sample_trajectory",
    "save_model",
    "simulate_policy",
    "solve_average_reward",
    "solve_discounted",
    "solve_finite_horizon",
    "tau",
    "transition_local",
    "update_theta",
    "update_xi",
    "validate_mab_consistency",
    "validate_model",
    "verify_fixed_point",
]
