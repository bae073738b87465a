"""Entropy-augmented reinforcement learning on tabular MDPs and small grid worlds."""

from .audits import (
    conjugacy_audit,
    contraction_audit,
    corpus_mdp,
    optimal_error_bound_audit,
    perf_diff_audit,
    soft_objective_audit,
    soft_policy_iteration_audit,
    surrogate_bound_audit,
)
from .envs import Diagonal, TwoColors, make_env, random_mdp, to_tabular
from .gae import GaeConfig, Transition, compute_gae, incompatibility_demo
from .mdp import (
    TabularMDP,
    TabularPolicy,
    discounted_return,
    exact_policy_eval,
    policy_entropy,
    state_visitation,
)
from .operators import (
    BackupKind,
    SoftValueIteration,
    bootstrap_backup,
    soft_backup,
    soft_improvement_step,
    v_backup,
    value_iteration,
)
from .ppo import EARLPPO, PpoConfig
from .reports import AuditReport, BoundReport, TrainingRecord
from .sac import EARLSAC, SacConfig
from .schedule import TemperatureSchedule
from .shaping import absorbing_audit, potential_shaping_audit, shape_rewards, trajectory_shaped_reward

__version__ = "0.1.0"
