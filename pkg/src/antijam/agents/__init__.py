from .losses import (AttackSpec, combined_loss_nqc, combined_loss_pgd, ddqn_target, epsilon_greedy,
                     misleading_set, pgd_attack, pgd_regularizer, qsr_loss, td_loss)
from .policies import BundlePolicy, FixedPolicy, GreedyPolicy, Policy, RandomPolicy, greedy_policy, random_policy
from .replay import ReplayBuffer, Transition
from .trainer import ALGORITHMS, ROLES, VARIANTS, AgentBundle, Trainer, Variant, train

__all__ = [
    "AttackSpec", "combined_loss_nqc", "combined_loss_pgd", "ddqn_target", "epsilon_greedy",
    "misleading_set", "pgd_attack", "pgd_regularizer", "qsr_loss", "td_loss",
    "BundlePolicy", "FixedPolicy", "GreedyPolicy", "Policy", "RandomPolicy", "greedy_policy", "random_policy",
    "ReplayBuffer", "Transition", "ALGORITHMS", "ROLES", "VARIANTS", "AgentBundle", "Trainer", "Variant", "train",
]
