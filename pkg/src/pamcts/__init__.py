"""Policy-augmented Monte Carlo tree search on a shiftable CartPole."""
from pamcts.cartpole import CartPoleModel, CartPoleParams, CartPoleState, RewardMode, initial_state
from pamcts.mdp import MdpModel, TransitionOutcome, discounted_return, simulate_episode
from pamcts.policy import QFunction, QTable, TrainConfig, greedy_action, load_qtable, save_qtable, train_double_q
from pamcts.search import SearchConfig, plan

__version__ = "0.1.0"

__all__ = [
    "CartPoleModel",
    "CartPoleParams",
    "CartPoleState",
    "MdpModel",
    "QFunction",
    "QTable",
    "RewardMode",
    "SearchConfig",
    "TrainConfig",
    "TransitionOutcome",
    "discounted_return",
    "greedy_action",
    "initial_state",
    "load_qtable",
    "plan",
    "save_qtable",
    "simulate_episode",
    "train_double_q",
]
