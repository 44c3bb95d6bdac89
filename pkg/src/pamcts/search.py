"""Policy-augmented Monte Carlo tree search.

Selection scores a fully expanded node's children with::

    alpha_i * Q(s_parent, a) + (1 - alpha_i) * mean_return + c * sqrt(ln(n_parent) / n_child)

where ``alpha_i = alpha / (1 + k * i)`` on iteration ``i``. ``alpha = 0``
is plain UCT; ``alpha = 1`` (with ``k = 0``) is greedy in ``Q``.
"""
from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pamcts.mdp import Action, MdpModel, State
from pamcts.policy import QFunction, greedy_action


class ContractViolation(RuntimeError):
    """Raised when a search primitive is called outside its precondition."""


class RolloutPolicy(str, enum.Enum):
    UNIFORM_RANDOM = "UniformRandom"
    GREEDY_Q = "GreedyQ"


@dataclass(frozen=True)
class SearchConfig:
    exploration_constant: float = 50.0
    alpha: float = 0.0
    decay_rate: float = 0.0
    gamma: float = 0.999
    rollout_horizon: int = 500
    iteration_budget: int = 100
    rollout_policy: RolloutPolicy = RolloutPolicy.UNIFORM_RANDOM

    def __post_init__(self) -> None:
        object.__setattr__(self, "rollout_policy", RolloutPolicy(self.rollout_policy))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.decay_rate < 0:
            raise ValueError("decay_rate must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.iteration_budget < 1:
            raise ValueError("iteration_budget must be >= 1")
        if self.rollout_horizon < 0:
            raise ValueError("rollout_horizon must be >= 0")


class TreeNode:
    __slots__ = (
        "state",
        "incoming_action",
        "reward",
        "q_value",
        "visit_count",
        "total_return",
        "children",
        "untried_actions",
        "terminal",
        "depth",
    )

    def __init__(
        self,
        state: State,
        untried_actions: Sequence[Action],
        terminal: bool,
        incoming_action: Optional[Action] = None,
        reward: float = 0.0,
        q_value: float = 0.0,
        depth: int = 0,
    ):
        self.state = state
        self.incoming_action = incoming_action
        self.reward = reward  # reward on the edge into this node
        self.q_value = q_value  # Q(parent state, incoming_action)
        self.visit_count = 0
        self.total_return = 0.0
        self.children: Dict[Action, TreeNode] = {}
        self.untried_actions: List[Action] = [] if terminal else list(untried_actions)
        self.terminal = terminal
        self.depth = depth

    @property
    def mean_return(self) -> float:
        if self.visit_count < 1:
            raise ContractViolation("mean return is undefined for an unvisited node")
        return self.total_return / self.visit_count

    def __repr__(self) -> str:
        return (
            f"TreeNode(action={self.incoming_action}, n={self.visit_count}, "
            f"total={self.total_return:.4g}, children={len(self.children)})"
        )


@dataclass
class SearchState:
    root: TreeNode
    rng: random.Random
    iteration_index: int = 0
    trace: Optional[List[Tuple[Tuple[Action, ...], float]]] = None


@dataclass
class ChildReport:
    action: Action
    n_j: int
    mean_return: Optional[float]
    q_value: float
    final_score: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "action": self.action,
            "n_j": self.n_j,
            "mean_return": self.mean_return,
            "q_value": self.q_value,
            "final_score": self.final_score,
        }


@dataclass
class Diagnostics:
    best_action: Action
    iterations: int
    final_alpha: float
    children: List[ChildReport] = field(default_factory=list)
    trace: Optional[List[Tuple[Tuple[Action, ...], float]]] = None
    searched: bool = True

    def root_visits(self) -> Dict[Action, int]:
        return {c.action: c.n_j for c in self.children}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "best_action": self.best_action,
            "iterations": self.iterations,
            "final_alpha": self.final_alpha,
            "searched": self.searched,
            "children": [c.to_dict() for c in self.children],
        }


# --------------------------------------------------------------------------
# scores


def uct_score(mean_return: float, parent_visits: int, child_visits: int, c: float) -> float:
    if child_visits < 1:
        raise ContractViolation("uct_score needs a visited child; expand it first")
    if parent_visits < 1:
        raise ContractViolation("uct_score needs a visited parent")
    return mean_return + c * math.sqrt(math.log(parent_visits) / child_visits)


def effective_alpha(alpha: float, k: float, i: int) -> float:
    return alpha / (1 + k * i)


def pa_uct_score(
    q_value: float,
    mean_return: float,
    alpha_eff: float,
    parent_visits: int,
    child_visits: int,
    c: float,
) -> float:
    if child_visits < 1:
        raise ContractViolation("pa_uct_score needs a visited child; expand it first")
    if parent_visits < 1:
        raise ContractViolation("pa_uct_score needs a visited parent")
    # keep the evaluation order so alpha_eff == 0 matches uct_score bit for bit
    return alpha_eff * q_value + (1.0 - alpha_eff) * mean_return + c * math.sqrt(
        math.log(parent_visits) / child_visits
    )


# --------------------------------------------------------------------------
# the four stages


def make_root(state: State, model: MdpModel) -> TreeNode:
    terminal = model.is_terminal(state)
    return TreeNode(state, () if terminal else model.actions(state), terminal)


def select_and_expand(
    search: SearchState,
    model: MdpModel,
    qf: Optional[QFunction],
    cfg: SearchConfig,
) -> Tuple[List[TreeNode], TreeNode]:
    """Descend from the root and expand one untried action.

    Returns ``(path, leaf)`` where ``path`` runs from the root to the
    leaf's parent. Descent stops at the first node with untried actions
    (which gets a new child, lowest action first) or at a terminal node.
    """
    alpha = effective_alpha(cfg.alpha, cfg.decay_rate, search.iteration_index)
    beta = 1.0 - alpha
    c = cfg.exploration_constant
    node = search.root
    path: List[TreeNode] = []
    while True:
        if node.terminal:
            if not path:
                raise ContractViolation("cannot search from a terminal root")
            return path, node
        path.append(node)
        if node.untried_actions:
            action = node.untried_actions.pop(0)
            outcome = model.sample_transition(node.state, action, search.rng)
            terminal = outcome.terminal or model.is_terminal(outcome.next_state)
            child = TreeNode(
                outcome.next_state,
                () if terminal else model.actions(outcome.next_state),
                terminal,
                incoming_action=action,
                reward=outcome.reward,
                q_value=qf.q(node.state, action) if qf is not None else 0.0,
                depth=node.depth + 1,
            )
            node.children[action] = child
            return path, child
        # pa_uct_score inlined (same expression order) with log(n_p) hoisted;
        # expanded children always carry at least one visit here
        log_np = math.log(node.visit_count)
        best: Optional[TreeNode] = None
        best_score = -math.inf
        for child in node.children.values():
            n_j = child.visit_count
            score = alpha * child.q_value + beta * (child.total_return / n_j) + c * math.sqrt(log_np / n_j)
            if score > best_score:
                best, best_score = child, score
        if best is None:
            # every child score was nan; fall back to the first child
            best = next(iter(node.children.values()))
        node = best


def rollout(
    state: State,
    model: MdpModel,
    cfg: SearchConfig,
    qf: Optional[QFunction],
    rng: random.Random,
) -> float:
    """Discounted return of one simulated trajectory of at most ``rollout_horizon`` steps.

    Uniform rollouts draw ``actions[int(rng.random() * len(actions))]``
    each step. Models may supply an equivalent fused
    ``uniform_rollout(state, horizon, gamma, rng)``, which is then used.
    """
    if model.is_terminal(state):
        return 0.0
    greedy = cfg.rollout_policy is RolloutPolicy.GREEDY_Q
    if not greedy:
        fast = getattr(model, "uniform_rollout", None)
        if fast is not None:
            return fast(state, cfg.rollout_horizon, cfg.gamma, rng)
    if greedy and qf is None:
        raise ValueError("GreedyQ rollouts need a Q-function")
    gamma = cfg.gamma
    total = 0.0
    weight = 1.0
    actions_of, step, draw = model.actions, model.sample_transition, rng.random
    for _ in range(cfg.rollout_horizon):
        actions = actions_of(state)
        if greedy:
            action = greedy_action(qf, state, actions)  # type: ignore[arg-type]
        else:
            action = actions[int(draw() * len(actions))]
        outcome = step(state, action, rng)
        total += weight * outcome.reward
        if outcome.terminal:
            break
        weight *= gamma
        state = outcome.next_state
    return total


def backpropagate(
    path: Sequence[TreeNode],
    leaf_value: float,
    rewards_along_path: Sequence[float],
    gamma: float,
) -> None:
    """Credit ``r_edge + gamma * G_child`` to every node, leaf first.

    ``path`` runs root to leaf and ``rewards_along_path[i]`` is the reward
    on the edge from ``path[i]`` to ``path[i + 1]``.
    """
    if not path:
        raise ContractViolation("path must be non-empty")
    if len(rewards_along_path) != len(path) - 1:
        raise ContractViolation(
            f"expected {len(path) - 1} edge rewards, got {len(rewards_along_path)}"
        )
    value = leaf_value
    last = len(path) - 1
    for idx in range(last, -1, -1):
        node = path[idx]
        if idx < last:
            value = rewards_along_path[idx] + gamma * value
        node.visit_count += 1
        node.total_return += value


# --------------------------------------------------------------------------
# driver


def _recommend(root: TreeNode, alpha: float, actions: Sequence[Action]) -> Tuple[Action, List[ChildReport]]:
    reports: List[ChildReport] = []
    best_key: Optional[Tuple[float, int, int]] = None
    best_action = actions[0]
    for rank, action in enumerate(actions):
        child = root.children.get(action)
        if child is None or child.visit_count == 0:
            q = child.q_value if child is not None else 0.0
            reports.append(ChildReport(action, 0, None, q, None))
            continue
        mean = child.total_return / child.visit_count
        score = alpha * child.q_value + (1.0 - alpha) * mean
        reports.append(ChildReport(action, child.visit_count, mean, child.q_value, score))
        # larger is better on every component
        key = (score, child.visit_count, -rank)
        if best_key is None or key > best_key:
            best_key, best_action = key, action
    return best_action, reports


def run_search(
    root_state: State,
    model: MdpModel,
    qf: Optional[QFunction],
    cfg: SearchConfig,
    rng: random.Random,
    record_trace: bool = False,
) -> SearchState:
    """Grow a fresh tree for exactly ``cfg.iteration_budget`` iterations."""
    search = SearchState(make_root(root_state, model), rng, 0, [] if record_trace else None)
    if search.root.terminal:
        raise ContractViolation("cannot search from a terminal state")
    gamma = cfg.gamma
    for i in range(cfg.iteration_budget):
        search.iteration_index = i
        path, leaf = select_and_expand(search, model, qf, cfg)
        leaf_value = 0.0 if leaf.terminal else rollout(leaf.state, model, cfg, qf, rng)
        full = path + [leaf]
        backpropagate(full, leaf_value, [n.reward for n in full[1:]], gamma)
        if search.trace is not None:
            search.trace.append((tuple(n.incoming_action for n in full[1:]), leaf_value))
    return search


def plan(
    root_state: State,
    model: MdpModel,
    qf: Optional[QFunction],
    cfg: SearchConfig,
    rng: random.Random,
    record_trace: bool = False,
) -> Tuple[Action, Diagnostics]:
    """Run one decision epoch on a fresh tree and recommend a root action.

    The recommendation maximises ``alpha * Q + (1 - alpha) * mean_return``
    over expanded root children, with ``alpha`` evaluated at the last
    iteration; ties go to the more visited child, then the lower action.
    When ``alpha`` stays 1 for the whole search the tree cannot change the
    answer, so the greedy action is returned without searching.
    """
    if model.is_terminal(root_state):
        raise ContractViolation("cannot plan from a terminal state")
    actions = list(model.actions(root_state))
    budget = cfg.iteration_budget
    final_alpha = effective_alpha(cfg.alpha, cfg.decay_rate, budget - 1)
    if cfg.alpha > 0.0 and qf is None:
        raise ValueError("alpha > 0 needs a Q-function")

    if cfg.alpha == 1.0 and cfg.decay_rate == 0.0:
        best = greedy_action(qf, root_state, actions)  # type: ignore[arg-type]
        reports = [
            ChildReport(a, 0, None, qf.q(root_state, a), qf.q(root_state, a))  # type: ignore[union-attr]
            for a in actions
        ]
        return best, Diagnostics(best, 0, 1.0, reports, None, searched=False)

    search = run_search(root_state, model, qf, cfg, rng, record_trace)
    best, reports = _recommend(search.root, final_alpha, actions)
    return best, Diagnostics(best, budget, final_alpha, reports, search.trace)
