"""Environment-agnostic MDP abstraction.

Anything that can enumerate actions, sample a transition and report
terminality can be planned over, trained against and evaluated by the
harness. Randomness is always an explicit ``random.Random`` stream.
"""
from __future__ import annotations

import hashlib
import random
from typing import Any, Callable, Hashable, List, NamedTuple, Protocol, Sequence, Tuple

State = Any
Action = int


class TransitionOutcome(NamedTuple):
    next_state: State
    reward: float
    terminal: bool


class MdpModel(Protocol):
    """Capability consumed by the planner, the trainer and the harness.

    ``actions`` must return a non-empty, deterministically ordered sequence
    for every non-terminal state. ``sample_transition`` must depend only on
    its arguments and the position of ``rng``.
    """

    discount: float

    def actions(self, state: State) -> Sequence[Action]:
        ...

    def sample_transition(
        self, state: State, action: Action, rng: random.Random
    ) -> TransitionOutcome:
        ...

    def is_terminal(self, state: State) -> bool:
        ...


ActionSource = Callable[[State], Action]


class InvalidActionError(ValueError):
    """An action source proposed an action the model does not offer."""


class EpisodeResult(NamedTuple):
    total_return: float
    steps: int
    rewards: List[float]


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Sum of ``gamma**t * rewards[t]``, accumulated left to right."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    total = 0.0
    weight = 1.0
    for r in rewards:
        total += weight * r
        weight *= gamma
    return total


def simulate_episode(
    model: MdpModel,
    action_source: ActionSource,
    initial: State,
    max_steps: int,
    rng: random.Random,
) -> EpisodeResult:
    """Roll ``action_source`` forward until a terminal transition or ``max_steps``.

    The reported return is undiscounted.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    state = initial
    rewards: List[float] = []
    total = 0.0
    for _ in range(max_steps):
        legal = model.actions(state)
        action = action_source(state)
        if action not in legal:
            raise InvalidActionError(f"action {action!r} not in {list(legal)!r}")
        outcome = model.sample_transition(state, action, rng)
        rewards.append(outcome.reward)
        total += outcome.reward
        state = outcome.next_state
        if outcome.terminal:
            break
    return EpisodeResult(total, len(rewards), rewards)


def derive_seed(*parts: Hashable) -> int:
    """Stable 63-bit seed from arbitrary labels (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def spawn(rng: random.Random) -> random.Random:
    """Split off an independent child stream."""
    return random.Random(rng.getrandbits(64))


__all__: Tuple[str, ...] = (
    "Action",
    "ActionSource",
    "EpisodeResult",
    "InvalidActionError",
    "MdpModel",
    "State",
    "TransitionOutcome",
    "derive_seed",
    "discounted_return",
    "simulate_episode",
    "spawn",
)
