"""CartPole physics with shiftable gravity, cart mass and reward function.

Dynamics, constants and termination follow the classic CartPole-v1
control task (explicit Euler, ``tau = 0.02``), with the episode cap raised
to 2500 steps.
"""
from __future__ import annotations

import dataclasses
import enum
import math
import random
from dataclasses import dataclass
from typing import Any, Dict, Mapping, NamedTuple, Tuple, Union

from pamcts.mdp import TransitionOutcome

PUSH_LEFT = 0
PUSH_RIGHT = 1
ACTIONS: Tuple[int, int] = (PUSH_LEFT, PUSH_RIGHT)


class RewardMode(str, enum.Enum):
    UNIT_PER_STEP = "UnitPerStep"
    CENTER_PROXIMITY = "CenterProximity"


class CartPoleState(NamedTuple):
    x: float
    x_dot: float
    theta: float
    theta_dot: float
    step_count: int = 0

    def mirrored(self) -> "CartPoleState":
        return CartPoleState(-self.x, -self.x_dot, -self.theta, -self.theta_dot, self.step_count)


class ContractViolation(RuntimeError):
    """Raised when an operation is called outside its precondition."""


@dataclass(frozen=True)
class CartPoleParams:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    force_mag: float = 10.0
    tau: float = 0.02
    x_threshold: float = 2.4
    theta_threshold: float = 12 * 2 * math.pi / 360
    max_episode_steps: int = 2500
    reward_mode: RewardMode = RewardMode.UNIT_PER_STEP

    def __post_init__(self) -> None:
        object.__setattr__(self, "reward_mode", RewardMode(self.reward_mode))
        for name in ("gravity", "cart_mass", "pole_mass", "pole_half_length", "tau",
                     "x_threshold", "theta_threshold"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")
        object.__setattr__(self, "_total_mass", self.pole_mass + self.cart_mass)
        object.__setattr__(self, "_polemass_length", self.pole_mass * self.pole_half_length)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["reward_mode"] = self.reward_mode.value
        return d

    @classmethod
    def from_dict(cls, fragment: Mapping[str, Any]) -> "CartPoleParams":
        """Build from a (possibly partial) JSON fragment; missing fields take defaults."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(fragment) - known
        if unknown:
            raise ValueError(f"unknown CartPoleParams field(s): {sorted(unknown)}")
        return cls(**dict(fragment))


@dataclass(frozen=True)
class Gravity:
    value: float


@dataclass(frozen=True)
class CartMass:
    value: float


@dataclass(frozen=True)
class RewardShift:
    mode: RewardMode


Shift = Union[Gravity, CartMass, RewardShift]


def shifted_params(base: CartPoleParams, shift: Shift) -> CartPoleParams:
    """Copy of ``base`` with exactly one shiftable field replaced."""
    if isinstance(shift, Gravity):
        if not shift.value > 0:
            raise ValueError(f"gravity must be positive, got {shift.value}")
        return dataclasses.replace(base, gravity=float(shift.value))
    if isinstance(shift, CartMass):
        if not shift.value > 0:
            raise ValueError(f"cart mass must be positive, got {shift.value}")
        return dataclasses.replace(base, cart_mass=float(shift.value))
    if isinstance(shift, RewardShift):
        return dataclasses.replace(base, reward_mode=RewardMode(shift.mode))
    raise TypeError(f"unsupported shift {shift!r}")


def initial_state(rng: random.Random) -> CartPoleState:
    u = rng.uniform
    return CartPoleState(u(-0.05, 0.05), u(-0.05, 0.05), u(-0.05, 0.05), u(-0.05, 0.05), 0)


def centered_reward(x: float, x_threshold: float) -> float:
    """``1 - |x| / x_threshold``; negative only beyond the track boundary."""
    if not x_threshold > 0:
        raise ValueError("x_threshold must be positive")
    return 1.0 - abs(x) / x_threshold


def is_terminal(params: CartPoleParams, state: CartPoleState) -> bool:
    return (
        state.x < -params.x_threshold
        or state.x > params.x_threshold
        or state.theta < -params.theta_threshold
        or state.theta > params.theta_threshold
        or state.step_count >= params.max_episode_steps
    )


def cartpole_step(params: CartPoleParams, state: CartPoleState, action: int) -> TransitionOutcome:
    """Advance one ``tau`` step. Deterministic; no randomness involved."""
    x, x_dot, theta, theta_dot, steps = state
    x_t = params.x_threshold
    th_t = params.theta_threshold
    if (x < -x_t or x > x_t or theta < -th_t or theta > th_t
            or steps >= params.max_episode_steps):
        raise ContractViolation(f"cannot step terminal state {state!r}")
    if action == PUSH_RIGHT:
        force = params.force_mag
    elif action == PUSH_LEFT:
        force = -params.force_mag
    else:
        raise ValueError(f"invalid action {action!r}")
    total_mass = params._total_mass
    polemass_length = params._polemass_length
    length = params.pole_half_length
    tau = params.tau

    costheta = math.cos(theta)
    sintheta = math.sin(theta)
    temp = (force + polemass_length * theta_dot**2 * sintheta) / total_mass
    thetaacc = (params.gravity * sintheta - costheta * temp) / (
        length * (4.0 / 3.0 - params.pole_mass * costheta**2 / total_mass)
    )
    xacc = temp - polemass_length * thetaacc * costheta / total_mass

    if params.reward_mode is RewardMode.UNIT_PER_STEP:
        reward = 1.0
    else:
        # evaluated on the pre-update position
        reward = 1.0 - abs(x) / x_t

    x = x + tau * x_dot
    x_dot = x_dot + tau * xacc
    theta = theta + tau * theta_dot
    theta_dot = theta_dot + tau * thetaacc
    steps += 1
    terminal = (x < -x_t or x > x_t or theta < -th_t or theta > th_t
                or steps >= params.max_episode_steps)
    return TransitionOutcome(CartPoleState(x, x_dot, theta, theta_dot, steps), reward, terminal)


def uniform_rollout(
    params: CartPoleParams,
    state: CartPoleState,
    horizon: int,
    gamma: float,
    rng: random.Random,
) -> float:
    """Discounted return of a uniformly random action sequence.

    Same arithmetic and the same rng draws (one ``rng.random()`` per step,
    action ``int(u * 2)``) as looping :func:`cartpole_step` by hand.
    """
    x, x_dot, theta, theta_dot, steps = state
    x_t = params.x_threshold
    th_t = params.theta_threshold
    cap = params.max_episode_steps
    if x < -x_t or x > x_t or theta < -th_t or theta > th_t or steps >= cap:
        return 0.0
    g = params.gravity
    fm = params.force_mag
    total_mass = params._total_mass
    pml = params._polemass_length
    m_pole = params.pole_mass
    length = params.pole_half_length
    tau = params.tau
    unit = params.reward_mode is RewardMode.UNIT_PER_STEP
    rand = rng.random
    cos = math.cos
    sin = math.sin

    total = 0.0
    weight = 1.0
    for _ in range(horizon):
        force = fm if int(rand() * 2) == PUSH_RIGHT else -fm
        costheta = cos(theta)
        sintheta = sin(theta)
        temp = (force + pml * theta_dot**2 * sintheta) / total_mass
        thetaacc = (g * sintheta - costheta * temp) / (
            length * (4.0 / 3.0 - m_pole * costheta**2 / total_mass)
        )
        xacc = temp - pml * thetaacc * costheta / total_mass
        reward = 1.0 if unit else 1.0 - abs(x) / x_t
        x = x + tau * x_dot
        x_dot = x_dot + tau * xacc
        theta = theta + tau * theta_dot
        theta_dot = theta_dot + tau * thetaacc
        steps += 1
        total += weight * reward
        if x < -x_t or x > x_t or theta < -th_t or theta > th_t or steps >= cap:
            break
        weight *= gamma
    return total


class CartPoleModel:
    """``MdpModel`` over :func:`cartpole_step`; ``sample_transition`` ignores the rng."""

    def __init__(self, params: CartPoleParams = CartPoleParams(), discount: float = 0.999):
        if not 0.0 < discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        self.params = params
        self.discount = discount

    def actions(self, state: CartPoleState) -> Tuple[int, int]:
        return ACTIONS

    def sample_transition(
        self, state: CartPoleState, action: int, rng: random.Random
    ) -> TransitionOutcome:
        return cartpole_step(self.params, state, action)

    def is_terminal(self, state: CartPoleState) -> bool:
        return is_terminal(self.params, state)

    def initial_state(self, rng: random.Random) -> CartPoleState:
        return initial_state(rng)

    def uniform_rollout(
        self, state: CartPoleState, horizon: int, gamma: float, rng: random.Random
    ) -> float:
        return uniform_rollout(self.params, state, horizon, gamma, rng)

    def __repr__(self) -> str:
        return f"CartPoleModel({self.params!r}, discount={self.discount})"
