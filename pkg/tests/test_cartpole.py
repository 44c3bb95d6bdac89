import dataclasses
import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from pamcts.cartpole import (
    PUSH_LEFT,
    PUSH_RIGHT,
    CartMass,
    CartPoleModel,
    CartPoleParams,
    CartPoleState,
    ContractViolation,
    Gravity,
    RewardMode,
    RewardShift,
    cartpole_step,
    centered_reward,
    initial_state,
    shifted_params,
    uniform_rollout,
)
from pamcts.mdp import simulate_episode

from oracles import ReferenceCartPole

DEFAULT = CartPoleParams()

finite = dict(allow_nan=False, allow_infinity=False)
live_states = st.builds(
    CartPoleState,
    st.floats(-2.4, 2.4, **finite),
    st.floats(-5, 5, **finite),
    st.floats(-0.2, 0.2, **finite),
    st.floats(-5, 5, **finite),
    st.integers(0, 2000),
)


def balancer(s):
    return PUSH_RIGHT if 0.05 * s.x + 0.1 * s.x_dot + s.theta + 0.3 * s.theta_dot > 0 else PUSH_LEFT


# -- initial state ---------------------------------------------------------


def test_initial_state_in_range_and_seeded():
    s = initial_state(random.Random(3))
    assert all(-0.05 <= v <= 0.05 for v in s[:4])
    assert s.step_count == 0
    assert initial_state(random.Random(3)) == s


def test_initial_state_mean_is_centered():
    rng = random.Random(11)
    samples = [initial_state(rng) for _ in range(10_000)]
    for i in range(4):
        mean = sum(s[i] for s in samples) / len(samples)
        # sd of the mean is 0.1/sqrt(12)/100 ~ 2.9e-4, so 0.005 is ~17 sigma
        assert abs(mean) < 0.005


# -- dynamics ----------------------------------------------------------------


def test_push_right_from_rest_matches_hand_evaluation():
    # temp = 10/1.1; thetaacc = -temp / (0.5 * (4/3 - 0.1/1.1)); xacc = temp - 0.05*thetaacc/1.1
    temp = 10 / 1.1
    thetaacc = -temp / (0.5 * (4 / 3 - 0.1 / 1.1))
    xacc = temp - 0.05 * thetaacc / 1.1
    out = cartpole_step(DEFAULT, CartPoleState(0.0, 0.0, 0.0, 0.0), PUSH_RIGHT)
    s = out.next_state
    assert s.x == 0.0 and s.theta == 0.0
    assert s.x_dot == pytest.approx(0.02 * xacc, abs=1e-15)
    assert s.theta_dot == pytest.approx(0.02 * thetaacc, abs=1e-15)
    assert s.x_dot == pytest.approx(0.19512, abs=1e-5)
    assert s.theta_dot == pytest.approx(-0.29268, abs=1e-5)
    assert s.step_count == 1
    assert out.reward == 1.0 and not out.terminal


def test_matches_reference_transcription_on_a_few_states():
    ref = ReferenceCartPole()
    rng = random.Random(5)
    for _ in range(50):
        s = CartPoleState(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-0.2, 0.2), rng.uniform(-2, 2), 0)
        a = rng.randrange(2)
        out = cartpole_step(DEFAULT, s, a)
        nxt, r, done = ref.step(tuple(s), a)
        assert tuple(out.next_state) == nxt
        assert (out.reward, out.terminal) == (r, done)


def test_large_angle_is_terminal():
    out = cartpole_step(DEFAULT, CartPoleState(0.0, 0.0, 0.2, 5.0), PUSH_LEFT)
    assert out.next_state.theta > DEFAULT.theta_threshold
    assert out.terminal
    assert CartPoleModel().is_terminal(CartPoleState(0.0, 0.0, 0.30, 0.0))


def test_step_cap_is_terminal():
    params = dataclasses.replace(DEFAULT, max_episode_steps=10)
    out = cartpole_step(params, CartPoleState(0, 0, 0, 0, 9), PUSH_LEFT)
    assert out.terminal


def test_stepping_a_terminal_state_is_a_contract_violation():
    with pytest.raises(ContractViolation):
        cartpole_step(DEFAULT, CartPoleState(3.0, 0.0, 0.0, 0.0), PUSH_LEFT)


def test_invalid_action():
    with pytest.raises(ValueError):
        cartpole_step(DEFAULT, CartPoleState(0, 0, 0, 0), 2)


@pytest.mark.parametrize("action", [PUSH_LEFT, PUSH_RIGHT])
def test_unit_reward_regardless_of_action(action):
    assert cartpole_step(DEFAULT, CartPoleState(0.3, 0.1, 0.01, 0.0), action).reward == 1.0


def test_center_reward_uses_pre_update_position():
    params = shifted_params(DEFAULT, RewardShift(RewardMode.CENTER_PROXIMITY))
    out = cartpole_step(params, CartPoleState(-1.2, 1.0, 0.0, 0.0), PUSH_LEFT)
    assert out.reward == 0.5


@given(live_states, st.sampled_from([PUSH_LEFT, PUSH_RIGHT]))
@settings(max_examples=200)
def test_step_is_deterministic(state, action):
    assert cartpole_step(DEFAULT, state, action) == cartpole_step(DEFAULT, state, action)


@given(live_states, st.sampled_from([PUSH_LEFT, PUSH_RIGHT]), st.sampled_from([9.8, 30.0, 50.0]))
@settings(max_examples=200)
def test_mirror_symmetry(state, action, gravity):
    params = CartPoleParams(gravity=gravity)
    out = cartpole_step(params, state, action)
    mirrored = cartpole_step(params, state.mirrored(), 1 - action)
    assert mirrored.next_state == out.next_state.mirrored()
    assert mirrored.reward == out.reward
    assert mirrored.terminal == out.terminal


# -- rewards and shifts ------------------------------------------------------


@pytest.mark.parametrize("x, expected", [(0.0, 1.0), (2.4, 0.0), (-1.2, 0.5)])
def test_centered_reward(x, expected):
    assert centered_reward(x, 2.4) == expected


def test_centered_reward_can_go_negative_beyond_the_track():
    assert centered_reward(3.6, 2.4) == pytest.approx(-0.5)


def test_shifted_params():
    g = shifted_params(DEFAULT, Gravity(30.0))
    assert g.gravity == 30.0 and dataclasses.replace(g, gravity=9.8) == DEFAULT
    assert shifted_params(DEFAULT, CartMass(25.0)).cart_mass == 25.0
    assert shifted_params(DEFAULT, Gravity(9.8)) == DEFAULT
    assert shifted_params(DEFAULT, RewardShift(RewardMode.CENTER_PROXIMITY)).reward_mode is RewardMode.CENTER_PROXIMITY


@pytest.mark.parametrize("shift", [Gravity(0.0), Gravity(-1.0), CartMass(0.0)])
def test_shifted_params_rejects_non_positive(shift):
    with pytest.raises(ValueError):
        shifted_params(DEFAULT, shift)


def test_params_json_fragment_round_trip():
    params = CartPoleParams(gravity=50.0, reward_mode=RewardMode.CENTER_PROXIMITY)
    doc = json.loads(json.dumps(params.to_dict()))
    assert set(doc) == {
        "gravity", "cart_mass", "pole_mass", "pole_half_length", "force_mag", "tau",
        "x_threshold", "theta_threshold", "max_episode_steps", "reward_mode",
    }
    assert doc["reward_mode"] == "CenterProximity"
    assert CartPoleParams.from_dict(doc) == params
    assert CartPoleParams.from_dict({"cart_mass": 10.0}).cart_mass == 10.0
    with pytest.raises(ValueError):
        CartPoleParams.from_dict({"gravty": 1.0})
    with pytest.raises(ValueError):
        CartPoleParams.from_dict({"reward_mode": "Sparse"})


# -- episodes ----------------------------------------------------------------


def test_balancing_controller_reaches_the_cap():
    model = CartPoleModel()
    rng = random.Random(0)
    result = simulate_episode(model, balancer, initial_state(rng), 2500, rng)
    assert result.total_return == 2500.0


@pytest.mark.parametrize("seed", range(5))
def test_episode_cap_and_reward_accounting(seed):
    rng = random.Random(seed)
    unit = CartPoleModel()
    choice = lambda s: rng.randrange(2) if rng.random() < 0.2 else balancer(s)
    res = simulate_episode(unit, choice, initial_state(rng), 10_000, rng)
    assert res.steps <= 2500
    assert res.total_return == res.steps

    center = CartPoleModel(CartPoleParams(reward_mode=RewardMode.CENTER_PROXIMITY))
    res = simulate_episode(center, choice, initial_state(rng), 10_000, rng)
    assert res.total_return <= res.steps


@given(live_states, st.integers(0, 2**32), st.sampled_from(list(RewardMode)))
@settings(max_examples=100)
def test_fused_rollout_matches_stepwise_loop(state, seed, mode):
    params = CartPoleParams(reward_mode=mode, gravity=30.0)
    fast = uniform_rollout(params, state, 500, 0.999, random.Random(seed))
    rng = random.Random(seed)
    total, weight, s = 0.0, 1.0, state
    if not CartPoleModel(params).is_terminal(s):
        for _ in range(500):
            out = cartpole_step(params, s, int(rng.random() * 2))
            total += weight * out.reward
            if out.terminal:
                break
            weight *= 0.999
            s = out.next_state
    assert fast == total
