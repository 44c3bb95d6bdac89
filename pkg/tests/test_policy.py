import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from pamcts.cartpole import CartPoleModel, CartPoleParams, initial_state
from pamcts.mdp import TransitionOutcome, simulate_episode
from pamcts.policy import (
    DiscretizationScheme,
    QTable,
    QTableError,
    ResourceLimitError,
    TrainConfig,
    boltzmann_action,
    cartpole_scheme,
    greedy_action,
    load_qtable,
    qtable_to_dict,
    save_qtable,
    train_double_q,
)


class FixedQ:
    def __init__(self, values):
        self.values = list(values)

    def q(self, state, action):
        return self.values[action]


class SelfLoop:
    """Single state, two actions, reward 1 forever."""

    discount = 0.5

    def actions(self, state):
        return (0, 1)

    def sample_transition(self, state, action, rng):
        return TransitionOutcome((), 1.0, False)

    def is_terminal(self, state):
        return False

    def initial_state(self, rng):
        return ()


# -- discretization ------------------------------------------------------------


def test_scheme_cells_and_clamping():
    scheme = DiscretizationScheme(((0.0, 1.0, 2.0), (-1.0, 0.0, 1.0, 2.0)))
    assert scheme.bins == (2, 3)
    assert scheme.n_cells == 6
    assert scheme.cell((0.5, -0.5)) == 0
    assert scheme.cell((1.5, 1.5)) == 1 * 3 + 2
    assert scheme.cell((-9.0, -9.0)) == 0  # clamped low
    assert scheme.cell((9.0, 9.0)) == 5  # clamped high
    assert scheme.cell((2.0, 2.0)) == 5  # upper edge belongs to the last bin


def test_default_scheme_shape():
    scheme = cartpole_scheme()
    assert scheme.bins == (12, 12, 12, 12)
    assert scheme.edges[0][0] == -2.4 and scheme.edges[3][-1] == 3.5


@pytest.mark.parametrize("edges", [((0.0, 0.0),), ((1.0, 0.0),), ((0.0,),), ((0.0, float("nan")),)])
def test_scheme_rejects_bad_edges(edges):
    with pytest.raises(ValueError):
        DiscretizationScheme(edges)


def test_resource_limit():
    huge = DiscretizationScheme.uniform([(0.0, 1.0)] * 4, [60] * 4)
    with pytest.raises(ResourceLimitError):
        train_double_q(CartPoleModel(), huge, TrainConfig(steps=10), random.Random(0))


# -- action selection ----------------------------------------------------------


def test_greedy_examples():
    assert greedy_action(FixedQ([3.0, 7.0]), None, (0, 1)) == 1
    assert greedy_action(FixedQ([5.0, 5.0]), None, (0, 1)) == 0
    assert greedy_action(FixedQ([13.0, 17.0]), None, (0, 1)) == 1


@given(
    st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=6),
    st.floats(0.01, 100.0),
    st.floats(-1e3, 1e3),
)
@settings(max_examples=150)
def test_greedy_is_invariant_under_increasing_affine_maps(values, scale, shift):
    # keep only well separated values so the transform cannot create ties by rounding
    values = [round(v) * 1.0 for v in values]
    actions = tuple(range(len(values)))
    mapped = FixedQ([scale * v + shift for v in values])
    assert greedy_action(FixedQ(values), None, actions) == greedy_action(mapped, None, actions)


def test_boltzmann_uniform_when_values_tie():
    rng = random.Random(0)
    n = 10_000
    counts = [0, 0]
    for _ in range(n):
        counts[boltzmann_action(FixedQ([2.0, 2.0]), None, (0, 1), 1.0, rng)] += 1
    chi2 = sum((c - n / 2) ** 2 / (n / 2) for c in counts)
    assert chi2 < 10.828  # p > 0.001 at one degree of freedom


def test_boltzmann_cold_limit_is_greedy():
    rng = random.Random(1)
    hits = sum(boltzmann_action(FixedQ([0.0, 1.0]), None, (0, 1), 1e-6, rng) for _ in range(10_000))
    assert hits / 10_000 > 0.999


def test_boltzmann_softmax_probabilities():
    # exp(0) : exp(ln 3) = 1 : 3
    rng = random.Random(2)
    hits = sum(boltzmann_action(FixedQ([0.0, math.log(3)]), None, (0, 1), 1.0, rng) for _ in range(10_000))
    assert hits / 10_000 == pytest.approx(0.75, abs=0.02)


def test_boltzmann_is_stable_for_huge_values():
    rng = random.Random(3)
    assert boltzmann_action(FixedQ([1e6, 1e6 + 50]), None, (0, 1), 0.1, rng) == 1


def test_boltzmann_rejects_non_positive_temperature():
    with pytest.raises(ValueError):
        boltzmann_action(FixedQ([0.0]), None, (0,), 0.0, random.Random(0))


# -- training ------------------------------------------------------------------


def test_single_state_self_loop_reaches_bellman_fixed_point():
    scheme = DiscretizationScheme(())
    assert scheme.n_cells == 1
    cfg = TrainConfig(learning_rate=0.1, steps=5_000, gamma=0.5)
    table = train_double_q(SelfLoop(), scheme, cfg, random.Random(0))
    # q = 1 + 0.5 q  =>  q = 2
    assert table.q((), 0) == pytest.approx(2.0, abs=0.1)
    assert table.q((), 1) == pytest.approx(2.0, abs=0.1)


@pytest.mark.parametrize(
    "kwargs",
    [dict(steps=0), dict(learning_rate=0.0), dict(learning_rate=1.5), dict(gamma=0.0),
     dict(initial_temperature=0.0)],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_temperature_schedule_decays_exponentially():
    cfg = TrainConfig(steps=101)
    assert cfg.temperature(0) == 5.0
    assert cfg.temperature(100) == pytest.approx(0.1)
    assert cfg.temperature(50) == pytest.approx(math.sqrt(5.0 * 0.1))


def test_training_is_deterministic():
    cfg = TrainConfig(learning_rate=0.1, steps=5_000)
    a = train_double_q(CartPoleModel(), cartpole_scheme(), cfg, random.Random(4))
    b = train_double_q(CartPoleModel(), cartpole_scheme(), cfg, random.Random(4))
    assert a == b
    assert a.metadata["gamma"] == cfg.gamma
    assert a.metadata["env_params"] == CartPoleParams().to_dict()


def test_unit_reward_values_stay_within_the_discounted_bound():
    cfg = TrainConfig(learning_rate=0.5, steps=50_000)
    table = train_double_q(CartPoleModel(), cartpole_scheme(), cfg, random.Random(5))
    assert max(abs(v) for v in table.values) <= 1001.0


def _greedy_mean(table, episodes=20, cap=500):
    model = CartPoleModel(CartPoleParams(max_episode_steps=cap))
    rng = random.Random(99)
    total = 0.0
    for _ in range(episodes):
        res = simulate_episode(model, lambda s: greedy_action(table, s, (0, 1)), initial_state(rng), cap, rng)
        total += res.total_return
    return total / episodes


def test_more_training_does_not_hurt():
    scheme = DiscretizationScheme.uniform([(-2.4, 2.4), (-2, 2), (-0.21, 0.21), (-2, 2)], [6, 6, 12, 12])
    cfg = TrainConfig(learning_rate=0.1, steps=200_000, gamma=0.99)
    snaps = {}
    final = train_double_q(
        CartPoleModel(), scheme, cfg, random.Random(0),
        on_checkpoint=lambda step, table: snaps.__setitem__(step, table),
        checkpoint_steps=(20_000, 200_000),
    )
    assert snaps[200_000] == final
    assert _greedy_mean(final) >= _greedy_mean(snaps[20_000])


# -- persistence -----------------------------------------------------------------


def _small_table():
    scheme = DiscretizationScheme(((0.0, 1.0, 2.0), (-1.0, 1.0)))
    return QTable(scheme, 2, [0.1, 1 / 3, -2.5e-17, 123456.789], {"seed": 1})


def test_save_load_round_trip(tmp_path):
    table = _small_table()
    path = tmp_path / "q.json"
    save_qtable(table, path)
    loaded = load_qtable(path)
    assert loaded == table
    assert loaded.values == table.values


def test_truncated_file_is_rejected(tmp_path):
    path = tmp_path / "q.json"
    save_qtable(_small_table(), path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(QTableError):
        load_qtable(path)


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.pop("values"), "values"),
        (lambda d: d.pop("scheme"), "scheme"),
        (lambda d: d["scheme"]["edges"][0].reverse(), "scheme.edges"),
        (lambda d: d["values"].append(1.0), "values"),
        (lambda d: d.__setitem__("values", ["a"] * 4), "values"),
        (lambda d: d.__setitem__("metadata", []), "metadata"),
        (lambda d: d.__setitem__("n_actions", 0), "n_actions"),
    ],
)
def test_schema_errors_name_the_field(tmp_path, mutate, field):
    doc = qtable_to_dict(_small_table())
    mutate(doc)
    path = tmp_path / "q.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(QTableError, match=field.replace(".", r"\.")):
        load_qtable(path)


def test_externally_written_table_serves_q(tmp_path):
    # a table produced by some other tool: 2 bins on theta only, row-major values
    doc = {
        "scheme": {"edges": [[-1e9, 1e9], [-1e9, 1e9], [-0.21, 0.0, 0.21], [-1e9, 1e9]]},
        "values": [1.0, 0.0, 0.0, 1.0],
        "metadata": {"source": "external"},
    }
    path = tmp_path / "ext.json"
    path.write_text(json.dumps(doc))
    table = load_qtable(path)
    assert table.n_actions == 2
    left = (0.0, 0.0, -0.1, 0.0)
    right = (0.0, 0.0, 0.1, 0.0)
    assert greedy_action(table, left, (0, 1)) == 0
    assert greedy_action(table, right, (0, 1)) == 1
