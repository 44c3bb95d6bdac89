"""Tabular action-value provider: discretization, double Q-learning, persistence.

The search only ever asks for ``q(state, action)``; :class:`QTable` is one
way to answer that, and any object with a matching ``q`` method (for
example a wrapper around an externally trained network) is accepted
wherever a :class:`QFunction` is expected.
"""
from __future__ import annotations

import bisect
import json
import math
import os
import random
from dataclasses import dataclass, field
from typing import (
    Any,
    Callable,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Tuple,
)

from pamcts.mdp import Action, MdpModel, State

MAX_CELLS = 10**7
FORMAT_VERSION = 1


class QFunction(Protocol):
    def q(self, state: State, action: Action) -> float:
        ...


class QTableError(ValueError):
    """Malformed or inconsistent Q-table file."""


class ResourceLimitError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# discretization


@dataclass(frozen=True)
class DiscretizationScheme:
    """Per-dimension bin edges; dimension ``i`` reads ``state[i]``.

    Values outside the outer edges are clamped into the first/last bin, so
    every state maps to some cell. A scheme with no dimensions has exactly
    one cell.
    """

    edges: Tuple[Tuple[float, ...], ...]

    def __post_init__(self) -> None:
        edges = tuple(tuple(float(e) for e in dim) for dim in self.edges)
        object.__setattr__(self, "edges", edges)
        for i, dim in enumerate(edges):
            if len(dim) < 2:
                raise ValueError(f"dimension {i} needs at least two edges")
            if any(not math.isfinite(e) for e in dim):
                raise ValueError(f"dimension {i} has non-finite edges")
            if any(b <= a for a, b in zip(dim, dim[1:])):
                raise ValueError(f"edges of dimension {i} must be strictly increasing")

    @classmethod
    def uniform(cls, bounds: Sequence[Tuple[float, float]], bins: Sequence[int]) -> "DiscretizationScheme":
        edges = []
        for (lo, hi), n in zip(bounds, bins, strict=True):
            if n < 1:
                raise ValueError("bin count must be >= 1")
            width = (hi - lo) / n
            edges.append(tuple(lo + width * k for k in range(n)) + (hi,))
        return cls(tuple(edges))

    @property
    def bins(self) -> Tuple[int, ...]:
        return tuple(len(dim) - 1 for dim in self.edges)

    @property
    def n_cells(self) -> int:
        return math.prod(self.bins)

    def cell(self, state: Sequence[float]) -> int:
        """Row-major cell index of ``state``."""
        index = 0
        for i, dim in enumerate(self.edges):
            n = len(dim) - 1
            b = bisect.bisect_right(dim, state[i]) - 1
            if b < 0:
                b = 0
            elif b >= n:
                b = n - 1
            index = index * n + b
        return index


def cartpole_scheme(bins: int = 12) -> DiscretizationScheme:
    """Default CartPole grid: uniform bins over the balanced-trajectory envelope."""
    bounds = [(-2.4, 2.4), (-3.0, 3.0), (-0.21, 0.21), (-3.5, 3.5)]
    return DiscretizationScheme.uniform(bounds, [bins] * 4)


# --------------------------------------------------------------------------
# Q-table


class QTable:
    """Dense ``(cell, action)`` value table; immutable once built."""

    def __init__(
        self,
        scheme: DiscretizationScheme,
        n_actions: int,
        values: Sequence[float],
        metadata: Optional[Mapping[str, Any]] = None,
    ):
        if n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        values = [float(v) for v in values]
        if len(values) != scheme.n_cells * n_actions:
            raise ValueError(
                f"expected {scheme.n_cells * n_actions} values, got {len(values)}"
            )
        if any(not math.isfinite(v) for v in values):
            raise ValueError("Q values must be finite")
        self.scheme = scheme
        self.n_actions = n_actions
        self._values = tuple(values)
        self.metadata: Dict[str, Any] = dict(metadata or {})

    @property
    def values(self) -> Tuple[float, ...]:
        return self._values

    def q(self, state: State, action: Action) -> float:
        return self._values[self.scheme.cell(state) * self.n_actions + action]

    def q_values(self, state: State) -> Tuple[float, ...]:
        base = self.scheme.cell(state) * self.n_actions
        return self._values[base : base + self.n_actions]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QTable):
            return NotImplemented
        return (
            self.scheme == other.scheme
            and self.n_actions == other.n_actions
            and self._values == other._values
            and self.metadata == other.metadata
        )

    def __repr__(self) -> str:
        return f"QTable(cells={self.scheme.n_cells}, n_actions={self.n_actions})"


class ZeroQ:
    """Q-function that knows nothing; used for pure-MCTS runs."""

    def q(self, state: State, action: Action) -> float:
        return 0.0


# --------------------------------------------------------------------------
# action selection


def greedy_action(qf: QFunction, state: State, actions: Sequence[Action]) -> Action:
    """Argmax of ``q(state, a)``; ties go to the earliest action."""
    if not actions:
        raise ValueError("actions must be non-empty")
    best = actions[0]
    best_q = qf.q(state, best)
    for a in actions[1:]:
        v = qf.q(state, a)
        if v > best_q:
            best, best_q = a, v
    return best


def _boltzmann_index(qs: Sequence[float], temperature: float, u: float) -> int:
    top = max(qs)
    weights = [math.exp((v - top) / temperature) for v in qs]
    threshold = u * sum(weights)
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if threshold < acc:
            return i
    return len(qs) - 1


def boltzmann_action(
    qf: QFunction,
    state: State,
    actions: Sequence[Action],
    temperature: float,
    rng: random.Random,
) -> Action:
    """Sample with probability proportional to ``exp(q / temperature)``."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    if not actions:
        raise ValueError("actions must be non-empty")
    qs = [qf.q(state, a) for a in actions]
    return actions[_boltzmann_index(qs, temperature, rng.random())]


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    steps: int = 300_000
    gamma: float = 0.999
    initial_temperature: float = 5.0
    final_temperature: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not (self.initial_temperature > 0 and self.final_temperature > 0):
            raise ValueError("temperatures must be positive")

    def temperature(self, step: int) -> float:
        """Exponential decay from the initial to the final temperature."""
        if self.steps == 1:
            return self.initial_temperature
        frac = step / (self.steps - 1)
        return self.initial_temperature * (self.final_temperature / self.initial_temperature) ** frac


def train_double_q(
    model: MdpModel,
    scheme: DiscretizationScheme,
    cfg: TrainConfig,
    rng: random.Random,
    reset: Optional[Callable[[random.Random], State]] = None,
    on_checkpoint: Optional[Callable[[int, QTable], None]] = None,
    checkpoint_steps: Iterable[int] = (),
) -> QTable:
    """Tabular double Q-learning with a Boltzmann behaviour policy.

    Two tables are kept; each transition updates one of them (coin flip),
    bootstrapping from the other table's value of its own argmax action.
    The behaviour policy and the returned table use their average.
    ``reset`` defaults to ``model.initial_state``.
    """
    if scheme.n_cells > MAX_CELLS:
        raise ResourceLimitError(
            f"scheme has {scheme.n_cells} cells, more than the limit of {MAX_CELLS}"
        )
    reset = reset or getattr(model, "initial_state")
    checkpoints = set(checkpoint_steps)

    state = reset(rng)
    actions = list(model.actions(state))
    na = len(actions)
    size = scheme.n_cells * na
    qa = [0.0] * size
    qb = [0.0] * size
    lr = cfg.learning_rate
    gamma = cfg.gamma
    cell = scheme.cell(state)
    metadata = _metadata(model, cfg)

    def snapshot() -> QTable:
        return QTable(scheme, na, [(a + b) / 2 for a, b in zip(qa, qb)], metadata)

    for t in range(cfg.steps):
        if t in checkpoints and on_checkpoint is not None:
            on_checkpoint(t, snapshot())
        base = cell * na
        qs = [(qa[base + i] + qb[base + i]) / 2 for i in range(na)]
        idx = _boltzmann_index(qs, cfg.temperature(t), rng.random())
        out = model.sample_transition(state, actions[idx], rng)
        ncell = scheme.cell(out.next_state)
        nbase = ncell * na
        if rng.random() < 0.5:
            upd, other = qa, qb
        else:
            upd, other = qb, qa
        target = out.reward
        if not out.terminal:
            best = 0
            for i in range(1, na):
                if upd[nbase + i] > upd[nbase + best]:
                    best = i
            target += gamma * other[nbase + best]
        upd[base + idx] += lr * (target - upd[base + idx])

        if out.terminal:
            state = reset(rng)
            cell = scheme.cell(state)
        else:
            state = out.next_state
            cell = ncell
    table = snapshot()
    if cfg.steps in checkpoints and on_checkpoint is not None:
        on_checkpoint(cfg.steps, table)
    return table


def _metadata(model: MdpModel, cfg: TrainConfig) -> Dict[str, Any]:
    params = getattr(model, "params", None)
    env = params.to_dict() if hasattr(params, "to_dict") else None
    return {
        "env_params": env,
        "gamma": cfg.gamma,
        "steps": cfg.steps,
        "learning_rate": cfg.learning_rate,
        "initial_temperature": cfg.initial_temperature,
        "final_temperature": cfg.final_temperature,
        "seed": cfg.seed,
    }


# --------------------------------------------------------------------------
# persistence


def qtable_to_dict(table: QTable) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "scheme": {"edges": [list(dim) for dim in table.scheme.edges]},
        "n_actions": table.n_actions,
        "values": list(table.values),
        "metadata": table.metadata,
    }


def qtable_from_dict(doc: Any) -> QTable:
    if not isinstance(doc, dict):
        raise QTableError("top-level document must be an object")
    for key in ("scheme", "values", "metadata"):
        if key not in doc:
            raise QTableError(f"missing field '{key}'")
    scheme_doc = doc["scheme"]
    if not isinstance(scheme_doc, dict) or not isinstance(scheme_doc.get("edges"), list):
        raise QTableError("field 'scheme.edges' must be a list of edge lists")
    try:
        scheme = DiscretizationScheme(tuple(tuple(dim) for dim in scheme_doc["edges"]))
    except (TypeError, ValueError) as exc:
        raise QTableError(f"field 'scheme.edges' is invalid: {exc}") from exc
    values = doc["values"]
    if not isinstance(values, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
    ):
        raise QTableError("field 'values' must be a flat list of numbers")
    n_actions = doc.get("n_actions")
    if n_actions is None:
        n_actions = len(values) // scheme.n_cells if scheme.n_cells else 0
    if not isinstance(n_actions, int) or n_actions < 1:
        raise QTableError("field 'n_actions' must be a positive integer")
    if len(values) != scheme.n_cells * n_actions:
        raise QTableError(
            f"field 'values' has {len(values)} entries, expected "
            f"{scheme.n_cells} cells x {n_actions} actions"
        )
    if not isinstance(doc["metadata"], dict):
        raise QTableError("field 'metadata' must be an object")
    try:
        return QTable(scheme, n_actions, values, doc["metadata"])
    except ValueError as exc:
        raise QTableError(f"field 'values' is invalid: {exc}") from exc


def save_qtable(table: QTable, path: "os.PathLike[str] | str") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(qtable_to_dict(table), fh)


def load_qtable(path: "os.PathLike[str] | str") -> QTable:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise QTableError(f"malformed Q-table file {path}: {exc}") from exc
    return qtable_from_dict(doc)
