"""Seeded experiment grids: environment variant x alpha x iteration budget.

Every sample is one full CartPole episode in which a fresh search runs at
each step. Sample seeds are derived from the cell labels, so adding or
removing cells never changes the results of the others.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from pamcts.cartpole import CartPoleModel, CartPoleParams, initial_state
from pamcts.mdp import derive_seed, simulate_episode, spawn
from pamcts.policy import QFunction, greedy_action, load_qtable
from pamcts.search import RolloutPolicy, SearchConfig, plan

log = logging.getLogger(__name__)

CSV_HEADER = ("env_label", "alpha", "budget", "sample_index", "seed", "episode_return")
DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_BUDGETS = (50, 100, 200, 300, 400, 500)


class ConfigurationError(ValueError):
    pass


class CellError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentGrid:
    env_variants: Tuple[Tuple[str, CartPoleParams], ...]
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS
    iteration_budgets: Tuple[int, ...] = DEFAULT_BUDGETS
    samples_per_cell: int = 50
    base_seed: int = 0
    episode_step_cap: int = 2500
    search: SearchConfig = SearchConfig()
    qtable: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.env_variants or not self.alphas or not self.iteration_budgets:
            raise ConfigurationError("env_variants, alphas and iteration_budgets must be non-empty")
        if self.samples_per_cell < 1:
            raise ConfigurationError("samples_per_cell must be >= 1")
        if self.episode_step_cap < 1:
            raise ConfigurationError("episode_step_cap must be >= 1")
        labels = [label for label, _ in self.env_variants]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"duplicate env labels in {labels}")
        for a in self.alphas:
            if not 0.0 <= a <= 1.0:
                raise ConfigurationError(f"alpha {a} outside [0, 1]")
        for b in self.iteration_budgets:
            if b < 1:
                raise ConfigurationError(f"iteration budget {b} must be >= 1")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: Optional[Path] = None) -> "ExperimentGrid":
        try:
            envs = tuple(
                (str(v["label"]), CartPoleParams.from_dict(v.get("params", {})))
                for v in doc["env_variants"]
            )
            search = SearchConfig(**doc.get("search", {}))
            qtable = doc.get("qtable")
            if qtable is not None and base_dir is not None and not os.path.isabs(qtable):
                qtable = str(base_dir / qtable)
            return cls(
                env_variants=envs,
                alphas=tuple(float(a) for a in doc.get("alphas", DEFAULT_ALPHAS)),
                iteration_budgets=tuple(int(b) for b in doc.get("iteration_budgets", DEFAULT_BUDGETS)),
                samples_per_cell=int(doc.get("samples_per_cell", 50)),
                base_seed=int(doc.get("base_seed", 0)),
                episode_step_cap=int(doc.get("episode_step_cap", 2500)),
                search=search,
                qtable=qtable,
            )
        except KeyError as exc:
            raise ConfigurationError(f"grid config is missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid grid config: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        search = dataclasses.asdict(self.search)
        search.pop("alpha")
        search.pop("iteration_budget")
        search["rollout_policy"] = self.search.rollout_policy.value
        doc: Dict[str, Any] = {
            "env_variants": [{"label": l, "params": p.to_dict()} for l, p in self.env_variants],
            "alphas": list(self.alphas),
            "iteration_budgets": list(self.iteration_budgets),
            "samples_per_cell": self.samples_per_cell,
            "base_seed": self.base_seed,
            "episode_step_cap": self.episode_step_cap,
            "search": search,
        }
        if self.qtable is not None:
            doc["qtable"] = self.qtable
        return doc


def load_grid(path: "os.PathLike[str] | str") -> ExperimentGrid:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    return ExperimentGrid.from_dict(doc, base_dir=path.parent)


@dataclass
class CellResult:
    env_label: str
    alpha: float
    budget: int
    returns: List[float]
    seeds: List[int]
    steps: List[int] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return math.fsum(self.returns) / len(self.returns)

    @property
    def std_dev(self) -> float:
        """Population standard deviation."""
        m = self.mean
        return math.sqrt(math.fsum((r - m) ** 2 for r in self.returns) / len(self.returns))

    @property
    def labels(self) -> Tuple[str, float, int]:
        return (self.env_label, self.alpha, self.budget)


def sample_seed(base_seed: int, env_label: str, alpha: float, budget: Optional[int], index: int) -> int:
    return derive_seed(base_seed, env_label, float(alpha), budget, index)


def run_episode(
    env: CartPoleParams,
    alpha: float,
    budget: int,
    cfg: SearchConfig,
    qf: Optional[QFunction],
    seed: int,
) -> Tuple[float, int]:
    """One episode; a fresh search picks every action unless ``alpha == 1``."""
    model = CartPoleModel(env, discount=cfg.gamma)
    rng = random.Random(seed)
    start = initial_state(rng)
    planner_rng = spawn(rng)
    if alpha == 1.0:
        source = lambda s: greedy_action(qf, s, model.actions(s))  # type: ignore[arg-type]
    else:
        search_cfg = dataclasses.replace(cfg, alpha=alpha, iteration_budget=budget)
        search_qf = qf if alpha > 0.0 else None
        source = lambda s: plan(s, model, search_qf, search_cfg, planner_rng)[0]
    result = simulate_episode(model, source, start, env.max_episode_steps, rng)
    return result.total_return, result.steps


def run_cell(
    env: CartPoleParams,
    alpha: float,
    budget: int,
    samples: int,
    cfg: SearchConfig,
    base_seed: int,
    qf: Optional[QFunction] = None,
    env_label: str = "env",
    step_cap: Optional[int] = None,
) -> CellResult:
    """Run ``samples`` seeded episodes for one (env, alpha, budget) cell.

    ``alpha == 1`` is the bare policy (no search, budget ignored);
    ``alpha == 0`` is plain UCT and never consults ``qf``.
    """
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    if alpha > 0.0 and qf is None:
        raise ConfigurationError(f"alpha={alpha} needs a Q-table")
    if step_cap is not None:
        env = dataclasses.replace(env, max_episode_steps=step_cap)
    seed_budget = None if alpha == 1.0 else budget
    seeds = [sample_seed(base_seed, env_label, alpha, seed_budget, j) for j in range(samples)]
    returns: List[float] = []
    steps: List[int] = []
    for seed in seeds:
        ret, n = run_episode(env, alpha, budget, cfg, qf, seed)
        returns.append(ret)
        steps.append(n)
    return CellResult(env_label, float(alpha), int(budget), returns, seeds, steps)


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class _CellJob:
    env_label: str
    env: CartPoleParams
    alpha: float
    budget: int


def _logical_cells(grid: ExperimentGrid) -> List[_CellJob]:
    jobs = []
    for label, env in grid.env_variants:
        for alpha in grid.alphas:
            if alpha == 1.0:
                jobs.append(_CellJob(label, env, alpha, min(grid.iteration_budgets)))
                continue
            for budget in grid.iteration_budgets:
                jobs.append(_CellJob(label, env, alpha, budget))
    return jobs


def _run_job(grid: ExperimentGrid, qf: Optional[QFunction], job: _CellJob) -> CellResult:
    try:
        return run_cell(
            job.env, job.alpha, job.budget, grid.samples_per_cell, grid.search,
            grid.base_seed, qf, job.env_label, grid.episode_step_cap,
        )
    except Exception as exc:
        raise CellError(
            f"cell (env={job.env_label}, alpha={job.alpha}, budget={job.budget}) failed: {exc}"
        ) from exc


def run_grid(
    grid: ExperimentGrid,
    qf: Optional[QFunction] = None,
    jobs: int = 1,
) -> List[CellResult]:
    """Run every cell; results are ordered by (env_label, alpha, budget).

    Bare-policy cells (``alpha == 1``) run once per environment and are
    replicated across all budgets so every panel has a point per budget.
    """
    if qf is None and grid.qtable is not None and any(a > 0 for a in grid.alphas):
        qf = load_qtable(grid.qtable)
    cells = _logical_cells(grid)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_job, grid, qf, job) for job in cells]
            computed = [f.result() for f in futures]
    else:
        computed = []
        for job in cells:
            log.info("cell env=%s alpha=%s budget=%s", job.env_label, job.alpha, job.budget)
            computed.append(_run_job(grid, qf, job))

    results: List[CellResult] = []
    for cell in computed:
        if cell.alpha == 1.0:
            for budget in grid.iteration_budgets:
                results.append(dataclasses.replace(cell, budget=budget, returns=list(cell.returns),
                                                   seeds=list(cell.seeds), steps=list(cell.steps)))
        else:
            results.append(cell)
    results.sort(key=lambda c: c.labels)
    return results


# --------------------------------------------------------------------------
# outputs


def write_results_csv(results: Iterable[CellResult], path: "os.PathLike[str] | str") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for cell in results:
            for j, (seed, ret) in enumerate(zip(cell.seeds, cell.returns)):
                writer.writerow([cell.env_label, repr(cell.alpha), cell.budget, j, seed, repr(float(ret))])


def read_results_csv(path: "os.PathLike[str] | str") -> List[CellResult]:
    cells: Dict[Tuple[str, float, int], CellResult] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            if not row:
                continue
            label, alpha, budget, _, seed, ret = row
            key = (label, float(alpha), int(budget))
            cell = cells.setdefault(key, CellResult(label, key[1], key[2], [], []))
            cell.seeds.append(int(seed))
            cell.returns.append(float(ret))
    return [cells[k] for k in sorted(cells)]


def plot_data(results: Iterable[CellResult]) -> Dict[str, Any]:
    """``{"envs": {label: {alpha: [[budget, mean, std], ...]}}}``, budgets ascending."""
    envs: Dict[str, Dict[str, List[List[float]]]] = {}
    for cell in results:
        panel = envs.setdefault(cell.env_label, {}).setdefault(repr(cell.alpha), [])
        panel.append([cell.budget, cell.mean, cell.std_dev])
    for panels in envs.values():
        for points in panels.values():
            points.sort(key=lambda p: p[0])
    return {"envs": envs}


def emit_plot_data(
    results: Iterable[CellResult],
    path: "os.PathLike[str] | str",
    svg_path: "os.PathLike[str] | str | None" = None,
) -> Dict[str, Any]:
    doc = plot_data(results)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    if svg_path is not None:
        from pamcts.plotting import render_svg

        render_svg(doc, svg_path)
    return doc
