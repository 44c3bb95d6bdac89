"""Command-line entry point: ``pamcts {train,plan,run,plot}``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import random
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pamcts.cartpole import CartPoleModel, CartPoleParams, CartPoleState, initial_state
from pamcts.experiment import (
    ConfigurationError,
    emit_plot_data,
    load_grid,
    read_results_csv,
    run_grid,
    write_results_csv,
)
from pamcts.policy import (
    DiscretizationScheme,
    TrainConfig,
    cartpole_scheme,
    load_qtable,
    save_qtable,
    train_double_q,
)
from pamcts.search import RolloutPolicy, SearchConfig, plan

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pamcts", description="Policy-augmented MCTS on CartPole.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    train = sub.add_parser("train", help="train a tabular double-Q policy on the default env")
    train.add_argument("--steps", type=int, default=300_000)
    train.add_argument("--lr", type=float, default=0.001)
    train.add_argument("--gamma", type=float, default=0.999)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--temperature", type=_floats, default=[5.0, 0.1],
                       help="initial,final Boltzmann temperature")
    train.add_argument("--bins", type=_ints, default=[12],
                       help="bins per dimension (one value or four)")
    train.add_argument("--bounds", type=_floats, default=None,
                       help="x,x_dot,theta,theta_dot clamp magnitudes")
    train.add_argument("--out", required=True)

    pl = sub.add_parser("plan", help="run one decision epoch and print the chosen action")
    pl.add_argument("--alpha", type=float, default=0.0)
    pl.add_argument("--budget", type=int, default=100)
    pl.add_argument("--qtable")
    pl.add_argument("--env-json", help="CartPoleParams JSON file or inline JSON object")
    pl.add_argument("--state", type=_floats, help="x,x_dot,theta,theta_dot (default: seeded reset)")
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--c", type=float, default=50.0)
    pl.add_argument("--k", type=float, default=0.0)
    pl.add_argument("--gamma", type=float, default=0.999)
    pl.add_argument("--horizon", type=int, default=500)
    pl.add_argument("--rollout", choices=[p.value for p in RolloutPolicy], default="UniformRandom")
    pl.add_argument("--diagnostics", action="store_true", help="also print the root statistics as JSON")

    run = sub.add_parser("run", help="execute an experiment grid from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", required=True)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--qtable", help="Q-table path; overrides the config's 'qtable' field")
    run.add_argument("--svg", action="store_true", help="also render plot.svg")

    plot = sub.add_parser("plot", help="turn a results CSV into plot data (and optionally SVG)")
    plot.add_argument("--csv", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--svg")
    return parser


def _scheme(bins: Sequence[int], bounds: Optional[Sequence[float]]) -> DiscretizationScheme:
    if len(bins) == 1:
        bins = list(bins) * 4
    if len(bins) != 4:
        raise UsageError("--bins takes one value or four")
    if bounds is None:
        if len(set(bins)) == 1:
            return cartpole_scheme(bins[0])
        bounds = [2.4, 3.0, 0.21, 3.5]
    if len(bounds) != 4 or any(b <= 0 for b in bounds):
        raise UsageError("--bounds takes four positive magnitudes")
    return DiscretizationScheme.uniform([(-b, b) for b in bounds], bins)


def _env_params(text: Optional[str]) -> CartPoleParams:
    if not text:
        return CartPoleParams()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
    else:
        doc = json.loads(Path(text).read_text(encoding="utf-8"))
    return CartPoleParams.from_dict(doc)


def cmd_train(args: argparse.Namespace) -> int:
    if len(args.temperature) != 2:
        raise UsageError("--temperature takes initial,final")
    try:
        cfg = TrainConfig(
            learning_rate=args.lr, steps=args.steps, gamma=args.gamma,
            initial_temperature=args.temperature[0], final_temperature=args.temperature[1],
            seed=args.seed,
        )
        scheme = _scheme(args.bins, args.bounds)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    table = train_double_q(CartPoleModel(CartPoleParams(), discount=args.gamma), scheme, cfg,
                           random.Random(args.seed))
    save_qtable(table, args.out)
    print(f"wrote {args.out} ({scheme.n_cells} cells)")
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    try:
        env = _env_params(args.env_json)
        cfg = SearchConfig(
            exploration_constant=args.c, alpha=args.alpha, decay_rate=args.k, gamma=args.gamma,
            rollout_horizon=args.horizon, iteration_budget=args.budget, rollout_policy=args.rollout,
        )
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc
    needs_q = args.alpha > 0 or args.rollout == RolloutPolicy.GREEDY_Q.value
    if needs_q and not args.qtable:
        raise UsageError("--qtable is required when alpha > 0 or rollouts are GreedyQ")
    qf = load_qtable(args.qtable) if args.qtable else None
    rng = random.Random(args.seed)
    if args.state:
        if len(args.state) != 4:
            raise UsageError("--state takes four numbers")
        state = CartPoleState(*args.state, 0)
    else:
        state = initial_state(rng)
    model = CartPoleModel(env, discount=args.gamma)
    action, diag = plan(state, model, qf, cfg, rng)
    print(action)
    if args.diagnostics:
        print(json.dumps(diag.to_dict()))
    return EXIT_OK


BUNDLED_CONFIGS = Path(__file__).parent / "configs"


def _config_path(text: str) -> Path:
    """A file path, or the name of a bundled config such as ``gravity_desk``."""
    path = Path(text)
    if not path.exists():
        bundled = BUNDLED_CONFIGS / f"{text}.json"
        if bundled.exists():
            return bundled
    return path


def cmd_run(args: argparse.Namespace) -> int:
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    try:
        grid = load_grid(_config_path(args.config))
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from exc
    if args.qtable:
        grid = dataclasses.replace(grid, qtable=args.qtable)
    if grid.qtable is None and any(a > 0 for a in grid.alphas):
        raise UsageError("config needs a 'qtable' path when any alpha > 0")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_grid(grid, jobs=args.jobs)
    write_results_csv(results, out / "results.csv")
    emit_plot_data(results, out / "plot.json", out / "plot.svg" if args.svg else None)
    print(f"wrote {len(results)} cells to {out}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    results = read_results_csv(args.csv)
    emit_plot_data(results, args.out, args.svg)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "plan": cmd_plan, "run": cmd_run, "plot": cmd_plot}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        print(f"pamcts: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
