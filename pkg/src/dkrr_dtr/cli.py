"""Command-line harness.

Subcommands: generate, train, evaluate, sweep-m, grid-search, complexity,
reproduce.  Most take --config (a flat key = value file, see config.py) and
accept --seed / --out / --threads overrides.  Exit codes: 0 success, 2
config error, 3 numerical failure, 4 I/O error.

Note on grid search: validation cohorts are drawn from a dedicated seed
branch keyed per grid cell, independent of the test cohorts used by
evaluate/sweeps; the selection never sees the final evaluation data.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import jsonio, rng
from .config import ExperimentConfig, fingerprint, load_config, with_overrides
from .errors import ConfigError, DkrrDtrError, NumericalError
from .evaluation import evaluate_policy, metric_names, rollout
from .experiments import (
    REPRODUCE_TARGETS,
    complexity_csv,
    complexity_report,
    default_complexity_inputs,
    grid_search,
    grid_table_csv,
    reproduce,
    run_experiment,
)
from .learners import load_policy, save_policy
from .trajectories import save_trajectories


def _add_common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", type=Path, required=config_required,
                   help="experiment config file (key = value lines)")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", type=Path, default=None, help="output directory override")
    p.add_argument("--threads", type=int, default=None, help="worker thread override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dkrr-dtr",
        description="Kernel-based distributed Q-learning for dynamic treatment regimes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a training dataset (ndjson)")
    _add_common(p)
    p.add_argument("--n", type=int, default=None, help="override n_train")

    p = sub.add_parser("train", help="train one policy and save it")
    _add_common(p)

    p = sub.add_parser("evaluate", help="evaluate a saved policy over fresh cohorts")
    _add_common(p)
    p.add_argument("--policy", type=Path, required=True, help="policy file to load")

    p = sub.add_parser("sweep-m", help="repeat the experiment for every m in m_list")
    _add_common(p)

    p = sub.add_parser("grid-search", help="grid search over (lambda, sigma)")
    _add_common(p)

    p = sub.add_parser("complexity", help="analytic training-cost table and m*")
    _add_common(p)
    p.add_argument("--m-list", type=str, default="1,2,4,8,16,32,64,128",
                   help="comma-separated worker counts")

    p = sub.add_parser(
        "reproduce", help="canned desk-scale versions of the study's figure tables"
    )
    p.add_argument("target", choices=REPRODUCE_TARGETS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("runs/reproduce"))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--repeats", type=int, default=5)
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    return with_overrides(config, seed=args.seed, out=args.out, threads=args.threads)


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_generate(args) -> int:
    config = _load(args)
    n = args.n if args.n is not None else config.n_train
    data = rollout(None, config.simulator, n, rng.train_streams(config.seed, 0))
    out = _out_dir(config)
    path = out / f"{config.simulator}_train_n{n}_seed{config.seed}.ndjson"
    save_trajectories(path, data, config.simulator)
    print(f"wrote {len(data)} trajectories to {path}")
    return 0


def _cmd_train(args) -> int:
    from .evaluation import train_for_trial
    from .runtime import timing_report_csv

    config = _load(args)
    out = _out_dir(config)
    extras: dict = {}
    policy = train_for_trial(config, 0, extras)
    if config.learner == "fixed":
        print("fixed policies have no trained artifact; nothing to save")
        return 0
    path = out / "policy_trial000.json"
    save_policy(path, policy)
    print(f"wrote policy to {path}")
    if "pool" in extras:
        tpath = out / "timing.csv"
        tpath.write_text(timing_report_csv(extras["pool"]), encoding="utf-8")
        print(f"wrote timing report to {tpath}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _load(args)
    policy = load_policy(args.policy)
    report = evaluate_policy(config, policy)
    out = _out_dir(config)
    names = metric_names(config.simulator)
    lines = ["trial," + ",".join(names)]
    for trial in range(len(report.metrics[names[0]].values)):
        cells = [str(trial)] + [
            jsonio.format_float(report.metrics[n].values[trial]) for n in names
        ]
        lines.append(",".join(cells))
    (out / "evaluation.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    summary = {
        "config_fingerprint": report.config_fingerprint,
        "seed": report.seed,
        "metrics": {
            n: {"mean": s.mean, "std": s.std} for n, s in report.metrics.items()
        },
    }
    (out / "evaluation.json").write_text(jsonio.dumps(summary), encoding="utf-8")
    for n in names:
        s = report.metrics[n]
        print(f"{n}: mean {s.mean:.6f} std {s.std:.6f}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load(args)
    if config.m_list is None:
        raise ConfigError("sweep-m needs m_list in the config")
    paths = run_experiment(config)
    print(f"wrote summary to {paths['summary_csv']}")
    return 0


def _cmd_grid_search(args) -> int:
    config = _load(args)
    result = grid_search(config)
    out = _out_dir(config)
    (out / "grid.csv").write_text(grid_table_csv(result), encoding="utf-8")
    best = {
        "metric": result.metric_name,
        "lam": result.best_lam,
        "sigma": result.best_sigma,
        "config_fingerprint": fingerprint(config),
    }
    (out / "grid_best.json").write_text(jsonio.dumps(best), encoding="utf-8")
    print(f"best lam={result.best_lam!r} sigma={result.best_sigma!r} "
          f"({result.metric_name} maximized); table in {out / 'grid.csv'}")
    return 0


def _cmd_complexity(args) -> int:
    config = _load(args)
    m_list = [int(v) for v in args.m_list.split(",")]
    report = complexity_report(default_complexity_inputs(config), m_list)
    out = _out_dir(config)
    (out / "complexity.csv").write_text(complexity_csv(report), encoding="utf-8")
    (out / "complexity.json").write_text(
        jsonio.dumps({"m_star": report.m_star, "argmin_m": report.argmin_m}),
        encoding="utf-8",
    )
    print(f"m* = {report.m_star:.3f}; best listed m = {report.argmin_m}")
    return 0


def _cmd_reproduce(args) -> int:
    path = reproduce(
        args.target, seed=args.seed, out=args.out, threads=args.threads,
        n_train=args.n_train, repeats=args.repeats,
    )
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep-m": _cmd_sweep,
    "grid-search": _cmd_grid_search,
    "complexity": _cmd_complexity,
    "reproduce": _cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except DkrrDtrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
