"""Configuration-driven experiment flows behind the CLI.

Each flow writes CSV/JSON artifacts under the config's output directory:
datasets (newline-delimited JSON trajectories), trained policy files, an
evaluation report (one CSV row per trial plus a JSON summary), the worker
timing/communication CSV for distributed runs, and a summary table shaped
like the study's figure data (metric vs m, metric per fixed policy, metric
per learner).

Grid search trains on one shared training set and scores every (lambda,
sigma) cell on a fresh validation cohort whose random streams are keyed by
the cell's values, so duplicated cells tie exactly and the final evaluation
cohorts are never touched during selection.  Ties prefer larger lambda, then
larger sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

from . import jsonio, rng, sim1, sim2
from .config import ExperimentConfig, emit_config, fingerprint
from .errors import ConfigError, DkrrDtrError, NumericalError
from .evaluation import (
    EvalReport,
    evaluate_policy,
    fixed_policy_sim1,
    fixed_policy_sim2,
    metric_names,
    repeated_trials,
    rollout,
    score,
    train_for_trial,
    train_on_data,
)
from .features import FeatureCase, feature_dim
from .learners import save_policy
from .runtime import ComplexityInputs, optimal_workers, timing_report_csv, training_complexity
from .trajectories import save_trajectories

GRID_METRIC = {"sim1": "mean_survival_time", "sim2": "csp"}


# ---------------------------------------------------------------------------
# Grid search

@dataclass(frozen=True)
class GridCell:
    lam: float
    sigma: float
    metric: float  # NaN when training failed
    error: str | None = None


@dataclass(frozen=True)
class GridSearchResult:
    metric_name: str
    best_lam: float
    best_sigma: float
    cells: tuple[GridCell, ...]


def grid_search(config: ExperimentConfig) -> GridSearchResult:
    """Exhaustive (lambda, sigma) search maximizing the trial's target metric."""
    c = config
    if c.learner not in ("krr", "dkrr", "skrr"):
        raise ConfigError(f"grid search needs a kernel learner, got {c.learner!r}")
    metric_name = GRID_METRIC[c.simulator]
    data = rollout(None, c.simulator, c.n_train, rng.train_streams(c.seed, 0))
    cells: list[GridCell] = []
    for lam in c.resolved_lambda_grid():
        for sigma in c.resolved_sigma_grid():
            cell_config = replace(c, lam=lam, sigma=sigma)
            try:
                policy = train_on_data(cell_config, data, trial=0)
                cohort = rollout(
                    policy, c.simulator, c.n_eval,
                    rng.grid_val_streams(c.seed, lam, sigma),
                )
                metric = score(c.simulator, cohort)[metric_name]
                cells.append(GridCell(lam=lam, sigma=sigma, metric=metric))
            except (NumericalError, DkrrDtrError) as exc:
                cells.append(
                    GridCell(lam=lam, sigma=sigma, metric=math.nan, error=str(exc))
                )
    valid = [cell for cell in cells if math.isfinite(cell.metric)]
    if not valid:
        raise NumericalError("every grid cell failed to train")
    best = max(valid, key=lambda cell: (cell.metric, cell.lam, cell.sigma))
    return GridSearchResult(
        metric_name=metric_name, best_lam=best.lam, best_sigma=best.sigma,
        cells=tuple(cells),
    )


def grid_table_csv(result: GridSearchResult) -> str:
    import json

    lines = [f"lam,sigma,{result.metric_name},error"]
    for cell in result.cells:
        err = json.dumps(cell.error) if cell.error else ""
        lines.append(
            f"{jsonio.format_float(cell.lam)},{jsonio.format_float(cell.sigma)},"
            f"{jsonio.format_float(cell.metric)},{err}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Complexity tables

def default_complexity_inputs(config: ExperimentConfig) -> ComplexityInputs:
    """kappa_t = the stage-t feature dimension; ell_t = stage action counts."""
    sim_mod = sim1 if config.simulator == "sim1" else sim2
    case = FeatureCase(config.case or "MJ")
    sets = sim_mod.action_sets()
    T = sim_mod.HORIZON
    kappa = tuple(
        float(feature_dim(config.simulator, case, t, sim_mod.STATE_DIM))
        for t in range(1, T + 1)
    )
    return ComplexityInputs(
        T=T, ell=tuple(float(len(s)) for s in sets), kappa=kappa,
        N=float(config.n_train),
    )


@dataclass(frozen=True)
class ComplexityReport:
    m_star: float
    rows: tuple[tuple[int, float], ...]  # (m, omega)
    argmin_m: int


def complexity_report(inputs: ComplexityInputs, m_list) -> ComplexityReport:
    m_list = [int(m) for m in m_list]
    if not m_list:
        raise ConfigError("complexity report needs a nonempty m list")
    rows = tuple((m, training_complexity(inputs, m)) for m in m_list)
    argmin_m = min(rows, key=lambda r: r[1])[0]
    return ComplexityReport(
        m_star=optimal_workers(inputs), rows=rows, argmin_m=argmin_m
    )


def complexity_csv(report: ComplexityReport) -> str:
    lines = ["m,omega"]
    for m, omega in report.rows:
        lines.append(f"{m},{jsonio.format_float(omega)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Full experiment runs

def _report_row(label: dict, report: EvalReport, names) -> dict:
    row = dict(label)
    for name in names:
        stat = report.metrics[name]
        row[f"{name}_mean"] = stat.mean
        row[f"{name}_std"] = stat.std
    return row


def _trials_csv(rows: list[dict], label_keys: list[str], names, k: int) -> str:
    header = label_keys + ["trial"] + list(names)
    lines = [",".join(header)]
    for row in rows:
        for trial in range(k):
            cells = [str(row[key]) for key in label_keys] + [str(trial)]
            cells += [
                jsonio.format_float(row["report"].metrics[name].values[trial])
                for name in names
            ]
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _summary_csv(rows: list[dict], label_keys: list[str], names) -> str:
    cols = [f"{n}_{s}" for n in names for s in ("mean", "std")]
    lines = [",".join(label_keys + cols)]
    for row in rows:
        cells = [str(row[key]) for key in label_keys]
        for name in names:
            stat = row["report"].metrics[name]
            cells.append(jsonio.format_float(stat.mean))
            cells.append(jsonio.format_float(stat.std))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict[str, Path]:
    """Run the configured experiment end to end and write its artifacts.

    With ``m_list`` set and a dkrr/skrr learner this is the worker-count
    sweep (one summary row per m, policies saved for trial 0 of each m);
    otherwise a single repeated-trials evaluation of the configured learner.
    Fixed-policy configs produce evaluation outputs only.
    """
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(emit_config(config), encoding="utf-8")
    paths = {"config": out / "config.txt"}
    names = metric_names(config.simulator)

    sweep = config.m_list is not None and config.learner in ("dkrr", "skrr")
    variants = (
        [replace(config, m=m) for m in config.m_list] if sweep else [config]
    )
    label_keys = ["learner", "m"] if sweep else ["learner"]

    if config.learner != "fixed":
        data_dir = out / "data"
        data_dir.mkdir(exist_ok=True)
        data0 = rollout(
            None, config.simulator, config.n_train, rng.train_streams(config.seed, 0)
        )
        paths["dataset"] = data_dir / "train_trial000.ndjson"
        save_trajectories(paths["dataset"], data0, config.simulator)
        policy_dir = out / "policies"
        policy_dir.mkdir(exist_ok=True)

    rows = []
    for variant in variants:
        report = repeated_trials(variant)
        label = {"learner": variant.learner}
        if sweep:
            label["m"] = variant.m
        rows.append({**label, "report": report})
        if config.learner != "fixed":
            extras: dict = {}
            policy0 = train_for_trial(variant, 0, extras)
            tag = f"m{variant.m:04d}" if sweep else "trial000"
            path = policy_dir / f"policy_{tag}.json"
            save_policy(path, policy0)
            paths[f"policy_{tag}"] = path
            if "pool" in extras:
                tpath = out / (f"timing_{tag}.csv" if sweep else "timing.csv")
                tpath.write_text(timing_report_csv(extras["pool"]), encoding="utf-8")
                paths[f"timing_{tag}"] = tpath

    reports_dir = out / "reports"
    reports_dir.mkdir(exist_ok=True)
    paths["trials"] = reports_dir / "trials.csv"
    paths["trials"].write_text(
        _trials_csv(rows, label_keys, names, config.repeats), encoding="utf-8"
    )
    paths["summary_csv"] = reports_dir / "summary.csv"
    paths["summary_csv"].write_text(
        _summary_csv(rows, label_keys, names), encoding="utf-8"
    )
    summary = {
        "config_fingerprint": fingerprint(config),
        "seed": config.seed,
        "rows": [_report_row({k: r[k] for k in label_keys}, r["report"], names)
                 for r in rows],
    }
    paths["summary_json"] = reports_dir / "summary.json"
    paths["summary_json"].write_text(jsonio.dumps(summary), encoding="utf-8")
    return paths


# ---------------------------------------------------------------------------
# Canned desk-scale reproductions of the study's figure tables

REPRODUCE_TARGETS = ("sim1-baselines", "sim1-sweep", "sim2-baselines", "sim2-sweep")


def _fixed_variants(simulator: str):
    if simulator == "sim1":
        combos = [a + b + c for a in "AB" for b in "AB" for c in "AB"]
        return [(f"fixed_{cmb}", fixed_policy_sim1(cmb)) for cmb in combos]
    doses = [round(d / 10, 1) for d in range(1, 11)]
    return [(f"fixed_{d:.1f}", fixed_policy_sim2(d)) for d in doses]


def _grid_trimmed(config: ExperimentConfig) -> ExperimentConfig:
    """Coarsen the full grids for minutes-scale canned runs."""
    lam = config.resolved_lambda_grid()[::3]
    return replace(config, lam_grid=tuple(lam), sigma_count=7)


def reproduce(
    target: str, *, seed: int = 0, out="runs/reproduce", threads: int = 1,
    n_train: int | None = None, n_eval: int = 1000, repeats: int = 5,
    cases=None,
) -> Path:
    """Desk-scale data tables mirroring the study's figures.

    sim1-baselines: survival of the 8 fixed treatments, LS and KRR per case.
    sim1-sweep:     DKRR vs S-KRR survival across worker counts, plus m*.
    sim2-baselines: CSP/CCP/TEP of 10 fixed doses, LS and KRR.
    sim2-sweep:     DKRR CSP across worker counts, plus m*.
    """
    if target not in REPRODUCE_TARGETS:
        raise ConfigError(
            f"unknown reproduce target {target!r}; pick from {REPRODUCE_TARGETS}"
        )
    simulator = "sim1" if target.startswith("sim1") else "sim2"
    n_train = n_train or (1000 if simulator == "sim1" else 2000)
    base = ExperimentConfig(
        simulator=simulator, learner="krr", case="MJ", n_train=n_train,
        n_eval=n_eval, repeats=repeats, seed=seed, threads=threads,
        out=str(out),
    )
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names = metric_names(simulator)
    rows: list[dict] = []

    if target.endswith("baselines"):
        case_list = list(cases) if cases else (
            ["SS", "MS", "MJ", "NJ"] if simulator == "sim1" else ["MJ", "NJ"]
        )
        for label, policy in _fixed_variants(simulator):
            report = evaluate_policy(base, policy)
            rows.append({"learner": label, "case": "-", "report": report})
        for case in case_list:
            cfg = replace(base, case=case)
            ls_report = repeated_trials(replace(cfg, learner="ls"))
            rows.append({"learner": "ls", "case": case, "report": ls_report})
            gs = grid_search(_grid_trimmed(cfg))
            krr_cfg = replace(cfg, lam=gs.best_lam, sigma=gs.best_sigma)
            rows.append({
                "learner": "krr", "case": case,
                "report": repeated_trials(krr_cfg),
            })
        label_keys = ["learner", "case"]
    else:
        case = (cases[0] if cases else "MJ")
        full = (1, 5, 10, 20, 50) if simulator == "sim1" else (1, 2, 4, 8, 16, 32)
        # keep >= 10 trajectories per worker so late dose-trial stages stay
        # populated on every machine
        m_list = tuple(m for m in full if m <= max(1, n_train // 10))
        cfg = replace(base, case=case)
        gs = grid_search(_grid_trimmed(cfg))
        cfg = replace(cfg, lam=gs.best_lam, sigma=gs.best_sigma)
        for m in m_list:
            for learner in ("dkrr", "skrr"):
                rep = repeated_trials(replace(cfg, learner=learner, m=m))
                rows.append({"learner": learner, "m": m, "report": rep})
        inputs = default_complexity_inputs(cfg)
        comp = complexity_report(inputs, list(m_list))
        (out / "complexity.csv").write_text(complexity_csv(comp), encoding="utf-8")
        (out / "complexity.json").write_text(
            jsonio.dumps({"m_star": comp.m_star, "argmin_m": comp.argmin_m}),
            encoding="utf-8",
        )
        label_keys = ["learner", "m"]

    table = _summary_csv(rows, label_keys, names)
    path = out / f"{target}.csv"
    path.write_text(table, encoding="utf-8")
    return path
