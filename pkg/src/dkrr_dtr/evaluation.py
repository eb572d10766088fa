"""Policy rollouts against the simulators and outcome metrics.

The flexible-stage trial is scored by mean survival time (sum of stage
rewards, at most the 5-year window).  The dose trial is scored by the
cumulative survival probability CSP, split into the cured proportion CCP
(tumor reached 0, patient never died) and the trial-end proportion TEP
(alive at the end of stage 6, never cured); CSP = CCP + TEP by construction.

``repeated_trials`` reruns the full pipeline (fresh training data, fresh
evaluation cohort, independent child seeds) and reports the mean and sample
standard deviation of each metric across trials.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng, sim1, sim2
from .config import ExperimentConfig, fingerprint
from .errors import InputError
from .kernels import KernelParams
from .learners import DtrPolicy, GreedyPolicy, krr_dtr_train, ls_dtr_train
from .runtime import partition_rows
from .trajectories import Termination, Trajectory


@dataclass(frozen=True)
class FixedPolicy:
    """A non-adaptive baseline: an action letter per stage (flexible-stage
    trial) or one constant dose level (dose trial).

    Constant doses below 0.51 are applied as-is at stage 1 even though the
    learners' stage-1 action set starts at 0.51: the baseline sweep covers
    dose levels 0.1 .. 1.0 and the environment accepts any dose in (0, 1].
    """

    sim: str
    actions: tuple[str, ...] | None = None
    dose: float | None = None

    def __post_init__(self):
        if self.sim == "sim1":
            if (
                self.actions is None
                or len(self.actions) != sim1.HORIZON
                or any(a not in ("A", "B") for a in self.actions)
            ):
                raise InputError("sim1 fixed policy needs 3 actions from {A, B}")
        elif self.sim == "sim2":
            if self.dose is None or not (0.0 < self.dose <= 1.0):
                raise InputError("sim2 fixed policy needs a dose in (0, 1]")
        else:
            raise InputError(f"unknown simulator {self.sim!r}")

    def choose(self, t, packed, rows, gens):
        if self.sim == "sim1":
            value = sim1.ACTION_SET.values[sim1.ACTION_SET.ids.index(self.actions[t - 1])]
        else:
            value = self.dose
        return np.full(len(rows), value)


def fixed_policy_sim1(actions: str) -> FixedPolicy:
    return FixedPolicy(sim="sim1", actions=tuple(actions))


def fixed_policy_sim2(dose: float) -> FixedPolicy:
    return FixedPolicy(sim="sim2", dose=dose)


def rollout(policy, simulator: str, n: int, streams: rng.StreamFamily) -> list[Trajectory]:
    """Generate n trajectories taking greedy/fixed actions at each live stage.

    ``policy`` may be a trained DtrPolicy, a FixedPolicy, or None for the
    uniform-random data-generation behavior.  Policies are pure consumers:
    rollouts never mutate them.
    """
    if isinstance(policy, DtrPolicy):
        if policy.sim != simulator:
            raise InputError(
                f"policy was trained for {policy.sim}, cannot roll out on {simulator}"
            )
        policy = GreedyPolicy(policy)
    elif isinstance(policy, FixedPolicy) and policy.sim != simulator:
        raise InputError(f"fixed policy is for {policy.sim}, not {simulator}")
    if simulator == "sim1":
        return sim1.generate(n, policy, streams)
    if simulator == "sim2":
        return sim2.generate(n, policy, streams)
    raise InputError(f"unknown simulator {simulator!r}")


def mean_survival_time(trajectories) -> float:
    """Mean total survival time (sum of real-stage rewards) per patient."""
    if len(trajectories) == 0:
        raise InputError("no trajectories to score")
    return float(np.mean([t.total_reward for t in trajectories]))


def csp_metrics(trajectories) -> tuple[float, float, float]:
    """(CSP, CCP, TEP) over dose-trial trajectories; CSP == CCP + TEP."""
    if len(trajectories) == 0:
        raise InputError("no trajectories to score")
    n = len(trajectories)
    ccp = sum(1 for t in trajectories if t.termination is Termination.CURED) / n
    tep = sum(1 for t in trajectories if t.termination is Termination.STAGE_LIMIT) / n
    return ccp + tep, ccp, tep


@dataclass(frozen=True)
class TrialStats:
    mean: float
    std: float  # sample std across trials; 0.0 for a single trial
    values: tuple[float, ...]


@dataclass(frozen=True)
class EvalReport:
    metrics: dict[str, TrialStats]
    seed: int
    config_fingerprint: str


def _stats(values: list[float]) -> TrialStats:
    arr = np.asarray(values)
    std = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
    return TrialStats(mean=float(np.mean(arr)), std=std, values=tuple(values))


def metric_names(simulator: str) -> tuple[str, ...]:
    return ("mean_survival_time",) if simulator == "sim1" else ("csp", "ccp", "tep")


def score(simulator: str, trajectories) -> dict[str, float]:
    if simulator == "sim1":
        return {"mean_survival_time": mean_survival_time(trajectories)}
    csp, ccp, tep = csp_metrics(trajectories)
    return {"csp": csp, "ccp": ccp, "tep": tep}


def train_on_data(
    config: ExperimentConfig, data, trial: int, extras: dict | None = None
):
    """Train the configured learner on pre-generated trajectories.

    ``trial`` keys the partition/subset streams.  When ``extras`` is a dict,
    the dkrr worker pool is stored under "pool" for instrumentation readers.
    """
    c = config
    if c.learner == "ls":
        return ls_dtr_train(data, c.case, sim=c.simulator)
    if not c.params_set():
        raise InputError(
            f"learner {c.learner!r} needs lam and sigma (run grid-search first)"
        )
    params = KernelParams(sigma=c.sigma, lam=c.lam)
    if c.learner == "krr":
        return krr_dtr_train(data, c.case, params, sim=c.simulator)
    if c.learner == "dkrr":
        from .learners import dkrr_dtr_train_instrumented

        policy, pool = dkrr_dtr_train_instrumented(
            data, c.case, params, c.m, rng.partition_stream(c.seed, trial),
            sim=c.simulator, threads=c.threads,
        )
        if extras is not None:
            extras["pool"] = pool
        return policy
    if c.learner == "skrr":
        subset = partition_rows(len(data), c.m, rng.subset_stream(c.seed, trial))[0]
        return krr_dtr_train([data[i] for i in subset], c.case, params,
                             sim=c.simulator)
    raise InputError(f"unknown learner {c.learner!r}")


def train_for_trial(config: ExperimentConfig, trial: int, extras: dict | None = None):
    """Train (or construct) the configured policy from trial-tagged data."""
    c = config
    if c.learner == "fixed":
        if c.simulator == "sim1":
            return fixed_policy_sim1(c.fixed_actions)
        return fixed_policy_sim2(c.fixed_dose)
    data = rollout(None, c.simulator, c.n_train, rng.train_streams(c.seed, trial))
    return train_on_data(c, data, trial, extras)


def run_trial(config: ExperimentConfig, trial: int) -> dict[str, float]:
    policy = train_for_trial(config, trial)
    cohort = rollout(
        policy, config.simulator, config.n_eval, rng.eval_streams(config.seed, trial)
    )
    return score(config.simulator, cohort)


def repeated_trials(config: ExperimentConfig, k: int | None = None) -> EvalReport:
    """k independent (train, evaluate) trials; defaults to config.repeats.

    Trials may run on a thread pool (config.threads); the report reduce is
    single-threaded and ordered by trial index either way.
    """
    k = config.repeats if k is None else k
    if k < 1:
        raise InputError("k must be >= 1")
    if config.threads > 1 and k > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            futures = [ex.submit(run_trial, config, trial) for trial in range(k)]
            per_trial = [f.result() for f in futures]
    else:
        per_trial = [run_trial(config, trial) for trial in range(k)]
    metrics = {
        name: _stats([trial[name] for trial in per_trial])
        for name in metric_names(config.simulator)
    }
    return EvalReport(
        metrics=metrics, seed=config.seed, config_fingerprint=fingerprint(config)
    )


def evaluate_policy(
    config: ExperimentConfig, policy, k: int | None = None
) -> EvalReport:
    """Evaluate one fixed policy over k fresh cohorts (no retraining)."""
    k = config.repeats if k is None else k
    per_trial = [
        score(
            config.simulator,
            rollout(policy, config.simulator, config.n_eval,
                    rng.eval_streams(config.seed, trial)),
        )
        for trial in range(k)
    ]
    metrics = {
        name: _stats([t[name] for t in per_trial])
        for name in metric_names(config.simulator)
    }
    return EvalReport(
        metrics=metrics, seed=config.seed, config_fingerprint=fingerprint(config)
    )


def survival_curve_check(values: list[float], reference: float, rel: float) -> bool:
    """True when every value is within ``rel`` relative of ``reference``."""
    return all(
        math.isfinite(v) and abs(v - reference) <= rel * abs(reference)
        for v in values
    )
