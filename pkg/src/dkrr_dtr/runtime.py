"""Worker orchestration for distributed stage training, plus the analytic
training-cost model.

Workers are in-process concurrent tasks over disjoint trajectory subsets.
Real transmission is not simulated; communication is accounted by counting
the entries of the per-action prediction vectors each worker ships to the
synthesizer (m * ell_t * N_t entries per stage).  The synthesis reduction
always runs in worker-index order, so results are bit-identical regardless
of scheduling or thread count.

The analytic cost model for one full training run over T stages with N
samples split across m machines is

    Omega(m) = T N^3 / m^3
             + (sum_t ell_t (1 + kappa_t)) N^2 / m
             + (sum_t ell_t) N m

(local solves, local cross-predictions, global synthesis), minimized in
closed form by ``optimal_workers``.  kappa_t, the cost of one kernel value,
is taken to be the stage-t feature dimension.

Executed work is instrumented with standard dense-solver accounting:
factorization n^3/3, triangular solves n^2 per right-hand side, one
multiply-add per kernel entry coordinate and per prediction term.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .errors import InputError
from .kernels import KernelParams
from .models import StageQ, fit_stage_q, krr_fitter, predict_q_grid


@dataclass(frozen=True)
class ComplexityInputs:
    """Horizon, per-stage action counts, per-stage kernel costs, sample count."""

    T: int
    ell: tuple[float, ...]
    kappa: tuple[float, ...]
    N: float

    def __post_init__(self):
        if self.T < 1 or len(self.ell) != self.T or len(self.kappa) != self.T:
            raise InputError("ell and kappa must both have length T >= 1")
        if min(self.ell) <= 0 or min(self.kappa) <= 0 or self.N <= 0:
            raise InputError("complexity inputs must be positive")

    @property
    def sum_ell(self) -> float:
        return float(sum(self.ell))

    @property
    def sum_ell_kappa(self) -> float:
        return float(sum(l * (1.0 + k) for l, k in zip(self.ell, self.kappa)))


def training_complexity(inputs: ComplexityInputs, m: int) -> float:
    """Omega(m): modeled cost of one distributed training run."""
    if m < 1:
        raise InputError("m must be >= 1")
    N = float(inputs.N)
    return (
        inputs.T * N**3 / m**3
        + inputs.sum_ell_kappa * N**2 / m
        + inputs.sum_ell * N * m
    )


def optimal_workers(inputs: ComplexityInputs) -> float:
    """Closed-form minimizer estimate m* of Omega(m); scales as sqrt(N)."""
    b = inputs.sum_ell_kappa
    c = inputs.sum_ell
    inner = (math.sqrt(b * b + 12.0 * inputs.T * c) + b) / (2.0 * c)
    return math.sqrt(inner) * math.sqrt(inputs.N)


def partition_rows(n: int, m: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform random partition into m near-equal subsets (sizes differ <= 1).

    A random permutation is chunked round-robin and each subset is then
    sorted, so the single-subset case degenerates to the identity order.
    """
    if not (1 <= m <= n):
        raise InputError(f"need 1 <= m <= n, got m={m}, n={n}")
    perm = rng.permutation(n)
    return [np.sort(perm[j::m]) for j in range(m)]


@dataclass
class WorkerStageRecord:
    """Instrumentation for one (stage, worker); worker -1 is the synthesizer."""

    stage: int
    worker: int
    fit_seconds: float = 0.0
    predict_seconds: float = 0.0
    entries_sent: int = 0
    solve_flops: float = 0.0
    kernel_flops: float = 0.0
    predict_flops: float = 0.0
    synth_flops: float = 0.0

    @property
    def flops(self) -> float:
        return (
            self.solve_flops + self.kernel_flops + self.predict_flops
            + self.synth_flops
        )


@dataclass
class WorkerPool:
    """m concurrent workers over a fixed partition of the trajectory rows.

    The partition stays fixed for a whole training run; synthesis weights are
    the subset-size fractions |D_j| / |D|.  ``threads`` bounds concurrent
    local processing; 1 runs workers sequentially.
    """

    partitions: list[np.ndarray]
    threads: int = 1
    records: list[WorkerStageRecord] = field(default_factory=list)

    def __post_init__(self):
        sizes = [len(p) for p in self.partitions]
        if min(sizes, default=0) < 1:
            raise InputError("every worker needs at least one trajectory")
        total = sum(sizes)
        self.weights = [s / total for s in sizes]

    @property
    def m(self) -> int:
        return len(self.partitions)

    def run_local(self, tasks):
        """Run one callable per worker; results are in worker order."""
        if self.threads > 1 and self.m > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                futures = [ex.submit(t) for t in tasks]
                return [f.result() for f in futures]
        return [t() for t in tasks]


@dataclass
class DistributedStage:
    """Inputs of one backward stage, already split per worker.

    ``contexts[j]`` are the rows worker j's trajectories contribute at this
    stage (prediction happens on the concatenation of all workers' rows, in
    worker order).  ``rewards_prev[j]``, when given, are the stage-(t-1)
    rewards aligned with ``contexts[j]`` rows so next labels can be formed.
    """

    t: int
    params: KernelParams
    action_values: tuple[float, ...]
    separate: bool
    fit_contexts: list[np.ndarray]
    fit_y: list[np.ndarray]
    fit_actions: list[np.ndarray]
    contexts: list[np.ndarray]
    kappa: float
    rewards_prev: list[np.ndarray] | None = None


@dataclass
class StageResult:
    models: list[StageQ]
    h_global: list[np.ndarray]  # per worker k: (n_k, ell) synthesized grid
    labels_prev: list[np.ndarray] | None


def _solve_flops(n: int, nrhs: int = 1) -> float:
    return n**3 / 3.0 + nrhs * float(n) ** 2


def run_stage_distributed(pool: WorkerPool, stage: DistributedStage) -> StageResult:
    """One pass of local fits, cross-predictions and global synthesis.

    Every worker fits its local stage model, predicts per-action Q on every
    worker's rows, and the synthesizer averages the prediction grids with
    weights |D_j| / |D| (fixed worker order).  When previous-stage rewards
    are supplied, the per-worker label vectors r_{t-1} + max_a H are
    returned as well.
    """
    m = pool.m
    if len(stage.contexts) != m or len(stage.fit_contexts) != m:
        raise InputError("stage inputs must provide one entry per worker")
    ell = len(stage.action_values)
    sizes = [c.shape[0] for c in stage.contexts]
    all_contexts = np.vstack(stage.contexts)
    n_total = all_contexts.shape[0]
    fitter = krr_fitter(stage.params)

    def make_task(j: int):
        def task():
            rec = WorkerStageRecord(stage=stage.t, worker=j)
            n_fit = stage.fit_contexts[j].shape[0]
            t0 = time.perf_counter()
            model = fit_stage_q(
                stage.fit_contexts[j],
                stage.fit_y[j],
                stage.fit_actions[j],
                stage.action_values,
                stage.separate,
                fitter,
            )
            rec.fit_seconds = time.perf_counter() - t0
            if stage.separate:
                for a in stage.action_values:
                    n_a = int(np.count_nonzero(stage.fit_actions[j] == a))
                    rec.kernel_flops += stage.kappa * n_a**2
                    rec.solve_flops += _solve_flops(n_a)
                    rec.predict_flops += (stage.kappa + 1.0) * n_total * n_a
            else:
                rec.kernel_flops += stage.kappa * n_fit**2
                rec.solve_flops += _solve_flops(n_fit)
                rec.predict_flops += (stage.kappa + ell) * n_total * n_fit
            t0 = time.perf_counter()
            grid = predict_q_grid(model, all_contexts, stage.action_values)
            rec.predict_seconds = time.perf_counter() - t0
            rec.entries_sent = ell * n_total
            return model, grid, rec

        return task

    results = pool.run_local([make_task(j) for j in range(m)])
    models = [r[0] for r in results]
    pool.records.extend(r[2] for r in results)

    synth = pool.weights[0] * results[0][1]
    for j in range(1, m):
        synth = synth + pool.weights[j] * results[j][1]
    pool.records.append(
        WorkerStageRecord(
            stage=stage.t, worker=-1, synth_flops=float(m) * ell * n_total
        )
    )

    offsets = np.cumsum([0] + sizes)
    h_global = [synth[offsets[k]:offsets[k + 1]] for k in range(m)]
    labels_prev = None
    if stage.rewards_prev is not None:
        labels_prev = [
            stage.rewards_prev[k] + h_global[k].max(axis=1) for k in range(m)
        ]
    return StageResult(models=models, h_global=h_global, labels_prev=labels_prev)


def timing_report_csv(pool: WorkerPool) -> str:
    """Per-(stage, worker) instrumentation; worker -1 rows are synthesis."""
    lines = ["stage,worker,fit_seconds,predict_seconds,entries_sent,flops"]
    for r in pool.records:
        lines.append(
            f"{r.stage},{r.worker},{jsonio.format_float(r.fit_seconds)},"
            f"{jsonio.format_float(r.predict_seconds)},{r.entries_sent},"
            f"{jsonio.format_float(r.flops)}"
        )
    return "\n".join(lines) + "\n"


def measured_parallel_flops(pool: WorkerPool) -> float:
    """Critical-path flop count: per stage, the slowest worker's local work
    (fits, then cross-predictions) plus the global synthesis reduction."""
    stages: dict[int, dict[str, float]] = {}
    for r in pool.records:
        s = stages.setdefault(r.stage, {"fit": 0.0, "predict": 0.0, "synth": 0.0})
        if r.worker < 0:
            s["synth"] += r.synth_flops
        else:
            s["fit"] = max(s["fit"], r.solve_flops + r.kernel_flops)
            s["predict"] = max(s["predict"], r.predict_flops)
    return sum(s["fit"] + s["predict"] + s["synth"] for s in stages.values())
