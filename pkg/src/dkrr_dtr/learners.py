"""Backward-induction Q-learning over trajectory batches.

Training solves T regularized least squares problems backwards: the stage-T
labels are the stage-T rewards, and each earlier stage's labels add the
maximal predicted Q of the already-fitted next stage,

    y_{i,t} = r_{i,t} + max_a Q_{t+1}(history_i, a),

with the continuation term 0 for trajectories that terminated at stage t.
Three trainers share this loop: batch KRR, the distributed divide-and-conquer
variant (local KRR fits whose predictions are averaged with subset-size
weights), and the linear least squares baseline.  The returned policy is the
greedy rule over the (synthesized) stage Q-functions; ties resolve to the
first action in the declared action-set order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sim1, sim2
from .errors import DataError, InputError
from .features import FeatureCase, PackedStages, check_case, context_matrix, pack
from .jsonio import dumps, loads
from .kernels import KernelModel, KernelParams
from .models import (
    JointQ,
    LinearModel,
    PerActionQ,
    StageQ,
    fit_stage_q,
    krr_fitter,
    linear_fit,
    predict_q_grid,
)
from .runtime import DistributedStage, WorkerPool, partition_rows, run_stage_distributed
from .trajectories import ActionSet

POLICY_FORMAT = "dkrr-dtr-policy"
POLICY_VERSION = 1


@dataclass
class DtrPolicy:
    """Per-stage greedy decision rule backed by one or many stage models.

    ``stages[t-1]`` is a tuple of (weight, StageQ) pairs; batch learners
    carry a single pair with weight 1.0, the distributed learner one pair
    per worker with weights |D_j| / |D| summing to 1.
    """

    sim: str
    case: FeatureCase
    action_sets: tuple[ActionSet, ...]
    stages: tuple[tuple[tuple[float, StageQ], ...], ...]

    @property
    def T(self) -> int:
        return len(self.stages)


def stage_labels(rewards_t, next_stage_max_q) -> np.ndarray:
    """Training labels r_t + max-Q of stage t+1 (all zeros at t = T)."""
    r = np.asarray(rewards_t, dtype=np.float64)
    q = np.asarray(next_stage_max_q, dtype=np.float64)
    if r.shape != q.shape:
        raise InputError(f"length mismatch: {r.shape} vs {q.shape}")
    return r + q


def ensemble_q_grid(entries, contexts, action_values) -> np.ndarray:
    """Weighted per-action predictions sum_j w_j * Q_j, in worker order."""
    entries = tuple(entries)
    if not entries:
        raise InputError("empty model ensemble")
    w0, q0 = entries[0]
    acc = w0 * predict_q_grid(q0, contexts, action_values)
    for w, q in entries[1:]:
        acc = acc + w * predict_q_grid(q, contexts, action_values)
    return acc


def max_q_over_actions(q_model, contexts, action_set: ActionSet) -> np.ndarray:
    """Row-wise max over the action set of the (synthesized) predictions.

    ``q_model`` is a single StageQ or an iterable of (weight, StageQ).
    """
    if isinstance(q_model, (JointQ, PerActionQ)):
        entries = ((1.0, q_model),)
    else:
        entries = tuple(q_model)
    return ensemble_q_grid(entries, contexts, action_set.values).max(axis=1)


def policy_q_grid(policy: DtrPolicy, t: int, contexts) -> np.ndarray:
    """Synthesized stage-t Q values for every context row and action."""
    if not (1 <= t <= policy.T):
        raise InputError(f"stage {t} out of range 1..{policy.T}")
    values = policy.action_sets[t - 1].values
    return ensemble_q_grid(policy.stages[t - 1], contexts, values)


def greedy_values(policy: DtrPolicy, t: int, contexts) -> np.ndarray:
    """Encoded action values chosen greedily for a batch of contexts."""
    grid = policy_q_grid(policy, t, contexts)
    values = np.asarray(policy.action_sets[t - 1].values)
    return values[np.argmax(grid, axis=1)]


def greedy_action(policy: DtrPolicy, t: int, context) -> str:
    """Greedy action id for one context (first action wins exact ties)."""
    grid = policy_q_grid(policy, t, np.atleast_2d(np.asarray(context, dtype=float)))
    return policy.action_sets[t - 1].ids[int(np.argmax(grid[0]))]


@dataclass
class GreedyPolicy:
    """Adapter giving a trained DtrPolicy the simulator policy interface."""

    policy: DtrPolicy

    def choose(self, t, packed: PackedStages, rows, gens):
        ctx = context_matrix(packed, t, self.policy.case, rows)
        return greedy_values(self.policy, t, ctx)


def _resolve(trajectories, sim, case, T, action_sets):
    case = FeatureCase(case)
    check_case(sim, case)
    if len(trajectories) == 0:
        raise InputError("training needs at least one trajectory")
    if action_sets is None or T is None:
        if sim == "sim1":
            action_sets = action_sets or sim1.action_sets()
            T = T or sim1.HORIZON
        elif sim == "sim2":
            action_sets = action_sets or sim2.action_sets()
            T = T or sim2.HORIZON
        else:
            raise InputError("custom sims must pass T and action_sets explicitly")
    if len(action_sets) != T:
        raise InputError("need one action set per stage")
    packed = pack(trajectories, sim, T)
    return packed, case, T, tuple(action_sets)


def _batch_backward(packed, case, action_sets, fit_fn):
    n, T = packed.n, packed.T
    maxq_next = np.zeros(n)
    stage_models: list[StageQ] = [None] * T
    for t in range(T, 0, -1):
        rows = packed.rows_at(t)
        if rows.size == 0:
            raise DataError(f"no trajectories alive at stage {t}")
        values = action_sets[t - 1].values
        ctx = context_matrix(packed, t, case, rows)
        y = stage_labels(packed.rewards[rows, t - 1], maxq_next[rows])
        q = fit_stage_q(ctx, y, packed.actions[rows, t - 1], values,
                        case.separate, fit_fn)
        stage_models[t - 1] = q
        if t > 1:
            grid = predict_q_grid(q, ctx, values)
            maxq_next = np.zeros(n)
            maxq_next[rows] = grid.max(axis=1)
    return stage_models


def krr_dtr_train(
    trajectories, case, params: KernelParams, *,
    sim: str, T: int | None = None, action_sets=None,
) -> DtrPolicy:
    """Batch kernel Q-learning: one KRR solve per stage (per action when
    the case trains separate models)."""
    packed, case, T, action_sets = _resolve(trajectories, sim, case, T, action_sets)
    models = _batch_backward(packed, case, action_sets, krr_fitter(params))
    return DtrPolicy(
        sim=sim, case=case, action_sets=action_sets,
        stages=tuple(((1.0, q),) for q in models),
    )


def ls_dtr_train(
    trajectories, case, *, sim: str, T: int | None = None, action_sets=None,
) -> DtrPolicy:
    """Linear least squares baseline; same backward loop, no tuning knobs."""
    packed, case, T, action_sets = _resolve(trajectories, sim, case, T, action_sets)
    models = _batch_backward(packed, case, action_sets, linear_fit)
    return DtrPolicy(
        sim=sim, case=case, action_sets=action_sets,
        stages=tuple(((1.0, q),) for q in models),
    )


def dkrr_dtr_train_instrumented(
    trajectories, case, params: KernelParams, m: int, rng: np.random.Generator,
    *, sim: str, T: int | None = None, action_sets=None, threads: int = 1,
) -> tuple[DtrPolicy, WorkerPool]:
    """Divide-and-conquer kernel Q-learning; also returns the worker pool
    with its timing/flop/communication records.

    The data is split uniformly at random into m near-equal subsets.  Per
    stage, every worker fits a local KRR, cross-predicts per-action Q on all
    workers' rows, the predictions are averaged with weights |D_j| / |D|,
    and each worker forms its next labels from the synthesized max.
    """
    packed, case, T, action_sets = _resolve(trajectories, sim, case, T, action_sets)
    n = packed.n
    partitions = partition_rows(n, m, rng)
    pool = WorkerPool(partitions=partitions, threads=threads)

    maxq_next = np.zeros(n)
    stages_out: list[tuple[tuple[float, StageQ], ...]] = [None] * T
    for t in range(T, 0, -1):
        values = action_sets[t - 1].values
        rows_by_worker = [p[packed.alive[p, t - 1]] for p in partitions]
        if all(r.size == 0 for r in rows_by_worker):
            raise DataError(f"no trajectories alive at stage {t}")
        for j, r in enumerate(rows_by_worker):
            if r.size == 0:
                raise DataError(f"worker {j} has no trajectories alive at stage {t}")
        ctxs = [context_matrix(packed, t, case, r) for r in rows_by_worker]
        ys = [
            stage_labels(packed.rewards[r, t - 1], maxq_next[r])
            for r in rows_by_worker
        ]
        acts = [packed.actions[r, t - 1] for r in rows_by_worker]
        kappa = ctxs[0].shape[1] + (0 if case.separate else 1)
        result = run_stage_distributed(
            pool,
            DistributedStage(
                t=t, params=params, action_values=values, separate=case.separate,
                fit_contexts=ctxs, fit_y=ys, fit_actions=acts, contexts=ctxs,
                kappa=float(kappa),
            ),
        )
        stages_out[t - 1] = tuple(
            (pool.weights[j], result.models[j]) for j in range(pool.m)
        )
        if t > 1:
            maxq_next = np.zeros(n)
            for j, r in enumerate(rows_by_worker):
                maxq_next[r] = result.h_global[j].max(axis=1)
    policy = DtrPolicy(sim=sim, case=case, action_sets=action_sets,
                       stages=tuple(stages_out))
    return policy, pool


def dkrr_dtr_train(
    trajectories, case, params: KernelParams, m: int, rng: np.random.Generator,
    *, sim: str, T: int | None = None, action_sets=None, threads: int = 1,
) -> DtrPolicy:
    policy, _ = dkrr_dtr_train_instrumented(
        trajectories, case, params, m, rng,
        sim=sim, T=T, action_sets=action_sets, threads=threads,
    )
    return policy


# ---------------------------------------------------------------------------
# Policy serialization (versioned JSON; floats carry 17 significant digits).

def _model_to_json(model) -> dict:
    if isinstance(model, KernelModel):
        return {
            "type": "krr",
            "sigma": model.params.sigma,
            "lam": model.params.lam,
            "support": model.support.tolist(),
            "alphas": model.alphas.tolist(),
        }
    if isinstance(model, LinearModel):
        return {
            "type": "linear",
            "coef": model.coef.tolist(),
            "intercept": model.intercept,
        }
    raise InputError(f"unknown stage model {type(model).__name__}")


def _model_from_json(obj) -> KernelModel | LinearModel:
    if obj["type"] == "krr":
        return KernelModel(
            support=np.asarray(obj["support"], dtype=np.float64),
            alphas=np.asarray(obj["alphas"], dtype=np.float64),
            params=KernelParams(sigma=obj["sigma"], lam=obj["lam"]),
        )
    if obj["type"] == "linear":
        return LinearModel(
            coef=np.asarray(obj["coef"], dtype=np.float64),
            intercept=float(obj["intercept"]),
        )
    raise InputError(f"unknown model type {obj['type']!r}")


def _stage_q_to_json(q: StageQ) -> dict:
    if isinstance(q, JointQ):
        return {"kind": "joint", "model": _model_to_json(q.model)}
    return {
        "kind": "per_action",
        "models": [
            {"action": a, "model": _model_to_json(m)} for a, m in q.models.items()
        ],
    }


def _stage_q_from_json(obj) -> StageQ:
    if obj["kind"] == "joint":
        return JointQ(_model_from_json(obj["model"]))
    return PerActionQ(
        {float(e["action"]): _model_from_json(e["model"]) for e in obj["models"]}
    )


def policy_to_json(policy: DtrPolicy) -> str:
    doc = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "sim": policy.sim,
        "case": policy.case.value,
        "T": policy.T,
        "action_sets": [
            {"ids": list(s.ids), "values": list(s.values)}
            for s in policy.action_sets
        ],
        "stages": [
            [{"weight": w, "q": _stage_q_to_json(q)} for w, q in stage]
            for stage in policy.stages
        ],
    }
    return dumps(doc)


def policy_from_json(text: str) -> DtrPolicy:
    doc = loads(text)
    if doc.get("format") != POLICY_FORMAT:
        raise InputError("not a policy file")
    if doc.get("version") != POLICY_VERSION:
        raise InputError(f"unsupported policy version {doc.get('version')!r}")
    return DtrPolicy(
        sim=doc["sim"],
        case=FeatureCase(doc["case"]),
        action_sets=tuple(
            ActionSet(ids=tuple(s["ids"]), values=tuple(float(v) for v in s["values"]))
            for s in doc["action_sets"]
        ),
        stages=tuple(
            tuple((float(e["weight"]), _stage_q_from_json(e["q"])) for e in stage)
            for stage in doc["stages"]
        ),
    )


def save_policy(path, policy: DtrPolicy) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(policy_to_json(policy))


def load_policy(path) -> DtrPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        return policy_from_json(fh.read())
