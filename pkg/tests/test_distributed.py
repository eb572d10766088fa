import numpy as np
import pytest

from dkrr_dtr import rng, sim1, sim2
from dkrr_dtr.errors import DataError, InputError
from dkrr_dtr.features import FeatureCase
from dkrr_dtr.kernels import KernelParams
from dkrr_dtr.learners import (
    dkrr_dtr_train,
    dkrr_dtr_train_instrumented,
    greedy_values,
    krr_dtr_train,
    policy_q_grid,
    policy_to_json,
)
from dkrr_dtr.models import predict_q_grid
from dkrr_dtr.runtime import (
    DistributedStage,
    WorkerPool,
    partition_rows,
    run_stage_distributed,
)
from oracles import oracle_krr_alphas, oracle_krr_predict
from test_learners import TWO_ACTIONS, toy

PARAMS = KernelParams(sigma=0.8, lam=0.125)


def test_partition_is_disjoint_cover_with_balanced_sizes():
    gen = rng.partition_stream(1, 0)
    for n, m in [(10, 3), (17, 5), (8, 8), (100, 7)]:
        parts = partition_rows(n, m, gen)
        sizes = [len(p) for p in parts]
        assert max(sizes) - min(sizes) <= 1
        merged = np.concatenate(parts)
        assert len(merged) == n
        assert np.array_equal(np.sort(merged), np.arange(n))
        for p in parts:
            assert np.array_equal(p, np.sort(p))


def test_partition_bounds():
    with pytest.raises(InputError):
        partition_rows(5, 6, rng.partition_stream(1, 0))
    with pytest.raises(InputError):
        partition_rows(5, 0, rng.partition_stream(1, 0))
    single = partition_rows(7, 1, rng.partition_stream(1, 0))
    assert np.array_equal(single[0], np.arange(7))  # identity order for m=1


def _six_trajectories():
    return [
        toy((0.10, 0.55), (0.0, 1.0), (1.0, 0.2)),
        toy((0.35, 0.90), (1.0, 0.0), (0.0, 1.5)),
        toy((0.50, 0.15), (0.0, 0.0), (0.4, 0.8)),
        toy((0.65, 0.40), (1.0, 1.0), (0.7, 0.3)),
        toy((0.80, 0.70), (0.0, 1.0), (0.2, 2.0)),
        toy((0.95, 0.25), (1.0, 0.0), (1.1, 0.6)),
    ]


def test_algorithm_trace_six_trajectories_two_workers():
    """Step-by-step oracle of the distributed training flow on a hand
    dataset: local fits, cross-predictions, synthesized H vectors, and the
    next-stage label vectors, all to 1e-10."""
    trajs = _six_trajectories()
    parts = [np.array([0, 1, 2]), np.array([3, 4, 5])]
    pool = WorkerPool(partitions=parts, threads=1)
    sigma, lam = PARAMS.sigma, PARAMS.lam

    # Stage 2 inputs (labels are the stage-2 rewards).
    s2 = [t.states[1][0] for t in trajs]
    a2 = [t.actions[1] for t in trajs]
    r2 = [t.rewards[1] for t in trajs]
    r1 = [t.rewards[0] for t in trajs]
    ctxs = [np.array([[s2[i]] for i in p]) for p in parts]
    stage = DistributedStage(
        t=2, params=PARAMS, action_values=TWO_ACTIONS.values, separate=False,
        fit_contexts=ctxs,
        fit_y=[np.array([r2[i] for i in p]) for p in parts],
        fit_actions=[np.array([a2[i] for i in p]) for p in parts],
        contexts=ctxs, kappa=2.0,
        rewards_prev=[np.array([r1[i] for i in p]) for p in parts],
    )
    result = run_stage_distributed(pool, stage)

    # Oracle: local KRR fits per worker.
    local_alphas = []
    for p in parts:
        X = [[s2[i], a2[i]] for i in p]
        y = [r2[i] for i in p]
        local_alphas.append(oracle_krr_alphas(X, y, sigma, lam))
    # Oracle: per-action prediction vectors on every row, then synthesis
    # with weights |D_j| / |D| = 1/2.
    h_synth = np.zeros((6, 2))
    for k_row in range(6):
        for k_a, a in enumerate(TWO_ACTIONS.values):
            total = 0.0
            for j, p in enumerate(parts):
                X = [[s2[i], a2[i]] for i in p]
                total += 0.5 * oracle_krr_predict(
                    X, local_alphas[j], sigma, [s2[k_row], a]
                )
            h_synth[k_row, k_a] = total
    got = np.vstack(result.h_global)
    assert np.abs(got - h_synth).max() < 1e-10

    # Next labels: r1 + elementwise max over actions of the synthesized H.
    labels = np.concatenate(result.labels_prev)
    want = np.array(r1)[np.concatenate(parts)] + h_synth.max(axis=1)
    assert np.abs(labels - want).max() < 1e-10

    # The trained policy reproduces the same stage-1 fit end to end.
    policy = dkrr_dtr_train(
        trajs, "MJ", PARAMS, 2, rng.partition_stream(0, 0),
        sim="toy", T=2, action_sets=(TWO_ACTIONS,) * 2,
    )
    assert policy.T == 2 and len(policy.stages[0]) == 2


def test_h_synthesis_is_weighted_average_of_locals():
    trajs = _six_trajectories()
    parts = [np.array([0, 1, 2]), np.array([3, 4, 5])]
    pool = WorkerPool(partitions=parts, threads=1)
    ctxs = [np.array([[t.states[0][0]] for t in trajs])[p] for p in parts]
    stage = DistributedStage(
        t=1, params=PARAMS, action_values=TWO_ACTIONS.values, separate=False,
        fit_contexts=ctxs,
        fit_y=[np.array([t.rewards[0] for t in trajs])[p] for p in parts],
        fit_actions=[np.array([t.actions[0] for t in trajs])[p] for p in parts],
        contexts=ctxs, kappa=2.0,
    )
    result = run_stage_distributed(pool, stage)
    all_ctx = np.vstack(ctxs)
    grids = [predict_q_grid(m, all_ctx, TWO_ACTIONS.values) for m in result.models]
    expected = 0.5 * grids[0] + 0.5 * grids[1]
    assert np.array_equal(np.vstack(result.h_global), expected)  # exact


def test_m1_degenerates_to_local_prediction():
    trajs = _six_trajectories()
    pool = WorkerPool(partitions=[np.arange(6)], threads=1)
    ctx = np.array([[t.states[0][0]] for t in trajs])
    stage = DistributedStage(
        t=1, params=PARAMS, action_values=TWO_ACTIONS.values, separate=False,
        fit_contexts=[ctx],
        fit_y=[np.array([t.rewards[0] for t in trajs])],
        fit_actions=[np.array([t.actions[0] for t in trajs])],
        contexts=[ctx], kappa=2.0,
    )
    result = run_stage_distributed(pool, stage)
    local = predict_q_grid(result.models[0], ctx, TWO_ACTIONS.values)
    assert np.array_equal(result.h_global[0], local)


@pytest.mark.parametrize("simulator", ["sim1", "sim2"])
def test_dkrr_m1_equals_krr(simulator):
    mod = sim1 if simulator == "sim1" else sim2
    trajs = mod.generate(120, None, rng.train_streams(7, 0))
    params = KernelParams(sigma=1.0, lam=0.05)
    krr = krr_dtr_train(trajs, "MJ", params, sim=simulator)
    dkrr = dkrr_dtr_train(
        trajs, "MJ", params, 1, rng.partition_stream(7, 0), sim=simulator
    )
    gen = np.random.default_rng(5)
    hi = 5.0 if simulator == "sim1" else 4.0
    for t in range(1, mod.HORIZON + 1):
        ctx = gen.uniform(0, hi, size=(50, 2))
        gk = policy_q_grid(krr, t, ctx)
        gd = policy_q_grid(dkrr, t, ctx)
        assert np.abs(gk - gd).max() < 1e-8
        assert np.array_equal(np.argmax(gk, axis=1), np.argmax(gd, axis=1))
        assert np.array_equal(
            greedy_values(krr, t, ctx), greedy_values(dkrr, t, ctx)
        )


def test_dkrr_m_equals_n_boundary():
    trajs = sim1.generate(12, None, rng.train_streams(30, 0))
    policy = dkrr_dtr_train(
        trajs, "MJ", PARAMS, 12, rng.partition_stream(30, 0), sim="sim1"
    )
    assert len(policy.stages[0]) == 12
    assert sum(w for w, _ in policy.stages[0]) == pytest.approx(1.0, abs=1e-12)
    ctx = np.array([[0.7, 1.0]])
    assert np.isfinite(policy_q_grid(policy, 1, ctx)).all()


def test_dkrr_deterministic_across_thread_counts():
    trajs = sim2.generate(90, None, rng.train_streams(9, 0))
    params = KernelParams(sigma=1.0, lam=0.02)
    p1 = dkrr_dtr_train(trajs, "MJ", params, 3, rng.partition_stream(9, 0),
                        sim="sim2", threads=1)
    p3 = dkrr_dtr_train(trajs, "MJ", params, 3, rng.partition_stream(9, 0),
                        sim="sim2", threads=3)
    assert policy_to_json(p1) == policy_to_json(p3)


def test_dkrr_missing_action_on_worker_fails_clearly():
    # With 2 workers and an action taken by a single trajectory, one worker
    # must end up without it under the separate-models case.
    trajs = [
        toy((0.1,), (1.0,), (0.5,)),
        toy((0.2,), (1.0,), (0.1,)),
        toy((0.3,), (1.0,), (0.7,)),
        toy((0.4,), (0.0,), (0.2,)),
    ]
    with pytest.raises(DataError):
        dkrr_dtr_train(
            trajs, "SS", PARAMS, 2, rng.partition_stream(3, 0),
            sim="sim1", T=1, action_sets=(sim1.ACTION_SET,),
        )


def test_dkrr_weights_are_subset_fractions():
    trajs = sim1.generate(10, None, rng.train_streams(14, 0))
    policy, pool = dkrr_dtr_train_instrumented(
        trajs, "MJ", PARAMS, 3, rng.partition_stream(14, 0), sim="sim1"
    )
    assert pool.weights == [4 / 10, 3 / 10, 3 / 10]
    for stage in policy.stages:
        assert [w for w, _ in stage] == pool.weights
