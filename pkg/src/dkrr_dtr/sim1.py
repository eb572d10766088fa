"""Flexible-stage cancer-trial simulator (small action space).

Patients enroll with tumor size 1 at time 0 and are observed for 5 years
over at most 3 treatment stages.  At each stage an aggressive (A) or
conservative (B) treatment is applied with immediate effects

    A:  W+ = W - 0.5,   M+ = 0.1 * M / W
    B:  W+ = W - 0.25,  M+ = 0.2 * M / W

and the patient dies if W+ < 0.25.  Otherwise the between-stage dynamics are

    W(t) = W+ + (1 - W+) * (1 - 2^(-(t - t_i)/2))
    M(t) = M+ + 4 * M+ * (t - t_i) / 3,

a waiting time tau_i is drawn from an exponential with mean
0.15 * (W+ + 2) / M+, and the stage ends at

    t_{i+1} = min(t_i + tau_i, t_hat_i, 5)

where t_hat_i = t_i + 0.75 * (1 - M+) / M+ is the time at which the tumor
regrows to size 1.  The stage reward is the time survived, r_i = t_{i+1} -
t_i (0 at a death stage, where t_{i+1} = t_i).

Episodes shorter than 3 stages are padded to exactly 3 stored stages:
genuinely missing wellness/reward slots are filled with zeros and missing
actions are drawn uniformly, so every trajectory has the same shape.  The
wellness recorded at the end of the last lived stage keeps its natural slot.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError
from .features import PackedStages
from .rng import StreamFamily
from .trajectories import ActionSet, Termination, Trajectory

HORIZON = 3
WINDOW_YEARS = 5.0
DEATH_WELLNESS = 0.25

ACTION_A = 1.0
ACTION_B = 0.0
ACTION_SET = ActionSet(ids=("A", "B"), values=(ACTION_A, ACTION_B))

SIM = "sim1"
STATE_DIM = 1  # per-stage observation: wellness


def action_sets() -> tuple[ActionSet, ...]:
    return (ACTION_SET,) * HORIZON


def immediate_effects(wellness: float, tumor: float, action: float):
    """Post-treatment (W+, M+); the caller checks the death branch W+ < 0.25."""
    if action == ACTION_A:
        return wellness - 0.5, 0.1 * tumor / wellness
    if action == ACTION_B:
        return wellness - 0.25, 0.2 * tumor / wellness
    raise InputError(f"unknown action encoding {action!r}")


def dynamics(w_plus: float, m_plus: float, t_i: float, t: float):
    """(W(t), M(t)) for t >= t_i under the between-stage dynamics."""
    dt = t - t_i
    w = w_plus + (1.0 - w_plus) * (1.0 - 2.0 ** (-dt / 2.0))
    m = m_plus + 4.0 * m_plus * dt / 3.0
    return w, m


def critical_time(t_i: float, m_plus: float) -> float:
    """Time at which M(t) returns to 1, i.e. the latest end of this stage."""
    return t_i + 0.75 * (1.0 - m_plus) / m_plus


def generate(n: int, policy, streams: StreamFamily) -> list[Trajectory]:
    """Generate ``n`` trajectories; ``policy=None`` draws actions uniformly.

    A policy object must expose ``choose(t, packed, rows, gens) -> values``
    for 1-based stage ``t`` and is consulted only for lived stages.  Patient
    ``i`` draws only from ``streams.child(i)``, in the fixed order (w1, then
    per stage: [action if random] then tau, then padding actions).
    """
    if n < 0:
        raise InputError("n must be nonnegative")
    gens = [streams.child(i) for i in range(n)]

    wellness = np.zeros((n, HORIZON + 1))
    actions = np.zeros((n, HORIZON))
    rewards = np.zeros((n, HORIZON))
    packed = PackedStages(
        sim=SIM,
        T=HORIZON,
        states=wellness[:, :HORIZON, None],
        actions=actions,
        rewards=rewards,
        alive=np.ones((n, HORIZON), dtype=bool),
    )

    cur_w = np.empty(n)
    for i in range(n):
        cur_w[i] = gens[i].uniform(0.5, 1.0)
    wellness[:, 0] = cur_w
    cur_m = np.ones(n)
    cur_t = np.zeros(n)

    active = np.arange(n)
    real_stages = np.zeros(n, dtype=int)
    termination = [None] * n
    times: list[list[float]] = [[0.0] for _ in range(n)]
    taus: list[list[float]] = [[] for _ in range(n)]

    for stage in range(1, HORIZON + 1):
        if active.size == 0:
            break
        if policy is None:
            chosen = np.array(
                [ACTION_SET.values[gens[i].integers(2)] for i in active]
            )
        else:
            chosen = np.asarray(policy.choose(stage, packed, active, gens))
        actions[active, stage - 1] = chosen

        still = []
        for k, i in enumerate(active):
            w_plus, m_plus = immediate_effects(cur_w[i], cur_m[i], chosen[k])
            real_stages[i] = stage
            if w_plus < DEATH_WELLNESS:
                termination[i] = Termination.DEATH
                times[i].append(cur_t[i])
                taus[i].append(math.nan)
                continue  # reward stays 0; wellness slot stays 0
            tau = gens[i].exponential(0.15 * (w_plus + 2.0) / m_plus)
            t_next = min(cur_t[i] + tau, critical_time(cur_t[i], m_plus), WINDOW_YEARS)
            rewards[i, stage - 1] = t_next - cur_t[i]
            w_next, m_next = dynamics(w_plus, m_plus, cur_t[i], t_next)
            wellness[i, stage] = w_next
            times[i].append(t_next)
            taus[i].append(tau)
            if t_next == WINDOW_YEARS:
                termination[i] = Termination.TIME_LIMIT
            elif stage == HORIZON:
                termination[i] = Termination.STAGE_LIMIT
            else:
                cur_w[i] = w_next
                cur_m[i] = m_next
                cur_t[i] = t_next
                still.append(i)
        active = np.array(still, dtype=int)

    # Pad missing actions with fresh uniform draws from each patient's stream.
    for i in range(n):
        for stage in range(real_stages[i], HORIZON):
            actions[i, stage] = ACTION_SET.values[gens[i].integers(2)]

    out = []
    for i in range(n):
        out.append(
            Trajectory(
                states=tuple((wellness[i, t],) for t in range(HORIZON)),
                actions=tuple(actions[i]),
                rewards=tuple(rewards[i]),
                terminal_state=(wellness[i, HORIZON],),
                termination=termination[i],
                real_stages=int(real_stages[i]),
                times=tuple(times[i]),
                taus=tuple(taus[i]),
            )
        )
    return out
