"""Fixed six-stage dose-level trial simulator (large action space).

Patients are treated monthly for 6 months with a single drug whose dose
``a`` lies in (0, 1].  Toxicity W and tumor size M follow the difference
equations

    W_{i+1} = W_i + 0.1 * max(M_i, M1) + 1.2 * (a_i - 0.5)
    M_{i+1} = max(M_i + (0.15 * max(W_i, W1) - 1.2 * (a_i - 0.5)) * [M_i > 0], 0)

with W1, M1 ~ Uniform(0, 2) (the patient's initial values also serve as the
reference levels in the max terms).  Tumor size 0 is absorbing: the patient
is cured and the tumor never recurs, but the trial continues.  After each
transition the patient dies with probability

    p = 1 - exp(-exp(W_{i+1} + M_{i+1} - 4.5)),

which ends the trajectory with reward -6.  Otherwise the stage reward adds a
toxicity term (+0.5 if W dropped by >= 0.5, -0.5 if it rose by >= 0.5, else
0) and a tumor term (+1.5 on cure, +0.5 if M dropped by >= 0.5 while still
positive, -0.5 if it rose by >= 0.5, else 0).

Doses are discretized with step 0.01: stage 1 offers {0.51, ..., 1.00} and
stages 2..6 offer {0.01, ..., 1.00}.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError
from .features import PackedStages
from .rng import StreamFamily
from .trajectories import ActionSet, Termination, Trajectory

HORIZON = 6
DEATH_PENALTY = -6.0

STAGE1_ACTIONS = ActionSet(
    ids=tuple(f"{i / 100:.2f}" for i in range(51, 101)),
    values=tuple(i / 100 for i in range(51, 101)),
)
LATER_ACTIONS = ActionSet(
    ids=tuple(f"{i / 100:.2f}" for i in range(1, 101)),
    values=tuple(i / 100 for i in range(1, 101)),
)

SIM = "sim2"
STATE_DIM = 2  # per-stage observation: (toxicity, tumor size)


def action_sets() -> tuple[ActionSet, ...]:
    return (STAGE1_ACTIONS,) + (LATER_ACTIONS,) * (HORIZON - 1)


def transition(w: float, m: float, dose: float, m0: float, w0: float):
    """(W_{i+1}, M_{i+1}); tumor size is clamped at 0 and 0 is absorbing."""
    w_next = w + 0.1 * max(m, m0) + 1.2 * (dose - 0.5)
    if m > 0.0:
        m_next = max(m + (0.15 * max(w, w0) - 1.2 * (dose - 0.5)), 0.0)
    else:
        m_next = 0.0
    return w_next, m_next


def death_prob(w: float, m: float) -> float:
    """Conditional death probability 1 - exp(-exp(W + M - 4.5))."""
    return 1.0 - math.exp(-math.exp(w + m - 4.5))


def stage_reward(
    died: bool, w: float, w_next: float, m: float, m_next: float
) -> float:
    """Death penalty, else the toxicity-change plus tumor-change terms."""
    if died:
        return DEATH_PENALTY
    dw = w_next - w
    if dw <= -0.5:
        r = 0.5
    elif dw >= 0.5:
        r = -0.5
    else:
        r = 0.0
    if m_next == 0.0:
        r += 1.5
    elif m_next - m <= -0.5:
        r += 0.5
    elif m_next - m >= 0.5:
        r += -0.5
    return r


def generate(
    n: int,
    policy,
    streams: StreamFamily,
    init_state: tuple[float, float] | None = None,
) -> list[Trajectory]:
    """Generate ``n`` trajectories; ``policy=None`` draws doses uniformly.

    Patient ``i`` draws only from ``streams.child(i)`` in the fixed order
    (W1, M1, then per stage: [dose if random] then the survival uniform).
    ``init_state`` forces (W1, M1) for every patient instead of the
    Uniform(0, 2) draws; the two uniforms are still consumed so the
    downstream draw sequence is unchanged.  Intended for diagnostics.
    """
    if n < 0:
        raise InputError("n must be nonnegative")
    gens = [streams.child(i) for i in range(n)]

    states = np.zeros((n, HORIZON, STATE_DIM))
    actions = np.zeros((n, HORIZON))
    rewards = np.zeros((n, HORIZON))
    alive = np.zeros((n, HORIZON), dtype=bool)
    packed = PackedStages(
        sim=SIM, T=HORIZON, states=states, actions=actions,
        rewards=rewards, alive=alive,
    )
    sets = action_sets()

    cur_w = np.empty(n)
    cur_m = np.empty(n)
    for i in range(n):
        w1 = gens[i].uniform(0.0, 2.0)
        m1 = gens[i].uniform(0.0, 2.0)
        if init_state is not None:
            w1, m1 = init_state
        cur_w[i] = w1
        cur_m[i] = m1
    w_ref = cur_w.copy()
    m_ref = cur_m.copy()

    active = np.arange(n)
    stage_counts = np.zeros(n, dtype=int)
    termination: list[Termination | None] = [None] * n
    terminal = np.zeros((n, STATE_DIM))

    for stage in range(1, HORIZON + 1):
        if active.size == 0:
            break
        states[active, stage - 1, 0] = cur_w[active]
        states[active, stage - 1, 1] = cur_m[active]
        alive[active, stage - 1] = True
        acts = sets[stage - 1]
        if policy is None:
            chosen = np.array(
                [acts.values[gens[i].integers(len(acts))] for i in active]
            )
        else:
            chosen = np.asarray(policy.choose(stage, packed, active, gens))
        actions[active, stage - 1] = chosen

        still = []
        for k, i in enumerate(active):
            w_next, m_next = transition(
                cur_w[i], cur_m[i], chosen[k], m_ref[i], w_ref[i]
            )
            stage_counts[i] = stage
            died = gens[i].uniform() < death_prob(w_next, m_next)
            rewards[i, stage - 1] = stage_reward(
                died, cur_w[i], w_next, cur_m[i], m_next
            )
            terminal[i] = (w_next, m_next)
            if died:
                termination[i] = Termination.DEATH
                continue
            cur_w[i] = w_next
            cur_m[i] = m_next
            if stage == HORIZON:
                termination[i] = (
                    Termination.CURED if m_next == 0.0 else Termination.STAGE_LIMIT
                )
            else:
                still.append(i)
        active = np.array(still, dtype=int)

    out = []
    for i in range(n):
        c = stage_counts[i]
        out.append(
            Trajectory(
                states=tuple(tuple(states[i, t]) for t in range(c)),
                actions=tuple(actions[i, :c]),
                rewards=tuple(rewards[i, :c]),
                terminal_state=tuple(terminal[i]),
                termination=termination[i],
                real_stages=int(c),
            )
        )
    return out
