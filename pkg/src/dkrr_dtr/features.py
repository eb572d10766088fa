"""Per-stage feature construction for the four learner input cases.

Cases (``FeatureCase``):

* ``SS`` single feature + separate models: x_t = (w_t), one model per action.
* ``MS`` multiple features + separate: x_t = (w_t, r_{t-1}) with r_0 = 0.
* ``MJ`` multiple features + joint: x_t = (state_t, a_t) with the action as
  one input coordinate of a single model.
* ``NJ`` non-Markovian + joint: x_t = (state_1, a_1, ..., state_t, a_t),
  the full history up to stage t.

The flexible-stage trial exposes wellness as its raw observation, and its
"multiple feature" state is (w_t, r_{t-1}); the dose trial's state is
(toxicity, tumor size) and only supports the joint cases.  Joint feature
vectors always carry the candidate action as the LAST coordinate, which the
kernel layer exploits to score all actions of a stage in one pass.

``PackedStages`` is the array layout shared by training, trajectory
generation and policy rollouts: row i is trajectory i, ``alive[i, t-1]``
says whether it has a stage-t record (the flexible-stage trial is padded, so
all its rows are active at every stage).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .trajectories import Trajectory


class FeatureCase(enum.Enum):
    SS = "SS"
    MS = "MS"
    MJ = "MJ"
    NJ = "NJ"

    @property
    def separate(self) -> bool:
        """True when the case trains one model per action per stage."""
        return self in (FeatureCase.SS, FeatureCase.MS)


def supported_cases(sim: str) -> tuple[FeatureCase, ...]:
    if sim == "sim1":
        return (FeatureCase.SS, FeatureCase.MS, FeatureCase.MJ, FeatureCase.NJ)
    return (FeatureCase.MJ, FeatureCase.NJ)


def check_case(sim: str, case: FeatureCase) -> None:
    if case not in supported_cases(sim):
        raise InputError(f"feature case {case.value} is not supported for {sim}")


@dataclass
class PackedStages:
    """Column-packed trajectories; see module docstring for conventions."""

    sim: str
    T: int
    states: np.ndarray  # (n, T, state_dim), zero-padded
    actions: np.ndarray  # (n, T), encoded values, zero-padded
    rewards: np.ndarray  # (n, T), zero-padded
    alive: np.ndarray  # (n, T) bool, row has a stage-t record

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]

    def rows_at(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.alive[:, t - 1])


def pack(trajectories, sim: str, T: int | None = None) -> PackedStages:
    if len(trajectories) == 0:
        raise InputError("cannot pack an empty trajectory list")
    if T is None:
        T = max(tr.stage_count for tr in trajectories)
    ds = len(trajectories[0].states[0])
    n = len(trajectories)
    states = np.zeros((n, T, ds))
    actions = np.zeros((n, T))
    rewards = np.zeros((n, T))
    alive = np.zeros((n, T), dtype=bool)
    for i, tr in enumerate(trajectories):
        c = tr.stage_count
        if c > T:
            raise InputError(f"trajectory {i} has {c} stages, horizon is {T}")
        states[i, :c] = tr.states
        actions[i, :c] = tr.actions
        rewards[i, :c] = tr.rewards
        alive[i, :c] = True
    return PackedStages(sim=sim, T=T, states=states, actions=actions,
                        rewards=rewards, alive=alive)


def _state_block(packed: PackedStages, t: int, case: FeatureCase,
                 rows: np.ndarray) -> np.ndarray:
    """Per-stage state features s_t for the given rows."""
    if packed.sim == "sim1":
        w = packed.states[rows, t - 1, :1]
        if case is FeatureCase.SS:
            return w
        r_prev = (
            packed.rewards[rows, t - 2, None] if t > 1
            else np.zeros((len(rows), 1))
        )
        return np.hstack([w, r_prev])
    return packed.states[rows, t - 1, :]


def context_matrix(packed: PackedStages, t: int, case: FeatureCase,
                   rows: np.ndarray | None = None) -> np.ndarray:
    """Stage-t feature rows without the stage-t action coordinate.

    For separate cases this is the whole model input; for joint cases the
    candidate (or taken) action is appended as one trailing coordinate.  The
    NJ context interleaves past state blocks with the actions actually taken.
    """
    check_case(packed.sim, case)
    if not (1 <= t <= packed.T):
        raise InputError(f"stage {t} out of range 1..{packed.T}")
    if rows is None:
        rows = packed.rows_at(t)
    if case is FeatureCase.NJ:
        parts = []
        for s in range(1, t):
            parts.append(_state_block(packed, s, case, rows))
            parts.append(packed.actions[rows, s - 1, None])
        parts.append(_state_block(packed, t, case, rows))
        return np.hstack(parts)
    return _state_block(packed, t, case, rows)


def with_action(context: np.ndarray, action_value: float) -> np.ndarray:
    """Append one candidate-action coordinate to every context row."""
    col = np.full((context.shape[0], 1), float(action_value))
    return np.hstack([context, col])


def training_design(packed: PackedStages, t: int, case: FeatureCase,
                    rows: np.ndarray) -> np.ndarray:
    """Model inputs for fitting: contexts plus the taken action when joint."""
    ctx = context_matrix(packed, t, case, rows)
    if case.separate:
        return ctx
    return np.hstack([ctx, packed.actions[rows, t - 1, None]])


def feature_dim(sim: str, case: FeatureCase, t: int, state_dim: int) -> int:
    check_case(sim, case)
    block = 1 if (sim == "sim1" and case is FeatureCase.SS) else (
        2 if sim == "sim1" else state_dim
    )
    if case is FeatureCase.NJ:
        return t * (block + 1)
    return block + (0 if case.separate else 1)


@dataclass
class StageDataset:
    """Design matrix and labels of one stage under one feature case."""

    t: int
    X: np.ndarray
    y: np.ndarray | None
    row_ids: np.ndarray


def build_features(trajectories, t: int, case, sim: str) -> StageDataset:
    """Inputs-only StageDataset over the rows active at stage t.

    The flexible-stage trial contributes every (padded) row at every stage;
    the dose trial contributes rows still alive at stage t.
    """
    case = FeatureCase(case)
    packed = pack(trajectories, sim)
    rows = packed.rows_at(t)
    X = training_design(packed, t, case, rows)
    return StageDataset(t=t, X=X, y=None, row_ids=rows)
