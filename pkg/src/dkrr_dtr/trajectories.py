"""Trajectory records, action sets, and the on-disk trajectory format.

A trajectory is one patient's episode: per-stage (state, action, reward)
triples plus the terminal state and the cause of termination.  Actions are
stored by their numeric feature encoding (flexible-stage trial: A -> 1.0,
B -> 0.0; dose trial: the dose value itself).

Datasets persist as newline-delimited JSON, one trajectory per line, every
real rendered with 17 significant digits so values round-trip exactly::

    {"id": 0, "sim": "sim1", "states": [[w1], [w2], [w3]],
     "actions": [a1, a2, a3], "rewards": [r1, r2, r3],
     "terminal_state": [w4], "termination": "time_limit",
     "real_stages": 2, "times": [t1, t2, t3], "taus": [tau1, tau2]}

``times``/``taus`` are present only for the flexible-stage trial; ``taus``
holds NaN at a death stage (no waiting time was drawn there).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import jsonio
from .errors import InputError


class Termination(enum.Enum):
    DEATH = "death"
    TIME_LIMIT = "time_limit"
    STAGE_LIMIT = "stage_limit"
    CURED = "cured"


@dataclass(frozen=True)
class ActionSet:
    """Ordered finite action set; ``values`` are the feature encodings.

    Order matters: greedy ties resolve to the first action in this order.
    """

    ids: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.ids) == 0:
            raise InputError("action set must be nonempty")
        if len(self.ids) != len(self.values):
            raise InputError("action ids and values must have equal length")
        if len(set(self.values)) != len(self.values):
            raise InputError("action encodings must be unique")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Trajectory:
    """One patient's episode.

    ``stage_count == len(states)``: for the flexible-stage trial this is
    always 3 after padding and ``real_stages`` counts the stages actually
    lived; for the dose trial the two coincide (death truncates the record).
    """

    states: tuple[tuple[float, ...], ...]
    actions: tuple[float, ...]
    rewards: tuple[float, ...]
    terminal_state: tuple[float, ...]
    termination: Termination
    real_stages: int
    times: tuple[float, ...] | None = None
    taus: tuple[float, ...] | None = None

    def __post_init__(self):
        n = len(self.states)
        if n < 1:
            raise InputError("trajectory needs at least one stage")
        if len(self.actions) != n or len(self.rewards) != n:
            raise InputError("states, actions and rewards must have equal length")
        if not (1 <= self.real_stages <= n):
            raise InputError("real_stages out of range")

    @property
    def stage_count(self) -> int:
        return len(self.states)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


def _traj_record(traj: Trajectory, traj_id: int, sim: str) -> dict:
    rec = {
        "id": traj_id,
        "sim": sim,
        "states": [list(s) for s in traj.states],
        "actions": list(traj.actions),
        "rewards": list(traj.rewards),
        "terminal_state": list(traj.terminal_state),
        "termination": traj.termination.value,
        "real_stages": traj.real_stages,
    }
    if traj.times is not None:
        rec["times"] = list(traj.times)
    if traj.taus is not None:
        rec["taus"] = list(traj.taus)
    return rec


def dump_trajectories(trajectories: Sequence[Trajectory], sim: str) -> str:
    """Render trajectories to newline-delimited JSON (one per line)."""
    lines = [
        jsonio.dumps(_traj_record(t, i, sim)) for i, t in enumerate(trajectories)
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def _tuple1(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def parse_trajectories(text: str) -> list[Trajectory]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = jsonio.loads(line)
        out.append(
            Trajectory(
                states=tuple(_tuple1(s) for s in rec["states"]),
                actions=_tuple1(rec["actions"]),
                rewards=_tuple1(rec["rewards"]),
                terminal_state=_tuple1(rec["terminal_state"]),
                termination=Termination(rec["termination"]),
                real_stages=int(rec["real_stages"]),
                times=_tuple1(rec["times"]) if "times" in rec else None,
                taus=_tuple1(rec["taus"]) if "taus" in rec else None,
            )
        )
    return out


def save_trajectories(path, trajectories: Sequence[Trajectory], sim: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_trajectories(trajectories, sim))


def load_trajectories(path) -> list[Trajectory]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trajectories(fh.read())
