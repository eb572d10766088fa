"""Experiment configuration: flat key = value files with a typed schema.

Example::

    # dose-trial distributed run
    simulator = sim2
    learner = dkrr
    case = MJ
    n_train = 4000
    n_eval = 1000
    repeats = 10
    m = 8
    lam = 0.001953125
    sigma = 1.0
    seed = 7
    out = runs/sim2_dkrr

Unknown keys, bad types and inconsistent combinations are rejected with the
offending line number.  ``emit_config`` writes a canonical form for which
``parse_config(emit_config(c)) == c``.

The hyperparameter grids follow the experiment design: lambda is dyadic,

    flexible-stage trial: {1/2^q : 1/2^q > 1/(2N)}
    dose trial:           {1/2^q : 100/N > 1/2^q > 1/(10N)}

both descending, and sigma is log-equally spaced (20 points over [0.001, 1]
and [0.01, 10] respectively by default).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigError

SIMULATORS = ("sim1", "sim2")
LEARNERS = ("ls", "krr", "dkrr", "skrr", "fixed")
CASES = ("SS", "MS", "MJ", "NJ")
KERNEL_LEARNERS = ("krr", "dkrr", "skrr")

SIGMA_RANGE = {"sim1": (0.001, 1.0), "sim2": (0.01, 10.0)}


def lambda_grid(N: int, variant: str) -> list[float]:
    """The dyadic regularization grid of the given trial variant, descending."""
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    if variant == "sim1":
        qs = [q for q in range(64) if 2**q < 2 * N]
    elif variant == "sim2":
        qs = [q for q in range(64) if 100 * 2**q > N and 2**q < 10 * N]
    else:
        raise ConfigError(f"unknown grid variant {variant!r}")
    if not qs:
        raise ConfigError(f"empty lambda grid for N={N}, variant={variant}")
    return [1.0 / 2**q for q in sorted(qs)]


def sigma_grid(lo: float, hi: float, count: int = 20) -> list[float]:
    """``count`` log-equally spaced kernel widths, endpoints included."""
    if not (lo > 0.0):
        raise ConfigError(f"sigma bounds must be positive, got lo={lo}")
    if hi < lo:
        raise ConfigError(f"need lo <= hi, got [{lo}, {hi}]")
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    if count == 1:
        if lo != hi:
            raise ConfigError("count=1 needs lo == hi")
        return [float(lo)]
    if lo == hi:
        raise ConfigError("count > 1 needs lo < hi")
    grid = np.geomspace(lo, hi, count)
    grid[0], grid[-1] = lo, hi
    return [float(g) for g in grid]


@dataclass(frozen=True)
class ExperimentConfig:
    simulator: str
    learner: str
    case: str | None = None
    n_train: int = 2000
    n_eval: int = 1000
    repeats: int = 20
    m: int = 1
    m_list: tuple[int, ...] | None = None
    lam: float | None = None
    sigma: float | None = None
    lam_grid: tuple[float, ...] | None = None  # None = the variant's auto grid
    sigma_lo: float | None = None
    sigma_hi: float | None = None
    sigma_count: int = 20
    seed: int = 0
    out: str = "runs/out"
    threads: int = 1
    fixed_actions: str | None = None
    fixed_dose: float | None = None

    def resolved_lambda_grid(self) -> list[float]:
        if self.lam_grid is not None:
            return list(self.lam_grid)
        return lambda_grid(self.n_train, self.simulator)

    def resolved_sigma_grid(self) -> list[float]:
        lo, hi = SIGMA_RANGE[self.simulator]
        if self.sigma_lo is not None:
            lo = self.sigma_lo
        if self.sigma_hi is not None:
            hi = self.sigma_hi
        return sigma_grid(lo, hi, self.sigma_count)

    def params_set(self) -> bool:
        return self.lam is not None and self.sigma is not None


_INT_KEYS = {"n_train", "n_eval", "repeats", "m", "sigma_count", "seed", "threads"}
_FLOAT_KEYS = {"lam", "sigma", "sigma_lo", "sigma_hi", "fixed_dose"}
_STR_KEYS = {"simulator", "learner", "case", "out", "fixed_actions"}
_INT_LIST_KEYS = {"m_list"}
_FLOAT_LIST_KEYS = {"lam_grid"}
_ALL_KEYS = (
    _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _INT_LIST_KEYS | _FLOAT_LIST_KEYS
)


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in seen:
            raise ConfigError(
                f"duplicate key {key!r} (first on line {seen[key]})", line=lineno
            )
        seen[key] = lineno
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key in _INT_LIST_KEYS:
                values[key] = tuple(int(v.strip()) for v in val.split(","))
            elif key in _FLOAT_LIST_KEYS:
                values[key] = tuple(float(v.strip()) for v in val.split(","))
            else:
                values[key] = val
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", line=lineno)
    for required in ("simulator", "learner"):
        if required not in values:
            raise ConfigError(f"missing required key {required!r}")
    config = ExperimentConfig(**values)
    validate_config(config, lines=seen)
    return config


def emit_config(config: ExperimentConfig) -> str:
    lines = []
    for f in fields(config):
        v = getattr(config, f.name)
        if v is None:
            continue
        if isinstance(v, tuple):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def fingerprint(config: ExperimentConfig) -> str:
    return hashlib.sha256(emit_config(config).encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def save_config(path, config: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(emit_config(config))


def with_overrides(config: ExperimentConfig, *, seed=None, out=None, threads=None):
    if seed is not None:
        config = replace(config, seed=seed)
    if out is not None:
        config = replace(config, out=str(out))
    if threads is not None:
        config = replace(config, threads=threads)
    return config


def validate_config(config: ExperimentConfig, lines: dict[str, int] | None = None):
    lines = lines or {}

    def fail(key: str, msg: str):
        raise ConfigError(msg, line=lines.get(key))

    if config.simulator not in SIMULATORS:
        fail("simulator", f"simulator must be one of {SIMULATORS}")
    if config.learner not in LEARNERS:
        fail("learner", f"learner must be one of {LEARNERS}")
    if config.n_train < 1 or config.n_eval < 0:
        fail("n_train", "n_train must be >= 1 and n_eval >= 0")
    if config.repeats < 1:
        fail("repeats", "repeats must be >= 1")
    if config.threads < 1:
        fail("threads", "threads must be >= 1")
    if config.m < 1:
        fail("m", "m must be >= 1")
    if config.m > config.n_train:
        fail("m", f"m={config.m} exceeds n_train={config.n_train}")
    if config.m_list is not None and any(m < 1 for m in config.m_list):
        fail("m_list", "every m in m_list must be >= 1")

    if config.learner == "fixed":
        if config.simulator == "sim1":
            a = config.fixed_actions
            if a is None or len(a) != 3 or any(ch not in "AB" for ch in a):
                fail("fixed_actions",
                     "sim1 fixed policies need fixed_actions like 'AAB'")
        else:
            d = config.fixed_dose
            if d is None or not (0.0 < d <= 1.0):
                fail("fixed_dose", "sim2 fixed policies need fixed_dose in (0, 1]")
        return

    if config.case is None:
        fail("case", f"learner {config.learner!r} needs a feature case")
    if config.case not in CASES:
        fail("case", f"case must be one of {CASES}")
    if config.simulator == "sim2" and config.case in ("SS", "MS"):
        fail("case", "sim2 supports only the joint cases MJ and NJ")
    if config.lam is not None and config.lam <= 0:
        fail("lam", "lam must be positive")
    if config.sigma is not None and config.sigma <= 0:
        fail("sigma", "sigma must be positive")
    if config.learner in KERNEL_LEARNERS:
        # Grids must be constructible even when lam/sigma are fixed later.
        if config.lam_grid is not None and len(config.lam_grid) == 0:
            fail("lam_grid", "lambda grid must be nonempty")
        config.resolved_lambda_grid()
        config.resolved_sigma_grid()
