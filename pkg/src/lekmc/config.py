"""Experiment configuration: a flat key=value text format with strict validation.

Unknown keys are rejected outright (silent typos are the main field hazard),
every numeric constraint is checked before any simulation starts, and the
normalized text hashes to a stable identifier that is stamped into every
output file.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .lattice import ConfigurationError
from .processes import PROCESS_KINDS, MacroProfile


class ConfigError(ConfigurationError):
    """Invalid experiment configuration."""


DEFAULT_EPSILONS = (0.004, 0.008, 0.016, 0.032, 0.064)

_SCALING_DEFAULTS = {
    # kind: (alpha, beta)
    "arrhenius_crystal": (4.0, 2.0),
    "zero_range": (2.0, 0.0),
    "simple_exclusion": (2.0, 0.0),
}

_KEYS = (
    "process", "n_ladder", "k", "alpha", "beta", "profile", "init",
    "t_list", "delta", "n_replicas", "seed", "epsilon_grid", "observables",
    "rate_override", "event_budget", "hist_range",
)


@dataclass(frozen=True)
class ExperimentConfig:
    process: str
    n_ladder: tuple
    k: float
    alpha: float
    beta: float
    profile: str
    init: str                 # "profile" | "equilibrium" | "poisson:<mean>"
    t_list: tuple
    delta: float
    n_replicas: int
    seed: int
    epsilon_grid: tuple
    observables: tuple
    rate_override: str | None
    event_budget: int
    hist_range: int

    def validate(self):
        if self.process not in PROCESS_KINDS:
            raise ConfigError(f"unknown process {self.process!r}")
        if not self.n_ladder or any(n < 8 for n in self.n_ladder):
            raise ConfigError("n_ladder must be nonempty with every N >= 8")
        if list(self.n_ladder) != sorted(set(self.n_ladder)):
            raise ConfigError("n_ladder must be strictly increasing")
        if not self.k > 0:
            raise ConfigError("k must be positive")
        if self.n_replicas < 1:
            raise ConfigError("n_replicas must be >= 1")
        if not self.t_list or any(t < 0 for t in self.t_list):
            raise ConfigError("t_list must be nonempty and nonnegative")
        if list(self.t_list) != sorted(self.t_list) or len(set(self.t_list)) != len(self.t_list):
            raise ConfigError("t_list must be strictly increasing")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if self.delta > 0:
            gaps = [b - a for a, b in zip(self.t_list, self.t_list[1:])]
            limit = min([self.t_list[0]] + gaps)
            if self.delta > limit:
                raise ConfigError(
                    f"delta={self.delta:g} exceeds the smallest gap {limit:g} "
                    f"between recording times (including 0 -> first time)")
        if any(e <= 0 for e in self.epsilon_grid):
            raise ConfigError("epsilon grid entries must be positive")
        if self.event_budget < 1:
            raise ConfigError("event_budget must be >= 1")
        if self.hist_range < 4:
            raise ConfigError("hist_range must be >= 4")
        if self.init not in ("profile", "equilibrium") and not self.init.startswith("poisson:"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.init == "equilibrium" and self.process != "arrhenius_crystal":
            raise ConfigError("init=equilibrium applies to the crystal process only")
        if self.init.startswith("poisson:"):
            if self.process == "arrhenius_crystal":
                raise ConfigError("init=poisson applies to occupancy processes only")
            try:
                mean = float(self.init.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad poisson init {self.init!r}") from None
            if mean < 0:
                raise ConfigError("poisson init mean must be nonnegative")
        if self.rate_override not in (None, "linear"):
            raise ConfigError(f"unknown rate_override {self.rate_override!r}")
        if self.rate_override and self.process != "zero_range":
            raise ConfigError("rate_override applies to zero_range only")
        if self.delta > 0 and self.process != "arrhenius_crystal":
            raise ConfigError("time-averaging windows are wired for the crystal process only")
        try:
            MacroProfile.parse(self.profile)
        except ConfigurationError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def canonical_text(self) -> str:
        parts = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            parts.append(f"{f.name} = {v}")
        return "\n".join(parts) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def _parse_floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key = value format; unknown keys are an error."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    if "process" not in raw:
        raise ConfigError("missing required key 'process'")
    process = raw["process"]
    if process not in PROCESS_KINDS:
        raise ConfigError(f"unknown process {process!r}")
    alpha_default, beta_default = _SCALING_DEFAULTS[process]

    def get(key, default=None):
        return raw.get(key, default)

    try:
        cfg = ExperimentConfig(
            process=process,
            n_ladder=_parse_ints(get("n_ladder", "")),
            k=float(get("k", "3.0")),
            alpha=float(get("alpha", str(alpha_default))),
            beta=float(get("beta", str(beta_default))),
            profile=get("profile", "0"),
            init=get("init", "profile"),
            t_list=_parse_floats(get("t_list", "")),
            delta=float(get("delta", "0")),
            n_replicas=int(get("n_replicas", "1")),
            seed=int(get("seed", "0")),
            epsilon_grid=_parse_floats(get("epsilon_grid", "")) or DEFAULT_EPSILONS,
            observables=tuple(s.strip() for s in get("observables", "").split(",") if s.strip()),
            rate_override=get("rate_override") or None,
            event_budget=int(float(get("event_budget", "1e9"))),
            hist_range=int(get("hist_range", "64")),
        )
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}") from None
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
