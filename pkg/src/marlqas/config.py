"""Experiment configuration: a YAML key-value tree mapped onto dataclasses.

Every hyperparameter has an explicit default so ``print-config`` can dump the
full tree. Keys left as ``null`` resolve to per-n defaults when the
experiment is built (agent count, seed count, horizon T, instance split,
baseline depth).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .env import EnvConfig, default_max_steps
from .problems import SchwingerParams
from .qmix import TrainerConfig
from .train import RunLimits
from .vqopt import OptConfig

PROBLEMS = ("maxcut_cubic", "schwinger")
BASELINES = ("none", "qaoa", "hea")

# (train M, test K) graphs and QAOA depth per n
MAXCUT_SPLIT = {4: (1, 0), 6: (1, 1), 8: (3, 2), 10: (12, 7), 12: (70, 15)}
QAOA_DEPTH = {4: 2, 6: 2, 8: 3, 10: 4, 12: 5}
HEA_DEPTH = {4: 3, 6: 5, 8: 6, 10: 8, 12: 10}


class ConfigError(ValueError):
    pass


def default_seed_count(n: int) -> int:
    if n <= 6:
        return 5
    if n <= 10:
        return 10
    return 25


@dataclass
class InstanceConfig:
    train: int | None = None
    test: int | None = None
    split_seed: int = 0


@dataclass
class SchwingerConfig:
    w: float = 1.0
    m0: float = 1.0
    g_bar: float = 1.0
    eps0: float = 0.0
    # null sums the electric term over j = 1..n; n - 1 gives the open-chain convention
    electric_sites: int | None = None

    @property
    def params(self) -> SchwingerParams:
        return SchwingerParams(self.w, self.m0, self.g_bar, self.eps0)


@dataclass
class EnvSection:
    rho: float = 0.01
    max_steps: int | None = None
    eta_threshold: float = 0.95
    reward_mode: str = "averaged_instances"
    share_params_per_step: bool | None = None


@dataclass
class BaselineConfig:
    kind: str = "none"
    depth: int | None = None
    qaoa_optimizer: OptConfig = field(default_factory=lambda: OptConfig(max_evals=500, restarts=5))
    hea_optimizer: OptConfig = field(
        default_factory=lambda: OptConfig(method="adam_paramshift", max_evals=200, restarts=3, lr=0.1)
    )


@dataclass
class ExperimentConfig:
    problem: str = "maxcut_cubic"
    n: int = 4
    # null means one agent per qubit
    agents: int | None = None
    seeds: list[int] | None = None
    instances: InstanceConfig = field(default_factory=InstanceConfig)
    schwinger: SchwingerConfig = field(default_factory=SchwingerConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    env: EnvSection = field(default_factory=EnvSection)
    inner: OptConfig = field(default_factory=OptConfig)
    limits: RunLimits = field(default_factory=lambda: RunLimits(keep_traces=20))
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    output_dir: str = "runs"

    def validate(self) -> ExperimentConfig:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.baseline.kind not in BASELINES:
            raise ConfigError(f"baseline.kind must be one of {BASELINES}")
        if self.problem == "maxcut_cubic" and self.n not in MAXCUT_SPLIT:
            raise ConfigError(f"maxcut_cubic needs n in {sorted(MAXCUT_SPLIT)}")
        if self.problem == "schwinger" and (self.n < 2 or self.n % 2 or self.n > 16):
            raise ConfigError("schwinger needs an even n between 2 and 16")
        if self.n_agents < 1 or self.n % self.n_agents:
            raise ConfigError(f"agents={self.n_agents} must divide n={self.n}")
        if self.baseline.depth is not None and self.baseline.depth < 1:
            raise ConfigError("baseline depth must be >= 1")
        if self.seeds is not None and len(self.seeds) == 0:
            raise ConfigError("seeds must be non-empty")
        try:
            self.env_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # -- resolved views ----------------------------------------------------

    @property
    def n_agents(self) -> int:
        return self.agents if self.agents is not None else self.n

    @property
    def seed_list(self) -> list[int]:
        return list(self.seeds) if self.seeds is not None else list(range(default_seed_count(self.n)))

    @property
    def split_sizes(self) -> tuple[int, int]:
        M, K = MAXCUT_SPLIT.get(self.n, (1, 0))
        return (self.instances.train if self.instances.train is not None else M,
                self.instances.test if self.instances.test is not None else K)

    def env_config(self) -> EnvConfig:
        e = self.env
        share = e.share_params_per_step
        if share is None:
            # one common angle per step for Max-Cut, free angles for Schwinger
            share = self.problem == "maxcut_cubic"
        return EnvConfig(
            rho=e.rho,
            max_steps=e.max_steps if e.max_steps is not None else default_max_steps(self.n),
            eta_threshold=e.eta_threshold,
            reward_mode=e.reward_mode,
            share_params_per_step=share,
            inner=self.inner,
        )

    def resolved(self) -> ExperimentConfig:
        """Copy with every null default replaced by its per-n value."""
        e = self.env_config()
        M, K = self.split_sizes if self.problem == "maxcut_cubic" else (1, 0)
        baseline = self.baseline
        if baseline.kind != "none":
            baseline = dataclasses.replace(baseline, depth=self.baseline_depth())
        return dataclasses.replace(
            self,
            agents=self.n_agents,
            seeds=self.seed_list,
            instances=dataclasses.replace(self.instances, train=M, test=K),
            env=dataclasses.replace(self.env, max_steps=e.max_steps, share_params_per_step=e.share_params_per_step),
            baseline=baseline,
        )

    def baseline_depth(self) -> int:
        if self.baseline.depth is not None:
            return self.baseline.depth
        table = QAOA_DEPTH if self.baseline.kind == "qaoa" else HEA_DEPTH
        if self.n not in table:
            raise ConfigError(f"no default {self.baseline.kind} depth for n={self.n}; set baseline.depth")
        return table[self.n]


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(sorted(unknown))}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value or {}, f"{path}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def from_dict(data: dict | None) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {}, "").validate()


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)
