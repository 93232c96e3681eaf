"""Experiment configuration: plain nested key-value files, strictly validated.

One file per run.  Unknown keys fail fast naming the key; YAML syntax errors
are reported with their line numbers.  All randomness downstream flows from
the single ``seed`` value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .baselines import ALGORITHM_NAMES
from .errors import ConfigError
from .mixture import HYPOTHESES
from .mlp import MlpConfig
from .synthdata import NONLINEAR_FORMS

SCENARIOS = (
    "corr-sweep",
    "glm-ensemble",
    "nonlinear-ensemble",
    "missing-feature",
    "perturbed-x",
    "lipton",
    "labelflip",
    "realdata",
)

COMMON_KEYS = {"scenario", "seed", "n", "repeats", "hypothesis", "algorithms", "mlp"}

SCENARIO_KEYS = {
    "corr-sweep": {"betas", "correlations"},
    "glm-ensemble": {"perturbations"},
    "nonlinear-ensemble": {"nonlinear_form", "comparisons", "perturbations"},
    "missing-feature": {"perturbations", "removed_feature"},
    "perturbed-x": set(),
    "lipton": set(),
    "labelflip": {"flip_fraction", "test_n"},
    "realdata": {"dataset_path", "schema", "splits", "train_fraction"},
}

MLP_KEYS = {"hidden", "learning_rate", "momentum", "batch_size", "epochs"}

DEFAULT_COMPARISONS = (
    ("oim", "mlp"),
    ("traditional-without-z", "mlp"),
    ("traditional-with-z", "mlp"),
    ("oim", "glm-logit"),
    ("traditional-without-z", "glm-logit"),
)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    seed: int = 0
    n: int = 10_000
    repeats: int = 100
    hypothesis: str = "glm-logit"
    algorithms: tuple[str, ...] = ("oim", "traditional-with-z", "traditional-without-z")
    mlp: dict = field(default_factory=dict)
    betas: tuple[float, ...] = (0.0, 5.0)
    correlations: tuple[float, ...] = (0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9)
    perturbations: tuple[str, ...] = ("none", "direct", "induced")
    nonlinear_form: str = "product"
    comparisons: tuple[tuple[str, str], ...] = DEFAULT_COMPARISONS
    removed_feature: int = 1
    flip_fraction: float = 0.5
    test_n: int = 10_000
    dataset_path: str | None = None
    schema: str | None = None
    splits: int = 10
    train_fraction: float = 0.7

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}"
            )
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.hypothesis not in HYPOTHESES:
            raise ConfigError(f"unknown hypothesis {self.hypothesis!r}")
        if not self.algorithms:
            raise ConfigError("algorithms list must be nonempty")
        for name in self.algorithms:
            if name not in ALGORITHM_NAMES:
                raise ConfigError(
                    f"unknown algorithm {name!r}; registered: {', '.join(ALGORITHM_NAMES)}"
                )
        if not self.correlations or not self.betas:
            raise ConfigError("grids must be nonempty")
        for rho in self.correlations:
            if not -1.0 < rho < 1.0:
                raise ConfigError(f"correlation {rho} outside (-1, 1)")
        for kind in self.perturbations:
            if kind not in ("none", "direct", "induced"):
                raise ConfigError(f"unknown ensemble perturbation {kind!r}")
        if self.nonlinear_form not in NONLINEAR_FORMS:
            raise ConfigError(f"unknown nonlinear form {self.nonlinear_form!r}")
        for name, hyp in self.comparisons:
            if name not in ALGORITHM_NAMES or hyp not in HYPOTHESES:
                raise ConfigError(f"bad comparison entry ({name!r}, {hyp!r})")
        if not 0.0 <= self.flip_fraction <= 1.0:
            raise ConfigError("flip_fraction must lie in [0, 1]")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.splits < 1:
            raise ConfigError("splits must be >= 1")
        unknown_mlp = set(self.mlp) - MLP_KEYS
        if unknown_mlp:
            raise ConfigError(f"unknown mlp config key {sorted(unknown_mlp)[0]!r}")
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(
            self, "correlations", tuple(float(r) for r in self.correlations)
        )
        object.__setattr__(self, "perturbations", tuple(self.perturbations))
        object.__setattr__(
            self, "comparisons", tuple((str(a), str(h)) for a, h in self.comparisons)
        )

    def mlp_config(self, seed: int) -> MlpConfig:
        raw = dict(self.mlp)
        if "hidden" in raw:
            raw["hidden"] = tuple(raw["hidden"])
        return MlpConfig(seed=seed, **raw)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            if isinstance(value, dict):
                value = dict(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        if "scenario" not in raw:
            raise ConfigError("config is missing the required key 'scenario'")
        scenario = raw["scenario"]
        if scenario not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {scenario!r}; expected one of {SCENARIOS}"
            )
        allowed = COMMON_KEYS | SCENARIO_KEYS[scenario]
        for key in raw:
            if key not in allowed:
                raise ConfigError(
                    f"unknown config key {key!r} for scenario {scenario!r}"
                )
        kwargs = dict(raw)
        if "comparisons" in kwargs:
            kwargs["comparisons"] = tuple(tuple(c) for c in kwargs["comparisons"])
        for key in ("algorithms", "betas", "correlations", "perturbations"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    def override(self, **kwargs) -> "ExperimentConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs) if kwargs else self


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"cannot parse config {path}{where}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)
