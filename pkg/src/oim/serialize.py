"""Model serialization to plain structured text.

Every numeric value is written at 17 significant digits, which round-trips
IEEE doubles exactly.  Files are YAML documents with a ``kind`` tag; nested
models (the mixture's full model, the equalized-odds base) serialize as nested
blocks.  Mixing distributions serialize as ordered (level, weight) pairs.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import yaml

from .baselines import EqOddsPredictor, EqOddsRule
from .errors import ConfigError
from .glm import GlmModel
from .mixture import ChainedOimModel, MixingDistribution, OimModel
from .mlp import MlpModel


class _ModelDumper(yaml.SafeDumper):
    pass


def _represent_float(dumper, value):
    if math.isnan(value):
        text = ".nan"
    elif math.isinf(value):
        text = ".inf" if value > 0 else "-.inf"
    else:
        text = format(value, ".17g")
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_ModelDumper.add_representer(float, _represent_float)


def _floats(values) -> list[float]:
    return [float(v) for v in np.asarray(values, dtype=float)]


def model_to_dict(model) -> dict:
    if isinstance(model, GlmModel):
        return {
            "kind": "glm",
            "link": model.link,
            "loss": model.loss,
            "intercept": float(model.intercept),
            "coefficients": {
                name: float(c)
                for name, c in zip(model.feature_names, model.coefficients)
            },
            "protected_levels": list(model.protected_levels),
            "protected_effects": _floats(model.protected_effects),
            "train_risk": float(model.train_risk),
        }
    if isinstance(model, MlpModel):
        return {
            "kind": "mlp",
            "output": model.output,
            "loss": model.loss,
            "protected_levels": list(model.protected_levels),
            "train_risk": float(model.train_loss),
            "layers": [
                {
                    "weights": [_floats(row) for row in w],
                    "biases": _floats(b),
                }
                for w, b in zip(model.weights, model.biases)
            ],
        }
    if isinstance(model, OimModel):
        return {
            "kind": "oim",
            "loss": model.loss,
            "train_risk": float(model.train_risk),
            "mixing": [
                [int(level), float(weight)]
                for level, weight in zip(model.mixing.support, model.mixing.weights)
            ],
            "full_model": model_to_dict(model.full_model),
        }
    if isinstance(model, ChainedOimModel):
        return {
            "kind": "chained-oim",
            "loss": model.loss,
            "train_risk": float(model.train_risk),
            "feature_index": model.feature_index,
            "repair": model_to_dict(model.repair),
            "outcome": model_to_dict(model.outcome),
        }
    if isinstance(model, EqOddsPredictor):
        return {
            "kind": "eq-odds",
            "levels": list(model.rule.levels),
            "keep_given_positive": _floats(model.rule.keep_given_positive),
            "keep_given_negative": _floats(model.rule.keep_given_negative),
            "base": model_to_dict(model.base),
        }
    raise ConfigError(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(raw: dict):
    try:
        kind = raw["kind"]
        if kind == "glm":
            names = tuple(raw["coefficients"].keys())
            return GlmModel(
                link=raw["link"],
                loss=raw["loss"],
                coefficients=[raw["coefficients"][n] for n in names],
                intercept=raw["intercept"],
                protected_levels=tuple(raw["protected_levels"]),
                protected_effects=raw["protected_effects"],
                feature_names=names,
                train_risk=raw["train_risk"],
            )
        if kind == "mlp":
            return MlpModel(
                weights=tuple(
                    np.asarray(layer["weights"], dtype=float) for layer in raw["layers"]
                ),
                biases=tuple(
                    np.asarray(layer["biases"], dtype=float) for layer in raw["layers"]
                ),
                output=raw["output"],
                protected_levels=tuple(raw["protected_levels"]),
                train_loss=raw["train_risk"],
            )
        if kind == "oim":
            pairs = raw["mixing"]
            return OimModel(
                full_model=model_from_dict(raw["full_model"]),
                mixing=MixingDistribution(
                    support=tuple(int(p[0]) for p in pairs),
                    weights=[p[1] for p in pairs],
                ),
                loss=raw["loss"],
                train_risk=raw["train_risk"],
            )
        if kind == "chained-oim":
            return ChainedOimModel(
                feature_index=raw["feature_index"],
                repair=model_from_dict(raw["repair"]),
                outcome=model_from_dict(raw["outcome"]),
                loss=raw["loss"],
                train_risk=raw["train_risk"],
            )
        if kind == "eq-odds":
            return EqOddsPredictor(
                base=model_from_dict(raw["base"]),
                rule=EqOddsRule(
                    levels=tuple(raw["levels"]),
                    keep_given_positive=tuple(raw["keep_given_positive"]),
                    keep_given_negative=tuple(raw["keep_given_negative"]),
                ),
            )
        raise ConfigError(f"unknown model kind {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"malformed model file: missing key {exc}") from exc


def save_model(model, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.dump(
            model_to_dict(model), fh, Dumper=_ModelDumper, sort_keys=False
        )


def load_model(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(yaml.safe_load(fh))


def training_risk(model) -> float:
    """Uniform accessor for the risk logged at fit time."""
    if isinstance(model, MlpModel):
        return float(model.train_loss)
    risk = getattr(model, "train_risk", None)
    if risk is None:
        raise ConfigError(f"{type(model).__name__} does not log a training risk")
    return float(risk)
