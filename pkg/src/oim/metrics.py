"""Evaluation metrics: cross-risk, resilience, disparities, relative utility,
and bootstrap confidence intervals.

All functions are pure and deterministic given their inputs (the bootstrap
takes an explicit seeded generator), so they are safe to call from worker
pools.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import BINARY, Dataset
from .errors import DataError, EmptyDatasetError, FamilyError, UsageError
from .glm import NLL, PROB_CLAMP, QUADRATIC

L1 = "l1"
EVAL_LOSSES = (QUADRATIC, NLL, L1)

RESILIENCE_EPSILON = 1e-9
CLASSIFICATION_THRESHOLD = 0.5


def binarize(predictions: np.ndarray, threshold: float = CLASSIFICATION_THRESHOLD):
    """Probabilities to hard labels; >= threshold counts as positive."""
    return (np.asarray(predictions, dtype=float) >= threshold).astype(float)


def empirical_loss(outcomes: np.ndarray, predictions: np.ndarray, loss: str) -> float:
    outcomes = np.asarray(outcomes, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    if outcomes.shape != predictions.shape:
        raise DataError(
            f"outcome and prediction lengths disagree: {outcomes.shape} vs {predictions.shape}"
        )
    if loss == QUADRATIC:
        return float(np.mean((outcomes - predictions) ** 2))
    if loss == L1:
        return float(np.mean(np.abs(outcomes - predictions)))
    if loss == NLL:
        c = np.clip(predictions, PROB_CLAMP, 1.0 - PROB_CLAMP)
        return float(-np.mean(outcomes * np.log(c) + (1.0 - outcomes) * np.log1p(-c)))
    raise UsageError(f"unknown loss {loss!r}; expected one of {EVAL_LOSSES}")


def model_predictions(model, reference: Dataset) -> np.ndarray:
    """Predict on a reference dataset, passing z only to models that need it."""
    z = reference.z if getattr(model, "uses_protected", False) else None
    return np.asarray(model.predict(reference.X, z), dtype=float)


def cross_risk(reference: Dataset, model, loss: str) -> float:
    """Empirical mean loss of a model's predictions against reference outcomes."""
    if loss == NLL and reference.outcome != BINARY:
        raise FamilyError("nll cross-risk requires a binary reference outcome")
    return empirical_loss(reference.y, model_predictions(model, reference), loss)


def resilience(pair, algorithm, reference_trainer, loss: str) -> float:
    """Ratio of the clean-trained reference risk to the algorithm's cross-risk.

    The numerator model is trained on the clean dataset (standard learning of
    the non-discriminatory ground truth); the denominator model is trained on
    the perturbed sibling.  Both risks are evaluated on the clean dataset.
    When the numerator is numerically zero, 1e-9 is added to both sides so the
    ratio stays defined.
    """
    ref_model = reference_trainer(pair.clean)
    model = algorithm(pair.perturbed)
    for fitted in (ref_model, model):
        fitted_loss = getattr(fitted, "loss", loss)
        if fitted_loss != loss and loss != L1:
            raise UsageError(
                f"trainer produced a {fitted_loss}-loss model but resilience "
                f"was requested under {loss}"
            )
    numerator = cross_risk(pair.clean, ref_model, loss)
    denominator = cross_risk(pair.clean, model, loss)
    if numerator < RESILIENCE_EPSILON:
        numerator += RESILIENCE_EPSILON
        denominator += RESILIENCE_EPSILON
    return numerator / denominator


@dataclass(frozen=True)
class DisparityReport:
    """Absolute group differences; undefined conditionals are NaN and flagged."""

    dd: float
    ppd: float
    fpd: float
    undefined: tuple[str, ...] = ()


def _rate(num: float, den: float):
    return num / den if den > 0 else None


def disparities_expected(
    decision_probs: np.ndarray, labels: np.ndarray, z: np.ndarray
) -> DisparityReport:
    """Disparities from per-row positive-decision probabilities.

    For hard 0/1 decisions this reduces to direct counting; for randomized
    rules it is the exact expectation over the rule's internal coin flips.
    """
    q = np.asarray(decision_probs, dtype=float)
    y = np.asarray(labels, dtype=float)
    zv = np.asarray(z)
    if not q.shape == y.shape == zv.shape:
        raise DataError("predictions, labels, and z must have equal length")
    groups = np.unique(zv)
    if groups.size != 2:
        raise DataError(f"disparities need exactly two protected groups, got {groups.size}")

    rates = {"dd": [], "ppd": [], "fpd": []}
    for g in groups:
        m = zv == g
        if not m.any():
            raise DataError("each protected group must be nonempty")
        rates["dd"].append(_rate(q[m].sum(), m.sum()))
        rates["ppd"].append(_rate((q[m] * y[m]).sum(), q[m].sum()))
        neg = m & (y == 0)
        rates["fpd"].append(_rate(q[neg].sum(), neg.sum()))

    values = {}
    undefined = []
    for name, (a, b) in rates.items():
        if a is None or b is None:
            values[name] = float("nan")
            undefined.append(name)
        else:
            values[name] = abs(a - b)
    return DisparityReport(
        dd=values["dd"], ppd=values["ppd"], fpd=values["fpd"], undefined=tuple(undefined)
    )


def disparities(
    predictions: np.ndarray, labels: np.ndarray, z: np.ndarray
) -> DisparityReport:
    """Demographic, positive-predictive, and false-positive disparities."""
    preds = np.asarray(predictions, dtype=float)
    if not np.isin(preds, (0.0, 1.0)).all():
        raise DataError("disparities expect binary predictions; threshold first")
    if not np.isin(np.asarray(labels, dtype=float), (0.0, 1.0)).all():
        raise DataError("disparities expect binary labels")
    return disparities_expected(preds, labels, z)


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    preds = binarize(predictions)
    return float(np.mean(preds == np.asarray(labels, dtype=float)))


def misclassification_risk(decision_probs: np.ndarray, labels: np.ndarray) -> float:
    """Expected 0/1 loss of a (possibly randomized) binary decision rule."""
    q = np.asarray(decision_probs, dtype=float)
    u = np.asarray(labels, dtype=float)
    if q.shape != u.shape:
        raise DataError("decision probabilities and labels must have equal length")
    return float(np.mean(u + q * (1.0 - 2.0 * u)))


def relative_utility(reference_risk: float, method_risk: float) -> float:
    """Ratio of the reference (true-process) risk to a method's risk."""
    if method_risk < 0 or reference_risk < 0:
        raise UsageError("risks must be nonnegative")
    if method_risk == 0.0:
        if reference_risk == 0.0:
            return 1.0
        warnings.warn(
            "relative utility is degenerate: method risk is exactly zero",
            RuntimeWarning,
        )
        return float("inf")
    return reference_risk / method_risk


def bootstrap_ci(
    values: np.ndarray,
    level: float = 0.95,
    resamples: int = 1000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean.

    Endpoints are the order statistics of the resampled means at 1-indexed
    ranks ceil(alpha/2 * R) and floor((1 - alpha/2) * R).
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptyDatasetError("bootstrap requires a nonempty value vector")
    rng = rng or np.random.default_rng(0)
    idx = rng.integers(0, values.size, size=(resamples, values.size))
    means = np.sort(values[idx].mean(axis=1))
    # Guard the rank arithmetic against float dust in (1 - level) / 2.
    eps = 1e-9 * resamples
    tail = (1.0 - level) / 2.0
    lo_rank = max(1, math.ceil(tail * resamples - eps))
    hi_rank = min(resamples, math.floor((1.0 - tail) * resamples + eps))
    return float(means[lo_rank - 1]), float(means[hi_rank - 1])


@dataclass(frozen=True)
class EvalReport:
    """Bundle of evaluation metrics with optional confidence intervals.

    Resilience values outside [0, 1] are kept raw and flagged, never clamped.
    """

    cross_risk: float | None = None
    resilience: float | None = None
    accuracy: float | None = None
    dd: float | None = None
    ppd: float | None = None
    fpd: float | None = None
    relative_utility: float | None = None
    per_group_cross_risks: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.cross_risk is not None and self.cross_risk < 0:
            raise DataError("cross-risk must be nonnegative")
        for name in ("dd", "ppd", "fpd"):
            v = getattr(self, name)
            if v is not None and not math.isnan(v) and not 0.0 <= v <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {v}")
        flags = list(self.flags)
        if self.resilience is not None and not 0.0 <= self.resilience <= 1.0:
            if "resilience-out-of-range" not in flags:
                flags.append("resilience-out-of-range")
        object.__setattr__(self, "flags", tuple(flags))

    def to_dict(self) -> dict:
        out = {}
        for name in (
            "cross_risk",
            "resilience",
            "accuracy",
            "dd",
            "ppd",
            "fpd",
            "relative_utility",
        ):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        if self.per_group_cross_risks:
            out["per_group_cross_risks"] = dict(self.per_group_cross_risks)
        if self.ci:
            out["ci"] = {k: list(v) for k, v in self.ci.items()}
        if self.flags:
            out["flags"] = list(self.flags)
        return out

    def to_table(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            if key in ("per_group_cross_risks", "ci"):
                lines.append(f"{key}:")
                for k, v in value.items():
                    lines.append(f"  {k}: {v}")
            else:
                lines.append(f"{key}: {value}")
        return "\n".join(lines)
