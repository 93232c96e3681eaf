"""Comparison learners evaluated against the interventional mixture.

``traditional`` wraps the plain GLM/MLP fits under harness names; the
equalized-odds post-processor randomizes a base classifier's decisions per
group so that group true-positive and false-positive rates match.  The
equalized-odds program is a 4-variable linear program with two equality
constraints, solved exactly by vertex enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .dataset import BINARY, Dataset
from .errors import ConfigError, DataError, DegenerateGroupError, FamilyError, UsageError
from .glm import IDENTITY, LOGIT, fit_glm
from .metrics import binarize
from .mixture import HYPOTHESES, chained_oim, oim_fit
from .mlp import MlpConfig, fit_mlp

ALGORITHM_NAMES = (
    "oim",
    "traditional-with-z",
    "traditional-without-z",
    "eq-odds",
    "chained-oim",
)


def traditional(
    train: Dataset,
    hypothesis: str,
    include_protected: bool,
    mlp_config: MlpConfig | None = None,
):
    """Standard supervised learning, with or without the protected attribute."""
    if hypothesis == "glm-identity":
        return fit_glm(train, IDENTITY, include_protected)
    if hypothesis == "glm-logit":
        return fit_glm(train, LOGIT, include_protected)
    if hypothesis == "mlp":
        return fit_mlp(train, mlp_config, include_protected)
    raise UsageError(f"unknown hypothesis {hypothesis!r}; expected one of {HYPOTHESES}")


@dataclass(frozen=True)
class EqOddsRule:
    """Per-group randomized decision rule equalizing TPR and FPR.

    For each protected level, ``keep_given_positive`` is the probability of
    keeping a positive base prediction and ``keep_given_negative`` the
    probability of keeping a negative one.
    """

    levels: tuple[int, int]
    keep_given_positive: tuple[float, float]
    keep_given_negative: tuple[float, float]

    def __post_init__(self):
        for p in (*self.keep_given_positive, *self.keep_given_negative):
            if not -1e-9 <= p <= 1.0 + 1e-9:
                raise UsageError(f"keep probability {p} outside [0, 1]")
        object.__setattr__(
            self,
            "keep_given_positive",
            tuple(float(np.clip(p, 0.0, 1.0)) for p in self.keep_given_positive),
        )
        object.__setattr__(
            self,
            "keep_given_negative",
            tuple(float(np.clip(p, 0.0, 1.0)) for p in self.keep_given_negative),
        )

    def positive_probability(self, base_positive: np.ndarray, z: np.ndarray) -> np.ndarray:
        """P(decision = 1) per row given hard base predictions and group."""
        pred = np.asarray(base_positive, dtype=float)
        out = np.empty_like(pred)
        for i, level in enumerate(self.levels):
            m = np.asarray(z) == level
            a = self.keep_given_positive[i]
            b = 1.0 - self.keep_given_negative[i]
            out[m] = a * pred[m] + b * (1.0 - pred[m])
        return out


def _group_rates(pred: np.ndarray, y: np.ndarray):
    pos = y == 1.0
    neg = ~pos
    if pos.sum() == 0 or neg.sum() == 0:
        raise DegenerateGroupError("a protected group is missing a label class")
    tpr = float(pred[pos].mean())
    fpr = float(pred[neg].mean())
    return tpr, fpr, int(pos.sum()), int(neg.sum())


def fit_eq_odds(base, calibration: Dataset) -> EqOddsRule:
    """Choose flip probabilities minimizing expected misclassification subject
    to equal group TPR and FPR on the calibration split.

    Decision variables are, per group g, a_g = P(out=1 | pred=1, g) and
    b_g = P(out=1 | pred=0, g).  The two equality constraints fix the
    post-processed TPR and FPR to agree across groups; vertices of the box
    polytope are enumerated by pinning two variables to {0, 1} and solving the
    remaining 2x2 system.  Ties prefer the identity rule.
    """
    if calibration.outcome != BINARY:
        raise FamilyError("equalized odds requires a binary outcome")
    levels = calibration.levels
    if len(levels) != 2:
        raise DataError(f"equalized odds needs exactly two groups, got {len(levels)}")
    base_z = calibration.z if getattr(base, "uses_protected", False) else None
    pred = binarize(base.predict(calibration.X, base_z))

    rates = []
    for level in levels:
        m = calibration.z == level
        rates.append(_group_rates(pred[m], calibration.y[m]))
    (t0, f0, npos0, nneg0), (t1, f1, npos1, nneg1) = rates
    n = calibration.n

    # Post-processed rates: TPR'_g = a_g t_g + b_g (1 - t_g), same for FPR'.
    # Equalities as M @ (a0, b0, a1, b1) = 0.
    eq = np.array(
        [
            [t0, 1.0 - t0, -t1, -(1.0 - t1)],
            [f0, 1.0 - f0, -f1, -(1.0 - f1)],
        ]
    )
    # Expected misclassifications: sum_g nneg_g FPR'_g + npos_g (1 - TPR'_g).
    cost = (
        np.array(
            [
                nneg0 * f0 - npos0 * t0,
                nneg0 * (1.0 - f0) - npos0 * (1.0 - t0),
                nneg1 * f1 - npos1 * t1,
                nneg1 * (1.0 - f1) - npos1 * (1.0 - t1),
            ]
        )
        / n
    )

    # Enumerate basic feasible solutions: every vertex has its active
    # constraints (the two equalities plus box fixings) spanning R^4.  Working
    # over all fixing subsets also covers degenerate bases whose groups share
    # rates, where the equality rows become linearly dependent.
    identity = np.array([1.0, 0.0, 1.0, 0.0])
    best = None
    best_obj = np.inf
    for k in range(5):
        for fixed in combinations(range(4), k):
            units = np.zeros((k, 4))
            for row, idx in enumerate(fixed):
                units[row, idx] = 1.0
            system = np.vstack([eq, units])
            if np.linalg.matrix_rank(system, tol=1e-10) < 4:
                continue
            for vals in product((0.0, 1.0), repeat=k):
                rhs = np.concatenate([np.zeros(2), np.asarray(vals)])
                point, *_ = np.linalg.lstsq(system, rhs, rcond=None)
                if np.abs(system @ point - rhs).max() > 1e-9:
                    continue
                if (point < -1e-9).any() or (point > 1.0 + 1e-9).any():
                    continue
                obj = float(cost @ point)
                better = obj < best_obj - 1e-12
                tie = abs(obj - best_obj) <= 1e-12
                if better or (
                    tie
                    and np.linalg.norm(point - identity)
                    < np.linalg.norm(best - identity)
                ):
                    best, best_obj = point, obj
    if best is None:
        raise DataError("equalized-odds program has no feasible vertex")
    a0, b0, a1, b1 = (float(np.clip(v, 0.0, 1.0)) for v in best)
    return EqOddsRule(
        levels=(levels[0], levels[1]),
        keep_given_positive=(a0, a1),
        keep_given_negative=(1.0 - b0, 1.0 - b1),
    )


@dataclass(frozen=True)
class EqOddsPredictor:
    """Base classifier combined with an equalized-odds randomized rule.

    ``predict`` returns the exact positive-decision probability per row (the
    analytic realization used for metrics); ``sample`` draws seeded binary
    decisions for emitted predictions.
    """

    base: object
    rule: EqOddsRule

    uses_protected = True
    emits_decisions = True  # predictions are decision probabilities, not scores

    @property
    def loss(self) -> str:
        return getattr(self.base, "loss", "nll")

    def predict(self, X: np.ndarray, z) -> np.ndarray:
        if z is None:
            raise UsageError("equalized-odds decisions require the group attribute z")
        base_z = z if getattr(self.base, "uses_protected", False) else None
        single = np.asarray(X).ndim == 1
        pred = binarize(self.base.predict(np.atleast_2d(X), base_z))
        zarr = np.broadcast_to(np.asarray(z), pred.shape)
        out = self.rule.positive_probability(pred, zarr)
        return float(out[0]) if single else out

    def sample(self, X: np.ndarray, z, rng: np.random.Generator) -> np.ndarray:
        return rng.binomial(1, self.predict(X, z)).astype(float)


@dataclass(frozen=True)
class Trainer:
    """A named training procedure: maps a dataset to a fitted predictor."""

    name: str
    hypothesis: str
    mlp_config: MlpConfig | None = None

    def __call__(self, train: Dataset):
        if self.name == "oim":
            return oim_fit(train, self.hypothesis, self.mlp_config)
        if self.name == "traditional-with-z":
            return traditional(train, self.hypothesis, True, self.mlp_config)
        if self.name == "traditional-without-z":
            return traditional(train, self.hypothesis, False, self.mlp_config)
        if self.name == "chained-oim":
            return chained_oim(train, hypothesis=self.hypothesis, mlp_config=self.mlp_config)
        if self.name == "eq-odds":
            base = traditional(train, self.hypothesis, False, self.mlp_config)
            return EqOddsPredictor(base=base, rule=fit_eq_odds(base, train))
        raise ConfigError(
            f"unknown algorithm {self.name!r}; registered: {', '.join(ALGORITHM_NAMES)}"
        )


def make_trainer(
    name: str, hypothesis: str, mlp_config: MlpConfig | None = None
) -> Trainer:
    if name not in ALGORITHM_NAMES:
        raise ConfigError(
            f"unknown algorithm {name!r}; registered: {', '.join(ALGORITHM_NAMES)}"
        )
    if hypothesis not in HYPOTHESES:
        raise ConfigError(
            f"unknown hypothesis {hypothesis!r}; expected one of {HYPOTHESES}"
        )
    return Trainer(name=name, hypothesis=hypothesis, mlp_config=mlp_config)
