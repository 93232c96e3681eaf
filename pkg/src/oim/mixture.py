"""Optimal interventional mixture: full fit with the protected attribute,
then simplex-constrained optimization of counterfactual mixing weights.

The mixture prediction averages counterfactual model outputs over the
protected support; for logit-link models the average is taken over output
probabilities (post-link), which keeps the mixing objective convex for both
supported losses.  The weights are found by projected gradient descent with
exact Euclidean simplex projection, started at the uniform distribution so a
flat objective returns the uniform mixture.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import BINARY, CONTINUOUS, Dataset
from .errors import DataError, DegenerateProtectedError, FamilyError, UsageError
from .glm import IDENTITY, LOGIT, NLL, PROB_CLAMP, QUADRATIC, fit_glm
from .mlp import MlpConfig, fit_mlp

HYPOTHESES = ("glm-identity", "glm-logit", "mlp")

WEIGHT_TOL = 1e-9
GRAD_MAP_TOL = 1e-8
MAX_ITER = 10_000


@dataclass(frozen=True)
class MixingDistribution:
    """Nonnegative weights over the protected support, summing to one."""

    support: tuple[int, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.support),):
            raise UsageError("one weight required per support level")
        if (w < 0).any():
            raise UsageError("mixing weights must be nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise UsageError(f"mixing weights sum to {w.sum():.12f}, not 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, support) -> "MixingDistribution":
        k = len(support)
        return cls(support=tuple(support), weights=np.full(k, 1.0 / k))


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, v.size + 1) > 0)[0][-1]
    shift = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + shift, 0.0)


def counterfactual_predictions(full_model, X: np.ndarray) -> np.ndarray:
    """(n, k) matrix of model outputs under each counterfactual protected level."""
    if not full_model.uses_protected:
        raise UsageError("counterfactual predictions need a model trained with z")
    return np.column_stack(
        [full_model.predict(X, level) for level in full_model.protected_levels]
    )


def mixture_predict(full_model, mixing: MixingDistribution, X: np.ndarray) -> np.ndarray:
    """Weighted average of counterfactual predictions over the support."""
    if tuple(mixing.support) != tuple(full_model.protected_levels):
        raise UsageError(
            f"mixing support {mixing.support} does not match model levels "
            f"{full_model.protected_levels}"
        )
    return counterfactual_predictions(full_model, X) @ mixing.weights


def _mixture_objective(P: np.ndarray, y: np.ndarray, loss: str):
    if loss == QUADRATIC:
        def objective(w):
            return float(np.mean((P @ w - y) ** 2))

        def gradient(w):
            return 2.0 * P.T @ (P @ w - y) / P.shape[0]

    else:
        def objective(w):
            c = np.clip(P @ w, PROB_CLAMP, 1.0 - PROB_CLAMP)
            return float(-np.mean(y * np.log(c) + (1.0 - y) * np.log1p(-c)))

        def gradient(w):
            c = np.clip(P @ w, PROB_CLAMP, 1.0 - PROB_CLAMP)
            return P.T @ ((c - y) / (c * (1.0 - c))) / P.shape[0]

    return objective, gradient


def optimize_mixing(
    full_model,
    train: Dataset,
    loss: str,
    grad_tol: float = GRAD_MAP_TOL,
    max_iter: int = MAX_ITER,
) -> MixingDistribution:
    """Minimize the empirical risk of the mixture over the probability simplex.

    Projected gradient descent with step 1/L for quadratic loss (L from the
    quadratic term's largest eigenvalue) and prox-style backtracking for NLL,
    run until the gradient-mapping norm drops to ``grad_tol`` or ``max_iter``
    iterations.  Both objectives are convex, so the returned point is globally
    optimal within tolerance.  Probabilities are clamped away from {0, 1}
    under NLL, so the objective is always finite.
    """
    if loss not in (QUADRATIC, NLL):
        raise UsageError(f"mixing supports quadratic and nll losses, got {loss!r}")
    if loss != full_model.loss:
        raise UsageError(
            f"requested {loss} loss for a model fitted under {full_model.loss}"
        )
    if loss == NLL and train.outcome != BINARY:
        raise FamilyError("nll mixing requires a binary outcome")
    support = full_model.protected_levels
    P = counterfactual_predictions(full_model, train.X)
    y = train.y
    objective, gradient = _mixture_objective(P, y, loss)

    k = len(support)
    w = np.full(k, 1.0 / k)

    if loss == QUADRATIC:
        # Movement stays in the simplex's zero-sum tangent space, so the
        # relevant curvature is that of the column-centered predictions.
        centered = P - P.mean(axis=1, keepdims=True)
        lipschitz = 2.0 * float(np.linalg.eigvalsh(centered.T @ centered).max()) / train.n
        if lipschitz < 1e-30:
            return MixingDistribution(support=support, weights=w)
        step = 1.0 / lipschitz
        converged = False
        for _ in range(max_iter):
            nxt = project_to_simplex(w - step * gradient(w))
            map_norm = float(np.linalg.norm(w - nxt)) / step
            w = nxt
            if map_norm <= grad_tol:
                converged = True
                break
    else:
        step = 1.0
        obj = objective(w)
        converged = False
        for _ in range(max_iter):
            g = gradient(w)
            while True:
                nxt = project_to_simplex(w - step * g)
                delta = nxt - w
                if step <= 1e-18 or objective(nxt) <= obj + g @ delta + (
                    delta @ delta
                ) / (2.0 * step):
                    break
                step /= 2.0
            map_norm = float(np.linalg.norm(w - nxt)) / step
            w = nxt
            obj = objective(w)
            step = min(step * 2.0, 1e6)
            if map_norm <= grad_tol:
                converged = True
                break

    if not converged:
        warnings.warn(
            f"mixing optimization stopped at iteration cap with gradient-mapping "
            f"norm {map_norm:.3e}",
            RuntimeWarning,
        )
    w = np.maximum(w, 0.0)
    w = w / w.sum()
    return MixingDistribution(support=support, weights=w)


@dataclass(frozen=True)
class OimModel:
    """Full model plus optimal mixing weights.

    Predictions average counterfactual interventions on the protected
    attribute and never consult the query row's actual z; a ``z`` argument is
    accepted for interface uniformity and ignored.
    """

    full_model: object
    mixing: MixingDistribution
    loss: str
    train_risk: float = float("nan")

    uses_protected = False

    def predict(self, X: np.ndarray, z=None) -> np.ndarray:
        single = np.asarray(X).ndim == 1
        out = mixture_predict(self.full_model, self.mixing, np.atleast_2d(X))
        return float(out[0]) if single else out


def _empirical_risk(preds: np.ndarray, y: np.ndarray, loss: str) -> float:
    if loss == QUADRATIC:
        return float(np.mean((preds - y) ** 2))
    c = np.clip(preds, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(c) + (1.0 - y) * np.log1p(-c)))


def fit_full_model(
    train: Dataset, hypothesis: str, mlp_config: MlpConfig | None = None
):
    """Step one of the mixture algorithm: fit with all features including z."""
    if hypothesis == "glm-identity":
        return fit_glm(train, IDENTITY, include_protected=True)
    if hypothesis == "glm-logit":
        return fit_glm(train, LOGIT, include_protected=True)
    if hypothesis == "mlp":
        return fit_mlp(train, mlp_config, include_protected=True)
    raise UsageError(f"unknown hypothesis {hypothesis!r}; expected one of {HYPOTHESES}")


def oim_fit(
    train: Dataset,
    hypothesis: str = "glm-logit",
    mlp_config: MlpConfig | None = None,
) -> OimModel:
    """Fit the optimal interventional mixture.

    Step 1 trains the full model with the protected attribute; steps 2-3
    freeze its parameters and optimize the mixing distribution on the same
    split.
    """
    if len(train.levels) < 2:
        raise DegenerateProtectedError(
            "protected column has a single observed level; the mixture is vacuous"
        )
    full = fit_full_model(train, hypothesis, mlp_config)
    mixing = optimize_mixing(full, train, full.loss)
    preds = counterfactual_predictions(full, train.X) @ mixing.weights
    return OimModel(
        full_model=full,
        mixing=mixing,
        loss=full.loss,
        train_risk=_empirical_risk(preds, train.y, full.loss),
    )


@dataclass(frozen=True)
class ChainedOimModel:
    """Two-stage mixture for data with one directly perturbed feature.

    The repair stage fits a mixture for the perturbed feature; training rows
    are corrected by subtracting the estimated group shift (full-model fit
    minus mixture prediction), which removes the direct z term while keeping
    each row's residual information.  At query time the correction averaged
    over the mixing weights is exactly the identity, so predictions read the
    features as given and never consult z.
    """

    feature_index: int
    repair: OimModel
    outcome: OimModel
    loss: str
    train_risk: float = float("nan")

    uses_protected = False

    def correct_feature(self, X: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Counterfactual correction of the perturbed column when z is known."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        rest = [j for j in range(X.shape[1]) if j != self.feature_index]
        shift = self.repair.full_model.predict(X[:, rest], z) - self.repair.predict(
            X[:, rest]
        )
        return X[:, self.feature_index] - shift

    def predict(self, X: np.ndarray, z=None) -> np.ndarray:
        single = np.asarray(X).ndim == 1
        out = self.outcome.predict(np.atleast_2d(X))
        return float(out[0]) if single else out


def chained_oim(
    train: Dataset,
    perturbed_feature: int | None = None,
    hypothesis: str = "glm-logit",
    feature_hypothesis: str = "glm-identity",
    mlp_config: MlpConfig | None = None,
) -> ChainedOimModel:
    """Fit the chained mixture: repair the perturbed feature, then the outcome.

    Stage 1 fits a mixture for the perturbed feature regressed on the
    remaining features and z; the column is then corrected to stage-1 mixture
    predictions plus per-row residuals (equivalently, the estimated direct z
    shift is subtracted), and stage 2 fits the outcome mixture on the repaired
    features.
    """
    declared = train.meta.get("perturbed_feature")
    if perturbed_feature is None:
        perturbed_feature = declared
    if perturbed_feature is None:
        raise UsageError(
            "no perturbed feature named in the dataset's perturbation metadata"
        )
    if declared is not None and declared != perturbed_feature:
        raise UsageError(
            f"requested feature {perturbed_feature} but metadata declares {declared}"
        )
    if train.d < 2:
        raise DataError(
            "insufficient covariates: the perturbed feature is the only feature"
        )
    rest = [j for j in range(train.d) if j != perturbed_feature]
    stage1_data = Dataset(
        X=train.X[:, rest],
        z=train.z,
        y=train.X[:, perturbed_feature],
        outcome=CONTINUOUS,
        feature_names=tuple(train.feature_names[j] for j in rest),
    )
    repair = oim_fit(stage1_data, feature_hypothesis, mlp_config)

    shift = repair.full_model.predict(stage1_data.X, train.z) - repair.predict(
        stage1_data.X
    )
    repaired = train.X.copy()
    repaired[:, perturbed_feature] = train.X[:, perturbed_feature] - shift
    stage2_data = Dataset(
        X=repaired,
        z=train.z,
        y=train.y,
        outcome=train.outcome,
        feature_names=train.feature_names,
    )
    outcome = oim_fit(stage2_data, hypothesis, mlp_config)
    return ChainedOimModel(
        feature_index=perturbed_feature,
        repair=repair,
        outcome=outcome,
        loss=outcome.loss,
        train_risk=outcome.train_risk,
    )
