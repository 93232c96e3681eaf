"""Generalized linear models: identity link with quadratic loss, logit link
with negative log-likelihood.

The logistic solver is IRLS (Newton steps on the mean NLL) with step-halving
whenever a step would increase the objective, so the objective is
monotonically non-increasing.  Near-singular designs are stabilized with a
symmetric ridge jitter of 1e-10 on the normal equations; exactly rank-deficient
designs raise instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import BINARY, Dataset
from .errors import DataError, FamilyError, RankDeficiencyError, UsageError
from .synthdata import sigmoid

IDENTITY = "identity"
LOGIT = "logit"
LINKS = (IDENTITY, LOGIT)

QUADRATIC = "quadratic"
NLL = "nll"

RIDGE_JITTER = 1e-10
GRAD_TOL = 1e-8
MAX_ITER = 100
COEF_CAP = 1e4
PROB_CLAMP = 1e-12


def loss_for_link(link: str) -> str:
    if link == IDENTITY:
        return QUADRATIC
    if link == LOGIT:
        return NLL
    raise UsageError(f"unknown link {link!r}")


def mean_nll(eta: np.ndarray, y: np.ndarray) -> float:
    """Mean logistic negative log-likelihood, computed on the linear scale."""
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def nll_gradient(design: np.ndarray, eta: np.ndarray, y: np.ndarray) -> np.ndarray:
    return design.T @ (sigmoid(eta) - y) / design.shape[0]


@dataclass(frozen=True)
class GlmModel:
    """Fitted GLM; immutable and shareable across threads.

    ``protected_effects`` holds one additive effect per observed protected
    level (the fit's reference level carries 0); it is empty when the model was
    trained without the protected attribute.
    """

    link: str
    loss: str
    coefficients: np.ndarray
    intercept: float
    protected_levels: tuple[int, ...] = ()
    protected_effects: np.ndarray = None
    feature_names: tuple[str, ...] = ()
    train_risk: float = float("nan")
    converged: bool = True

    def __post_init__(self):
        if self.link not in LINKS:
            raise UsageError(f"unknown link {self.link!r}")
        if self.loss != loss_for_link(self.link):
            raise UsageError(f"link {self.link} pairs with {loss_for_link(self.link)} loss")
        coefs = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", coefs)
        effects = np.zeros(0) if self.protected_effects is None else self.protected_effects
        effects = np.asarray(effects, dtype=float)
        if effects.shape != (len(self.protected_levels),):
            raise UsageError("one protected effect required per protected level")
        object.__setattr__(self, "protected_effects", effects)
        names = self.feature_names or tuple(f"x{i + 1}" for i in range(coefs.size))
        if len(names) != coefs.size:
            raise UsageError("one feature name required per coefficient")
        object.__setattr__(self, "feature_names", tuple(names))

    @property
    def uses_protected(self) -> bool:
        return bool(self.protected_levels)

    def _effect(self, z, n: int) -> np.ndarray:
        levels = np.asarray(self.protected_levels)
        zarr = np.broadcast_to(np.asarray(z, dtype=int), (n,))
        pos = np.searchsorted(levels, zarr)
        pos_clipped = np.clip(pos, 0, levels.size - 1)
        if not (levels[pos_clipped] == zarr).all():
            unseen = sorted(set(zarr.tolist()) - set(self.protected_levels))
            raise DataError(f"unseen protected level(s) {unseen} at prediction time")
        return self.protected_effects[pos_clipped]

    def linear_index(self, X: np.ndarray, z=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.coefficients.shape[0]:
            raise DataError(
                f"model expects {self.coefficients.shape[0]} features, got {X.shape[1]}"
            )
        eta = self.intercept + X @ self.coefficients
        if self.uses_protected:
            if z is None:
                raise UsageError("model was trained with the protected attribute; pass z")
            eta = eta + self._effect(z, X.shape[0])
        elif z is not None:
            raise UsageError("model was trained without the protected attribute; omit z")
        return eta

    def predict(self, X: np.ndarray, z=None) -> np.ndarray:
        """Linear predictor (identity link) or probability in (0, 1) (logit)."""
        single = np.asarray(X).ndim == 1
        eta = self.linear_index(X, z)
        out = eta if self.link == IDENTITY else np.clip(
            sigmoid(eta), PROB_CLAMP, 1.0 - PROB_CLAMP
        )
        return float(out[0]) if single else out


def _design(train: Dataset, include_protected: bool):
    cols = [np.ones(train.n), train.X]
    levels: tuple[int, ...] = ()
    if include_protected:
        levels = train.levels
        for lvl in levels[1:]:
            cols.append((train.z == lvl).astype(float))
    design = np.column_stack(cols)
    return design, levels


def _check_design(design: np.ndarray):
    n, p = design.shape
    if n <= p:
        raise DataError(f"need more rows than parameters: n={n}, p={p}")
    if np.linalg.matrix_rank(design) < p:
        raise RankDeficiencyError(
            "design matrix is rank deficient; drop collinear columns or add ridge jitter"
        )


def _irls(
    design: np.ndarray,
    y: np.ndarray,
    grad_tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> tuple[np.ndarray, list[float], bool]:
    """IRLS with step-halving; returns (beta, per-iteration objectives, converged)."""
    n, p = design.shape
    beta = np.zeros(p)
    obj = mean_nll(design @ beta, y)
    history = [obj]
    converged = False
    for _ in range(max_iter):
        eta = design @ beta
        grad = nll_gradient(design, eta, y)
        if np.linalg.norm(grad) <= grad_tol:
            converged = True
            break
        prob = sigmoid(eta)
        weights = np.clip(prob * (1.0 - prob), 1e-10, None)
        hess = (design * weights[:, None]).T @ design / n + RIDGE_JITTER * np.eye(p)
        direction = np.linalg.solve(hess, grad)
        step = 1.0
        candidate, cand_obj = beta, obj
        while step >= 1e-12:
            trial = beta - step * direction
            trial_obj = mean_nll(design @ trial, y)
            if trial_obj <= obj:
                candidate, cand_obj = trial, trial_obj
                break
            step /= 2.0
        if cand_obj >= obj and step < 1e-12:
            converged = True  # no descent direction left at float precision
            break
        beta, obj = candidate, cand_obj
        history.append(obj)
        if np.abs(beta).max() > COEF_CAP:
            warnings.warn(
                "logistic coefficients capped at 1e4; data are likely separable",
                RuntimeWarning,
            )
            beta = np.clip(beta, -COEF_CAP, COEF_CAP)
            history.append(mean_nll(design @ beta, y))
            break
    return beta, history, converged


def fit_glm(
    train: Dataset,
    link: str,
    include_protected: bool,
    grad_tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> GlmModel:
    """Empirical-risk minimizer over the GLM class.

    Identity link solves the (jittered) normal equations in closed form; logit
    link runs IRLS to gradient norm <= ``grad_tol`` or ``max_iter`` iterations.
    ``include_protected=False`` excludes z entirely, so the fit is invariant to
    the z column.
    """
    if link not in LINKS:
        raise UsageError(f"unknown link {link!r}")
    if link == LOGIT and train.outcome != BINARY:
        raise FamilyError("logit link requires a binary outcome in {0, 1}")
    design, levels = _design(train, include_protected)
    _check_design(design)
    y = train.y

    if link == IDENTITY:
        gram = design.T @ design + RIDGE_JITTER * np.eye(design.shape[1])
        beta = np.linalg.solve(gram, design.T @ y)
        converged = True
        risk = float(np.mean((design @ beta - y) ** 2))
    else:
        beta, _, converged = _irls(design, y, grad_tol, max_iter)
        prob = np.clip(sigmoid(design @ beta), PROB_CLAMP, 1.0 - PROB_CLAMP)
        risk = float(-np.mean(y * np.log(prob) + (1.0 - y) * np.log1p(-prob)))

    d = train.d
    effects = np.concatenate([[0.0], beta[1 + d :]]) if levels else np.zeros(0)
    return GlmModel(
        link=link,
        loss=loss_for_link(link),
        coefficients=beta[1 : 1 + d],
        intercept=float(beta[0]),
        protected_levels=levels,
        protected_effects=effects,
        feature_names=train.feature_names,
        train_risk=risk,
        converged=converged,
    )
