"""Synthetic dataset generators and discriminatory perturbations.

All generators are pure functions of their parameters and a seeded
``numpy.random.Generator``; calling twice with equal seeds yields identical
data.  Protected attributes are encoded as {-1, +1} for synthetic data (the
hiring scenario uses {0, 1}, matching its published generating process).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dataset import BINARY, CONTINUOUS, Dataset, DatasetPair
from .errors import ConfigError, DataError, EmptyDatasetError

BERNOULLI_LOGISTIC = "bernoulli-logistic"
NORMAL_IDENTITY = "normal-identity"
FAMILIES = (BERNOULLI_LOGISTIC, NORMAL_IDENTITY)

NONLINEAR_FORMS = ("product", "exp-product", "sin-product")

PERTURBATION_KINDS = ("none", "direct", "induced", "label-flip", "feature-perturbation")


def sigmoid(t: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    return np.exp(-np.logaddexp(0.0, -np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric PSD matrix with unit diagonal and off-diagonals in [-1, 1]."""

    dim: int
    entries: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"invalid dimension {self.dim} for a correlation matrix")
        m = np.asarray(self.entries, dtype=float)
        if m.shape != (self.dim, self.dim):
            raise ConfigError(f"entries shape {m.shape} does not match dim {self.dim}")
        if not np.allclose(m, m.T, atol=1e-12):
            raise ConfigError("correlation matrix is not symmetric")
        m = (m + m.T) / 2.0
        if not np.allclose(np.diag(m), 1.0, atol=1e-12):
            raise ConfigError("correlation matrix diagonal is not 1")
        np.fill_diagonal(m, 1.0)
        off = m[~np.eye(self.dim, dtype=bool)]
        if off.size and np.abs(off).max() > 1.0 + 1e-12:
            raise ConfigError("correlation entries must lie in [-1, 1]")
        m = np.clip(m, -1.0, 1.0)
        np.fill_diagonal(m, 1.0)
        if self.dim > 1 and np.linalg.eigvalsh(m).min() < -1e-10:
            raise ConfigError("correlation matrix is not positive semidefinite")
        object.__setattr__(self, "entries", m)


def random_correlation_matrix(dim: int, rng: np.random.Generator) -> CorrelationMatrix:
    """Draw a random correlation matrix by normalizing a Gaussian Gram matrix.

    With A a dim x dim matrix of independent standard normals, returns
    D^{-1/2} (A A^T) D^{-1/2} where D is the diagonal of A A^T.  The result is
    PSD with unit diagonal by construction.
    """
    if dim < 1:
        raise ConfigError(f"invalid dimension {dim} for a correlation matrix")
    a = rng.standard_normal((dim, dim))
    gram = a @ a.T
    scale = np.sqrt(np.diag(gram))
    entries = gram / np.outer(scale, scale)
    return CorrelationMatrix(dim=dim, entries=entries)


def correlation_with_protected(n_features: int, rho: float) -> CorrelationMatrix:
    """Identity correlation except corr(X1, latent Z) = rho.

    Used by the correlation sweep; raises if ``rho`` makes the matrix
    infeasible.
    """
    if not -1.0 < rho < 1.0:
        raise ConfigError(f"target correlation {rho} is infeasible")
    entries = np.eye(n_features + 1)
    entries[0, -1] = entries[-1, 0] = rho
    return CorrelationMatrix(dim=n_features + 1, entries=entries)


def sample_features(
    n: int, sigma: CorrelationMatrix, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Sample (X, z) from a standard multivariate normal with correlation sigma.

    The last coordinate is binarized with the sign function into z in {-1, +1};
    the remaining coordinates become the feature matrix.  Sign binarization
    attenuates the latent correlation by E|N(0,1)| = sqrt(2/pi).
    """
    if n < 1:
        raise EmptyDatasetError("cannot sample an empty dataset (n=0)")
    if sigma.dim < 2:
        raise DataError("sigma must have dim >= 2: the last dimension becomes z")
    latent = rng.multivariate_normal(np.zeros(sigma.dim), sigma.entries, size=n)
    x = latent[:, :-1]
    z = np.where(latent[:, -1] >= 0.0, 1, -1)
    return x, z


@dataclass(frozen=True)
class OutcomeSpec:
    """Mean structure and sampling family of an outcome variable.

    The mean of the outcome is ``link(index)`` with logistic link for the
    Bernoulli family and identity (unit noise variance) for the normal family.
    ``nonlinear_form`` overrides the linear index with a product form over the
    first two features.
    """

    family: str
    coefficients: np.ndarray | None = None
    protected_coefficient: float = 0.0
    intercept: float = 0.0
    nonlinear_form: str | None = None
    nonlinear_params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown outcome family {self.family!r}")
        if self.nonlinear_form is not None:
            if self.nonlinear_form not in NONLINEAR_FORMS:
                raise ConfigError(f"unknown nonlinear form {self.nonlinear_form!r}")
            want = 1 if self.nonlinear_form == "product" else 2
            if len(self.nonlinear_params) != want:
                raise ConfigError(
                    f"{self.nonlinear_form} takes {want} parameter(s), "
                    f"got {len(self.nonlinear_params)}"
                )
        elif self.coefficients is None:
            raise ConfigError("linear outcome spec requires coefficients")
        if self.coefficients is not None:
            object.__setattr__(
                self, "coefficients", np.asarray(self.coefficients, dtype=float)
            )

    @property
    def outcome_kind(self) -> str:
        return BINARY if self.family == BERNOULLI_LOGISTIC else CONTINUOUS

    def index(self, X: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
        """Linear (or product-form) predictor; adds the z term iff z is given."""
        X = np.asarray(X, dtype=float)
        if self.nonlinear_form is not None:
            if X.shape[1] < 2:
                raise DataError("product-form outcomes need at least two features")
            prod = X[:, 0] * X[:, 1]
            if self.nonlinear_form == "product":
                out = self.nonlinear_params[0] * prod
            elif self.nonlinear_form == "exp-product":
                a1, a2 = self.nonlinear_params
                out = a1 * np.exp(a2 * prod)
            else:
                a1, a2 = self.nonlinear_params
                out = a1 * np.sin(a2 * prod)
        else:
            if X.shape[1] != self.coefficients.shape[0]:
                raise DataError(
                    f"coefficient-dimension mismatch: {self.coefficients.shape[0]} "
                    f"coefficients for {X.shape[1]} features"
                )
            out = X @ self.coefficients
        out = out + self.intercept
        if z is not None:
            out = out + self.protected_coefficient * np.asarray(z, dtype=float)
        return out

    def mean(self, X: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
        idx = self.index(X, z)
        return sigmoid(idx) if self.family == BERNOULLI_LOGISTIC else idx

    def draw(
        self, X: np.ndarray, z: np.ndarray | None, rng: np.random.Generator
    ) -> np.ndarray:
        mu = self.mean(X, z)
        if self.family == BERNOULLI_LOGISTIC:
            return rng.binomial(1, mu).astype(float)
        return mu + rng.standard_normal(mu.shape[0])


@dataclass(frozen=True)
class PerturbationSpec:
    """How the clean outcome law is perturbed into the training law."""

    kind: str
    protected_coefficient: float = 0.0
    replacement: OutcomeSpec | None = None
    flip_group: tuple[int, int] | None = None
    flip_fraction: float = 0.0
    feature_index: int | None = None
    feature_spec: OutcomeSpec | None = None

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "induced" and self.replacement is None:
            raise ConfigError("induced perturbation requires replacement coefficients")
        if self.kind == "label-flip":
            if self.flip_group is None:
                raise ConfigError("label-flip requires a (z, y) group selector")
            if not 0.0 <= self.flip_fraction <= 1.0:
                raise ConfigError(f"flip fraction {self.flip_fraction} outside [0, 1]")
        if self.kind == "feature-perturbation":
            if self.feature_index is None or self.feature_spec is None:
                raise ConfigError(
                    "feature-perturbation requires a feature index and its outcome spec"
                )
            if self.feature_spec.family != NORMAL_IDENTITY:
                raise ConfigError("perturbed features must use the normal-identity family")


def flip_labels(
    y: np.ndarray,
    z: np.ndarray,
    group: tuple[int, int],
    fraction: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Flip round(fraction * group size) labels inside the (z, y) group.

    The flip count rounds half-down so ties resolve by floor; the flipped
    subset is drawn uniformly without replacement.  Labels outside the group
    are never touched.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"flip fraction {fraction} outside [0, 1]")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("label flips require binary outcomes")
    level, value = group
    members = np.flatnonzero((z == level) & (y == value))
    count = int(math.ceil(fraction * members.size - 0.5))
    flipped = y.copy()
    if count:
        chosen = rng.choice(members, size=count, replace=False)
        flipped[chosen] = 1.0 - value
    return flipped


def generate_pair(
    X: np.ndarray,
    z: np.ndarray,
    clean_spec: OutcomeSpec,
    perturbation: PerturbationSpec,
    rng: np.random.Generator,
) -> DatasetPair:
    """Generate a clean/perturbed dataset pair over shared features.

    The clean outcome is always drawn from the z-free law ``clean_spec``.  The
    perturbed outcome follows the perturbation kind: fresh draws from the same
    law (none), a direct z shift in the index, replacement coefficients
    (induced), or group-targeted label flips.  Feature perturbations regenerate
    the named column on both sides with shared noise, adding the z shift only
    on the perturbed side; outcomes on both sides are then drawn downstream of
    the regenerated clean column, so the training side observes a tainted
    measurement of the feature that actually drives the outcome.
    """
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=int)
    x_clean = X
    x_pert = X
    kind = perturbation.kind
    feature = None

    if kind == "feature-perturbation":
        feature = perturbation.feature_index
        if not 0 <= feature < X.shape[1]:
            raise DataError(f"perturbed feature index {feature} out of range")
        rest = [j for j in range(X.shape[1]) if j != feature]
        base = perturbation.feature_spec.index(X[:, rest])
        noise = rng.standard_normal(X.shape[0])
        x_clean = X.copy()
        x_pert = X.copy()
        x_clean[:, feature] = base + noise
        x_pert[:, feature] = (
            base + perturbation.feature_spec.protected_coefficient * z + noise
        )

    u = clean_spec.draw(x_clean, None, rng)

    if kind == "none":
        y = clean_spec.draw(x_pert, None, rng)
    elif kind == "direct":
        shifted = replace(
            clean_spec, protected_coefficient=perturbation.protected_coefficient
        )
        y = shifted.draw(x_pert, z, rng)
    elif kind == "induced":
        y = perturbation.replacement.draw(x_pert, None, rng)
    elif kind == "label-flip":
        y = flip_labels(u, z, perturbation.flip_group, perturbation.flip_fraction, rng)
    else:
        y = clean_spec.draw(x_clean, None, rng)

    outcome = clean_spec.outcome_kind
    meta = {"perturbation": kind}
    if feature is not None:
        meta["perturbed_feature"] = feature
    clean = Dataset(X=x_clean, z=z, y=u, outcome=outcome, meta={"perturbation": "none"})
    perturbed = Dataset(X=x_pert, z=z, y=y, outcome=outcome, meta=meta)
    return DatasetPair(clean=clean, perturbed=perturbed, kind=kind, perturbed_feature=feature)


def hire_probability(work_exp: np.ndarray) -> np.ndarray:
    """True hiring probability of the synthetic hiring scenario."""
    return sigmoid(-25.5 + 2.5 * np.asarray(work_exp, dtype=float))


def lipton_scenario(n: int, rng: np.random.Generator) -> Dataset:
    """Synthetic hiring dataset with gender-correlated hair length.

    Hiring depends on work experience only, so the data is non-discriminatory;
    hair length is a gender proxy that careless models can pick up.  Columns:
    (hair_length, work_exp), protected z in {0, 1}, binary y.
    """
    if n < 1:
        raise EmptyDatasetError("cannot sample an empty dataset (n=0)")
    z = rng.binomial(1, 0.5, size=n)
    hair = np.empty(n)
    work = np.empty(n)
    g0 = z == 0
    g1 = ~g0
    hair[g0] = 35.0 * rng.beta(2.0, 2.0, size=g0.sum())
    hair[g1] = 35.0 * rng.beta(2.0, 7.0, size=g1.sum())
    work[g0] = rng.poisson(25.0, size=g0.sum()) - rng.normal(20.0, 0.2, size=g0.sum())
    modes = np.where(rng.random(g1.sum()) < 0.2, 10.0, 15.0)
    work[g1] = rng.normal(modes, 2.0)
    y = rng.binomial(1, hire_probability(work)).astype(float)
    return Dataset(
        X=np.column_stack([hair, work]),
        z=z,
        y=y,
        outcome=BINARY,
        feature_names=("hair_length", "work_exp"),
        meta={"scenario": "lipton"},
    )


def four_group_scenario(
    n: int,
    rng: np.random.Generator,
    label_shift: float = 2.2,
    label_leak: float = 0.4,
    proxy_shift: float = 0.6,
) -> Dataset:
    """Balanced four-group classification task for the label-flip study.

    Rows split evenly over (z, y) in {-1, +1} x {0, 1}.  The first feature
    carries the label signal plus a mild protected-attribute component (as in
    image data, where the outcome-relevant pixels also reveal group
    membership); the second feature is a pure group proxy.  Both get unit
    Gaussian noise.  The outcome causes the features, mirroring annotation
    tasks where labels precede measurements.
    """
    if n < 4:
        raise DataError("four-group task needs at least one row per group")
    groups = [(zl, yl) for zl in (-1, 1) for yl in (0, 1)]
    counts = [n // 4] * 4
    for i in range(n - sum(counts)):
        counts[i] += 1
    z = np.concatenate([np.full(c, g[0]) for g, c in zip(groups, counts)])
    y = np.concatenate([np.full(c, float(g[1])) for g, c in zip(groups, counts)])
    signal = (2.0 * y - 1.0) * label_shift + z * label_leak
    proxy = z * proxy_shift
    X = np.column_stack([signal, proxy]) + rng.standard_normal((n, 2))
    order = rng.permutation(n)
    return Dataset(
        X=X[order],
        z=z[order],
        y=y[order],
        outcome=BINARY,
        meta={"scenario": "four-group"},
    )
