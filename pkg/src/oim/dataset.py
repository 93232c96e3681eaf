"""Dataset containers shared by generators, trainers, and metrics.

A :class:`Dataset` is an immutable bundle of a feature matrix, a protected
column with finite integer support, and an outcome column.  A
:class:`DatasetPair` couples an unperturbed dataset with its perturbed sibling
and is the unit of resilience measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from .errors import DataError, EmptyDatasetError

BINARY = "binary"
CONTINUOUS = "continuous"
OUTCOME_KINDS = (BINARY, CONTINUOUS)


def _default_feature_names(d: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(d))


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X``, protected column ``z``, outcome column ``y``.

    ``outcome`` is ``"binary"`` (y in {0, 1}) or ``"continuous"``.  ``meta``
    carries provenance such as the perturbed feature index; it never affects
    numerical behavior.
    """

    X: np.ndarray
    z: np.ndarray
    y: np.ndarray
    outcome: str
    feature_names: tuple[str, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        z = np.asarray(self.z)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got ndim={X.ndim}")
        if X.shape[0] == 0:
            raise EmptyDatasetError("dataset has zero rows")
        if z.shape != (X.shape[0],) or y.shape != (X.shape[0],):
            raise DataError(
                f"column lengths disagree: X has {X.shape[0]} rows, "
                f"z has {z.shape}, y has {y.shape}"
            )
        if self.outcome not in OUTCOME_KINDS:
            raise DataError(f"unknown outcome kind {self.outcome!r}")
        if self.outcome == BINARY and not np.isin(y, (0.0, 1.0)).all():
            raise DataError("binary outcome column contains values outside {0, 1}")
        names = self.feature_names or _default_feature_names(X.shape[1])
        if len(names) != X.shape[1]:
            raise DataError(
                f"{len(names)} feature names for {X.shape[1]} feature columns"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "z", np.asarray(z, dtype=int))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(names))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def levels(self) -> tuple[int, ...]:
        """Observed protected levels in ascending order."""
        return tuple(int(v) for v in np.unique(self.z))

    def subset(self, rows: np.ndarray) -> "Dataset":
        return replace(
            self, X=self.X[rows], z=self.z[rows], y=self.y[rows], meta=dict(self.meta)
        )

    def drop_feature(self, index: int) -> "Dataset":
        if not 0 <= index < self.d:
            raise DataError(f"feature index {index} out of range for d={self.d}")
        if self.d == 1:
            raise DataError("cannot drop the only feature column")
        keep = [j for j in range(self.d) if j != index]
        return replace(
            self,
            X=self.X[:, keep],
            feature_names=tuple(self.feature_names[j] for j in keep),
            meta=dict(self.meta),
        )

    def with_outcome(self, y: np.ndarray, **meta: Any) -> "Dataset":
        merged = dict(self.meta)
        merged.update(meta)
        return replace(self, y=np.asarray(y, dtype=float), meta=merged)


@dataclass(frozen=True)
class DatasetPair:
    """Unperturbed dataset and its perturbed sibling over shared features.

    Both sides have identical feature matrices and protected columns and
    differ only in the outcome column, except for feature perturbations where
    exactly ``perturbed_feature`` also differs.
    """

    clean: Dataset
    perturbed: Dataset
    kind: str = "none"
    perturbed_feature: int | None = None

    def __post_init__(self):
        c, p = self.clean, self.perturbed
        if c.n != p.n:
            raise DataError(f"pair sides disagree in size: {c.n} vs {p.n}")
        if not np.array_equal(c.z, p.z):
            raise DataError("pair sides disagree in the protected column")
        same = c.X == p.X
        if self.perturbed_feature is None:
            if not same.all():
                raise DataError("pair sides disagree in features without a declared perturbed feature")
        else:
            j = self.perturbed_feature
            others = [k for k in range(c.d) if k != j]
            if others and not same[:, others].all():
                raise DataError("feature perturbation touched undeclared columns")
