"""Tabular dataset ingestion and serialization.

CSV files are comma-delimited UTF-8 with a required header row.  A
:class:`SchemaSpec` names the feature columns (continuous or categorical,
one-hot encoded at load time), the protected column with its positive-class
label, and the outcome column.  Ingestion never silently drops rows: rows with
missing cells (or, when ``protected_values`` restricts the group set, rows
outside it) are dropped with a warning that reports their indices.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dataset import BINARY, CONTINUOUS, Dataset
from .errors import (
    ConfigError,
    DataError,
    EmptyDatasetError,
    ParseError,
    SchemaError,
)

CONTINUOUS_KIND = "continuous"
CATEGORICAL_KIND = "categorical"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in (CONTINUOUS_KIND, CATEGORICAL_KIND):
            raise ConfigError(f"column {self.name!r} has unknown kind {self.kind!r}")


@dataclass(frozen=True)
class SchemaSpec:
    """Declared layout of a tabular dataset file."""

    features: tuple[ColumnSpec, ...]
    protected_column: str
    protected_positive: str
    outcome_column: str
    outcome_positive: str = "1"
    outcome_kind: str = BINARY
    protected_values: tuple[str, ...] = ()

    def __post_init__(self):
        names = [c.name for c in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate feature column names in schema")
        for col in (self.protected_column, self.outcome_column):
            if col in names:
                raise ConfigError(
                    f"column {col!r} cannot be both a feature and a special column"
                )
        if self.protected_column == self.outcome_column:
            raise ConfigError("protected and outcome columns must differ")
        if self.outcome_kind not in (BINARY, CONTINUOUS):
            raise ConfigError(f"unknown outcome kind {self.outcome_kind!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "SchemaSpec":
        try:
            features = tuple(
                ColumnSpec(name=f["name"], kind=f["kind"]) for f in raw["features"]
            )
            return cls(
                features=features,
                protected_column=raw["protected"]["column"],
                protected_positive=str(raw["protected"]["positive"]),
                outcome_column=raw["outcome"]["column"],
                outcome_positive=str(raw["outcome"].get("positive", "1")),
                outcome_kind=raw["outcome"].get("kind", BINARY),
                protected_values=tuple(
                    str(v) for v in raw["protected"].get("values", [])
                ),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed schema: missing key {exc}") from exc

    @classmethod
    def from_yaml(cls, path: str | Path) -> "SchemaSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))


def synthetic_schema(feature_names, outcome_kind: str = CONTINUOUS) -> SchemaSpec:
    """Schema matching the CSV layout written by :func:`save_csv`."""
    return SchemaSpec(
        features=tuple(ColumnSpec(n, CONTINUOUS_KIND) for n in feature_names),
        protected_column="z",
        protected_positive="1",
        outcome_column="y",
        outcome_positive="1",
        outcome_kind=outcome_kind,
    )


def _read_rows(path: str | Path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path}: file is empty") from None
        rows = list(reader)
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows below the header")
    return [h.strip() for h in header], rows


def load_csv(path: str | Path, schema: SchemaSpec) -> Dataset:
    """Load a CSV into a Dataset with one-hot categoricals and binary z/y.

    Categorical category sets are recorded from the file at load time; each
    one-hot block sums to one per row.  Rows with missing cells are dropped
    with a warning naming their indices; unparseable numeric cells raise a
    row-indexed parse error.
    """
    header, rows = _read_rows(path)
    positions = {name: i for i, name in enumerate(header)}
    needed = [c.name for c in schema.features] + [
        schema.protected_column,
        schema.outcome_column,
    ]
    for name in needed:
        if name not in positions:
            raise SchemaError(f"{path}: column {name!r} missing from header")

    width = len(header)
    kept_rows = []
    dropped: list[int] = []
    for i, row in enumerate(rows):
        cells = [c.strip() for c in row]
        if len(cells) != width or any(cells[positions[n]] == "" for n in needed):
            dropped.append(i)
            continue
        if schema.protected_values:
            if cells[positions[schema.protected_column]] not in schema.protected_values:
                dropped.append(i)
                continue
        kept_rows.append((i, cells))
    if dropped:
        shown = ", ".join(str(i) for i in dropped[:10])
        more = "" if len(dropped) <= 10 else f" (+{len(dropped) - 10} more)"
        warnings.warn(
            f"{path}: dropped {len(dropped)} row(s) with missing or excluded "
            f"values at indices {shown}{more}",
            RuntimeWarning,
        )
    if not kept_rows:
        raise EmptyDatasetError(f"{path}: all rows were dropped")

    def parse_float(cells, name, row_index):
        raw = cells[positions[name]]
        try:
            return float(raw)
        except ValueError:
            raise ParseError(
                f"{path}: row {row_index}: cannot parse {raw!r} in column {name!r}",
                row=row_index,
            ) from None

    categories: dict[str, list[str]] = {}
    for col in schema.features:
        if col.kind == CATEGORICAL_KIND:
            seen = {cells[positions[col.name]] for _, cells in kept_rows}
            categories[col.name] = sorted(seen)

    columns = []
    names: list[str] = []
    for col in schema.features:
        if col.kind == CONTINUOUS_KIND:
            columns.append(
                [parse_float(cells, col.name, i) for i, cells in kept_rows]
            )
            names.append(col.name)
        else:
            cats = categories[col.name]
            for cat in cats:
                columns.append(
                    [
                        1.0 if cells[positions[col.name]] == cat else 0.0
                        for _, cells in kept_rows
                    ]
                )
                names.append(f"{col.name}={cat}")

    z = np.array(
        [
            1 if cells[positions[schema.protected_column]] == schema.protected_positive else 0
            for _, cells in kept_rows
        ]
    )
    if schema.outcome_kind == BINARY:
        y = np.array(
            [
                1.0 if cells[positions[schema.outcome_column]] == schema.outcome_positive else 0.0
                for _, cells in kept_rows
            ]
        )
    else:
        y = np.array(
            [parse_float(cells, schema.outcome_column, i) for i, cells in kept_rows]
        )

    return Dataset(
        X=np.column_stack(columns) if columns else np.empty((len(kept_rows), 0)),
        z=z,
        y=y,
        outcome=schema.outcome_kind,
        feature_names=tuple(names),
        meta={
            "source": str(path),
            "rows_read": len(rows),
            "rows_dropped": len(dropped),
            "categories": {k: tuple(v) for k, v in categories.items()},
        },
    )


def drop_reference_levels(dataset: Dataset) -> Dataset:
    """Remove the first one-hot column of each categorical block.

    Loaded datasets keep complete one-hot blocks (each summing to one), which
    are collinear with a regression intercept; fitting uses this reduced view
    with one reference level per block left implicit.
    """
    cats = dataset.meta.get("categories", {})
    drop = {f"{col}={values[0]}" for col, values in cats.items() if len(values) > 1}
    keep = [j for j, name in enumerate(dataset.feature_names) if name not in drop]
    if len(keep) == dataset.d:
        return dataset
    return Dataset(
        X=dataset.X[:, keep],
        z=dataset.z,
        y=dataset.y,
        outcome=dataset.outcome,
        feature_names=tuple(dataset.feature_names[j] for j in keep),
        meta=dict(dataset.meta),
    )


def save_csv(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset as CSV with floats at 17 significant digits.

    Feature columns keep their names; the protected and outcome columns are
    written as ``z`` and ``y``.  Round-tripping through :func:`load_csv` with
    :func:`synthetic_schema` reproduces continuous columns bit-exactly.
    """
    path = Path(path)
    header = list(dataset.feature_names) + ["z", "y"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [format(v, ".17g") for v in dataset.X[i]]
            row.append(str(int(dataset.z[i])))
            row.append(format(dataset.y[i], ".17g"))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# German Credit stand-in
# ---------------------------------------------------------------------------

_GERMAN_CATEGORIES = {
    "checking_status": ["lt0", "0to200", "ge200", "none"],
    "credit_history": ["none_paid", "all_paid", "existing_paid", "delayed", "critical"],
    "purpose": [
        "new_car",
        "used_car",
        "furniture",
        "radio_tv",
        "appliances",
        "repairs",
        "education",
        "retraining",
        "business",
        "other",
    ],
    "savings_status": ["lt100", "100to500", "500to1000", "ge1000", "unknown"],
    "employment": ["unemployed", "lt1", "1to4", "4to7", "ge7"],
    "other_parties": ["none", "co_applicant", "guarantor"],
    "property_magnitude": ["real_estate", "life_insurance", "car", "unknown"],
    "other_payment_plans": ["bank", "stores", "none"],
    "housing": ["rent", "own", "for_free"],
    "job": ["unskilled_nonres", "unskilled_res", "skilled", "management"],
    "own_telephone": ["none", "yes"],
    "foreign_worker": ["yes", "no"],
}

_GERMAN_CONTINUOUS = (
    "duration",
    "credit_amount",
    "installment_commitment",
    "residence_since",
    "age",
    "existing_credits",
    "num_dependents",
)


def german_credit_standin_rows(n: int = 1000, seed: int = 0) -> tuple[list[str], list[list[str]]]:
    """Synthetic stand-in with the German Credit schema (NOT the real data).

    1000 individuals, 20 attributes of mixed kind, gender protected, binary
    creditworthiness.  The outcome carries a small direct gender effect and
    several gender-correlated attributes, mimicking the structure that makes
    dropping the protected attribute leak through proxies.
    """
    rng = np.random.default_rng(seed)
    male = rng.random(n) < 0.69

    def pick(name, probs_male, probs_female):
        cats = _GERMAN_CATEGORIES[name]
        out = []
        for is_male in male:
            p = np.asarray(probs_male if is_male else probs_female, dtype=float)
            out.append(cats[rng.choice(len(cats), p=p / p.sum())])
        return out

    duration = np.round(rng.gamma(4.0, 5.0, n) + 4).clip(4, 72)
    amount = np.round(np.exp(rng.normal(7.8, 0.8, n))).clip(250, 20_000)
    installment = rng.integers(1, 5, n).astype(float)
    residence = rng.integers(1, 5, n).astype(float)
    age = np.round(rng.gamma(9.0, 4.0, n) + 18 - 15).clip(19, 75) + np.where(male, 2.0, 0.0)
    credits = rng.integers(1, 4, n).astype(float)
    dependents = (1.0 + (rng.random(n) < np.where(male, 0.2, 0.1))).astype(float)

    checking = pick(
        "checking_status", [0.25, 0.25, 0.1, 0.4], [0.35, 0.3, 0.05, 0.3]
    )
    history = pick(
        "credit_history", [0.05, 0.05, 0.5, 0.1, 0.3], [0.05, 0.05, 0.6, 0.1, 0.2]
    )
    purpose = pick(
        "purpose",
        [0.25, 0.12, 0.1, 0.25, 0.02, 0.02, 0.05, 0.01, 0.13, 0.05],
        [0.15, 0.05, 0.3, 0.3, 0.04, 0.02, 0.08, 0.01, 0.02, 0.03],
    )
    savings = pick(
        "savings_status", [0.55, 0.1, 0.07, 0.1, 0.18], [0.65, 0.12, 0.05, 0.04, 0.14]
    )
    employment = pick(
        "employment", [0.05, 0.15, 0.3, 0.2, 0.3], [0.1, 0.25, 0.35, 0.15, 0.15]
    )
    parties = pick("other_parties", [0.9, 0.04, 0.06], [0.9, 0.05, 0.05])
    property_ = pick(
        "property_magnitude", [0.3, 0.22, 0.33, 0.15], [0.2, 0.25, 0.3, 0.25]
    )
    plans = pick("other_payment_plans", [0.13, 0.05, 0.82], [0.15, 0.05, 0.8])
    housing = pick("housing", [0.15, 0.75, 0.1], [0.3, 0.6, 0.1])
    job = pick("job", [0.02, 0.18, 0.6, 0.2], [0.03, 0.27, 0.62, 0.08])
    phone = pick("own_telephone", [0.55, 0.45], [0.65, 0.35])
    foreign = pick("foreign_worker", [0.96, 0.04], [0.97, 0.03])

    checking_score = {"lt0": -0.9, "0to200": -0.3, "ge200": 0.4, "none": 0.8}
    savings_score = {"lt100": -0.4, "100to500": -0.1, "500to1000": 0.2, "ge1000": 0.5, "unknown": 0.2}
    history_score = {"none_paid": -0.8, "all_paid": -0.4, "existing_paid": 0.2, "delayed": -0.2, "critical": 0.5}

    score = (
        0.9
        - 0.035 * (duration - 20)
        - 0.00012 * (amount - 3000)
        + 0.018 * (age - 35)
        - 0.15 * (installment - 2.5)
        + np.array([checking_score[c] for c in checking])
        + np.array([savings_score[s] for s in savings])
        + np.array([history_score[h] for h in history])
        + 0.55 * male.astype(float)  # historical direct effect
    )
    good = rng.random(n) < 1.0 / (1.0 + np.exp(-score))

    header = [
        "checking_status",
        "duration",
        "credit_history",
        "purpose",
        "credit_amount",
        "savings_status",
        "employment",
        "installment_commitment",
        "other_parties",
        "residence_since",
        "property_magnitude",
        "age",
        "other_payment_plans",
        "housing",
        "existing_credits",
        "job",
        "num_dependents",
        "own_telephone",
        "foreign_worker",
        "gender",
        "class",
    ]
    rows = []
    for i in range(n):
        rows.append(
            [
                checking[i],
                format(duration[i], ".17g"),
                history[i],
                purpose[i],
                format(amount[i], ".17g"),
                savings[i],
                employment[i],
                format(installment[i], ".17g"),
                parties[i],
                format(residence[i], ".17g"),
                property_[i],
                format(age[i], ".17g"),
                plans[i],
                housing[i],
                format(credits[i], ".17g"),
                job[i],
                format(dependents[i], ".17g"),
                phone[i],
                foreign[i],
                "male" if male[i] else "female",
                "good" if good[i] else "bad",
            ]
        )
    return header, rows


def write_german_credit_standin(path: str | Path, n: int = 1000, seed: int = 0) -> None:
    """Write the German-Credit-shaped synthetic stand-in to a CSV file."""
    header, rows = german_credit_standin_rows(n, seed)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
