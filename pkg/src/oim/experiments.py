"""Scenario runners: synthetic and tabular studies at desk scale.

Every experiment is reproducible bit-for-bit given (config, seed).  The
repeat with index i draws all of its randomness from
``numpy.random.default_rng([master_seed, i, ...])`` — a documented counter
scheme that makes repeats independent and re-runnable in isolation.  Repeats
run in a process pool when ``jobs > 1``; aggregation is a single-threaded
reduce with bootstrap confidence intervals.

When an output directory is given, each repeat's rows are written to their own
CSV and recorded in the run manifest as soon as they finish, so an interrupted
run resumes by checksum instead of recomputing.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .baselines import Trainer, make_trainer
from .config import ExperimentConfig
from .dataset import BINARY, Dataset, DatasetPair
from .errors import ConfigError, DegenerateProtectedError, TrainingDivergenceError
from .glm import GlmModel, NLL, QUADRATIC
from .manifest import RunManifest
from .metrics import (
    binarize,
    bootstrap_ci,
    cross_risk,
    disparities_expected,
    misclassification_risk,
    model_predictions,
    relative_utility,
    resilience,
)
from .mixture import OimModel
from .synthdata import (
    BERNOULLI_LOGISTIC,
    NORMAL_IDENTITY,
    OutcomeSpec,
    PerturbationSpec,
    correlation_with_protected,
    flip_labels,
    four_group_scenario,
    generate_pair,
    hire_probability,
    lipton_scenario,
    random_correlation_matrix,
    sample_features,
)
from .tabular import SchemaSpec, drop_reference_levels, load_csv

CI_METHOD = "bootstrap-percentile-1000"
REFERENCE_ALGORITHM = "traditional-without-z"
CLEAN_REFERENCE = "traditional-clean"


def repeat_rng(seed: int, *key: int) -> np.random.Generator:
    """The documented counter scheme: rng for repeat i is default_rng([seed, i])."""
    return np.random.default_rng([seed, *key])


def derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def loss_for(hypothesis: str, outcome: str) -> str:
    if hypothesis == "glm-identity":
        return QUADRATIC
    if hypothesis == "glm-logit":
        return NLL
    return NLL if outcome == BINARY else QUADRATIC


def family_for(hypothesis: str) -> str:
    return NORMAL_IDENTITY if hypothesis == "glm-identity" else BERNOULLI_LOGISTIC


def _trainer(config: ExperimentConfig, name: str, hypothesis: str, repeat: int) -> Trainer:
    mlp = None
    if hypothesis == "mlp":
        mlp = config.mlp_config(seed=derived_seed(config.seed, repeat, 101))
    return make_trainer(name, hypothesis, mlp)


def _check_binary_algorithms(config: ExperimentConfig):
    if config.hypothesis == "glm-identity" and "eq-odds" in config.algorithms:
        raise ConfigError("eq-odds requires a binary outcome; use glm-logit or mlp")


# ---------------------------------------------------------------------------
# Dataset drawing per scenario (shared by the runners and `oim generate`)
# ---------------------------------------------------------------------------


def draw_corr_sweep_cells(config: ExperimentConfig, repeat: int):
    cells = []
    family = family_for(config.hypothesis)
    spec = OutcomeSpec(family=family, coefficients=[1.0, 0.0])
    for bi, beta in enumerate(config.betas):
        for ri, rho in enumerate(config.correlations):
            rng = repeat_rng(config.seed, repeat, bi, ri)
            sigma = correlation_with_protected(2, rho)
            X, z = sample_features(config.n, sigma, rng)
            pert = PerturbationSpec(kind="direct", protected_coefficient=beta)
            pair = generate_pair(X, z, spec, pert, rng)
            cells.append(({"beta": beta, "correlation": rho}, pair))
    return cells


def _random_glm_specs(rng: np.random.Generator, family: str):
    alpha = rng.uniform(-5.0, 5.0, size=2)
    alpha_tilde = rng.uniform(-5.0, 5.0, size=2)
    beta = rng.uniform(-5.0, 5.0)
    clean = OutcomeSpec(family=family, coefficients=alpha)
    perturbations = {
        "none": PerturbationSpec(kind="none"),
        "direct": PerturbationSpec(kind="direct", protected_coefficient=beta),
        "induced": PerturbationSpec(
            kind="induced",
            replacement=OutcomeSpec(family=family, coefficients=alpha_tilde),
        ),
    }
    return clean, perturbations


def draw_glm_ensemble_cells(config: ExperimentConfig, repeat: int):
    rng = repeat_rng(config.seed, repeat)
    family = family_for(config.hypothesis)
    sigma = random_correlation_matrix(3, rng)
    clean, perturbations = _random_glm_specs(rng, family)
    X, z = sample_features(config.n, sigma, rng)
    cells = []
    for kind in config.perturbations:
        pair = generate_pair(X, z, clean, perturbations[kind], rng)
        cells.append(({"perturbation": kind}, pair))
    return cells


def draw_nonlinear_cells(config: ExperimentConfig, repeat: int):
    rng = repeat_rng(config.seed, repeat)
    sigma = random_correlation_matrix(3, rng)
    params = (rng.uniform(-5.0, 5.0),)
    if config.nonlinear_form != "product":
        params = (params[0], rng.uniform(-5.0, 5.0))
    beta = rng.uniform(-5.0, 5.0)
    clean = OutcomeSpec(
        family=BERNOULLI_LOGISTIC,
        nonlinear_form=config.nonlinear_form,
        nonlinear_params=params,
    )
    X, z = sample_features(config.n, sigma, rng)
    pair = generate_pair(
        X, z, clean, PerturbationSpec(kind="direct", protected_coefficient=beta), rng
    )
    return [({"perturbation": "direct"}, pair)]


def draw_perturbed_x_cells(config: ExperimentConfig, repeat: int):
    rng = repeat_rng(config.seed, repeat)
    family = family_for(config.hypothesis)
    z = rng.choice([-1, 1], size=config.n)
    x2 = rng.standard_normal(config.n)
    X = np.column_stack([np.zeros(config.n), x2])
    gamma = rng.uniform(-2.0, 2.0)
    beta_x = rng.uniform(-5.0, 5.0)
    alpha = rng.uniform(-5.0, 5.0, size=2)
    fspec = OutcomeSpec(
        family=NORMAL_IDENTITY, coefficients=[gamma], protected_coefficient=beta_x
    )
    clean = OutcomeSpec(family=family, coefficients=alpha)
    pert = PerturbationSpec(
        kind="feature-perturbation", feature_index=0, feature_spec=fspec
    )
    pair = generate_pair(X, z, clean, pert, rng)
    return [({"perturbation": "feature"}, pair)]


def draw_labelflip_pair(config: ExperimentConfig, repeat: int):
    rng = repeat_rng(config.seed, repeat)
    clean = four_group_scenario(config.n, rng)
    flipped = flip_labels(clean.y, clean.z, (1, 1), config.flip_fraction, rng)
    perturbed = clean.with_outcome(flipped, perturbation="label-flip")
    pair = DatasetPair(clean=clean, perturbed=perturbed, kind="label-flip")
    test = four_group_scenario(config.test_n, rng)
    return pair, test


# ---------------------------------------------------------------------------
# Per-repeat row computation
# ---------------------------------------------------------------------------


def _resilience_rows(config, repeat, cells, hypothesis=None):
    hypothesis = hypothesis or config.hypothesis
    rows = []
    for tags, pair in cells:
        loss = loss_for(hypothesis, pair.clean.outcome)
        reference = _trainer(config, REFERENCE_ALGORITHM, hypothesis, repeat)
        for name in config.algorithms:
            trainer = _trainer(config, name, hypothesis, repeat)
            value = resilience(pair, trainer, reference, loss)
            rows.append(
                {
                    **tags,
                    "repeat": repeat,
                    "algorithm": name,
                    "resilience": value,
                }
            )
    return rows


def corr_sweep_repeat(config: ExperimentConfig, repeat: int) -> list[dict]:
    _check_binary_algorithms(config)
    return _resilience_rows(config, repeat, draw_corr_sweep_cells(config, repeat))


def glm_ensemble_repeat(config: ExperimentConfig, repeat: int) -> list[dict]:
    _check_binary_algorithms(config)
    return _resilience_rows(config, repeat, draw_glm_ensemble_cells(config, repeat))


def nonlinear_ensemble_repeat(config: ExperimentConfig, repeat: int) -> list[dict]:
    [(tags, pair)] = draw_nonlinear_cells(config, repeat)
    loss = NLL
    values: dict[tuple[str, str], float] = {}
    for name, hypothesis in config.comparisons:
        reference = _trainer(config, REFERENCE_ALGORITHM, hypothesis, repeat)
        trainer = _trainer(config, name, hypothesis, repeat)
        try:
            values[(name, hypothesis)] = resilience(pair, trainer, reference, loss)
        except TrainingDivergenceError:
            continue
    anchor = values.get(("oim", "mlp"))
    rows = []
    for (name, hypothesis), value in values.items():
        row = {
            **tags,
            "repeat": repeat,
            "algorithm": name,
            "hypothesis": hypothesis,
            "resilience": value,
        }
        if anchor is not None and anchor > 0:
            row["ratio"] = value / anchor
        rows.append(row)
    return rows


def missing_feature_repeat(config: ExperimentConfig, repeat: int) -> list[dict]:
    _check_binary_algorithms(config)
    cells = draw_glm_ensemble_cells(config, repeat)
    hypothesis = config.hypothesis
    rows = []
    for tags, pair in cells:
        loss = loss_for(hypothesis, pair.clean.outcome)
        if not 0 <= config.removed_feature < pair.clean.d:
            raise ConfigError(
                f"removed_feature {config.removed_feature} out of range"
            )
        clean_reduced = pair.clean.drop_feature(config.removed_feature)
        perturbed_reduced = pair.perturbed.drop_feature(config.removed_feature)
        # Numerator: the unperturbed world keeps every attribute.
        reference = _trainer(config, REFERENCE_ALGORITHM, hypothesis, repeat)
        numerator = cross_risk(pair.clean, reference(pair.clean), loss)
        for name in config.algorithms:
            trainer = _trainer(config, name, hypothesis, repeat)
            model = trainer(perturbed_reduced)
            denominator = cross_risk(clean_reduced, model, loss)
            if numerator < 1e-9:
                value = (numerator + 1e-9) / (denominator + 1e-9)
            else:
                value = numerator / denominator
            rows.append(
                {
                    **tags,
                    "repeat": repeat,
                    "algorithm": name,
                    "resilience": value,
                }
            )
    return rows


def perturbed_x_repeat(config: ExperimentConfig, repeat: int) -> list[dict]:
    [(tags, pair)] = draw_perturbed_x_cells(config, repeat)
    hypothesis = config.hypothesis
    loss = loss_for(hypothesis, pair.clean.outcome)
    reference = _trainer(config, REFERENCE_ALGORITHM, hypothesis, repeat)
    rows = []
    for name in config.algorithms:
        trainer = _trainer(config, name, hypothesis, repeat)
        value = resilience(pair, trainer, reference, loss)
        row = {
            **tags,
            "repeat": repeat,
            "algorithm": name,
            "resilience": value,
        }
        if name == "chained-oim":
            model = trainer(pair.perturbed)
            corrected = model.correct_feature(pair.perturbed.X, pair.perturbed.z)
            row["stage1_corr"] = float(
                np.corrcoef(corrected, pair.perturbed.z)[0, 1]
            )
        rows.append(row)
    return rows


def _decision_boundary(model) -> tuple[float, float, float] | None:
    """Coefficients (w_hair, w_work, c) of the 0.5 decision line, if linear."""
    if isinstance(model, OimModel) and isinstance(model.full_model, GlmModel):
        full = model.full_model
        w = full.coefficients

        def mixed(s: float) -> float:
            vals = 1.0 / (1.0 + np.exp(-(s + full.protected_effects)))
            return float(vals @ model.mixing.weights)

        lo, hi = -100.0, 100.0
        for _ in range(200):
            mid = (lo + hi) / 2.0
            if mixed(mid) < 0.5:
                lo = mid
            else:
                hi = mid
        s_star = (lo + hi) / 2.0
        return float(w[0]), float(w[1]), float(full.intercept - s_star)
    if isinstance(model, GlmModel) and not model.uses_protected:
        return float(model.coefficients[0]), float(model.coefficients[1]), float(
            model.intercept
        )
    base = getattr(model, "base", None)
    if base is not None:
        return _decision_boundary(base)
    return None


def _hair_coefficient(model) -> float | None:
    if isinstance(model, OimModel):
        return _hair_coefficient(model.full_model)
    if isinstance(model, GlmModel):
        return float(model.coefficients[0])
    base = getattr(model, "base", None)
    return _hair_coefficient(base) if base is not None else None


def lipton_repeat(config: ExperimentConfig, repeat: int) -> list[dict]:
    # One dataset per seed; risks are evaluated on that dataset, so the
    # utility of a method is measured relative to the true process on the
    # same observations it trained on.
    rng = repeat_rng(config.seed, repeat)
    train = lipton_scenario(config.n, rng)
    true_probs = hire_probability(train.X[:, 1])
    reference_risk = float(np.mean((true_probs - train.y) ** 2))
    rows = []
    for name in config.algorithms:
        trainer = _trainer(config, name, config.hypothesis, repeat)
        model = trainer(train)
        preds = model_predictions(model, train)
        if getattr(model, "emits_decisions", False):
            # Randomized decisions: exact expected quadratic loss.
            method_risk = float(np.mean(train.y + preds * (1.0 - 2.0 * train.y)))
        else:
            method_risk = float(np.mean((preds - train.y) ** 2))
        row = {
            "repeat": repeat,
            "algorithm": name,
            "risk": method_risk,
            "relative_utility": relative_utility(reference_risk, method_risk),
        }
        hair = _hair_coefficient(model)
        if hair is not None:
            row["hair_coef"] = hair
        boundary = _decision_boundary(model)
        if boundary is not None:
            row["boundary_hair"], row["boundary_work"], row["boundary_offset"] = boundary
        rows.append(row)
    return rows


_GROUP_KEYS = (("zm1", -1, "y0", 0.0), ("zm1", -1, "y1", 1.0), ("zp1", 1, "y0", 0.0), ("zp1", 1, "y1", 1.0))


def _labelflip_metrics(model, test, repeat, name):
    q = model_predictions(model, test)
    if not getattr(model, "emits_decisions", False):
        q = binarize(q)
    report = disparities_expected(q, test.y, test.z)
    row = {
        "repeat": repeat,
        "algorithm": name,
        "cross_risk": misclassification_risk(q, test.y),
        "accuracy": 1.0 - misclassification_risk(q, test.y),
        "dd": report.dd,
        "ppd": report.ppd,
        "fpd": report.fpd,
    }
    for ztag, zlvl, ytag, ylvl in _GROUP_KEYS:
        m = (test.z == zlvl) & (test.y == ylvl)
        row[f"risk_{ztag}_{ytag}"] = misclassification_risk(q[m], test.y[m])
    return row


def labelflip_repeat(config: ExperimentConfig, repeat: int) -> list[dict]:
    _check_binary_algorithms(config)
    pair, test = draw_labelflip_pair(config, repeat)
    rows = []
    reference = _trainer(config, REFERENCE_ALGORITHM, config.hypothesis, repeat)
    rows.append(
        _labelflip_metrics(reference(pair.clean), test, repeat, CLEAN_REFERENCE)
    )
    for name in config.algorithms:
        trainer = _trainer(config, name, config.hypothesis, repeat)
        rows.append(_labelflip_metrics(trainer(pair.perturbed), test, repeat, name))
    return rows


def resolve_schema(spec: str | None) -> SchemaSpec:
    if spec is None:
        raise ConfigError("realdata requires a schema name or path")
    builtin = {"german-credit": "german_credit.yaml", "compas": "compas.yaml"}
    if spec in builtin:
        path = resources.files("oim.schemas") / builtin[spec]
        return SchemaSpec.from_yaml(path)
    return SchemaSpec.from_yaml(spec)


def _stratified_split(data: Dataset, fraction: float, rng: np.random.Generator):
    train_idx = []
    test_idx = []
    for zlvl in np.unique(data.z):
        for ylvl in np.unique(data.y):
            stratum = np.flatnonzero((data.z == zlvl) & (data.y == ylvl))
            if stratum.size == 0:
                continue
            perm = rng.permutation(stratum)
            cut = int(round(fraction * stratum.size))
            cut = min(max(cut, 1), stratum.size - 1) if stratum.size > 1 else 1
            train_idx.append(perm[:cut])
            test_idx.append(perm[cut:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return train, test


def realdata_repeat(config: ExperimentConfig, repeat: int) -> list[dict]:
    if config.dataset_path is None:
        raise ConfigError("realdata requires dataset_path")
    schema = resolve_schema(config.schema)
    # Fits use one reference level per one-hot block; full blocks are
    # collinear with the intercept.
    data = drop_reference_levels(load_csv(config.dataset_path, schema))
    if len(data.levels) < 2:
        raise DegenerateProtectedError(
            "protected column is constant; no report can be produced"
        )
    rng = repeat_rng(config.seed, repeat)
    train_idx, test_idx = _stratified_split(data, config.train_fraction, rng)
    train, test = data.subset(train_idx), data.subset(test_idx)
    rows = []
    for name in config.algorithms:
        trainer = _trainer(config, name, config.hypothesis, repeat)
        model = trainer(train)
        preds = model_predictions(model, test)
        decisions = preds if getattr(model, "emits_decisions", False) else binarize(preds)
        report = disparities_expected(decisions, test.y, test.z)
        rows.append(
            {
                "repeat": repeat,
                "algorithm": name,
                "accuracy": 1.0 - misclassification_risk(decisions, test.y),
                "dd": report.dd,
                "ppd": report.ppd,
                "fpd": report.fpd,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    repeat_fn: object
    group_cols: tuple[str, ...]
    value_cols: tuple[str, ...]


SCENARIO_SPECS = {
    "corr-sweep": ScenarioSpec(
        corr_sweep_repeat, ("beta", "correlation", "algorithm"), ("resilience",)
    ),
    "glm-ensemble": ScenarioSpec(
        glm_ensemble_repeat, ("perturbation", "algorithm"), ("resilience",)
    ),
    "nonlinear-ensemble": ScenarioSpec(
        nonlinear_ensemble_repeat,
        ("perturbation", "algorithm", "hypothesis"),
        ("resilience", "ratio"),
    ),
    "missing-feature": ScenarioSpec(
        missing_feature_repeat, ("perturbation", "algorithm"), ("resilience",)
    ),
    "perturbed-x": ScenarioSpec(
        perturbed_x_repeat,
        ("perturbation", "algorithm"),
        ("resilience", "stage1_corr"),
    ),
    "lipton": ScenarioSpec(
        lipton_repeat,
        ("algorithm",),
        ("relative_utility", "risk", "hair_coef", "boundary_hair", "boundary_work", "boundary_offset"),
    ),
    "labelflip": ScenarioSpec(
        labelflip_repeat,
        ("algorithm",),
        (
            "cross_risk",
            "accuracy",
            "dd",
            "ppd",
            "fpd",
            "risk_zm1_y0",
            "risk_zm1_y1",
            "risk_zp1_y0",
            "risk_zp1_y1",
        ),
    ),
    "realdata": ScenarioSpec(
        realdata_repeat, ("algorithm",), ("accuracy", "dd", "ppd", "fpd")
    ),
}


@dataclass
class ExperimentResult:
    scenario: str
    rows: list[dict]
    summary: list[dict]
    repeats_done: int
    manifest: RunManifest | None = None


def repeat_count(config: ExperimentConfig) -> int:
    return config.splits if config.scenario == "realdata" else config.repeats


def _format_cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _parse_cell(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def write_rows_csv(rows: list[dict], path: Path) -> None:
    field_order: list[str] = []
    for row in rows:
        for key in row:
            if key not in field_order:
                field_order.append(key)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=field_order, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format_cell(v) for k, v in row.items()})


def read_rows_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            rows.append(
                {k: _parse_cell(v) for k, v in raw.items() if v != ""}
            )
        return rows


def aggregate(
    rows: list[dict],
    group_cols: tuple[str, ...],
    value_cols: tuple[str, ...],
    repeats_done: int,
    seed: int,
) -> list[dict]:
    """Long-format summary: one row per (group, metric) with mean, std, CI."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(row.get(c) for c in group_cols)
        groups.setdefault(key, []).append(row)
    summary = []
    ci_rng = np.random.default_rng([seed, 0xA66])
    for key, members in groups.items():
        for metric in value_cols:
            values = np.array(
                [
                    float(r[metric])
                    for r in members
                    if metric in r and not math.isnan(float(r[metric]))
                ]
            )
            if values.size == 0:
                continue
            lo, hi = bootstrap_ci(values, rng=ci_rng)
            summary.append(
                {
                    **dict(zip(group_cols, key)),
                    "metric": metric,
                    "mean": float(values.mean()),
                    "std": float(values.std(ddof=1)) if values.size > 1 else 0.0,
                    "ci_low": lo,
                    "ci_high": hi,
                    "n_values": int(values.size),
                    "n_failed": repeats_done - int(values.size),
                    "ci_method": CI_METHOD,
                }
            )
    return summary


def _compute_repeat(args):
    scenario, config, index = args
    return index, SCENARIO_SPECS[scenario].repeat_fn(config, index)


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    jobs: int = 1,
    stop_after: int | None = None,
) -> ExperimentResult:
    """Run a scenario: per-repeat rows, aggregated summary, manifest.

    With ``out_dir`` set, completed repeats are persisted and checksummed as
    they finish; rerunning with the same directory resumes any repeat whose
    rows file still matches the manifest.  ``stop_after`` limits how many
    repeats are processed (used to exercise interruption and resume).
    """
    spec = SCENARIO_SPECS[config.scenario]
    total = repeat_count(config)
    todo = range(total if stop_after is None else min(stop_after, total))

    manifest = None
    rows_dir = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        rows_dir = out_dir / "rows"
        rows_dir.mkdir(parents=True, exist_ok=True)
        manifest_path = out_dir / "manifest.yaml"
        if manifest_path.exists():
            manifest = RunManifest.read(manifest_path)
            if manifest.config.get("scenario") != config.scenario or manifest.master_seed != config.seed:
                manifest = None
        if manifest is None:
            manifest = RunManifest(config=config.to_dict(), master_seed=config.seed)
        manifest.status = "incomplete"
        manifest.finished = None
        manifest.write(manifest_path)

    collected: dict[int, list[dict]] = {}
    pending = []
    for index in todo:
        stage = f"repeat-{index:04d}"
        if manifest is not None and manifest.is_complete(stage, out_dir):
            collected[index] = read_rows_csv(out_dir / manifest.stages[stage]["path"])
        else:
            pending.append(index)

    def _store(index: int, rows: list[dict]) -> None:
        collected[index] = rows
        if manifest is not None:
            rel = Path("rows") / f"repeat_{index:04d}.csv"
            write_rows_csv(rows, out_dir / rel)
            manifest.record(f"repeat-{index:04d}", rel)
            manifest.stages[f"repeat-{index:04d}"]["path"] = str(rel)
            manifest.write(out_dir / "manifest.yaml")

    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for index, rows in pool.map(
                _compute_repeat,
                [(config.scenario, config, i) for i in pending],
            ):
                _store(index, rows)
    else:
        for index in pending:
            _store(index, spec.repeat_fn(config, index))

    all_rows = [row for index in sorted(collected) for row in collected[index]]
    repeats_done = len(collected)
    summary = aggregate(
        all_rows, spec.group_cols, spec.value_cols, repeats_done, config.seed
    )
    if manifest is not None:
        summary_path = out_dir / "summary.csv"
        write_rows_csv(summary, summary_path)
        manifest.record("summary", Path("summary.csv"))
        if repeats_done == total:
            manifest.finish()
        manifest.write(out_dir / "manifest.yaml")
    return ExperimentResult(
        scenario=config.scenario,
        rows=all_rows,
        summary=summary,
        repeats_done=repeats_done,
        manifest=manifest,
    )
