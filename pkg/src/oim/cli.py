"""Command-line interface: generate, fit, evaluate, experiment, report.

Exit codes: 0 success, 2 configuration/usage errors, 3 data errors, 4 numeric
failures, 5 I/O errors.  All randomness flows from the config's master seed
(or ``--seed``); there are no hidden entropy sources.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import ALGORITHM_NAMES, make_trainer
from .config import ExperimentConfig, load_config
from .dataset import BINARY, CONTINUOUS, Dataset
from .errors import ConfigError, DataError, OimError, exit_code_for
from .experiments import (
    SCENARIO_SPECS,
    draw_corr_sweep_cells,
    draw_glm_ensemble_cells,
    draw_labelflip_pair,
    draw_nonlinear_cells,
    draw_perturbed_x_cells,
    read_rows_csv,
    repeat_count,
    repeat_rng,
    derived_seed,
    resolve_schema,
    run_experiment,
    write_rows_csv,
)
from .manifest import RunManifest
from .metrics import (
    EvalReport,
    accuracy,
    binarize,
    cross_risk,
    disparities_expected,
    model_predictions,
)
from .mixture import HYPOTHESES
from .serialize import load_model, save_model, training_risk
from .synthdata import lipton_scenario
from .tabular import load_csv, save_csv, synthetic_schema


def _load_dataset(path: str, schema_arg: str | None, outcome: str | None) -> Dataset:
    if schema_arg is not None:
        return load_csv(path, resolve_schema(schema_arg))
    # Synthetic layout: features..., z, y with the outcome kind inferred
    # (binary iff every y value is 0 or 1) unless --outcome overrides.
    import csv as _csv

    with open(path, encoding="utf-8", newline="") as fh:
        header = next(_csv.reader(fh), None)
    if not header:
        raise DataError(f"{path}: file is empty")
    for col in ("z", "y"):
        if col not in header:
            raise DataError(
                f"{path}: synthetic layout needs '{col}' column; pass --schema otherwise"
            )
    features = [h for h in header if h not in ("z", "y")]
    if outcome is None:
        probe = load_csv(path, synthetic_schema(features, CONTINUOUS))
        outcome = BINARY if np.isin(probe.y, (0.0, 1.0)).all() else CONTINUOUS
    return load_csv(path, synthetic_schema(features, outcome))


_GENERATORS = {
    "corr-sweep": draw_corr_sweep_cells,
    "glm-ensemble": draw_glm_ensemble_cells,
    "missing-feature": draw_glm_ensemble_cells,
    "nonlinear-ensemble": draw_nonlinear_cells,
    "perturbed-x": draw_perturbed_x_cells,
}


def _tag_string(tags: dict) -> str:
    parts = []
    for key, value in tags.items():
        if isinstance(value, float):
            parts.append(f"{key}{value:g}")
        else:
            parts.append(f"{key}{value}")
    return "_".join(parts)


def cmd_generate(args) -> int:
    config = load_config(args.config).override(seed=args.seed, repeats=args.repeats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config=config.to_dict(), master_seed=config.seed)
    count = 0
    for repeat in range(repeat_count(config)):
        if config.scenario == "lipton":
            data = lipton_scenario(config.n, repeat_rng(config.seed, repeat))
            items = [(f"lipton_rep{repeat:04d}", [("data", data)])]
        elif config.scenario == "labelflip":
            pair, _ = draw_labelflip_pair(config, repeat)
            items = [
                (
                    f"labelflip_rep{repeat:04d}",
                    [("clean", pair.clean), ("perturbed", pair.perturbed)],
                )
            ]
        elif config.scenario in _GENERATORS:
            cells = _GENERATORS[config.scenario](config, repeat)
            items = [
                (
                    f"{_tag_string(tags)}_rep{repeat:04d}",
                    [("clean", pair.clean), ("perturbed", pair.perturbed)],
                )
                for tags, pair in cells
            ]
        else:
            raise ConfigError(
                f"scenario {config.scenario!r} has no dataset generator"
            )
        for stem, sides in items:
            for side, data in sides:
                suffix = f"_{side}" if side != "data" else ""
                path = out / f"{stem}{suffix}.csv"
                save_csv(data, path)
                manifest.record(path.name, path)
                count += 1
    manifest.finish()
    manifest.write(out / "manifest.yaml")
    print(f"wrote {count} dataset file(s) to {out}")
    return 0


def cmd_fit(args) -> int:
    data = _load_dataset(args.data, args.schema, args.outcome)
    mlp = None
    if args.hypothesis == "mlp":
        from .mlp import MlpConfig

        mlp = MlpConfig(seed=derived_seed(args.seed, 0, 101))
    trainer = make_trainer(args.algorithm, args.hypothesis, mlp)
    model = trainer(data)
    save_model(model, args.out)
    print(f"fitted {args.algorithm} ({args.hypothesis}); training risk "
          f"{training_risk(model):.6g}; model written to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    data = _load_dataset(args.data, args.schema, args.outcome)
    loss = args.loss or getattr(model, "loss", "quadratic")
    risk = cross_risk(data, model, loss)
    report_kwargs = {"cross_risk": risk}
    if data.outcome == BINARY:
        preds = model_predictions(model, data)
        decisions = preds if getattr(model, "emits_decisions", False) else binarize(preds)
        disp = disparities_expected(decisions, data.y, data.z)
        report_kwargs.update(
            accuracy=accuracy(decisions, data.y), dd=disp.dd, ppd=disp.ppd, fpd=disp.fpd
        )
    report = EvalReport(**report_kwargs)
    print(report.to_table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            yaml.safe_dump(report.to_dict(), fh, sort_keys=False)
    return 0


def cmd_experiment(args) -> int:
    config = load_config(args.config).override(seed=args.seed, repeats=args.repeats)
    if config.scenario != args.scenario:
        raise ConfigError(
            f"config declares scenario {config.scenario!r} but {args.scenario!r} was requested"
        )
    result = run_experiment(config, out_dir=args.out, jobs=args.jobs)
    print(
        f"{result.scenario}: {result.repeats_done} repeat(s), "
        f"{len(result.summary)} summary row(s) -> {args.out}"
    )
    return 0


def _render_table(rows: list[dict]) -> str:
    if not rows:
        return "(no rows)"
    cols = list(rows[0].keys())
    cells = [[_cell_text(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines)


def _cell_text(value) -> str:
    if isinstance(value, float):
        return format(value, ".4g")
    return str(value)


def cmd_report(args) -> int:
    results = Path(args.results)
    summary_path = results / "summary.csv"
    if not summary_path.exists():
        raise DataError(f"no results found in {results} (missing summary.csv)")
    rows = read_rows_csv(summary_path)
    if not rows:
        raise DataError(f"{summary_path}: summary is empty")
    if args.format == "plotdata":
        keep = [c for c in rows[0] if c not in ("std", "n_failed", "ci_method")]
        out_rows = [{k: r.get(k, "") for k in keep} for r in rows]
        if args.out:
            write_rows_csv(out_rows, Path(args.out))
            print(f"plot data written to {args.out}")
        else:
            import io

            buf = io.StringIO()
            import csv as _csv

            writer = _csv.DictWriter(buf, fieldnames=keep)
            writer.writeheader()
            for r in out_rows:
                writer.writerow({k: _cell_text(v) for k, v in r.items()})
            print(buf.getvalue(), end="")
    else:
        print(_render_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oim",
        description="Interventional-mixture learning and resilience evaluation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate dataset pairs from a config")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--repeats", type=int, default=None)
    gen.set_defaults(func=cmd_generate)

    fit = sub.add_parser("fit", help="fit one algorithm on a dataset file")
    fit.add_argument("data")
    fit.add_argument("--algorithm", required=True, choices=ALGORITHM_NAMES)
    fit.add_argument("--hypothesis", default="glm-logit", choices=HYPOTHESES)
    fit.add_argument("--out", required=True)
    fit.add_argument("--schema", default=None)
    fit.add_argument("--outcome", default=None, choices=(BINARY, CONTINUOUS))
    fit.add_argument("--seed", type=int, default=0)
    fit.set_defaults(func=cmd_fit)

    ev = sub.add_parser("evaluate", help="evaluate a saved model on a dataset file")
    ev.add_argument("model")
    ev.add_argument("data")
    ev.add_argument("--schema", default=None)
    ev.add_argument("--outcome", default=None, choices=(BINARY, CONTINUOUS))
    ev.add_argument("--loss", default=None, choices=("quadratic", "nll", "l1"))
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=cmd_evaluate)

    exp = sub.add_parser("experiment", help="run a scenario end to end")
    exp.add_argument("scenario", choices=tuple(SCENARIO_SPECS))
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", required=True)
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--repeats", type=int, default=None)
    exp.add_argument("--jobs", type=int, default=1)
    exp.set_defaults(func=cmd_experiment)

    rep = sub.add_parser("report", help="render results as a table or plot data")
    rep.add_argument("results")
    rep.add_argument("--format", default="table", choices=("table", "plotdata"))
    rep.add_argument("--out", default=None)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
