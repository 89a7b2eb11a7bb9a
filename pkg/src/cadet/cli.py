"""Command line entry point.

Subcommands mirror the workflow: gen-survey makes a synthetic background
survey, learn fits the background and window-regression models from it,
run executes the Monte Carlo experiment, report re-derives the summary
tables from an existing replicates.csv.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .background import (
    build_background_model,
    estimate_prior,
    generate_survey,
    load_model,
    read_survey_csv,
    save_model,
    write_survey_csv,
)
from .config import ExperimentConfig
from .errors import CadetError, DataError
from .harness import read_replicates_csv, run_experiment, write_summaries
from .scoring import cew_model_doc, cew_model_from_doc, fit_cew


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_file(path) if path else ExperimentConfig()


def cmd_gen_survey(args) -> int:
    config = _load_config(args.config)
    observations = generate_survey(config.survey_config())
    write_survey_csv(args.out, observations)
    print(f"wrote {len(observations)} observations to {args.out}")
    return 0


def cmd_learn(args) -> int:
    config = _load_config(args.config)
    observations = read_survey_csv(args.survey)
    n_bins = observations[0].spectrum.n_bins
    if n_bins != config.n_bins:
        raise DataError(
            f"survey has {n_bins} bins but the config declares {config.n_bins}"
        )
    prior = estimate_prior(observations)
    model = build_background_model(observations, prior, radius_m=config.radius_m)
    window = config.window()
    cew = fit_cew([o.spectrum for o in observations], window)
    save_model(
        args.out,
        model,
        extra={"cew": cew_model_doc(cew), "experiment_config": config.to_dict()},
    )
    print(
        f"learned background model at {model.n_locations} locations "
        f"and a {window.size}-bin window regression; wrote {args.out}"
    )
    return 0


def _load_models(model_path, config: ExperimentConfig):
    model, doc = load_model(model_path)
    if "cew" not in doc:
        raise DataError(f"{model_path}: model file lacks the window regression section")
    cew = cew_model_from_doc(doc["cew"])
    if cew.n_bins != config.n_bins:
        raise DataError(
            f"model was trained with {cew.n_bins} bins, config declares {config.n_bins}"
        )
    expected = config.window()
    if not (
        cew.window.size == expected.size
        and (cew.window.bins == expected.bins).all()
    ):
        raise DataError(
            "model window does not match the configured template; "
            "re-run learn with this config"
        )
    return model, cew


def cmd_run(args) -> int:
    config = _load_config(args.config)
    overrides = {}
    if args.replicates is not None:
        overrides["replicates_per_band"] = args.replicates
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.methods is not None:
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if overrides:
        config = dataclasses.replace(config, **overrides)
    model, cew = _load_models(args.model, config)
    records = run_experiment(
        config, model, cew, args.out, workers=args.workers, dump_maps=args.dump_maps
    )
    print(
        f"ran {len(records)} replicates over {len(config.bands)} bands; "
        f"results in {args.out}"
    )
    return 0


def cmd_report(args) -> int:
    rows = read_replicates_csv(Path(args.in_dir) / "replicates.csv")
    write_summaries(rows, args.out, fpr_target=args.fpr)
    print(f"summaries written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cadet",
        description="Masked vs unmasked drive-by detection simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-survey", help="generate a synthetic background survey")
    p.add_argument("--config", help="JSON or YAML experiment config")
    p.add_argument("--out", required=True, help="survey CSV to write")
    p.set_defaults(func=cmd_gen_survey)

    p = sub.add_parser("learn", help="fit background and window models from a survey")
    p.add_argument("--survey", required=True, help="survey CSV from gen-survey")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--config", help="JSON or YAML experiment config")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("run", help="run the Monte Carlo experiment")
    p.add_argument("--config", help="JSON or YAML experiment config")
    p.add_argument("--model", required=True, help="model file from learn")
    p.add_argument("--out", required=True, help="results directory")
    p.add_argument("--replicates", type=int, help="override replicates per band")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--methods", help="comma list from mBA,uBA,mWC,uWC")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument(
        "--dump-maps", action="store_true",
        help="export score maps of each band's first replicate",
    )
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="re-derive summary tables from replicates.csv")
    p.add_argument("--in", dest="in_dir", required=True, help="results directory")
    p.add_argument("--out", required=True, help="directory for the summary files")
    p.add_argument("--fpr", type=float, default=0.001, help="FPR operating point")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CadetError as exc:
        print(f"cadet: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
