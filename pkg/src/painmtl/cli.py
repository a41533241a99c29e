"""Command-line interface: ``painmtl synth | extract | run``.

Exit codes: 0 success, 1 I/O or input-file failure, 2 usage error,
3 experiment failure. A ``--config`` JSON file may supply defaults under the
keys ``synth``, ``train``, ``model`` and ``experiment``; explicit flags win.
The results directory defaults to ``$PAINMTL_RESULTS_DIR`` or ``./results``.
"""
import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

from . import __version__
from .data import (
    Dataset,
    SynthConfig,
    load_csv,
    save_csv,
    save_ground_truth,
    synthesize_dataset,
)
from .errors import ExperimentError, ParseError, PainMtlError, ValidationError
from .evaluation import (
    ExperimentSettings,
    ExperimentSpec,
    report_table,
    run_many,
    sweep_specs,
    write_results,
)
from .features import HRV_COLUMNS
from .nn import TrainConfig
from .signal import BandpassSpec

RESULTS_ENV = "PAINMTL_RESULTS_DIR"
RAW_NAME = "raw.csv"
FEATURES_NAME = "features.csv"
GROUND_TRUTH_NAME = "ground_truth.csv"

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_EXPERIMENT = 0, 1, 2, 3

CONFIG_SECTIONS = {
    "synth": {f.name for f in fields(SynthConfig)},
    "train": {f.name for f in fields(TrainConfig)},
    "model": {"shared_width", "task_width", "l2", "c", "tune", "standardization",
              "ecg_band", "ecg_order"},
    "experiment": {"classifier", "task", "feature_set", "k", "seed"},
}


class UsageError(Exception):
    pass


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _nonneg_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def _positive_float(text):
    value = _nonneg_float(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def load_config(path):
    """Read and validate a JSON config overlay; unknown keys are usage errors."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config {path}: top level must be an object")
    for section, values in doc.items():
        if section not in CONFIG_SECTIONS:
            raise UsageError(f"config {path}: unknown section {section!r}")
        if not isinstance(values, dict):
            raise UsageError(f"config {path}: section {section!r} must be an object")
        unknown = sorted(set(values) - CONFIG_SECTIONS[section])
        if unknown:
            raise UsageError(f"config {path}: unknown keys in {section!r}: {', '.join(unknown)}")
    return doc


def _pick(flag, config, section, key, default):
    if flag is not None:
        return flag
    return config.get(section, {}).get(key, default)


# ---------------------------------------------------------------- synth

def cmd_synth(args):
    cfg_doc = load_config(args.config)
    base = SynthConfig()
    cfg = SynthConfig(
        n_subjects=_pick(args.subjects, cfg_doc, "synth", "n_subjects", base.n_subjects),
        per_class=_pick(args.per_class, cfg_doc, "synth", "per_class", base.per_class),
        sample_rate_hz=_pick(args.sample_rate, cfg_doc, "synth", "sample_rate_hz", base.sample_rate_hz),
        effect_size=_pick(args.effect_size, cfg_doc, "synth", "effect_size", base.effect_size),
        subject_heterogeneity=_pick(args.heterogeneity, cfg_doc, "synth", "subject_heterogeneity",
                                    base.subject_heterogeneity),
        noise_sd=_pick(args.noise_sd, cfg_doc, "synth", "noise_sd", base.noise_sd),
        seed=_pick(args.seed, cfg_doc, "synth", "seed", base.seed),
        ecg_noise_sd=_pick(args.ecg_noise_sd, cfg_doc, "synth", "ecg_noise_sd", base.ecg_noise_sd),
    )
    try:
        cfg.validate()
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    ds, truth = synthesize_dataset(cfg)
    os.makedirs(args.out, exist_ok=True)
    save_csv(ds, os.path.join(args.out, RAW_NAME))
    save_ground_truth(truth, os.path.join(args.out, GROUND_TRUTH_NAME))
    print(f"wrote {len(ds)} samples ({len(ds.subjects)} subjects x 5 classes x {cfg.per_class}) "
          f"to {os.path.join(args.out, RAW_NAME)}")
    return EXIT_OK


# -------------------------------------------------------------- extract

def _resolve_input(path, prefer):
    if path is None:
        raise UsageError("--data is required")
    if os.path.isdir(path):
        for name in prefer:
            candidate = os.path.join(path, name)
            if os.path.exists(candidate):
                return candidate
        raise UsageError(f"{path} contains none of {', '.join(prefer)}")
    if not os.path.exists(path):
        raise UsageError(f"data path {path} does not exist")
    return path


def _extract_chunk(args):
    samples, band = args
    return Dataset(samples).with_features(band, overwrite=True).samples


def extract_dataset(ds, band, jobs=1):
    if jobs <= 1:
        return ds.with_features(band, overwrite=True)
    size = -(-len(ds) // jobs)
    chunks = [(ds.samples[i:i + size], band) for i in range(0, len(ds), size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_extract_chunk, chunks))
    return Dataset([s for part in parts for s in part], ds.positive)


def _band(args, cfg_doc):
    model = cfg_doc.get("model", {})
    low, high = args.ecg_band if args.ecg_band is not None else model.get("ecg_band", (0.1, 250.0))
    order = _pick(args.ecg_order, cfg_doc, "model", "ecg_order", 4)
    return BandpassSpec(float(low), float(high), int(order))


def cmd_extract(args):
    cfg_doc = load_config(args.config)
    src = _resolve_input(args.data, (RAW_NAME,))
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(src)), FEATURES_NAME)
    try:
        band = _band(args, cfg_doc)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    ds = load_csv(src)
    if not all(s.has_raw for s in ds):
        raise UsageError(f"{src} has samples without raw windows")
    ds = extract_dataset(ds, band, args.jobs)
    save_csv(ds, out, raw=False, features=True)
    invalid = sum(1 for s in ds if not s.features.validity_mask[HRV_COLUMNS].all())
    print(f"wrote features for {len(ds)} windows to {out}; {invalid} windows with invalid HRV")
    return EXIT_OK


# ------------------------------------------------------------------ run

def _settings(args, cfg_doc):
    base = TrainConfig()
    train = TrainConfig(
        learning_rate=_pick(args.learning_rate, cfg_doc, "train", "learning_rate", base.learning_rate),
        batch_size=_pick(args.batch_size, cfg_doc, "train", "batch_size", base.batch_size),
        max_epochs=_pick(args.max_epochs, cfg_doc, "train", "max_epochs", base.max_epochs),
        dropout_rate=_pick(args.dropout, cfg_doc, "train", "dropout_rate", base.dropout_rate),
        max_norm=_pick(args.max_norm, cfg_doc, "train", "max_norm", base.max_norm),
        patience=_pick(args.patience, cfg_doc, "train", "patience", base.patience),
        validation_fraction=_pick(args.validation_fraction, cfg_doc, "train",
                                  "validation_fraction", base.validation_fraction),
        optimizer=_pick(args.optimizer, cfg_doc, "train", "optimizer", base.optimizer),
        seed=cfg_doc.get("train", {}).get("seed", base.seed),
    )
    d = ExperimentSettings()
    return ExperimentSettings(
        train=train,
        shared_width=_pick(args.shared_width, cfg_doc, "model", "shared_width", d.shared_width),
        task_width=_pick(args.task_width, cfg_doc, "model", "task_width", d.task_width),
        l2=_pick(args.l2, cfg_doc, "model", "l2", d.l2),
        c=_pick(args.c, cfg_doc, "model", "c", d.c),
        tune=bool(args.tune or cfg_doc.get("model", {}).get("tune", False)),
        standardization=_pick(args.standardization, cfg_doc, "model", "standardization",
                              d.standardization),
        ecg_band=_band(args, cfg_doc),
    )


def _specs(args, cfg_doc):
    k = _pick(args.k, cfg_doc, "experiment", "k", 10)
    seed = _pick(args.seed, cfg_doc, "experiment", "seed", 0)
    if args.sweep:
        return sweep_specs(k=k, seed=seed)
    spec_args = {
        "classifier": _pick(args.classifier, cfg_doc, "experiment", "classifier", None),
        "task": _pick(args.task, cfg_doc, "experiment", "task", None),
        "feature_set": _pick(args.features, cfg_doc, "experiment", "feature_set", None),
    }
    missing = [f"--{'features' if key == 'feature_set' else key}"
               for key, value in spec_args.items() if value is None]
    if missing:
        raise UsageError(f"missing {', '.join(missing)} (or use --sweep)")
    return [ExperimentSpec(k=k, seed=seed, **spec_args)]


def cmd_run(args):
    cfg_doc = load_config(args.config)
    src = _resolve_input(args.data, (FEATURES_NAME, RAW_NAME))
    try:
        settings, specs = _settings(args, cfg_doc), _specs(args, cfg_doc)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None

    ds = load_csv(src)
    if any(s.features is None for s in ds):
        ds = extract_dataset(ds, settings.ecg_band, args.jobs)
    outcomes = run_many(specs, ds, settings, jobs=args.jobs)
    reports = [o for o in outcomes if not isinstance(o, Exception)]
    failures = [(s, o) for s, o in zip(specs, outcomes) if isinstance(o, Exception)]

    results_dir = args.results or os.environ.get(RESULTS_ENV) or "results"
    write_results(reports, results_dir)
    sys.stdout.write(report_table(reports, show_unavailable=args.sweep))
    for spec, exc in failures:
        print(f"experiment {spec.classifier}/{spec.feature_set}/BLN vs {spec.task.value} "
              f"failed: {exc}", file=sys.stderr)
    print(f"results written to {results_dir}", file=sys.stderr)
    return EXIT_EXPERIMENT if failures else EXIT_OK


# --------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="painmtl",
        description="Pain recognition from skin conductance and ECG with multi-task networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic raw dataset with ground truth")
    p.add_argument("--out", required=True, help="output directory (raw.csv, ground_truth.csv)")
    p.add_argument("--subjects", type=_positive_int, help="number of subjects (default 10)")
    p.add_argument("--per-class", type=_positive_int, help="windows per subject and class (default 20)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--effect-size", type=_nonneg_float, help="class separation strength (default 1.0)")
    p.add_argument("--heterogeneity", type=_nonneg_float,
                   help="per-subject response spread; 1 gives opposed polarities (default 0)")
    p.add_argument("--noise-sd", type=_nonneg_float, help="SC noise s.d. in uS (default 0.1)")
    p.add_argument("--ecg-noise-sd", type=_nonneg_float, help="ECG noise s.d. in mV (default 0.02)")
    p.add_argument("--sample-rate", type=_positive_float, help="sample rate in Hz (default 512)")
    p.add_argument("--config", help="JSON config overlay")
    p.set_defaults(func=cmd_synth)

    band_help = "ECG bandpass edges in Hz (default 0.1 250)"
    p = sub.add_parser("extract", help="compute the 17 features of every raw window")
    p.add_argument("--data", required=True, help="raw CSV, or a directory containing raw.csv")
    p.add_argument("--out", help="feature CSV path (default: features.csv next to the input)")
    p.add_argument("--ecg-band", type=_positive_float, nargs=2, metavar=("LOW", "HIGH"), help=band_help)
    p.add_argument("--ecg-order", type=_positive_int, help="ECG Butterworth order (default 4)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes (default 1)")
    p.add_argument("--config", help="JSON config overlay")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("run", help="cross-validate one experiment or the full sweep")
    p.add_argument("--data", help="feature or raw CSV, or a directory containing one")
    p.add_argument("--classifier", help="lr, svm, stnn or mtnn")
    p.add_argument("--task", help="positive pain level P1..P4 (against BLN)")
    p.add_argument("--features", help="sc, ecg or sc+ecg")
    p.add_argument("--k", type=_positive_int, help="number of folds (default 10)")
    p.add_argument("--seed", type=int, help="top-level seed (default 0)")
    p.add_argument("--sweep", action="store_true",
                   help="run every task x classifier x feature set combination")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes (default 1)")
    p.add_argument("--results", help=f"results directory (default ${RESULTS_ENV} or ./results)")
    p.add_argument("--learning-rate", type=_positive_float, help="Adam/SGD step size (default 1e-3)")
    p.add_argument("--batch-size", type=_positive_int, help="mini-batch size (default 32)")
    p.add_argument("--max-epochs", type=_positive_int, help="epoch cap (default 300)")
    p.add_argument("--dropout", type=_nonneg_float, help="dropout rate on hidden layers (default 0.2)")
    p.add_argument("--max-norm", type=_positive_float, help="max-norm bound (default 3.0)")
    p.add_argument("--patience", type=_positive_int, help="early-stopping patience (default 10)")
    p.add_argument("--validation-fraction", type=_positive_float,
                   help="held-out fraction per task (default 0.15)")
    p.add_argument("--optimizer", choices=("adam", "sgd"), help="optimizer (default adam)")
    p.add_argument("--shared-width", type=_positive_int, help="shared hidden width (default 32)")
    p.add_argument("--task-width", type=_positive_int, help="per-task hidden width (default 8)")
    p.add_argument("--l2", type=_nonneg_float, help="logistic regression L2 penalty (default 1e-3)")
    p.add_argument("--c", type=_positive_float, help="linear SVM hinge weight (default 1.0)")
    p.add_argument("--tune", action="store_true", help="3-fold grid search over l2 / c")
    p.add_argument("--standardization", choices=("fold", "global"),
                   help="fit feature scaling per training fold (default) or once globally")
    p.add_argument("--ecg-band", type=_positive_float, nargs=2, metavar=("LOW", "HIGH"), help=band_help)
    p.add_argument("--ecg-order", type=_positive_int, help="ECG Butterworth order (default 4)")
    p.add_argument("--config", help="JSON config overlay")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"painmtl {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExperimentError as exc:
        print(f"painmtl {args.command}: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    except (OSError, ParseError) as exc:
        print(f"painmtl {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, PainMtlError) as exc:
        print(f"painmtl {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
