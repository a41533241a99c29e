"""Cross-validated experiments over classifiers, feature sets and pain levels.

Seeding scheme: an experiment seed ``s`` drives the fold assignment
directly; fold ``f`` trains its model with the seed
``SeedSequence([s, f]).generate_state(1)[0]``.
"""
import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, nn
from .data import PAIN_LABELS, ClassLabel, binary_view, kfold_split
from .errors import ExperimentError, PainMtlError, ValidationError
from .features import HRV_COLUMNS, N_FEATURES, SC_COLUMNS, apply_standardization, fit_standardization
from .signal import BandpassSpec

CLASSIFIERS = ("LR", "SVM-L", "ST-NN", "MT-NN")
UNAVAILABLE_CLASSIFIERS = ("SVM-RBF",)
TABLE_CLASSIFIERS = ("LR", "SVM-L", "SVM-RBF", "ST-NN", "MT-NN")
FEATURE_SETS = ("SC", "ECG", "SC+ECG")
FEATURE_SET_COLUMNS = {
    "SC": np.arange(N_FEATURES)[SC_COLUMNS],
    "ECG": np.arange(N_FEATURES)[HRV_COLUMNS],
    "SC+ECG": np.arange(N_FEATURES),
}
_CLASSIFIER_ALIASES = {"lr": "LR", "svm": "SVM-L", "svm-l": "SVM-L", "svml": "SVM-L",
                       "stnn": "ST-NN", "st-nn": "ST-NN", "mtnn": "MT-NN", "mt-nn": "MT-NN"}


def parse_classifier(name):
    key = str(name).strip().lower()
    if key in _CLASSIFIER_ALIASES:
        return _CLASSIFIER_ALIASES[key]
    raise ValidationError(f"unknown classifier {name!r}; choose from {', '.join(CLASSIFIERS)}")


def parse_feature_set(name):
    key = str(name).strip().upper()
    if key in FEATURE_SETS:
        return key
    raise ValidationError(f"unknown feature set {name!r}; choose from {', '.join(FEATURE_SETS)}")


@dataclass(frozen=True)
class ExperimentSpec:
    classifier: str
    feature_set: str
    task: ClassLabel
    k: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classifier", parse_classifier(self.classifier))
        object.__setattr__(self, "feature_set", parse_feature_set(self.feature_set))
        task = ClassLabel.parse(self.task)
        if task not in PAIN_LABELS:
            raise ValidationError("task must name a pain level P1..P4")
        object.__setattr__(self, "task", task)
        if int(self.k) != self.k or self.k < 2:
            raise ValidationError(f"k must be an integer >= 2, got {self.k}")


@dataclass(frozen=True)
class ExperimentSettings:
    """Model and preprocessing knobs shared by every experiment of a run."""
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    shared_width: int = 32
    task_width: int = 8
    l2: float = baselines.DEFAULT_L2
    c: float = baselines.DEFAULT_C
    tune: bool = False
    standardization: str = "fold"  # or "global"
    ecg_band: BandpassSpec = field(default_factory=BandpassSpec)

    def __post_init__(self):
        if self.standardization not in ("fold", "global"):
            raise ValidationError("standardization must be 'fold' or 'global'")


@dataclass(frozen=True)
class FoldResult:
    fold_index: int
    accuracy: float
    n_test: int


@dataclass(frozen=True)
class CvReport:
    spec: ExperimentSpec
    folds: tuple
    mean_acc: float
    std_acc: float
    n_invalid_hrv: int = 0

    @classmethod
    def from_folds(cls, spec, folds, n_invalid_hrv=0):
        acc = np.array([f.accuracy for f in folds])
        std = float(np.std(acc, ddof=1)) if acc.size > 1 else 0.0
        return cls(spec, tuple(folds), float(np.mean(acc)), std, n_invalid_hrv)


def fold_seed(seed, fold):
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def _fit_predict(spec, settings, x_tr, y_tr, s_tr, x_te, s_te, seed):
    if spec.classifier in ("LR", "SVM-L"):
        kind = "logistic" if spec.classifier == "LR" else "hinge"
        reg = settings.l2 if kind == "logistic" else settings.c
        if settings.tune:
            reg = baselines.tune_regularization(kind, x_tr, y_tr, seed=seed)
        trainer = baselines.train_logistic if kind == "logistic" else baselines.train_linear_svm
        return baselines.predict_linear(trainer(x_tr, y_tr, reg), x_te)
    if spec.classifier == "MT-NN":
        task_ids = tuple(dict.fromkeys(s_tr.tolist()))
        tr_tasks, te_tasks = s_tr, s_te
    else:
        task_ids = ("all",)
        tr_tasks, te_tasks = ["all"] * len(y_tr), ["all"] * len(s_te)
    net = nn.NetworkSpec(x_tr.shape[1], (settings.shared_width,), (settings.task_width,), task_ids)
    params, _ = nn.train(net, replace(settings.train, seed=seed), x_tr, y_tr, tr_tasks)
    return nn.predict_labels(params, net, x_te, te_tasks)


def run_experiment(spec, ds, settings=ExperimentSettings()):
    """k-fold cross-validated accuracy of one classifier on one binary task.

    Features are standardized with statistics fit on each fold's training
    rows (or once on the whole binary view with ``standardization='global'``).
    """
    if any(s.features is None for s in ds):
        ds = ds.with_features(settings.ecg_band)
    view = binary_view(ds, spec.task)
    folds = kfold_split(view, spec.k, spec.seed)
    values, mask = view.feature_matrix()
    cols = FEATURE_SET_COLUMNS[spec.feature_set]
    values, mask = values[:, cols], mask[:, cols]
    y = view.targets()
    subjects = view.subject_ids
    n_invalid = int(np.sum(~view.feature_matrix()[1][:, HRV_COLUMNS].all(axis=1)))

    global_stats = fit_standardization((values, mask)) if settings.standardization == "global" else None
    results = []
    for f, (tr, te) in enumerate(folds):
        try:
            stats = global_stats or fit_standardization((values[tr], mask[tr]))
            x_tr = apply_standardization((values[tr], mask[tr]), stats)
            x_te = apply_standardization((values[te], mask[te]), stats)
            pred = _fit_predict(spec, settings, x_tr, y[tr], subjects[tr], x_te, subjects[te],
                                fold_seed(spec.seed, f))
        except PainMtlError as exc:
            raise ExperimentError(f"{type(exc).__name__}: {exc}", fold=f) from exc
        results.append(FoldResult(f, float(np.mean(pred == y[te])), int(te.size)))
    return CvReport.from_folds(spec, results, n_invalid)


def sweep_specs(k=10, seed=0, tasks=None, classifiers=CLASSIFIERS, feature_sets=FEATURE_SETS):
    tasks = tuple(reversed(PAIN_LABELS)) if tasks is None else tasks
    return [ExperimentSpec(c, f, t, k, seed) for t in tasks for c in classifiers for f in feature_sets]


def _run_one(args):
    spec, ds, settings = args
    try:
        return run_experiment(spec, ds, settings)
    except PainMtlError as exc:
        return exc


def run_many(specs, ds, settings=ExperimentSettings(), jobs=1):
    """Run experiments, in parallel when ``jobs > 1``; results keep ``specs`` order.

    Failed experiments come back as exception instances instead of reports.
    """
    if any(s.features is None for s in ds):
        ds = ds.with_features(settings.ecg_band)
    work = [(s, ds, settings) for s in specs]
    if jobs <= 1 or len(work) <= 1:
        return [_run_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))


# ------------------------------------------------------------------ reports

def format_cell(mean, std):
    return f"{100 * mean:.2f}({100 * std:.2f})"


def report_table(reports, fmt="text", show_unavailable=False):
    """Render reports as a task by classifier by feature-set accuracy table.

    ``fmt='text'`` groups rows by task (P4 first) with one column per feature
    set; ``fmt='csv'`` emits one summary line per report.
    """
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", "classifier", "feature_set", "mean_acc", "std_acc", "n_folds", "cell"])
        for r in reports:
            w.writerow([f"BLN vs {r.spec.task.value}", r.spec.classifier, r.spec.feature_set,
                        repr(r.mean_acc), repr(r.std_acc), len(r.folds),
                        format_cell(r.mean_acc, r.std_acc)])
        return buf.getvalue()
    if fmt != "text":
        raise ValidationError(f"unknown report format {fmt!r}")

    cells = {(r.spec.task, r.spec.classifier, r.spec.feature_set): r for r in reports}
    lines = [f"{'Binary classification':<22}{'ML':<10}" + "".join(f"{f:>14}" for f in FEATURE_SETS)]
    lines.append("-" * len(lines[0]))
    for task in reversed(PAIN_LABELS):
        present = [c for c in TABLE_CLASSIFIERS
                   if any((task, c, f) in cells for f in FEATURE_SETS)]
        if not present:
            continue
        if show_unavailable:
            present = [c for c in TABLE_CLASSIFIERS if c in present or c in UNAVAILABLE_CLASSIFIERS]
        for i, clf in enumerate(present):
            row = f"{(f'BLN vs {task.value}' if i == 0 else ''):<22}{clf:<10}"
            for f in FEATURE_SETS:
                if clf in UNAVAILABLE_CLASSIFIERS:
                    cell = "n/a"
                elif (task, clf, f) in cells:
                    r = cells[(task, clf, f)]
                    cell = format_cell(r.mean_acc, r.std_acc)
                else:
                    cell = "-"
                row += f"{cell:>14}"
            lines.append(row)
    return "\n".join(lines) + "\n"


def folds_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "classifier", "feature_set", "fold", "accuracy"])
    for r in reports:
        for f in r.folds:
            w.writerow([r.spec.task.value, r.spec.classifier, r.spec.feature_set,
                        f.fold_index, repr(f.accuracy)])
    return buf.getvalue()


def summary_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "classifier", "feature_set", "k", "seed", "mean_acc", "std_acc",
                "n_test", "n_invalid_hrv"])
    for r in reports:
        w.writerow([r.spec.task.value, r.spec.classifier, r.spec.feature_set, r.spec.k,
                    r.spec.seed, repr(r.mean_acc), repr(r.std_acc),
                    sum(f.n_test for f in r.folds), r.n_invalid_hrv])
    return buf.getvalue()


def write_results(reports, directory):
    """Write ``folds.csv`` and ``summary.csv`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, text in (("folds.csv", folds_csv(reports)), ("summary.csv", summary_csv(reports))):
        path = os.path.join(directory, name)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(text)
        paths.append(path)
    return paths
