"""Population (single-task) linear baselines: logistic regression and linear SVM."""
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteLoss, SingleClassData, ValidationError
from .nn import SCHEMA, SCHEMA_VERSION, check_document, sigmoid

DEFAULT_L2 = 1e-3
DEFAULT_C = 1.0
TUNING_GRID = (0.01, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class LinearConfig:
    max_iter: int = 10000
    tol: float = 1e-6
    seed: int = 0


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    kind: str  # "logistic" or "hinge"

    def decision_function(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.weights.shape[0]:
            raise DimensionMismatch(
                f"inputs have {x.shape[-1]} features, model expects {self.weights.shape[0]}")
        return x @ self.weights + self.bias


def _check_training_data(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch("expected an (n, d) matrix and n labels")
    if x.shape[0] < 2:
        raise ValidationError("need at least 2 training samples")
    if np.unique(y).size < 2:
        raise SingleClassData("training labels contain a single class")
    return x, y


def logistic_objective(w, b, x, y, l2):
    z = x @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))


def logistic_gradient(w, b, x, y, l2):
    r = sigmoid(x @ w + b) - y
    return x.T @ r / x.shape[0] + l2 * w, float(np.mean(r))


def train_logistic(x, y, l2=DEFAULT_L2, cfg=LinearConfig()):
    """Full-batch gradient descent on mean log-loss plus ``l2 * |w|^2 / 2``.

    Starts from zero and uses the fixed step ``1 / L`` with ``L`` the
    Lipschitz constant of the gradient, stopping once the gradient norm drops
    below ``cfg.tol``. The bias is not penalized.
    """
    x, y = _check_training_data(x, y)
    n, d = x.shape
    aug = np.hstack([x, np.ones((n, 1))])
    lipschitz = 0.25 * np.linalg.eigvalsh(aug.T @ aug / n)[-1] + l2
    step = 1.0 / lipschitz
    w, b = np.zeros(d), 0.0
    for it in range(cfg.max_iter):
        gw, gb = logistic_gradient(w, b, x, y, l2)
        if np.sqrt(gw @ gw + gb * gb) <= cfg.tol:
            break
        w = w - step * gw
        b = b - step * gb
        if not np.isfinite(b) or not np.all(np.isfinite(w)):
            raise NonFiniteLoss(f"logistic regression diverged at iteration {it}")
    return LinearModel(w, float(b), "logistic")


def svm_objective(w, b, x, y, c):
    s = 2.0 * y - 1.0
    return float(0.5 * (w @ w) + c * np.mean(np.maximum(0.0, 1.0 - s * (x @ w + b))))


def train_linear_svm(x, y, c=DEFAULT_C, cfg=LinearConfig(max_iter=2000)):
    """Subgradient descent on ``|w|^2 / 2 + c * mean hinge``.

    Step size ``1 / t``; the returned model is the average of the iterates
    from the second half of the run, which is what converges for a
    non-smooth strongly convex objective.
    """
    x, y = _check_training_data(x, y)
    n, d = x.shape
    s = 2.0 * y - 1.0
    w, b = np.zeros(d), 0.0
    w_avg, b_avg, count = np.zeros(d), 0.0, 0
    start_avg = cfg.max_iter // 2
    for t in range(1, cfg.max_iter + 1):
        active = s * (x @ w + b) < 1.0
        gw = w - c * (s[active] @ x[active]) / n
        gb = -c * float(np.sum(s[active])) / n
        w = w - gw / t
        b = b - gb / t
        if t > start_avg:
            count += 1
            w_avg += (w - w_avg) / count
            b_avg += (b - b_avg) / count
    if not np.isfinite(b_avg) or not np.all(np.isfinite(w_avg)):
        raise NonFiniteLoss("linear SVM diverged")
    return LinearModel(w_avg, float(b_avg), "hinge")


def predict_linear(model, x):
    """Class 0/1; a decision value of exactly 0 maps to class 1."""
    z = model.decision_function(x)
    if model.kind == "logistic":
        return (sigmoid(z) >= 0.5).astype(int) if np.ndim(z) else int(sigmoid(z) >= 0.5)
    return (z >= 0).astype(int) if np.ndim(z) else int(z >= 0)


def _stratified_folds(y, k, rng):
    fold = np.empty(y.shape[0], dtype=np.intp)
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = np.arange(idx.size) % k
    return fold


def tune_regularization(kind, x, y, grid=TUNING_GRID, k=3, seed=0):
    """Pick ``l2`` (logistic) or ``c`` (hinge) from ``grid`` by stratified k-fold accuracy."""
    x, y = _check_training_data(x, y)
    trainer = train_logistic if kind == "logistic" else train_linear_svm
    fold = _stratified_folds(y, k, np.random.default_rng(seed))
    best, best_acc = grid[0], -1.0
    for value in grid:
        accs = []
        for f in range(k):
            tr, te = fold != f, fold == f
            if np.unique(y[tr]).size < 2 or not te.any():
                continue
            model = trainer(x[tr], y[tr], value)
            accs.append(np.mean(predict_linear(model, x[te]) == y[te]))
        acc = float(np.mean(accs)) if accs else 0.0
        if acc > best_acc:
            best, best_acc = value, acc
    return best


def save_linear(path, model):
    doc = {"schema": SCHEMA, "version": SCHEMA_VERSION, "kind": model.kind,
           "params": {"weights": model.weights.tolist(), "bias": model.bias}}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_linear(path):
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    check_document(doc, ("logistic", "hinge"))
    return LinearModel(np.asarray(doc["params"]["weights"], dtype=np.float64),
                       float(doc["params"]["bias"]), doc["kind"])
