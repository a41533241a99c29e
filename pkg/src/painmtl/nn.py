"""Dense ReLU networks with hard parameter sharing, written against numpy.

A network is a stack of shared hidden layers followed, for every task, by a
private stack of hidden layers and a private sigmoid head. A single-task
network is the special case of one task id.

Private parameters of all tasks are stored stacked along a leading task
axis, so a mini-batch mixing many tasks is processed with gathers and
one-hot scatters instead of a Python loop over tasks.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyTask, NonFiniteLoss, UnknownTask, ValidationError

EPS = 1e-7
SCHEMA = "painmtl.model"
SCHEMA_VERSION = 1


@dataclass
class LayerParams:
    weights: np.ndarray
    biases: np.ndarray

    def copy(self):
        return LayerParams(self.weights.copy(), self.biases.copy())


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    shared_layers: tuple = (32,)
    task_layers: tuple = (8,)
    task_ids: tuple = ("all",)
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "shared_layers", tuple(int(w) for w in self.shared_layers))
        object.__setattr__(self, "task_layers", tuple(int(w) for w in self.task_layers))
        object.__setattr__(self, "task_ids", tuple(self.task_ids))
        if self.input_dim < 1 or any(w < 1 for w in self.shared_layers + self.task_layers):
            raise ValidationError("layer widths and input_dim must be positive")
        if not self.task_ids or len(set(self.task_ids)) != len(self.task_ids):
            raise ValidationError("task_ids must be non-empty and unique")
        if self.activation != "relu":
            raise ValidationError("only the rectified linear activation is supported")

    @property
    def n_tasks(self):
        return len(self.task_ids)

    def task_index(self, tasks):
        """Map task ids (scalar or sequence) to row indices of the stacked parameters."""
        lookup = {t: i for i, t in enumerate(self.task_ids)}
        scalar = np.ndim(tasks) == 0
        items = [tasks] if scalar else list(tasks)
        try:
            idx = np.array([lookup[t] for t in items], dtype=np.intp)
        except KeyError as exc:
            raise UnknownTask(f"unknown task {exc.args[0]!r}") from None
        return idx[0] if scalar else idx


@dataclass
class NetworkParams:
    shared: list
    task_layers: list   # weights (T, out, in), biases (T, out)
    head: LayerParams   # weights (T, 1, in), biases (T, 1)

    def arrays(self):
        out = []
        for layer in self.shared + self.task_layers + [self.head]:
            out += [layer.weights, layer.biases]
        return out

    def copy(self):
        return NetworkParams([l.copy() for l in self.shared],
                             [l.copy() for l in self.task_layers], self.head.copy())

    def zeros_like(self):
        g = self.copy()
        for a in g.arrays():
            a.fill(0.0)
        return g

    def task(self, spec, task_id):
        """(private layers, head) of one task as ordinary 2-D LayerParams views."""
        i = spec.task_index(task_id)
        layers = [LayerParams(l.weights[i], l.biases[i]) for l in self.task_layers]
        return layers, LayerParams(self.head.weights[i], self.head.biases[i])

    def n_parameters(self):
        return int(sum(a.size for a in self.arrays()))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 300
    dropout_rate: float = 0.2
    max_norm: float = 3.0
    patience: int = 10
    validation_fraction: float = 0.15
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValidationError("batch_size, max_epochs and patience must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise ValidationError("dropout_rate must be in [0, 1)")
        if not self.max_norm > 0:
            raise ValidationError("max_norm must be positive")
        if not 0 < self.validation_fraction < 1:
            raise ValidationError("validation_fraction must be in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError("optimizer must be 'adam' or 'sgd'")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


def init_params(spec, rng):
    """Fan-in scaled uniform weights (limit ``sqrt(6 / fan_in)``), zero biases."""
    def uniform(shape, fan_in):
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape)

    t = spec.n_tasks
    shared, width = [], spec.input_dim
    for w in spec.shared_layers:
        shared.append(LayerParams(uniform((w, width), width), np.zeros(w)))
        width = w
    private = []
    for w in spec.task_layers:
        private.append(LayerParams(uniform((t, w, width), width), np.zeros((t, w))))
        width = w
    head = LayerParams(uniform((t, 1, width), width), np.zeros((t, 1)))
    return NetworkParams(shared, private, head)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bce_loss(p, y, eps=EPS):
    """Binary cross-entropy with ``p`` clipped to ``[eps, 1 - eps]``."""
    p = np.clip(p, eps, 1.0 - eps)
    out = -(y * np.log(p) + (1 - y) * np.log(1.0 - p))
    return float(out) if np.ndim(out) == 0 else out


def _as_batch(spec, x, tasks):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != spec.input_dim:
        raise DimensionMismatch(f"inputs have {x.shape[1]} features, network expects {spec.input_dim}")
    t = spec.task_index(tasks)
    t = np.full(x.shape[0], t, dtype=np.intp) if np.ndim(t) == 0 else t
    if t.shape[0] != x.shape[0]:
        raise DimensionMismatch("one task id per input row is required")
    return x, t


def _forward(params, x, t, masks=None):
    """Forward pass; returns probabilities and the per-layer cache for backprop."""
    cache = []
    h = x
    k = 0
    for layer in params.shared:
        z = h @ layer.weights.T + layer.biases
        a = np.maximum(z, 0.0)
        m = None if masks is None else masks[k]
        if m is not None:
            a = a * m
        cache.append((h, z, m))
        h = a
        k += 1
    for layer in params.task_layers:
        w = layer.weights[t]
        z = np.einsum("boi,bi->bo", w, h) + layer.biases[t]
        a = np.maximum(z, 0.0)
        m = None if masks is None else masks[k]
        if m is not None:
            a = a * m
        cache.append((h, z, m))
        h = a
        k += 1
    logit = np.einsum("bi,bi->b", params.head.weights[t, 0], h) + params.head.biases[t, 0]
    return sigmoid(logit), cache, h


def forward(params, spec, x, task_id):
    """Inference-mode probability for a single feature vector."""
    x, t = _as_batch(spec, x, task_id)
    if x.shape[0] != 1:
        raise DimensionMismatch("forward takes one feature vector; use predict_proba for batches")
    return float(_forward(params, x, t)[0][0])


def predict_proba(params, spec, x, tasks):
    x, t = _as_batch(spec, x, tasks)
    return _forward(params, x, t)[0]


def mean_loss(params, spec, x, y, tasks, masks=None):
    x, t = _as_batch(spec, x, tasks)
    p = _forward(params, x, t, masks)[0]
    return float(np.mean(bce_loss(p, np.asarray(y, dtype=np.float64))))


def _unpack_batch(batch):
    if isinstance(batch, tuple) and len(batch) == 3 and np.ndim(batch[0]) == 2:
        return batch
    if not batch:
        raise ValidationError("batch is empty")
    xs, ys, ts = zip(*batch)
    return np.stack(xs), np.asarray(ys, dtype=np.float64), list(ts)


def backward(params, spec, batch, dropout_masks=None):
    """Gradient of the mean clipped BCE over ``batch``.

    ``batch`` is either ``(X, y, tasks)`` arrays or a list of ``(x, y, task)``
    items; ``dropout_masks`` holds one already-scaled ``(B, width)`` mask per
    hidden layer (shared first) or is None.
    """
    x, y, tasks = _unpack_batch(batch)
    x, t = _as_batch(spec, x, tasks)
    if x.shape[0] == 0:
        raise ValidationError("batch is empty")
    return _backward(params, x, np.asarray(y, dtype=np.float64), t, dropout_masks)[0]


def _backward(params, x, y, t, dropout_masks):
    b = x.shape[0]
    p, cache, h_top = _forward(params, x, t, dropout_masks)
    grads = params.zeros_like()
    onehot = np.zeros((b, params.head.weights.shape[0]))
    onehot[np.arange(b), t] = 1.0

    # d(clip(p))/dp vanishes outside the clipping interval
    inside = (p > EPS) & (p < 1.0 - EPS)
    dz = np.where(inside, p - y, 0.0) / b
    grads.head.weights[:, 0, :] = onehot.T @ (dz[:, None] * h_top)
    grads.head.biases[:, 0] = onehot.T @ dz
    dh = dz[:, None] * params.head.weights[t, 0]

    n_shared = len(params.shared)
    for j in reversed(range(len(params.task_layers))):
        layer, g = params.task_layers[j], grads.task_layers[j]
        h_in, z, m = cache[n_shared + j]
        dz = dh * (z > 0)
        if m is not None:
            dz = dz * m
        outer = dz[:, :, None] * h_in[:, None, :]
        g.weights[...] = (onehot.T @ outer.reshape(b, -1)).reshape(g.weights.shape)
        g.biases[...] = onehot.T @ dz
        dh = np.einsum("boi,bo->bi", layer.weights[t], dz)

    for j in reversed(range(n_shared)):
        layer, g = params.shared[j], grads.shared[j]
        h_in, z, m = cache[j]
        dz = dh * (z > 0)
        if m is not None:
            dz = dz * m
        g.weights[...] = dz.T @ h_in
        g.biases[...] = dz.sum(axis=0)
        dh = dz @ layer.weights
    return grads, p


def apply_max_norm(params, max_norm):
    """Rescale, in place, every unit's incoming weight row to norm <= ``max_norm``."""
    for layer in params.shared + params.task_layers + [params.head]:
        w = layer.weights
        norms = np.sqrt(np.sum(w * w, axis=-1, keepdims=True))
        # the slack keeps a second projection a no-op
        over = norms > max_norm * (1.0 + 1e-12)
        w *= np.where(over, max_norm / np.where(over, norms, 1.0), 1.0)
    return params


def max_row_norm(params):
    return max(float(np.sqrt(np.sum(l.weights ** 2, axis=-1)).max())
               for l in params.shared + params.task_layers + [params.head])


def dropout_masks(spec, batch_size, rate, rng):
    if rate == 0:
        return None
    keep = 1.0 - rate
    return [(rng.random((batch_size, w)) < keep) / keep
            for w in spec.shared_layers + spec.task_layers]


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.step_count = 0

    def step(self, params, grads):
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for a, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for a, g in zip(params.arrays(), grads.arrays()):
            a -= self.lr * g


def validation_split(t, y, fraction, rng, task_ids):
    """Hold out ``fraction`` of every (task, label) cell, at least one sample per task."""
    val = np.zeros(t.shape[0], dtype=bool)
    for task, name in enumerate(task_ids):
        members = np.flatnonzero(t == task)
        if members.size < 2:
            raise EmptyTask(
                f"task {name!r} has {members.size} training samples; need 2 for a validation split")
        chosen = []
        cells = [members[y[members] == lab] for lab in np.unique(y[members])]
        for cell in cells:
            cell = cell[rng.permutation(cell.size)]
            chosen.extend(cell[: int(round(fraction * cell.size))].tolist())
        if not chosen:
            biggest = max(cells, key=len)
            chosen.append(int(biggest[rng.integers(biggest.size)]))
        if len(chosen) == members.size:
            chosen.pop()
        val[chosen] = True
    return val


def train(spec, cfg, x, y, tasks):
    """Mini-batch training with dropout, max-norm projection and early stopping.

    A fraction of every task's samples (stratified by label) is held out for
    validation. Training stops once the validation loss has not improved for
    ``cfg.patience`` epochs and the best parameters seen are returned.
    ``TrainReport.val_loss[0]`` is the loss of the initial parameters.
    """
    x, t = _as_batch(spec, x, tasks)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != x.shape[0]:
        raise DimensionMismatch("one label per input row is required")
    missing = sorted(set(range(spec.n_tasks)) - set(t.tolist()))
    if missing:
        raise EmptyTask(f"task {spec.task_ids[missing[0]]!r} has no training samples")
    rng = np.random.default_rng(cfg.seed)
    val = validation_split(t, y, cfg.validation_fraction, rng, spec.task_ids)
    xt, yt, tt = x[~val], y[~val], t[~val]
    xv, yv, tv = x[val], y[val], t[val]

    params = init_params(spec, rng)
    apply_max_norm(params, cfg.max_norm)
    opt = _Adam(params, cfg.learning_rate) if cfg.optimizer == "adam" else _Sgd(params, cfg.learning_rate)

    def val_loss(p):
        return float(np.mean(bce_loss(_forward(p, xv, tv)[0], yv)))

    report = TrainReport()
    best = val_loss(params)
    report.val_loss.append(best)
    best_params, wait = params.copy(), 0
    n = xt.shape[0]
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = dropout_masks(spec, idx.size, cfg.dropout_rate, rng)
            grads, p = _backward(params, xt[idx], yt[idx], tt[idx], masks)
            total += float(np.sum(bce_loss(p, yt[idx])))
            opt.step(params, grads)
            apply_max_norm(params, cfg.max_norm)
        report.train_loss.append(total / n)
        current = val_loss(params)
        report.val_loss.append(current)
        report.stopped_epoch = epoch
        if not np.isfinite(current) or not np.isfinite(report.train_loss[-1]):
            raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}", epoch)
        if current < best:
            best, best_params, wait = current, params.copy(), 0
            report.best_epoch = epoch
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    return best_params, report


def predict_labels(params, spec, x, tasks):
    """Hard labels with the tie rule ``p >= 0.5 -> 1``."""
    return (predict_proba(params, spec, x, tasks) >= 0.5).astype(int)


def predict_accuracy(params, spec, x, y, tasks):
    y = np.asarray(y)
    if y.size == 0:
        raise ValidationError("empty test set")
    return float(np.mean(predict_labels(params, spec, x, tasks) == y))


# ------------------------------------------------------------ persistence

def _layer_doc(layer):
    return {"weights": layer.weights.tolist(), "biases": layer.biases.tolist()}


def _layer_from(doc):
    return LayerParams(np.asarray(doc["weights"], dtype=np.float64),
                       np.asarray(doc["biases"], dtype=np.float64))


def model_document(spec, params, cfg=None):
    return {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "kind": "mlp",
        "spec": {**asdict(spec), "shared_layers": list(spec.shared_layers),
                 "task_layers": list(spec.task_layers), "task_ids": list(spec.task_ids)},
        "train_config": None if cfg is None else asdict(cfg),
        "params": {
            "shared": [_layer_doc(l) for l in params.shared],
            "task_layers": [_layer_doc(l) for l in params.task_layers],
            "head": _layer_doc(params.head),
        },
    }


def check_document(doc, kind):
    if doc.get("schema") != SCHEMA:
        raise ValidationError(f"not a {SCHEMA} document")
    if doc.get("version") != SCHEMA_VERSION:
        raise ValidationError(f"unsupported model schema version {doc.get('version')}")
    if doc.get("kind") not in kind:
        raise ValidationError(f"expected a model of kind {kind}, got {doc.get('kind')!r}")


def save_model(path, spec, params, cfg=None):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_document(spec, params, cfg), f)


def load_model(path):
    """Return ``(spec, params, cfg)``; cfg is None if it was not saved."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    check_document(doc, ("mlp",))
    spec = NetworkSpec(**doc["spec"])
    p = doc["params"]
    params = NetworkParams([_layer_from(l) for l in p["shared"]],
                           [_layer_from(l) for l in p["task_layers"]], _layer_from(p["head"]))
    # an empty hidden stack round-trips through JSON with lost trailing dims
    params.head.weights = params.head.weights.reshape(spec.n_tasks, 1, -1)
    params.head.biases = params.head.biases.reshape(spec.n_tasks, 1)
    cfg = None if doc["train_config"] is None else TrainConfig(**doc["train_config"])
    return spec, params, cfg
