"""Central finite-difference gradients of the mean BCE of an MLP."""
import numpy as np

from painmtl import nn


def random_problem(seed, n_tasks=3, batch=12, input_dim=None):
    rng = np.random.default_rng(seed)
    input_dim = input_dim or int(rng.integers(2, 8))
    spec = nn.NetworkSpec(input_dim, (int(rng.integers(2, 7)),), (int(rng.integers(2, 5)),),
                          tuple(f"T{i}" for i in range(n_tasks)))
    params = nn.init_params(spec, rng)
    # nonzero biases keep pre-activations off the ReLU kink at exactly 0
    for layer in params.shared + params.task_layers + [params.head]:
        layer.biases[...] = rng.uniform(-0.5, 0.5, layer.biases.shape)
    x = rng.normal(size=(batch, input_dim))
    y = rng.integers(0, 2, batch).astype(float)
    tasks = [spec.task_ids[i % n_tasks] for i in range(batch)]
    return spec, params, x, y, tasks


def numeric_gradient(params, spec, x, y, tasks, step=1e-5):
    grads = params.zeros_like()
    for p_arr, g_arr in zip(params.arrays(), grads.arrays()):
        flat, gflat = p_arr.reshape(-1), g_arr.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = nn.mean_loss(params, spec, x, y, tasks)
            flat[i] = keep - step
            down = nn.mean_loss(params, spec, x, y, tasks)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * step)
    return grads


def worst_mismatch(analytic, numeric, rel=1e-5, abs_tol=1e-8):
    """Count of entries failing both the relative and the absolute bound."""
    bad = 0
    for a, n in zip(analytic.arrays(), numeric.arrays()):
        err = np.abs(a - n)
        ok = (err <= abs_tol) | (err <= rel * np.maximum(np.abs(a), np.abs(n)))
        bad += int(np.sum(~ok))
    return bad
