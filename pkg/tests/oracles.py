"""Independent reference computations used by the tests.

Nothing here calls the autodiff backward pass or the metric classes.
"""
import math

import numpy as np

from trialfit import autodiff as ad

FD_EPS = 1e-6


def numeric_grads(fn, arrays, weights, eps=FD_EPS):
    """Central differences of ``sum(fn(*arrays) * weights)`` w.r.t. every input element."""

    def f(xs):
        with ad.no_grad():
            out = fn(*[ad.Tensor(x) for x in xs]).value
        return float(np.sum(out * weights))

    grads = []
    for i, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            plus[i][idx] += eps
            minus[i][idx] -= eps
            g[idx] = (f(plus) - f(minus)) / (2 * eps)
        grads.append(g)
    return grads


def analytic_grads(fn, arrays, weights):
    leaves = [ad.Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*leaves)
    loss = (out * ad.Tensor(weights)).sum() if out.ndim else out * ad.Tensor(weights)
    ad.backward(loss)
    return [np.zeros_like(a) if leaf.grad is None else leaf.grad for a, leaf in zip(arrays, leaves)]


def relative_error(a, b):
    """Norm-wise relative error ``|a - b| / max(|a|, |b|)`` over all inputs together."""
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def gradcheck(fn, arrays, rng):
    """Return the relative error between backward and central differences."""
    with ad.no_grad():
        out_shape = fn(*[ad.Tensor(a) for a in arrays]).shape
    weights = rng.standard_normal(out_shape)
    return relative_error(analytic_grads(fn, arrays, weights), numeric_grads(fn, arrays, weights))


def two_pass_std(values):
    n = len(values)
    m = math.fsum(values) / n
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / n)


def sliding_means(values, window):
    return [math.fsum(values[max(0, i - window + 1):i + 1]) / len(values[max(0, i - window + 1):i + 1])
            for i in range(len(values))]


def loop_norm_sum(arrays):
    total = 0.0
    for a in arrays:
        s = 0.0
        for v in np.ravel(a):
            s += float(v) * float(v)
        total += math.sqrt(s)
    return total


def bce(p, y, eps=1e-7):
    """Mean clamped binary cross-entropy written with plain numpy."""
    p = np.clip(np.asarray(p, dtype=float), eps, 1 - eps)
    y = np.asarray(y, dtype=float)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))
