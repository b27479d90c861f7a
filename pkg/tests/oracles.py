"""Reference computations kept independent of the code they check."""

import numpy as np


def central_diff_grad(f, x, eps=1e-5):
    """Gradient of scalar ``f`` at ``x`` by central differences, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + eps
        fp = f(x)
        x[i] = old - eps
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def naive_mlp_loss(params, sizes, images, labels):
    """Mean cross-entropy written with explicit loops over layers and samples."""
    offset = 0
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params[offset:offset + fan_out]
        offset += fan_out
        layers.append((W, b))
    total = 0.0
    for x, y in zip(images, labels):
        h = x
        for k, (W, b) in enumerate(layers):
            z = np.array([sum(h[i] * W[i, j] for i in range(len(h))) + b[j] for j in range(W.shape[1])])
            h = z if k == len(layers) - 1 else np.maximum(z, 0)
        m = max(h)
        total += m + np.log(sum(np.exp(v - m) for v in h)) - h[y]
    return total / len(labels)


def relative_error(a, b, floor=1e-6):
    """Max elementwise relative error; ``floor`` keeps exact zeros (dead ReLUs) from dividing by 0."""
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


def first_hit_scan(accs, rounds, a):
    hits = [r for r, acc in zip(rounds, accs) if acc >= a]
    return min(hits) if hits else None
