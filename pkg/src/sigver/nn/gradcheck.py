"""Central finite-difference checks of every hand-derived backward pass."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import functional as F

STEP = 1e-3
THRESHOLD = 1e-4
LAYERS = ("conv", "lrn", "maxpool", "fc", "relu", "dropout", "softmax_xent")


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def _distinct(rng, shape, gap=0.01):
    # values at least `gap` apart so a +-STEP nudge never reorders a max window
    return (rng.permutation(int(np.prod(shape))).reshape(shape) - np.prod(shape) / 2) * gap


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x) + np.sign(x) * margin


def check_layer(kind: str, rng: np.random.Generator) -> float:
    """Max relative error over every input/parameter gradient of one layer."""
    errors = []

    def compare(loss, analytic, arrays):
        for a, x in zip(analytic, arrays):
            errors.append(relative_error(a, numeric_grad(loss, x)))

    if kind == "conv":
        x = rng.normal(size=(2, 2, 6, 7))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        out, cache = F.conv2d_forward(x, w, b, stride, pad)
        r = rng.normal(size=out.shape)
        gx, gw, gb = F.conv2d_backward(r, cache)
        compare(lambda: float(np.sum(F.conv2d_forward(x, w, b, stride, pad)[0] * r)), (gx, gw, gb), (x, w, b))
    elif kind == "lrn":
        x = rng.normal(size=(2, 7, 3, 3)) * 3
        params = dict(alpha=float(rng.uniform(1e-4, 0.2)), beta=0.75, k=2.0, n=int(rng.choice([1, 3, 4, 5])))
        out, cache = F.lrn_forward(x, **params)
        r = rng.normal(size=out.shape)
        compare(lambda: float(np.sum(F.lrn_forward(x, **params)[0] * r)), (F.lrn_backward(r, cache),), (x,))
    elif kind == "maxpool":
        x = _distinct(rng, (2, 2, 7, 7))
        out, cache = F.maxpool_forward(x, 3, 2)
        r = rng.normal(size=out.shape)
        compare(lambda: float(np.sum(F.maxpool_forward(x, 3, 2)[0] * r)), (F.maxpool_backward(r, cache),), (x,))
    elif kind == "fc":
        x = rng.normal(size=(3, 2, 2, 2))
        w = rng.normal(size=(5, 8))
        b = rng.normal(size=5)
        out, cache = F.fc_forward(x, w, b)
        r = rng.normal(size=out.shape)
        gx, gw, gb = F.fc_backward(r, cache)
        compare(lambda: float(np.sum(F.fc_forward(x, w, b)[0] * r)), (gx, gw, gb), (x, w, b))
    elif kind == "relu":
        x = _away_from_zero(rng, (4, 6))
        out, mask = F.relu_forward(x)
        r = rng.normal(size=out.shape)
        compare(lambda: float(np.sum(F.relu_forward(x)[0] * r)), (F.relu_backward(r, mask),), (x,))
    elif kind == "dropout":
        x = rng.normal(size=(4, 10))
        seed = int(rng.integers(2**31))

        def fwd():
            return F.dropout_forward(x, 0.5, True, np.random.default_rng(seed))

        out, keep = fwd()
        r = rng.normal(size=out.shape)
        compare(lambda: float(np.sum(fwd()[0] * r)), (F.dropout_backward(r, keep),), (x,))
    elif kind == "softmax_xent":
        z = rng.normal(size=(4, 6)) * 2
        y = rng.integers(0, 6, size=4)
        _, g = F.softmax_xent(z, y)
        compare(lambda: F.softmax_xent(z, y)[0], (g,), (z,))
    else:
        raise ValueError(f"unknown layer {kind!r}")
    return max(errors)


def run_gradchecks(n_seeds: int = 20, seed: int = 0, layers=LAYERS) -> dict[str, float]:
    """Worst relative error per layer over ``n_seeds`` random problems (float64)."""
    worst = {}
    for kind in layers:
        worst[kind] = max(check_layer(kind, np.random.default_rng([seed, i, LAYERS.index(kind)]))
                          for i in range(n_seeds))
    return worst
