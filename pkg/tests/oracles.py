"""Slow, independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


# ---------------------------------------------------------------- layers

def conv2d_naive(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, f, oh, ow))
    for s in range(n):
        for o in range(f):
            for i in range(oh):
                for j in range(ow):
                    acc = b[o]
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                r = i * stride + u - pad
                                q = j * stride + v - pad
                                if 0 <= r < h and 0 <= q < wd:
                                    acc += x[s, ch, r, q] * w[o, ch, u, v]
                    out[s, o, i, j] = acc
    return out


def lrn_naive(x, alpha, beta, k, n):
    out = np.zeros_like(x)
    channels = x.shape[1]
    for s in range(x.shape[0]):
        for c in range(channels):
            lo = max(0, c - (n - 1) // 2)
            hi = min(channels - 1, c + n // 2)
            for i in range(x.shape[2]):
                for j in range(x.shape[3]):
                    sq = sum(x[s, m, i, j] ** 2 for m in range(lo, hi + 1))
                    out[s, c, i, j] = x[s, c, i, j] / (k + alpha * sq) ** beta
    return out


def maxpool_naive(x, size, stride):
    n, c, h, w = x.shape
    oh = (h - size) // stride + 1
    ow = (w - size) // stride + 1
    out = np.zeros((n, c, oh, ow))
    for s in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    best = -np.inf
                    for u in range(size):
                        for v in range(size):
                            best = max(best, x[s, ch, i * stride + u, j * stride + v])
                    out[s, ch, i, j] = best
    return out


def fc_naive(x, w, b):
    flat = x.reshape(x.shape[0], -1)
    out = np.zeros((flat.shape[0], w.shape[0]))
    for s in range(flat.shape[0]):
        for o in range(w.shape[0]):
            out[s, o] = b[o] + sum(w[o, i] * flat[s, i] for i in range(flat.shape[1]))
    return out


# ---------------------------------------------------------------- otsu

def otsu_exhaustive(img) -> int | None:
    """Exact argmax of w0*w1*(mu0-mu1)^2 over t; lowest t on ties."""
    px = np.asarray(img, dtype=np.int64).ravel()
    total = len(px)
    best_t, best = None, Fraction(-1)
    for t in range(256):
        lo, hi = px[px <= t], px[px > t]
        if len(lo) == 0 or len(hi) == 0:
            continue
        w0, w1 = Fraction(len(lo), total), Fraction(len(hi), total)
        mu0, mu1 = Fraction(int(lo.sum()), len(lo)), Fraction(int(hi.sum()), len(hi))
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best:
            best_t, best = t, var
    return best_t


# ---------------------------------------------------------------- SVM dual

def svm_dual_bruteforce(K, y, upper, tol=1e-9):
    """Solve the soft-margin dual exactly by enumerating active sets.

    Every sample is guessed to sit at 0, at its upper bound, or strictly
    between; the free block then follows from a linear KKT system. The
    first guess satisfying all KKT conditions is optimal (the problem is
    convex). Returns ``(alpha, b)`` with decision ``sum a_i y_i K(x_i, .) + b``.
    Only practical for a handful of points (3^n guesses).
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    n = len(y)
    Q = K * np.outer(y, y)
    best = None
    for status in itertools.product((0, 1, 2), repeat=n):  # 0: at zero, 1: free, 2: at upper
        status = np.array(status)
        free = status == 1
        alpha = np.where(status == 2, upper, 0.0)
        nf = int(free.sum())
        if nf:
            # [Q_FF  y_F] [a_F]   [1 - Q_FB a_B]
            # [y_F'   0 ] [ b ] = [  - y_B' a_B]
            A = np.zeros((nf + 1, nf + 1))
            A[:nf, :nf] = Q[np.ix_(free, free)]
            A[:nf, nf] = y[free]
            A[nf, :nf] = y[free]
            rhs = np.concatenate([1.0 - Q[free][:, ~free] @ alpha[~free], [-(y[~free] @ alpha[~free])]])
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.max(np.abs(A @ sol - rhs)) > 1e-8:
                continue
            alpha[free] = sol[:nf]
            if np.any(alpha[free] < -tol) or np.any(alpha[free] > upper[free] + tol):
                continue
            b = sol[nf]
        else:
            if abs(y @ alpha) > tol:
                continue
            b = None
        g = Q @ alpha - 1.0  # y_i f(x_i) - 1 = g_i + y_i b
        if b is None:
            b = _canonical_bias(alpha, g, y, upper, tol)
            if b is None:
                continue
        m = g + y * b
        ok = (np.all(m[status == 0] >= -tol) and np.all(m[status == 2] <= tol)
              and np.all(np.abs(m[free]) <= 1e-7))
        if ok:
            # the optimal alpha fixes w, but b can be an interval; report the usual convention
            best = (alpha, _canonical_bias(alpha, g, y, upper, tol))
            break
    if best is None:
        raise RuntimeError("no KKT point found")
    return best


def _canonical_bias(alpha, g, y, upper, tol):
    """Mean over strictly free samples, else the midpoint of the feasible interval."""
    eps = 1e-9 * np.maximum(upper, 1.0)
    free = (alpha > eps) & (alpha < upper - eps)
    if free.any():
        return float(np.mean(-g[free] * y[free]))
    lo, hi = -np.inf, np.inf
    at_upper = alpha >= upper - eps
    for i in range(len(y)):
        # at zero: g_i + y_i b >= 0; at upper: g_i + y_i b <= 0
        sign = -y[i] if at_upper[i] else y[i]
        bound = -g[i] * y[i]
        if sign > 0:
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
    if lo > hi + tol:
        return None
    if np.isfinite(lo) and np.isfinite(hi):
        return float((lo + hi) / 2)
    return float(lo if np.isfinite(lo) else hi)


# ---------------------------------------------------------------- metrics

def eer_sweep(genuine, forgery) -> float:
    """EER as (FAR+FRR)/2 at the candidate threshold minimizing |FAR-FRR|."""
    g = np.asarray(genuine, dtype=np.float64)
    f = np.asarray(forgery, dtype=np.float64)
    cands = np.unique(np.concatenate([g, f]))
    cands = np.concatenate([[-np.inf], cands, (cands[:-1] + cands[1:]) / 2, [np.inf]])
    best, best_gap = None, np.inf
    for t in cands:
        frr = np.mean(g < t)
        far = np.mean(f >= t)
        if abs(far - frr) < best_gap:
            best, best_gap = (far + frr) / 2, abs(far - frr)
    return float(best)


def auc_pairs(genuine, forgery) -> Fraction:
    wins = Fraction(0)
    for a in genuine:
        for b in forgery:
            wins += 1 if a > b else Fraction(1, 2) if a == b else 0
    return wins / (len(genuine) * len(forgery))
