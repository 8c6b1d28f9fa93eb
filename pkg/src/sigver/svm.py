"""Writer-dependent SVMs trained with SMO.

Features are divided by their per-dimension std (no centering), the class
imbalance is handled with a larger C for the positive class, and the dual
is solved by SMO with maximal-violating-pair working-set selection.
Positive class = genuine; ``decide`` returns a signed score, >= 0 genuine.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import ConfigError, ShapeError, TrainingError

Kernel = Literal["linear", "rbf"]

DEFAULT_C = 1.0
DEFAULT_GAMMA = 2.0 ** -12
DEFAULT_C_GRID = tuple(2.0 ** e for e in range(-2, 7, 2))
DEFAULT_GAMMA_GRID = tuple(2.0 ** e for e in range(-16, -3, 2))


@dataclass(frozen=True)
class SvmConfig:
    kernel: Kernel = "rbf"
    C: float = DEFAULT_C
    gamma: float = DEFAULT_GAMMA
    tolerance: float = 1e-3
    max_passes: int = 1000

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if not self.C > 0:
            raise ConfigError("C must be > 0")
        if self.kernel == "rbf" and not self.gamma > 0:
            raise ConfigError("gamma must be > 0 for the rbf kernel")
        if not self.tolerance > 0 or self.max_passes < 1:
            raise ConfigError("tolerance must be > 0 and max_passes >= 1")


@dataclass
class SvmModel:
    kernel: Kernel
    gamma: float
    C_pos: float
    C_neg: float
    support_vectors: np.ndarray      # (n_sv, d), already standardized
    dual_coef: np.ndarray            # alpha_i * y_i
    bias: float
    feature_scale: np.ndarray        # (d,)
    support_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    iterations: int = 0

    @property
    def dim(self) -> int:
        return int(self.feature_scale.shape[0])


@dataclass
class WdTrainSet:
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        self.positives = np.atleast_2d(np.asarray(self.positives, dtype=np.float64))
        self.negatives = np.atleast_2d(np.asarray(self.negatives, dtype=np.float64))
        if len(self.positives) == 0 or len(self.negatives) == 0:
            raise ConfigError("WD training needs at least one positive and one negative")
        if self.positives.shape[1] != self.negatives.shape[1]:
            raise ShapeError("positive and negative feature dimensions differ")

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.positives, self.negatives])

    @property
    def labels(self) -> np.ndarray:
        return np.concatenate([np.ones(len(self.positives)), -np.ones(len(self.negatives))])


def standardize_fit(features) -> np.ndarray:
    """Per-dimension population std; constant dimensions get scale 1."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ConfigError("standardization needs a non-empty (n, d) training set")
    std = x.std(axis=0)
    return np.where(std > 0, std, 1.0)


def standardize_apply(v, scale) -> np.ndarray:
    return np.asarray(v, dtype=np.float64) / scale


def balance_classes(n_pos: int, n_neg: int, C: float) -> tuple[float, float]:
    """Per-class C equivalent to replicating positives up to ``n_neg``."""
    if n_pos < 1 or n_neg < 1:
        raise ConfigError("both classes need at least one sample")
    return C * n_neg / n_pos, C


def kernel_matrix(a, b, kernel: Kernel, gamma: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dots = a @ b.T
    if kernel == "linear":
        return dots
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * dots
    return np.exp(-gamma * np.maximum(sq, 0.0))


def smo_solve(K: np.ndarray, y: np.ndarray, upper: np.ndarray, tol: float, max_iter: int):
    """Solve ``min 1/2 a'Qa - e'a`` s.t. ``y'a = 0``, ``0 <= a_i <= upper_i``.

    Returns ``(alpha, rho, iterations)`` where the decision function is
    ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    Q = K * np.outer(y, y)
    diag = np.diag(Q).copy()
    tau = 1e-12
    pos = y > 0
    it = 0
    while True:
        at_upper = alpha >= upper
        at_lower = alpha <= 0
        in_up = np.where(pos, ~at_upper, ~at_lower)
        in_low = np.where(pos, ~at_lower, ~at_upper)
        score = -y * grad
        if not in_up.any() or not in_low.any():
            break
        i = int(np.argmax(np.where(in_up, score, -np.inf)))
        j = int(np.argmin(np.where(in_low, score, np.inf)))
        if score[i] - score[j] <= tol:
            break
        if it >= max_iter:
            raise TrainingError(
                f"SMO did not converge in {max_iter} iterations "
                f"(max KKT violation {score[i] - score[j]:.3g}, tol {tol:g})"
            )
        it += 1
        old_i, old_j = alpha[i], alpha[j]
        Ci, Cj = upper[i], upper[j]
        if y[i] != y[j]:
            quad = max(diag[i] + diag[j] + 2 * Q[i, j], tau)
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0
                alpha[j] = -diff
            if diff > Ci - Cj:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = Ci - diff
            elif alpha[j] > Cj:
                alpha[j] = Cj
                alpha[i] = Cj + diff
        else:
            quad = max(diag[i] + diag[j] - 2 * Q[i, j], tau)
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > Ci:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = total - Ci
            elif alpha[j] < 0:
                alpha[j] = 0
                alpha[i] = total
            if total > Cj:
                if alpha[j] > Cj:
                    alpha[j] = Cj
                    alpha[i] = total - Cj
            elif alpha[i] < 0:
                alpha[i] = 0
                alpha[j] = total
        # snap rounding residue onto the box so bound status (and hence rho) is exact
        for k in (i, j):
            if alpha[k] < 1e-12 * upper[k]:
                alpha[k] = 0.0
            elif alpha[k] > upper[k] * (1 - 1e-12):
                alpha[k] = upper[k]
        grad += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
    return alpha, _bias(alpha, grad, y, upper), it


def _bias(alpha, grad, y, upper) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < upper)
    if free.any():
        return float(yg[free].mean())
    at_upper = alpha >= upper
    # bounds on rho implied by samples sitting at 0 or at C
    lower_bound = (at_upper & (y > 0)) | (~at_upper & (y < 0))
    ub = yg[~lower_bound].min(initial=np.inf)
    lb = yg[lower_bound].max(initial=-np.inf)
    if not np.isfinite(ub) or not np.isfinite(lb):
        return float(ub if np.isfinite(ub) else lb)
    return float((ub + lb) / 2)


def smo_train(train: WdTrainSet, cfg: SvmConfig, balance: bool = True,
              standardize: bool = True, class_C: tuple[float, float] | None = None) -> SvmModel:
    """Fit a WD classifier: standardize, balance C per class, run SMO.

    ``class_C = (C_pos, C_neg)`` overrides both ``cfg.C`` and balancing.
    """
    x = train.features
    y = train.labels
    scale = standardize_fit(x) if standardize else np.ones(x.shape[1])
    xs = standardize_apply(x, scale)
    n_pos, n_neg = len(train.positives), len(train.negatives)
    if class_C is not None:
        C_pos, C_neg = class_C
        if not (C_pos > 0 and C_neg > 0):
            raise ConfigError("per-class C values must be > 0")
    else:
        C_pos, C_neg = balance_classes(n_pos, n_neg, cfg.C) if balance else (cfg.C, cfg.C)
    upper = np.where(y > 0, C_pos, C_neg)
    K = kernel_matrix(xs, xs, cfg.kernel, cfg.gamma)
    alpha, rho, it = smo_solve(K, y, upper, cfg.tolerance, cfg.max_passes * len(y))
    sv = np.flatnonzero(alpha > 0)
    return SvmModel(
        kernel=cfg.kernel,
        gamma=cfg.gamma,
        C_pos=C_pos,
        C_neg=C_neg,
        support_vectors=xs[sv],
        dual_coef=alpha[sv] * y[sv],
        bias=-rho,
        feature_scale=scale,
        support_indices=sv.astype(np.int64),
        iterations=it,
    )


def decide(model: SvmModel, features) -> np.ndarray | float:
    """Signed decision value(s) for raw (unstandardized) feature vector(s)."""
    v = np.asarray(features, dtype=np.float64)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    if v.shape[1] != model.dim:
        raise ShapeError(f"feature dimension {v.shape[1]} != model dimension {model.dim}")
    if len(model.dual_coef) == 0:
        scores = np.full(len(v), model.bias)
    else:
        K = kernel_matrix(standardize_apply(v, model.feature_scale), model.support_vectors,
                          model.kernel, model.gamma)
        scores = K @ model.dual_coef + model.bias
    return float(scores[0]) if single else scores


def kkt_violation(model: SvmModel, train: WdTrainSet) -> float:
    """Largest violation of the soft-margin KKT conditions over ``train``.

    Zero means every condition holds exactly; compare against the solver
    tolerance.
    """
    y = train.labels
    margins = y * decide(model, train.features)
    alpha = np.zeros(len(y))
    alpha[model.support_indices] = np.abs(model.dual_coef)
    upper = np.where(y > 0, model.C_pos, model.C_neg)
    eps = 1e-9 * np.maximum(upper, 1.0)
    at_zero = alpha <= eps
    at_upper = alpha >= upper - eps
    free = ~at_zero & ~at_upper
    viol = np.zeros(len(y))
    viol[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    viol[free] = np.abs(margins[free] - 1.0)
    viol[at_upper] = np.maximum(0.0, margins[at_upper] - 1.0)
    return float(viol.max())


@dataclass
class WdProblem:
    """A grid-search problem: training set plus genuine/skilled test scores."""

    train: WdTrainSet
    test_genuine: np.ndarray
    test_skilled: np.ndarray


def classification_error(model: SvmModel, genuine, skilled) -> float:
    g = np.atleast_1d(decide(model, genuine))
    s = np.atleast_1d(decide(model, skilled))
    wrong = int(np.sum(g < 0)) + int(np.sum(s >= 0))
    return wrong / (len(g) + len(s))


def grid_search(problems: Sequence[WdProblem], C_grid: Iterable[float] = DEFAULT_C_GRID,
                gamma_grid: Iterable[float] = DEFAULT_GAMMA_GRID, kernel: Kernel = "rbf",
                tolerance: float = 1e-3) -> tuple[tuple[float, float], dict]:
    """Pick the (C, gamma) with the lowest mean genuine-vs-skilled error.

    Ties go to the smaller C, then the smaller gamma. Returns the winner and
    the full table ``{(C, gamma): mean_error}``.
    """
    grid = list(itertools.product(sorted(C_grid), sorted(gamma_grid)))
    if not grid:
        raise ConfigError("empty hyperparameter grid")
    if not problems:
        raise ConfigError("grid search needs at least one development problem")
    table = {}
    best, best_err = None, np.inf
    for C, gamma in grid:
        cfg = SvmConfig(kernel=kernel, C=C, gamma=gamma, tolerance=tolerance)
        err = float(np.mean([
            classification_error(smo_train(p.train, cfg), p.test_genuine, p.test_skilled) for p in problems
        ]))
        table[(C, gamma)] = err
        if err < best_err:
            best, best_err = (C, gamma), err
    return best, table
