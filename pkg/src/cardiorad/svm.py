"""Soft-margin SVM trained by SMO, combined one-vs-one for multiclass problems.

The numerical kernels are compiled with numba and shared with the
leave-one-out fast path in :mod:`cardiorad.selection`; both evaluate kernel
entries with the same summation order, so their decisions are bit-identical.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Sequence

import numpy as np
from numba import njit

from .errors import ConvergenceError, ModelFormatError
from .io import CLASSES

MODEL_FORMAT = "cardiorad-svm"
MODEL_VERSION = 1
KERNELS = {"linear": 0, "rbf": 1}


@dataclass(frozen=True)
class SvmParams:
    kernel: str = "linear"
    C: float = 1.0
    gamma: float | None = None     # rbf only; None -> 1 / (d * mean feature variance)
    tol: float = 1e-3
    max_iter: int = 1_000_000
    seed: int = 42

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self.C > 0:
            raise ValueError("C must be > 0")

    def as_dict(self) -> dict:
        return {"kernel": self.kernel, "C": self.C, "gamma": self.gamma, "tol": self.tol,
                "max_iter": self.max_iter, "seed": self.seed}


def class_order(labels) -> tuple[str, ...]:
    """Cardiac classes in their conventional order, any others sorted after."""
    present = set(labels)
    known = [c for c in CLASSES if c in present]
    return tuple(known + sorted(present - set(known)))


# ---------------------------------------------------------------------------
# compiled kernels

@njit(cache=True, nogil=True)
def _fit_standardizer(X):
    n, d = X.shape
    mean = np.zeros(d)
    scale = np.zeros(d)
    for f in range(d):
        lo = X[0, f]
        hi = X[0, f]
        s = 0.0
        for i in range(n):
            v = X[i, f]
            s += v
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        if hi == lo:
            mean[f] = lo
            continue
        m = s / n
        ss = 0.0
        for i in range(n):
            ss += (X[i, f] - m) ** 2
        mean[f] = m
        scale[f] = math.sqrt(ss / n)
    return mean, scale


@njit(cache=True, nogil=True)
def _apply_standardizer(X, mean, scale):
    n, d = X.shape
    Z = np.zeros((n, d))
    for f in range(d):
        if scale[f] > 0:
            for i in range(n):
                Z[i, f] = (X[i, f] - mean[f]) / scale[f]
    return Z


@njit(cache=True, nogil=True)
def _auto_gamma(Z):
    n, d = Z.shape
    total = 0.0
    for f in range(d):
        m = 0.0
        for i in range(n):
            m += Z[i, f]
        m /= n
        v = 0.0
        for i in range(n):
            v += (Z[i, f] - m) ** 2
        total += v / n
    mv = total / d
    if mv <= 0:
        return 1.0
    return 1.0 / (d * mv)


@njit(cache=True, nogil=True)
def _kval(a, b, kind, gamma):
    s = 0.0
    if kind == 0:
        for f in range(a.shape[0]):
            s += a[f] * b[f]
        return s
    for f in range(a.shape[0]):
        s += (a[f] - b[f]) ** 2
    return math.exp(-gamma * s)


@njit(cache=True, nogil=True)
def _kernel_matrix(A, B, kind, gamma):
    K = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            K[i, j] = _kval(A[i], B[j], kind, gamma)
    return K


@njit(cache=True, nogil=True)
def _dual_objective(alpha, y, F):
    w = 0.0
    for i in range(alpha.shape[0]):
        w += alpha[i] - 0.5 * alpha[i] * y[i] * (F[i] + y[i])
    return w


@njit(cache=True, nogil=True)
def _pair_step(i, j, K, y, alpha, F, C):
    """Move alpha_i by +y_i t and alpha_j by -y_j t, the optimal clipped t > 0.

    ``i`` must lie in I_up and ``j`` in I_low with F_j > F_i.
    """
    eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
    if eta <= 0.0:
        eta = 1e-12
    t = (F[j] - F[i]) / eta
    ti = C - alpha[i] if y[i] > 0 else alpha[i]
    tj = alpha[j] if y[j] > 0 else C - alpha[j]
    hit_i = False
    hit_j = False
    if ti <= t:
        t = ti
        hit_i = True
    if tj <= t:
        t = tj
        hit_j = True
        hit_i = hit_i and ti <= tj
    if not t > 0.0:
        return False
    alpha[i] += y[i] * t
    alpha[j] -= y[j] * t
    if hit_i:
        alpha[i] = C if y[i] > 0 else 0.0
    if hit_j:
        alpha[j] = 0.0 if y[j] > 0 else C
    for k in range(F.shape[0]):
        F[k] += t * (K[i, k] - K[j, k])
    return True


@njit(cache=True, nogil=True)
def _smo(K, y, C, tol, max_iter, seed, history):
    """SMO on a precomputed kernel matrix.

    The working pair is the maximal violating pair: the multiplier with the
    worst KKT violation and the partner maximising |E_i - E_j| among feasible
    directions. Stops when b_low <= b_up + 2 tol, which puts every training
    point within ``tol`` of its KKT condition for the midpoint bias.

    Returns alpha, bias, update count, status (0 ok, 1 iteration cap,
    2 stalled) and the number of objective values written to ``history``.
    """
    m = y.shape[0]
    alpha = np.zeros(m)
    F = np.empty(m)
    for k in range(m):
        F[k] = -y[k]
    seeded = False
    it = 0
    status = 0
    n_hist = 0
    b_up = 0.0
    b_low = 0.0
    while True:
        i_up = -1
        i_low = -1
        b_up = np.inf
        b_low = -np.inf
        for k in range(m):
            a = alpha[k]
            if (y[k] > 0 and a < C) or (y[k] < 0 and a > 0):
                if F[k] < b_up:
                    b_up = F[k]
                    i_up = k
            if (y[k] > 0 and a > 0) or (y[k] < 0 and a < C):
                if F[k] > b_low:
                    b_low = F[k]
                    i_low = k
        if b_low - b_up <= 2.0 * tol:
            break
        if it >= max_iter:
            status = 1
            break
        moved = _pair_step(i_up, i_low, K, y, alpha, F, C)
        if not moved:
            # seeded fallback: scan partners from a random start
            if not seeded:
                np.random.seed(seed)
                seeded = True
            start = np.random.randint(0, m)
            for s in range(m):
                k = (start + s) % m
                in_low = (y[k] > 0 and alpha[k] > 0) or (y[k] < 0 and alpha[k] < C)
                if k != i_up and in_low and F[k] > b_up + 2.0 * tol:
                    if _pair_step(i_up, k, K, y, alpha, F, C):
                        moved = True
                        break
        if not moved:
            status = 2
            break
        it += 1
        if n_hist < history.shape[0]:
            history[n_hist] = _dual_objective(alpha, y, F)
            n_hist += 1
    bias = -0.5 * (b_up + b_low)
    return alpha, bias, it, status, n_hist


@njit(cache=True, nogil=True)
def _decision(sv, coef, bias, x, kind, gamma):
    f = 0.0
    for s in range(sv.shape[0]):
        f += coef[s] * _kval(sv[s], x, kind, gamma)
    return f + bias


@njit(cache=True, nogil=True)
def _vote(decisions, pair_a, pair_b, n_classes):
    """Majority vote; ties go to the larger summed |f| of won duels, then lower index."""
    votes = np.zeros(n_classes, dtype=np.int64)
    score = np.zeros(n_classes)
    for p in range(decisions.shape[0]):
        f = decisions[p]
        if f >= 0:
            votes[pair_a[p]] += 1
            score[pair_a[p]] += abs(f)
        else:
            votes[pair_b[p]] += 1
            score[pair_b[p]] += abs(f)
    best = 0
    for c in range(1, n_classes):
        if votes[c] > votes[best] or (votes[c] == votes[best] and score[c] > score[best]):
            best = c
    return best, votes


@njit(cache=True, nogil=True)
def _train_pair(Z, y_idx, a, b, kind, C, gamma, tol, max_iter, seed):
    m = 0
    for i in range(y_idx.shape[0]):
        if y_idx[i] == a or y_idx[i] == b:
            m += 1
    rows = np.empty(m, dtype=np.int64)
    yy = np.empty(m)
    k = 0
    for i in range(y_idx.shape[0]):
        if y_idx[i] == a or y_idx[i] == b:
            rows[k] = i
            yy[k] = 1.0 if y_idx[i] == a else -1.0
            k += 1
    Zp = Z[rows]
    K = _kernel_matrix(Zp, Zp, kind, gamma)
    alpha, bias, it, status, _ = _smo(K, yy, C, tol, max_iter, seed, np.empty(0))
    n_sv = 0
    for i in range(m):
        if alpha[i] > 0:
            n_sv += 1
    sv = np.empty((n_sv, Z.shape[1]))
    coef = np.empty(n_sv)
    s = 0
    for i in range(m):
        if alpha[i] > 0:
            sv[s] = Zp[i]
            coef[s] = alpha[i] * yy[i]
            s += 1
    return sv, coef, bias, status


# ---------------------------------------------------------------------------
# public API

@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring; constant training features map to 0."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        mean, scale = _fit_standardizer(np.ascontiguousarray(X, dtype=np.float64))
        return cls(mean, scale)

    def transform(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _apply_standardizer(X, self.mean, self.scale)


@dataclass(frozen=True)
class BinarySvm:
    kernel: str
    C: float
    gamma: float
    support_vectors: np.ndarray
    dual_coef: np.ndarray          # alpha_i * y_i of the support vectors
    bias: float
    # training diagnostics, not persisted
    alpha: np.ndarray | None = field(default=None, compare=False, repr=False)
    iterations: int = field(default=0, compare=False)
    objective_history: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[1]}")
        kind = KERNELS[self.kernel]
        return np.array([_decision(self.support_vectors, self.dual_coef, self.bias, x,
                                   kind, self.gamma) for x in X])

    @property
    def weight(self) -> np.ndarray:
        """Primal weight vector (linear kernel only)."""
        if self.kernel != "linear":
            raise ValueError("weight vector exists only for the linear kernel")
        return self.dual_coef @ self.support_vectors


def _check_status(status, what):
    if status == 1:
        raise ConvergenceError(f"{what}: SMO hit the iteration cap before meeting KKT tolerance")
    if status == 2:
        raise ConvergenceError(f"{what}: SMO stalled with KKT violations remaining")


def kkt_violations(K, y, alpha, bias, C, tol) -> int:
    """Count training points whose KKT condition fails by more than ``tol``."""
    f = K @ (alpha * y) + bias
    yf = y * f
    bad = 0
    for a, m in zip(alpha, yf):
        if a == 0:
            bad += m < 1 - tol
        elif a == C:
            bad += m > 1 + tol
        else:
            bad += abs(m - 1) > tol
    return int(bad)


def train_binary(X, y, kernel="linear", C=1.0, gamma=None, tol=1e-3, max_iter=1_000_000,
                 seed=42, record_objective: int = 0) -> BinarySvm:
    """Train a binary soft-margin SVM on (already standardized) rows.

    ``y`` holds +1/-1 labels. ``record_objective`` > 0 keeps the dual
    objective after each of the first that-many updates.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2D with one row per label")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("training data must contain both classes")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    kind = KERNELS[kernel]
    g = 0.0
    if kind == 1:
        g = float(gamma) if gamma else float(_auto_gamma(X))
    K = _kernel_matrix(X, X, kind, g)
    history = np.empty(record_objective)
    alpha, bias, it, status, n_hist = _smo(K, y, float(C), float(tol), int(max_iter), int(seed),
                                           history)
    if status:
        bad = kkt_violations(K, y, alpha, bias, C, tol)
        raise ConvergenceError(
            f"SMO did not converge after {it} updates ({bad} KKT violations remain)", bad)
    sv = alpha > 0
    return BinarySvm(kernel, float(C), g, X[sv].copy(), alpha[sv] * y[sv], float(bias),
                     alpha=alpha, iterations=int(it), objective_history=history[:n_hist])


def predict_binary(m: BinarySvm, x) -> tuple[int, float]:
    f = float(m.decision_function(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])
    return (1 if f >= 0 else -1), f


@dataclass(frozen=True)
class SvmModel:
    classes: tuple[str, ...]
    machines: tuple[BinarySvm, ...]       # pair order: (0,1), (0,2), ..., (k-2,k-1)
    standardizer: Standardizer
    feature_names: tuple[str, ...]
    params: SvmParams = SvmParams()

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(combinations(range(len(self.classes)), 2))


def train_multiclass(X, labels: Sequence[str], feature_names: Sequence[str] | None = None,
                     params: SvmParams = SvmParams(), classes: Sequence[str] | None = None
                     ) -> SvmModel:
    """Fit the standardizer on all rows, then one machine per class pair.

    The first class of each pair is the positive side of its machine.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    labels = [str(c) for c in labels]
    classes = tuple(classes) if classes is not None else class_order(labels)
    if len(classes) < 2:
        raise ValueError("multiclass training needs at least two classes")
    empty = [c for c in classes if c not in labels]
    if empty:
        raise ValueError(f"classes without training rows: {empty}")
    lookup = {c: k for k, c in enumerate(classes)}
    y_idx = np.array([lookup[c] for c in labels], dtype=np.int64)
    std = Standardizer.fit(X)
    Z = std.transform(X)
    kind = KERNELS[params.kernel]
    g = 0.0
    if kind == 1:
        g = float(params.gamma) if params.gamma else float(_auto_gamma(Z))
    machines = []
    for a, b in combinations(range(len(classes)), 2):
        sv, coef, bias, status = _train_pair(Z, y_idx, a, b, kind, params.C, g, params.tol,
                                             params.max_iter, params.seed)
        _check_status(status, f"{classes[a]} vs {classes[b]}")
        machines.append(BinarySvm(params.kernel, params.C, g, sv, coef, float(bias)))
    names = tuple(feature_names) if feature_names is not None \
        else tuple(f"f{k}" for k in range(X.shape[1]))
    return SvmModel(classes, tuple(machines), std, names, params)


def predict_multiclass(model: SvmModel, row) -> tuple[str, np.ndarray]:
    """Predict one raw (unstandardized) row; returns the class and its vote vector."""
    z = model.standardizer.transform(np.asarray(row, dtype=np.float64).reshape(1, -1))[0]
    if z.shape[0] != len(model.feature_names):
        raise ValueError(f"expected {len(model.feature_names)} features, got {z.shape[0]}")
    pairs = model.pairs
    dec = np.array([_decision(m.support_vectors, m.dual_coef, m.bias, z, KERNELS[m.kernel],
                              m.gamma) for m in model.machines])
    pa = np.array([p[0] for p in pairs], dtype=np.int64)
    pb = np.array([p[1] for p in pairs], dtype=np.int64)
    best, votes = _vote(dec, pa, pb, len(model.classes))
    return model.classes[best], votes


def predict_rows(model: SvmModel, X) -> list[str]:
    return [predict_multiclass(model, r)[0] for r in np.atleast_2d(X)]


# ---------------------------------------------------------------------------
# persistence

def model_to_dict(model: SvmModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "classes": list(model.classes),
        "features": list(model.feature_names),
        "params": model.params.as_dict(),
        "standardizer": {"mean": model.standardizer.mean.tolist(),
                         "scale": model.standardizer.scale.tolist()},
        "machines": [
            {"pair": [model.classes[a], model.classes[b]], "kernel": m.kernel, "C": m.C,
             "gamma": m.gamma, "bias": m.bias, "dual_coef": m.dual_coef.tolist(),
             "support_vectors": m.support_vectors.tolist()}
            for (a, b), m in zip(model.pairs, model.machines)
        ],
    }


def save_model(model: SvmModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> SvmModel:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: unreadable model ({exc})") from exc
    try:
        if obj.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
        if obj.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"{path}: model version {obj.get('version')} unsupported")
        classes = tuple(obj["classes"])
        features = tuple(obj["features"])
        params = SvmParams(**obj["params"])
        std = Standardizer(np.asarray(obj["standardizer"]["mean"], dtype=np.float64),
                           np.asarray(obj["standardizer"]["scale"], dtype=np.float64))
        machines = []
        expected = list(combinations(range(len(classes)), 2))
        if len(obj["machines"]) != len(expected):
            raise ModelFormatError(f"{path}: expected {len(expected)} machines")
        for (a, b), m in zip(expected, obj["machines"]):
            if m["kernel"] not in KERNELS:
                raise ModelFormatError(f"{path}: unknown kernel tag {m['kernel']!r}")
            if m["pair"] != [classes[a], classes[b]]:
                raise ModelFormatError(f"{path}: machine order does not match class pairs")
            sv = np.asarray(m["support_vectors"], dtype=np.float64).reshape(-1, len(features))
            machines.append(BinarySvm(m["kernel"], float(m["C"]), float(m["gamma"]), sv,
                                      np.asarray(m["dual_coef"], dtype=np.float64),
                                      float(m["bias"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: corrupted model payload ({exc})") from exc
    return SvmModel(classes, tuple(machines), std, features, params)


def with_params(params: SvmParams, **changes) -> SvmParams:
    return replace(params, **{k: v for k, v in changes.items() if v is not None})
