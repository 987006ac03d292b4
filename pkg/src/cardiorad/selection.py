"""Leave-one-out evaluation and sequential forward feature selection.

LOO runs on per-fold Gram matrices: each feature column is standardized once
per fold (statistics from the N-1 training rows) and its contribution is
added to the fold's Gram (linear kernel) or squared-distance matrix (RBF).
Features are accumulated in subset order, so a candidate appended during
selection produces exactly the same floating-point kernel values as a fresh
evaluation of the extended subset.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import ConvergenceError, EvaluationError
from .features import FeatureDescriptor, FeatureTable
from .svm import (KERNELS, SvmParams, _fit_standardizer, _apply_standardizer, _smo, _vote,
                  class_order, predict_multiclass, train_multiclass)

log = logging.getLogger(__name__)

DEFAULT_MAX_K = 32
DEFAULT_PATIENCE = 3


# ---------------------------------------------------------------------------
# compiled LOO machinery

@njit(cache=True, nogil=True)
def _fold_standardized(X):
    """Z[h] = X standardized with statistics of every row except h."""
    n, p = X.shape
    Z = np.empty((n, n, p))
    keep = np.empty(n - 1, dtype=np.int64)
    for h in range(n):
        k = 0
        for i in range(n):
            if i != h:
                keep[k] = i
                k += 1
        mean, scale = _fit_standardizer(X[keep])
        Z[h] = _apply_standardizer(X, mean, scale)
    return Z


@njit(cache=True, nogil=True)
def _column_var(z, h):
    # variance over training rows, same arithmetic as svm._auto_gamma
    n = z.shape[0]
    m = 0.0
    for i in range(n):
        if i != h:
            m += z[i]
    m /= n - 1
    v = 0.0
    for i in range(n):
        if i != h:
            v += (z[i] - m) ** 2
    return v / (n - 1)


@njit(cache=True, nogil=True)
def _accumulate(G, z, kind):
    n = z.shape[0]
    for i in range(n):
        for j in range(n):
            if kind == 0:
                G[i, j] += z[i] * z[j]
            else:
                G[i, j] += (z[i] - z[j]) ** 2


@njit(cache=True, nogil=True)
def _add_feature(G, V, Z, f, kind):
    for h in range(G.shape[0]):
        _accumulate(G[h], Z[h, :, f], kind)
        V[h] += _column_var(Z[h, :, f], h)


@njit(cache=True, nogil=True)
def _predict_fold(R, vtot, d, h, y_idx, n_classes, kind, C, gamma, tol, max_iter, seed):
    """Train all class pairs without row h and classify row h.

    ``R`` holds raw kernel sums: dot products (linear) or squared distances.
    """
    n = R.shape[0]
    g = gamma
    if kind == 1 and g <= 0:
        mv = vtot / d
        g = 1.0 if mv <= 0 else 1.0 / (d * mv)
    n_pairs = n_classes * (n_classes - 1) // 2
    pa = np.empty(n_pairs, dtype=np.int64)
    pb = np.empty(n_pairs, dtype=np.int64)
    dec = np.empty(n_pairs)
    rows = np.empty(n, dtype=np.int64)
    status = 0
    p = 0
    for a in range(n_classes):
        for b in range(a + 1, n_classes):
            m = 0
            for i in range(n):
                if i != h and (y_idx[i] == a or y_idx[i] == b):
                    rows[m] = i
                    m += 1
            yy = np.empty(m)
            K = np.empty((m, m))
            for r in range(m):
                yy[r] = 1.0 if y_idx[rows[r]] == a else -1.0
                for s in range(m):
                    v = R[rows[r], rows[s]]
                    K[r, s] = v if kind == 0 else math.exp(-g * v)
            alpha, bias, it, st, _ = _smo(K, yy, C, tol, max_iter, seed, np.empty(0))
            if st > status:
                status = st
            f = 0.0
            for r in range(m):
                if alpha[r] > 0:
                    v = R[rows[r], h]
                    kv = v if kind == 0 else math.exp(-g * v)
                    f += (alpha[r] * yy[r]) * kv
            dec[p] = f + bias
            pa[p] = a
            pb[p] = b
            p += 1
    best, _ = _vote(dec, pa, pb, n_classes)
    return best, status


@njit(cache=True, nogil=True)
def _loo_gram(G, V, d, y_idx, n_classes, kind, C, gamma, tol, max_iter, seed):
    n = G.shape[0]
    pred = np.empty(n, dtype=np.int64)
    status = 0
    for h in range(n):
        pred[h], st = _predict_fold(G[h], V[h], d, h, y_idx, n_classes, kind, C, gamma, tol,
                                    max_iter, seed)
        status = max(status, st)
    return pred, status


@njit(cache=True, nogil=True)
def _loo_candidates(G, V, d, Z, cands, y_idx, n_classes, kind, C, gamma, tol, max_iter, seed):
    """Correct-prediction counts for the current subset extended by each candidate."""
    n = G.shape[0]
    correct = np.zeros(cands.shape[0], dtype=np.int64)
    status = 0
    R = np.empty((n, n))
    for c in range(cands.shape[0]):
        f = cands[c]
        for h in range(n):
            R[:, :] = G[h]
            _accumulate(R, Z[h, :, f], kind)
            v = V[h] + _column_var(Z[h, :, f], h)
            pred, st = _predict_fold(R, v, d, h, y_idx, n_classes, kind, C, gamma, tol,
                                     max_iter, seed)
            status = max(status, st)
            if pred == y_idx[h]:
                correct[c] += 1
    return correct, status


# ---------------------------------------------------------------------------
# result types

@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed ``[predicted][true]``."""

    classes: tuple[str, ...]
    counts: np.ndarray

    @classmethod
    def from_predictions(cls, true, predicted, classes=None) -> "ConfusionMatrix":
        classes = tuple(classes) if classes is not None else class_order(list(true) + list(predicted))
        lookup = {c: k for k, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(true, predicted):
            counts[lookup[p], lookup[t]] += 1
        return cls(classes, counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "orientation": "rows=predicted, columns=true",
                "counts": self.counts.tolist()}


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    precision: dict[str, float | None]      # None marks an undefined value
    recall: dict[str, float | None]
    confusion: ConfusionMatrix
    curve: list[tuple[int, float]] | None = None
    features: list[str] | None = None
    ablation: list[dict] | None = None

    def to_dict(self) -> dict:
        out = {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
               "confusion_matrix": self.confusion.to_dict(),
               "n_subjects": self.confusion.total}
        if self.curve is not None:
            out["accuracy_curve"] = [{"k": k, "accuracy": a} for k, a in self.curve]
        if self.features is not None:
            out["features"] = list(self.features)
        if self.ablation is not None:
            out["ablation"] = self.ablation
        return out


@dataclass
class SelectionTrace:
    steps: list[tuple[str, float]] = field(default_factory=list)
    chosen_k: int = 0
    stop_reason: str = "exhausted"
    params: dict = field(default_factory=dict)

    @property
    def accuracies(self) -> list[float]:
        return [a for _, a in self.steps]

    @property
    def features(self) -> list[str]:
        return [f for f, _ in self.steps]

    def selected(self) -> list[str]:
        return self.features[:self.chosen_k]

    def curve(self) -> list[tuple[int, float]]:
        return [(k + 1, a) for k, (_, a) in enumerate(self.steps)]

    def to_dict(self) -> dict:
        return {"steps": [{"feature": f, "accuracy": a} for f, a in self.steps],
                "chosen_k": self.chosen_k, "stop_reason": self.stop_reason,
                "selected": self.selected(), "params": self.params}

    @classmethod
    def from_dict(cls, obj) -> "SelectionTrace":
        steps = [(s["feature"], float(s["accuracy"])) for s in obj["steps"]]
        return cls(steps, int(obj["chosen_k"]), obj["stop_reason"], obj.get("params", {}))


def write_trace(trace: SelectionTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(trace.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_trace(path) -> SelectionTrace:
    with open(path, encoding="utf-8") as fh:
        return SelectionTrace.from_dict(json.load(fh))


def write_curve_csv(trace: SelectionTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,accuracy\n")
        for k, a in trace.curve():
            fh.write(f"{k},{a!r}\n")


# ---------------------------------------------------------------------------
# evaluation

def _encoded_labels(table: FeatureTable) -> tuple[np.ndarray, tuple[str, ...]]:
    if table.labels is None or any(lab is None for lab in table.labels):
        raise EvaluationError("leave-one-out evaluation needs a class label for every subject")
    classes = class_order(table.labels)
    if len(classes) < 2:
        raise EvaluationError("leave-one-out evaluation needs at least two classes")
    counts = {c: table.labels.count(c) for c in classes}
    thin = [c for c, k in counts.items() if k < 2]
    if thin:
        raise EvaluationError(f"classes {thin} have fewer than 2 subjects; a LOO fold would lose them")
    lookup = {c: k for k, c in enumerate(classes)}
    return np.array([lookup[c] for c in table.labels], dtype=np.int64), classes


def _raise_status(status):
    if status == 1:
        raise ConvergenceError("SMO hit the iteration cap inside a leave-one-out fold")
    if status == 2:
        raise ConvergenceError("SMO stalled inside a leave-one-out fold")


class _FoldCache:
    """Per-fold standardized columns plus Gram sums for a growing subset."""

    def __init__(self, X: np.ndarray, kind: int):
        self.Z = _fold_standardized(np.ascontiguousarray(X, dtype=np.float64))
        n = X.shape[0]
        self.kind = kind
        self.G = np.zeros((n, n, n))
        self.V = np.zeros(n)
        self.d = 0

    def add(self, f: int) -> None:
        _add_feature(self.G, self.V, self.Z, f, self.kind)
        self.d += 1


def loo_predictions(table: FeatureTable, features: Sequence[str],
                    params: SvmParams = SvmParams()) -> list[str]:
    if not features:
        raise EvaluationError("feature subset is empty")
    y_idx, classes = _encoded_labels(table)
    kind = KERNELS[params.kernel]
    cache = _FoldCache(table.columns(features), kind)
    for f in range(len(features)):
        cache.add(f)
    pred, status = _loo_gram(cache.G, cache.V, cache.d, y_idx, len(classes), kind, params.C,
                             params.gamma or 0.0, params.tol, params.max_iter, params.seed)
    _raise_status(status)
    return [classes[p] for p in pred]


def loo_accuracy(table: FeatureTable, features: Sequence[str],
                 params: SvmParams = SvmParams()) -> tuple[float, ConfusionMatrix]:
    """Leave-one-out accuracy of the one-vs-one SVM restricted to ``features``."""
    pred = loo_predictions(table, features, params)
    cm = ConfusionMatrix.from_predictions(table.labels, pred, class_order(table.labels))
    correct = int(np.trace(cm.counts))
    return correct / len(pred), cm


def loo_accuracy_reference(table: FeatureTable, features: Sequence[str],
                           params: SvmParams = SvmParams()) -> float:
    """Slow LOO through the public train/predict API, one fold at a time."""
    y_idx, classes = _encoded_labels(table)
    X = table.columns(features)
    correct = 0
    for h in range(len(X)):
        keep = [i for i in range(len(X)) if i != h]
        model = train_multiclass(X[keep], [table.labels[i] for i in keep], features, params,
                                 classes=classes)
        correct += predict_multiclass(model, X[h])[0] == table.labels[h]
    return correct / len(X)


def metrics_from_confusion(cm: ConfusionMatrix) -> EvaluationReport:
    total = cm.total
    if total <= 0:
        raise EvaluationError("confusion matrix is empty")
    counts = cm.counts
    precision, recall = {}, {}
    for k, c in enumerate(cm.classes):
        predicted = counts[k, :].sum()
        actual = counts[:, k].sum()
        precision[c] = float(counts[k, k] / predicted) if predicted else None
        recall[c] = float(counts[k, k] / actual) if actual else None
    return EvaluationReport(float(np.trace(counts) / total), precision, recall, cm)


# ---------------------------------------------------------------------------
# selection

def _chunks(seq, n):
    size = max(1, math.ceil(len(seq) / n))
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def sfs_select(table: FeatureTable, params: SvmParams = SvmParams(), max_k: int = DEFAULT_MAX_K,
               patience: int = DEFAULT_PATIENCE, threads: int = 1,
               candidates: Sequence[str] | None = None,
               progress: Callable[[int, str, float], None] | None = None) -> SelectionTrace:
    """Greedy forward selection on leave-one-out accuracy.

    Every step appends the candidate with the highest LOO accuracy (ties go
    to the earliest column). Selection stops after ``patience`` consecutive
    steps without a strict improvement of the best accuracy, at ``max_k``
    steps, or when no candidates remain. ``chosen_k`` is the shortest prefix
    reaching the best accuracy.
    """
    if max_k < 1 or patience < 1:
        raise ValueError("max_k and patience must be >= 1")
    y_idx, classes = _encoded_labels(table)
    names = list(candidates) if candidates is not None else table.names
    if not names:
        raise EvaluationError("no candidate features")
    kind = KERNELS[params.kernel]
    n = len(table.subjects)
    cache = _FoldCache(table.columns(names), kind)
    remaining = list(range(len(names)))
    args = (y_idx, len(classes), kind, params.C, params.gamma or 0.0, params.tol,
            params.max_iter, params.seed)

    def evaluate(chunk):
        return _loo_candidates(cache.G, cache.V, cache.d + 1, cache.Z,
                               np.asarray(chunk, dtype=np.int64), *args)

    trace = SelectionTrace(params={**params.as_dict(), "max_k": max_k, "patience": patience})
    best = -1.0
    stale = 0
    while True:
        chunks = _chunks(remaining, threads)
        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(evaluate, chunks))
        else:
            results = [evaluate(c) for c in chunks]
        correct = np.concatenate([r[0] for r in results])
        _raise_status(max(r[1] for r in results))
        pick = int(np.argmax(correct))          # first maximum = lowest column index
        f = remaining.pop(pick)
        acc = int(correct[pick]) / n
        cache.add(f)
        trace.steps.append((names[f], acc))
        if progress is not None:
            progress(len(trace.steps), names[f], acc)
        log.info("step %d: %s -> %.4f", len(trace.steps), names[f], acc)
        if acc > best:
            best = acc
            stale = 0
        else:
            stale += 1
        if stale >= patience:
            trace.stop_reason = "patience"
            break
        if len(trace.steps) >= max_k:
            trace.stop_reason = "max_k"
            break
        if not remaining:
            trace.stop_reason = "exhausted"
            break
    accs = trace.accuracies
    trace.chosen_k = int(np.argmax(accs)) + 1
    return trace


def ablation_report(table: FeatureTable, trace: SelectionTrace,
                    params: SvmParams = SvmParams()) -> list[dict]:
    """LOO accuracy without each selected feature, and with that feature alone."""
    selected = trace.selected()
    if not selected:
        raise EvaluationError("selection trace is empty")
    lookup = {d.name: d for d in table.descriptors}
    rows = []
    for name in selected:
        rest = [s for s in selected if s != name]
        without = loo_accuracy(table, rest, params)[0] if rest else None
        alone = loo_accuracy(table, [name], params)[0]
        d = lookup.get(name, FeatureDescriptor.parse(name))
        rows.append({"name": name, "feature": d.feature, "type": _feature_type(d),
                     "frame": d.phase or "-", "structure": d.structure or "-",
                     "without": without, "alone": alone})
    return rows


def _feature_type(d: FeatureDescriptor) -> str:
    if d.category == "global":
        return "Patient information"
    if d.category == "shape":
        conventional = d.feature in ("VoxelVolume", "MeshVolume")
        return "Conventional shape" if conventional else "Advanced shape"
    if d.category in ("firstorder", "glcm", "glrlm", "glszm"):
        return "Intensity/textural"
    return "Other"


def nested_loo(table: FeatureTable, params: SvmParams = SvmParams(), max_k: int = DEFAULT_MAX_K,
               patience: int = DEFAULT_PATIENCE, threads: int = 1
               ) -> tuple[float, ConfusionMatrix, list[list[str]]]:
    """Selection repeated inside every outer LOO fold; unbiased but N times slower."""
    y_idx, classes = _encoded_labels(table)
    preds, chosen = [], []
    for h in range(len(table.subjects)):
        keep = [i for i in range(len(table.subjects)) if i != h]
        inner = table.subset_rows(keep)
        trace = sfs_select(inner, params, max_k, patience, threads)
        feats = trace.selected()
        model = train_multiclass(inner.columns(feats), inner.labels, feats, params, classes=classes)
        preds.append(predict_multiclass(model, table.columns(feats)[h])[0])
        chosen.append(feats)
    cm = ConfusionMatrix.from_predictions(table.labels, preds, classes)
    return float(np.trace(cm.counts) / cm.total), cm, chosen
