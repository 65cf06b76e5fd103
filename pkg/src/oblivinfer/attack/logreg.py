"""The attack classifier: multinomial logistic regression on branch bits.

Plain full-batch gradient descent in float64 from a zero initialization, so
a retrain on the same dataset is bit-for-bit reproducible: no minibatching,
no stochasticity, a fixed iteration count.  L2 regularization applies to the
weights but not the intercept column.  Cross-validation uses a deterministic
stratified partition of the dataset order (example j of class c lands in
fold j mod k), making every reported number a pure function of the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import AttackDataset


@dataclass(frozen=True)
class LogRegHyper:
    learning_rate: float = 0.1
    iterations: int = 500
    l2: float = 1e-4


@dataclass
class AttackClassifier:
    weights: np.ndarray  # (classes, n_features + 1), bias last
    n_classes: int
    hyper: LogRegHyper
    loss_history: np.ndarray = field(repr=False, default=None)


def _design(features) -> np.ndarray:
    x = np.asarray(features, np.float64)
    return np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)


def _softmax_rows(s):
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def logreg_train(ds: AttackDataset, hyper: LogRegHyper = LogRegHyper()) -> AttackClassifier:
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    x1 = _design(ds.features)
    n, d1 = x1.shape
    c = ds.n_classes
    y = np.asarray(ds.labels, np.int64)
    if y.min() < 0 or y.max() >= c:
        raise ValueError(f"labels out of range for {c} classes")
    onehot = np.zeros((n, c), np.float64)
    onehot[np.arange(n), y] = 1.0
    w = np.zeros((c, d1), np.float64)
    lr = float(hyper.learning_rate)
    l2 = float(hyper.l2)
    hist = np.empty(hyper.iterations, np.float64)
    for it in range(hyper.iterations):
        p = _softmax_rows(x1 @ w.T)
        ll = -np.log(np.maximum(p[np.arange(n), y], 1e-300)).mean()
        hist[it] = ll + 0.5 * l2 * float((w[:, :-1] ** 2).sum())
        g = (p - onehot).T @ x1 / n
        g[:, :-1] += l2 * w[:, :-1]
        w -= lr * g
    return AttackClassifier(w, c, hyper, hist)


def objective(w, features, labels, n_classes, l2) -> float:
    """The exact quantity ``logreg_train`` descends (for gradient checks)."""
    x1 = _design(features)
    y = np.asarray(labels, np.int64)
    p = _softmax_rows(x1 @ w.T)
    ll = -np.log(np.maximum(p[np.arange(len(y)), y], 1e-300)).mean()
    return ll + 0.5 * l2 * float((w[:, :-1] ** 2).sum())


def predict(clf: AttackClassifier, features) -> np.ndarray:
    s = _design(features) @ clf.weights.T
    return np.argmax(s, axis=1).astype(np.int64)


def stratified_folds(labels, k: int):
    """Deterministic stratified partition: class-c example number j -> fold
    j mod k.  Every class must have at least k examples."""
    labels = np.asarray(labels, np.int64)
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    folds = [[] for _ in range(k)]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            raise ValueError(
                f"class {int(c)} has {len(idx)} examples, fewer than {k} folds"
            )
        for j, i in enumerate(idx):
            folds[j % k].append(i)
    return [np.sort(np.asarray(f, np.int64)) for f in folds]


def kfold_cv(ds: AttackDataset, k: int = 9, hyper: LogRegHyper = LogRegHyper()) -> float:
    """Mean held-out accuracy over the deterministic stratified folds."""
    folds = stratified_folds(ds.labels, k)
    accs = []
    all_idx = np.arange(len(ds))
    for f in folds:
        test_mask = np.zeros(len(ds), bool)
        test_mask[f] = True
        train = ds.subset(all_idx[~test_mask])
        clf = logreg_train(train, hyper)
        pred = predict(clf, ds.features[f])
        accs.append(float((pred == ds.labels[f]).mean()))
    return float(np.mean(accs))


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # (classes, classes), rows true, cols predicted
    n: int


def attack_eval(clf: AttackClassifier, features, labels) -> EvalReport:
    """Score a trained classifier against victim traces' true service labels."""
    labels = np.asarray(labels, np.int64)
    pred = predict(clf, features)
    c = clf.n_classes
    conf = np.zeros((c, c), np.int64)
    np.add.at(conf, (labels, pred), 1)
    return EvalReport(float((pred == labels).mean()), conf, len(labels))


def accuracy_by_size(ds: AttackDataset, sizes, k: int = 9,
                     hyper: LogRegHyper = LogRegHyper()):
    """CV accuracy on the first ``s`` collected traces for each size s."""
    out = []
    for s in sizes:
        s = int(s)
        if s > len(ds):
            raise ValueError(f"size {s} exceeds dataset ({len(ds)} traces)")
        out.append((s, kfold_cv(ds.subset(np.arange(s)), k, hyper)))
    return out
