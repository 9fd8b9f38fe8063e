"""Classifiers over counter datasets: decision tree, random forest, and a
small neural network, plus splitting, balancing, and evaluation metrics.

All three trainers are deterministic given (dataset, params, seed). The
tree split search runs through the compiled kernel path when numba is
active; forests train their trees in a thread pool when asked, with
per-tree generators spawned from the master seed so parallel and serial
runs produce identical models.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (EmptyDataset, InconsistentFeatures, NonFiniteLoss,
                     SingleClass, TooFewSamples)
from .hpc import Dataset

# Node counts above this make the cross-multiplied integer Gini compare
# overflow int64; larger nodes fall back to float64 scoring.
EXACT_SPLIT_LIMIT = 4000


def _threads(n_jobs=None) -> int:
    if n_jobs is not None:
        return max(1, int(n_jobs))
    env = os.environ.get("HPC_SENTINEL_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


# --- splitting and balancing -------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def split(d: Dataset, spec: SplitSpec):
    """Partition into (train, test); train gets floor(fraction * n) rows.

    Stratified mode keeps each class's share within one sample of the
    global fraction, using largest-remainder rounding so the total is
    still exactly floor(fraction * n).
    """
    n = len(d)
    n_train = int(math.floor(spec.train_fraction * n))
    if n < 2 or n_train < 1 or n - n_train < 1:
        raise TooFewSamples(f"cannot split {n} samples at "
                            f"{spec.train_fraction}")
    rng = np.random.default_rng(spec.seed)
    y = d.labels()
    if spec.stratified:
        if (y == 0).sum() == 0 or (y == 1).sum() == 0:
            raise TooFewSamples("stratified split needs both classes")
        targets = {}
        remainders = []
        for c in (0, 1):
            exact = spec.train_fraction * int((y == c).sum())
            targets[c] = int(math.floor(exact))
            remainders.append((-(exact - math.floor(exact)), c))
        short = n_train - sum(targets.values())
        for _, c in sorted(remainders)[:short]:
            targets[c] += 1
        train_idx = []
        for c in (0, 1):
            pool = np.flatnonzero(y == c)
            picked = rng.permutation(pool.shape[0])[:targets[c]]
            train_idx.extend(pool[picked].tolist())
    else:
        train_idx = rng.permutation(n)[:n_train].tolist()
    train_set = set(train_idx)
    test_idx = [i for i in range(n) if i not in train_set]
    return d.subset(sorted(train_idx)), d.subset(test_idx)


def balance(d: Dataset, seed: int = 0, downsample: bool = False) -> Dataset:
    """Equalize class counts; oversamples the minority with replacement
    by default, or discards majority rows when downsample is set."""
    y = d.labels()
    n0, n1 = int((y == 0).sum()), int((y == 1).sum())
    if n0 == 0 or n1 == 0:
        raise SingleClass("balancing needs both classes present")
    if n0 == n1:
        return d.subset(range(len(d)))
    rng = np.random.default_rng(seed)
    minority = 0 if n0 < n1 else 1
    min_idx = np.flatnonzero(y == minority)
    maj_idx = np.flatnonzero(y != minority)
    if downsample:
        keep = rng.choice(maj_idx, size=min_idx.shape[0], replace=False)
        order = sorted(min_idx.tolist() + keep.tolist())
        return d.subset(order)
    extra = rng.choice(min_idx, size=maj_idx.shape[0] - min_idx.shape[0],
                       replace=True)
    return d.subset(list(range(len(d))) + extra.tolist())


# --- confusion counts and metrics -------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for v in (self.tp, self.tn, self.fp, self.fn):
            if v < 0:
                raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionCounts":
        t = np.asarray(y_true)
        p = np.asarray(y_pred)
        return cls(tp=int(((t == 1) & (p == 1)).sum()),
                   tn=int(((t == 0) & (p == 0)).sum()),
                   fp=int(((t == 0) & (p == 1)).sum()),
                   fn=int(((t == 1) & (p == 0)).sum()))

    def as_dict(self):
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class Metrics:
    """Accuracy, precision and recall with malicious as the positive
    class; precision/recall carry defined-flags because their
    denominators can vanish."""

    accuracy: float
    precision: float
    recall: float
    fp_rate: float
    fn_rate: float
    precision_defined: bool = True
    recall_defined: bool = True

    @classmethod
    def from_counts(cls, c: ConfusionCounts) -> "Metrics":
        total = c.total
        if total == 0:
            raise ValueError("no samples evaluated")
        p_den = c.tp + c.fp
        r_den = c.tp + c.fn
        return cls(
            accuracy=(c.tp + c.tn) / total,
            precision=(c.tp / p_den) if p_den else float("nan"),
            recall=(c.tp / r_den) if r_den else float("nan"),
            fp_rate=c.fp / total,
            fn_rate=c.fn / total,
            precision_defined=p_den > 0,
            recall_defined=r_den > 0,
        )

    def as_dict(self):
        return {"accuracy": self.accuracy,
                "precision": self.precision,
                "recall": self.recall,
                "fp_rate": self.fp_rate,
                "fn_rate": self.fn_rate,
                "precision_defined": self.precision_defined,
                "recall_defined": self.recall_defined}


# --- decision tree ------------------------------------------------------------

@dataclass
class DecisionTreeModel:
    """Flat-array binary tree; node i is a leaf when feature[i] == -1.

    Internal nodes test x[feature] <= threshold and descend left on
    true. Leaves carry the training class counts; prediction is the
    majority class with ties resolved benign.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    feature_names: tuple
    params: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X)
        out = np.zeros(X.shape[0], dtype=np.int64)
        for r in range(X.shape[0]):
            i = 0
            while self.feature[i] >= 0:
                if X[r, self.feature[i]] <= self.threshold[i]:
                    i = self.left[i]
                else:
                    i = self.right[i]
            out[r] = 1 if self.counts[i, 1] > self.counts[i, 0] else 0
        return out

    def to_dict(self):
        return {"kind": "dt", "params": self.params,
                "feature_names": list(self.feature_names),
                "feature": self.feature.tolist(),
                "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d) -> "DecisionTreeModel":
        return cls(feature=np.asarray(d["feature"], dtype=np.int64),
                   threshold=np.asarray(d["threshold"], dtype=np.int64),
                   left=np.asarray(d["left"], dtype=np.int64),
                   right=np.asarray(d["right"], dtype=np.int64),
                   counts=np.asarray(d["counts"], dtype=np.int64),
                   feature_names=tuple(d["feature_names"]),
                   params=dict(d.get("params", {})))


class _TreeBuilder:
    def __init__(self, X, y, max_depth, min_samples_split, n_feats,
                 feature_rng=None):
        self.X = X
        self.y = y
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.n_feats = n_feats
        self.feature_rng = feature_rng
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.counts = []

    def _emit(self):
        self.feature.append(-1)
        self.threshold.append(0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append((0, 0))
        return len(self.feature) - 1

    def _candidate_features(self):
        total = self.X.shape[1]
        if self.feature_rng is None or self.n_feats >= total:
            return np.arange(total, dtype=np.int64)
        picked = self.feature_rng.choice(total, size=self.n_feats,
                                         replace=False)
        return np.sort(picked).astype(np.int64)

    def grow(self, idx, depth) -> int:
        node = self._emit()
        y_node = self.y[idx]
        c1 = int(y_node.sum())
        c0 = idx.shape[0] - c1
        self.counts[node] = (c0, c1)
        if (c0 == 0 or c1 == 0 or idx.shape[0] < self.min_samples_split
                or (self.max_depth is not None and depth >= self.max_depth)):
            return node
        feats = self._candidate_features()
        x_node = np.ascontiguousarray(self.X[idx])
        exact = idx.shape[0] <= EXACT_SPLIT_LIMIT
        f, t, found = _kernels.best_split(x_node, y_node, feats, exact)
        if not found:
            return node
        go_left = self.X[idx, f] <= t
        self.feature[node] = int(f)
        self.threshold[node] = int(t)
        self.left[node] = self.grow(idx[go_left], depth + 1)
        self.right[node] = self.grow(idx[~go_left], depth + 1)
        return node


def _grow_tree(X, y, feature_names, max_depth, min_samples_split,
               n_feats=None, feature_rng=None, params=None):
    b = _TreeBuilder(X, y, max_depth, min_samples_split,
                     n_feats if n_feats is not None else X.shape[1],
                     feature_rng)
    b.grow(np.arange(X.shape[0]), 0)
    return DecisionTreeModel(
        feature=np.asarray(b.feature, dtype=np.int64),
        threshold=np.asarray(b.threshold, dtype=np.int64),
        left=np.asarray(b.left, dtype=np.int64),
        right=np.asarray(b.right, dtype=np.int64),
        counts=np.asarray(b.counts, dtype=np.int64),
        feature_names=tuple(feature_names),
        params=params or {})


def train_dt(train: Dataset, max_depth=None,
             min_samples_split: int = 2) -> DecisionTreeModel:
    """CART with Gini impurity on integer features.

    Thresholds are midpoints (integer floor) between adjacent distinct
    values; node scoring compares exact integer cross-products so ties
    break reproducibly on (lowest feature, lowest threshold). A split
    must strictly reduce impurity or the node becomes a leaf.
    """
    if len(train) == 0:
        raise EmptyDataset("decision tree needs at least one sample")
    if min_samples_split < 2:
        raise ValueError("min_samples_split must be >= 2")
    X = train.matrix()
    y = train.labels()
    return _grow_tree(X, y, train.feature_names, max_depth,
                      min_samples_split,
                      params={"max_depth": max_depth,
                              "min_samples_split": min_samples_split})


# --- random forest ------------------------------------------------------------

@dataclass
class RandomForestModel:
    trees: list
    feature_names: tuple
    params: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X)
        votes = np.zeros(X.shape[0], dtype=np.int64)
        for t in self.trees:
            votes += t.predict(X)
        # strict majority: a tied vote stays benign
        return (2 * votes > len(self.trees)).astype(np.int64)

    def to_dict(self):
        return {"kind": "rf", "params": self.params,
                "feature_names": list(self.feature_names),
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d) -> "RandomForestModel":
        return cls(trees=[DecisionTreeModel.from_dict(t)
                          for t in d["trees"]],
                   feature_names=tuple(d["feature_names"]),
                   params=dict(d.get("params", {})))


def _resolve_max_features(max_features, total: int) -> int:
    if max_features is None:
        return total
    if max_features == "sqrt":
        return min(total, math.isqrt(total - 1) + 1 if total > 1 else 1)
    m = int(max_features)
    if not 1 <= m <= total:
        raise ValueError(f"max_features {m} outside [1, {total}]")
    return m


def train_rf(train: Dataset, n_trees: int = 100, seed: int = 0,
             bootstrap: bool = True, max_features="sqrt", max_depth=None,
             min_samples_split: int = 2, n_jobs=None) -> RandomForestModel:
    """Bagged trees with per-split random feature subsets.

    Every tree gets its own generator spawned from the master seed, so
    the forest is identical whether trees are trained serially or across
    the thread pool. max_features: "sqrt" (ceil of sqrt, the default),
    an int, or None for all features.
    """
    if len(train) == 0:
        raise EmptyDataset("random forest needs at least one sample")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = train.matrix()
    y = train.labels()
    n, total = X.shape
    m = _resolve_max_features(max_features, total)
    children = np.random.SeedSequence(seed).spawn(n_trees)

    def one(child):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        return _grow_tree(X[idx], y[idx], train.feature_names, max_depth,
                          min_samples_split, n_feats=m,
                          feature_rng=rng if m < total else None)

    jobs = _threads(n_jobs)
    if jobs > 1 and n_trees > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(one, children))
    else:
        trees = [one(c) for c in children]
    return RandomForestModel(
        trees=trees, feature_names=tuple(train.feature_names),
        params={"n_trees": n_trees, "seed": seed, "bootstrap": bootstrap,
                "max_features": max_features, "max_depth": max_depth,
                "min_samples_split": min_samples_split})


# --- neural network -----------------------------------------------------------

def _relu(z):
    return np.maximum(z, 0.0)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce(p, y):
    eps = 1e-12
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass
class NeuralNetModel:
    """One ReLU hidden layer into a sigmoid unit; inputs standardized
    with the training split's per-feature mean and deviation."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    mean: np.ndarray
    std: np.ndarray
    feature_names: tuple
    final_loss: float = float("nan")
    params: dict = field(default_factory=dict)

    def _standardize(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def predict_proba(self, X) -> np.ndarray:
        a1 = _relu(self._standardize(X) @ self.w1 + self.b1)
        return _sigmoid(a1 @ self.w2 + self.b2)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_dict(self):
        return {"kind": "nn", "params": self.params,
                "feature_names": list(self.feature_names),
                "layers": [self.w1.shape[0], self.w1.shape[1], 1],
                "activations": ["relu", "sigmoid"],
                "w1": self.w1.tolist(), "b1": self.b1.tolist(),
                "w2": self.w2.tolist(), "b2": self.b2,
                "mean": self.mean.tolist(), "std": self.std.tolist(),
                "final_loss": self.final_loss}

    @classmethod
    def from_dict(cls, d) -> "NeuralNetModel":
        return cls(w1=np.asarray(d["w1"], dtype=np.float64),
                   b1=np.asarray(d["b1"], dtype=np.float64),
                   w2=np.asarray(d["w2"], dtype=np.float64),
                   b2=float(d["b2"]),
                   mean=np.asarray(d["mean"], dtype=np.float64),
                   std=np.asarray(d["std"], dtype=np.float64),
                   feature_names=tuple(d["feature_names"]),
                   final_loss=float(d.get("final_loss", float("nan"))),
                   params=dict(d.get("params", {})))


def _init_nn(n_features: int, hidden: int, rng):
    lim1 = math.sqrt(6.0 / (n_features + hidden))
    lim2 = math.sqrt(6.0 / (hidden + 1))
    w1 = rng.uniform(-lim1, lim1, size=(n_features, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.uniform(-lim2, lim2, size=hidden)
    b2 = 0.0
    return w1, b1, w2, b2


def nn_loss_and_grads(w1, b1, w2, b2, Xs, y):
    """Full-batch BCE loss and analytic gradients; Xs already
    standardized."""
    n = Xs.shape[0]
    z1 = Xs @ w1 + b1
    a1 = _relu(z1)
    z2 = a1 @ w2 + b2
    p = _sigmoid(z2)
    loss = _bce(p, y)
    dz2 = (p - y) / n
    gw2 = a1.T @ dz2
    gb2 = float(dz2.sum())
    dz1 = np.outer(dz2, w2) * (z1 > 0)
    gw1 = Xs.T @ dz1
    gb1 = dz1.sum(axis=0)
    return loss, gw1, gb1, gw2, gb2


def train_nn(train: Dataset, hidden: int = 16, epochs: int = 600,
             lr: float = 0.5, seed: int = 0) -> NeuralNetModel:
    """Full-batch gradient descent; raises NonFiniteLoss on divergence."""
    if len(train) == 0:
        raise EmptyDataset("network training needs at least one sample")
    X = train.matrix().astype(np.float64)
    y = train.labels().astype(np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    Xs = (X - mean) / std
    rng = np.random.default_rng(seed)
    w1, b1, w2, b2 = _init_nn(X.shape[1], hidden, rng)
    loss = float("nan")
    # divergence is detected explicitly below; silence the overflow chatter
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            loss, gw1, gb1, gw2, gb2 = nn_loss_and_grads(w1, b1, w2, b2, Xs, y)
            if not math.isfinite(loss):
                raise NonFiniteLoss(epoch, loss)
            w1 = w1 - lr * gw1
            b1 = b1 - lr * gb1
            w2 = w2 - lr * gw2
            b2 = b2 - lr * gb2
        if epochs > 0:
            loss, *_ = nn_loss_and_grads(w1, b1, w2, b2, Xs, y)
            if not math.isfinite(loss):
                raise NonFiniteLoss(epochs, loss)
    return NeuralNetModel(w1=w1, b1=b1, w2=w2, b2=b2, mean=mean, std=std,
                          feature_names=tuple(train.feature_names),
                          final_loss=loss,
                          params={"hidden": hidden, "epochs": epochs,
                                  "lr": lr, "seed": seed})


# --- evaluation and serialization ---------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    counts: ConfusionCounts
    metrics: Metrics
    predictions: tuple
    by_attack: dict

    def as_dict(self):
        return {"counts": self.counts.as_dict(),
                "metrics": self.metrics.as_dict(),
                "n": self.counts.total,
                "predictions": list(self.predictions),
                "by_attack": {k: v.as_dict()
                              for k, v in self.by_attack.items()}}


def evaluate(model, test: Dataset) -> EvalReport:
    """Confusion counts and metrics on a held-out set, with a per-attack
    breakdown (benign rows grouped under "benign")."""
    if len(test) == 0:
        raise EmptyDataset("evaluation needs at least one sample")
    if tuple(model.feature_names) != tuple(test.feature_names):
        raise InconsistentFeatures(
            f"model expects features {model.feature_names}, dataset has "
            f"{test.feature_names}")
    y = test.labels()
    pred = model.predict(test.matrix())
    counts = ConfusionCounts.from_predictions(y, pred)
    groups = {}
    for i, s in enumerate(test.samples):
        key = s.attack_kind or "benign"
        groups.setdefault(key, []).append(i)
    by_attack = {k: ConfusionCounts.from_predictions(y[v], pred[v])
                 for k, v in sorted(groups.items())}
    return EvalReport(counts=counts, metrics=Metrics.from_counts(counts),
                      predictions=tuple(int(p) for p in pred),
                      by_attack=by_attack)


_MODEL_KINDS = {"dt": DecisionTreeModel, "rf": RandomForestModel,
                "nn": NeuralNetModel}


def model_to_json(model) -> str:
    return json.dumps(model.to_dict(), indent=2) + "\n"


def model_from_json(text: str):
    d = json.loads(text)
    kind = d.get("kind")
    if kind not in _MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    return _MODEL_KINDS[kind].from_dict(d)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
