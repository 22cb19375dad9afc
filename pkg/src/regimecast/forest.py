"""Random-forest classifier built from scratch.

Greedy Gini trees with midpoint thresholds. Determinism rules: each tree's
random stream is derived from (seed, tree index), candidate features are
visited in ascending index order, and equal-gain splits break ties on lowest
feature index then lowest threshold. Serial and parallel fits are therefore
bit-identical.
"""

import json
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "ForestHyperparams",
    "Tree",
    "ForestModel",
    "fit_forest",
    "predict_proba",
    "predict",
    "permutation_importance",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

HYPERPARAM_RANGES = {
    "n_estimators": (10, 300),
    "max_depth": (1, 20),
    "min_samples_split": (1, 100),
    "min_samples_leaf": (1, 100),
    "max_samples": (0.1, 1.0),
    "min_weight_fraction_leaf": (0.0, 0.05),
    "max_features": (0.2, 1.0),
}

GAIN_EPS = 1e-12


@dataclass(frozen=True)
class ForestHyperparams:
    """The seven tuned hyperparameters; everything else is fixed at
    Gini splitting with bootstrap sampling."""

    n_estimators: int = 100
    max_depth: int = 10
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_samples: float = 1.0
    min_weight_fraction_leaf: float = 0.0
    max_features: float = 1.0

    def validate(self):
        for name, (lo, hi) in HYPERPARAM_RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ConfigError(f"hyperparameter {name}={v} outside [{lo}, {hi}]")

    def to_dict(self):
        return {k: getattr(self, k) for k in HYPERPARAM_RANGES}


@dataclass
class Tree:
    """Flat-array decision tree; children of a leaf are -1."""

    feature: np.ndarray  # int, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) sample counts routed to node

    @property
    def n_nodes(self):
        return len(self.feature)

    def proba(self, X):
        out = np.empty((len(X), self.counts.shape[1]))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if self.feature[node] < 0:
                c = self.counts[node]
                out[idx] = c / c.sum()
                continue
            go_left = X[idx, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], idx[go_left]))
            stack.append((self.right[node], idx[~go_left]))
        return out

    def depth(self):
        d = {0: 0}
        best = 0
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                d[self.left[node]] = d[node] + 1
                d[self.right[node]] = d[node] + 1
                best = max(best, d[node] + 1)
        return best


@dataclass
class ForestModel:
    trees: list
    classes: tuple
    seed: int
    feature_names: list = None
    hyperparams: ForestHyperparams = None
    degenerate: bool = False  # single-class training data
    degenerate_class: int = 0


def _gini(counts):
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float(np.sum(p * p))


def _grow(X, y, rows, hp, rng, n_classes, n_total, feature, threshold, left, right, counts,
          depth=0):
    node = len(feature)
    node_counts = np.bincount(y[rows], minlength=n_classes).astype(float)
    feature.append(-1)
    threshold.append(0.0)
    left.append(-1)
    right.append(-1)
    counts.append(node_counts)

    n = len(rows)
    parent_gini = _gini(node_counts)
    if (depth >= hp.max_depth or n < max(hp.min_samples_split, 2)
            or np.count_nonzero(node_counts) <= 1):
        return node

    n_feats = X.shape[1]
    n_cand = min(n_feats, max(1, ceil(hp.max_features * n_feats)))
    cand = np.sort(rng.choice(n_feats, size=n_cand, replace=False))

    # score every candidate feature in one vectorized pass; row k of the
    # weighted-gini table is the split with k + 1 samples on the left
    min_leaf = max(hp.min_samples_leaf, ceil(hp.min_weight_fraction_leaf * n_total))
    xs = X[np.ix_(rows, cand)]
    order = np.argsort(xs, axis=0, kind="stable")
    xs_sorted = np.take_along_axis(xs, order, axis=0)
    ys_sorted = y[rows][order]
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    valid = xs_sorted[:-1] < xs_sorted[1:]
    valid &= ((nl >= min_leaf) & (nr >= min_leaf))[:, None]
    if not valid.any():
        return node
    lc = np.stack([np.cumsum(ys_sorted[:-1] == c, axis=0) for c in range(n_classes)],
                  axis=2).astype(float)
    rc = node_counts[None, None, :] - lc
    gl = 1.0 - np.sum((lc / nl[:, None, None]) ** 2, axis=2)
    gr = 1.0 - np.sum((rc / nr[:, None, None]) ** 2, axis=2)
    weighted = (nl[:, None] * gl + nr[:, None] * gr) / n
    weighted[~valid] = np.inf
    # first-occurrence argmins give the tie-breaks: lowest threshold within a
    # feature, then lowest feature index (cand is sorted)
    j_pos = np.argmin(weighted, axis=0)
    per_feat = weighted[j_pos, np.arange(len(cand))]
    jf = int(np.argmin(per_feat))
    if parent_gini - per_feat[jf] <= GAIN_EPS:
        return node

    k = int(j_pos[jf])
    f = int(cand[jf])
    thr = float(0.5 * (xs_sorted[k, jf] + xs_sorted[k + 1, jf]))
    sorted_rows = rows[order[:, jf]]
    split = k + 1
    # greedy criterion: children never increase the weighted impurity
    assert per_feat[jf] <= parent_gini + GAIN_EPS
    feature[node] = f
    threshold[node] = thr
    left[node] = _grow(X, y, sorted_rows[:split], hp, rng, n_classes, n_total,
                       feature, threshold, left, right, counts, depth + 1)
    right[node] = _grow(X, y, sorted_rows[split:], hp, rng, n_classes, n_total,
                        feature, threshold, left, right, counts, depth + 1)
    return node


def _fit_tree(X, y, hp, seed, tree_index, n_classes, bootstrap):
    rng = np.random.default_rng([seed, tree_index])
    n = len(X)
    n_sample = max(1, ceil(hp.max_samples * n))
    rows = rng.integers(0, n, size=n_sample) if bootstrap else np.arange(n)
    feature, threshold, left, right, counts = [], [], [], [], []
    _grow(X, y, rows, hp, rng, n_classes, n_sample, feature, threshold, left, right, counts)
    return Tree(
        np.asarray(feature, dtype=int),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=int),
        np.asarray(right, dtype=int),
        np.asarray(counts, dtype=float),
    )


def fit_forest(X, y, hp: ForestHyperparams, seed: int = 0, classes=None,
               feature_names=None, bootstrap: bool = True, n_jobs: int = 1) -> ForestModel:
    """Fit the forest. ``y`` may hold class labels or integer codes.

    ``bootstrap=False`` is a test hook that trains every tree on the full
    sample. ``n_jobs`` > 1 builds trees in a thread pool; results are
    identical to the serial fit.
    """
    X = np.asarray(X, float)
    y = np.asarray(y)
    if len(X) != len(y):
        raise DataError(f"X has {len(X)} rows but y has {len(y)}")
    if np.any(np.isnan(X)):
        raise DataError("NaN in training features")
    if classes is None:
        classes = tuple(sorted(np.unique(y).tolist())) if y.dtype.kind in "OU" else \
            tuple(range(int(y.max()) + 1))
    lookup = {c: i for i, c in enumerate(classes)}
    y_enc = y if y.dtype.kind in "iu" else np.array([lookup[v] for v in y], dtype=int)
    n_classes = len(classes)

    present = np.unique(y_enc)
    if present.size < 2:
        return ForestModel([], classes, seed, feature_names, hp,
                           degenerate=True, degenerate_class=int(present[0]))

    def build(i):
        return _fit_tree(X, y_enc, hp, seed, i, n_classes, bootstrap)

    if n_jobs and n_jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(build, range(hp.n_estimators)))
    else:
        trees = [build(i) for i in range(hp.n_estimators)]
    return ForestModel(trees, classes, seed, feature_names, hp)


def predict_proba(model: ForestModel, X) -> np.ndarray:
    """Mean of per-tree leaf class frequencies; rows sum to 1."""
    X = np.atleast_2d(np.asarray(X, float))
    if np.any(np.isnan(X)):
        raise DataError("NaN in prediction features")
    n_classes = len(model.classes)
    if model.degenerate:
        out = np.zeros((len(X), n_classes))
        out[:, model.degenerate_class] = 1.0
        return out
    n_feats = max(model.trees[0].feature.max() + 1, 1)
    if X.shape[1] < n_feats:
        raise DataError(f"feature count mismatch: row has {X.shape[1]}, model uses {n_feats}")
    acc = np.zeros((len(X), n_classes))
    for tree in model.trees:
        acc += tree.proba(X)
    return acc / len(model.trees)


def predict(model: ForestModel, X):
    probs = predict_proba(model, X)
    idx = np.argmax(probs, axis=1)
    return np.array([model.classes[i] for i in idx])


def permutation_importance(model: ForestModel, X, y, metric=None, repeats: int = 5,
                           seed: int = 0) -> np.ndarray:
    """Mean drop of ``metric`` when one column at a time is shuffled."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    X = np.asarray(X, float)
    y = np.asarray(y)
    if metric is None:
        metric = lambda yt, yp: float(np.mean(yt == yp))
    baseline = metric(y, predict(model, X))
    rng = np.random.default_rng(seed)
    out = np.zeros(X.shape[1])
    for f in range(X.shape[1]):
        drops = []
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, f] = Xp[rng.permutation(len(X)), f]
            drops.append(baseline - metric(y, predict(model, Xp)))
        out[f] = float(np.mean(drops))
    return out


def model_to_dict(model: ForestModel) -> dict:
    return {
        "format": "regimecast-forest-v1",
        "classes": list(model.classes),
        "seed": model.seed,
        "feature_names": model.feature_names,
        "degenerate": model.degenerate,
        "degenerate_class": model.degenerate_class,
        "hyperparams": model.hyperparams.to_dict() if model.hyperparams else None,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "counts": t.counts.tolist(),
            }
            for t in model.trees
        ],
    }


def model_from_dict(doc: dict) -> ForestModel:
    if doc.get("format") != "regimecast-forest-v1":
        raise DataError(f"unknown model format {doc.get('format')!r}")
    trees = [
        Tree(
            np.asarray(t["feature"], dtype=int),
            np.asarray(t["threshold"], dtype=float),
            np.asarray(t["left"], dtype=int),
            np.asarray(t["right"], dtype=int),
            np.asarray(t["counts"], dtype=float),
        )
        for t in doc["trees"]
    ]
    hp = ForestHyperparams(**doc["hyperparams"]) if doc.get("hyperparams") else None
    return ForestModel(trees, tuple(doc["classes"]), doc["seed"], doc.get("feature_names"),
                       hp, doc.get("degenerate", False), doc.get("degenerate_class", 0))


def save_model(model: ForestModel, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> ForestModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
