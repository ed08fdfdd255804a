"""Combiners over the three component predictions, and out-of-fold stacking.

Feature rows are ``(pred_SRC_MT, pred_MT, pred_MT_MT)``. Three combiners:
the plain average, AdaBoost.R2 (weighted-median of boosted trees), and
gradient-boosted regression trees on squared error. All tree learners share
one CART implementation (``fit_tree``).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _accel
from .dataset import QERecord
from .errors import FoldTooSmall, InvariantViolation, NotFitted, TooFewRows
from .inputs import ALL_SETTINGS, Setting
from .predictor import ModelSpec, PredictorModel, TrainConfig, predict_corpus, train

KINDS = ("average", "adaboost", "gbrt")

GBRT_DEFAULTS = {"n_estimators": 600, "learning_rate": 0.01, "min_samples_split": 3, "max_depth": 3}
ADABOOST_DEFAULTS = {"n_estimators": 50, "learning_rate": 1.0, "max_depth": 3, "min_samples_split": 2}


# -- CART ---------------------------------------------------------------------


@dataclass
class RegressionTree:
    """Array-backed binary tree; ``feature[i] == -1`` marks a leaf.

    A row goes left when ``x[feature] <= threshold``.
    """

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            rows = np.nonzero(inner)[0]
            go_left = X[rows, f[rows]] <= threshold[node[rows]]
            node[rows] = np.where(go_left, left[node[rows]], right[node[rows]])
        return np.asarray(self.value)[node]

    def to_dict(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left, "right": self.right, "value": self.value}

    @classmethod
    def from_dict(cls, d) -> "RegressionTree":
        return cls(list(d["feature"]), list(d["threshold"]), list(d["left"]),
                   list(d["right"]), list(d["value"]))


def _wmean(y, w) -> float:
    if y.size and np.all(y == y[0]):
        return float(y[0])
    return float(np.dot(w, y) / w.sum())


def fit_tree(X, y, min_samples_split: int = 2, max_depth: int = 3, sample_weight=None,
             min_samples_leaf: int = 1) -> RegressionTree:
    """Greedy CART on weighted squared error.

    A node is a leaf when it reaches ``max_depth``, holds fewer than
    ``min_samples_split`` rows, or no split lowers its weighted squared error.
    Among equally good splits the lower feature index, then the lower
    threshold, wins.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError("fit_tree needs a non-empty 2-D X matching y")
    w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    tree = RegressionTree()

    def new_node(value):
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.value.append(value)
        return len(tree.value) - 1

    def grow(rows, depth):
        yr, wr = y[rows], w[rows]
        mean = _wmean(yr, wr)
        node = new_node(mean)
        if depth >= max_depth or rows.size < min_samples_split or np.all(yr == yr[0]):
            return node
        yc = yr - mean
        sse = float(np.dot(wr, yc * yc))
        tw = wr.sum()
        parent = float(np.dot(wr, yc)) ** 2 / tw
        best_score, best_f, best_thr = -math.inf, -1, 0.0
        for f in range(X.shape[1]):
            xf = X[rows, f]
            order = np.argsort(xf, kind="mergesort")
            xs = xf[order]
            score, i = _accel.split_scan(xs, yc[order], wr[order], min_samples_leaf)
            # rounding noise must not overturn the lower-feature tie-break
            if i >= 0 and (best_f < 0 or score - best_score > 1e-12 * best_score):
                thr = (xs[i] + xs[i + 1]) / 2.0
                if thr >= xs[i + 1]:
                    thr = xs[i]
                best_score, best_f, best_thr = score, f, float(thr)
        if best_f < 0 or best_score - parent <= 1e-12 * sse:
            return node
        go_left = X[rows, best_f] <= best_thr
        tree.feature[node] = best_f
        tree.threshold[node] = best_thr
        l = grow(rows[go_left], depth + 1)
        r = grow(rows[~go_left], depth + 1)
        tree.left[node] = l
        tree.right[node] = r
        return node

    grow(np.arange(X.shape[0]), 0)
    return tree


# -- gradient boosting --------------------------------------------------------


@dataclass
class GBRTModel:
    init_value: float
    trees: list
    learning_rate: float = 0.01
    params: dict = field(default_factory=dict)
    train_loss: list = field(default_factory=list)

    def raw_predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.init_value)
        for t in self.trees:
            out = out + self.learning_rate * t.predict(X)
        return out

    def staged_raw_predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.init_value)
        yield out
        for t in self.trees:
            out = out + self.learning_rate * t.predict(X)
            yield out

    def predict(self, X) -> np.ndarray:
        return np.clip(self.raw_predict(X), 0.0, 1.0)


def fit_gbrt(X, y, n_estimators: int = 600, learning_rate: float = 0.01,
             min_samples_split: int = 3, max_depth: int = 3) -> GBRTModel:
    """Least-squares gradient boosting: each tree fits the current residuals."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] < 2:
        raise TooFewRows("gradient boosting needs at least 2 rows")
    init = _wmean(y, np.ones_like(y))
    F = np.full(y.shape[0], init)
    trees = []
    losses = [float(np.mean((y - F) ** 2))]
    for _ in range(n_estimators):
        tree = fit_tree(X, y - F, min_samples_split, max_depth)
        F = F + learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(float(np.mean((y - F) ** 2)))
    params = {"n_estimators": n_estimators, "learning_rate": learning_rate,
              "min_samples_split": min_samples_split, "max_depth": max_depth}
    return GBRTModel(init, trees, learning_rate, params, losses)


# -- AdaBoost.R2 --------------------------------------------------------------


def weighted_median(values, weights) -> np.ndarray:
    """Row-wise weighted median: smallest value whose cumulative weight reaches half."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    order = np.argsort(values, axis=1, kind="mergesort")
    cdf = np.cumsum(weights[order], axis=1)
    pick = np.argmax(cdf >= 0.5 * cdf[:, -1:], axis=1)
    rows = np.arange(values.shape[0])
    return values[rows, order[rows, pick]]


@dataclass
class AdaBoostR2Model:
    trees: list
    stage_weights: list
    params: dict = field(default_factory=dict)
    # per-stage bookkeeping: betas, mean losses, sample weights, train predictions
    trace: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        preds = np.column_stack([t.predict(X) for t in self.trees])
        return np.clip(weighted_median(preds, self.stage_weights), 0.0, 1.0)


def fit_adaboost_r2(X, y, n_estimators: int = 50, learning_rate: float = 1.0,
                    max_depth: int = 3, min_samples_split: int = 2, seed: int = 0) -> AdaBoostR2Model:
    """Drucker's AdaBoost.R2 with linear loss and weighted-bootstrap tree fits."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise TooFewRows("AdaBoost.R2 needs at least 2 rows")
    rng = np.random.default_rng(seed)
    w = np.full(n, 1.0 / n)
    trees, stage_weights = [], []
    trace = {"betas": [], "mean_losses": [], "sample_weights": [w.copy()], "train_preds": [],
             "bootstrap": []}
    for _ in range(n_estimators):
        boot = rng.choice(n, size=n, replace=True, p=w)
        tree = fit_tree(X[boot], y[boot], min_samples_split, max_depth)
        pred = tree.predict(X)
        err = np.abs(pred - y)
        trace["bootstrap"].append(boot)
        trace["train_preds"].append(pred)
        D = float(err.max())
        if D == 0.0:
            trees.append(tree)
            stage_weights.append(1.0)
            break
        loss = err / D
        mean_loss = float(np.dot(w, loss))
        trace["mean_losses"].append(mean_loss)
        if mean_loss >= 0.5:
            # the first learner is kept so the model is never empty
            if not trees:
                trees.append(tree)
                stage_weights.append(1.0)
            break
        beta = mean_loss / (1.0 - mean_loss)
        if beta <= 0.0:
            trees.append(tree)
            stage_weights.append(1.0)
            break
        trees.append(tree)
        stage_weights.append(learning_rate * math.log(1.0 / beta))
        trace["betas"].append(beta)
        w = w * np.power(beta, (1.0 - loss) * learning_rate)
        w = w / w.sum()
        trace["sample_weights"].append(w.copy())
    params = {"n_estimators": n_estimators, "learning_rate": learning_rate,
              "max_depth": max_depth, "min_samples_split": min_samples_split, "seed": seed}
    return AdaBoostR2Model(trees, stage_weights, params, trace)


# -- average and the combined model -------------------------------------------


def average_combine(rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[0] == 0:
        raise ValueError("average_combine needs at least one row")
    return rows.mean(axis=1)


@dataclass
class EnsembleModel:
    kind: str
    payload: object = None

    @property
    def fitted(self) -> bool:
        return self.kind == "average" or self.payload is not None

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if isinstance(self.payload, GBRTModel):
            d.update(init_value=self.payload.init_value, learning_rate=self.payload.learning_rate,
                     params=self.payload.params, trees=[t.to_dict() for t in self.payload.trees])
        elif isinstance(self.payload, AdaBoostR2Model):
            d.update(params=self.payload.params, stage_weights=self.payload.stage_weights,
                     trees=[t.to_dict() for t in self.payload.trees])
        return d

    @classmethod
    def from_dict(cls, d) -> "EnsembleModel":
        kind = d["kind"]
        if kind == "gbrt":
            trees = [RegressionTree.from_dict(t) for t in d["trees"]]
            return cls(kind, GBRTModel(d["init_value"], trees, d["learning_rate"], d["params"]))
        if kind == "adaboost":
            trees = [RegressionTree.from_dict(t) for t in d["trees"]]
            return cls(kind, AdaBoostR2Model(trees, list(d["stage_weights"]), d["params"]))
        if kind == "average":
            return cls(kind)
        raise ValueError(f"unknown ensemble kind {kind!r}")

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def loads(cls, text: str) -> "EnsembleModel":
        return cls.from_dict(json.loads(text))


def fit_combiner(kind: str, X, y, params: Optional[dict] = None) -> EnsembleModel:
    params = dict(params or {})
    if kind == "average":
        return EnsembleModel("average")
    if kind == "gbrt":
        return EnsembleModel("gbrt", fit_gbrt(X, y, **{**GBRT_DEFAULTS, **params}))
    if kind == "adaboost":
        return EnsembleModel("adaboost", fit_adaboost_r2(X, y, **{**ADABOOST_DEFAULTS, **params}))
    raise ValueError(f"unknown ensemble kind {kind!r}; expected one of {KINDS}")


def ensemble_predict(model: EnsembleModel, rows) -> np.ndarray:
    if model is None or not model.fitted:
        raise NotFitted("ensemble has not been fitted")
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if model.kind == "average":
        out = average_combine(rows)
    else:
        out = model.payload.predict(rows)
    return np.clip(out, 0.0, 1.0)


# -- stacking -----------------------------------------------------------------


def assign_folds(n: int, k: int, seed: int) -> list:
    """Seeded shuffle of ``range(n)`` cut into ``k`` contiguous, near-equal folds."""
    if k < 2:
        raise FoldTooSmall("need at least 2 folds")
    if k > n:
        raise FoldTooSmall(f"{k} folds over {n} records leaves empty folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class StackedEnsemble:
    combiner: EnsembleModel
    components: dict
    oof: np.ndarray
    folds: list
    fold_train_ids: list
    seed: int
    k: int
    record_ids: list

    def fold_of(self) -> np.ndarray:
        out = np.empty(len(self.record_ids), dtype=np.int64)
        for f, members in enumerate(self.folds):
            out[members] = f
        return out

    def features(self, records: Sequence[QERecord]) -> np.ndarray:
        return component_features(self.components, records)

    def predict(self, records: Sequence[QERecord]) -> np.ndarray:
        return ensemble_predict(self.combiner, self.features(records))


def component_features(components: dict, records: Sequence[QERecord]) -> np.ndarray:
    cols = [np.array([p for _, p in predict_corpus(components[s], records)]) for s in ALL_SETTINGS]
    return np.column_stack(cols) if records else np.empty((0, 3))


def train_components(records: Sequence[QERecord], spec: ModelSpec, config: TrainConfig) -> dict:
    out = {}
    for s in ALL_SETTINGS:
        model, _ = train(spec.build(s), records, config)
        out[s] = model
    return out


def stack_train(records: Sequence[QERecord], spec: ModelSpec = None, config: TrainConfig = None,
                k: int = 10, seed: int = 42, kind: str = "gbrt", combiner_params: Optional[dict] = None,
                n_jobs: int = 1) -> StackedEnsemble:
    """Out-of-fold stacking.

    For each fold, fresh components for all three settings are trained on the
    remaining folds and predict the held-out records, so every record gets
    exactly one feature row from models that never saw it. The combiner is
    fitted on these rows; final components are retrained on all records.
    """
    spec = spec or ModelSpec()
    config = config or TrainConfig()
    records = list(records)
    n = len(records)
    folds = assign_folds(n, k, seed)
    oof = np.full((n, 3), np.nan)
    fold_train_ids = []

    def run_fold(members):
        held = set(members.tolist())
        train_recs = [records[i] for i in range(n) if i not in held]
        comps = train_components(train_recs, spec, config)
        return [r.id for r in train_recs], component_features(comps, [records[i] for i in members])

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run_fold, folds))
    else:
        results = [run_fold(f) for f in folds]
    for members, (train_ids, feats) in zip(folds, results):
        fold_train_ids.append(frozenset(train_ids))
        oof[members] = feats
    if np.isnan(oof).any():
        raise InvariantViolation("out-of-fold features do not cover every record")

    gold = np.array([r.hter for r in records], dtype=np.float64)
    combiner = fit_combiner(kind, oof, gold, combiner_params)
    components = train_components(records, spec, config)
    return StackedEnsemble(combiner, components, oof, folds, fold_train_ids, seed, k,
                           [r.id for r in records])
