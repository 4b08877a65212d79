"""Regression trees with exact greedy second-order splits.

One tree grower serves two ensembles:

* ``boosted``: squared-error gradient boosting with row/column subsampling,
  L2-regularised leaf weights and a split penalty;
* ``forest``: bagged trees on bootstrap samples with a per-split feature
  subsample, used for permutation importance.

Internal nodes route a row left iff ``value < threshold``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

FORMAT_NAME = "heatcast-ensemble"
FORMAT_VERSION = 1


class GbmError(ValueError):
    pass


@dataclass(frozen=True)
class GbmConfig:
    n_trees: int = 50
    max_depth: int = 4
    learning_rate: float = 0.3
    row_subsample: float = 0.6
    col_subsample: float = 0.8
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise GbmError("n_trees must be at least 1")
        if self.max_depth < 0:
            raise GbmError("max_depth must be non-negative")
        for name in ("learning_rate", "row_subsample", "col_subsample"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise GbmError(f"{name} must lie in (0, 1], got {v}")
        for name in ("reg_lambda", "gamma", "min_child_weight"):
            if getattr(self, name) < 0:
                raise GbmError(f"{name} must be non-negative")


@dataclass
class Tree:
    """Pre-order node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    def depth(self, i: int = 0) -> int:
        if self.is_leaf(i):
            return 0
        return 1 + max(self.depth(self.left[i]), self.depth(self.right[i]))

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f >= 0}

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        active = np.arange(len(X))
        while active.size:
            f = self.feature[node[active]]
            internal = f >= 0
            active = active[internal]
            if not active.size:
                break
            cur = node[active]
            go_left = X[active, self.feature[cur]] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]

    def scaled(self, factor: float) -> "Tree":
        return replace(self, value=self.value * factor)

    def to_rows(self) -> list[list]:
        return [
            [int(self.feature[i]), float(self.threshold[i]), int(self.left[i]),
             int(self.right[i]), float(self.value[i]), float(self.gain[i]), float(self.cover[i])]
            for i in range(self.n_nodes)
        ]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence]) -> "Tree":
        cols = list(zip(*rows)) if rows else [()] * 7
        return cls(
            feature=np.asarray(cols[0], dtype=np.intp),
            threshold=np.asarray(cols[1], dtype=float),
            left=np.asarray(cols[2], dtype=np.intp),
            right=np.asarray(cols[3], dtype=np.intp),
            value=np.asarray(cols[4], dtype=float),
            gain=np.asarray(cols[5], dtype=float),
            cover=np.asarray(cols[6], dtype=float),
        )


def split_gain(GL, HL, GR, HR, reg_lambda: float, gamma: float):
    """Second-order gain of splitting a node into (GL, HL) and (GR, HR)."""
    G = GL + GR
    H = HL + HR
    return 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda)
                  - G * G / (H + reg_lambda)) - gamma


def leaf_weight(G: float, H: float, reg_lambda: float) -> float:
    denom = H + reg_lambda
    return -G / denom if denom > 0 else 0.0


def _best_split(X, g, h, idx, features, reg_lambda, gamma, min_child_weight):
    """Best (gain, feature, threshold) over ``features`` for rows ``idx``.

    Ties keep the earliest feature in ``features`` and the lowest threshold.
    """
    gn = g[idx]
    hn = h[idx]
    G = gn.sum()
    H = hn.sum()
    best = (-math.inf, -1, 0.0)
    for f in features:
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        distinct = xs[:-1] < xs[1:]
        if not distinct.any():
            continue
        GL = np.cumsum(gn[order])[:-1]
        HL = np.cumsum(hn[order])[:-1]
        GR = G - GL
        HR = H - HL
        ok = distinct & (HL >= min_child_weight) & (HR >= min_child_weight)
        ok &= (HL + reg_lambda > 0) & (HR + reg_lambda > 0)
        if not ok.any():
            continue
        pos = np.flatnonzero(ok)
        gains = split_gain(GL[pos], HL[pos], GR[pos], HR[pos], reg_lambda, gamma)
        j = int(np.argmax(gains))
        if gains[j] > best[0]:
            i = pos[j]
            thr = 0.5 * (xs[i] + xs[i + 1])
            if not xs[i] < thr:
                thr = xs[i + 1]
            best = (float(gains[j]), int(f), float(thr))
    return best


def fit_tree(
    X,
    gradients,
    hessians,
    config: GbmConfig | None = None,
    *,
    max_depth: int | None = None,
    reg_lambda: float | None = None,
    gamma: float | None = None,
    min_child_weight: float | None = None,
    features: Sequence[int] | None = None,
    split_features: Callable[[], Sequence[int]] | None = None,
) -> Tree:
    """Grow one tree depth-first on gradient/hessian statistics.

    Keyword overrides take precedence over ``config``. ``features`` restricts
    the candidate columns for the whole tree; ``split_features`` is called at
    every node to draw a fresh candidate set (random-forest style).
    """
    X = np.asarray(X, dtype=float)
    g = np.asarray(gradients, dtype=float)
    h = np.asarray(hessians, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise GbmError("fit_tree needs a non-empty 2-d row matrix")
    if len(g) != len(X) or len(h) != len(X):
        raise GbmError("gradients and hessians must match the number of rows")
    cfg = config or GbmConfig()
    depth_cap = cfg.max_depth if max_depth is None else max_depth
    lam = cfg.reg_lambda if reg_lambda is None else reg_lambda
    gam = cfg.gamma if gamma is None else gamma
    mcw = cfg.min_child_weight if min_child_weight is None else min_child_weight
    cols = list(range(X.shape[1])) if features is None else sorted(int(f) for f in features)

    nodes: list[list] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        me = len(nodes)
        G = float(g[idx].sum())
        H = float(h[idx].sum())
        nodes.append([-1, 0.0, -1, -1, leaf_weight(G, H, lam), 0.0, H])
        if depth >= depth_cap or len(idx) < 2:
            return me
        cand = cols if split_features is None else sorted(int(f) for f in split_features())
        gain, f, thr = _best_split(X, g, h, idx, cand, lam, gam, mcw)
        if f < 0 or not gain > 0:
            return me
        go_left = X[idx, f] < thr
        nodes[me][:2] = [f, thr]
        nodes[me][5] = gain
        nodes[me][4] = 0.0
        nodes[me][2] = grow(idx[go_left], depth + 1)
        nodes[me][3] = grow(idx[~go_left], depth + 1)
        return me

    grow(np.arange(len(X)), 0)
    return Tree.from_rows(nodes)


@dataclass
class TreeEnsemble:
    mode: str
    base_score: float
    trees: list[Tree]
    config: GbmConfig
    feature_names: list[str]
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("boosted", "forest"):
            raise GbmError(f"unknown ensemble mode {self.mode!r}")
        if self.mode == "forest" and not self.trees:
            raise GbmError("a forest needs at least one tree")

    def matrix(self, rows) -> np.ndarray:
        """Feature matrix in ``feature_names`` order."""
        if isinstance(rows, pd.DataFrame):
            missing = [c for c in self.feature_names if c not in rows.columns]
            if missing:
                raise GbmError(f"rows lack feature columns {missing}")
            return rows[self.feature_names].to_numpy(dtype=float)
        X = np.asarray(rows, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise GbmError(f"expected {len(self.feature_names)} feature columns")
        return X

    def predict(self, rows) -> np.ndarray:
        X = self.matrix(rows)
        if self.mode == "forest":
            total = np.zeros(len(X))
            for t in self.trees:
                total += t.predict(X)
            return self.base_score + total / len(self.trees)
        out = np.full(len(X), self.base_score, dtype=float)
        for t in self.trees:
            out += t.predict(X)
        return out

    def staged_predict(self, rows):
        """Boosted predictions after each round."""
        X = self.matrix(rows)
        out = np.full(len(X), self.base_score, dtype=float)
        for t in self.trees:
            out = out + t.predict(X)
            yield out

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "mode": self.mode,
            "base_score": float(self.base_score),
            "config": asdict(self.config),
            "feature_names": list(self.feature_names),
            "node_fields": ["feature", "threshold", "left", "right", "value", "gain", "cover"],
            "trees": [t.to_rows() for t in self.trees],
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TreeEnsemble":
        if data.get("format") != FORMAT_NAME:
            raise GbmError("not a serialized tree ensemble")
        if data.get("version") != FORMAT_VERSION:
            raise GbmError(f"unsupported ensemble format version {data.get('version')}")
        return cls(
            mode=data["mode"],
            base_score=float(data["base_score"]),
            trees=[Tree.from_rows(rows) for rows in data["trees"]],
            config=GbmConfig(**data["config"]),
            feature_names=list(data["feature_names"]),
            extra=dict(data.get("extra", {})),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TreeEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict(ensemble: TreeEnsemble, rows) -> np.ndarray:
    return ensemble.predict(rows)


def _training_arrays(train: pd.DataFrame, target: str, features: Sequence[str]):
    features = list(features)
    if not features:
        raise GbmError("feature list is empty")
    if target in features:
        raise GbmError(f"target {target!r} must not be a feature")
    missing = [c for c in [target] + features if c not in train.columns]
    if missing:
        raise GbmError(f"columns {missing} not in training frame")
    if not pd.api.types.is_numeric_dtype(train[target]):
        raise GbmError(f"target {target!r} is not numeric")
    if train.empty:
        raise GbmError("training frame is empty")
    return train[features].to_numpy(dtype=float), train[target].to_numpy(dtype=float), features


def _n_sampled(rate: float, n: int) -> int:
    return max(1, int(rate * n))


def boost(X: np.ndarray, y: np.ndarray, feature_names: Sequence[str], config: GbmConfig) -> TreeEnsemble:
    """Squared-error boosting on a row matrix; see :func:`fit_boosted`."""
    rng = np.random.default_rng(config.seed)
    n, p = X.shape
    base = float(np.mean(y))
    pred = np.full(n, base)
    hess = np.ones(n)
    trees = []
    for _ in range(config.n_trees):
        if config.row_subsample < 1:
            rows = np.sort(rng.choice(n, size=_n_sampled(config.row_subsample, n), replace=False))
        else:
            rows = np.arange(n)
        if config.col_subsample < 1:
            cols = np.sort(rng.choice(p, size=_n_sampled(config.col_subsample, p), replace=False))
        else:
            cols = None
        grad = pred - y
        tree = fit_tree(X[rows], grad[rows], hess[rows], config, features=cols)
        tree = tree.scaled(config.learning_rate)
        trees.append(tree)
        pred = pred + tree.predict(X)
    return TreeEnsemble("boosted", base, trees, config, list(feature_names))


def fit_boosted(train: pd.DataFrame, target: str, features: Sequence[str],
                config: GbmConfig = GbmConfig()) -> TreeEnsemble:
    """Gradient-boosted trees predicting ``target`` from ``features``.

    The base score is the target mean; every round fits a tree to the
    squared-error gradients of a seeded row/column subsample and adds it
    shrunk by the learning rate.
    """
    X, y, features = _training_arrays(train, target, features)
    return boost(X, y, features, config)


def grow_forest(X: np.ndarray, y: np.ndarray, feature_names: Sequence[str], n_trees: int,
                max_depth: int, seed: int, max_features: int | None = None,
                bootstrap: bool = True) -> TreeEnsemble:
    if n_trees < 1:
        raise GbmError("n_trees must be at least 1")
    rng = np.random.default_rng(seed)
    n, p = X.shape
    k = max_features or math.ceil(math.sqrt(p))
    k = min(k, p)
    ones = np.ones(n)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        draw = (lambda: rng.choice(p, size=k, replace=False)) if k < p else None
        # with lambda = 0 and unit hessians the gain is half the SSE reduction
        # and leaves hold the mean target
        trees.append(fit_tree(X[rows], -y[rows], ones, max_depth=max_depth, reg_lambda=0.0,
                              gamma=0.0, min_child_weight=1.0, split_features=draw))
    cfg = GbmConfig(n_trees=n_trees, max_depth=max_depth, learning_rate=1.0, row_subsample=1.0,
                    col_subsample=1.0, reg_lambda=0.0, gamma=0.0, min_child_weight=1.0, seed=seed)
    return TreeEnsemble("forest", 0.0, trees, cfg, list(feature_names),
                        {"max_features": k, "bootstrap": bootstrap})


def fit_forest(train: pd.DataFrame, target: str, features: Sequence[str], n_trees: int = 200,
               max_depth: int = 8, seed: int = 0, max_features: int | None = None,
               bootstrap: bool = True) -> TreeEnsemble:
    """Random forest of variance-reduction trees, averaged."""
    X, y, features = _training_arrays(train, target, features)
    return grow_forest(X, y, features, n_trees, max_depth, seed, max_features, bootstrap)


def dump_tree(ensemble: TreeEnsemble, index: int = 0, max_depth_shown: int | None = None) -> str:
    """Indented text of one tree: splits as ``feature < threshold``, left child first."""
    if not 0 <= index < len(ensemble.trees):
        raise GbmError(f"tree index {index} out of range (0..{len(ensemble.trees) - 1})")
    tree = ensemble.trees[index]
    names = ensemble.feature_names
    lines: list[str] = []

    def walk(i: int, depth: int):
        pad = "  " * depth
        if tree.is_leaf(i):
            lines.append(f"{pad}leaf: {tree.value[i]:.6g}")
        elif max_depth_shown is not None and depth >= max_depth_shown:
            lines.append(f"{pad}...")
        else:
            lines.append(f"{pad}{names[tree.feature[i]]} < {tree.threshold[i]:.6g}")
            walk(tree.left[i], depth + 1)
            walk(tree.right[i], depth + 1)

    walk(0, 0)
    return "\n".join(lines) + "\n"


def _frame_or_array(X, y=None):
    if isinstance(X, pd.DataFrame):
        names = [str(c) for c in X.columns]
        A = X.to_numpy(dtype=float)
    else:
        A = np.asarray(X, dtype=float)
        if A.ndim != 2:
            raise GbmError("X must be 2-d")
        names = [f"x{i}" for i in range(A.shape[1])]
    if len(A) == 0:
        raise GbmError("X has no rows")
    if y is None:
        return A, names
    y = np.asarray(y, dtype=float)
    if y.shape != (len(A),):
        raise GbmError("y must be 1-d with one value per row")
    return A, y, names


class BoostedTreeRegressor(RegressorMixin, BaseEstimator):
    """scikit-learn style front end to :func:`boost`."""

    def __init__(self, n_trees=50, max_depth=4, learning_rate=0.3, row_subsample=0.6,
                 col_subsample=0.8, reg_lambda=1.0, gamma=0.0, min_child_weight=1.0, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.row_subsample = row_subsample
        self.col_subsample = col_subsample
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.min_child_weight = min_child_weight
        self.seed = seed

    def fit(self, X, y):
        A, y, names = _frame_or_array(X, y)
        self.ensemble_ = boost(A, y, names, GbmConfig(**self.get_params()))
        self.feature_names_in_ = np.asarray(names, dtype=object)
        self.n_features_in_ = len(names)
        return self

    def predict(self, X):
        check_is_fitted(self)
        return self.ensemble_.predict(X if isinstance(X, pd.DataFrame) else np.asarray(X, dtype=float))


class ForestRegressor(RegressorMixin, BaseEstimator):
    """Bagged variance-reduction trees with ``ceil(sqrt(p))`` features per split."""

    def __init__(self, n_trees=200, max_depth=8, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = seed

    def fit(self, X, y):
        A, y, names = _frame_or_array(X, y)
        self.ensemble_ = grow_forest(A, y, names, self.n_trees, self.max_depth, self.seed)
        self.feature_names_in_ = np.asarray(names, dtype=object)
        self.n_features_in_ = len(names)
        return self

    def predict(self, X):
        check_is_fitted(self)
        return self.ensemble_.predict(X if isinstance(X, pd.DataFrame) else np.asarray(X, dtype=float))
