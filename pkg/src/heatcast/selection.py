"""Permutation importance, feature selection and grid search over boosting configs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .frame import WEEKDAYS
from .gbm import GbmConfig, GbmError, TreeEnsemble, boost

GRID_KEYS = ("n_trees", "max_depth", "learning_rate", "row_subsample", "col_subsample")


def rmse(y_true, y_pred) -> float:
    d = np.asarray(y_true, dtype=float) - np.asarray(y_pred, dtype=float)
    return float(np.sqrt(np.mean(d * d)))


@dataclass(frozen=True)
class ImportanceReport:
    features: tuple[str, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]
    n_repeats: int
    baseline: float

    @property
    def ranking(self) -> list[str]:
        order = sorted(range(len(self.features)), key=lambda i: -self.mean[i])
        return [self.features[i] for i in order]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"feature": self.features, "importance_mean": self.mean,
                              "importance_std": self.std})
        frame["rank"] = frame["feature"].map({f: r + 1 for r, f in enumerate(self.ranking)})
        return frame.sort_values("rank").reset_index(drop=True)


def permutation_importance(ensemble: TreeEnsemble, validation: pd.DataFrame, target: str,
                           n_repeats: int = 5, seed: int = 0,
                           features: Sequence[str] | None = None) -> ImportanceReport:
    """Mean RMSE increase when each feature column is shuffled.

    Columns are permuted ``n_repeats`` times each from one seeded generator,
    visiting features in ensemble order.
    """
    if n_repeats < 1:
        raise GbmError("n_repeats must be at least 1")
    if validation.empty:
        raise GbmError("validation frame is empty")
    X = ensemble.matrix(validation)
    y = validation[target].to_numpy(dtype=float)
    baseline = rmse(y, ensemble.predict(X))
    names = list(features) if features is not None else list(ensemble.feature_names)
    rng = np.random.default_rng(seed)
    means, stds = [], []
    for name in names:
        j = ensemble.feature_names.index(name)
        deltas = np.empty(n_repeats)
        for r in range(n_repeats):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(len(X)), j]
            deltas[r] = rmse(y, ensemble.predict(Xp)) - baseline
        means.append(float(deltas.mean()))
        stds.append(float(deltas.std()))
    return ImportanceReport(tuple(names), tuple(means), tuple(stds), n_repeats, baseline)


def select_top_features(report: ImportanceReport, top_k: int = 15,
                        always: Sequence[str] = ()) -> list[str]:
    """Top ``top_k`` ranked features plus any weekday flag left out.

    ``always`` names features that are kept regardless of rank (controls).
    """
    ranked = report.ranking
    chosen = ranked[:top_k]
    extras = [w for w in WEEKDAYS if w in report.features and w not in chosen]
    extras += [c for c in always if c not in chosen and c not in extras]
    return chosen + extras


def _tie_key(cfg: GbmConfig):
    return (cfg.n_trees, cfg.max_depth, cfg.learning_rate)


def grid_search(train: pd.DataFrame, valid: pd.DataFrame, target: str, features: Sequence[str],
                grid: Mapping[str, Sequence], base: GbmConfig = GbmConfig()
                ) -> tuple[GbmConfig, pd.DataFrame]:
    """Exhaustive search over the five tuned boosting parameters by validation RMSE.

    Axes missing from ``grid`` stay at their value in ``base``. Ties go to fewer
    trees, then shallower trees, then the lower learning rate.
    """
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise GbmError(f"grid may only tune {GRID_KEYS}, got {sorted(unknown)}")
    axes = {}
    for key in GRID_KEYS:
        values = list(grid.get(key, [getattr(base, key)]))
        if not values:
            raise GbmError(f"grid axis {key!r} is empty")
        axes[key] = values
    features = list(features)
    X = train[features].to_numpy(dtype=float)
    y = train[target].to_numpy(dtype=float)
    Xv = valid[features].to_numpy(dtype=float)
    yv = valid[target].to_numpy(dtype=float)
    rows = []
    for combo in itertools.product(*axes.values()):
        cfg = replace(base, **dict(zip(GRID_KEYS, combo)))
        score = rmse(yv, boost(X, y, features, cfg).predict(Xv))
        rows.append((cfg, score))
    best = min(rows, key=lambda r: (r[1],) + _tie_key(r[0]))[0]
    table = pd.DataFrame([{**{k: getattr(c, k) for k in GRID_KEYS}, "rmse": s} for c, s in rows])
    table["best"] = [c == best for c, _ in rows]
    return best, table
