"""Two-stage workflow: clean and split data, rank features, fit the indoor model.

Stage one forecasts each non-control signal with its own autoregression;
stage two maps forecast ambient signals plus planned controls to the indoor
temperature with boosted trees.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import pandas as pd

from . import frame as fr
from .ar import AmbientForecast, LagSelectionConfig, forecast_ambient
from .control import ControlScenario, predict_future
from .gbm import GbmConfig, TreeEnsemble, boost, grow_forest
from .selection import ImportanceReport, grid_search, permutation_importance, select_top_features

DEFAULT_CONFIG = GbmConfig(n_trees=50, max_depth=4, learning_rate=0.3, row_subsample=0.6,
                         col_subsample=0.8)


@dataclass
class Prepared:
    train: pd.DataFrame
    test: pd.DataFrame
    standardizer: fr.Standardizer
    outliers: pd.DataFrame


def prepare(raw: pd.DataFrame, response: str, boundary, outlier_k: float = 6.0) -> Prepared:
    """Resample, drop response outliers, add calendar columns, split and fit z-scores.

    The standardizer covers numeric sensor columns other than the response
    and is fitted on training rows only.
    """
    data = fr.resample_minutely(raw)
    data, outliers = fr.remove_outliers(data, response, outlier_k)
    data = fr.engineer_time_features(data)
    train, test = fr.split(data, boundary)
    numeric = [c for c in fr.columns_of_kind(train, "numeric") if c != response]
    return Prepared(train, test, fr.fit_standardizer(train, numeric), outliers)


def rank_features(train: pd.DataFrame, response: str, n_trees: int = 200, max_depth: int = 8,
                  n_repeats: int = 5, seed: int = 0, holdout: float = 0.1
                  ) -> tuple[ImportanceReport, TreeEnsemble]:
    """Random-forest permutation importance of every non-response column.

    The forest is fitted on the chronologically earlier rows and scored on
    the last ``holdout`` fraction.
    """
    features = [c for c in train.columns if c != response]
    fit_part, valid = fr.chronological_holdout(train, holdout)
    forest = grow_forest(fit_part[features].to_numpy(dtype=float),
                         fit_part[response].to_numpy(dtype=float), features, n_trees, max_depth, seed)
    report = permutation_importance(forest, valid, response, n_repeats=n_repeats, seed=seed)
    return report, forest


def train_indoor_model(train: pd.DataFrame, response: str, features: Sequence[str],
                       standardizer: fr.Standardizer | None = None,
                       grid: Mapping[str, Sequence] | None = None,
                       base: GbmConfig = DEFAULT_CONFIG, holdout: float = 0.1):
    """Fit the stage-two boosted model, optionally grid-searching on a holdout.

    Returns ``(ensemble, config, table)``; ``table`` is ``None`` without a grid.
    The final model is refitted on all training rows with the chosen config.
    """
    rows = standardizer.transform(train) if standardizer is not None else train
    table = None
    config = base
    if grid:
        fit_part, valid = fr.chronological_holdout(rows, holdout)
        config, table = grid_search(fit_part, valid, response, features, grid, base)
    X = rows[list(features)].to_numpy(dtype=float)
    y = rows[response].to_numpy(dtype=float)
    return boost(X, y, list(features), config), config, table


@dataclass
class TwoStageModel:
    history: pd.DataFrame
    response: str
    features: list[str]
    controls: list[str]
    ensemble: TreeEnsemble
    standardizer: fr.Standardizer | None = None
    lag_config: LagSelectionConfig = field(default_factory=LagSelectionConfig)

    def __post_init__(self):
        if self.response in self.controls:
            raise ValueError("the response cannot be a control")
        unknown = [c for c in self.controls if c not in self.features]
        if unknown:
            raise ValueError(f"controls {unknown} are not model features")

    @property
    def history_end(self) -> pd.Timestamp:
        return self.history.index[-1]

    @property
    def non_control(self) -> list[str]:
        return [f for f in self.features if f not in self.controls]

    def forecast_ambient(self, horizon: int) -> AmbientForecast:
        return forecast_ambient(self.history, self.non_control, horizon, self.lag_config)

    def predict(self, ambient: pd.DataFrame, scenario: ControlScenario) -> pd.Series:
        return predict_future(self.ensemble, ambient, scenario, self.standardizer)

    def default_before(self, controls: Sequence[str]) -> dict[str, float]:
        """Pre-switch control values: booleans off, numeric at last observation."""
        kinds = fr.column_kinds(self.history)
        return {c: 0.0 if kinds.get(c) == "boolean" else float(self.history[c].iloc[-1])
                for c in controls}

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.ensemble.save(d / "model.json")
        if self.standardizer is not None:
            self.standardizer.save(d / "standardizer.json")
        meta = {"response": self.response, "features": self.features, "controls": self.controls,
                "pacf_threshold": self.lag_config.pacf_threshold,
                "max_lag": self.lag_config.max_lag}
        (d / "two_stage.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, directory: str | Path, history: pd.DataFrame) -> "TwoStageModel":
        d = Path(directory)
        meta = json.loads((d / "two_stage.json").read_text())
        std = d / "standardizer.json"
        return cls(history, meta["response"], meta["features"], meta["controls"],
                   TreeEnsemble.load(d / "model.json"),
                   fr.Standardizer.load(std) if std.exists() else None,
                   LagSelectionConfig(meta["pacf_threshold"], meta["max_lag"]))


def fit_two_stage(train: pd.DataFrame, response: str, controls: Sequence[str], top_k: int = 15,
                  seed: int = 0, standardizer: fr.Standardizer | None = None,
                  grid: Mapping[str, Sequence] | None = None, base: GbmConfig = DEFAULT_CONFIG,
                  lag_config: LagSelectionConfig = LagSelectionConfig(),
                  forest_trees: int = 200) -> tuple[TwoStageModel, ImportanceReport]:
    """Feature ranking, selection and stage-two training in one call."""
    report, _ = rank_features(train, response, n_trees=forest_trees, seed=seed)
    features = select_top_features(report, top_k, always=controls)
    ensemble, _, _ = train_indoor_model(train, response, features, standardizer, grid,
                                        replace(base, seed=seed))
    model = TwoStageModel(train, response, features, list(controls), ensemble, standardizer,
                          lag_config)
    return model, report
