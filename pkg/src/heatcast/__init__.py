"""Two-stage indoor temperature forecasting and heating control.

Stage one forecasts ambient sensor signals with per-column autoregressions;
stage two predicts the indoor temperature from those forecasts and planned
control settings with boosted regression trees. The control layer uses the
combined model to estimate warm-up times and schedule switch-on times.
"""
from .ar import ARForecaster, ARModel, LagSelectionConfig, fit_ar, forecast_ambient, pacf, select_lags
from .control import (ControlPlan, ControlScenario, HeatingEvent, Step, find_sustained_hit,
                      moving_average, plan_heating, predict_future, run_control_experiments)
from .frame import Standardizer, ingest_csv, write_csv
from .gbm import BoostedTreeRegressor, ForestRegressor, GbmConfig, TreeEnsemble
from .pipeline import TwoStageModel, fit_two_stage, prepare
from .selection import grid_search, permutation_importance, select_top_features
from .sensors import SensorId, parse_sensor_id
from .synth import HouseSpec, generate, house_a, true_warmup

__version__ = "0.1.0"

__all__ = [
    "ARForecaster", "ARModel", "LagSelectionConfig", "fit_ar", "forecast_ambient", "pacf",
    "select_lags", "ControlPlan", "ControlScenario", "HeatingEvent", "Step",
    "find_sustained_hit", "moving_average", "plan_heating", "predict_future",
    "run_control_experiments", "Standardizer", "ingest_csv", "write_csv",
    "BoostedTreeRegressor", "ForestRegressor", "GbmConfig", "TreeEnsemble", "TwoStageModel",
    "fit_two_stage", "prepare", "grid_search", "permutation_importance", "select_top_features",
    "SensorId", "parse_sensor_id", "HouseSpec", "generate", "house_a", "true_warmup",
]
