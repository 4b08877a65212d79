"""End-to-end acceptance criteria; each test reports one PASS/FAIL line in the summary."""
import itertools
import time

import numpy as np
import pandas as pd
import pytest

from heatcast.ar import LagSelectionConfig, fit_ar, select_lags
from heatcast.cli import main
from heatcast.control import (ControlScenario, HeatingEvent, TargetUnreachable, load_cases,
                              moving_average, plan_heating, run_control_experiments)
from heatcast.gbm import GbmConfig, TreeEnsemble, boost, fit_boosted, fit_forest, fit_tree
from heatcast.pipeline import fit_two_stage, prepare
from heatcast.selection import permutation_importance
from heatcast.synth import (HOUSE_A_END, HOUSE_A_RESPONSE, HOUSE_A_START, HOUSE_A_VALVE, generate,
                            house_a, true_warmup)

from conftest import CONTROLS, SPLIT
from test_ar import simulate_ar
from test_control import CASES, NOW, RampModel, T, event
from test_selection import importance_fixture
from tree_oracle import fixture_datasets, oracle_predict, oracle_tree

MINUTE = pd.Timedelta(minutes=1)


@pytest.mark.acceptance(1, "AR recovery (exact recurrence to 1e-6, AR(1) 0.8 in (0.77, 0.83), < 5 s)")
def test_ar_recovery():
    start = time.perf_counter()
    x = np.zeros(200)
    x[0] = 10.0
    for t in range(1, len(x)):
        x[t] = 0.5 * x[t - 1] + 1
    exact = fit_ar(x, [1])
    noisy = fit_ar(simulate_ar([0.8], 10000, seed=1), [1])
    elapsed = time.perf_counter() - start
    assert abs(exact.mu - 1.0) < 1e-6 and abs(exact.alphas[0] - 0.5) < 1e-6
    assert 0.77 < noisy.alphas[0] < 0.83
    assert elapsed < 5


@pytest.mark.acceptance(2, "lag selection: AR(2) gives {1, 2}, white noise falls back to {1}")
def test_lag_selection():
    config = LagSelectionConfig(0.1)
    assert select_lags(simulate_ar([0.5, 0.3], 10000, seed=2), config) == [1, 2]
    noise = np.random.default_rng(3).standard_normal(10000)
    assert select_lags(noise, config) == [1]


@pytest.mark.acceptance(3, "single boosted tree equals brute-force greedy oracle on <= 8 rows")
def test_tree_oracle_equivalence():
    cases = fixture_datasets()
    assert all(len(y) <= 8 for _, y, _ in cases)
    for X, y, depth in cases:
        ens = boost(X, y, [f"f{i}" for i in range(X.shape[1])],
                    GbmConfig(n_trees=1, max_depth=depth, learning_rate=1.0, row_subsample=1.0,
                              col_subsample=1.0, reg_lambda=0.0, gamma=0.0))
        base = float(np.mean(y))
        tree = oracle_tree(X.tolist(), (base - y).tolist(), [1.0] * len(y), depth)
        grid = [list(p) for p in itertools.product(np.arange(-0.5, 5.0, 0.5), repeat=X.shape[1])]
        rows = X.tolist() + grid
        got = ens.predict(np.array(rows))
        assert got.tolist() == [base + oracle_predict(tree, r) for r in rows]


@pytest.mark.acceptance(4, "4-row gain example: gain 4/3, leaf weights +-2/3 at lambda 1")
def test_gain_example():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    tree = fit_tree(X, [-1, -1, 1, 1], [1, 1, 1, 1], max_depth=1, reg_lambda=1.0, gamma=0.0)
    assert abs(tree.gain[0] - 4 / 3) <= 1e-9
    assert abs(tree.value[tree.left[0]] - 2 / 3) <= 1e-9
    assert abs(tree.value[tree.right[0]] + 2 / 3) <= 1e-9


@pytest.mark.acceptance(5, "full-batch boosting RMSE non-increasing over 50 rounds on house-A")
def test_boosting_monotone(house_prepared):
    train = house_prepared.standardizer.transform(house_prepared.train)
    features = [c for c in train.columns if c != HOUSE_A_RESPONSE]
    ens = fit_boosted(train, HOUSE_A_RESPONSE, features,
                      GbmConfig(n_trees=50, row_subsample=1.0, col_subsample=1.0))
    y = train[HOUSE_A_RESPONSE].to_numpy()
    errs = [float(np.sqrt(np.mean((p - y) ** 2))) for p in ens.staged_predict(train)]
    assert len(errs) == 50
    assert all(b <= a for a, b in zip(errs, errs[1:]))


@pytest.mark.acceptance(6, "permutation importance: duplicate first, noise within 2 std, reproducible")
def test_permutation_importance():
    frame = importance_fixture()
    feats = ["signal", "weak", "noise", "dup"]
    forest = fit_forest(frame.iloc[:600], "y", feats, n_trees=40, max_depth=8)
    valid = frame.iloc[600:]
    a = permutation_importance(forest, valid, "y", n_repeats=10, seed=1)
    b = permutation_importance(forest, valid, "y", n_repeats=10, seed=1)
    assert a.ranking[0] == "dup"
    i = a.features.index("noise")
    assert abs(a.mean[i]) <= 2 * a.std[i]
    assert a == b and a.ranking == b.ranking


@pytest.mark.acceptance(7, "control lifts on house-A: hybrid >= each single case, singles > 0, < 60 s")
def test_lift_ordering():
    start = time.perf_counter()
    raw = generate(house_a(), HOUSE_A_START, HOUSE_A_END)
    prep = prepare(raw, HOUSE_A_RESPONSE, SPLIT)
    model, _ = fit_two_stage(prep.train, HOUSE_A_RESPONSE, CONTROLS, standardizer=prep.standardizer)
    ambient = model.forecast_ambient(201).frame
    results = run_control_experiments(model.ensemble, ambient, load_cases(CASES),
                                      model.standardizer)
    elapsed = time.perf_counter() - start
    lifts = {r.case.name: r.mean_lift for r in results}
    singles = [lifts["valve"], lifts["upstairs"], lifts["downstairs"]]
    assert all(s > 0 for s in singles), lifts
    assert all(lifts["hybrid"] >= s for s in singles), lifts
    assert elapsed < 60


@pytest.mark.acceptance(8, "static plan identity: switch + buffer + dt == t, dt >= gap switches now")
def test_static_identity():
    checked = 0
    for rate, lift, buffer, hold in itertools.product((0.01, 0.03, 0.1, 0.4), (0.2, 0.9, 1.7, 2.6),
                                                      (0, 3, 5, 12), (1, 20)):
        try:
            plan = plan_heating(event(20.0 + lift), NOW, RampModel(rate=rate), buffer=buffer,
                                hold=hold)
        except TargetUnreachable:
            continue
        checked += 1
        if plan.delta_t < T - NOW:
            assert plan.switch_on_time + plan.buffer + plan.delta_t == T
        else:
            assert plan.switch_on_time == NOW
    assert checked > 100


@pytest.mark.acceptance(9, "house-A warm-up within 3 min of truth for 0.3-0.8 C, iterative within 1 min")
def test_end_to_end_warmup(house_model, house_spec):
    model, _ = house_model
    now = pd.Timestamp("2019-12-30 16:00:00")
    target_time = pd.Timestamp("2019-12-30 18:00:00")
    horizon = int((target_time - model.history_end) / MINUTE) + 80
    ambient = model.forecast_ambient(horizon).frame
    pre = model.default_before(model.controls)
    idle = moving_average(model.predict(ambient, ControlScenario(pre)).to_numpy(), 20)
    baseline = float(idle[ambient.index.get_loc(now)])
    for delta in (0.3, 0.4, 0.5, 0.6, 0.7, 0.8):
        ev = HeatingEvent("Heating", "1-15", target_time, baseline + delta, (HOUSE_A_VALVE,))
        static = plan_heating(ev, now, model, "static")
        iterative = plan_heating(ev, now, model, "iterative")
        truth = true_warmup(house_spec, 15, {HOUSE_A_VALVE: 1.0}, delta)
        assert abs(static.delta_t_minutes - truth) <= 3, (delta, static.delta_t_minutes, truth)
        assert abs(iterative.delta_t_minutes - static.delta_t_minutes) <= 1


@pytest.mark.acceptance(10, "'heatcast all' twice with one seed gives byte-identical CSVs")
def test_cli_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["all", "--output-dir", str(tmp_path / name), "--seed", "0"]) == 0
    first = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    second = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*.csv"))
    assert first == second and len(first) >= 10
    for rel in first:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


@pytest.mark.acceptance(11, "ensemble save/load gives bit-identical predictions on 1000 rows")
def test_serialization(house_model, tmp_path):
    model, _ = house_model
    ens = model.ensemble
    ens.save(tmp_path / "model.json")
    back = TreeEnsemble.load(tmp_path / "model.json")
    rows = np.random.default_rng(4).normal(scale=2.0, size=(1000, len(ens.feature_names)))
    assert np.array_equal(back.predict(rows), ens.predict(rows))
    assert back.predict(rows).tobytes() == ens.predict(rows).tobytes()
