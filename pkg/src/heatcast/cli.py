"""Command-line entry point: ``heatcast <command> [options]``.

Every command reads from and writes to one workspace directory
(``--output-dir``), so the stages can be run one by one or chained with
``all``. Failures print a single JSON line on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from importlib import resources
from dataclasses import replace
from pathlib import Path

import pandas as pd

from . import frame as fr
from .ar import LagSelectionConfig
from .control import TargetUnreachable, load_cases, load_event, plan_heating, \
    run_control_experiments
from .gbm import dump_tree
from .pipeline import DEFAULT_CONFIG, TwoStageModel, prepare, rank_features, train_indoor_model
from .selection import select_top_features
from .synth import HOUSE_A_END, HOUSE_A_RESPONSE, HOUSE_A_START, HouseSpec, generate, house_a, \
    house_a_metadata

logger = logging.getLogger("heatcast")

DEFAULT_SPLIT = "2019-12-30 14:39:00"
DEFAULT_CONTROLS = "1-13-HTV1,1-14-TMP1,1-8-TMP1"
DEFAULT_NOW = "2019-12-30 16:00:00"

# workspace file names
DATA = "data.csv"
TRAIN = "train.csv"
TEST = "test.csv"
STANDARDIZER = "standardizer.json"
SELECTED = "selected_features.txt"
AMBIENT = "ambient_forecast.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _shipped(name: str) -> Path:
    return Path(str(resources.files("heatcast") / "data" / name))


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _controls(args) -> list[str]:
    controls = [c.strip() for c in args.controls.split(",") if c.strip()]
    if args.response in controls:
        raise UsageError("the response column cannot also be a control")
    return controls


def _save_plot(fig, path: Path) -> None:
    # drop the version stamp so images do not change with the matplotlib release
    fig.savefig(path, dpi=100, metadata={"Software": None})


def _figure(width=8, height=4):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt, plt.subplots(figsize=(width, height))


def cmd_synth(args) -> dict:
    """Generate a synthetic house dataset."""
    out = Path(args.output_dir)
    if args.spec:
        spec = HouseSpec.load(_require(Path(args.spec), "house spec"))
    else:
        spec = house_a()
    data = generate(spec, args.start, args.end, seed=args.seed)
    fr.write_csv(data, out / DATA)
    spec.save(out / "house_spec.json")
    meta = house_a_metadata(spec, data) if not args.spec else {
        "rows": len(data), "columns": data.shape[1], "seed": args.seed if args.seed is not None
        else spec.seed}
    (out / "fixture.json").write_text(json.dumps(meta, indent=2) + "\n")
    return {"rows": len(data), "columns": int(data.shape[1])}


def cmd_prepare(args) -> dict:
    """Resample, clean, split and standardize."""
    out = Path(args.output_dir)
    src = Path(args.input) if args.input else out / DATA
    raw = fr.ingest_csv(_require(src, "input data"))
    if raw.empty:
        raise fr.FrameError(f"{src} has no rows")
    if args.response not in raw.columns:
        raise UsageError(f"response column {args.response!r} not in {src}")
    prep = prepare(raw, args.response, args.split)
    fr.write_csv(prep.train, out / TRAIN)
    fr.write_csv(prep.test, out / TEST)
    prep.standardizer.save(out / STANDARDIZER)
    fr.write_csv(prep.outliers, out / "outliers.csv")
    report = {"train_rows": len(prep.train), "test_rows": len(prep.test),
              "outliers": len(prep.outliers), "columns": int(prep.train.shape[1])}
    (out / "prepare.txt").write_text("".join(f"{k} = {v}\n" for k, v in report.items()))
    return report


def _load_train(args) -> pd.DataFrame:
    out = Path(args.output_dir)
    src = Path(args.input) if getattr(args, "input", None) else out / TRAIN
    return fr.ingest_csv(_require(src, "training data"))


def cmd_select(args) -> dict:
    """Rank features by permutation importance and pick the top k."""
    out = Path(args.output_dir)
    train = _load_train(args)
    if args.response not in train.columns:
        raise UsageError(f"response column {args.response!r} not in training data")
    controls = _controls(args)
    report, _ = rank_features(train, args.response, n_trees=args.forest_trees, seed=_seed(args))
    chosen = select_top_features(report, args.top_k, always=controls)
    table = report.to_frame()
    table.to_csv(out / "importance.csv", index=False, float_format="%.10g", lineterminator="\n")
    (out / SELECTED).write_text("".join(f"{c}\n" for c in chosen))

    plt, (fig, ax) = _figure(8, max(3, 0.25 * len(table)))
    ax.barh(table["feature"][::-1], table["importance_mean"][::-1],
            xerr=table["importance_std"][::-1])
    ax.set_xlabel("RMSE increase when permuted")
    fig.tight_layout()
    _save_plot(fig, out / "importance.png")
    plt.close(fig)
    return {"features": len(chosen), "top": chosen[0]}


def _read_features(path: Path) -> list[str]:
    return [line.strip() for line in _require(path, "feature list").read_text().splitlines()
            if line.strip()]


def _read_grid(path: str | None):
    if not path:
        return None
    try:
        return json.loads(_require(Path(path), "grid file").read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"grid file is not valid JSON: {exc}") from exc


def cmd_train(args) -> dict:
    """Fit the indoor boosted-tree model."""
    out = Path(args.output_dir)
    train = _load_train(args)
    features = _read_features(Path(args.features) if args.features else out / SELECTED)
    controls = _controls(args)
    missing = [c for c in controls if c not in features]
    if missing:
        raise UsageError(f"controls {missing} are not among the selected features")
    std_path = out / STANDARDIZER
    std = fr.Standardizer.load(std_path) if std_path.exists() else None
    base = replace(DEFAULT_CONFIG, seed=_seed(args))
    ensemble, config, table = train_indoor_model(train, args.response, features, std,
                                                 _read_grid(args.grid), base)
    if table is None:
        table = pd.DataFrame([{k: getattr(config, k) for k in
                               ("n_trees", "max_depth", "learning_rate", "row_subsample",
                                "col_subsample")} | {"rmse": float("nan"), "best": True}])
    table.to_csv(out / "grid.csv", index=False, float_format="%.10g", lineterminator="\n")
    model = TwoStageModel(train, args.response, features, controls, ensemble, std,
                          LagSelectionConfig(args.pacf_threshold))
    model.save(out)
    (out / "tree_dump.txt").write_text(dump_tree(ensemble, 0) + "\n")
    return {"trees": len(ensemble.trees), "n_trees": config.n_trees,
            "max_depth": config.max_depth, "learning_rate": config.learning_rate}


def _load_model(args) -> TwoStageModel:
    out = Path(args.output_dir)
    _require(out / "two_stage.json", "trained model (run 'train' first)")
    model = TwoStageModel.load(out, _load_train(args))
    model.lag_config = LagSelectionConfig(args.pacf_threshold, model.lag_config.max_lag)
    return model


def cmd_forecast(args) -> dict:
    """Forecast ambient signals with per-column autoregressions."""
    out = Path(args.output_dir)
    model = _load_model(args)
    ambient = model.forecast_ambient(args.horizon)
    fr.write_csv(ambient.frame, out / AMBIENT)
    ambient.write_diagnostics(out / "ar_diagnostics.txt")
    return {"rows": len(ambient.frame), "columns": int(ambient.frame.shape[1])}


def cmd_experiments(args) -> dict:
    """Run the control experiment cases."""
    out = Path(args.output_dir)
    model = _load_model(args)
    amb_path = out / AMBIENT
    ambient = fr.ingest_csv(amb_path) if amb_path.exists() else \
        model.forecast_ambient(args.horizon).frame
    cases = load_cases(_require(Path(args.cases) if args.cases else _shipped("control_cases.json"),
                                "cases file"))
    results = run_control_experiments(model.ensemble, ambient, cases, model.standardizer)
    exp_dir = out / "experiments"
    exp_dir.mkdir(exist_ok=True)
    plt = None
    lifts = []
    for r in results:
        fr.write_csv(r.trajectories, exp_dir / f"{r.case.name}.csv")
        lifts.append({"case": r.case.name, "mean_lift": r.mean_lift})
        plt, (fig, ax) = _figure()
        ax.plot(r.trajectories.index, r.trajectories["with_control"], label="with control")
        ax.plot(r.trajectories.index, r.trajectories["no_control"], label="no control")
        if r.case.with_control.switch_time is not None:
            ax.axvline(r.case.with_control.switch_time, color="grey", linestyle=":")
        ax.set_title(r.case.name)
        ax.set_ylabel(model.response)
        ax.legend()
        fig.autofmt_xdate()
        fig.tight_layout()
        _save_plot(fig, exp_dir / f"{r.case.name}.png")
        plt.close(fig)
    pd.DataFrame(lifts).to_csv(out / "lifts.csv", index=False, float_format="%.10g",
                               lineterminator="\n")
    return {r["case"]: round(r["mean_lift"], 4) for r in lifts}


def cmd_plan(args) -> dict:
    """Schedule a heating switch-on for an event."""
    out = Path(args.output_dir)
    model = _load_model(args)
    event = load_event(_require(Path(args.event) if args.event else _shipped("sample_event.txt"),
                                "event file"))
    try:
        plan = plan_heating(event, args.now, model, args.mode, hold=args.hold_minutes,
                            buffer=args.buffer_minutes)
    except TargetUnreachable as exc:
        (out / "plan.txt").write_text(f"status = unreachable\nreason = {exc}\n")
        raise
    (out / "plan.txt").write_text("status = ok\n" + plan.to_text())
    traj = plan.trajectory.to_frame("smoothed")
    fr.write_csv(traj, out / "plan_trajectory.csv")
    plt, (fig, ax) = _figure()
    ax.plot(traj.index, traj["smoothed"], label="predicted (smoothed)")
    ax.axhline(plan.target_temperature, color="red", linestyle="--", label="target")
    ax.axvline(plan.t0, color="grey", linestyle=":")
    ax.axvline(plan.switch_on_time, color="green", linestyle="-.", label="switch on")
    ax.legend()
    fig.autofmt_xdate()
    fig.tight_layout()
    _save_plot(fig, out / "plan.png")
    plt.close(fig)
    return {"delta_t_minutes": plan.delta_t_minutes,
            "switch_on_time": plan.switch_on_time.strftime(fr.TIME_FORMAT)}


def cmd_all(args) -> dict:
    """Run every stage in order."""
    summary = {}
    if not args.input:
        summary["synth"] = cmd_synth(args)
    summary["prepare"] = cmd_prepare(args)
    args.input = None
    summary["select"] = cmd_select(args)
    summary["train"] = cmd_train(args)
    summary["forecast"] = cmd_forecast(args)
    summary["experiments"] = cmd_experiments(args)
    summary["plan"] = cmd_plan(args)
    return summary


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "select": cmd_select,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "experiments": cmd_experiments,
    "plan": cmd_plan,
    "all": cmd_all,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--output-dir", default="workspace", help="workspace directory")
    common.add_argument("--input", help="input CSV (defaults to the workspace file)")
    common.add_argument("--response", default=HOUSE_A_RESPONSE)
    common.add_argument("--controls", default=DEFAULT_CONTROLS,
                        help="comma-separated control columns")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--split", default=DEFAULT_SPLIT, help="last training timestamp")
    common.add_argument("--top-k", type=int, default=15)
    common.add_argument("--forest-trees", type=int, default=200)
    common.add_argument("--pacf-threshold", type=float, default=0.1)
    common.add_argument("--grid", help="JSON file mapping boosting parameters to value lists")
    common.add_argument("--features", help="selected feature list (one per line)")
    common.add_argument("--horizon", type=int, default=201, help="forecast minutes")
    common.add_argument("--cases", help="control experiment cases (JSON)")
    common.add_argument("--event", help="heating event file")
    common.add_argument("--now", default=DEFAULT_NOW)
    common.add_argument("--mode", choices=("static", "iterative"), default="static")
    common.add_argument("--hold-minutes", type=int, default=20)
    common.add_argument("--buffer-minutes", type=int, default=5)
    common.add_argument("--spec", help="house spec JSON for 'synth' (default: house-A)")
    common.add_argument("--start", default=HOUSE_A_START)
    common.add_argument("--end", default=HOUSE_A_END)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="heatcast", description="Indoor temperature forecasting and heating control.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__)
    return parser


def _fail(command: str, kind: str, message: str, code: int) -> int:
    line = json.dumps({"status": "error", "command": command, "error": kind,
                       "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    command = argv[0] if argv and not argv[0].startswith("-") else ""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(command, "usage", str(exc), 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        Path(args.output_dir).mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(args.command, "usage", str(exc), 2)
    except TargetUnreachable as exc:
        return _fail(args.command, "target_unreachable", str(exc), 3)
    except (ValueError, OSError, KeyError) as exc:
        return _fail(args.command, type(exc).__name__, str(exc), 1)
    logger.info("%s finished in %.2fs", args.command, time.perf_counter() - start)
    print(json.dumps({"status": "ok", "command": args.command, **summary}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
