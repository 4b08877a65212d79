"""Shared fixtures: the house-A dataset and a two-stage model fitted on it."""
import pandas as pd
import pytest

from heatcast.pipeline import fit_two_stage, prepare
from heatcast.synth import HOUSE_A_END, HOUSE_A_RESPONSE, HOUSE_A_START, generate, house_a

SPLIT = "2019-12-30 14:39:00"
CONTROLS = ["1-13-HTV1", "1-14-TMP1", "1-8-TMP1"]


@pytest.fixture(scope="session")
def house_spec():
    return house_a()


@pytest.fixture(scope="session")
def house_raw(house_spec):
    return generate(house_spec, HOUSE_A_START, HOUSE_A_END)


@pytest.fixture(scope="session")
def house_prepared(house_raw):
    return prepare(house_raw, HOUSE_A_RESPONSE, SPLIT)


@pytest.fixture(scope="session")
def house_model(house_prepared):
    model, report = fit_two_stage(house_prepared.train, HOUSE_A_RESPONSE, CONTROLS,
                                  standardizer=house_prepared.standardizer)
    return model, report


def minute_frame(columns: dict, start="2019-12-30 00:00:00") -> pd.DataFrame:
    n = len(next(iter(columns.values())))
    index = pd.date_range(start, periods=n, freq="min", name="timestamp")
    return pd.DataFrame(columns, index=index)


_VERDICTS: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when != "call":
        return
    number, title = mark.args
    line = f"{'PASS' if report.passed else 'FAIL'} criterion {number:>2}: {title}"
    _VERDICTS.append(line)
    report.sections.append(("acceptance", line))


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
