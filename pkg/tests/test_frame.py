import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from heatcast import frame as fr
from heatcast.frame import FrameError, Standardizer

from conftest import minute_frame


def write(path, text):
    path.write_text(text)
    return path


class TestIngest:
    def test_minimal_file(self, tmp_path):
        p = write(tmp_path / "a.csv", "timestamp,1-15-TMP1\n2019-12-30 00:00:00,20.1\n"
                  "2019-12-30 00:01:00,20.2\n2019-12-30 00:02:00,20.3\n")
        frame = fr.ingest_csv(p)
        assert frame.shape == (3, 1)
        assert fr.column_kinds(frame) == {"1-15-TMP1": "numeric"}
        assert isinstance(frame.index, pd.DatetimeIndex)

    def test_duplicate_column(self, tmp_path):
        p = write(tmp_path / "a.csv", "timestamp,1-15-TMP1,1-15-TMP1\n2019-12-30 00:00:00,1,2\n")
        with pytest.raises(FrameError, match="duplicate column"):
            fr.ingest_csv(p)

    def test_bad_timestamp_reports_row(self, tmp_path):
        p = write(tmp_path / "a.csv", "timestamp,1-15-TMP1\n2019-12-30 00:00:00,1\nnot-a-time,2\n")
        with pytest.raises(FrameError, match="row 3"):
            fr.ingest_csv(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FrameError):
            fr.ingest_csv(tmp_path / "nope.csv")

    def test_empty_file(self, tmp_path):
        with pytest.raises(FrameError, match="empty"):
            fr.ingest_csv(write(tmp_path / "a.csv", ""))

    def test_boolean_out_of_range(self, tmp_path):
        p = write(tmp_path / "a.csv", "timestamp,1-13-HTV1\n2019-12-30 00:00:00,2\n")
        with pytest.raises(FrameError, match="boolean"):
            fr.ingest_csv(p)

    def test_schema_override(self, tmp_path):
        p = write(tmp_path / "a.csv", "timestamp,1-13-HTV1\n2019-12-30 00:00:00,2\n")
        frame = fr.ingest_csv(p, schema={"1-13-HTV1": "numeric"})
        assert fr.column_kinds(frame)["1-13-HTV1"] == "numeric"

    def test_write_read_round_trip(self, tmp_path):
        frame = minute_frame({"1-15-TMP1": [20.125, 21.5], "1-13-HTV1": [0.0, 1.0]})
        fr.write_csv(frame, tmp_path / "x.csv")
        back = fr.ingest_csv(tmp_path / "x.csv")
        pd.testing.assert_frame_equal(back, frame, check_freq=False)


class TestResample:
    def test_two_point_mean(self):
        idx = pd.to_datetime(["2019-12-30 00:00:10", "2019-12-30 00:00:40", "2019-12-30 00:01:00"])
        frame = pd.DataFrame({"1-15-TMP1": [20.0, 21.0, 22.0]}, index=idx)
        out = fr.resample_minutely(frame)
        assert out["1-15-TMP1"].tolist() == [20.5, 22.0]

    def test_identity_on_minutely(self):
        frame = minute_frame({"1-15-TMP1": [1.0, 2.0, 3.0]})
        out = fr.resample_minutely(frame)
        np.testing.assert_array_equal(out["1-15-TMP1"], [1.0, 2.0, 3.0])

    def test_boolean_fraction(self):
        idx = pd.to_datetime(["2019-12-30 00:00:10", "2019-12-30 00:00:20"])
        out = fr.resample_minutely(pd.DataFrame({"1-15-PIR1": [1.0, 0.0]}, index=idx))
        assert out["1-15-PIR1"].iloc[0] == 0.5

    def test_forward_fill_gap(self):
        idx = pd.to_datetime(["2019-12-30 00:00:00", "2019-12-30 00:03:00"])
        out = fr.resample_minutely(pd.DataFrame({"1-15-TMP1": [1.0, 4.0]}, index=idx))
        assert out["1-15-TMP1"].tolist() == [1.0, 1.0, 1.0, 4.0]
        assert (np.diff(out.index.asi8) == 60 * 10**9).all()

    def test_empty(self):
        with pytest.raises(FrameError):
            fr.resample_minutely(pd.DataFrame({"1-15-TMP1": []}, index=pd.DatetimeIndex([])))


class TestOutliers:
    def test_two_planted_outliers(self):
        rng = np.random.default_rng(3)
        values = 20 + rng.uniform(-0.1, 0.1, 1000)
        values[100], values[700] = 95.0, -40.0
        frame = minute_frame({"1-15-TMP1": values})
        cleaned, report = fr.remove_outliers(frame, "1-15-TMP1", 6)
        # brute-force median/MAD check
        med = np.median(values)
        mad = 1.4826 * np.median(np.abs(values - med))
        assert (np.abs(values - med) > 6 * mad).sum() == 2
        assert len(report) == 2 and len(cleaned) == 998
        assert set(report["1-15-TMP1"]) == {95.0, -40.0}
        again, report2 = fr.remove_outliers(cleaned, "1-15-TMP1", 6)
        assert len(report2) == 0 and len(again) == 998

    def test_constant_removes_nothing(self):
        frame = minute_frame({"1-15-TMP1": [21.0] * 50})
        cleaned, report = fr.remove_outliers(frame, "1-15-TMP1")
        assert len(cleaned) == 50 and report.empty

    def test_infinite_k_identity(self):
        frame = minute_frame({"1-15-TMP1": [1.0, 2.0, 100.0]})
        cleaned, _ = fr.remove_outliers(frame, "1-15-TMP1", np.inf)
        assert len(cleaned) == 3

    def test_missing_response(self):
        with pytest.raises(FrameError):
            fr.remove_outliers(minute_frame({"1-15-TMP1": [1.0]}), "1-14-TMP1")

    def test_boolean_response_rejected(self):
        with pytest.raises(FrameError, match="numeric"):
            fr.remove_outliers(minute_frame({"1-13-HTV1": [1.0]}), "1-13-HTV1")


class TestTimeFeatures:
    def test_monday_afternoon(self):
        frame = minute_frame({"1-15-TMP1": [1.0]}, start="2019-12-30 14:40:00")
        out = fr.engineer_time_features(frame)
        row = out.iloc[0]
        assert row["hours"] == 14 and row["Monday"] == 1
        assert row[list(fr.WEEKDAYS[1:])].sum() == 0
        assert all(fr.column_kinds(out)[c] == "engineered" for c in fr.ENGINEERED)

    def test_column_count(self):
        cols = {f"1-{i}-TMP1": [0.0] * 3 for i in range(53)}
        assert fr.engineer_time_features(minute_frame(cols)).shape[1] == 61

    def test_one_hot_over_a_week(self):
        frame = pd.DataFrame(index=pd.date_range("2019-12-23", periods=7 * 24, freq="h"))
        out = fr.engineer_time_features(frame)
        assert (out[list(fr.WEEKDAYS)].sum(axis=1) == 1).all()
        assert out["hours"].between(0, 23).all()


class TestSplit:
    def test_inclusive_train_boundary(self):
        frame = minute_frame({"x": np.arange(10.0)}, start="2019-12-30 14:35:00")
        train, test = fr.split(frame, "2019-12-30 14:39:00")
        assert train.index[-1] == pd.Timestamp("2019-12-30 14:39:00")
        assert test.index[0] == pd.Timestamp("2019-12-30 14:40:00")
        assert len(train) + len(test) == 10

    def test_boundary_at_end(self):
        frame = minute_frame({"x": np.arange(4.0)})
        train, test = fr.split(frame, frame.index[-1])
        assert test.empty and len(train) == 4

    def test_boundary_before_start(self):
        frame = minute_frame({"x": np.arange(4.0)})
        with pytest.raises(FrameError):
            fr.split(frame, frame.index[0] - pd.Timedelta(minutes=1))


class TestStandardizer:
    def test_hand_values(self):
        frame = minute_frame({"1-15-TMP1": [1.0, 2.0, 3.0]})
        s = Standardizer().fit(frame)
        assert s.mean_[0] == 2.0
        assert s.scale_[0] == pytest.approx(0.816496580927726, abs=1e-12)
        np.testing.assert_allclose(s.transform(frame)["1-15-TMP1"], [-1.224744871391589, 0.0,
                                                                     1.224744871391589])

    def test_zero_variance_names_column(self):
        frame = minute_frame({"1-15-TMP1": [1.0, 1.0], "1-14-TMP1": [1.0, 2.0]})
        with pytest.raises(FrameError, match="1-15-TMP1"):
            Standardizer().fit(frame)

    def test_train_stats_only(self):
        train = minute_frame({"1-15-TMP1": [1.0, 3.0]})
        test = minute_frame({"1-15-TMP1": [100.0, 200.0]})
        s = Standardizer().fit(train)
        s.transform(test)
        assert s.mean_[0] == 2.0 and s.scale_[0] == 1.0
        assert s.transform(test)["1-15-TMP1"].tolist() == [98.0, 198.0]

    def test_leaves_other_columns(self):
        frame = minute_frame({"1-15-TMP1": [1.0, 3.0], "1-13-HTV1": [0.0, 1.0]})
        out = Standardizer(["1-15-TMP1"]).fit_transform(frame)
        assert out["1-13-HTV1"].tolist() == [0.0, 1.0]

    def test_get_params_and_json(self, tmp_path):
        frame = minute_frame({"1-15-TMP1": [1.0, 3.0, 7.5]})
        s = Standardizer().fit(frame)
        assert s.get_params() == {"columns": None}
        s.save(tmp_path / "s.json")
        back = Standardizer.load(tmp_path / "s.json")
        pd.testing.assert_frame_equal(back.transform(frame), s.transform(frame))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=40))
    def test_round_trip_and_moments(self, values):
        values = np.asarray(values)
        if np.std(values) < 1e-3:
            return
        frame = minute_frame({"1-15-TMP1": values})
        s = Standardizer().fit(frame)
        z = s.transform(frame)["1-15-TMP1"].to_numpy()
        assert abs(z.mean()) < 1e-9 and abs(z.std() - 1) < 1e-9
        back = s.inverse_transform(s.transform(frame))["1-15-TMP1"].to_numpy()
        np.testing.assert_allclose(back, values, rtol=1e-9, atol=1e-9)


def test_holdout_is_chronological():
    frame = minute_frame({"x": np.arange(100.0)})
    fit, valid = fr.chronological_holdout(frame, 0.1)
    assert len(valid) == 10 and fit.index[-1] < valid.index[0]
