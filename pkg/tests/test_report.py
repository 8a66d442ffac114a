import csv
import io

import pytest

from apnea_monitor.report import (
    HOURLY_COLUMNS,
    SERIES_COLUMNS,
    hourly_csv,
    hourly_table,
    ordinal,
    render_report,
)
from apnea_monitor.store import SessionError, SessionWriter


def test_ordinals():
    assert [ordinal(n) for n in (1, 2, 3, 4, 11, 12, 13, 21, 22)] == [
        "1st", "2nd", "3rd", "4th", "11th", "12th", "13th", "21st", "22nd"
    ]


HOURLY = [
    {"hour_index": 1, "mean_bpm": 73.01, "mean_spo2": 95.6, "mean_gsr": 227.08, "sample_count": 3600},
    {"hour_index": 2, "mean_bpm": 76.39, "mean_spo2": None, "mean_gsr": 232.1, "sample_count": 3600},
]
MEAN = {"mean_bpm": 74.7, "mean_spo2": 95.6, "mean_gsr": 229.59, "sample_count": 7200}


def test_hourly_table_shape():
    lines = hourly_table(HOURLY, MEAN).splitlines()
    assert lines[0].split() == ["Hour", "BPM", "SpO2", "GSR"]
    assert lines[1].split() == ["1st", "Hour", "73.01", "95.60", "227.08"]
    assert lines[2].split() == ["2nd", "Hour", "76.39", "-", "232.10"]
    assert lines[3].split() == ["Mean", "74.70", "95.60", "229.59"]


def test_hourly_csv_columns():
    rows = list(csv.reader(io.StringIO(hourly_csv(HOURLY, MEAN))))
    assert tuple(rows[0]) == HOURLY_COLUMNS
    assert rows[2] == ["2", "76.390", "", "232.100", "3600"]
    assert rows[-1][0] == "mean"


def test_unfinalized_session_raises(tmp_path):
    SessionWriter.create(tmp_path / "open").close()
    with pytest.raises(SessionError):
        render_report(tmp_path / "open")


def test_unknown_format(short_session):
    with pytest.raises(ValueError):
        render_report(short_session[0], "xml")


def test_short_report_files(short_session, tmp_path):
    session, result, _ = short_session
    text = render_report(session, "table-text", tmp_path / "r")
    out = tmp_path / "r"
    for name in ("hourly.txt", "hourly.csv", "series.csv", "events.csv", "alerts.csv", "beats.csv"):
        assert (out / name).exists(), name
    for name in ("vitals.png", "hourly.png", "sound.png", "ecg.png"):
        assert (out / name).stat().st_size > 10_000, name
    assert "assessment:" in text and "Mean" in text

    series = list(csv.reader(open(out / "series.csv")))
    assert tuple(series[0]) == SERIES_COLUMNS
    assert len(series) == 1 + result["sample_count"] == 1201
    peak = max(float(r[4]) for r in series[1:] if r[4])
    assert peak == pytest.approx(60.0, abs=1.0)  # person-4 bursts

    beats = list(csv.reader(open(out / "beats.csv")))
    assert {r[1] for r in beats[1:]} <= {"loss", "gain"}


def test_csv_format_returns_hourly_table(short_session, tmp_path):
    text = render_report(short_session[0], "csv", tmp_path / "c", figures=False)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == HOURLY_COLUMNS
    assert [r[0] for r in rows[1:]] == ["1", "mean"]
    assert not (tmp_path / "c" / "vitals.png").exists()


@pytest.mark.slow
def test_six_hour_csv_rows_and_mean(six_hour, tmp_path):
    session, _, _ = six_hour["person-1"]
    rows = list(csv.reader(io.StringIO(render_report(session, "csv", tmp_path, figures=False))))
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4", "5", "6", "mean"]
    assert float(rows[-1][1]) == pytest.approx(74.47, abs=0.5)
