"""Reports for finalized sessions: hourly tables, series files and figures."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .protocol import FrameDecoder
from .store import Session, SessionError

FORMATS = ("table-text", "csv")
HOURLY_COLUMNS = ("hour", "mean_bpm", "mean_spo2", "mean_gsr", "sample_count")
SERIES_COLUMNS = ("t_s", "bpm", "spo2_pct", "gsr_us", "sound_db", "snore_active")


def ordinal(n: int) -> str:
    if 10 <= n % 100 <= 20:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def _fmt(v, digits: int = 2) -> str:
    return "" if v is None else f"{v:.{digits}f}"


def hourly_table(hourly: list[dict], mean: dict | None) -> str:
    """Hour/BPM/SpO2/GSR table with a Mean row."""
    lines = [f"{'Hour':<10}{'BPM':>9}{'SpO2':>9}{'GSR':>9}"]
    for h in hourly:
        lines.append(
            f"{ordinal(h['hour_index']) + ' Hour':<10}"
            f"{_fmt(h['mean_bpm']) or '-':>9}{_fmt(h['mean_spo2']) or '-':>9}{_fmt(h['mean_gsr']) or '-':>9}"
        )
    if mean:
        lines.append(
            f"{'Mean':<10}{_fmt(mean['mean_bpm']) or '-':>9}"
            f"{_fmt(mean['mean_spo2']) or '-':>9}{_fmt(mean['mean_gsr']) or '-':>9}"
        )
    return "\n".join(lines) + "\n"


def hourly_csv(hourly: list[dict], mean: dict | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HOURLY_COLUMNS)
    for h in hourly:
        w.writerow([h["hour_index"], _fmt(h["mean_bpm"], 3), _fmt(h["mean_spo2"], 3), _fmt(h["mean_gsr"], 3), h["sample_count"]])
    if mean:
        w.writerow(["mean", _fmt(mean["mean_bpm"], 3), _fmt(mean["mean_spo2"], 3), _fmt(mean["mean_gsr"], 3), mean["sample_count"]])
    return buf.getvalue()


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cell(v):
    return "" if v is None else v


def series_arrays(samples) -> dict[str, np.ndarray]:
    """Per-second columns with NaN for absent readings."""
    out = {"t_s": np.array([s.t_s for s in samples], dtype=float)}
    for name in SERIES_COLUMNS[1:5]:
        out[name] = np.array([np.nan if getattr(s, name) is None else getattr(s, name) for s in samples], dtype=float)
    out["snore_active"] = np.array([s.snore_active for s in samples], dtype=bool)
    return out


def ecg_excerpt(session: Session, t0: float, t1: float) -> tuple[np.ndarray, np.ndarray]:
    """Raw ECG samples with timestamps in [t0, t1) seconds, from the frame log."""
    dec = FrameDecoder()
    data = session.frame_bytes()
    ts, ecg = [], []
    step = 27 * 6000
    for off in range(0, len(data), step):
        frames = dec.feed_array(data[off : off + step])
        if not frames.size:
            continue
        t = frames["timestamp_ms"] / 1000.0
        if t[0] >= t1:
            break
        m = (t >= t0) & (t < t1)
        ts.append(t[m])
        ecg.append(frames["ecg_raw"][m])
    if not ts:
        return np.empty(0), np.empty(0)
    return np.concatenate(ts), np.concatenate(ecg).astype(float)


# ---------------------------------------------------------------------------
# figures


def _save(fig: Figure, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    return path


def plot_vitals(series: dict, path: Path) -> Path:
    fig = Figure(figsize=(10, 7))
    axes = fig.subplots(3, 1, sharex=True)
    hours = series["t_s"] / 3600.0
    for ax, name, label in zip(
        axes,
        ("bpm", "spo2_pct", "gsr_us"),
        ("Heart rate (bpm)", "SpO2 (%)", "GSR (uS)"),
    ):
        ax.plot(hours, series[name], lw=0.5)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("Time (h)")
    return _save(fig, path)


def plot_hourly(hourly: list[dict], path: Path) -> Path:
    fig = Figure(figsize=(10, 3.2))
    axes = fig.subplots(1, 3)
    idx = [h["hour_index"] for h in hourly]
    for ax, key, label in zip(axes, ("mean_bpm", "mean_spo2", "mean_gsr"), ("BPM", "SpO2 (%)", "GSR (uS)")):
        vals = [np.nan if h[key] is None else h[key] for h in hourly]
        ax.plot(idx, vals, marker="o")
        ax.set_xlabel("Hour")
        ax.set_ylabel(label)
        ax.set_xticks(idx)
        ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_sound(series: dict, path: Path, span_s: int = 120, burst_db: float = 50.0) -> Path:
    db = series["sound_db"]
    bursts = np.flatnonzero(np.nan_to_num(db) >= burst_db)
    start = max(int(bursts[0]) - 10, 0) if bursts.size else 0
    sl = slice(start, start + span_s)
    fig = Figure(figsize=(10, 3))
    ax = fig.subplots()
    ax.step(series["t_s"][sl], db[sl], where="post")
    ax.axhline(burst_db, ls="--", lw=0.8, color="gray")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Sound (dB)")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_ecg(t: np.ndarray, ecg: np.ndarray, marks: list[dict], path: Path) -> Path:
    fig = Figure(figsize=(10, 3))
    ax = fig.subplots()
    ax.plot(t, ecg, lw=0.7)
    for b in marks:
        ax.axvline(b["r_time_s"], color="red" if b["anomaly"] == "loss" else "green", ls=":", lw=1)
        ax.annotate(f"R {b['anomaly']}", (b["r_time_s"], ax.get_ylim()[1]), fontsize=8, va="top")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("ECG (ADC)")
    return _save(fig, path)


# ---------------------------------------------------------------------------


def render_report(
    session: Session | str | Path,
    fmt: str = "table-text",
    out_dir: str | Path | None = None,
    figures: bool = True,
) -> str:
    """Write report files into ``out_dir`` and return the main document.

    ``fmt`` selects the returned document: the full text report or the
    hourly CSV. Both variants write the same set of files.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {', '.join(FORMATS)}")
    if not isinstance(session, Session):
        session = Session(session)
    if not session.finalized:
        raise SessionError(f"{session.path}: session is not finalized")
    result = session.result()
    out = Path(out_dir) if out_dir is not None else session.path / "report"
    out.mkdir(parents=True, exist_ok=True)

    hourly, mean = result["hourly"], result["mean"]
    samples = session.samples()
    records = session.records()
    events = [r for r in records if r["type"] == "event"]
    alerts = [r for r in records if r["type"] == "alert"]
    beats = [r for r in records if r["type"] == "beat"]
    notes = [r["text"] for r in records if r["type"] == "note"]

    table = hourly_table(hourly, mean)
    table_csv = hourly_csv(hourly, mean)
    (out / "hourly.txt").write_text(table)
    (out / "hourly.csv").write_text(table_csv)
    _write_csv(
        out / "series.csv",
        SERIES_COLUMNS,
        ([s.t_s, _cell(s.bpm), _cell(s.spo2_pct), _cell(s.gsr_us), _cell(s.sound_db), int(s.snore_active)] for s in samples),
    )
    _write_csv(
        out / "events.csv",
        ("kind", "class", "start_s", "duration_s", "detail"),
        ([e["kind"], e["klass"], e["start_s"], e["duration_s"], e["detail"]] for e in events),
    )
    _write_csv(
        out / "alerts.csv",
        ("t_s", "severity", "code", "value", "message"),
        ([a["t_s"], a["severity"], a["code"], a["value"], a["message"]] for a in alerts),
    )
    _write_csv(
        out / "beats.csv",
        ("r_time_s", "anomaly", "r_amplitude", "rr_ms"),
        ([b["r_time_s"], b["anomaly"], b["r_amplitude"], _cell(b["rr_ms"])] for b in beats),
    )

    made = []
    if figures and samples:
        series = series_arrays(samples)
        burst_db = session.config().engine.snore_burst_db
        made.append(plot_vitals(series, out / "vitals.png"))
        if hourly:
            made.append(plot_hourly(hourly, out / "hourly.png"))
        made.append(plot_sound(series, out / "sound.png", burst_db=burst_db))
        if beats:
            t0 = beats[0]["r_time_s"] - 4.0
            t, ecg = ecg_excerpt(session, t0, t0 + 12.0)
            marks = [b for b in beats if t0 <= b["r_time_s"] < t0 + 12.0]
            if t.size:
                made.append(plot_ecg(t, ecg, marks, out / "ecg.png"))

    if fmt == "csv":
        return table_csv

    a = result["assessment"]
    info = session.info
    lines = [
        f"session {info.session_id}  profile {info.profile_label or '-'}  started {info.started_at}",
        f"samples {result['sample_count']}  duration {result['stats']['duration_s']} s",
        "",
        table,
        f"events ({len(events)})",
    ]
    for e in events:
        lines.append(f"  {e['start_s']:>7}  {e['kind']:<13}{e['klass']:<14}{e['duration_s']:>4} s  {e['detail']}")
    lines += ["", f"alerts ({len(alerts)})"]
    for al in alerts:
        lines.append(f"  {al['t_s']:>7}  {al['severity']:<9}{al['code']:<15}{al['value']}")
    if beats:
        lines += ["", f"R-wave anomalies ({len(beats)})"]
        for b in beats:
            lines.append(f"  {b['r_time_s']:>10.2f}  {b['anomaly']:<5} amplitude {b['r_amplitude']:.3f}")
    lines.append("")
    if a is None:
        lines.append("assessment: none (no samples)")
    else:
        lines.append(f"assessment: {a['verdict']}  AHI {a['ahi']:.2f} ({a['severity']})")
        for ev in a["evidence"]:
            lines.append(f"  {ev['rule']}: {ev['message']} {ev['values']}")
        lines.append("findings:")
        for ev in a["findings"]:
            lines.append(f"  {ev['rule']}: {ev['message']} {ev['values']}")
    diag = result["diagnostics"]
    lines += ["", f"parser {diag['parser']}", f"engine {diag['engine']}"]
    for n in notes:
        lines.append(f"note: {n}")
    lines += ["", "files:"]
    lines += [f"  {p}" for p in sorted(out.iterdir())]
    return "\n".join(lines) + "\n"
