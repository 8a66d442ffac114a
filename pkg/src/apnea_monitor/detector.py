"""Event scoring, hourly aggregation and the end-of-session verdict.

Rules applied by :class:`EventDetector` to the 1 Hz vitals stream:

* desaturation: the baseline is the mean SpO2 over the trailing 120 s,
  ignoring absent readings and seconds spent inside a desaturation episode.
  An episode opens when SpO2 <= baseline - 3 points (with at least 30
  baseline readings), keeps that baseline frozen, and closes at the first
  reading above the frozen threshold, an absent reading, or a missing
  second. Episodes of 10 s or more are events; ``detail`` is the nadir.
* bradycardia: a run of consecutive readings with bpm < 50 lasting >= 10 s;
  ``detail`` is the minimum bpm.
* snore gap: a burst second has sound >= the burst threshold. When a burst
  resumes after 10-60 silent seconds, and the rhythm was active at the last
  burst before the silence, the silent span is an event. Absent sound or a
  missing second forgets the last burst.
* class: osa if any second in [start - 60, end + 60] has an active snore
  rhythm; csa if every second of that window (clipped to the session) has a
  sound reading but none is snoring; unclassified otherwise.
* alerts fire on the 10th consecutive second below the threshold and do not
  repeat until the condition clears.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import DetectorConfig
from .engine import VitalsSample

VERDICTS = ("no_indication", "osa_suspected", "csa_suspected")


@dataclass(frozen=True)
class ApneaEvent:
    kind: str  # desaturation | bradycardia | snore_gap
    klass: str  # osa | csa | unclassified
    start_s: int
    duration_s: int
    detail: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Alert:
    t_s: int
    severity: str  # warning | critical
    code: str
    message: str
    value: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HourlySummary:
    hour_index: int
    mean_bpm: float | None
    mean_spo2: float | None
    mean_gsr: float | None
    sample_count: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Evidence:
    rule: str
    message: str
    values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SessionAssessment:
    verdict: str
    ahi: float
    severity: str
    evidence: tuple[Evidence, ...] = ()
    findings: tuple[Evidence, ...] = ()

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "ahi": self.ahi,
            "severity": self.severity,
            "evidence": [e.to_dict() for e in self.evidence],
            "findings": [e.to_dict() for e in self.findings],
        }

    @classmethod
    def from_dict(cls, d: dict) -> SessionAssessment:
        return cls(
            verdict=d["verdict"],
            ahi=d["ahi"],
            severity=d["severity"],
            evidence=tuple(Evidence(**e) for e in d.get("evidence", ())),
            findings=tuple(Evidence(**e) for e in d.get("findings", ())),
        )


# ---------------------------------------------------------------------------
# Streaming detector


class _Window:
    """Snore/sound evidence accumulated over an event's classification window."""

    __slots__ = ("kind", "start", "end", "detail", "lo", "post_end", "snore", "capable", "last_t")

    def __init__(self, kind: str, start: int, lo: int) -> None:
        self.kind = kind
        self.start = start
        self.end: int | None = None
        self.detail = 0.0
        self.lo = lo
        self.post_end: int | None = None
        self.snore = False
        self.capable = 0
        self.last_t = lo - 1

    def add(self, t: int, snore: bool, sound: bool) -> None:
        self.snore |= snore
        self.capable += sound
        self.last_t = t

    def klass(self, hi: int) -> str:
        if self.snore:
            return "osa"
        if self.capable == hi - self.lo + 1:
            return "csa"
        return "unclassified"


class EventDetector:
    def __init__(self, config: DetectorConfig | None = None, burst_db: float = 50.0) -> None:
        self.cfg = config or DetectorConfig()
        self.burst_db = burst_db
        self.rejected = 0
        self._first_t: int | None = None
        self._last_t: int | None = None
        self._recent: deque = deque()  # (t, snore_active, sound_present)
        self._base: deque = deque()  # (t, spo2) outside desaturation episodes
        self._desat: _Window | None = None
        self._desat_base = 0.0
        self._brady: _Window | None = None
        self._last_burst: int | None = None
        self._last_burst_active = False
        self._windows: list[_Window] = []  # closed, awaiting the post window
        self._runs = {"spo2_low": 0, "spo2_critical": 0, "bpm_critical": 0}

    def _open(self, kind: str, start: int) -> _Window:
        w = _Window(kind, start, max(start - self.cfg.class_window_s, self._first_t))
        for rt, snore, sound in self._recent:
            if rt >= w.lo:
                w.add(rt, snore, sound)
        return w

    def _close(self, w: _Window, end: int) -> None:
        w.end = end
        if end - w.start + 1 >= self.cfg.min_event_s:
            w.post_end = end + self.cfg.class_window_s
            self._windows.append(w)

    @staticmethod
    def _emit(w: _Window, hi: int) -> ApneaEvent:
        return ApneaEvent(w.kind, w.klass(hi), w.start, w.end - w.start + 1, w.detail)

    def update(self, s: VitalsSample) -> tuple[list[ApneaEvent], list[Alert]]:
        t = s.t_s
        if self._last_t is not None and t <= self._last_t:
            self.rejected += 1
            return [], []
        cfg = self.cfg
        contiguous = self._last_t is not None and t == self._last_t + 1
        if self._first_t is None:
            self._first_t = t
        sound = s.sound_db is not None

        # desaturation
        if self._desat is not None:
            if contiguous and s.spo2_pct is not None and s.spo2_pct <= self._desat_base - cfg.desat_drop_pct:
                self._desat.detail = min(self._desat.detail, s.spo2_pct)
            else:
                self._close(self._desat, self._last_t)
                self._desat = None
        while self._base and self._base[0][0] < t - cfg.baseline_window_s:
            self._base.popleft()
        if s.spo2_pct is not None and self._desat is None:
            base = None
            if len(self._base) >= cfg.baseline_min_samples:
                base = sum(v for _, v in self._base) / len(self._base)
            if base is not None and s.spo2_pct <= base - cfg.desat_drop_pct:
                self._desat_base = base
                self._desat = self._open("desaturation", t)
                self._desat.detail = s.spo2_pct
            else:
                self._base.append((t, s.spo2_pct))

        # bradycardia
        low = s.bpm is not None and s.bpm < cfg.brady_bpm
        if self._brady is not None:
            if contiguous and low:
                self._brady.detail = min(self._brady.detail, s.bpm)
            else:
                self._close(self._brady, self._last_t)
                self._brady = None
        if low and self._brady is None:
            self._brady = self._open("bradycardia", t)
            self._brady.detail = s.bpm

        # snore gap
        if not contiguous or not sound:
            self._last_burst = None
        if sound and s.sound_db >= self.burst_db:
            if self._last_burst is not None and self._last_burst_active:
                gap = t - self._last_burst - 1
                if cfg.snore_gap_min_s <= gap <= cfg.snore_gap_max_s:
                    w = self._open("snore_gap", self._last_burst + 1)
                    w.detail = float(gap)
                    self._close(w, t - 1)
            self._last_burst = t
            self._last_burst_active = s.snore_active

        # classification windows
        events: list[ApneaEvent] = []
        pending = []
        for w in self._windows:
            if t > w.post_end:
                events.append(self._emit(w, w.post_end))
                continue
            pending.append(w)
        self._windows = pending
        for w in (*pending, self._desat, self._brady):
            if w is not None and w.last_t < t:
                w.add(t, s.snore_active, sound)

        alerts = self._alerts(s, contiguous)
        self._recent.append((t, s.snore_active, sound))
        while self._recent[0][0] < t - 2 * cfg.class_window_s - 2:
            self._recent.popleft()
        self._last_t = t
        return events, alerts

    def _alerts(self, s: VitalsSample, contiguous: bool) -> list[Alert]:
        cfg = self.cfg
        checks = (
            ("spo2_low", "warning", s.spo2_pct, cfg.spo2_warning_pct, "SpO2"),
            ("spo2_critical", "critical", s.spo2_pct, cfg.spo2_critical_pct, "SpO2"),
            ("bpm_critical", "critical", s.bpm, cfg.bpm_critical, "heart rate"),
        )
        out = []
        for code, severity, value, limit, label in checks:
            if value is not None and value < limit:
                self._runs[code] = self._runs[code] + 1 if contiguous else 1
            else:
                self._runs[code] = 0
            if self._runs[code] == cfg.alert_hold_s:
                unit = "%" if label == "SpO2" else " bpm"
                out.append(
                    Alert(s.t_s, severity, code, f"{label} below {limit:g}{unit} for {cfg.alert_hold_s} s", value)
                )
        return out

    def flush(self) -> list[ApneaEvent]:
        """Close open episodes and classify everything still pending."""
        if self._last_t is None:
            return []
        for attr in ("_desat", "_brady"):
            w = getattr(self, attr)
            if w is not None:
                setattr(self, attr, None)
                self._close(w, self._last_t)
        events = []
        for w in sorted(self._windows, key=lambda w: (w.post_end, w.start)):
            events.append(self._emit(w, min(w.post_end, self._last_t)))
        self._windows = []
        return events


# ---------------------------------------------------------------------------
# Aggregation


def hourly_summary(samples, hour_index: int | None = None) -> HourlySummary:
    """Means over present values of one hour's samples."""
    samples = list(samples)
    if hour_index is None:
        hour_index = samples[0].t_s // 3600 + 1 if samples else 1

    def mean(name):
        vals = [getattr(s, name) for s in samples if getattr(s, name) is not None]
        return math.fsum(vals) / len(vals) if vals else None

    return HourlySummary(hour_index, mean("bpm"), mean("spo2_pct"), mean("gsr_us"), len(samples))


class HourlyAccumulator:
    """Per-hour means for samples arriving in time order.

    Only the hour in progress keeps its values, so memory stays bounded.
    """

    def __init__(self) -> None:
        self._done: list[HourlySummary] = []
        self._hour: int | None = None
        self._cur: list[VitalsSample] = []

    def add(self, s: VitalsSample) -> None:
        h = s.t_s // 3600 + 1
        if h != self._hour:
            self._close()
            self._hour = h
        self._cur.append(s)

    def _close(self) -> None:
        if self._cur:
            self._done.append(hourly_summary(self._cur, self._hour))
        self._cur = []

    def summaries(self) -> list[HourlySummary]:
        out = list(self._done)
        if self._cur:
            out.append(hourly_summary(self._cur, self._hour))
        return out


def mean_row(summaries) -> dict:
    """Mean of the hourly means, as in the hourly tables."""

    def avg(name):
        vals = [getattr(s, name) for s in summaries if getattr(s, name) is not None]
        return math.fsum(vals) / len(vals) if vals else None

    return {
        "mean_bpm": avg("mean_bpm"),
        "mean_spo2": avg("mean_spo2"),
        "mean_gsr": avg("mean_gsr"),
        "sample_count": sum(s.sample_count for s in summaries),
    }


@dataclass
class SessionStats:
    """Bounded per-session counters the verdict rules need."""

    duration_s: int = 0
    snore_active_s: int = 0
    periods: Counter = field(default_factory=Counter)
    peak_db: float | None = None
    burst_count: int = 0
    burst_peak_min: float | None = None
    burst_peak_max: float | None = None
    sound_min_db: float | None = None
    sound_max_db: float | None = None
    r_loss: int = 0
    r_gain: int = 0
    burst_db: float = 50.0
    _run_peak: float | None = None
    _first_t: int | None = None

    def add(self, s: VitalsSample) -> None:
        if self._first_t is None:
            self._first_t = s.t_s
        self.duration_s = s.t_s - self._first_t + 1
        if s.snore_active:
            self.snore_active_s += 1
            if s.snore_period_s is not None:
                self.periods[s.snore_period_s] += 1
        self.r_loss += "r_loss" in s.ecg_flags
        self.r_gain += "r_gain" in s.ecg_flags
        db = s.sound_db
        if db is not None:
            self.sound_min_db = db if self.sound_min_db is None else min(self.sound_min_db, db)
            self.sound_max_db = db if self.sound_max_db is None else max(self.sound_max_db, db)
        if db is not None and db >= self.burst_db:
            self._run_peak = db if self._run_peak is None else max(self._run_peak, db)
        else:
            self._end_run()

    def _end_run(self) -> None:
        if self._run_peak is None:
            return
        p = self._run_peak
        self._run_peak = None
        self.burst_count += 1
        self.burst_peak_min = p if self.burst_peak_min is None else min(self.burst_peak_min, p)
        self.burst_peak_max = p if self.burst_peak_max is None else max(self.burst_peak_max, p)

    def finish(self) -> None:
        self._end_run()

    @property
    def median_period_s(self) -> float | None:
        if not self.periods:
            return None
        values = sorted(self.periods.elements())
        return float(np.median(values))

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration_s,
            "snore_active_s": self.snore_active_s,
            "median_period_s": self.median_period_s,
            "period_min_s": min(self.periods) if self.periods else None,
            "period_max_s": max(self.periods) if self.periods else None,
            "burst_count": self.burst_count,
            "burst_peak_min_db": self.burst_peak_min,
            "burst_peak_max_db": self.burst_peak_max,
            "sound_min_db": self.sound_min_db,
            "sound_max_db": self.sound_max_db,
            "r_loss": self.r_loss,
            "r_gain": self.r_gain,
        }


# ---------------------------------------------------------------------------
# Scoring


AHI_EVENT_KINDS = ("desaturation", "snore_gap")


def ahi_severity(ahi: float) -> str:
    if ahi < 5:
        return "none"
    if ahi < 15:
        return "mild"
    if ahi <= 30:
        return "moderate"
    return "severe"


def compute_ahi(events, session_duration_s: float) -> float:
    if session_duration_s <= 0:
        raise ValueError("session duration must be positive")
    n = sum(1 for e in events if e.kind in AHI_EVENT_KINDS)
    return n * 3600.0 / session_duration_s


def assess_session(
    summaries,
    events,
    stats: SessionStats,
    config: DetectorConfig | None = None,
) -> SessionAssessment:
    cfg = config or DetectorConfig()
    if not summaries:
        raise ValueError("at least one hourly summary is required")
    events = list(events)
    duration = stats.duration_s or 3600 * len(summaries)
    ahi = compute_ahi(events, duration)
    severity = ahi_severity(ahi)
    snoring = stats.snore_active_s >= cfg.snoring_min_s
    desats = [e for e in events if e.kind == "desaturation"]
    bradys = [e for e in events if e.kind == "bradycardia"]

    evidence: list[Evidence] = []
    osa = csa = False
    low_hours = [
        {"hour": s.hour_index, "mean_spo2": round(s.mean_spo2, 2)}
        for s in summaries
        if s.mean_spo2 is not None and s.mean_spo2 < cfg.r1_spo2_hourly_pct
    ]
    if cfg.enable_r1 and low_hours and snoring:
        osa = True
        evidence.append(
            Evidence("R1", "hourly mean SpO2 below threshold with snoring", {"hours": low_hours, "snore_active_s": stats.snore_active_s})
        )
    if cfg.enable_r2 and bradys and snoring:
        osa = True
        evidence.append(
            Evidence(
                "R2",
                "bradycardia episodes with snoring",
                {"count": len(bradys), "min_bpm": min(e.detail for e in bradys), "first_start_s": bradys[0].start_s},
            )
        )
    if cfg.enable_r3 and desats and not snoring:
        csa = True
        evidence.append(
            Evidence("R3", "desaturation events without snoring", {"count": len(desats), "min_nadir_pct": min(e.detail for e in desats)})
        )
    if cfg.enable_r4 and ahi >= cfg.ahi_suspect:
        if snoring:
            osa = True
        else:
            csa = True
        evidence.append(Evidence("R4", "AHI at or above threshold", {"ahi": round(ahi, 2), "severity": severity}))

    verdict = "osa_suspected" if osa else "csa_suspected" if csa else "no_indication"

    findings: list[Evidence] = [Evidence("AHI", f"AHI {ahi:.2f} ({severity})", {"ahi": round(ahi, 2), "severity": severity})]
    if stats.r_loss or stats.r_gain:
        findings.append(
            Evidence("ECG", "R-wave amplitude anomalies", {"r_loss": stats.r_loss, "r_gain": stats.r_gain})
        )
    if snoring:
        findings.append(
            Evidence(
                "SNORE",
                "regular snoring rhythm",
                {
                    "snore_active_s": stats.snore_active_s,
                    "median_period_s": stats.median_period_s,
                    "burst_peak_max_db": stats.burst_peak_max,
                },
            )
        )
    gsr = [(s.hour_index, s.mean_gsr) for s in summaries if s.mean_gsr is not None]
    if len(gsr) >= 2:
        drops = [(b[0], (a[1] - b[1]) / a[1]) for a, b in zip(gsr, gsr[1:])]
        hour, drop = max(drops, key=lambda d: d[1])
        findings.append(
            Evidence(
                "GSR",
                "largest hour-to-hour conductance drop",
                {"hour": hour, "drop_fraction": round(drop, 3), "min_hourly_us": round(min(v for _, v in gsr), 2)},
            )
        )
    return SessionAssessment(verdict, round(ahi, 4), severity, tuple(evidence), tuple(findings))
