"""Bytes in, session logs and a verdict out.

Every entry point (inline simulation, socket or file transport, replay)
feeds raw wire bytes through the same decoder, so a session's logs depend
only on the byte sequence and the configuration.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable
from dataclasses import asdict

from .config import MonitorConfig
from .detector import (
    Alert,
    ApneaEvent,
    EventDetector,
    HourlyAccumulator,
    SessionStats,
    assess_session,
    mean_row,
)
from .engine import SignalEngine, VitalsSample
from .protocol import FrameDecoder
from .store import SessionWriter


class Pipeline:
    """Decoder, engine and detector for one session, with optional log writer."""

    def __init__(
        self,
        config: MonitorConfig | None = None,
        writer: SessionWriter | None = None,
        on_sample: Callable[[VitalsSample], None] | None = None,
        on_alert: Callable[[Alert], None] | None = None,
        on_event: Callable[[ApneaEvent], None] | None = None,
    ) -> None:
        self.config = config or MonitorConfig()
        self.writer = writer
        self.on_sample = on_sample
        self.on_alert = on_alert
        self.on_event = on_event
        self.decoder = FrameDecoder()
        self.engine = SignalEngine(self.config.engine)
        self.detector = EventDetector(self.config.detector, burst_db=self.config.engine.snore_burst_db)
        self.hourly = HourlyAccumulator()
        self.stats = SessionStats(burst_db=self.config.engine.snore_burst_db)
        self.events: list[ApneaEvent] = []
        self.alert_count = 0
        self.sample_count = 0
        self.notes: list[str] = []
        self.result: dict | None = None

    def feed(self, chunk: bytes) -> list[VitalsSample]:
        if self.writer is not None:
            self.writer.append("frames", chunk)
        frames = self.decoder.feed_array(chunk)
        samples = self.engine.ingest_block(frames)
        for s in samples:
            self._sample(s)
        return samples

    def feed_all(self, chunks: Iterable[bytes]) -> None:
        for chunk in chunks:
            self.feed(chunk)

    def _sample(self, s: VitalsSample) -> None:
        w = self.writer
        self.sample_count += 1
        if w is not None:
            w.append("sample", s)
        self.hourly.add(s)
        self.stats.add(s)
        for b in self.engine.take_beats(s.t_s):
            if b.anomaly != "none" and w is not None:
                w.append("beat", asdict(b))
        events, alerts = self.detector.update(s)
        self._events(events)
        for a in alerts:
            self.alert_count += 1
            if w is not None:
                w.append("alert", a)
            if self.on_alert:
                self.on_alert(a)
        if self.on_sample:
            self.on_sample(s)

    def _events(self, events: list[ApneaEvent]) -> None:
        for e in events:
            self.events.append(e)
            if self.writer is not None:
                self.writer.append("event", e)
            if self.on_event:
                self.on_event(e)

    def note(self, text: str) -> None:
        self.notes.append(text)
        if self.writer is not None:
            self.writer.append("note", {"text": text})

    def diagnostics(self) -> dict:
        return {
            "parser": self.decoder.diagnostics.as_dict(),
            "engine": asdict(self.engine.diagnostics),
            "detector_rejected": self.detector.rejected,
            "bytes_pending": self.decoder.pending,
        }

    def finish(self) -> dict:
        """Flush all stages, score the session and finalize the writer."""
        if self.result is not None:
            return self.result
        for s in self.engine.flush():
            self._sample(s)
        for b in self.engine.take_beats():
            if b.anomaly != "none" and self.writer is not None:
                self.writer.append("beat", asdict(b))
        self._events(self.detector.flush())
        self.stats.finish()
        summaries = self.hourly.summaries()
        assessment = assess_session(summaries, self.events, self.stats, self.config.detector) if summaries else None
        self.result = {
            "assessment": assessment.to_dict() if assessment else None,
            "hourly": [h.to_dict() for h in summaries],
            "mean": mean_row(summaries) if summaries else None,
            "stats": self.stats.to_dict(),
            "event_count": len(self.events),
            "alert_count": self.alert_count,
            "sample_count": self.sample_count,
            "diagnostics": self.diagnostics(),
            "notes": list(self.notes),
        }
        if self.writer is not None:
            self.writer.finalize(self.result)
        return self.result
