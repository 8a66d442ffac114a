"""Session directories: append-only logs, finalization and paced replay.

Layout of a session directory (all names fixed)::

    manifest.json     one JSON line: format, session_id, started_at,
                      profile_label, rate_hz, config_hash, finalized
    config.json       the configuration the session was recorded with
    frames.bin        raw wire bytes exactly as received
    samples.jsonl     one VitalsSample per line
    events.jsonl      beat anomalies, events, alerts and notes, one per line
    assessment.json   written once, at finalization

Every ``.jsonl`` line is ``<compact JSON>\\t<crc32 of the JSON, 8 hex>``.
A line whose CRC does not match is reported, never skipped silently.
"""

from __future__ import annotations

import json
import math
import os
import time
import uuid
import zlib
from collections.abc import Callable, Iterator
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .config import MonitorConfig
from .engine import VitalsSample
from .protocol import FRAME_SIZE, FrameDecoder

FORMAT = "apnea-monitor-session/1"
MANIFEST = "manifest.json"
CONFIG = "config.json"
FRAMES = "frames.bin"
SAMPLES = "samples.jsonl"
EVENTS = "events.jsonl"
ASSESSMENT = "assessment.json"

RECORD_KINDS = ("frames", "sample", "event", "alert", "beat", "note")


class SessionError(Exception):
    pass


class SessionFinalizedError(SessionError):
    pass


class CorruptLogError(SessionError):
    def __init__(self, path: Path, lines: list[int]) -> None:
        self.path = path
        self.lines = lines
        super().__init__(f"{path}: {len(lines)} corrupt line(s), first at line {lines[0]}")


def encode_line(record: dict) -> bytes:
    body = json.dumps(record, separators=(",", ":"), sort_keys=True, allow_nan=False).encode()
    return body + b"\t" + f"{zlib.crc32(body):08x}".encode() + b"\n"


def decode_line(line: bytes) -> dict | None:
    """Parsed record, or None when the line fails its checksum."""
    line = line.rstrip(b"\n")
    body, sep, crc = line.rpartition(b"\t")
    if not sep or len(crc) != 8:
        return None
    try:
        if int(crc, 16) != zlib.crc32(body):
            return None
        return json.loads(body)
    except ValueError:
        return None


def read_log(path: str | Path, strict: bool = True) -> tuple[list[dict], list[int]]:
    """Records in file order plus the 1-based numbers of corrupt lines."""
    path = Path(path)
    records, bad = [], []
    with open(path, "rb") as fh:
        for n, line in enumerate(fh, start=1):
            rec = decode_line(line)
            if rec is None:
                bad.append(n)
            else:
                records.append(rec)
    if bad and strict:
        raise CorruptLogError(path, bad)
    return records, bad


def _json_dump(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


@dataclass
class SessionInfo:
    path: Path
    session_id: str
    started_at: str
    profile_label: str | None
    rate_hz: int
    config_hash: str
    finalized: bool


def read_manifest(path: str | Path) -> SessionInfo:
    path = Path(path)
    try:
        data = json.loads((path / MANIFEST).read_text())
    except FileNotFoundError:
        raise SessionError(f"{path}: not a session directory (no {MANIFEST})") from None
    if data.get("format") != FORMAT:
        raise SessionError(f"{path}: unsupported session format {data.get('format')!r}")
    return SessionInfo(
        path=path,
        session_id=data["session_id"],
        started_at=data["started_at"],
        profile_label=data.get("profile_label"),
        rate_hz=data["rate_hz"],
        config_hash=data["config_hash"],
        finalized=data["finalized"],
    )


class SessionWriter:
    """Single writer for one session directory."""

    def __init__(self, path: Path, info: dict, config: MonitorConfig) -> None:
        self.path = path
        self._info = info
        self.config = config
        self._frames = open(path / FRAMES, "ab")
        self._samples = open(path / SAMPLES, "ab")
        self._events = open(path / EVENTS, "ab")
        self.finalized = False

    @classmethod
    def create(
        cls,
        path: str | Path,
        config: MonitorConfig | None = None,
        profile_label: str | None = None,
        session_id: str | None = None,
    ) -> SessionWriter:
        path = Path(path)
        config = config or MonitorConfig()
        if (path / MANIFEST).exists():
            raise SessionError(f"{path}: session already exists")
        path.mkdir(parents=True, exist_ok=True)
        info = {
            "format": FORMAT,
            "session_id": session_id or uuid.uuid4().hex[:12],
            "started_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "profile_label": profile_label,
            "rate_hz": config.engine.rate_hz,
            "config_hash": config.digest(),
            "finalized": False,
        }
        _json_dump(path / CONFIG, config.to_dict())
        _json_dump(path / MANIFEST, info)
        return cls(path, info, config)

    def append(self, kind: str, payload) -> None:
        if self.finalized:
            raise SessionFinalizedError(f"{self.path}: session is finalized")
        if kind == "frames":
            self._frames.write(bytes(payload))
            self._frames.flush()
            return
        if kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        record = payload.to_dict() if hasattr(payload, "to_dict") else dict(payload)
        if kind == "sample":
            self._samples.write(encode_line(record))
        else:
            self._events.write(encode_line({"type": kind, **record}))

    def flush(self) -> None:
        for fh in (self._frames, self._samples, self._events):
            fh.flush()

    def finalize(self, result: dict) -> None:
        if self.finalized:
            raise SessionFinalizedError(f"{self.path}: session is finalized")
        for fh in (self._frames, self._samples, self._events):
            fh.flush()
            os.fsync(fh.fileno())
            fh.close()
        _json_dump(self.path / ASSESSMENT, result)
        self._info["finalized"] = True
        _json_dump(self.path / MANIFEST, self._info)
        self.finalized = True

    def close(self) -> None:
        for fh in (self._frames, self._samples, self._events):
            if not fh.closed:
                fh.close()


class Session:
    """Read access to a session directory; any number may coexist."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.info = read_manifest(self.path)

    @property
    def finalized(self) -> bool:
        return self.info.finalized

    def config(self) -> MonitorConfig:
        return MonitorConfig.from_dict(json.loads((self.path / CONFIG).read_text()))

    def frame_bytes(self) -> bytes:
        return (self.path / FRAMES).read_bytes()

    def samples(self, strict: bool = True) -> list[VitalsSample]:
        records, _ = read_log(self.path / SAMPLES, strict)
        return [VitalsSample.from_dict(r) for r in records]

    def records(self, strict: bool = True) -> list[dict]:
        return read_log(self.path / EVENTS, strict)[0]

    def result(self) -> dict:
        if not self.finalized:
            raise SessionError(f"{self.path}: session is not finalized")
        return json.loads((self.path / ASSESSMENT).read_text())

    def verify(self) -> dict:
        """Corrupt line numbers per log."""
        return {
            name: read_log(self.path / name, strict=False)[1]
            for name in (SAMPLES, EVENTS)
        }


def replay(
    session: Session | str | Path,
    speed: float = math.inf,
    chunk_frames: int | None = None,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
) -> Iterator[bytes]:
    """Yield the stored frame bytes in order, paced by their timestamps.

    With a finite ``speed`` each chunk is released when the wall clock has
    advanced by (chunk timestamp - first timestamp) / speed.
    """
    if not speed > 0:
        raise ValueError("replay speed must be positive")
    if not isinstance(session, Session):
        session = Session(session)
    data = session.frame_bytes()
    if not data:
        return
    paced = math.isfinite(speed)
    if chunk_frames is None:
        chunk_frames = session.info.rate_hz if paced else 60 * session.info.rate_hz
    step = chunk_frames * FRAME_SIZE
    probe = FrameDecoder()
    t0_wall = clock()
    ts0 = None
    for off in range(0, len(data), step):
        chunk = data[off : off + step]
        if paced:
            frames = probe.feed_array(chunk)
            if frames.size:
                ts = int(frames["timestamp_ms"][0])
                if ts0 is None:
                    ts0 = ts
                due = t0_wall + (ts - ts0) / 1000.0 / speed
                delay = due - clock()
                if delay > 0:
                    sleep(delay)
        yield chunk
