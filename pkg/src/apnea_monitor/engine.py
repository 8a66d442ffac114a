"""Raw frames in, one :class:`VitalsSample` per second out.

Frames are placed on a regular grid of ``rate_hz`` slots per second using
their timestamps; slots lost to corruption are filled by interpolation so
that every detector sees uniformly sampled data. A second is closed as soon
as its last slot arrives, or when a later second begins.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .dsp import (
    BeatAnnotation,
    RPeakDetector,
    compute_spo2,
    detect_ppg_peaks,
    detect_snore_cycles,
    gsr_resistance,
    sound_db,
)
from .protocol import SensorFrame, frames_to_array

_CHANNELS = ("ecg_raw", "ppg_raw", "red_raw", "ir_raw", "gsr_raw", "sound_raw")


def _r(value: float | None, digits: int) -> float | None:
    return None if value is None else round(float(value), digits)


@dataclass(frozen=True)
class VitalsSample:
    t_s: int
    bpm: float | None = None
    spo2_pct: float | None = None
    gsr_us: float | None = None
    sound_db: float | None = None
    snore_active: bool = False
    snore_period_s: float | None = None
    ecg_flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "t_s": self.t_s,
            "bpm": self.bpm,
            "spo2_pct": self.spo2_pct,
            "gsr_us": self.gsr_us,
            "sound_db": self.sound_db,
            "snore_active": self.snore_active,
            "snore_period_s": self.snore_period_s,
            "ecg_flags": list(self.ecg_flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> VitalsSample:
        return cls(**{**d, "ecg_flags": tuple(d.get("ecg_flags", ()))})


@dataclass
class EngineDiagnostics:
    frames_accepted: int = 0
    frames_rejected_order: int = 0
    frames_late: int = 0
    slots_filled: int = 0
    gap_resets: int = 0


class SignalEngine:
    """Per-session streaming state. Feed frames in timestamp order."""

    def __init__(self, config: EngineConfig | None = None) -> None:
        self.cfg = config or EngineConfig()
        self.fs = self.cfg.rate_hz
        self.period_ms = 1000.0 / self.fs
        self.diagnostics = EngineDiagnostics()
        self.beats: list[tuple[int, BeatAnnotation]] = []  # (emitting second, beat)
        self._last_ts = -1
        self._done_through = -1  # last second already emitted
        self._cur: int | None = None
        self._slots = np.zeros((len(_CHANNELS), self.fs))
        self._filled = np.zeros(self.fs, dtype=bool)
        self._prev_tail: np.ndarray | None = None
        self._tail_ts: int | None = None
        self._reset(0)

    def _reset(self, start_s: int) -> None:
        c = self.cfg
        self._ppg = np.empty(0)
        self._ppg_keep = int(round(c.bpm_window_s * self.fs))
        self._rdet = RPeakDetector(
            self.fs,
            start_s=float(start_s),
            refractory_ms=c.ecg_refractory_ms,
            integration_ms=c.ecg_integration_ms,
            loss_ratio=c.r_loss_ratio,
            gain_ratio=c.r_gain_ratio,
        )
        self._db_hist: deque = deque(maxlen=c.snore_window_s)
        self._prev_tail = None

    # -- public API ----------------------------------------------------------
    def ingest(self, frame: SensorFrame) -> list[VitalsSample]:
        """Single-frame convenience wrapper around :meth:`ingest_block`."""
        return self.ingest_block(frames_to_array([frame]))

    def ingest_block(self, frames: np.ndarray) -> list[VitalsSample]:
        out: list[VitalsSample] = []
        if len(frames) == 0:
            return out
        ts = frames["timestamp_ms"].astype(np.int64)
        running = np.maximum.accumulate(np.concatenate([[self._last_ts], ts]))[:-1]
        ok = ts >= running
        self.diagnostics.frames_rejected_order += int((~ok).sum())
        frames, ts = frames[ok], ts[ok]
        if ts.size == 0:
            return out
        self._last_ts = int(ts[-1])
        secs = ts // 1000
        late = secs <= self._done_through
        if late.any():
            self.diagnostics.frames_late += int(late.sum())
            frames, ts, secs = frames[~late], ts[~late], secs[~late]
        self.diagnostics.frames_accepted += int(ts.size)
        if ts.size == 0:
            return out
        bounds = np.flatnonzero(np.diff(secs)) + 1
        starts = np.concatenate([[0], bounds])
        ends = np.concatenate([bounds, [ts.size]])
        for a, b in zip(starts, ends):
            sec = int(secs[a])
            if self._cur is not None and sec != self._cur:
                self._close(out)
            if self._cur is None:
                self._begin(sec, out, first_ts=int(ts[a]))
            slot = np.clip(np.round((ts[a:b] - sec * 1000) / self.period_ms).astype(int), 0, self.fs - 1)
            for ci, name in enumerate(_CHANNELS):
                self._slots[ci, slot] = frames[name][a:b]
            self._filled[slot] = True
            self._tail_ts = int(ts[b - 1])
            if self._filled[-1]:
                self._close(out)
        return out

    def flush(self) -> list[VitalsSample]:
        """Close a partially filled final second."""
        out: list[VitalsSample] = []
        if self._cur is not None:
            self._close(out)
        return out

    # -- second bookkeeping --------------------------------------------------
    def _begin(self, sec: int, out: list, first_ts: int) -> None:
        if self._tail_ts is not None:
            missing = range(self._done_through + 1, sec)
            if first_ts - self._tail_ts > self.cfg.gap_reset_s * 1000:
                self.diagnostics.gap_resets += 1
                out.extend(VitalsSample(t_s=m) for m in missing)
                self._reset(sec)
            else:
                for m in missing:
                    self._cur = m
                    self._close(out, blank=True)
        else:
            self._reset(sec)
        self._cur = sec
        self._filled[:] = False

    def _close(self, out: list, blank: bool = False) -> None:
        sec = self._cur
        filled = self._filled
        if blank or not filled.any():
            tail = self._prev_tail if self._prev_tail is not None else np.zeros(len(_CHANNELS))
            data = np.repeat(tail[:, None], self.fs, axis=1)
        else:
            data = self._slots.copy()
            if not filled.all():
                idx = np.flatnonzero(filled)
                self.diagnostics.slots_filled += int(self.fs - idx.size)
                x = np.arange(self.fs)
                for ci in range(len(_CHANNELS)):
                    xp, fp = idx, data[ci, idx]
                    if self._prev_tail is not None and idx[0] > 0:
                        xp = np.concatenate([[-1], xp])
                        fp = np.concatenate([[self._prev_tail[ci]], fp])
                    data[ci] = np.interp(x, xp, fp)
        self._prev_tail = data[:, -1].copy()
        out.append(self._measure(sec, data, blank or not filled.any()))
        self._done_through = sec
        self._cur = None
        self._filled[:] = False

    # -- measurement ---------------------------------------------------------
    def _measure(self, sec: int, data: np.ndarray, blank: bool) -> VitalsSample:
        c = self.cfg
        ecg, ppg, red, ir, gsr, snd = data
        self._ppg = np.concatenate([self._ppg, ppg])[-self._ppg_keep :]
        beats = self._rdet.process(ecg)
        self.beats.extend((sec, b) for b in beats)
        flags = tuple(sorted({"r_" + b.anomaly for b in beats if b.anomaly != "none"}))
        if blank:
            self._db_hist.append(None)
            return VitalsSample(t_s=sec, ecg_flags=flags)

        bpm = detect_ppg_peaks(self._ppg, self.fs, c.ppg_peak_fraction, c.ppg_refractory_ms)
        spo2 = compute_spo2(red, ir, a=c.spo2_a, b=c.spo2_b, no_finger_dc=c.no_finger_dc, min_ac=c.min_ac_ir)
        res = gsr_resistance(gsr, c.divider_k)
        valid = np.isfinite(res)
        gsr_us = float(np.mean(1e6 / res[valid])) if valid.any() else None
        db = sound_db(snd, c.db_offset, c.db_floor)
        self._db_hist.append(round(db, 2))
        active, period = detect_snore_cycles(
            list(self._db_hist), c.snore_burst_db, c.snore_max_cv, c.snore_min_history_s
        )
        return VitalsSample(
            t_s=sec,
            bpm=_r(bpm, 3),
            spo2_pct=_r(spo2, 3),
            gsr_us=_r(gsr_us, 3),
            sound_db=round(db, 2),
            snore_active=active,
            snore_period_s=_r(period, 2),
            ecg_flags=flags,
        )

    def take_beats(self, through_s: int | None = None) -> list[BeatAnnotation]:
        """Drain beats emitted while closing seconds up to ``through_s``."""
        if through_s is None:
            n = len(self.beats)
        else:
            n = next((i for i, (sec, _) in enumerate(self.beats) if sec > through_s), len(self.beats))
        taken, self.beats = self.beats[:n], self.beats[n:]
        return [b for _, b in taken]
