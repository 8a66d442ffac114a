"""Per-window signal operations used by the streaming engine."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.ndimage import maximum_filter1d

# ---------------------------------------------------------------------------
# GSR


def resistance_to_us(resistance_ohms: float) -> float:
    """Skin conductance in micro-Siemens from resistance in ohms."""
    return 1e6 / resistance_ohms


def gsr_resistance(gsr_raw, divider_k: float = 1000.0):
    """Series-divider resistance model; None (or NaN for arrays) when raw >= 512."""
    if np.ndim(gsr_raw):
        raw = np.asarray(gsr_raw, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = divider_k * (1024.0 + 2.0 * raw) / (512.0 - raw)
        return np.where(raw < 512, r, np.nan)
    if gsr_raw >= 512:
        return None
    return divider_k * (1024.0 + 2.0 * gsr_raw) / (512.0 - gsr_raw)


def gsr_conductance(gsr_raw: int, divider_k: float = 1000.0) -> float | None:
    if not 0 <= gsr_raw <= 1023:
        raise ValueError(f"gsr_raw out of range: {gsr_raw}")
    r = gsr_resistance(gsr_raw, divider_k)
    return None if r is None else resistance_to_us(r)


def gsr_raw_for_conductance(us, divider_k: float = 1000.0):
    """Inverse of the divider model (float ADC counts)."""
    r = 1e6 / np.asarray(us, dtype=float)
    return (512.0 * r - 1024.0 * divider_k) / (r + 2.0 * divider_k)


# ---------------------------------------------------------------------------
# SpO2


def spo2_from_ratio(ratio: float, a: float = 110.0, b: float = 25.0) -> float:
    return min(100.0, max(70.0, a - b * ratio))


def ratio_for_spo2(spo2, a: float = 110.0, b: float = 25.0):
    return (a - np.asarray(spo2, dtype=float)) / b


def compute_spo2(
    red_window,
    ir_window,
    *,
    a: float = 110.0,
    b: float = 25.0,
    no_finger_dc: float = 1000.0,
    min_ac: float = 1e-3,
) -> float | None:
    """Ratio-of-ratios SpO2 over one aligned window.

    DC is the window mean, AC the RMS of the mean-removed window.
    """
    red = np.asarray(red_window, dtype=float)
    ir = np.asarray(ir_window, dtype=float)
    if red.shape != ir.shape:
        raise ValueError(f"window length mismatch: red {red.size}, ir {ir.size}")
    if red.size == 0:
        return None
    dc_red = red.mean()
    dc_ir = ir.mean()
    if dc_red < no_finger_dc or dc_ir < no_finger_dc:
        return None
    ac_red = math.sqrt(np.mean((red - dc_red) ** 2))
    ac_ir = math.sqrt(np.mean((ir - dc_ir) ** 2))
    if ac_ir < min_ac:
        return None
    ratio = (ac_red / dc_red) / (ac_ir / dc_ir)
    return spo2_from_ratio(ratio, a, b)


# ---------------------------------------------------------------------------
# PPG heart rate


def _refine(y: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Parabolic sub-sample peak positions."""
    idx = idx[(idx > 0) & (idx < len(y) - 1)]
    left, mid, right = y[idx - 1], y[idx], y[idx + 1]
    denom = left - 2.0 * mid + right
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(denom != 0, 0.5 * (left - right) / denom, 0.0)
    return idx + np.clip(shift, -0.5, 0.5)


def ppg_peak_positions(window, fs: float, fraction: float = 0.6, refractory_ms: float = 250.0) -> np.ndarray:
    """Fractional sample positions of pulse peaks.

    A peak is a local maximum above ``min + fraction * (max - min)`` of the
    window; within the refractory distance only the taller peak survives.
    """
    x = np.asarray(window, dtype=float)
    if x.size < 3:
        return np.empty(0)
    lo, hi = x.min(), x.max()
    if hi - lo <= 0:
        return np.empty(0)
    distance = max(1, int(math.ceil(refractory_ms * fs / 1000.0)))
    idx, _ = signal.find_peaks(x, height=lo + fraction * (hi - lo), distance=distance)
    return _refine(x, idx)


def detect_ppg_peaks(window, fs: float = 100.0, fraction: float = 0.6, refractory_ms: float = 250.0) -> float | None:
    """Heart rate from the median inter-beat interval; None with < 3 peaks."""
    peaks = ppg_peak_positions(window, fs, fraction, refractory_ms)
    if peaks.size < 3:
        return None
    ibi_ms = np.diff(peaks) * 1000.0 / fs
    bpm = 60000.0 / float(np.median(ibi_ms))
    if not 20.0 <= bpm <= 250.0:
        return None
    return bpm


# ---------------------------------------------------------------------------
# Sound


def sound_db(window, db_offset: float = 36.0, db_floor: float = 30.0) -> float:
    x = np.asarray(window, dtype=float)
    if x.size == 0:
        raise ValueError("empty sound window")
    rms = math.sqrt(np.mean((x - x.mean()) ** 2))
    return max(db_floor, db_offset + 20.0 * math.log10(max(rms, 1e-6)))


def detect_snore_cycles(
    series,
    burst_db: float = 50.0,
    max_cv: float = 0.4,
    min_history: int = 10,
) -> tuple[bool, float | None]:
    """Snore rhythm over a trailing per-second dB series (oldest first).

    Bursts are runs of seconds at or above ``burst_db``; a run that starts
    at the first element is ignored since its true onset is unknown. The
    rhythm is active with at least three onsets whose spacing has a
    coefficient of variation below ``max_cv``, and only while the latest
    burst is no more than 1.5 periods old.
    """
    n = len(series)
    if n < min_history:
        return False, None
    burst = [v is not None and v >= burst_db for v in series]
    onsets = [i for i in range(1, n) if burst[i] and not burst[i - 1]]
    if len(onsets) < 3:
        return False, None
    intervals = np.diff(onsets).astype(float)
    mean = intervals.mean()
    if intervals.std() / mean >= max_cv:
        return False, None
    period = float(np.median(intervals))
    last = max(i for i in range(n) if burst[i])
    if (n - 1 - last) > 1.5 * period:
        return False, None
    return True, period


# ---------------------------------------------------------------------------
# ECG R waves


@dataclass(frozen=True)
class BeatAnnotation:
    r_time_s: float
    rr_ms: float | None
    r_amplitude: float
    anomaly: str = "none"  # none | loss | gain


class RPeakDetector:
    """Streaming QRS detector in the Pan-Tompkins family.

    Band-pass 5-15 Hz, five-point derivative, squaring and a moving-window
    integrator feed an adaptive dual threshold with search-back. Thresholds
    are applied to the square root of the integrator output so that they
    scale linearly with R amplitude; a beat at a third of normal height
    still clears the primary threshold.
    """

    LEARN_S = 2.0
    KEEP_S = 6.0
    HISTORY = 8

    def __init__(
        self,
        fs: float = 100.0,
        start_s: float = 0.0,
        refractory_ms: float = 200.0,
        integration_ms: float = 150.0,
        loss_ratio: float = 0.5,
        gain_ratio: float = 1.5,
    ) -> None:
        self.fs = fs
        self.start_s = start_s
        self.loss_ratio = loss_ratio
        self.gain_ratio = gain_ratio
        self._b, self._a = signal.butter(2, [5.0, 15.0], btype="band", fs=fs)
        self._deriv = np.array([2.0, 1.0, 0.0, -1.0, -2.0]) * fs / 8.0
        n_int = max(1, int(round(integration_ms * fs / 1000.0)))
        self._mwi = np.ones(n_int) / n_int
        self._zi = None
        self._refractory = int(round(refractory_ms * fs / 1000.0))
        self._half = max(1, self._refractory // 2)
        self._search = int(round(0.25 * fs))
        self._keep = int(self.KEEP_S * fs)

        self._raw = np.empty(0)
        self._env = np.empty(0)
        self._origin = 0  # absolute index of _raw[0] / _env[0]
        self._total = 0
        self._cursor = 0  # next absolute index eligible as a candidate
        self._learned = False
        self.spk = 0.0
        self.npk = 0.0
        self._last_beat: int | None = None
        self._last_r_time: float | None = None
        self._rr = deque(maxlen=self.HISTORY)
        self._amps = deque(maxlen=self.HISTORY)
        self._noise: list[tuple[int, float]] = []

    @property
    def thr1(self) -> float:
        return self.npk + 0.25 * (self.spk - self.npk)

    @property
    def thr2(self) -> float:
        return 0.5 * self.thr1

    def _filter(self, x: np.ndarray) -> np.ndarray:
        if self._zi is None:
            zi_bp = signal.lfilter_zi(self._b, self._a) * x[0]
            self._zi = [zi_bp, np.zeros(len(self._deriv) - 1), np.zeros(len(self._mwi) - 1)]
        y, self._zi[0] = signal.lfilter(self._b, self._a, x, zi=self._zi[0])
        y, self._zi[1] = signal.lfilter(self._deriv, [1.0], y, zi=self._zi[1])
        y, self._zi[2] = signal.lfilter(self._mwi, [1.0], y * y, zi=self._zi[2])
        return np.sqrt(np.maximum(y, 0.0))

    def process(self, block) -> list[BeatAnnotation]:
        x = np.asarray(block, dtype=float)
        if x.size == 0:
            return []
        self._raw = np.concatenate([self._raw, x])
        self._env = np.concatenate([self._env, self._filter(x)])
        self._total += x.size
        beats = self._scan(self._total - self._half)
        self._trim()
        return beats

    def flush(self) -> list[BeatAnnotation]:
        return self._scan(self._total)

    def _trim(self) -> None:
        drop = len(self._raw) - self._keep
        if drop > 0:
            self._raw = self._raw[drop:]
            self._env = self._env[drop:]
            self._origin += drop

    def _scan(self, limit: int) -> list[BeatAnnotation]:
        beats: list[BeatAnnotation] = []
        if not self._learned:
            learn_n = int(self.LEARN_S * self.fs)
            if self._total < learn_n and limit < self._total:
                return beats
            head = self._env[: min(learn_n, len(self._env))]
            self.spk = float(head.max())
            self.npk = float(head.mean())
            self._learned = True
            self._cursor = self._origin
        if limit <= self._cursor:
            return beats
        lo = max(self._cursor - self._half, self._origin)
        seg = self._env[lo - self._origin :]
        local_max = maximum_filter1d(seg, size=2 * self._half + 1, mode="nearest")
        rising = np.empty(seg.size, dtype=bool)
        rising[0] = True
        rising[1:] = seg[1:] > seg[:-1]
        cand = np.flatnonzero((seg == local_max) & rising & (seg > 0)) + lo
        cand = cand[(cand >= self._cursor) & (cand < limit)]
        for i in cand:
            self._search_back(int(i), beats)
            self._consider(int(i), float(self._env[i - self._origin]), beats)
        self._cursor = limit
        self._search_back(limit, beats)
        return beats

    def _consider(self, i: int, v: float, beats: list) -> None:
        if self._last_beat is not None and i - self._last_beat < self._refractory:
            return
        if v > self.thr1:
            if self._accept(i, beats):
                self.spk = 0.125 * v + 0.875 * self.spk
                return
        self.npk = 0.125 * v + 0.875 * self.npk
        self._noise.append((i, v))

    def _search_back(self, now: int, beats: list) -> None:
        if self._last_beat is None or len(self._rr) < 2:
            return
        rr_avg = sum(self._rr) / len(self._rr)
        if now - self._last_beat <= 1.66 * rr_avg:
            return
        floor = self._last_beat + self._refractory
        pool = [(i, v) for i, v in self._noise if i >= floor and i < now and v > self.thr2]
        self._noise = [(i, v) for i, v in self._noise if i >= floor]
        if not pool:
            return
        i, v = max(pool, key=lambda p: p[1])
        if self._accept(i, beats):
            self.spk = 0.25 * v + 0.75 * self.spk
            self._noise = [(j, w) for j, w in self._noise if j > i]

    def _accept(self, i: int, beats: list) -> bool:
        lo = max(i - self._search, self._origin)
        seg = self._raw[lo - self._origin : i - self._origin + 1]
        if seg.size < 3:
            return False
        k = int(np.argmax(seg))
        if 0 < k < seg.size - 1:
            pos = float(_refine(seg, np.array([k]))[0])
        else:
            pos = float(k)
        r_abs = lo + pos
        base_lo = max(i - int(2 * self.fs), self._origin)
        baseline = float(np.median(self._raw[base_lo - self._origin : i - self._origin + 1]))
        amplitude = (float(seg[k]) - baseline) / 1024.0
        if amplitude <= 0:
            return False
        r_time = self.start_s + r_abs / self.fs
        rr_ms = None
        if self._last_r_time is not None:
            rr_ms = (r_time - self._last_r_time) * 1000.0
            if rr_ms <= 200.0:
                return False
        anomaly = "none"
        if len(self._amps) >= 3:
            ref = float(np.median(self._amps))
            if amplitude < self.loss_ratio * ref:
                anomaly = "loss"
            elif amplitude > self.gain_ratio * ref:
                anomaly = "gain"
        if self._last_beat is not None:
            self._rr.append(i - self._last_beat)
        self._amps.append(amplitude)
        self._last_beat = i
        self._last_r_time = r_time
        beats.append(BeatAnnotation(r_time, rr_ms, amplitude, anomaly))
        return True


def detect_r_peaks(window, fs: float = 100.0, start_s: float = 0.0, **kwargs) -> list[BeatAnnotation]:
    """Offline R-wave annotation of a complete ECG window."""
    det = RPeakDetector(fs, start_s=start_s, **kwargs)
    return det.process(window) + det.flush()
