"""Synthetic multi-channel sensor streams from scripted subject profiles.

Each raw channel is produced by inverting the engine's own calibration
(ratio-of-ratios line, GSR divider, dB map), so a clean simulated session
measures back to the profile's hourly targets. Plateau levels are solved so
that the hourly means, including ramps between hours and scripted episodes,
equal the targets exactly.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import EngineConfig, tomllib
from .dsp import gsr_raw_for_conductance, ratio_for_spo2
from .protocol import FRAME_DTYPE, SensorFrame, array_to_frames

HOUR_S = 3600.0
RAMP_S = 60.0
BLOCK_S = 60
BEAT_JITTER_S = 0.020
AMP_JITTER = 0.02
PULSE_TRANSIT_S = 0.2

# episode shape: fast fall, hold, slower recovery
FALL_S = 3.0
RISE_S = 5.0
REBOUND_S = 20.0


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class SnoreScript:
    cycle_period_s: float
    burst_fraction: float = 0.4
    peak_db: float = 60.0
    room_floor_db: float = 37.5
    period_spread_s: float = 0.0  # cycle period drawn from period +/- spread


@dataclass(frozen=True)
class ApneaEpisodeScript:
    start_s: float
    duration_s: float
    spo2_nadir_pct: float
    hr_effect: str = "none"  # none | bradycardia | tachy_rebound
    hr_target_bpm: float | None = None
    snore_suppressed: bool = True

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass(frozen=True)
class SubjectProfile:
    label: str
    hr_baseline_bpm: tuple[float, ...]
    spo2_baseline_pct: tuple[float, ...]
    gsr_baseline_us: tuple[float, ...]
    age_group: str = ""
    gender: str = ""
    body_status: str = ""
    snore: SnoreScript | None = None
    episodes: tuple[ApneaEpisodeScript, ...] = ()
    ecg_anomalies: tuple[tuple[int, float], ...] = ()
    room_floor_db: float = 37.5

    @property
    def hours(self) -> int:
        return len(self.hr_baseline_bpm)

    @property
    def floor_db(self) -> float:
        return self.snore.room_floor_db if self.snore else self.room_floor_db


def validate_profile(p: SubjectProfile) -> None:
    n = len(p.hr_baseline_bpm)
    if n == 0 or len(p.spo2_baseline_pct) != n or len(p.gsr_baseline_us) != n:
        raise ProfileError(f"{p.label}: per-hour lists must be non-empty and of equal length")
    if not all(30 <= v <= 220 for v in p.hr_baseline_bpm):
        raise ProfileError(f"{p.label}: hr targets must lie in [30, 220]")
    if not all(70 <= v <= 100 for v in p.spo2_baseline_pct):
        raise ProfileError(f"{p.label}: spo2 targets must lie in [70, 100]")
    if not all(v > 0 for v in p.gsr_baseline_us):
        raise ProfileError(f"{p.label}: gsr targets must be positive")
    if p.snore is not None:
        s = p.snore
        lo, hi = s.cycle_period_s - s.period_spread_s, s.cycle_period_s + s.period_spread_s
        if not (2 <= lo and hi <= 10):
            raise ProfileError(f"{p.label}: snore cycle period must stay within [2, 10] s")
        if not s.room_floor_db < s.peak_db:
            raise ProfileError(f"{p.label}: snore room floor must be below peak")
        if not 0 < s.burst_fraction < 1:
            raise ProfileError(f"{p.label}: burst_fraction must be in (0, 1)")
    prev_end = -math.inf
    for ep in sorted(p.episodes, key=lambda e: e.start_s):
        if ep.duration_s < 10:
            raise ProfileError(f"{p.label}: episode at {ep.start_s} s shorter than 10 s")
        if ep.start_s < 0:
            raise ProfileError(f"{p.label}: episode start must be >= 0")
        if ep.start_s < prev_end + 30:
            raise ProfileError(f"{p.label}: episodes must be at least 30 s apart")
        hour = min(int(ep.start_s // HOUR_S), n - 1)
        if not ep.spo2_nadir_pct < p.spo2_baseline_pct[hour]:
            raise ProfileError(f"{p.label}: episode nadir must be below the baseline")
        if ep.hr_effect not in ("none", "bradycardia", "tachy_rebound"):
            raise ProfileError(f"{p.label}: unknown hr_effect {ep.hr_effect!r}")
        if ep.hr_effect != "none" and ep.hr_target_bpm is None:
            raise ProfileError(f"{p.label}: hr_effect {ep.hr_effect} needs hr_target_bpm")
        prev_end = ep.end_s + (REBOUND_S if ep.hr_effect == "tachy_rebound" else 0.0)


# ---------------------------------------------------------------------------
# Built-in subjects (hourly means of the five examined persons)

_HR = {
    1: (73.01, 76.39, 67.33, 72.82, 78.38, 78.87),
    2: (88.67, 88.63, 62.73, 83.21, 91.04, 85.34),
    3: (69.37, 68.17, 67.29, 75.87, 67.5, 73.68),
    4: (100.24, 98.48, 97.12, 79.54, 82.96, 90.02),
    5: (74.32, 82.67, 87.23, 89.56, 76.98, 73.57),
}
_SPO2 = {
    1: (95.56, 95.97, 95.68, 95.83, 96.04, 95.81),
    2: (95.90, 95.79, 95.96, 96.12, 96.00, 95.94),
    3: (97.12, 98.11, 97.70, 97.22, 98.37, 98.36),
    4: (95.71, 96.45, 96.73, 96.46, 97.49, 96.07),
    5: (95.87, 94.15, 93.78, 93.63, 94.12, 95.73),
}
_GSR = {
    1: (231.03, 235.47, 264.67, 221.74, 193.13, 207.18),
    2: (181.81, 254.87, 134.34, 154.95, 123.82, 125.21),
    3: (348.2, 269.35, 265.41, 217.13, 253.77, 298.82),
    4: (188.88, 150.03, 74.22, 123.25, 119.51, 118.08),
    5: (190.54, 216.47, 142.79, 135.38, 147.90, 164.27),
}
_META = {
    1: ("5-17", "male", "normal"),
    2: ("18-35", "male", "overweight, excessive sweating"),
    3: ("18-35", "male", "physically fit (athlete)"),
    4: ("36-50", "female", "major heart issue, obese"),
    5: ("50+", "male", "lung issue"),
}

BUILTIN_NAMES = tuple(f"person-{i}" for i in range(1, 6))


def _episodes(hours, offsets, **kw) -> tuple[ApneaEpisodeScript, ...]:
    return tuple(
        ApneaEpisodeScript(start_s=h * HOUR_S + off, **kw) for h in hours for off in offsets
    )


def builtin_profile(name: str) -> SubjectProfile:
    if name not in BUILTIN_NAMES:
        raise ProfileError(f"unknown profile {name!r}; valid names: {', '.join(BUILTIN_NAMES)}")
    i = int(name.split("-")[1])
    age, gender, status = _META[i]
    prof = SubjectProfile(
        label=name,
        age_group=age,
        gender=gender,
        body_status=status,
        hr_baseline_bpm=_HR[i],
        spo2_baseline_pct=_SPO2[i],
        gsr_baseline_us=_GSR[i],
    )
    if i == 2:
        # heart rate falls in hour 3: bradycardic dips during obstructed breathing
        prof = replace(
            prof,
            snore=SnoreScript(cycle_period_s=4.0, period_spread_s=0.5, peak_db=55.0),
            episodes=_episodes(
                [2],
                [600, 1500, 2400, 3200],
                duration_s=40.0,
                spo2_nadir_pct=94.0,
                hr_effect="bradycardia",
                hr_target_bpm=44.0,
            ),
        )
    elif i == 3:
        prof = replace(prof, room_floor_db=37.5)
    elif i == 4:
        # six-beat strips: first R lost, fifth R enlarged; one strip per hour
        strips = [600 + 5400 * j for j in range(6)]
        prof = replace(
            prof,
            snore=SnoreScript(cycle_period_s=4.0, period_spread_s=1.0, peak_db=60.0),
            episodes=tuple(
                ApneaEpisodeScript(
                    start_s=h * HOUR_S + off,
                    duration_s=25.0,
                    spo2_nadir_pct=round(_SPO2[4][h] - 4.5, 2),
                )
                for h in range(6)
                for off in (420, 1320, 2220, 3120)
            ),
            ecg_anomalies=tuple(
                pair for s in strips for pair in ((s, 0.3), (s + 4, 1.8))
            ),
        )
    elif i == 5:
        prof = replace(
            prof,
            snore=SnoreScript(cycle_period_s=5.0, period_spread_s=1.0, peak_db=60.0),
            episodes=_episodes(
                [2, 3],
                [150 + 300 * j for j in range(12)],
                duration_s=35.0,
                spo2_nadir_pct=88.5,
                hr_effect="tachy_rebound",
                hr_target_bpm=100.0,
            ),
        )
    validate_profile(prof)
    return prof


def load_profile(path: str | Path) -> SubjectProfile:
    """Read a profile from a TOML file.

    Top-level keys mirror :class:`SubjectProfile`; ``[snore]`` is a table,
    ``[[episodes]]`` an array of tables and ``ecg_anomalies`` a list of
    ``[beat_index, scale]`` pairs.
    """
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ProfileError(f"{path}: {exc}") from exc
    try:
        snore = data.pop("snore", None)
        episodes = data.pop("episodes", [])
        anomalies = data.pop("ecg_anomalies", [])
        prof = SubjectProfile(
            label=data.pop("label", Path(path).stem),
            hr_baseline_bpm=tuple(float(v) for v in data.pop("hr_baseline_bpm")),
            spo2_baseline_pct=tuple(float(v) for v in data.pop("spo2_baseline_pct")),
            gsr_baseline_us=tuple(float(v) for v in data.pop("gsr_baseline_us")),
            snore=SnoreScript(**snore) if snore else None,
            episodes=tuple(ApneaEpisodeScript(**e) for e in episodes),
            ecg_anomalies=tuple((int(b), float(s)) for b, s in anomalies),
            **data,
        )
    except (KeyError, TypeError) as exc:
        raise ProfileError(f"{path}: malformed profile ({exc})") from exc
    validate_profile(prof)
    return prof


def resolve_profile(name_or_path: str) -> SubjectProfile:
    if name_or_path in BUILTIN_NAMES:
        return builtin_profile(name_or_path)
    if Path(name_or_path).is_file():
        return load_profile(name_or_path)
    return builtin_profile(name_or_path)  # raises with the list of names


# ---------------------------------------------------------------------------
# Target curves


class _Curve:
    """Piecewise-linear plateaus with ramps at hour boundaries plus an offset."""

    def __init__(self, hours: int) -> None:
        self.hours = hours
        self.plateaus = np.zeros(hours)
        self.offset_t = np.array([0.0])
        self.offset_v = np.array([0.0])

    def knots(self, plateaus) -> tuple[np.ndarray, np.ndarray]:
        t, v = [0.0], [plateaus[0]]
        for k in range(1, self.hours):
            b = k * HOUR_S
            t += [b - RAMP_S / 2, b + RAMP_S / 2]
            v += [plateaus[k - 1], plateaus[k]]
        t.append(self.hours * HOUR_S)
        v.append(plateaus[-1])
        return np.array(t), np.array(v)

    def base(self, t, plateaus=None) -> np.ndarray:
        kt, kv = self.knots(self.plateaus if plateaus is None else plateaus)
        return np.interp(t, kt, kv)

    def offset(self, t) -> np.ndarray:
        return np.interp(t, self.offset_t, self.offset_v, left=0.0, right=0.0)

    def __call__(self, t) -> np.ndarray:
        return self.base(t) + self.offset(t)

    def solve(self, targets, offset_fn=None, iterations: int = 4) -> None:
        """Choose plateaus so each hour's mean (on a 1 s grid) hits its target."""
        grid = np.arange(self.hours * int(HOUR_S)) + 0.5
        hour_of = (grid // HOUR_S).astype(int)
        counts = np.bincount(hour_of, minlength=self.hours)

        def hourly(values):
            return np.bincount(hour_of, weights=values, minlength=self.hours) / counts

        basis = np.column_stack(
            [hourly(self.base(grid, np.eye(self.hours)[j])) for j in range(self.hours)]
        )
        targets = np.asarray(targets, dtype=float)
        self.plateaus = targets.copy()
        for _ in range(iterations):
            if offset_fn is not None:
                self.offset_t, self.offset_v = offset_fn(self)
            off = hourly(self.offset(grid))
            self.plateaus = np.linalg.solve(basis, targets - off)
            if offset_fn is None:
                break


def _dip_knots(episodes, depth_fn) -> tuple[np.ndarray, np.ndarray]:
    t, v = [0.0], [0.0]
    for ep in episodes:
        d = depth_fn(ep)
        if d is None:
            continue
        fall = min(FALL_S, ep.duration_s / 3)
        rise = min(RISE_S, ep.duration_s / 3)
        t += [ep.start_s, ep.start_s + fall, ep.end_s - rise, ep.end_s]
        v += [0.0, d, d, 0.0]
    return np.array(t), np.array(v)


def _rebound_knots(episodes, base_fn) -> tuple[np.ndarray, np.ndarray]:
    t, v = [0.0], [0.0]
    for ep in episodes:
        if ep.hr_effect == "bradycardia":
            d = ep.hr_target_bpm - float(base_fn(ep.start_s))
            fall = min(FALL_S, ep.duration_s / 3)
            rise = min(RISE_S, ep.duration_s / 3)
            t += [ep.start_s, ep.start_s + fall, ep.end_s - rise, ep.end_s]
            v += [0.0, d, d, 0.0]
        elif ep.hr_effect == "tachy_rebound":
            d = ep.hr_target_bpm - float(base_fn(ep.end_s))
            t += [ep.end_s, ep.end_s + 3.0, ep.end_s + REBOUND_S - 5.0, ep.end_s + REBOUND_S]
            v += [0.0, d, d, 0.0]
    return np.array(t), np.array(v)


# ---------------------------------------------------------------------------
# Waveform templates


def _pulse(phase: np.ndarray) -> np.ndarray:
    """Systolic peak plus dicrotic wave, pinned to zero at both phase ends."""

    def raw(ph):
        return np.exp(-0.5 * ((ph - 0.22) / 0.09) ** 2) + 0.35 * np.exp(-0.5 * ((ph - 0.58) / 0.10) ** 2)

    p0, p1 = raw(0.0), raw(1.0)
    return raw(phase) - (p0 * (1 - phase) + p1 * phase)


# (relative amplitude, centre offset s, width s, scales with sqrt(RR))
_ECG_WAVES = (
    ("P", 0.12, -0.16, 0.025, True),
    ("Q", -0.08, -0.03, 0.010, False),
    ("R", 1.00, 0.00, 0.015, False),
    ("S", -0.15, 0.035, 0.012, False),
    ("T", 0.25, 0.28, 0.050, True),
)
ECG_BASELINE = 350.0
ECG_R_COUNTS = 380.0
PPG_BASE = 300.0
PPG_COUNTS = 420.0
IR_DC = 150000.0
RED_DC = 120000.0
IR_PERFUSION = 0.01  # peak pulsatile fraction of the IR DC level
SOUND_MID = 512.0
_SNORE_TONES = (17.0, 29.0)
_ROOM_TONES = (7.0, 13.0)


class FrameSynthesizer:
    """All per-session state needed to render any block of frames."""

    def __init__(
        self,
        profile: SubjectProfile,
        duration_s: float,
        rate_hz: int = 100,
        rng_seed: int = 0,
        config: EngineConfig | None = None,
    ) -> None:
        validate_profile(profile)
        if rate_hz < 50:
            raise ValueError("rate_hz must be >= 50")
        if duration_s < 0:
            raise ValueError("duration_s must be >= 0")
        self.profile = profile
        self.rate = rate_hz
        self.cfg = config or EngineConfig()
        self.seed = rng_seed
        self.n_frames = int(round(duration_s * rate_hz))
        self.duration = self.n_frames / rate_hz
        rng = np.random.default_rng([rng_seed, 0])
        H = profile.hours
        episodes = sorted(profile.episodes, key=lambda e: e.start_s)

        self.spo2 = _Curve(H)
        self.spo2.solve(
            profile.spo2_baseline_pct,
            lambda c: _dip_knots(episodes, lambda ep: ep.spo2_nadir_pct - float(c.base(ep.start_s))),
        )
        self.hr = _Curve(H)
        self.hr.solve(profile.hr_baseline_bpm, lambda c: _rebound_knots(episodes, c.base))
        self.gsr = _Curve(H)
        self.gsr.solve(profile.gsr_baseline_us)

        self._noise_cache: tuple[int, np.ndarray | None] = (-1, None)
        self._beats(rng)
        self._sound_levels(rng, episodes)

    # -- beats ---------------------------------------------------------------
    def _beats(self, rng: np.random.Generator) -> None:
        end = self.duration + 5.0
        grid_t = np.arange(0.0, end + 1.0, 0.05)
        grid_hr = self.hr(grid_t)
        times = []
        t = float(rng.uniform(0.0, 0.5))
        while t < end:
            times.append(t)
            t += 60.0 / float(np.interp(t, grid_t, grid_hr))
        times = np.array(times)
        n = times.size
        jitter = rng.uniform(-BEAT_JITTER_S, BEAT_JITTER_S, n)
        self.beat_t = np.sort(times + jitter)
        self.beat_amp = rng.uniform(1 - AMP_JITTER, 1 + AMP_JITTER, n)
        self.r_scale = np.ones(n)
        for idx, scale in self.profile.ecg_anomalies:
            if 0 <= idx < n:
                self.r_scale[idx] = scale
        rr = np.diff(self.beat_t, prepend=self.beat_t[0] - 60.0 / float(grid_hr[0]))
        self.beat_rr = rr

    # -- sound ---------------------------------------------------------------
    def _sound_levels(self, rng: np.random.Generator, episodes) -> None:
        n_sec = int(math.ceil(self.duration)) + 1
        floor = self.profile.floor_db
        levels = floor + rng.uniform(-1.0, 1.0, n_sec)
        snore = self.profile.snore
        self.burst_onsets: list[float] = []
        if snore is not None:
            coverage = np.zeros(n_sec + 12)
            t = float(rng.uniform(0.0, snore.cycle_period_s))
            while t < n_sec:
                period = snore.cycle_period_s + rng.uniform(-snore.period_spread_s, snore.period_spread_s)
                length = snore.burst_fraction * period
                self.burst_onsets.append(t)
                s, e = t, t + length
                for sec in range(int(s), int(math.ceil(e))):
                    coverage[sec] += max(0.0, min(e, sec + 1) - max(s, sec))
                t += period
            burst = coverage[:n_sec] >= 0.5
            levels[burst] = snore.peak_db
        for ep in episodes:
            if ep.snore_suppressed:
                lo = max(0, int(math.floor(ep.start_s)))
                hi = min(n_sec, int(math.ceil(ep.end_s)))
                levels[lo:hi] = floor + rng.uniform(-1.0, 1.0, max(0, hi - lo))
        self.sound_levels = levels
        self.sound_phase = rng.uniform(0, 2 * np.pi, (n_sec, 2))

    # -- rendering -----------------------------------------------------------
    def _noise(self, i0: int, i1: int) -> np.ndarray:
        """Unit normals for frames [i0, i1), five channels.

        Drawn in fixed blocks keyed by block number, so the stream does not
        depend on how rendering is partitioned.
        """
        size = BLOCK_S * self.rate
        parts = []
        for b in range(i0 // size, (i1 - 1) // size + 1):
            if self._noise_cache[0] != b:
                rng = np.random.default_rng([self.seed, 1, b])
                self._noise_cache = (b, rng.standard_normal((5, size)))
            lo = max(i0 - b * size, 0)
            hi = min(i1 - b * size, size)
            parts.append(self._noise_cache[1][:, lo:hi])
        return np.concatenate(parts, axis=1)

    def render(self, i0: int, i1: int) -> np.ndarray:
        """Frames with indices in [i0, i1)."""
        i1 = min(i1, self.n_frames)
        n = max(0, i1 - i0)
        out = np.zeros(n, dtype=FRAME_DTYPE)
        if n == 0:
            return out
        cfg = self.cfg
        z = self._noise(i0, i1)
        idx = np.arange(i0, i1)
        t = idx / self.rate
        out["seq"] = idx & 0xFFFF
        out["timestamp_ms"] = np.round(idx * 1000.0 / self.rate).astype(np.int64)

        bt = self.beat_t
        # ECG: contributions of the previous, current and next beat
        k = np.searchsorted(bt, t, side="right") - 1
        ecg = np.zeros(n)
        for shift in (-1, 0, 1, 2):
            jj = k + shift
            valid = (jj >= 0) & (jj < bt.size)
            j = np.clip(jj, 0, bt.size - 1)
            dt = t - bt[j]
            q = np.sqrt(np.clip(self.beat_rr[j], 0.25, 2.0))
            amp = self.beat_amp[j] * valid
            for name, a, c, w, scaled in _ECG_WAVES:
                centre = c * q if scaled else c
                width = w * q if scaled else w
                gain = amp * (self.r_scale[j] if name == "R" else 1.0)
                ecg += a * gain * np.exp(-0.5 * ((dt - centre) / width) ** 2)
        wander = 8.0 * np.sin(2 * np.pi * 0.2 * t)
        ecg = ECG_BASELINE + ECG_R_COUNTS * ecg + wander + 2.0 * z[0]
        out["ecg_raw"] = np.clip(np.round(ecg), 0, 1023)

        # pulse phase relative to the delayed peripheral beat
        pt = bt + PULSE_TRANSIT_S
        kp = np.clip(np.searchsorted(pt, t, side="right") - 1, 0, pt.size - 2)
        phase = np.clip((t - pt[kp]) / (pt[kp + 1] - pt[kp]), 0.0, 1.0)
        before = t < pt[0]
        phase[before] = 0.0
        pulse = _pulse(phase) * self.beat_amp[kp]
        ppg = PPG_BASE + PPG_COUNTS * pulse + 2.0 * z[1]
        out["ppg_raw"] = np.clip(np.round(ppg), 0, 1023)

        ratio = ratio_for_spo2(self.spo2(t), cfg.spo2_a, cfg.spo2_b)
        ir_ac = IR_DC * IR_PERFUSION
        red_ac = ratio * (ir_ac / IR_DC) * RED_DC
        out["ir_raw"] = np.round(IR_DC + ir_ac * pulse + 2.0 * z[2])
        out["red_raw"] = np.round(RED_DC + red_ac * pulse + 2.0 * z[3])

        gsr = gsr_raw_for_conductance(self.gsr(t), cfg.divider_k) + 0.4 * z[4]
        out["gsr_raw"] = np.clip(np.round(gsr), 0, 511)

        sec = (out["timestamp_ms"] // 1000).astype(np.int64)
        level = self.sound_levels[sec]
        rms = 10.0 ** ((level - cfg.db_offset) / 20.0)
        # rounding adds ~1/12 count^2 of noise; take it out of the tone budget
        tone_rms = np.sqrt(np.maximum(rms**2 - 1.0 / 12.0, 0.05))
        snoring = level >= cfg.snore_burst_db
        f1 = np.where(snoring, _SNORE_TONES[0], _ROOM_TONES[0])
        f2 = np.where(snoring, _SNORE_TONES[1], _ROOM_TONES[1])
        ph = self.sound_phase[sec]
        tt = t - sec
        carrier = np.sin(2 * np.pi * f1 * tt + ph[:, 0]) + np.sin(2 * np.pi * f2 * tt + ph[:, 1])
        sound = SOUND_MID + tone_rms * carrier
        out["sound_raw"] = np.clip(np.round(sound), 0, 1023)
        return out

    def blocks(self, block_s: int = BLOCK_S) -> Iterator[np.ndarray]:
        step = block_s * self.rate
        for i0 in range(0, self.n_frames, step):
            yield self.render(i0, i0 + step)


def generate_blocks(
    profile: SubjectProfile,
    duration_s: float,
    rate_hz: int = 100,
    rng_seed: int = 0,
    config: EngineConfig | None = None,
) -> Iterator[np.ndarray]:
    """Frame stream as FRAME_DTYPE arrays of up to one minute each."""
    return FrameSynthesizer(profile, duration_s, rate_hz, rng_seed, config).blocks()


def generate_frames(
    profile: SubjectProfile,
    duration_s: float,
    rate_hz: int = 100,
    rng_seed: int = 0,
    config: EngineConfig | None = None,
) -> Iterator[SensorFrame]:
    synth = FrameSynthesizer(profile, duration_s, rate_hz, rng_seed, config)
    for block in synth.blocks():
        yield from array_to_frames(block)
