"""Tunable constants for the engine and the event rules.

Configuration files are TOML with two optional tables::

    [engine]
    db_offset = 36.0
    divider_k = 1000.0

    [detector]
    desat_drop_pct = 3.0

Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    rate_hz: int = 100
    # sound level calibration
    db_offset: float = 36.0
    db_floor: float = 30.0
    snore_burst_db: float = 50.0
    snore_window_s: int = 30
    snore_min_history_s: int = 10
    snore_max_cv: float = 0.4
    # oximeter
    no_finger_dc: float = 1000.0
    min_ac_ir: float = 1e-3
    spo2_a: float = 110.0
    spo2_b: float = 25.0
    spo2_window_s: float = 1.0
    # GSR divider: R = divider_k * (1024 + 2 raw) / (512 - raw)
    divider_k: float = 1000.0
    # PPG beat detector
    bpm_window_s: float = 10.0
    ppg_peak_fraction: float = 0.6
    ppg_refractory_ms: float = 250.0
    # ECG R-wave detector
    ecg_refractory_ms: float = 200.0
    ecg_integration_ms: float = 150.0
    r_loss_ratio: float = 0.5
    r_gain_ratio: float = 1.5
    gap_reset_s: float = 2.0


@dataclass(frozen=True)
class DetectorConfig:
    baseline_window_s: int = 120
    baseline_min_samples: int = 30
    desat_drop_pct: float = 3.0
    min_event_s: int = 10
    brady_bpm: float = 50.0
    snore_gap_min_s: int = 10
    snore_gap_max_s: int = 60
    class_window_s: int = 60
    alert_hold_s: int = 10
    spo2_warning_pct: float = 92.0
    spo2_critical_pct: float = 90.0
    bpm_critical: float = 40.0
    # session assessment rules
    r1_spo2_hourly_pct: float = 94.0
    ahi_suspect: float = 5.0
    snoring_min_s: int = 60
    enable_r1: bool = True
    enable_r2: bool = True
    enable_r3: bool = True
    enable_r4: bool = True


@dataclass(frozen=True)
class MonitorConfig:
    engine: EngineConfig = field(default_factory=EngineConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    def to_dict(self) -> dict:
        return {"engine": asdict(self.engine), "detector": asdict(self.detector)}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> MonitorConfig:
        unknown = set(data) - {"engine", "detector"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        return cls(
            engine=_build(EngineConfig, data.get("engine", {})),
            detector=_build(DetectorConfig, data.get("detector", {})),
        )


def _build(klass, values: dict):
    known = {f.name: f for f in fields(klass)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown {klass.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in values.items():
        default = known[key].default
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be a boolean")
        elif isinstance(default, (int, float)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be a number")
            value = type(default)(value)
            if not 0 < value < float("inf"):
                raise ConfigError(f"{key} must be positive and finite")
        kwargs[key] = value
    cfg = klass(**kwargs)
    if isinstance(cfg, DetectorConfig):
        if cfg.spo2_critical_pct > cfg.spo2_warning_pct:
            raise ConfigError("spo2_critical_pct must not exceed spo2_warning_pct")
        if cfg.snore_gap_min_s > cfg.snore_gap_max_s:
            raise ConfigError("snore_gap_min_s must not exceed snore_gap_max_s")
    return cfg


def load_config(path: str | Path | None) -> MonitorConfig:
    if path is None:
        return MonitorConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return MonitorConfig.from_dict(data)
