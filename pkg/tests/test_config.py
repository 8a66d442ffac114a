import pytest

from apnea_monitor.config import ConfigError, DetectorConfig, MonitorConfig, load_config


def write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return p


def test_defaults_when_no_file():
    assert load_config(None) == MonitorConfig()


def test_partial_file_overrides(tmp_path):
    cfg = load_config(write(tmp_path, "[detector]\ndesat_drop_pct = 4\nenable_r3 = false\n"))
    assert cfg.detector.desat_drop_pct == 4.0 and isinstance(cfg.detector.desat_drop_pct, float)
    assert cfg.detector.enable_r3 is False
    assert cfg.engine == MonitorConfig().engine


@pytest.mark.parametrize(
    "text",
    [
        "[engine]\nrate_hz = -5\n",
        "[engine]\nbogus = 1\n",
        "[other]\nx = 1\n",
        "[detector]\nenable_r1 = 1\n",
        "[detector]\nbrady_bpm = 'slow'\n",
        "[detector]\nspo2_critical_pct = 95\n",
        "[detector]\nsnore_gap_min_s = 90\n",
        "[engine\n",
    ],
)
def test_invalid_files(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_digest_round_trip():
    cfg = MonitorConfig(detector=DetectorConfig(brady_bpm=45.0))
    again = MonitorConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.digest() == cfg.digest() != MonitorConfig().digest()
