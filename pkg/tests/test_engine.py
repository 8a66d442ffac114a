import numpy as np
import pytest

from apnea_monitor.engine import SignalEngine, VitalsSample
from apnea_monitor.protocol import array_to_frames
from apnea_monitor.simulator import SnoreScript, SubjectProfile, generate_blocks


def frames(seconds, seed=0, hr=66.0, snore=None):
    p = SubjectProfile("t", (hr,), (96.5,), (220.0,), snore=snore)
    return np.concatenate(list(generate_blocks(p, seconds, 100, seed)))


def run(arr, split=None):
    eng = SignalEngine()
    out = []
    if split is None:
        out += eng.ingest_block(arr)
    else:
        for i in range(0, len(arr), split):
            out += eng.ingest_block(arr[i : i + split])
    return out + eng.flush(), eng


def test_one_second_of_frames_gives_one_sample():
    arr = frames(1)
    eng = SignalEngine()
    out = eng.ingest_block(arr)
    assert len(out) == 1 and out[0].t_s == 0
    assert eng.flush() == []


def test_single_frame_ingest():
    eng = SignalEngine()
    out = []
    for f in array_to_frames(frames(3)):
        out += eng.ingest(f)
    assert [s.t_s for s in out] == [0, 1, 2]


def test_block_split_does_not_change_samples():
    arr = frames(40, seed=2, snore=SnoreScript(4.0))
    ref, _ = run(arr)
    for split in (1, 37, 100, 999):
        got, _ = run(arr, split)
        assert got == ref
    assert len(ref) == 40


def test_sample_fields_after_warmup():
    out, _ = run(frames(30, seed=1))
    s = out[-1]
    assert s.bpm == pytest.approx(66.0, abs=1.0)
    assert s.spo2_pct == pytest.approx(96.5, abs=0.3)
    assert s.gsr_us == pytest.approx(220.0, abs=2.0)
    assert 35.0 <= s.sound_db <= 40.0
    assert s.snore_active is False
    assert out[0].bpm is None  # not enough history yet


def test_out_of_order_frames_rejected():
    arr = frames(3)
    shuffled = arr.copy()
    shuffled[150], shuffled[151] = arr[151], arr[150]
    out, eng = run(shuffled)
    assert eng.diagnostics.frames_rejected_order == 1
    assert len(out) == 3


def test_lost_frames_are_interpolated():
    arr = frames(30, seed=4)
    keep = np.random.default_rng(0).random(arr.size) > 0.05
    out, eng = run(arr[keep])
    ref, _ = run(arr)
    assert eng.diagnostics.slots_filled == int((~keep).sum())
    assert len(out) == len(ref)
    tail = slice(12, None)
    assert np.mean([s.bpm for s in out[tail]]) == pytest.approx(np.mean([s.bpm for s in ref[tail]]), abs=0.5)
    assert np.mean([s.spo2_pct for s in out[tail]]) == pytest.approx(np.mean([s.spo2_pct for s in ref[tail]]), abs=0.3)


def test_dropout_gives_absent_vitals_and_resets():
    arr = frames(40, seed=5)
    secs = arr["timestamp_ms"] // 1000
    gap = (secs >= 20) & (secs < 25)
    out, eng = run(arr[~gap])
    assert [s.t_s for s in out] == list(range(40))
    for s in out[20:25]:
        assert s.bpm is None and s.spo2_pct is None and s.sound_db is None
    assert eng.diagnostics.gap_resets == 1
    assert out[-1].spo2_pct is not None


def test_short_gap_fills_without_reset():
    arr = frames(20, seed=6)
    secs = arr["timestamp_ms"] // 1000
    out, eng = run(arr[secs != 10])
    assert [s.t_s for s in out] == list(range(20))
    assert out[10].spo2_pct is None
    assert eng.diagnostics.gap_resets == 0
    assert out[12].bpm is not None


def test_frame_for_closed_second_is_late():
    arr = frames(2)
    eng = SignalEngine()
    assert len(eng.ingest_block(arr[:100])) == 1  # second 0 closed by its last slot
    late = arr[99:100].copy()
    late["timestamp_ms"] = 995  # in order, but second 0 is already emitted
    assert eng.ingest_block(late) == []
    assert eng.diagnostics.frames_late == 1
    assert len(eng.ingest_block(arr[100:])) == 1


def test_vitals_sample_round_trip():
    s = VitalsSample(5, 70.5, 96.1, 200.0, 41.2, True, 4.0, ("r_gain",))
    assert VitalsSample.from_dict(s.to_dict()) == s
