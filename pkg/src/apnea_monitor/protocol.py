"""Binary framing for raw sensor samples.

Every frame is 27 bytes::

    offset  size  field
    0       2     sync 0xAA 0x55
    2       1     version (0x01)
    3       2     seq            (LE)
    5       4     timestamp_ms   (LE)
    9       2     ecg_raw        (LE, 0-1023)
    11      2     ppg_raw        (LE, 0-1023)
    13      4     red_raw        (LE)
    17      4     ir_raw         (LE)
    21      2     gsr_raw        (LE, 0-1023)
    23      2     sound_raw      (LE, 0-1023)
    25      2     CRC-16/CCITT-FALSE over bytes 2..24 (BE)

The decoder is transport agnostic: feed it byte chunks of any size and it
returns every complete frame whose CRC and ranges check out.
"""

from __future__ import annotations

import binascii
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

SYNC = b"\xaa\x55"
VERSION = 0x01
FRAME_SIZE = 27
CRC_START = 2
CRC_END = 25  # exclusive
ADC_MAX = 1023

_BODY = struct.Struct("<2sBHIHHIIHH")
_CRC = struct.Struct(">H")

# Decoded frame columns, used for bulk paths.
FRAME_DTYPE = np.dtype(
    [
        ("seq", "<u2"),
        ("timestamp_ms", "<u4"),
        ("ecg_raw", "<u2"),
        ("ppg_raw", "<u2"),
        ("red_raw", "<u4"),
        ("ir_raw", "<u4"),
        ("gsr_raw", "<u2"),
        ("sound_raw", "<u2"),
    ]
)

# Exact on-wire layout (numpy packs structured dtypes without padding).
WIRE_DTYPE = np.dtype(
    [
        ("sync0", "u1"),
        ("sync1", "u1"),
        ("version", "u1"),
        ("seq", "<u2"),
        ("timestamp_ms", "<u4"),
        ("ecg_raw", "<u2"),
        ("ppg_raw", "<u2"),
        ("red_raw", "<u4"),
        ("ir_raw", "<u4"),
        ("gsr_raw", "<u2"),
        ("sound_raw", "<u2"),
        ("crc", ">u2"),
    ]
)
assert WIRE_DTYPE.itemsize == FRAME_SIZE

_LIMITS = {
    "seq": 0xFFFF,
    "timestamp_ms": 0xFFFFFFFF,
    "ecg_raw": ADC_MAX,
    "ppg_raw": ADC_MAX,
    "red_raw": 0xFFFFFFFF,
    "ir_raw": 0xFFFFFFFF,
    "gsr_raw": ADC_MAX,
    "sound_raw": ADC_MAX,
}
ADC_FIELDS = ("ecg_raw", "ppg_raw", "gsr_raw", "sound_raw")


class FrameRangeError(ValueError):
    """A frame field is outside its declared range."""


@dataclass(frozen=True, slots=True)
class SensorFrame:
    seq: int
    timestamp_ms: int
    ecg_raw: int
    ppg_raw: int
    red_raw: int
    ir_raw: int
    gsr_raw: int
    sound_raw: int


FRAME_FIELDS = tuple(f.name for f in fields(SensorFrame))


@dataclass
class ParserDiagnostics:
    frames_ok: int = 0
    frames_crc_fail: int = 0
    bytes_skipped_resync: int = 0
    frames_rejected_range: int = 0

    def __add__(self, other: ParserDiagnostics) -> ParserDiagnostics:
        return ParserDiagnostics(*(a + b for a, b in zip(self.astuple(), other.astuple())))

    def __sub__(self, other: ParserDiagnostics) -> ParserDiagnostics:
        return ParserDiagnostics(*(a - b for a, b in zip(self.astuple(), other.astuple())))

    def astuple(self) -> tuple[int, int, int, int]:
        return (
            self.frames_ok,
            self.frames_crc_fail,
            self.bytes_skipped_resync,
            self.frames_rejected_range,
        )

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# CRC

def _make_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint16)
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
        table[byte] = crc & 0xFFFF
    return table


_CRC_TABLE = _make_table()


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout."""
    # binascii.crc_hqx is the same polynomial with a caller-supplied init value
    return binascii.crc_hqx(bytes(data), 0xFFFF)


def crc16_rows(rows: np.ndarray) -> np.ndarray:
    """Vectorised CRC-16/CCITT-FALSE over each row of a 2-D uint8 array."""
    crc = np.full(rows.shape[0], 0xFFFF, dtype=np.uint16)
    for j in range(rows.shape[1]):
        idx = ((crc >> 8) ^ rows[:, j]) & 0xFF
        crc = ((crc << 8) & 0xFFFF).astype(np.uint16) ^ _CRC_TABLE[idx]
    return crc


# ---------------------------------------------------------------------------
# Encoding

def _check_ranges(frame: SensorFrame) -> None:
    for name, hi in _LIMITS.items():
        value = getattr(frame, name)
        if not isinstance(value, (int, np.integer)) or value < 0 or value > hi:
            raise FrameRangeError(f"{name} out of range: {value!r}")


def encode_frame(frame: SensorFrame) -> bytes:
    _check_ranges(frame)
    body = _BODY.pack(
        SYNC,
        VERSION,
        frame.seq,
        frame.timestamp_ms,
        frame.ecg_raw,
        frame.ppg_raw,
        frame.red_raw,
        frame.ir_raw,
        frame.gsr_raw,
        frame.sound_raw,
    )
    return body + _CRC.pack(crc16_ccitt_false(body[CRC_START:]))


def encode_frames(frames: np.ndarray) -> bytes:
    """Encode a FRAME_DTYPE array into concatenated wire frames."""
    n = len(frames)
    if n == 0:
        return b""
    for name in ADC_FIELDS:
        bad = np.flatnonzero(frames[name] > ADC_MAX)
        if bad.size:
            raise FrameRangeError(f"{name} out of range: {int(frames[name][bad[0]])}")
    wire = np.zeros(n, dtype=WIRE_DTYPE)
    wire["sync0"] = SYNC[0]
    wire["sync1"] = SYNC[1]
    wire["version"] = VERSION
    for name in FRAME_FIELDS:
        wire[name] = frames[name]
    raw = wire.view(np.uint8).reshape(n, FRAME_SIZE)
    wire["crc"] = crc16_rows(raw[:, CRC_START:CRC_END])
    return wire.tobytes()


def frames_to_array(frames) -> np.ndarray:
    return np.array([tuple(getattr(f, k) for k in FRAME_FIELDS) for f in frames], dtype=FRAME_DTYPE)


def array_to_frames(arr: np.ndarray) -> list[SensorFrame]:
    return [SensorFrame(*row) for row in arr.tolist()]


# ---------------------------------------------------------------------------
# Decoding

class FrameDecoder:
    """Incremental, resynchronising frame parser.

    One instance per byte stream. Corruption never raises; it shows up in
    :attr:`diagnostics`. A candidate that fails its CRC gives up only its
    first sync byte, so a genuine frame overlapping a false sync is still
    found. A CRC-valid frame with an out-of-range ADC field (or an unknown
    version) is consumed whole and counted in ``frames_rejected_range``.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self.diagnostics = ParserDiagnostics()

    @property
    def pending(self) -> int:
        """Bytes buffered but not yet judged."""
        return len(self._buf)

    def feed_array(self, chunk: bytes) -> np.ndarray:
        """Consume ``chunk``; return accepted frames as a FRAME_DTYPE array."""
        buf = self._buf
        buf.extend(chunk)
        diag = self.diagnostics
        out: list[np.ndarray] = []
        pos = 0
        n = len(buf)
        while n - pos >= 2:
            idx = buf.find(SYNC, pos)
            if idx < 0:
                keep = n - 1 if buf[n - 1] == SYNC[0] else n
                diag.bytes_skipped_resync += keep - pos
                pos = keep
                break
            diag.bytes_skipped_resync += idx - pos
            pos = idx
            k = (n - pos) // FRAME_SIZE
            if k == 0:
                break
            wire = np.frombuffer(bytes(buf[pos : pos + k * FRAME_SIZE]), dtype=WIRE_DTYPE)
            raw = wire.view(np.uint8).reshape(k, FRAME_SIZE)
            sync_ok = (wire["sync0"] == SYNC[0]) & (wire["sync1"] == SYNC[1])
            crc_ok = crc16_rows(raw[:, CRC_START:CRC_END]) == wire["crc"]
            range_ok = wire["version"] == VERSION
            for name in ADC_FIELDS:
                range_ok &= wire[name] <= ADC_MAX
            good = sync_ok & crc_ok & range_ok
            first_bad = int(np.argmin(good)) if not good.all() else k
            if first_bad:
                accepted = np.empty(first_bad, dtype=FRAME_DTYPE)
                for name in FRAME_FIELDS:
                    accepted[name] = wire[name][:first_bad]
                out.append(accepted)
                diag.frames_ok += first_bad
                pos += first_bad * FRAME_SIZE
            if first_bad == k or not sync_ok[first_bad]:
                continue
            if not crc_ok[first_bad]:
                diag.frames_crc_fail += 1
                pos += 1
            else:
                diag.frames_rejected_range += 1
                pos += FRAME_SIZE
        del buf[:pos]
        if not out:
            return np.empty(0, dtype=FRAME_DTYPE)
        return out[0] if len(out) == 1 else np.concatenate(out)

    def feed(self, chunk: bytes) -> list[SensorFrame]:
        return array_to_frames(self.feed_array(chunk))


def decode_stream(chunk: bytes, state: FrameDecoder) -> tuple[list[SensorFrame], ParserDiagnostics]:
    """Feed ``chunk`` to ``state``; return new frames and the diagnostics delta."""
    before = ParserDiagnostics(*state.diagnostics.astuple())
    frames = state.feed(chunk)
    return frames, state.diagnostics - before
