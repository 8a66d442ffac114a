"""Command-line front end.

    apnea-monitor simulate --profile person-5 --duration 6h --seed 7 --session-dir s5
    apnea-monitor emit --profile person-5 --duration 6h --transport tcp:127.0.0.1:7000
    apnea-monitor monitor --transport tcp:127.0.0.1:7000 --session-dir live
    apnea-monitor replay --session-dir s5 --speed 60 --out s5-replay
    apnea-monitor report --session-dir s5 --format csv

Exit status: 0 success, 2 usage or input error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import socket
import sys
import time
from collections.abc import Callable, Iterator
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .engine import VitalsSample
from .pipeline import Pipeline
from .protocol import encode_frames
from .report import FORMATS, hourly_table, render_report
from .simulator import FrameSynthesizer, ProfileError, resolve_profile
from .store import Session, SessionError, SessionWriter, replay

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

CONNECT_RETRY_S = 5.0
RECV_SIZE = 65536


class UsageError(Exception):
    pass


def parse_duration(text: str) -> float:
    """'6h', '90m', '30s' or a bare number of seconds."""
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([hms]?)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"bad duration {text!r}; use e.g. 6h, 90m, 30s")
    value = float(m.group(1)) * {"h": 3600, "m": 60, "s": 1, "": 1}[m.group(2)]
    if value <= 0:
        raise argparse.ArgumentTypeError("duration must be positive")
    return value


def parse_speed(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad speed {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("speed must be positive (inf for as fast as possible)")
    return value


def parse_endpoint(spec: str) -> tuple[str, str | tuple[str, int]]:
    """``file:PATH``, ``tcp:HOST:PORT`` or ``-`` for the standard streams."""
    if spec == "-":
        return "std", "-"
    kind, _, rest = spec.partition(":")
    if kind == "file" and rest:
        return "file", rest
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        if host and port.isdigit():
            return "tcp", (host, int(port))
    raise UsageError(f"bad endpoint {spec!r}; expected file:PATH, tcp:HOST:PORT or -")


# ---------------------------------------------------------------------------
# transports


def _connect(addr: tuple[str, int], retry_s: float) -> socket.socket:
    deadline = time.monotonic() + retry_s
    while True:
        try:
            return socket.create_connection(addr, timeout=retry_s or None)
        except OSError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.1)


def _drain(read: Callable[[int], bytes], close: Callable[[], None] | None = None) -> Iterator[bytes]:
    try:
        while chunk := read(RECV_SIZE):
            yield chunk
    finally:
        if close:
            close()


def open_transport(spec: str, retry_s: float = CONNECT_RETRY_S) -> Iterator[bytes]:
    """Byte chunks from a file, a TCP server or stdin until end of stream.

    The file is opened or the connection made before returning, so an
    unreachable transport raises here.
    """
    kind, target = parse_endpoint(spec)
    if kind == "std":
        stream = sys.stdin.buffer
        return _drain(getattr(stream, "read1", stream.read))
    if kind == "file":
        fh = open(target, "rb")
        return _drain(fh.read, fh.close)
    sock = _connect(target, retry_s)
    sock.settimeout(None)
    return _drain(sock.recv, sock.close)


class LineSink:
    """Line-delimited JSON records to stdout, a file or a TCP peer."""

    def __init__(self, spec: str) -> None:
        kind, target = parse_endpoint(spec)
        self._sock = None
        self._fh = None
        if kind == "std":
            self._write = lambda b: (sys.stdout.write(b.decode()), sys.stdout.flush())
        elif kind == "file":
            self._fh = open(target, "ab")
            self._write = lambda b: (self._fh.write(b), self._fh.flush())
        else:
            self._sock = _connect(target, CONNECT_RETRY_S)
            self._write = self._sock.sendall

    def __call__(self, record) -> None:
        d = record.to_dict() if hasattr(record, "to_dict") else record
        self._write((json.dumps(d, sort_keys=True) + "\n").encode())

    def close(self) -> None:
        if self._fh:
            self._fh.close()
        if self._sock:
            self._sock.close()


# ---------------------------------------------------------------------------
# helpers


def simulated_chunks(
    profile_name: str,
    duration_s: float,
    seed: int,
    config,
    speed: float = math.inf,
    corrupt_rate: float = 0.0,
    sleep: Callable[[float], None] = time.sleep,
) -> Iterator[bytes]:
    """Wire bytes for a simulated session, one block at a time."""
    profile = resolve_profile(profile_name)
    synth = FrameSynthesizer(profile, duration_s, config.engine.rate_hz, seed, config.engine)
    rng = np.random.default_rng([seed, 99])
    block_s = 1 if math.isfinite(speed) else 60
    t0 = time.monotonic()
    for i, block in enumerate(synth.blocks(block_s)):
        data = encode_frames(block)
        if corrupt_rate > 0:
            data = corrupt_bytes(data, corrupt_rate, rng)
        if math.isfinite(speed):
            delay = t0 + i * block_s / speed - time.monotonic()
            if delay > 0:
                sleep(delay)
        yield data


def corrupt_bytes(data: bytes, rate: float, rng: np.random.Generator) -> bytes:
    """Replace a random ``rate`` fraction of bytes with different values."""
    arr = np.frombuffer(data, dtype=np.uint8).copy()
    hit = rng.random(arr.size) < rate
    arr[hit] ^= rng.integers(1, 256, int(hit.sum()), dtype=np.uint8)
    return arr.tobytes()


def status_line(s: VitalsSample) -> str:
    def f(v, d=1):
        return "--" if v is None else f"{v:.{d}f}"

    snore = f"snore {f(s.snore_period_s)}s" if s.snore_active else "quiet"
    flags = " " + ",".join(s.ecg_flags) if s.ecg_flags else ""
    return (
        f"t={s.t_s:>6}s  bpm {f(s.bpm):>5}  spo2 {f(s.spo2_pct):>5}  gsr {f(s.gsr_us):>6}"
        f"  sound {f(s.sound_db):>5} dB  {snore}{flags}"
    )


def print_summary(result: dict, session_dir: Path | None, out=None) -> None:
    out = out or sys.stdout
    a = result["assessment"]
    if result["hourly"]:
        out.write(hourly_table(result["hourly"], result["mean"]))
    if a is None:
        out.write("verdict: none (no samples)\n")
    else:
        out.write(f"verdict: {a['verdict']}  AHI {a['ahi']:.2f} ({a['severity']})\n")
        for ev in a["evidence"]:
            out.write(f"  {ev['rule']}: {ev['message']}\n")
        for ev in a["findings"]:
            out.write(f"  [{ev['rule']}] {ev['message']}\n")
    p = result["diagnostics"]["parser"]
    out.write(
        f"frames ok {p['frames_ok']}  crc failures {p['frames_crc_fail']}"
        f"  resync bytes {p['bytes_skipped_resync']}  range rejects {p['frames_rejected_range']}\n"
    )
    for n in result["notes"]:
        out.write(f"note: {n}\n")
    if session_dir is not None:
        out.write(f"session: {session_dir}\n")


def _run(pipe: Pipeline, chunks) -> None:
    try:
        for chunk in chunks:
            pipe.feed(chunk)
    except KeyboardInterrupt:
        pipe.note("truncated: interrupted by operator")
    except (ConnectionError, socket.timeout) as exc:
        pipe.note(f"truncated: transport lost ({exc.__class__.__name__})")
    if pipe.decoder.pending:
        pipe.note(f"truncated: {pipe.decoder.pending} trailing bytes without a complete frame")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    profile = resolve_profile(args.profile)
    writer = SessionWriter.create(args.session_dir, config, profile.label)
    sink = LineSink(args.alert_sink) if args.alert_sink else None
    pipe = Pipeline(config, writer, on_alert=sink)
    try:
        _run(pipe, simulated_chunks(args.profile, args.duration, args.seed, config))
        result = pipe.finish()
    finally:
        writer.close()
        if sink:
            sink.close()
    print_summary(result, Path(args.session_dir))
    return EXIT_OK


def cmd_emit(args) -> int:
    config = load_config(args.config)
    resolve_profile(args.profile)
    chunks = simulated_chunks(args.profile, args.duration, args.seed, config, args.speed, args.corrupt_rate)
    kind, target = parse_endpoint(args.transport)
    if kind == "std":
        for c in chunks:
            sys.stdout.buffer.write(c)
        sys.stdout.buffer.flush()
    elif kind == "file":
        with open(target, "wb") as fh:
            for c in chunks:
                fh.write(c)
    else:
        with socket.create_server(target) as srv:
            print(f"listening on {target[0]}:{srv.getsockname()[1]}", file=sys.stderr, flush=True)
            conn, _ = srv.accept()
            with conn:
                try:
                    for c in chunks:
                        conn.sendall(c)
                except (BrokenPipeError, ConnectionResetError):
                    print("receiver disconnected", file=sys.stderr)
                    return EXIT_RUNTIME
    return EXIT_OK


def cmd_monitor(args) -> int:
    config = load_config(args.config)
    parse_endpoint(args.transport)
    try:
        chunks = open_transport(args.transport, args.connect_timeout)
    except OSError as exc:
        print(f"error: cannot open transport {args.transport}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    writer = SessionWriter.create(args.session_dir, config, args.label)
    sink = LineSink(args.alert_sink)
    on_sample = None if args.quiet else (lambda s: print(status_line(s), file=sys.stderr, flush=True))
    pipe = Pipeline(config, writer, on_sample=on_sample, on_alert=sink)
    try:
        _run(pipe, chunks)
        result = pipe.finish()
    finally:
        writer.close()
        sink.close()
    print_summary(result, Path(args.session_dir), out=sys.stderr)
    return EXIT_OK


def cmd_replay(args) -> int:
    src = Session(args.session_dir)
    config = src.config()
    writer = SessionWriter.create(args.out, config, src.info.profile_label) if args.out else None
    sink = LineSink(args.alert_sink) if args.alert_sink else None
    pipe = Pipeline(config, writer, on_alert=sink)
    t0 = time.monotonic()
    try:
        _run(pipe, replay(src, args.speed))
        result = pipe.finish()
    finally:
        if writer:
            writer.close()
        if sink:
            sink.close()
    print_summary(result, Path(args.out) if args.out else None)
    print(f"replayed in {time.monotonic() - t0:.1f} s at speed {args.speed:g}")
    if src.finalized:
        same = src.result()["assessment"] == result["assessment"]
        print(f"assessment matches stored session: {'yes' if same else 'no'}")
    return EXIT_OK


def cmd_report(args) -> int:
    text = render_report(args.session_dir, args.format, args.out_dir, figures=not args.no_figures)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apnea-monitor", description="Sleep apnea screening monitor.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, profile=False):
        sp.add_argument("--config", help="TOML file with [engine] and [detector] tables")
        if profile:
            sp.add_argument("--profile", required=True, help="built-in name (person-1..person-5) or profile file")
            sp.add_argument("--duration", type=parse_duration, default=parse_duration("6h"))
            sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("simulate", help="simulate a subject and record a finalized session")
    common(sp, profile=True)
    sp.add_argument("--session-dir", required=True)
    sp.add_argument("--alert-sink", help="'-', file:PATH or tcp:HOST:PORT")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("emit", help="stream simulated wire bytes to a transport")
    common(sp, profile=True)
    sp.add_argument("--transport", default="-", help="'-', file:PATH or tcp:HOST:PORT (listens)")
    sp.add_argument("--speed", type=parse_speed, default=1.0, help="pacing multiplier; inf for no pacing")
    sp.add_argument("--corrupt-rate", type=float, default=0.0, help="fraction of bytes to corrupt")
    sp.set_defaults(func=cmd_emit)

    sp = sub.add_parser("monitor", help="run the live pipeline on a byte transport")
    common(sp)
    sp.add_argument("--transport", required=True, help="'-', file:PATH or tcp:HOST:PORT (connects)")
    sp.add_argument("--session-dir", required=True)
    sp.add_argument("--alert-sink", default="-", help="'-', file:PATH or tcp:HOST:PORT")
    sp.add_argument("--label", help="profile label stored in the manifest")
    sp.add_argument("--connect-timeout", type=float, default=CONNECT_RETRY_S)
    sp.add_argument("--quiet", action="store_true", help="suppress the per-second status lines")
    sp.set_defaults(func=cmd_monitor)

    sp = sub.add_parser("replay", help="re-run the pipeline on a stored session's frames")
    sp.add_argument("--session-dir", required=True)
    sp.add_argument("--speed", type=parse_speed, default=math.inf)
    sp.add_argument("--out", help="record the replay as a new session here")
    sp.add_argument("--alert-sink", help="'-', file:PATH or tcp:HOST:PORT")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("report", help="render tables, series and figures for a session")
    sp.add_argument("--session-dir", required=True)
    sp.add_argument("--format", choices=FORMATS, default="table-text")
    sp.add_argument("--out-dir", help="defaults to <session-dir>/report")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ProfileError, ConfigError, SessionError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
