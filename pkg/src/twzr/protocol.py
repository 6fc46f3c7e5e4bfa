"""TWZP wire protocol: a hologram-generator service boundary.

Frame layout: magic ``TWZP``, u8 version, u8 type (1 = GenerateRequest,
2 = HologramResponse, 3 = Error), u32 LE payload length, payload.
Request payload: u32 count + (f32 x, y, phase, amp) records.  Response
payload: u32 N + N*N f32 phases.  Error payload: u16 code + UTF-8 reason.
Backends are callables ``tweezers -> (N, N) float phases``; `connect`
wraps a TCP endpoint (``host:port``) or a subprocess (``stdio:CMD``) into
one.  One request is in flight per connection at a time.
"""

from __future__ import annotations

import shlex
import socket
import socketserver
import struct
import subprocess
import sys
from typing import Callable, Sequence

import numpy as np

from .dataset import TweezerRecord, _TWEEZER_RECORD
from .fields import circular_std, measure_tweezers, propagate, wrap_phase
from .synthesis import (SynthesisConfig, TweezerTarget, synthesize_pinned,
                        wgs)

PROTOCOL_MAGIC = b"TWZP"
PROTOCOL_VERSION = 1

MSG_REQUEST = 1
MSG_RESPONSE = 2
MSG_ERROR = 3

ERR_EMPTY_REQUEST = 1
ERR_BAD_MAGIC = 2
ERR_UNKNOWN_TYPE = 3
ERR_GENERATOR = 4

_FRAME_HEADER = struct.Struct("<4sBBI")
_ERROR_HEADER = struct.Struct("<H")

DEFAULT_TIMEOUT = 5.0


class ProtocolError(Exception):
    """Framing violation or an Error message from the peer."""

    def __init__(self, reason: str, code: int | None = None):
        super().__init__(reason)
        self.code = code


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        buf = stream.read(n - got)
        if not buf:
            raise ProtocolError(f"stream closed after {got} of {n} bytes")
        chunks.append(buf)
        got += len(buf)
    return b"".join(chunks)


def encode_message(msg_type: int, payload: bytes) -> bytes:
    return _FRAME_HEADER.pack(PROTOCOL_MAGIC, PROTOCOL_VERSION, msg_type,
                              len(payload)) + payload


def read_message(stream) -> tuple[int, bytes]:
    """Read one frame; a stream not opening with the magic is rejected
    before any further bytes are consumed."""
    magic = _read_exact(stream, 4)
    if magic != PROTOCOL_MAGIC:
        raise ProtocolError(f"bad magic {magic!r}", code=ERR_BAD_MAGIC)
    version, msg_type, length = struct.unpack(
        "<BBI", _read_exact(stream, 6))
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    return msg_type, _read_exact(stream, length)


def encode_request(tweezers: Sequence[TweezerRecord]) -> bytes:
    payload = struct.pack("<I", len(tweezers))
    for t in tweezers:
        payload += _TWEEZER_RECORD.pack(t.x, t.y, t.phase, t.amp)
    return encode_message(MSG_REQUEST, payload)


def decode_request(payload: bytes) -> list[TweezerRecord]:
    (count,) = struct.unpack_from("<I", payload)
    expected = 4 + count * _TWEEZER_RECORD.size
    if len(payload) != expected:
        raise ProtocolError(f"request payload is {len(payload)} bytes, "
                            f"expected {expected}")
    out = []
    for k in range(count):
        x, y, phase, amp = _TWEEZER_RECORD.unpack_from(
            payload, 4 + k * _TWEEZER_RECORD.size)
        out.append(TweezerRecord(x=x, y=y, phase=phase, amp=amp))
    return out


def encode_response(phases: np.ndarray) -> bytes:
    phases = np.ascontiguousarray(np.asarray(phases, dtype=np.float32))
    if phases.ndim != 2 or phases.shape[0] != phases.shape[1]:
        raise ProtocolError("hologram must be square")
    return encode_message(MSG_RESPONSE, struct.pack("<I", phases.shape[0])
                          + phases.tobytes())


def decode_response(payload: bytes) -> np.ndarray:
    (n,) = struct.unpack_from("<I", payload)
    if len(payload) != 4 + n * n * 4:
        raise ProtocolError("response payload length mismatch")
    return np.frombuffer(payload, dtype=np.float32,
                         offset=4).reshape(n, n).astype(np.float64)


def encode_error(code: int, reason: str) -> bytes:
    return encode_message(MSG_ERROR,
                          _ERROR_HEADER.pack(code) + reason.encode("utf-8"))


def decode_error(payload: bytes) -> tuple[int, str]:
    (code,) = _ERROR_HEADER.unpack_from(payload)
    return code, payload[_ERROR_HEADER.size:].decode("utf-8")


class Connection:
    """A bidirectional framed byte stream to a generator backend."""

    def __init__(self, rfile, wfile, closer=None):
        self._rfile = rfile
        self._wfile = wfile
        self._closer = closer

    def close(self):
        if self._closer is not None:
            self._closer()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def send(self, frame: bytes):
        self._wfile.write(frame)
        self._wfile.flush()

    def recv(self) -> tuple[int, bytes]:
        return read_message(self._rfile)


def connect(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> Connection:
    """Open a backend connection: ``host:port`` or ``stdio:CMD``."""
    if endpoint.startswith("stdio:"):
        proc = subprocess.Popen(shlex.split(endpoint[len("stdio:"):]),
                                stdin=subprocess.PIPE,
                                stdout=subprocess.PIPE)

        def closer():
            proc.stdin.close()
            proc.wait(timeout=timeout)

        return Connection(proc.stdout, proc.stdin, closer)
    host, _, port = endpoint.rpartition(":")
    sock = socket.create_connection((host or "127.0.0.1", int(port)),
                                    timeout=timeout)
    rfile = sock.makefile("rb")
    wfile = sock.makefile("wb")

    def closer():
        rfile.close()
        wfile.close()
        sock.close()

    return Connection(rfile, wfile, closer)


def request_hologram(conn: Connection,
                     tweezers: Sequence[TweezerRecord]) -> np.ndarray:
    conn.send(encode_request(tweezers))
    msg_type, payload = conn.recv()
    if msg_type == MSG_ERROR:
        code, reason = decode_error(payload)
        raise ProtocolError(reason, code=code)
    if msg_type != MSG_RESPONSE:
        raise ProtocolError(f"unexpected message type {msg_type}")
    return decode_response(payload)


def serve_connection(generator: Callable, rfile, wfile) -> None:
    """Answer framed requests on one connection until it closes."""
    while True:
        try:
            try:
                msg_type, payload = read_message(rfile)
            except ProtocolError as e:
                if e.code == ERR_BAD_MAGIC:
                    wfile.write(encode_error(ERR_BAD_MAGIC, str(e)))
                    wfile.flush()
                return
            if msg_type != MSG_REQUEST:
                wfile.write(encode_error(ERR_UNKNOWN_TYPE,
                                         f"unexpected type {msg_type}"))
                wfile.flush()
                continue
            tweezers = decode_request(payload)
            if not tweezers:
                wfile.write(encode_error(ERR_EMPTY_REQUEST, "empty request"))
                wfile.flush()
                continue
            try:
                phases = generator(tweezers)
            except Exception as e:
                wfile.write(encode_error(ERR_GENERATOR, str(e)))
                wfile.flush()
                continue
            wfile.write(encode_response(phases))
            wfile.flush()
        except (BrokenPipeError, ConnectionResetError, ValueError,
                struct.error):
            return


def serve_stdio(generator: Callable) -> None:
    serve_connection(generator, sys.stdin.buffer, sys.stdout.buffer)


def serve_tcp(generator: Callable, host: str = "127.0.0.1", port: int = 0):
    """Threaded TCP server; returns (server, bound port).  Call
    ``server.shutdown()`` / ``server.server_close()`` to stop."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            serve_connection(generator, self.rfile, self.wfile)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    server = Server((host, port), Handler)
    return server, server.server_address[1]


def make_echo_backend(n: int = 256) -> Callable:
    """Returns a flat zero hologram of fixed size regardless of input."""

    def generator(tweezers):
        return np.zeros((n, n), dtype=np.float32)

    return generator


def make_pinned_backend(cfg: SynthesisConfig = SynthesisConfig()) -> Callable:

    def generator(tweezers):
        targets = [TweezerTarget(x=t.x, y=t.y, phase=t.phase, weight=t.amp)
                   for t in tweezers]
        holo, _ = synthesize_pinned(targets, cfg, report=False)
        return holo.values

    return generator


def make_wgs_backend(cfg: SynthesisConfig = SynthesisConfig()) -> Callable:

    def generator(tweezers):
        targets = [TweezerTarget(x=t.x, y=t.y, weight=t.amp)
                   for t in tweezers]
        holo, _ = wgs(targets, cfg, report=False)
        return holo.values

    return generator


def _validation_scene(rng: np.random.Generator, n_traps: int,
                      cfg: SynthesisConfig) -> list[TweezerRecord]:
    """Well-separated random sub-pixel traps with random phases."""
    m = cfg.expanded_size
    spacing = max(4.0 * cfg.oversample, 2.0 * cfg.window_radius + 2.0)
    grid = np.arange(0.25 * m, 0.75 * m, spacing)
    sites = np.array([(x, y) for y in grid for x in grid])
    if len(sites) < n_traps:
        raise ProtocolError(f"scene of {n_traps} traps does not fit")
    picks = sites[rng.permutation(len(sites))[:n_traps]]
    picks = picks + rng.uniform(-0.5, 0.5, picks.shape)
    phases = rng.uniform(-np.pi, np.pi, n_traps)
    # round to the wire precision so remote and in-process backends see
    # identical scenes
    picks = picks.astype(np.float32)
    phases = phases.astype(np.float32)
    return [TweezerRecord(x=float(p[0]), y=float(p[1]), phase=float(ph))
            for p, ph in zip(picks, phases)]


def validate_generator(backend: Callable, scenes: int = 50, seed: int = 0,
                       cfg: SynthesisConfig = SynthesisConfig(),
                       traps_per_scene: int = 100) -> dict:
    """Request holograms for random scenes, measure the realized traps, and
    aggregate accuracy metrics against the requested positions/phases."""
    if scenes < 1:
        raise ProtocolError("need at least one scene")
    aperture = cfg.make_aperture()
    pos_err = []
    phase_err = []
    powers = []
    efficiency = []
    failures = 0
    for k in range(scenes):
        rng = np.random.default_rng([seed, k])
        tweezers = _validation_scene(rng, traps_per_scene, cfg)
        try:
            phases = backend(tweezers)
            from .fields import PhaseGrid

            # canonicalize through the wire precision so in-process and
            # remote backends measure identically
            phases = np.asarray(phases, dtype=np.float32)
            field = propagate(PhaseGrid(np.asarray(phases, dtype=np.float64)),
                              aperture, cfg.oversample)
            expected = np.array([(t.x, t.y) for t in tweezers])
            meas = measure_tweezers(field, expected, cfg.window_radius)
        except Exception:
            failures += 1
            continue
        for t, m in zip(tweezers, meas):
            pos_err.append(m.x - t.x)
            pos_err.append(m.y - t.y)
            phase_err.append(wrap_phase(m.phase - t.phase))
            powers.append(m.power)
        efficiency.append(sum(mm.power for mm in meas))
    if not pos_err:
        return {"position_std": float("inf"), "phase_std": float("inf"),
                "uniformity": float("inf"), "efficiency": 0.0,
                "failures": failures}
    powers = np.asarray(powers)
    return {"position_std": float(np.std(pos_err)),
            "phase_std": float(circular_std(np.asarray(phase_err))),
            "uniformity": float(powers.std() / powers.mean()),
            "efficiency": float(np.mean(efficiency)),
            "failures": failures}


def _main(argv=None):
    """Serve a built-in backend over stdio (for ``stdio:CMD`` endpoints)."""
    import argparse

    parser = argparse.ArgumentParser(prog="twzr.protocol")
    parser.add_argument("--serve", choices=["echo", "pinned", "wgs"],
                        required=True)
    parser.add_argument("--slm-size", type=int, default=256)
    parser.add_argument("--oversample", type=int, default=8)
    parser.add_argument("--iterations", type=int, default=50)
    args = parser.parse_args(argv)
    cfg = SynthesisConfig(slm_size=args.slm_size, oversample=args.oversample,
                          iterations=args.iterations)
    if args.serve == "echo":
        generator = make_echo_backend(args.slm_size)
    elif args.serve == "pinned":
        generator = make_pinned_backend(cfg)
    else:
        generator = make_wgs_backend(cfg)
    serve_stdio(generator)


if __name__ == "__main__":
    _main()
