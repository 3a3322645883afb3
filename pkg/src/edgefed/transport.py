"""Wire codec for model-weight messages, exact byte accounting, a
deterministic simulated network with a virtual clock, and a TCP
transport with length-prefixed frames.

Wire layout (all integers little-endian):

    magic   4 bytes  "FEDW"
    version 1 byte   (= 1)
    type    1 byte   0 = GlobalModel, 1 = LocalUpdate, 2 = Control
    round   4 bytes  unsigned
    count   2 bytes  unsigned tensor count
    [LocalUpdate only] sample_count, compute_ms, recv_ms, send_ms
                       as 4 unsigned 4-byte fields
    per tensor: name length (2 bytes) + UTF-8 name + ndim (1 byte)
                + one 4-byte unsigned size per dimension
                + float32 payload

TCP framing adds a 4-byte little-endian length prefix per message. The
traffic meter counts message bytes only, never the frame prefix, so
simulated and TCP runs meter identically.
"""

from __future__ import annotations

import socket
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ProtocolError, ValidationError
from .metrics import PhaseRecord
from .nn import Parameter, ParameterSet

MAGIC = b"FEDW"
WIRE_VERSION = 1
MSG_GLOBAL_MODEL = 0
MSG_LOCAL_UPDATE = 1
MSG_CONTROL = 2
HEADER_LEN = 12
UPDATE_EXTRA_LEN = 16
FRAME_PREFIX_LEN = 4
MAX_FRAME_LEN = 1 << 30

_U16_MAX = 0xFFFF
_U32_MAX = 0xFFFFFFFF


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------


@dataclass
class GlobalModelMsg:
    round: int
    weights: ParameterSet


@dataclass
class LocalUpdateMsg:
    round: int
    weights: ParameterSet
    sample_count: int
    compute_ms: int = 0
    recv_ms: int = 0
    send_ms: int = 0


@dataclass
class ControlMsg:
    round: int = 0


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------


def _check_range(value: int, limit: int, what: str) -> int:
    value = int(value)
    if value < 0 or value > limit:
        raise ValidationError(f"{what} must be in [0, {limit}], got {value}")
    return value


def encode(msg) -> bytes:
    if isinstance(msg, GlobalModelMsg):
        mtype, extra, pairs = MSG_GLOBAL_MODEL, b"", msg.weights.to_pairs()
    elif isinstance(msg, LocalUpdateMsg):
        extra = struct.pack(
            "<4I",
            _check_range(msg.sample_count, _U32_MAX, "sample_count"),
            _check_range(msg.compute_ms, _U32_MAX, "compute_ms"),
            _check_range(msg.recv_ms, _U32_MAX, "recv_ms"),
            _check_range(msg.send_ms, _U32_MAX, "send_ms"),
        )
        mtype, pairs = MSG_LOCAL_UPDATE, msg.weights.to_pairs()
    elif isinstance(msg, ControlMsg):
        mtype, extra, pairs = MSG_CONTROL, b"", []
    else:
        raise ValidationError(f"cannot encode {type(msg).__name__}")

    rnd = _check_range(msg.round, _U32_MAX, "round")
    count = _check_range(len(pairs), _U16_MAX, "tensor count")
    parts = [MAGIC, struct.pack("<BBIH", WIRE_VERSION, mtype, rnd, count), extra]
    for name, value in pairs:
        encoded_name = name.encode("utf-8")
        _check_range(len(encoded_name), _U16_MAX, f"name length of {name!r}")
        for dim in value.shape:
            _check_range(dim, _U32_MAX, f"dimension of {name!r}")
        parts.append(struct.pack("<H", len(encoded_name)))
        parts.append(encoded_name)
        parts.append(struct.pack("<B", value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(data: bytes):
    def need(offset: int, n: int, what: str) -> None:
        if offset + n > len(data):
            raise FormatError(f"truncated message while reading {what}", offset=offset)

    need(0, HEADER_LEN, "header")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    if data[4] != WIRE_VERSION:
        raise FormatError(f"unsupported version {data[4]}", offset=4)
    mtype = data[5]
    if mtype not in (MSG_GLOBAL_MODEL, MSG_LOCAL_UPDATE, MSG_CONTROL):
        raise FormatError(f"unknown message type {mtype}", offset=5)
    (rnd,) = struct.unpack_from("<I", data, 6)
    (count,) = struct.unpack_from("<H", data, 10)
    offset = HEADER_LEN

    extras = ()
    if mtype == MSG_LOCAL_UPDATE:
        need(offset, UPDATE_EXTRA_LEN, "update fields")
        extras = struct.unpack_from("<4I", data, offset)
        offset += UPDATE_EXTRA_LEN
    if mtype == MSG_CONTROL and count != 0:
        raise FormatError(f"control message declares {count} tensors", offset=10)

    params = []
    seen = set()
    for _ in range(count):
        need(offset, 2, "tensor name length")
        (name_len,) = struct.unpack_from("<H", data, offset)
        if name_len == 0:
            raise FormatError("empty tensor name", offset=offset)
        offset += 2
        need(offset, name_len, "tensor name")
        try:
            name = data[offset : offset + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not valid UTF-8", offset=offset)
        if name in seen:
            raise FormatError(f"duplicate tensor name {name!r}", offset=offset)
        seen.add(name)
        offset += name_len
        need(offset, 1, "tensor rank")
        ndim = data[offset]
        if ndim < 1 or ndim > 4:
            raise FormatError(f"tensor rank {ndim} outside 1..4", offset=offset)
        offset += 1
        need(offset, 4 * ndim, "tensor dimensions")
        dims = struct.unpack_from(f"<{ndim}I", data, offset)
        if any(d == 0 for d in dims):
            raise FormatError(f"zero-sized dimension in {dims}", offset=offset)
        offset += 4 * ndim
        numel = 1
        for d in dims:
            numel *= d
        need(offset, 4 * numel, f"payload of tensor {name!r}")
        value = np.frombuffer(data, "<f4", numel, offset).reshape(dims)
        params.append(Parameter(name, value.astype(np.float32, copy=True)))
        offset += 4 * numel

    if offset != len(data):
        raise FormatError(
            f"{len(data) - offset} trailing bytes after message body", offset=offset
        )
    if mtype == MSG_GLOBAL_MODEL:
        return GlobalModelMsg(rnd, ParameterSet(params))
    if mtype == MSG_LOCAL_UPDATE:
        return LocalUpdateMsg(rnd, ParameterSet(params), *extras)
    return ControlMsg(rnd)


# ---------------------------------------------------------------------------
# Byte accounting
# ---------------------------------------------------------------------------


class TrafficMeter:
    """Per-worker cumulative and per-round byte counters.

    Counts message payload bytes only (no stream framing), in the
    worker's frame of reference: a broadcast is bytes the worker
    received, an update is bytes it sent.
    """

    def __init__(self):
        self._sent: dict[int, int] = {}
        self._received: dict[int, int] = {}
        self._round_sent: dict[tuple[int, int], int] = {}
        self._round_received: dict[tuple[int, int], int] = {}

    def add(self, worker_id: int, round: int, *, sent: int = 0, received: int = 0) -> None:
        if sent < 0 or received < 0:
            raise ValidationError(f"byte deltas must be >= 0, got {sent}, {received}")
        self._sent[worker_id] = self._sent.get(worker_id, 0) + sent
        self._received[worker_id] = self._received.get(worker_id, 0) + received
        key = (worker_id, round)
        self._round_sent[key] = self._round_sent.get(key, 0) + sent
        self._round_received[key] = self._round_received.get(key, 0) + received

    def workers(self) -> list[int]:
        return sorted(set(self._sent) | set(self._received))

    def sent(self, worker_id: int) -> int:
        return self._sent.get(worker_id, 0)

    def received(self, worker_id: int) -> int:
        return self._received.get(worker_id, 0)

    def total(self, worker_id: int) -> int:
        return self.sent(worker_id) + self.received(worker_id)

    def round_sent(self, worker_id: int, round: int) -> int:
        return self._round_sent.get((worker_id, round), 0)

    def round_received(self, worker_id: int, round: int) -> int:
        return self._round_received.get((worker_id, round), 0)

    def round_total(self, worker_id: int, round: int) -> int:
        return self.round_sent(worker_id, round) + self.round_received(worker_id, round)


# ---------------------------------------------------------------------------
# Link model and simulated network
# ---------------------------------------------------------------------------

COMPUTE_SOURCES = ("modeled", "measured")


@dataclass
class LinkModel:
    """Latency/bandwidth/jitter parameters plus per-worker compute scaling.

    Defaults approximate a 300 Mbit/s local link and an edge-class device
    that spends 375 ms of compute per training batch.
    """

    base_latency_ms: float = 5.0
    bandwidth_bytes_per_ms: float = 37_500.0
    jitter: float = 0.0
    compute_multipliers: dict = field(default_factory=dict)
    compute_jitter: float = 0.0
    compute_source: str = "modeled"
    compute_ms_per_batch: float = 375.0

    def __post_init__(self) -> None:
        if self.bandwidth_bytes_per_ms <= 0:
            raise ValidationError(
                f"bandwidth must be > 0, got {self.bandwidth_bytes_per_ms}"
            )
        if self.base_latency_ms < 0:
            raise ValidationError(f"base latency must be >= 0, got {self.base_latency_ms}")
        for name, j in (("jitter", self.jitter), ("compute_jitter", self.compute_jitter)):
            if not 0 <= j < 1:
                raise ValidationError(f"{name} must be in [0, 1), got {j}")
        for wid, mult in self.compute_multipliers.items():
            if mult <= 0:
                raise ValidationError(
                    f"compute multiplier for worker {wid} must be > 0, got {mult}"
                )
        if self.compute_source not in COMPUTE_SOURCES:
            raise ValidationError(
                f"compute source must be one of {COMPUTE_SOURCES}, "
                f"got {self.compute_source!r}"
            )
        if self.compute_ms_per_batch <= 0:
            raise ValidationError(
                f"compute_ms_per_batch must be > 0, got {self.compute_ms_per_batch}"
            )

    def multiplier(self, worker_id: int) -> float:
        return float(self.compute_multipliers.get(worker_id, 1.0))


def transfer_ms(nbytes: int, link: LinkModel, rng=None) -> float:
    """base latency + size/bandwidth, scaled by (1 +- seeded jitter)."""
    if nbytes < 0:
        raise ValidationError(f"byte count must be >= 0, got {nbytes}")
    duration = link.base_latency_ms + nbytes / link.bandwidth_bytes_per_ms
    if link.jitter > 0 and rng is not None:
        duration *= 1.0 + rng.uniform(-link.jitter, link.jitter)
    return duration


def sim_compute_time(worker_id: int, measured_host_ms: float, link: LinkModel, rng=None) -> float:
    """Scale a measured host compute time by the worker's multiplier and
    jitter, yielding heterogeneous virtual compute times."""
    if measured_host_ms < 0:
        raise ValidationError(f"measured time must be >= 0, got {measured_host_ms}")
    mult = link.multiplier(worker_id)
    if mult <= 0:
        raise ValidationError(
            f"compute multiplier for worker {worker_id} must be > 0, got {mult}"
        )
    duration = measured_host_ms * mult
    if link.compute_jitter > 0 and rng is not None:
        duration *= 1.0 + rng.uniform(-link.compute_jitter, link.compute_jitter)
    return duration


class VirtualClock:
    def __init__(self):
        self.now = 0.0

    def advance_to(self, t: float) -> None:
        if t < self.now:
            raise ValidationError(f"virtual clock cannot move backwards: {t} < {self.now}")
        self.now = t


@dataclass(frozen=True)
class SimEvent:
    time_ms: float
    kind: str
    worker_id: int
    round: int
    nbytes: int = 0


@dataclass
class SimDelivery:
    arrival_ms: float
    nbytes: int
    message: object


def sim_send(msg, frm, to, link: LinkModel, clock: VirtualClock, meter=None, rng=None, round: int = 0) -> SimDelivery:
    """Model one message transfer: the delivery lands at
    now + base latency + bytes/bandwidth, jitter-scaled; the meter is
    incremented by the exact encoded length."""
    payload = encode(msg)
    arrival = clock.now + transfer_ms(len(payload), link, rng)
    if meter is not None:
        if isinstance(frm, int):
            meter.add(frm, round, sent=len(payload))
        elif isinstance(to, int):
            meter.add(to, round, received=len(payload))
    return SimDelivery(arrival, len(payload), msg)


_TRANSFER_STREAM = 101
_COMPUTE_STREAM = 102


class SimTransport:
    """Deterministic single-process transport with a virtual clock.

    One round is expanded into per-worker Receive / Compute / Send / Idle
    phases; the clock advances to the barrier (the latest update arrival)
    and never waits on host time. With a fixed seed the event trace and
    phase records are bit-reproducible.
    """

    is_simulated = True

    def __init__(self, link: LinkModel | None = None, seed: int = 0, meter: TrafficMeter | None = None):
        self.link = link if link is not None else LinkModel()
        self.meter = meter if meter is not None else TrafficMeter()
        self.clock = VirtualClock()
        self.trace: list[SimEvent] = []
        self.phase_records: list[PhaseRecord] = []
        self._transfer_rng = np.random.default_rng((seed, _TRANSFER_STREAM))
        self._compute_rng = np.random.default_rng((seed, _COMPUTE_STREAM))

    def virtual_now(self) -> float:
        return self.clock.now

    def _compute_ms(self, worker_id: int, host_ms: float, e: int) -> float:
        if self.link.compute_source == "modeled":
            duration = e * self.link.compute_ms_per_batch * self.link.multiplier(worker_id)
            if self.link.compute_jitter > 0:
                duration *= 1.0 + self._compute_rng.uniform(
                    -self.link.compute_jitter, self.link.compute_jitter
                )
            return duration
        return sim_compute_time(worker_id, host_ms, self.link, self._compute_rng)

    def execute_round(self, rnd: int, weights: ParameterSet, workers, cfg) -> list:
        workers = sorted(workers, key=lambda w: w.worker_id)
        if len(workers) != cfg.k:
            raise ProtocolError(
                f"round {rnd}: {len(workers)} workers present, config requires {cfg.k}"
            )
        t0 = self.clock.now
        self.trace.append(SimEvent(t0, "broadcast_depart", -1, rnd))
        broadcast_bytes = len(encode(GlobalModelMsg(rnd, weights)))

        arrivals = {}
        for w in workers:
            dt = transfer_ms(broadcast_bytes, self.link, self._transfer_rng)
            arrivals[w.worker_id] = t0 + dt
            self.meter.add(w.worker_id, rnd, received=broadcast_bytes)
            self.trace.append(
                SimEvent(t0 + dt, "broadcast_arrive", w.worker_id, rnd, broadcast_bytes)
            )

        updates = []
        server_arrival = {}
        compute_v = {}
        compute_host = {}
        send_v = {}
        for w in workers:
            wid = w.worker_id
            host_t0 = time.perf_counter()
            update = w.run_local(rnd, weights)
            compute_host[wid] = (time.perf_counter() - host_t0) * 1e3
            compute_v[wid] = self._compute_ms(wid, compute_host[wid], cfg.e)
            done = arrivals[wid] + compute_v[wid]
            self.trace.append(SimEvent(done, "compute_done", wid, rnd))
            update.compute_ms = int(round(compute_v[wid]))
            update.recv_ms = int(round(arrivals[wid] - t0))
            update_bytes = len(encode(update))
            send_v[wid] = transfer_ms(update_bytes, self.link, self._transfer_rng)
            update.send_ms = int(round(send_v[wid]))
            self.meter.add(wid, rnd, sent=update_bytes)
            server_arrival[wid] = done + send_v[wid]
            self.trace.append(
                SimEvent(server_arrival[wid], "update_arrive", wid, rnd, update_bytes)
            )
            updates.append(update)

        barrier = max(server_arrival.values())
        for w in workers:
            wid = w.worker_id
            self.phase_records.extend(
                [
                    PhaseRecord(wid, rnd, "Receive", arrivals[wid] - t0, 0.0),
                    PhaseRecord(wid, rnd, "Compute", compute_v[wid], compute_host[wid]),
                    PhaseRecord(wid, rnd, "Send", send_v[wid], 0.0),
                    PhaseRecord(wid, rnd, "Idle", barrier - server_arrival[wid], 0.0),
                ]
            )
        self.clock.advance_to(barrier)
        self.trace.append(SimEvent(barrier, "aggregate", -1, rnd))
        return updates

    def record_eval(self, rnd: int, host_ms: float) -> None:
        self.phase_records.append(PhaseRecord(-1, rnd, "Eval", 0.0, host_ms))

    def shutdown(self, rnd: int = 0) -> None:
        pass


# ---------------------------------------------------------------------------
# TCP transport
# ---------------------------------------------------------------------------


def send_frame(sock: socket.socket, payload: bytes) -> None:
    if len(payload) > MAX_FRAME_LEN:
        raise ValidationError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME_LEN}")
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def _recv_exact(sock: socket.socket, n: int, what: str) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError(f"connection closed while reading {what}")
        buf.extend(chunk)
    return bytes(buf)


def recv_frame(sock: socket.socket) -> bytes:
    header = _recv_exact(sock, FRAME_PREFIX_LEN, "frame length")
    (length,) = struct.unpack("<I", header)
    if length == 0 or length > MAX_FRAME_LEN:
        raise FormatError(f"invalid frame length {length}", offset=0)
    return _recv_exact(sock, length, "frame payload")


class TcpServerTransport:
    """Server half of the real transport: registration, per-round
    broadcast and barrier, and shutdown over length-prefixed frames.

    The registration hello is a Control message whose round field carries
    the worker id; the server acks by echoing it. An id that is out of
    range or already taken gets its connection closed without an ack.
    On shutdown every worker receives a Control message.
    """

    is_simulated = False

    def __init__(
        self,
        host: str,
        port: int,
        k: int,
        meter: TrafficMeter | None = None,
        accept_timeout_s: float = 60.0,
        io_timeout_s: float = 600.0,
    ):
        if k < 1:
            raise ValidationError(f"worker count must be >= 1, got {k}")
        self.k = k
        self.meter = meter if meter is not None else TrafficMeter()
        self.phase_records: list[PhaseRecord] = []
        self._io_timeout_s = io_timeout_s
        self._conns: dict[int, socket.socket] = {}
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(k + 2)
        self._listener.settimeout(accept_timeout_s)
        self.host, self.port = self._listener.getsockname()[:2]

    def virtual_now(self) -> float:
        return 0.0

    def wait_for_workers(self) -> None:
        while len(self._conns) < self.k:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                missing = sorted(set(range(self.k)) - set(self._conns))
                raise ProtocolError(
                    f"timed out waiting for workers {missing} to register"
                )
            conn.settimeout(self._io_timeout_s)
            try:
                hello = decode(recv_frame(conn))
            except (ConnectionError, FormatError, OSError):
                conn.close()
                continue
            if not isinstance(hello, ControlMsg):
                conn.close()
                continue
            wid = hello.round
            if wid >= self.k or wid in self._conns:
                conn.close()
                continue
            self._conns[wid] = conn
            send_frame(conn, encode(ControlMsg(wid)))

    def execute_round(self, rnd: int, weights: ParameterSet, workers, cfg) -> list:
        if len(self._conns) != cfg.k:
            raise ProtocolError(
                f"round {rnd}: {len(self._conns)} workers registered, "
                f"config requires {cfg.k}"
            )
        payload = encode(GlobalModelMsg(rnd, weights))
        for wid in sorted(self._conns):
            try:
                send_frame(self._conns[wid], payload)
            except OSError as exc:
                raise ProtocolError(f"broadcast for round {rnd} failed: {exc}", worker_id=wid)
            self.meter.add(wid, rnd, received=len(payload))
        updates = []
        for wid in sorted(self._conns):
            try:
                data = recv_frame(self._conns[wid])
            except (ConnectionError, socket.timeout, OSError) as exc:
                raise ProtocolError(f"no update for round {rnd}: {exc}", worker_id=wid)
            msg = decode(data)
            if not isinstance(msg, LocalUpdateMsg):
                raise ProtocolError(
                    f"expected a LocalUpdate for round {rnd}, got {type(msg).__name__}",
                    worker_id=wid,
                )
            if msg.round != rnd:
                raise ProtocolError(
                    f"update for round {msg.round} received during round {rnd}",
                    worker_id=wid,
                )
            self.meter.add(wid, rnd, sent=len(data))
            updates.append(msg)
        return updates

    def record_eval(self, rnd: int, host_ms: float) -> None:
        self.phase_records.append(PhaseRecord(-1, rnd, "Eval", 0.0, host_ms))

    def shutdown(self, rnd: int = 0) -> None:
        for conn in self._conns.values():
            try:
                send_frame(conn, encode(ControlMsg(rnd)))
            except OSError:
                pass
            conn.close()
        self._conns.clear()
        self._listener.close()

    def close(self) -> None:
        for conn in self._conns.values():
            conn.close()
        self._conns.clear()
        self._listener.close()


class TcpWorkerClient:
    """Worker half of the real transport: bounded-retry connect,
    registration, and the per-round serve loop."""

    def __init__(
        self,
        host: str,
        port: int,
        worker_id: int,
        connect_attempts: int = 5,
        retry_delay_s: float = 2.0,
        io_timeout_s: float = 600.0,
    ):
        if worker_id < 0:
            raise ValidationError(f"worker id must be >= 0, got {worker_id}")
        self.host = host
        self.port = port
        self.worker_id = worker_id
        self.connect_attempts = connect_attempts
        self.retry_delay_s = retry_delay_s
        self._io_timeout_s = io_timeout_s
        self._sock: socket.socket | None = None

    def connect(self) -> None:
        last: Exception | None = None
        for attempt in range(self.connect_attempts):
            if attempt:
                time.sleep(self.retry_delay_s)
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=10.0)
                self._sock.settimeout(self._io_timeout_s)
                return
            except OSError as exc:
                last = exc
        raise ConnectionError(
            f"worker {self.worker_id}: could not connect to {self.host}:{self.port} "
            f"after {self.connect_attempts} attempts: {last}"
        )

    def register(self) -> None:
        assert self._sock is not None
        send_frame(self._sock, encode(ControlMsg(self.worker_id)))
        try:
            ack = decode(recv_frame(self._sock))
        except ConnectionError:
            raise ConnectionError(
                f"worker {self.worker_id}: registration rejected by server"
            )
        if not isinstance(ack, ControlMsg) or ack.round != self.worker_id:
            raise ProtocolError("bad registration ack", worker_id=self.worker_id)

    def serve(self, worker) -> int:
        """Participate in rounds until the server's Control shutdown.

        Returns the number of rounds completed. Timing fields: compute and
        receive are measured this round; the send figure is the previous
        round's measured socket write (there is nothing to report before
        the first send).
        """
        assert self._sock is not None
        rounds = 0
        prev_send_ms = 0
        while True:
            t0 = time.perf_counter()
            msg = decode(recv_frame(self._sock))
            recv_ms = (time.perf_counter() - t0) * 1e3
            if isinstance(msg, ControlMsg):
                return rounds
            if not isinstance(msg, GlobalModelMsg):
                raise ProtocolError(
                    f"expected a broadcast, got {type(msg).__name__}",
                    worker_id=self.worker_id,
                )
            t1 = time.perf_counter()
            update = worker.run_local(msg.round, msg.weights)
            update.compute_ms = int(round((time.perf_counter() - t1) * 1e3))
            update.recv_ms = int(round(recv_ms))
            update.send_ms = prev_send_ms
            payload = encode(update)
            t2 = time.perf_counter()
            send_frame(self._sock, payload)
            prev_send_ms = int(round((time.perf_counter() - t2) * 1e3))
            rounds += 1

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None
