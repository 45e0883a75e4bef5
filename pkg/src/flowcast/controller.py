"""TCP controller speaking the OpenFlow 1.4 subset: predicts a size class
on PACKET_IN, installs the flow with that importance, and learns from the
true counters on FLOW_REMOVED.  Includes the trace-driven mock switch that
exercises it end to end over a socket.

All controller state is mutated under one lock, so per-connection reader
threads funnel into a single serialized command stream.  Nothing reads a
wall clock: cookies and xids are counters and the mock switch drives a
simulated clock from trace timestamps, which makes loopback runs
transcript-deterministic for a fixed trace, seed, and config.
"""

import hashlib
import heapq
import json
import logging
import socket
import socketserver
import struct
import threading
import zlib
from dataclasses import dataclass

import numpy as np

from . import ofwire
from .encoding import DEFAULT_BINS, featurize, label, one_hot, validate_bins
from .flowtable import FlowEntry, FlowTable
from .records import FirstPacket
from .ofwire import (
    CodecError,
    BadVersion,
    EchoReply,
    EchoRequest,
    ErrorMsg,
    FlowMod,
    FlowRemoved,
    Hello,
    MatchFields,
    PacketIn,
    decode_header,
    decode_message,
    encode_message,
    exact_match,
    parse_frame,
)

log = logging.getLogger("flowcast.controller")


@dataclass
class ControllerConfig:
    host: str = "127.0.0.1"
    port: int = ofwire.OFP_DEFAULT_PORT
    idle_timeout: int = 10  # seconds, installed into every FLOW_MOD
    hard_timeout: int = 30
    bins: tuple = DEFAULT_BINS
    train_trigger: int = 256  # flush the training queue every N removals
    priority: int = 10000
    n_ports: int = 2
    seed: int = 0
    model_path: str = None

    def __post_init__(self):
        self.bins = validate_bins(self.bins)
        if self.train_trigger < 1:
            raise ValueError("train_trigger must be >= 1")
        for name in ("idle_timeout", "hard_timeout", "priority"):
            v = getattr(self, name)
            if not 0 <= v <= 0xFFFF:
                raise ValueError(f"{name} out of u16 range: {v}")
        if self.n_ports < 1:
            raise ValueError("n_ports must be >= 1")


@dataclass
class PendingFlow:
    """An installed prediction awaiting its FLOW_REMOVED ground truth."""

    cookie: int
    pkt: FirstPacket
    features: np.ndarray
    predicted: int
    installed_seq: int


class Controller:
    """Protocol logic, independent of the transport.

    handle_bytes/handle_message return the replies to send; serve_forever
    wiring lives in make_server()/serve().
    """

    def __init__(self, cfg: ControllerConfig, net):
        self.cfg = cfg
        self.net = net
        self.pending = {}
        self.queue = []  # (features, one-hot target) awaiting a training flush
        self.last_loss = None
        self.stats = {
            "packet_in": 0,
            "flow_mod": 0,
            "flow_removed_known": 0,
            "flow_removed_unknown": 0,
            "training_samples": 0,
            "samples_trained": 0,
            "train_flushes": 0,
            "echo": 0,
            "errors_sent": 0,
            "frames_skipped": 0,
        }
        self._lock = threading.Lock()
        self._rng = np.random.default_rng(cfg.seed)
        self._next_cookie = 1
        self._next_xid = 1

    def on_connect(self):
        """Wire bytes to send when a switch connects (our HELLO)."""
        return [encode_message(Hello(xid=0))]

    def handle_bytes(self, raw: bytes):
        """Decode one framed message and return encoded replies."""
        try:
            msg = decode_message(raw)
        except BadVersion:
            return [self._error(ofwire.OFPBRC_BAD_VERSION, raw)]
        except CodecError as exc:
            log.warning("undecodable message: %s", exc)
            return [self._error(ofwire.OFPBRC_BAD_TYPE, raw)]
        return [encode_message(m) for m in self.handle_message(msg)]

    def handle_message(self, msg):
        """Dispatch one decoded message; returns reply messages."""
        with self._lock:
            if isinstance(msg, Hello):
                return []
            if isinstance(msg, EchoRequest):
                self.stats["echo"] += 1
                return [EchoReply(xid=msg.xid, payload=msg.payload)]
            if isinstance(msg, (EchoReply, ErrorMsg)):
                return []
            if isinstance(msg, PacketIn):
                return self._on_packet_in(msg)
            if isinstance(msg, FlowRemoved):
                return self._on_flow_removed(msg)
            # a switch must not send controller-to-switch messages
            self.stats["errors_sent"] += 1
            return [ErrorMsg(xid=msg.xid, err_type=ofwire.OFPET_BAD_REQUEST,
                             code=ofwire.OFPBRC_BAD_TYPE)]

    def _error(self, code, raw):
        with self._lock:
            self.stats["errors_sent"] += 1
        return encode_message(ErrorMsg(xid=0, err_type=ofwire.OFPET_BAD_REQUEST,
                                       code=code, data=raw[:64]))

    def _on_packet_in(self, msg: PacketIn):
        self.stats["packet_in"] += 1
        try:
            pkt = parse_frame(msg.frame)
        except CodecError as exc:
            self.stats["frames_skipped"] += 1
            log.warning("skipping unparseable frame: %s", exc)
            return []
        features = featurize(pkt)
        predicted = int(np.argmax(self.net.forward_batch(features[None, :]))) + 1
        cookie = self._next_cookie
        self._next_cookie += 1
        flow_mod = FlowMod(
            xid=self._take_xid(),
            cookie=cookie,
            table_id=0,
            idle_timeout=self.cfg.idle_timeout,
            hard_timeout=self.cfg.hard_timeout,
            priority=self.cfg.priority,
            flags=ofwire.OFPFF_SEND_FLOW_REM,
            importance=predicted,
            match=exact_match(pkt),
            output_port=self.output_port_for(pkt),
        )
        self.pending[cookie] = PendingFlow(cookie=cookie, pkt=pkt,
                                           features=features, predicted=predicted,
                                           installed_seq=self.stats["packet_in"])
        self.stats["flow_mod"] += 1
        self._log_event("packet_in", cookie=cookie, predicted=predicted,
                        dst_port=pkt.dst_port, proto=pkt.proto)
        self._log_event("flow_mod", cookie=cookie, importance=predicted,
                        output_port=flow_mod.output_port)
        return [flow_mod]

    def _on_flow_removed(self, msg: FlowRemoved):
        flow = self.pending.pop(msg.cookie, None)
        if flow is None:
            self.stats["flow_removed_unknown"] += 1
            self._log_event("flow_removed", cookie=msg.cookie, known=False)
            return []
        # a count of 0 still means the first packet existed
        true_class = label(max(1, msg.packet_count), self.cfg.bins)
        self.queue.append((flow.features, one_hot(true_class)))
        self.stats["flow_removed_known"] += 1
        self.stats["training_samples"] += 1
        self._log_event("flow_removed", cookie=msg.cookie, known=True,
                        packet_count=msg.packet_count, true_class=true_class,
                        predicted=flow.predicted, reason=msg.reason)
        if self.stats["flow_removed_known"] % self.cfg.train_trigger == 0:
            self._flush_training()
        return []

    def _flush_training(self):
        if not self.queue:
            return
        self.last_loss = self.net.train_epoch(self.queue, self._rng)
        self.stats["samples_trained"] += len(self.queue)
        self.stats["train_flushes"] += 1
        self._log_event("train_flush", samples=len(self.queue), loss=self.last_loss)
        self.queue.clear()

    def flush_training(self):
        """Train on whatever is queued (e.g. at shutdown)."""
        with self._lock:
            self._flush_training()

    def output_port_for(self, pkt: FirstPacket) -> int:
        """Static 5-tuple -> port map; routing is not the object here."""
        key = struct.pack("!IIHHB", *pkt.five_tuple())
        return zlib.crc32(key) % self.cfg.n_ports + 1

    def save_model(self, path=None):
        path = path or self.cfg.model_path
        if path:
            with self._lock:
                self.net.save(path)

    def _take_xid(self):
        xid = self._next_xid
        self._next_xid = (self._next_xid + 1) & 0xFFFFFFFF
        return xid

    def _log_event(self, event, **fields):
        if log.isEnabledFor(logging.INFO):
            log.info(json.dumps({"event": event, **fields}, sort_keys=True))


# --- socket plumbing ----------------------------------------------------


def recv_message(sock) -> bytes:
    """One length-framed message off a socket, or None at clean EOF."""
    header = _recv_exact(sock, ofwire.OFP_HEADER_LEN)
    if header is None:
        return None
    _, _, length, _ = decode_header(header)
    if length < ofwire.OFP_HEADER_LEN:
        raise CodecError(f"unframeable message length {length}")
    body = _recv_exact(sock, length - ofwire.OFP_HEADER_LEN)
    if body is None and length > ofwire.OFP_HEADER_LEN:
        raise CodecError("connection closed mid-message")
    return header + (body or b"")


def _recv_exact(sock, n):
    if n == 0:
        return b""
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise CodecError("connection closed mid-message")
            return None
        buf += chunk
    return buf


class _SwitchHandler(socketserver.BaseRequestHandler):
    def handle(self):
        controller = self.server.controller
        try:
            for out in controller.on_connect():
                self.request.sendall(out)
            while True:
                raw = recv_message(self.request)
                if raw is None:
                    return
                for out in controller.handle_bytes(raw):
                    self.request.sendall(out)
        except (CodecError, ConnectionError, OSError) as exc:
            log.warning("connection ended: %s", exc)


class ControllerServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, controller: Controller):
        self.controller = controller
        super().__init__((controller.cfg.host, controller.cfg.port), _SwitchHandler)

    @property
    def bound_port(self):
        return self.server_address[1]


def make_server(cfg: ControllerConfig, net) -> ControllerServer:
    return ControllerServer(Controller(cfg, net))


def serve(cfg: ControllerConfig, net):
    """Run the controller until interrupted; saves the model on exit if
    cfg.model_path is set."""
    server = make_server(cfg, net)
    log.info("listening on %s:%d", cfg.host, server.bound_port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.controller.flush_training()
        server.controller.save_model()
        server.server_close()


# --- trace-driven mock switch -------------------------------------------


@dataclass
class MockSwitchReport:
    packet_in_sent: int
    flow_mod_received: int
    flow_removed_sent: int
    evictions: int
    aborted: bool
    transcript: list  # ("tx" | "rx", bytes) from the switch's perspective

    @property
    def transcript_sha256(self):
        digest = hashlib.sha256()
        for direction, payload in self.transcript:
            digest.update(direction.encode())
            digest.update(len(payload).to_bytes(4, "big"))
            digest.update(payload)
        return digest.hexdigest()


class MockSwitch:
    """Replays a trace against a controller in lockstep.

    Per record: advance the simulated clock to the arrival timestamp, emit
    FLOW_REMOVED for every installed flow whose duration has elapsed, send
    the first packet as PACKET_IN, and install the returned FLOW_MOD into a
    local flow table.  Capacity evictions also emit FLOW_REMOVED.  Counters
    reported on removal are the trace's ground truth.
    """

    def __init__(self, trace, capacity=100_000, n_ports=2):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.trace = trace
        self.capacity = capacity
        self.n_ports = n_ports

    def run(self, host, port, timeout=30.0) -> MockSwitchReport:
        transcript = []
        counts = {"packet_in": 0, "flow_mod": 0, "flow_removed": 0, "evictions": 0}
        table = FlowTable(self.capacity)
        expiries = []  # (expire_us, seq, cookie)
        flows = {}  # live cookie -> (record, flow_mod)
        self._xid = 1
        aborted = False
        sock = socket.create_connection((host, port), timeout=timeout)
        try:
            self._send(sock, transcript, Hello(xid=0))
            hello = self._recv(sock, transcript)
            if not isinstance(hello, Hello):
                raise CodecError(f"expected HELLO, got {type(hello).__name__}")
            for seq, record in enumerate(self.trace):
                now = record.first.arrival_us
                self._expire(sock, transcript, table, expiries, flows, counts, now)
                frame = ofwire.build_frame(record.first)
                in_port = seq % self.n_ports + 1
                self._send(sock, transcript, PacketIn(
                    xid=self._take_xid(), total_len=len(frame),
                    reason=ofwire.OFPR_APPLY_ACTION, table_id=0, cookie=0,
                    match=MatchFields(in_port=in_port), frame=frame))
                counts["packet_in"] += 1
                reply = self._recv(sock, transcript)
                if not isinstance(reply, FlowMod):
                    raise CodecError(f"expected FLOW_MOD, got {type(reply).__name__}")
                counts["flow_mod"] += 1
                entry = FlowEntry(match=reply.match, priority=reply.priority,
                                  cookie=reply.cookie, importance=reply.importance,
                                  idle_timeout=reply.idle_timeout * 1_000_000,
                                  hard_timeout=reply.hard_timeout * 1_000_000,
                                  send_flow_rem=bool(reply.flags & ofwire.OFPFF_SEND_FLOW_REM))
                event = table.insert(entry, now=now)
                if event is not None:
                    counts["evictions"] += 1
                    self._emit_removed(sock, transcript, flows, counts, event.entry,
                                       ofwire.OFPRR_EVICTION, now)
                flows[reply.cookie] = (record, reply)
                heapq.heappush(expiries, (now + record.duration_ms * 1000, seq, reply.cookie))
            self._expire(sock, transcript, table, expiries, flows, counts, None)
        except (CodecError, ConnectionError, OSError, socket.timeout) as exc:
            log.warning("mock switch aborted: %s", exc)
            aborted = True
        finally:
            sock.close()
        return MockSwitchReport(packet_in_sent=counts["packet_in"],
                                flow_mod_received=counts["flow_mod"],
                                flow_removed_sent=counts["flow_removed"],
                                evictions=counts["evictions"],
                                aborted=aborted, transcript=transcript)

    def _expire(self, sock, transcript, table, expiries, flows, counts, now):
        """Remove flows whose duration elapsed by `now` (all, when None)."""
        while expiries and (now is None or expiries[0][0] <= now):
            expire_at, _, cookie = heapq.heappop(expiries)
            if cookie not in flows:
                continue  # already evicted
            entry = table.delete(cookie, now=expire_at).entry
            self._emit_removed(sock, transcript, flows, counts, entry,
                               ofwire.OFPRR_IDLE_TIMEOUT, expire_at)

    def _emit_removed(self, sock, transcript, flows, counts, entry, reason, now):
        record, flow_mod = flows.pop(entry.cookie)
        elapsed = max(0, int(now - entry.installed_at))
        self._send(sock, transcript, FlowRemoved(
            xid=self._take_xid(), cookie=entry.cookie, priority=flow_mod.priority,
            reason=reason, table_id=0, duration_s=elapsed // 1_000_000,
            duration_ns=(elapsed % 1_000_000) * 1000,
            idle_timeout=flow_mod.idle_timeout, hard_timeout=flow_mod.hard_timeout,
            packet_count=record.packet_count, byte_count=record.byte_count,
            match=flow_mod.match))
        counts["flow_removed"] += 1

    def _send(self, sock, transcript, msg):
        wire = encode_message(msg)
        transcript.append(("tx", wire))
        sock.sendall(wire)

    def _recv(self, sock, transcript):
        raw = recv_message(sock)
        if raw is None:
            raise CodecError("controller closed the connection")
        transcript.append(("rx", raw))
        return decode_message(raw)

    def _take_xid(self):
        xid = self._xid
        self._xid = (self._xid + 1) & 0xFFFFFFFF
        return xid
