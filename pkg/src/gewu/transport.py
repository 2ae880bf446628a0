"""Session establishment and the two data paths of a live session.

An :class:`Endpoint` owns one session end.  Establishment walks a fixed
phase graph (join, descriptor exchange, candidate gathering, probing) over
the relay's signaling lane; direct candidate pairs are probed until a
configurable deadline, after which all traffic falls back to the relay.

Two paths exist once connected: the control lane is reliable and ordered on
every backend (per-message acks and resends live here, below the envelope
layer), while the media lane is lossy, unordered, and never retransmitted.
Envelopes sent before the control channel opens are buffered and flushed
atomically on open.
"""

from __future__ import annotations

import enum
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple

from . import framing
from .clock import VirtualClock, wall_time_ms
from .envelope import (
    DEFAULT_REGISTRY,
    CommandClass,
    Envelope,
    IdFactory,
    MalformedMessage,
    TypeRegistry,
    UnsupportedVersion,
    decode,
    encode,
)
from .netsim import LANE_CONTROL, LANE_MEDIA, LANE_SIGNALING

log = logging.getLogger(__name__)


class TransportError(Exception):
    pass


class SignalingUnreachable(TransportError):
    pass


class EstablishTimeout(TransportError):
    pass


class SessionClosed(TransportError):
    pass


class BufferOverflow(TransportError):
    pass


class InvalidFrame(TransportError):
    pass


class Phase(enum.Enum):
    IDLE = "idle"
    JOINING = "joining"
    EXCHANGING_DESCRIPTORS = "exchanging_descriptors"
    GATHERING_CANDIDATES = "gathering_candidates"
    CONNECTING = "connecting"
    CONNECTED_DIRECT = "connected_direct"
    CONNECTED_RELAYED = "connected_relayed"
    FAILED = "failed"
    CLOSED = "closed"


CONNECTED_PHASES = (Phase.CONNECTED_DIRECT, Phase.CONNECTED_RELAYED)
TERMINAL_PHASES = (Phase.FAILED, Phase.CLOSED)

#: Legal transitions form a DAG; nothing may skip descriptor exchange.
LEGAL_TRANSITIONS: dict[Phase, set[Phase]] = {
    Phase.IDLE: {Phase.JOINING, Phase.FAILED, Phase.CLOSED},
    Phase.JOINING: {Phase.EXCHANGING_DESCRIPTORS, Phase.FAILED, Phase.CLOSED},
    Phase.EXCHANGING_DESCRIPTORS: {Phase.GATHERING_CANDIDATES, Phase.FAILED,
                                   Phase.CLOSED},
    Phase.GATHERING_CANDIDATES: {Phase.CONNECTING, Phase.FAILED, Phase.CLOSED},
    Phase.CONNECTING: {Phase.CONNECTED_DIRECT, Phase.CONNECTED_RELAYED,
                       Phase.FAILED, Phase.CLOSED},
    Phase.CONNECTED_DIRECT: {Phase.CLOSED, Phase.FAILED},
    Phase.CONNECTED_RELAYED: {Phase.CLOSED, Phase.FAILED},
    Phase.FAILED: set(),
    Phase.CLOSED: set(),
}

ROLE_INITIATOR = "initiator"
ROLE_RESPONDER = "responder"

PRIORITY_DIRECT = 200
PRIORITY_RELAY = 100


@dataclass(frozen=True)
class Candidate:
    address: str
    priority: int


@dataclass
class SessionState:
    session_id: str
    peer: str  # endpoint role
    phase: Phase = Phase.IDLE
    candidates_local: list[Candidate] = field(default_factory=list)
    candidates_remote: list[Candidate] = field(default_factory=list)


class SendResult(enum.Enum):
    ACCEPTED = "accepted"
    BUFFERED = "buffered"


class PollResult(NamedTuple):
    envelopes: list[Envelope]
    dropped: int


DEFAULT_BUFFER_CAPACITY = 256


class OutboundBuffer:
    """Holds envelopes sent before channel-open, preserving send order.

    On overflow, stale snapshots are compacted first (only the newest per
    type survives); if the buffer is still full the offending send is
    rejected so established state intents are never silently lost.
    """

    def __init__(self, capacity: int = DEFAULT_BUFFER_CAPACITY,
                 registry: TypeRegistry | None = None):
        self.capacity = capacity
        self._registry = registry or DEFAULT_REGISTRY
        self.pending: list[Envelope] = []

    def __len__(self) -> int:
        return len(self.pending)

    def append(self, env: Envelope) -> None:
        self.pending.append(env)
        if len(self.pending) > self.capacity:
            self._compact()
        if len(self.pending) > self.capacity:
            self.pending.pop()
            raise BufferOverflow(
                f"outbound buffer full ({self.capacity}) and nothing compactable")

    def _compact(self) -> None:
        seen_snapshots: set[str] = set()
        kept: list[Envelope] = []
        for env in reversed(self.pending):
            cls = self._registry.classify_or_default(env.type)
            if cls is CommandClass.SNAPSHOT:
                if env.type in seen_snapshots:
                    continue
                seen_snapshots.add(env.type)
            kept.append(env)
        kept.reverse()
        self.pending = kept

    def drain(self) -> list[Envelope]:
        out, self.pending = self.pending, []
        return out


class InboundQueue:
    """Arrival-ordered envelope queue with a single registered consumer.

    Producers (transport callbacks) only enqueue.  With coalescing enabled,
    a poll drops every snapshot that a newer same-type snapshot supersedes
    and reports the drop count.
    """

    def __init__(self, coalesce_snapshots: bool = True,
                 registry: TypeRegistry | None = None):
        self.coalesce_snapshots = coalesce_snapshots
        self._registry = registry or DEFAULT_REGISTRY
        self._items: deque[tuple[int, Envelope]] = deque()
        self._lock = threading.Lock()
        self._arrivals = 0
        self._consumer: int | None = None
        self.dropped_total = 0

    def enqueue(self, env: Envelope) -> None:
        with self._lock:
            self._items.append((self._arrivals, env))
            self._arrivals += 1

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)

    def poll(self, max_n: int) -> PollResult:
        ident = threading.get_ident()
        if self._consumer is None:
            self._consumer = ident
        elif self._consumer != ident:
            raise RuntimeError("InboundQueue has a single registered consumer")
        with self._lock:
            dropped = 0
            if self.coalesce_snapshots and self._items:
                newest: dict[str, int] = {}
                for idx, env in self._items:
                    if self._registry.classify_or_default(env.type) \
                            is CommandClass.SNAPSHOT:
                        newest[env.type] = idx
                kept: deque[tuple[int, Envelope]] = deque()
                for idx, env in self._items:
                    if self._registry.classify_or_default(env.type) \
                            is CommandClass.SNAPSHOT and newest[env.type] != idx:
                        dropped += 1
                        continue
                    kept.append((idx, env))
                self._items = kept
            out = []
            while self._items and len(out) < max_n:
                out.append(self._items.popleft()[1])
            self.dropped_total += dropped
            return PollResult(out, dropped)


# -- control-lane reliability -------------------------------------------------

CTRL_DATA = 0
CTRL_ACK = 1
CTRL_PROBE = 2
CTRL_PROBE_ACK = 3


def pack_ctrl(kind: int, seq: int, payload: bytes = b"") -> bytes:
    return bytes([kind]) + seq.to_bytes(4, "big") + payload


def unpack_ctrl(data: bytes) -> tuple[int, int, bytes]:
    if len(data) < 5:
        raise framing.FramingError("control message too short")
    return data[0], int.from_bytes(data[1:5], "big"), data[5:]


class ReliableChannel:
    """In-order at-least-once delivery over a lossy, reordering message path.

    Sender keeps unacked payloads and resends on a timer; receiver acks
    every data message (including duplicates) and releases payloads in
    sequence via a hold-back buffer.
    """

    def __init__(self, clock, send_raw: Callable[[bytes], None],
                 deliver: Callable[[bytes], None], rto_ms: float = 50.0):
        self._clock = clock
        self._send_raw = send_raw
        self._deliver = deliver
        self._rto = rto_ms
        self._next_seq = 1
        self._unacked: dict[int, bytes] = {}
        self._timer: int | None = None
        self._expected = 1
        self._holdback: dict[int, bytes] = {}
        self._closed = False
        self.resends = 0

    def send(self, payload: bytes) -> None:
        if self._closed:
            raise SessionClosed("reliable channel closed")
        seq = self._next_seq
        self._next_seq += 1
        self._unacked[seq] = payload
        self._send_raw(pack_ctrl(CTRL_DATA, seq, payload))
        self._arm_timer()

    def on_raw(self, data: bytes) -> None:
        if self._closed:
            return
        kind, seq, payload = unpack_ctrl(data)
        if kind == CTRL_ACK:
            self._unacked.pop(seq, None)
            return
        if kind != CTRL_DATA:
            return
        self._send_raw(pack_ctrl(CTRL_ACK, seq))
        if seq < self._expected or seq in self._holdback:
            return  # duplicate
        self._holdback[seq] = payload
        while self._expected in self._holdback:
            self._deliver(self._holdback.pop(self._expected))
            self._expected += 1

    def _arm_timer(self) -> None:
        if self._timer is None and self._unacked:
            self._timer = self._clock.schedule_in(self._rto, self._on_timer)

    def _on_timer(self) -> None:
        self._timer = None
        if self._closed or not self._unacked:
            return
        for seq in sorted(self._unacked):
            self.resends += 1
            self._send_raw(pack_ctrl(CTRL_DATA, seq, self._unacked[seq]))
        self._arm_timer()

    def close(self) -> None:
        self._closed = True
        if self._timer is not None:
            self._clock.cancel(self._timer)
            self._timer = None


# -- message paths ------------------------------------------------------------

class DirectLink:
    """In-process hole-punched path stand-in: a duplex lossy message pair.

    Honors ``profile.direct_path_blocked`` by dropping everything, which is
    how the harness scripts relay fallback.
    """

    def __init__(self, clock, profile, salt_base: int = 100):
        from .netsim import LinkHarness

        self._profile = profile
        self._harness = {
            ROLE_INITIATOR: LinkHarness(profile, clock, salt=salt_base),
            ROLE_RESPONDER: LinkHarness(profile, clock, salt=salt_base + 1),
        }
        self._receivers: dict[str, Callable[[int, bytes], None]] = {}

    def attach(self, role: str, on_message: Callable[[int, bytes], None]) -> None:
        self._receivers[role] = on_message

    def send(self, from_role: str, lane: int, data: bytes) -> None:
        if self._profile.direct_path_blocked:
            return
        to_role = ROLE_RESPONDER if from_role == ROLE_INITIATOR else ROLE_INITIATOR
        receiver = self._receivers.get(to_role)
        if receiver is None:
            return
        # Adversity applies once per direction, keyed by the sender's harness.
        self._harness[from_role].deliver(lane, data,
                                         lambda d, _r=receiver, _l=lane: _r(_l, d))

    def flush_held(self) -> None:
        for h in self._harness.values():
            h.flush_held()


class EndpointConfig(NamedTuple):
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY
    coalesce_snapshots: bool = True
    rto_ms: float = 50.0
    probe_interval_ms: float = 20.0
    poll_max: int = 64


class Endpoint:
    """One end of a session: establishment FSM plus the two data paths."""

    def __init__(self, session_id: str, role: str, clock,
                 relay_client: Any, direct_link: DirectLink | None = None,
                 source: str | None = None,
                 id_factory: IdFactory | None = None,
                 config: EndpointConfig = EndpointConfig(),
                 ts_fn: Callable[[], int] | None = None):
        self.session_id = session_id
        self.role = role
        self.clock = clock
        self.config = config
        self.state = SessionState(session_id=session_id, peer=role)
        self.ids = id_factory or IdFactory(source or role)
        self._ts = ts_fn or wall_time_ms
        self._relay_client = relay_client
        self._relay_handle = None
        self._direct = direct_link
        if direct_link is not None:
            direct_link.attach(role, self._on_direct_message)
        self._buffer = OutboundBuffer(config.buffer_capacity)
        self.inbound = InboundQueue(config.coalesce_snapshots)
        self._reliable: ReliableChannel | None = None
        self._send_lock = threading.RLock()
        self._listeners: list[Callable[[Phase], None]] = []
        self.on_frame: Callable[[bytes], None] | None = None
        self.on_decode_error: Callable[[Exception], None] | None = None
        self.decode_errors = 0
        # establishment bookkeeping
        self._deadline_handle: int | None = None
        self._probe_handle: int | None = None
        self._peer_present = False
        self._descriptor_sent = False
        self._descriptor_received = False
        self._remote_done = False
        self._local_done = False
        self._probe_sent_at: dict[int, float] = {}
        self._media_lane_open = False

    # -- events ---------------------------------------------------------

    def on_phase(self, listener: Callable[[Phase], None]) -> None:
        self._listeners.append(listener)

    def _transition(self, phase: Phase) -> None:
        legal = LEGAL_TRANSITIONS[self.state.phase]
        if phase not in legal:
            raise TransportError(
                f"illegal phase transition {self.state.phase} -> {phase}")
        self.state.phase = phase
        log.debug("%s/%s phase -> %s", self.session_id, self.role, phase.value)
        for listener in list(self._listeners):
            listener(phase)

    @property
    def phase(self) -> Phase:
        return self.state.phase

    @property
    def connected(self) -> bool:
        return self.state.phase in CONNECTED_PHASES

    # -- establishment ----------------------------------------------------

    def begin_establish(self, deadline_ms: float) -> None:
        """Start the session FSM; progress is observable via ``on_phase``.

        Raises :class:`SignalingUnreachable` if the relay cannot be joined.
        """
        if self.state.phase is not Phase.IDLE:
            raise TransportError("establish may only start from IDLE")
        self._transition(Phase.JOINING)
        try:
            self._relay_handle = self._relay_client.join(
                self.session_id, self.role, self._on_relay_message)
        except SignalingUnreachable:
            self._transition(Phase.FAILED)
            raise
        except Exception as exc:
            self._transition(Phase.FAILED)
            raise SignalingUnreachable(str(exc)) from exc
        self._deadline_handle = self.clock.schedule_in(
            deadline_ms, self._on_deadline)

    def _signal(self, type_string: str, payload: dict) -> None:
        env = Envelope(v=1, id=self.ids.next_id(), type=type_string,
                       source=self.ids.source, ts=self._ts(), payload=payload)
        self._relay_handle.forward(LANE_SIGNALING, encode(env))

    def _on_relay_message(self, lane: int, data: bytes) -> None:
        if lane == LANE_SIGNALING:
            try:
                env = decode(data)
            except (MalformedMessage, UnsupportedVersion) as exc:
                self._note_decode_error(exc)
                return
            self._on_signal(env)
        elif lane == LANE_CONTROL:
            # Receive liberally from either path: the phase only selects the
            # send path, and the peer may have connected on the other one.
            if self._reliable is not None and self.connected:
                self._reliable.on_raw(data)
        elif lane == LANE_MEDIA:
            if self.connected:
                self._on_media(data)

    def _on_signal(self, env: Envelope) -> None:
        if self.state.phase in TERMINAL_PHASES:
            return
        if env.type == "relay.joined":
            self._peer_present = bool(env.payload.get("peer_present"))
        elif env.type == "relay.peer_joined":
            self._peer_present = True
        elif env.type == "relay.peer_left":
            if self.state.phase not in TERMINAL_PHASES:
                self._transition(Phase.FAILED)
            return
        elif env.type == "session.describe":
            self._descriptor_received = True
        elif env.type == "session.candidate":
            self.state.candidates_remote.append(Candidate(
                address=str(env.payload.get("address")),
                priority=int(env.payload.get("priority", 0))))
        elif env.type == "session.candidates_done":
            self._remote_done = True
        self._advance_fsm()

    def _advance_fsm(self) -> None:
        phase = self.state.phase
        if phase is Phase.JOINING and self._peer_present:
            self._transition(Phase.EXCHANGING_DESCRIPTORS)
            if self.role == ROLE_INITIATOR:
                self._send_descriptor()
            phase = self.state.phase
        if phase is Phase.EXCHANGING_DESCRIPTORS:
            if self._descriptor_received and not self._descriptor_sent:
                self._send_descriptor()
            if self._descriptor_sent and self._descriptor_received:
                self._transition(Phase.GATHERING_CANDIDATES)
                self._gather_candidates()
                phase = self.state.phase
        if phase is Phase.GATHERING_CANDIDATES:
            if self._local_done and self._remote_done:
                self._transition(Phase.CONNECTING)
                self._start_probing()

    def _send_descriptor(self) -> None:
        self._signal("session.describe", {
            "role": self.role,
            "backends": ["direct"] if self._direct is not None else [],
        })
        self._descriptor_sent = True

    def _gather_candidates(self) -> None:
        local = []
        if self._direct is not None:
            local.append(Candidate(address=f"direct:{self.role}",
                                   priority=PRIORITY_DIRECT))
        local.append(Candidate(address=f"relay:{self.session_id}",
                               priority=PRIORITY_RELAY))
        self.state.candidates_local = local
        for cand in local:
            self._signal("session.candidate",
                         {"address": cand.address, "priority": cand.priority})
        self._signal("session.candidates_done", {})
        self._local_done = True

    def _direct_candidates_remote(self) -> list[Candidate]:
        cands = [c for c in self.state.candidates_remote
                 if c.address.startswith("direct:")]
        return sorted(cands, key=lambda c: (-c.priority, c.address))

    def _start_probing(self) -> None:
        if self._direct is None or not self._direct_candidates_remote():
            # No direct pair can exist; the relay path is already verified.
            self._connect(Phase.CONNECTED_RELAYED)
            return
        self._probe_tick()

    def _probe_tick(self) -> None:
        if self.state.phase is not Phase.CONNECTING:
            return
        for cand in self._direct_candidates_remote():
            nonce = len(self._probe_sent_at) + 1
            self._probe_sent_at[nonce] = self.clock.now_ms()
            self._direct.send(self.role, LANE_CONTROL,
                              pack_ctrl(CTRL_PROBE, nonce,
                                        cand.address.encode()))
        self._probe_handle = self.clock.schedule_in(
            self.config.probe_interval_ms, self._probe_tick)

    def _on_direct_message(self, lane: int, data: bytes) -> None:
        if self.state.phase in TERMINAL_PHASES:
            return
        if lane == LANE_CONTROL and len(data) >= 5:
            kind, seq, payload = unpack_ctrl(data)
            if kind == CTRL_PROBE:
                self._direct.send(self.role, LANE_CONTROL,
                                  pack_ctrl(CTRL_PROBE_ACK, seq, payload))
                return
            if kind == CTRL_PROBE_ACK:
                if self.state.phase is Phase.CONNECTING:
                    self._connect(Phase.CONNECTED_DIRECT)
                return
        if lane == LANE_CONTROL:
            if self._reliable is not None and self.connected:
                self._reliable.on_raw(data)
        elif lane == LANE_MEDIA and self.connected:
            self._on_media(data)

    def _on_deadline(self) -> None:
        self._deadline_handle = None
        if self.state.phase in CONNECTED_PHASES or \
                self.state.phase in TERMINAL_PHASES:
            return
        if self.state.phase is Phase.CONNECTING:
            # Direct attempts exhausted the deadline; the relay carries on.
            self._connect(Phase.CONNECTED_RELAYED)
            return
        self._transition(Phase.FAILED)

    def _connect(self, phase: Phase) -> None:
        if self._probe_handle is not None:
            self.clock.cancel(self._probe_handle)
            self._probe_handle = None
        if self._deadline_handle is not None:
            self.clock.cancel(self._deadline_handle)
            self._deadline_handle = None
        if phase is Phase.CONNECTED_DIRECT:
            send_raw = lambda data: self._direct.send(self.role, LANE_CONTROL, data)
        else:
            send_raw = lambda data: self._relay_handle.forward(LANE_CONTROL, data)
        self._reliable = ReliableChannel(self.clock, send_raw,
                                         self._on_control_payload,
                                         rto_ms=self.config.rto_ms)
        self._transition(phase)
        self._flush_buffer()

    # -- send side --------------------------------------------------------

    def send(self, env: Envelope) -> SendResult:
        """Send a control envelope, buffering while the channel is closed."""
        with self._send_lock:
            if self.state.phase in TERMINAL_PHASES:
                raise SessionClosed(f"session is {self.state.phase.value}")
            if not self.connected or self._reliable is None:
                self._buffer.append(env)
                return SendResult.BUFFERED
            self._reliable.send(encode(env))
            return SendResult.ACCEPTED

    def _flush_buffer(self) -> None:
        # Atomic by construction: the whole backlog is handed to the
        # reliable channel before any post-open send can acquire the lock.
        with self._send_lock:
            for env in self._buffer.drain():
                self._reliable.send(encode(env))

    def send_media(self, frame: bytes) -> None:
        """Best-effort frame transmission; never retransmitted."""
        if self.state.phase in TERMINAL_PHASES or not self.connected:
            raise SessionClosed("media path requires a connected session")
        if not frame:
            raise InvalidFrame("zero-byte frame")
        self._send_media_payload(framing.tag_media(framing.MEDIA_KIND_FRAME, frame))

    def send_media_envelope(self, env: Envelope) -> None:
        """Lossy telemetry: rides the media lane, loss is acceptable."""
        if self.state.phase in TERMINAL_PHASES or not self.connected:
            raise SessionClosed("media path requires a connected session")
        self._send_media_payload(
            framing.tag_media(framing.MEDIA_KIND_ENVELOPE, encode(env)))

    def _send_media_payload(self, payload: bytes) -> None:
        if self.state.phase is Phase.CONNECTED_DIRECT:
            self._direct.send(self.role, LANE_MEDIA, payload)
        else:
            self._relay_handle.forward(LANE_MEDIA, payload)

    def media_ready(self) -> bool:
        """Backpressure hook; in-process paths are always writable."""
        return self.connected

    # -- receive side -------------------------------------------------------

    def _on_control_payload(self, payload: bytes) -> None:
        try:
            env = decode(payload)
        except (MalformedMessage, UnsupportedVersion) as exc:
            self._note_decode_error(exc)
            return
        self.inbound.enqueue(env)

    def _on_media(self, payload: bytes) -> None:
        try:
            kind, body = framing.untag_media(payload)
        except framing.FramingError as exc:
            self._note_decode_error(exc)
            return
        if kind == framing.MEDIA_KIND_FRAME:
            if self.on_frame is not None:
                self.on_frame(body)
        elif kind == framing.MEDIA_KIND_ENVELOPE:
            try:
                env = decode(body)
            except (MalformedMessage, UnsupportedVersion) as exc:
                self._note_decode_error(exc)
                return
            self.inbound.enqueue(env)

    def _note_decode_error(self, exc: Exception) -> None:
        self.decode_errors += 1
        log.warning("%s/%s dropped undecodable message: %s",
                    self.session_id, self.role, exc)
        if self.on_decode_error is not None:
            self.on_decode_error(exc)

    def poll_inbound(self, max_n: int | None = None) -> PollResult:
        return self.inbound.poll(max_n or self.config.poll_max)

    # -- lifecycle ----------------------------------------------------------

    def close(self) -> None:
        if self.state.phase is Phase.CLOSED:
            return
        if self._reliable is not None:
            self._reliable.close()
        for handle in (self._deadline_handle, self._probe_handle):
            if handle is not None:
                self.clock.cancel(handle)
        self._deadline_handle = self._probe_handle = None
        if self._relay_handle is not None:
            try:
                self._relay_handle.leave()
            except Exception:
                pass
        if self.state.phase not in TERMINAL_PHASES:
            self._transition(Phase.CLOSED)

    def make_envelope(self, type_string: str, payload: dict) -> Envelope:
        return Envelope(v=1, id=self.ids.next_id(), type=type_string,
                        source=self.ids.source, ts=self._ts(), payload=payload)
