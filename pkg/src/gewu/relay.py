"""Session-scoped signaling relay with a byte-relay fallback lane.

The relay pairs at most one initiator and one responder per session room
and forwards framed messages verbatim between them.  It parses nothing on
lanes 0 and 1; lane 2 carries the establishment transcript plus the relay's
own join/peer notifications.  Per-room, per-lane counters make the cloud
tier's cost profile observable: a direct-connected session leaves both
fallback lanes at exactly zero bytes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable

from .clock import wall_time_ms
from .envelope import Envelope, IdFactory, encode
from .netsim import LANE_CONTROL, LANE_MEDIA, LANE_SIGNALING

log = logging.getLogger(__name__)

ROLE_INITIATOR = "initiator"
ROLE_RESPONDER = "responder"
ROLES = (ROLE_INITIATOR, ROLE_RESPONDER)

SIGNALING_BUFFER_CAP = 64
DEFAULT_ROOM_TTL_S = 600.0


class RelayError(Exception):
    pass


class RoleTaken(RelayError):
    pass


class RoomFull(RelayError):
    pass


class PeerAbsent(RelayError):
    pass


class RelayClosed(RelayError):
    pass


@dataclass
class LaneCounter:
    messages: int = 0
    bytes: int = 0

    def add(self, n: int) -> None:
        self.messages += 1
        self.bytes += n

    def snapshot(self) -> dict[str, int]:
        return {"messages": self.messages, "bytes": self.bytes}


def _fresh_counters() -> dict[int, LaneCounter]:
    return {LANE_CONTROL: LaneCounter(), LANE_MEDIA: LaneCounter(),
            LANE_SIGNALING: LaneCounter()}


@dataclass
class SessionRoom:
    session_id: str
    created_at: float
    members: dict[str, "MemberToken"] = field(default_factory=dict)
    relayed: dict[int, LaneCounter] = field(default_factory=_fresh_counters)
    pending: dict[str, list[bytes]] = field(
        default_factory=lambda: {r: [] for r in ROLES})
    last_activity: float = 0.0
    closed: bool = False


class MemberToken:
    """Membership handle: the only way to push traffic into a room."""

    def __init__(self, core: "RelayCore", room: SessionRoom, role: str,
                 deliver: Callable[[int, bytes], None]):
        self._core = core
        self.room = room
        self.role = role
        self.deliver = deliver
        self.closed = False

    @property
    def session_id(self) -> str:
        return self.room.session_id

    def forward(self, lane: int, data: bytes) -> None:
        self._core.forward(self, lane, data)

    def leave(self) -> None:
        self._core.leave(self)


class RelayCore:
    """Transport-agnostic relay: rooms, forwarding, counters, TTL expiry."""

    def __init__(self, now_fn: Callable[[], float] | None = None,
                 signaling_buffer_cap: int = SIGNALING_BUFFER_CAP,
                 room_ttl_s: float = DEFAULT_ROOM_TTL_S,
                 id_factory: IdFactory | None = None):
        self._now = now_fn or (lambda: wall_time_ms() / 1000.0)
        self._cap = signaling_buffer_cap
        self._ttl_s = room_ttl_s
        self._rooms: dict[str, SessionRoom] = {}
        self._ids = id_factory or IdFactory("relay")
        self.rooms_created = 0
        self.control_messages = 0

    # -- membership -----------------------------------------------------

    def join(self, session_id: str, role: str,
             deliver: Callable[[int, bytes], None]) -> MemberToken:
        """Register a member; the peer (if present) gets a peer-joined event."""
        if role not in ROLES:
            raise RelayError(f"unknown role {role!r}")
        room = self._rooms.get(session_id)
        if room is None or room.closed:
            room = SessionRoom(session_id=session_id, created_at=self._now(),
                               last_activity=self._now())
            self._rooms[session_id] = room
            self.rooms_created += 1
        if len(room.members) >= 2:
            raise RoomFull(session_id)
        if role in room.members:
            raise RoleTaken(role)
        token = MemberToken(self, room, role, deliver)
        room.members[role] = token
        room.last_activity = self._now()
        peer = room.members.get(_other(role))
        self._notify(token, "relay.joined",
                     {"session": session_id, "role": role,
                      "peer_present": peer is not None})
        if peer is not None:
            self._notify(peer, "relay.peer_joined",
                         {"session": session_id, "role": role})
            # Flush signaling messages buffered before this member arrived.
            for data in room.pending[role]:
                room.relayed[LANE_SIGNALING].add(len(data))
                token.deliver(LANE_SIGNALING, data)
            room.pending[role].clear()
        return token

    def leave(self, token: MemberToken) -> None:
        if token.closed:
            return
        token.closed = True
        room = token.room
        room.members.pop(token.role, None)
        room.last_activity = self._now()
        peer = room.members.get(_other(token.role))
        if peer is not None:
            self._notify(peer, "relay.peer_left",
                         {"session": room.session_id, "role": token.role})
        if not room.members:
            room.closed = True
            self._rooms.pop(room.session_id, None)

    # -- forwarding -----------------------------------------------------

    def forward(self, token: MemberToken, lane: int, data: bytes) -> None:
        """Deliver bytes verbatim to the peer; lane payloads are never parsed."""
        if token.closed or token.room.closed:
            raise RelayClosed(token.session_id)
        room = token.room
        room.last_activity = self._now()
        peer = room.members.get(_other(token.role))
        if peer is None:
            if lane == LANE_SIGNALING:
                bucket = room.pending[_other(token.role)]
                if len(bucket) >= self._cap:
                    raise PeerAbsent(
                        f"signaling buffer full ({self._cap} messages)")
                bucket.append(data)
                return
            raise PeerAbsent(f"lane {lane}: peer not joined")
        room.relayed[lane].add(len(data))
        peer.deliver(lane, data)

    # -- observability ----------------------------------------------------

    def stats(self) -> dict:
        """Wait-free snapshot of per-room and global counters."""
        rooms = {}
        totals = {lane: {"messages": 0, "bytes": 0}
                  for lane in (LANE_CONTROL, LANE_MEDIA, LANE_SIGNALING)}
        for sid, room in self._rooms.items():
            lanes = {lane: c.snapshot() for lane, c in room.relayed.items()}
            for lane, snap in lanes.items():
                totals[lane]["messages"] += snap["messages"]
                totals[lane]["bytes"] += snap["bytes"]
            rooms[sid] = {
                "members": sorted(room.members),
                "lanes": lanes,
                "created_at": room.created_at,
            }
        return {
            "rooms": rooms,
            "rooms_created": self.rooms_created,
            "control_messages": self.control_messages,
            "lanes": totals,
        }

    def room_counters(self, session_id: str) -> dict[int, dict[str, int]]:
        room = self._rooms[session_id]
        return {lane: c.snapshot() for lane, c in room.relayed.items()}

    def sweep(self) -> int:
        """Expire rooms idle longer than the TTL; returns how many closed."""
        now = self._now()
        expired = [sid for sid, room in self._rooms.items()
                   if now - room.last_activity > self._ttl_s]
        for sid in expired:
            room = self._rooms.pop(sid)
            room.closed = True
            for member in list(room.members.values()):
                member.closed = True
            log.info("room %s expired after %.0fs idle", sid, self._ttl_s)
        return len(expired)

    # -- internals --------------------------------------------------------

    def _notify(self, token: MemberToken, type_string: str, payload: dict) -> None:
        """Relay-originated lane-2 control message (not counted as forwarded)."""
        env = Envelope(v=1, id=self._ids.next_id(), type=type_string,
                       source="relay", ts=int(self._now() * 1000),
                       payload=payload)
        self.control_messages += 1
        token.deliver(LANE_SIGNALING, encode(env))


def _other(role: str) -> str:
    return ROLE_RESPONDER if role == ROLE_INITIATOR else ROLE_INITIATOR


def parse_join(payload: bytes) -> tuple[str, str]:
    """Extract (session_id, role) from a relay.join envelope's bytes."""
    doc = json.loads(payload)
    if doc.get("type") != "relay.join":
        raise RelayError("first message must be relay.join")
    body = doc.get("payload", {})
    session = body.get("session")
    role = body.get("role")
    if not isinstance(session, str) or role not in ROLES:
        raise RelayError("relay.join requires session and role")
    return session, role
