"""Relay room membership, forwarding transparency, and counters."""

import pytest

from gewu.clock import VirtualClock
from gewu.envelope import decode
from gewu.netsim import LANE_CONTROL, LANE_MEDIA, LANE_SIGNALING
from gewu.relay import (
    ROLE_INITIATOR,
    ROLE_RESPONDER,
    PeerAbsent,
    RelayClosed,
    RelayCore,
    RoleTaken,
    RoomFull,
)


class Inbox:
    def __init__(self):
        self.messages = []

    def deliver(self, lane, data):
        self.messages.append((lane, data))

    def of_lane(self, lane):
        return [d for l, d in self.messages if l == lane]

    def types(self):
        return [decode(d).type for l, d in self.messages if l == LANE_SIGNALING]


def make_core():
    clock = VirtualClock()
    core = RelayCore(now_fn=lambda: clock.now_ms() / 1000.0, room_ttl_s=600.0)
    return clock, core


def test_join_pair_notifies_both():
    _, core = make_core()
    a, b = Inbox(), Inbox()
    core.join("s1", ROLE_INITIATOR, a.deliver)
    core.join("s1", ROLE_RESPONDER, b.deliver)
    assert "relay.joined" in a.types()
    assert "relay.peer_joined" in a.types()
    assert "relay.joined" in b.types()
    joined = decode(b.of_lane(LANE_SIGNALING)[0])
    assert joined.payload["peer_present"] is True


def test_duplicate_role_rejected():
    _, core = make_core()
    core.join("s1", ROLE_INITIATOR, Inbox().deliver)
    with pytest.raises(RoleTaken):
        core.join("s1", ROLE_INITIATOR, Inbox().deliver)


def test_third_member_rejected():
    _, core = make_core()
    core.join("s1", ROLE_INITIATOR, Inbox().deliver)
    core.join("s1", ROLE_RESPONDER, Inbox().deliver)
    with pytest.raises(RoomFull):
        core.join("s1", ROLE_RESPONDER, Inbox().deliver)


def test_forward_is_verbatim_and_counted():
    _, core = make_core()
    a, b = Inbox(), Inbox()
    tok_a = core.join("s1", ROLE_INITIATOR, a.deliver)
    core.join("s1", ROLE_RESPONDER, b.deliver)
    payloads = [b"m1", b"m2", b"longer message 3", b"m4", b"m5"]
    for p in payloads:
        tok_a.forward(LANE_SIGNALING, p)
    assert b.of_lane(LANE_SIGNALING)[-5:] == payloads
    counters = core.room_counters("s1")
    assert counters[LANE_SIGNALING]["messages"] == 5
    assert counters[LANE_SIGNALING]["bytes"] == sum(len(p) for p in payloads)
    assert counters[LANE_CONTROL]["bytes"] == 0
    assert counters[LANE_MEDIA]["bytes"] == 0


def test_signaling_buffered_until_peer_joins():
    _, core = make_core()
    a, b = Inbox(), Inbox()
    tok_a = core.join("s1", ROLE_INITIATOR, a.deliver)
    tok_a.forward(LANE_SIGNALING, b"early-1")
    tok_a.forward(LANE_SIGNALING, b"early-2")
    core.join("s1", ROLE_RESPONDER, b.deliver)
    assert b"early-1" in b.of_lane(LANE_SIGNALING)
    assert b"early-2" in b.of_lane(LANE_SIGNALING)
    # order preserved
    sig = b.of_lane(LANE_SIGNALING)
    assert sig.index(b"early-1") < sig.index(b"early-2")


def test_signaling_buffer_cap():
    _, core = make_core()
    tok = core.join("s1", ROLE_INITIATOR, Inbox().deliver)
    for i in range(64):
        tok.forward(LANE_SIGNALING, b"x")
    with pytest.raises(PeerAbsent):
        tok.forward(LANE_SIGNALING, b"overflow")


def test_fallback_lane_with_absent_peer_rejected():
    _, core = make_core()
    tok = core.join("s1", ROLE_INITIATOR, Inbox().deliver)
    with pytest.raises(PeerAbsent):
        tok.forward(LANE_MEDIA, b"frame")


def test_forward_after_leave_rejected():
    _, core = make_core()
    a, b = Inbox(), Inbox()
    tok_a = core.join("s1", ROLE_INITIATOR, a.deliver)
    tok_b = core.join("s1", ROLE_RESPONDER, b.deliver)
    tok_b.leave()
    tok_a.leave()
    with pytest.raises(RelayClosed):
        tok_a.forward(LANE_SIGNALING, b"late")


def test_rooms_are_isolated():
    _, core = make_core()
    a1, b1, a2, b2 = Inbox(), Inbox(), Inbox(), Inbox()
    t1 = core.join("room-a", ROLE_INITIATOR, a1.deliver)
    core.join("room-a", ROLE_RESPONDER, b1.deliver)
    core.join("room-b", ROLE_INITIATOR, a2.deliver)
    core.join("room-b", ROLE_RESPONDER, b2.deliver)
    t1.forward(LANE_MEDIA, b"secret")
    assert b1.of_lane(LANE_MEDIA) == [b"secret"]
    assert b2.of_lane(LANE_MEDIA) == []
    assert a2.of_lane(LANE_MEDIA) == []


def test_stats_fresh_relay_all_zero():
    _, core = make_core()
    stats = core.stats()
    assert stats["rooms"] == {}
    assert stats["rooms_created"] == 0
    for lane in (LANE_CONTROL, LANE_MEDIA, LANE_SIGNALING):
        assert stats["lanes"][lane] == {"messages": 0, "bytes": 0}


def test_idle_room_expires_after_ttl():
    clock = VirtualClock()
    core = RelayCore(now_fn=lambda: clock.now_ms() / 1000.0, room_ttl_s=600.0)
    core.join("s1", ROLE_INITIATOR, Inbox().deliver)
    clock.advance(599_000.0)
    assert core.sweep() == 0
    clock.advance(601_000.0)
    assert core.sweep() == 1
    assert core.stats()["rooms"] == {}
