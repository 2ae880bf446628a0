"""In-process session wiring: relay, harness legs, and endpoints on one clock.

This is the loopback backend used by tests, offline mode, and the scripted
demos.  All adversity, latency, and timers run on a shared virtual clock, so
whole sessions execute deterministically and instantly.
"""

from __future__ import annotations

import random
from typing import Callable

from .clock import VirtualClock
from .envelope import IdFactory
from .netsim import PERFECT, LinkHarness, NetProfile
from .relay import PeerAbsent, RelayCore, RelayError
from .transport import (
    ROLE_INITIATOR,
    ROLE_RESPONDER,
    DirectLink,
    Endpoint,
    EndpointConfig,
    SignalingUnreachable,
)

_SALT_DIRECT = 10
_SALT_RELAY_TO_INITIATOR = 20
_SALT_RELAY_TO_RESPONDER = 21


class InMemoryRelayHandle:
    """Relay membership as seen by an endpoint, with drop-don't-crash semantics."""

    def __init__(self, token, on_down: Callable[[], None]):
        self._token = token
        self._on_down = on_down

    def forward(self, lane: int, data: bytes) -> None:
        try:
            self._token.forward(lane, data)
        except PeerAbsent:
            pass  # lossy lanes tolerate an absent peer; signaling buffers upstream
        except RelayError:
            self._on_down()

    def leave(self) -> None:
        try:
            self._token.leave()
        except RelayError:
            pass


class InMemoryRelayClient:
    def __init__(self, net: "InProcessNet", delivery_salt: int):
        self._net = net
        self._salt = delivery_salt

    def join(self, session_id: str, role: str,
             on_message: Callable[[int, bytes], None]):
        if self._net.relay_down:
            raise SignalingUnreachable("relay unreachable")
        harness = LinkHarness(self._net.profile, self._net.clock, salt=self._salt)
        self._net.harnesses.append(harness)

        def deliver(lane: int, data: bytes) -> None:
            harness.deliver(lane, data, lambda d, _l=lane: on_message(_l, d))

        token = self._net.relay.join(session_id, role, deliver)
        return InMemoryRelayHandle(token, on_down=lambda: None)


class InProcessNet:
    """Builds a deterministic two-endpoint session fixture."""

    def __init__(self, profile: NetProfile = PERFECT, seed: int = 0,
                 with_direct_link: bool = True,
                 clock: VirtualClock | None = None):
        self.clock = clock or VirtualClock()
        self.profile = profile
        self.seed = seed
        self.relay = RelayCore(
            now_fn=lambda: self.clock.now_ms() / 1000.0,
            id_factory=IdFactory("relay", rng=random.Random(seed * 4 + 3)),
        )
        self.relay_down = False
        self.harnesses: list[LinkHarness] = []
        self.direct_link = (
            DirectLink(self.clock, profile, salt_base=_SALT_DIRECT)
            if with_direct_link else None
        )
        if self.direct_link is not None:
            self.harnesses.extend(self.direct_link._harness.values())

    def endpoint(self, role: str, source: str, session_id: str = "s1",
                 config: EndpointConfig = EndpointConfig()) -> Endpoint:
        salt = (_SALT_RELAY_TO_INITIATOR if role == ROLE_INITIATOR
                else _SALT_RELAY_TO_RESPONDER)
        rng_seed = self.seed * 4 + (1 if role == ROLE_INITIATOR else 2)
        return Endpoint(
            session_id=session_id,
            role=role,
            clock=self.clock,
            relay_client=InMemoryRelayClient(self, delivery_salt=salt),
            direct_link=self.direct_link,
            source=source,
            id_factory=IdFactory(source, rng=random.Random(rng_seed)),
            config=config,
            ts_fn=lambda: int(self.clock.now_ms()),
        )

    def pair(self, session_id: str = "s1",
             config: EndpointConfig = EndpointConfig()) -> tuple[Endpoint, Endpoint]:
        """(initiator="web" client, responder="edge") endpoints."""
        client = self.endpoint(ROLE_INITIATOR, "web", session_id, config)
        edge = self.endpoint(ROLE_RESPONDER, "edge", session_id, config)
        return client, edge

    # -- clock driving ----------------------------------------------------

    def run_for(self, ms: float, step_ms: float = 5.0) -> None:
        """Advance virtual time, flushing harness reorder holds as we go."""
        target = self.clock.now_ms() + ms
        while self.clock.now_ms() < target:
            for h in self.harnesses:
                h.flush_held()
            self.clock.advance(min(self.clock.now_ms() + step_ms, target))
        for h in self.harnesses:
            h.flush_held()

    def run_until(self, cond: Callable[[], bool], limit_ms: float = 10_000.0,
                  step_ms: float = 5.0) -> bool:
        deadline = self.clock.now_ms() + limit_ms
        while self.clock.now_ms() < deadline:
            if cond():
                return True
            for h in self.harnesses:
                h.flush_held()
            self.clock.advance(min(self.clock.now_ms() + step_ms, deadline))
        return cond()


def establish_pair(net: InProcessNet, deadline_ms: float = 1000.0,
                   session_id: str = "s1",
                   config: EndpointConfig = EndpointConfig()
                   ) -> tuple[Endpoint, Endpoint]:
    """Join, exchange, probe, and connect both ends; returns (client, edge)."""
    client, edge = net.pair(session_id, config)
    edge.begin_establish(deadline_ms)
    client.begin_establish(deadline_ms)
    net.run_until(lambda: client.phase.value.startswith("connected")
                  and edge.phase.value.startswith("connected"),
                  limit_ms=deadline_ms * 4 + 1000)
    return client, edge
