"""Deterministic adverse-network simulation driven by a virtual clock.

A :class:`LinkHarness` models one directed byte path.  Per message it draws
loss, duplication, reorder, and jitter from a counter-based RNG keyed by
``(profile seed, direction salt, lane, message index)``, so a profile plus a
send transcript fully determines every delivery.  The reorder model swaps a
message's delivery time with the next message's on the same lane.

Lanes follow the relay framing convention: 0 = control, 1 = media,
2 = signaling control.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .clock import VirtualClock

LANE_CONTROL = 0
LANE_MEDIA = 1
LANE_SIGNALING = 2

Sink = Callable[[bytes], None]


@dataclass(frozen=True)
class NetProfile:
    """Per-link adversity settings; percentages are in [0, 100]."""

    seed: int = 0
    base_latency_ms: float = 0.0
    jitter_ms: float = 0.0
    loss_pct: dict[int, float] = field(default_factory=dict)
    reorder_pct: float = 0.0
    duplicate_pct: float = 0.0
    direct_path_blocked: bool = False

    def __post_init__(self) -> None:
        for lane, pct in self.loss_pct.items():
            if not 0.0 <= pct <= 100.0:
                raise ValueError(f"loss_pct[{lane}]={pct} outside [0, 100]")
        for name in ("reorder_pct", "duplicate_pct"):
            pct = getattr(self, name)
            if not 0.0 <= pct <= 100.0:
                raise ValueError(f"{name}={pct} outside [0, 100]")
        if self.base_latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be non-negative")

    def loss_for(self, lane: int) -> float:
        return self.loss_pct.get(lane, 0.0)

    def with_seed(self, seed: int) -> "NetProfile":
        return NetProfile(
            seed=seed,
            base_latency_ms=self.base_latency_ms,
            jitter_ms=self.jitter_ms,
            loss_pct=dict(self.loss_pct),
            reorder_pct=self.reorder_pct,
            duplicate_pct=self.duplicate_pct,
            direct_path_blocked=self.direct_path_blocked,
        )


def named_profile(name: str, seed: int = 0) -> NetProfile:
    """Presets: "lan", "lossy-wifi", "hostile"."""
    if name == "lan":
        return NetProfile(seed=seed, base_latency_ms=5.0)
    if name == "lossy-wifi":
        return NetProfile(
            seed=seed,
            base_latency_ms=20.0,
            jitter_ms=10.0,
            loss_pct={LANE_CONTROL: 5.0, LANE_MEDIA: 5.0},
        )
    if name == "hostile":
        return NetProfile(
            seed=seed,
            base_latency_ms=20.0,
            jitter_ms=10.0,
            loss_pct={LANE_CONTROL: 30.0, LANE_MEDIA: 30.0},
            reorder_pct=10.0,
            duplicate_pct=5.0,
            direct_path_blocked=True,
        )
    raise KeyError(f"unknown profile {name!r}")


@dataclass
class _Held:
    data: bytes
    time: float
    sink: Sink


class _LaneState:
    __slots__ = ("index", "held")

    def __init__(self) -> None:
        self.index = 0
        self.held: _Held | None = None


class LinkHarness:
    """One directed path applying a :class:`NetProfile` per lane.

    ``salt`` separates the RNG streams of the two directions of a duplex
    link (and of distinct links sharing one profile).
    """

    def __init__(self, profile: NetProfile, clock: VirtualClock, salt: int = 0):
        self.profile = profile
        self.clock = clock
        self.salt = salt
        self._lanes: dict[int, _LaneState] = {}

    def _lane(self, lane: int) -> _LaneState:
        if lane not in self._lanes:
            self._lanes[lane] = _LaneState()
        return self._lanes[lane]

    def _draws(self, lane: int, index: int) -> tuple[float, float, float, float, float]:
        seq = np.random.SeedSequence(
            [self.profile.seed, self.salt, lane, index]
        )
        rng = np.random.default_rng(seq)
        u = rng.uniform(0.0, 100.0, size=3)
        j = rng.uniform(-self.profile.jitter_ms, self.profile.jitter_ms, size=2) \
            if self.profile.jitter_ms > 0 else np.zeros(2)
        return u[0], u[1], u[2], float(j[0]), float(j[1])

    def deliver(self, lane: int, data: bytes, sink: Sink,
                send_time: float | None = None) -> list[tuple[float, bytes]]:
        """Schedule deliveries for one message; returns the (time, bytes) plan.

        A message that draws reorder is withheld until the next same-lane
        message arrives, then the two delivery times are exchanged.  Withheld
        messages are committed at their original time by :meth:`advance`.
        """
        prof = self.profile
        state = self._lane(lane)
        index = state.index
        state.index += 1
        now = self.clock.now_ms() if send_time is None else send_time
        u_loss, u_dup, u_reorder, jit, jit_dup = self._draws(lane, index)

        scheduled: list[tuple[float, bytes]] = []
        if u_loss < prof.loss_for(lane):
            return scheduled

        t_arrive = max(now, now + prof.base_latency_ms + jit)

        if state.held is not None:
            held = state.held
            state.held = None
            # Swap: the held message takes this message's slot and vice versa.
            scheduled.append(self._commit(t_arrive, held.data, held.sink))
            scheduled.append(self._commit(held.time, data, sink))
        elif u_reorder < prof.reorder_pct:
            state.held = _Held(data=data, time=t_arrive, sink=sink)
        else:
            scheduled.append(self._commit(t_arrive, data, sink))

        if u_dup < prof.duplicate_pct:
            t_extra = max(now, t_arrive + abs(jit_dup))
            scheduled.append(self._commit(t_extra, data, sink))
        return scheduled

    def _commit(self, at_ms: float, data: bytes, sink: Sink) -> tuple[float, bytes]:
        at_ms = max(at_ms, self.clock.now_ms())
        self.clock.schedule(at_ms, lambda: sink(data))
        return (at_ms, data)

    def flush_held(self) -> None:
        """Commit withheld reorder messages at their original times."""
        for state in self._lanes.values():
            if state.held is not None:
                held = state.held
                state.held = None
                self._commit(held.time, held.data, held.sink)

    def advance(self, until_ms: float) -> int:
        """Flush holds, then fire every delivery scheduled up to ``until_ms``."""
        self.flush_held()
        return self.clock.advance(until_ms)


PERFECT = NetProfile()
