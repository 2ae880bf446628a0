"""Typed telemetry points with per-stream rate limiting.

Producers offer samples as fast as they like; the hub releases at most
``max_per_s`` per stream, replacing a withheld sample whenever a newer one
arrives (newest wins).  Step values are monotone per stream by contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field

STREAM_REWARD = "telemetry.reward"
STREAM_EPISODE = "telemetry.episode"
STREAM_CURRICULUM = "telemetry.curriculum"


@dataclass(frozen=True)
class TelemetrySample:
    stream: str
    step: int
    value: float
    extra: tuple = ()

    def payload(self) -> dict:
        doc = {"step": self.step, "value": self.value}
        doc.update(dict(self.extra))
        return doc


class _StreamState:
    __slots__ = ("last_emit_ms", "pending", "last_step")

    def __init__(self) -> None:
        self.last_emit_ms = float("-inf")
        self.pending: TelemetrySample | None = None
        self.last_step = -1


@dataclass
class TelemetryHub:
    clock: object
    max_per_s: float = 10.0
    _streams: dict = field(default_factory=dict)
    _ready: list = field(default_factory=list)

    def _state(self, stream: str) -> _StreamState:
        if stream not in self._streams:
            self._streams[stream] = _StreamState()
        return self._streams[stream]

    def offer(self, sample: TelemetrySample) -> None:
        state = self._state(sample.stream)
        if sample.step < state.last_step:
            raise ValueError(
                f"{sample.stream}: step {sample.step} < {state.last_step}")
        state.last_step = sample.step
        interval = 1000.0 / self.max_per_s
        now = self.clock.now_ms()
        if now - state.last_emit_ms >= interval:
            state.last_emit_ms = now
            self._ready.append(sample)
        else:
            state.pending = sample  # newest wins

    def drain(self) -> list[TelemetrySample]:
        """Release due samples; call once per main-loop tick."""
        now = self.clock.now_ms()
        interval = 1000.0 / self.max_per_s
        for state in self._streams.values():
            if state.pending is not None \
                    and now - state.last_emit_ms >= interval:
                self._ready.append(state.pending)
                state.pending = None
                state.last_emit_ms = now
        out, self._ready = self._ready, []
        return out
