"""Headless scripted client: the browser's stand-in for end-to-end tests.

Joins a session through the relay, plays a command script, and records the
received frame sequence numbers and telemetry stream to JSONL logs.
Protocol errors arriving as envelopes are data, not failures; only an
establishment failure yields a nonzero exit.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .clock import WallClock
from .edge import JsonlLog
from .envelope import Envelope, IdFactory
from .frames import FrameError, decode_header
from .script import parse_script, script_duration_ms
from .sockio import TcpRelayClient
from .transport import (
    ROLE_INITIATOR,
    Endpoint,
    EndpointConfig,
    Phase,
    SignalingUnreachable,
)

log = logging.getLogger(__name__)


@dataclass
class ClientOptions:
    relay: str = "127.0.0.1:0"
    session: str = "s1"
    script: str | None = None
    log: str | None = None
    deadline_ms: float = 5000.0
    linger_ms: float = 2000.0
    timeout_ms: float = 60_000.0


def run_headless_client(options: ClientOptions) -> int:
    host, _, port_text = options.relay.partition(":")
    try:
        port = int(port_text)
    except ValueError:
        print(f"error: bad relay address {options.relay!r}")
        return 2
    clock = WallClock()
    logger = JsonlLog(options.log)
    relay_client = TcpRelayClient(host, port, ids=IdFactory("webc"))
    endpoint = Endpoint(options.session, ROLE_INITIATOR, clock,
                        relay_client=relay_client, source="web",
                        config=EndpointConfig())
    frame_seqs: list[int] = []

    def on_frame(data: bytes) -> None:
        try:
            header = decode_header(data)
        except FrameError as exc:
            logger.write("bad_frame", clock.now_ms(), error=str(exc))
            return
        frame_seqs.append(header.seq)
        logger.write("frame", clock.now_ms(), seq=header.seq,
                     w=header.width, h=header.height,
                     payload_len=header.payload_len)

    endpoint.on_frame = on_frame
    endpoint.on_phase(lambda phase: logger.write(
        "phase", clock.now_ms(), phase=phase.value))

    commands = []
    if options.script:
        commands = parse_script(Path(options.script).read_text())

    try:
        endpoint.begin_establish(options.deadline_ms)
    except SignalingUnreachable as exc:
        print(f"error: relay unreachable: {exc}")
        logger.write("fatal", clock.now_ms(), error="SignalingUnreachable")
        logger.close()
        return 3

    started = time.monotonic()

    def pump() -> None:
        relay_client.pump()
        clock.run_due()
        for env in endpoint.poll_inbound().envelopes:
            logger.write("envelope", clock.now_ms(), type=env.type,
                         id=env.id, payload=env.payload)

    while not endpoint.connected:
        if endpoint.phase is Phase.FAILED:
            print("error: establishment failed")
            logger.close()
            return 4
        if (time.monotonic() - started) * 1000.0 > options.timeout_ms:
            print("error: establishment timed out")
            logger.close()
            return 4
        pump()
        time.sleep(0.002)

    logger.write("connected", clock.now_ms(), phase=endpoint.phase.value)

    # play the script on wall time
    t0 = time.monotonic()
    idx = 0
    end_ms = script_duration_ms(commands) + options.linger_ms
    while True:
        now_ms = (time.monotonic() - t0) * 1000.0
        while idx < len(commands) and commands[idx].at_ms <= now_ms:
            cmd = commands[idx]
            env = endpoint.make_envelope(cmd.type, cmd.payload)
            endpoint.send(env)
            logger.write("sent", clock.now_ms(), type=cmd.type,
                         payload=cmd.payload)
            idx += 1
        pump()
        if now_ms >= end_ms:
            break
        if (time.monotonic() - started) * 1000.0 > options.timeout_ms:
            break
        time.sleep(0.002)

    logger.write("done", clock.now_ms(), frames=len(frame_seqs),
                 monotone=frame_seqs == sorted(frame_seqs))
    endpoint.close()
    relay_client.close()
    logger.close()
    return 0


class HeadlessRecorder:
    """In-process variant for tests: same recording surface, no sockets."""

    def __init__(self, endpoint: Endpoint, clock):
        self.endpoint = endpoint
        self.clock = clock
        self.frame_seqs: list[int] = []
        self.envelopes: list[Envelope] = []
        self.bad_frames = 0
        endpoint.on_frame = self._on_frame

    def _on_frame(self, data: bytes) -> None:
        try:
            self.frame_seqs.append(decode_header(data).seq)
        except FrameError:
            self.bad_frames += 1

    def drain(self) -> None:
        self.envelopes.extend(self.endpoint.poll_inbound().envelopes)

    def telemetry(self, stream: str) -> list[Envelope]:
        return [e for e in self.envelopes if e.type == stream]
