"""The edge node: scenes + transport + streamer under one main loop.

Boots to a bootstrap state (no scene active until the first load unless a
default scene is given), registers the three built-in scenes, and serves
one session.  Offline mode replays a scripted transcript on a virtual
clock and writes the telemetry log; live mode joins a relay over TCP and
streams to whoever connects.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .clock import VirtualClock, WallClock
from .config import BadConfig, load_config
from .director import SceneDirector, SceneRegistry
from .envelope import (
    Envelope,
    IdFactory,
    UnsupportedVersion,
)
from .frames import ENCODING_RLE, FramePacer, encode_frame
from .render import Camera, Renderer
from .script import ScriptCommand, parse_script, script_duration_ms
from .sim.scenes import SimConfig, install_builtin_scenes
from .sockio import TcpRelayClient
from .transport import (
    ROLE_RESPONDER,
    Endpoint,
    EndpointConfig,
    Phase,
    SessionClosed,
    SignalingUnreachable,
)

log = logging.getLogger(__name__)

TICK_MS = 1000.0 / 60.0


@dataclass
class EdgeOptions:
    relay: str | None = None
    session: str = "s1"
    default_scene: str | None = None
    config: str | None = None
    offline: bool = False
    script: str | None = None
    seed: int = 0
    compress: float | None = None
    fps: float = 30.0
    log: str | None = None
    width: int = 320
    height: int = 240
    deadline_ms: float = 5000.0
    run_for_ms: float | None = None


class JsonlLog:
    """Line-delimited structured records for greppable CI assertions."""

    def __init__(self, path: str | None):
        self._fh = open(path, "w") if path else None
        self.records: list[dict] = []

    def write(self, kind: str, t: float, **fields: Any) -> None:
        record = {"t": round(t, 3), "kind": kind, **fields}
        self.records.append(record)
        if self._fh and not self._fh.closed:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()


class EdgeApp:
    """One session's worth of orchestration, rendering, and telemetry."""

    def __init__(self, clock, sim_config: SimConfig,
                 options: EdgeOptions, endpoint: Endpoint | None = None,
                 logger: JsonlLog | None = None):
        self.clock = clock
        self.options = options
        self.endpoint = endpoint
        self.logbook = logger or JsonlLog(None)
        self.camera = Camera()
        self.registry = SceneRegistry()
        install_builtin_scenes(self.registry, clock, sim_config)
        ids = IdFactory("edge")
        self.director = SceneDirector(
            clock, self.registry, emit=self._reply, camera=self.camera,
            id_factory=ids, ts_fn=lambda: int(clock.now_ms()))
        self.renderer = Renderer()
        self.frame_seq = 0
        self._next_render_ms = 0.0
        self.pacer: FramePacer | None = None
        if endpoint is not None:
            self.pacer = FramePacer(
                clock, options.fps,
                send=self._send_frame_bytes,
                ready=endpoint.media_ready)
            endpoint.on_decode_error = self._on_decode_error
        self.faults = 0

    # -- outbound ---------------------------------------------------------

    def _reply(self, env: Envelope) -> None:
        self.logbook.write("reply", self.clock.now_ms(), type=env.type,
                           payload=env.payload)
        if self.endpoint is not None:
            try:
                self.endpoint.send(env)
            except SessionClosed:
                pass

    def _send_frame_bytes(self, data: bytes) -> None:
        try:
            self.endpoint.send_media(data)
        except SessionClosed:
            pass

    def _on_decode_error(self, exc: Exception) -> None:
        # Future protocol versions elicit an error reply, never silence.
        if isinstance(exc, UnsupportedVersion) and self.endpoint is not None:
            self._reply(self.endpoint.make_envelope("protocol.error", {
                "reason": f"unsupported protocol version {exc.version}",
                "offending_id": exc.env_id or "",
            }))
        self.logbook.write("decode_error", self.clock.now_ms(),
                           error=type(exc).__name__, detail=str(exc))

    # -- the tick ------------------------------------------------------------

    def tick(self, dt_ms: float = TICK_MS) -> None:
        if self.endpoint is not None:
            result = self.endpoint.poll_inbound()
            for env in result.envelopes:
                self._route(env)
        active = self.director.active
        if active is not None and active.runtime is not None:
            runtime = active.runtime
            runtime.step(dt_ms / 1000.0)
            view = runtime.world_view()
            if view.body is not None:
                self.camera.track(view.body.x)
            now = self.clock.now_ms()
            if self.endpoint is not None and now >= self._next_render_ms:
                self._next_render_ms = now + 1000.0 / self.options.fps
                raster = self.renderer.render(view, self.options.width,
                                              self.options.height)
                self.frame_seq += 1
                self.pacer.submit(encode_frame(raster, seq=self.frame_seq,
                                               encoding=ENCODING_RLE,
                                               ts_ms=int(now)))
            for sample in runtime.drain_telemetry():
                self._emit_telemetry(sample)
        if self.pacer is not None:
            self.pacer.tick()

    def _route(self, env: Envelope) -> None:
        try:
            result = self.director.route(env)
            self.logbook.write("route", self.clock.now_ms(), type=env.type,
                               id=env.id, result=result.value)
        except Exception as exc:  # a scene bug must not kill the session
            self.faults += 1
            log.exception("unhandled error routing %s", env.type)
            self.logbook.write("fault", self.clock.now_ms(), type=env.type,
                               error=repr(exc))

    def _emit_telemetry(self, sample) -> None:
        self.logbook.write("telemetry", self.clock.now_ms(),
                           stream=sample.stream, step=sample.step,
                           value=sample.value, **dict(sample.extra))
        if self.endpoint is not None:
            env = self.endpoint.make_envelope(sample.stream, sample.payload()) \
                if sample.stream.startswith("telemetry.") else None
            if env is not None:
                try:
                    self.endpoint.send_media_envelope(env)
                except SessionClosed:
                    pass

    def boot(self) -> None:
        if self.options.default_scene:
            env = Envelope(v=1, id="boot-load", type="scene.load",
                           source="edge", ts=int(self.clock.now_ms()),
                           payload={"scene": self.options.default_scene})
            self.director.route(env)


def _apply_cli_overrides(sim: SimConfig, options: EdgeOptions) -> SimConfig:
    import dataclasses

    trainer = sim.trainer
    if options.compress is not None:
        trainer = dataclasses.replace(trainer, compress=options.compress)
    if options.seed:
        trainer = dataclasses.replace(trainer, seed=options.seed)
        sim = dataclasses.replace(sim, seed=options.seed)
    return dataclasses.replace(sim, trainer=trainer)


def run_offline(options: EdgeOptions) -> int:
    """Scripted replay on a virtual clock; returns a process exit code."""
    sim, _ = load_config(options.config)
    sim = _apply_cli_overrides(sim, options)
    clock = VirtualClock()
    logger = JsonlLog(options.log)
    app = EdgeApp(clock, sim, options, endpoint=None, logger=logger)
    app.boot()
    commands: list[ScriptCommand] = []
    if options.script:
        commands = parse_script(Path(options.script).read_text())
    ids = IdFactory("script")
    for cmd in commands:
        env = Envelope(v=1, id=ids.next_id(), type=cmd.type, source="script",
                       ts=int(cmd.at_ms), payload=cmd.payload)
        clock.schedule(cmd.at_ms, lambda e=env: app._route(e))
    horizon = options.run_for_ms
    if horizon is None:
        horizon = script_duration_ms(commands) + 2000.0
    ticks = int(horizon / TICK_MS) + 1
    for _ in range(ticks):
        clock.advance_by(TICK_MS)
        app.tick()
    logger.write("done", clock.now_ms(), faults=app.faults)
    logger.close()
    return 0


def run_live(options: EdgeOptions) -> int:
    sim, _ = load_config(options.config)
    sim = _apply_cli_overrides(sim, options)
    if not options.relay:
        raise BadConfig("relay", 0, "--relay host:port is required")
    host, _, port_text = options.relay.partition(":")
    try:
        port = int(port_text)
    except ValueError:
        raise BadConfig("relay", 0, f"bad relay address {options.relay!r}") \
            from None
    clock = WallClock()
    logger = JsonlLog(options.log)
    relay_client = TcpRelayClient(host, port, ids=IdFactory("edge"))
    endpoint = Endpoint(options.session, ROLE_RESPONDER, clock,
                        relay_client=relay_client, source="edge",
                        config=EndpointConfig())
    app = EdgeApp(clock, sim, options, endpoint=endpoint, logger=logger)
    try:
        endpoint.begin_establish(options.deadline_ms)
    except SignalingUnreachable as exc:
        log.error("relay unreachable: %s", exc)
        logger.write("fatal", clock.now_ms(), error="RelayUnreachable",
                     detail=str(exc))
        return 3
    app.boot()
    logger.write("boot", clock.now_ms(), session=options.session,
                 scenes=app.registry.names())
    started = time.monotonic()
    try:
        while True:
            loop_t0 = time.monotonic()
            relay_client.pump()
            clock.run_due()
            app.tick()
            if endpoint.phase in (Phase.FAILED, Phase.CLOSED):
                logger.write("session_end", clock.now_ms(),
                             phase=endpoint.phase.value)
                return 0 if endpoint.phase is Phase.CLOSED else 1
            if options.run_for_ms is not None \
                    and (time.monotonic() - started) * 1000.0 \
                    >= options.run_for_ms:
                return 0
            elapsed_ms = (time.monotonic() - loop_t0) * 1000.0
            if elapsed_ms < TICK_MS:
                time.sleep((TICK_MS - elapsed_ms) / 1000.0)
    except KeyboardInterrupt:
        return 0
    finally:
        endpoint.close()
        relay_client.close()
        logger.close()


def run_edge(options: EdgeOptions) -> int:
    try:
        if options.offline:
            return run_offline(options)
        return run_live(options)
    except BadConfig as exc:
        log.error("bad config: %s", exc)
        print(f"error: {exc}")
        return 2
