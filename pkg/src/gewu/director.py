"""Scene orchestration: registry, load dedup, deferred replay, routing.

The director is the single entry point for every decoded command, whether
it arrived from the session or from a local script console.  Scene loads
are state intents: requests for a scene already loading or active are
ignored, so network jitter and repeated clicks cannot cascade.  Commands
that arrive while a load is in flight are deferred and replayed to the new
runtime in arrival order, before anything that arrives after activation.

Onboarding a new scene touches nothing but this module's public surface:
``registry.register(name, aliases, factory)`` plus a runtime object, and
optionally one new handler in the envelope dispatch table.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

from .envelope import DEFAULT_REGISTRY, CommandClass, Envelope, IdFactory
from .render import Camera, WorldView

log = logging.getLogger(__name__)

DEFAULT_LOAD_DELAY_MS = 300.0
DEFERRED_CAP = 1024


class DirectorError(Exception):
    pass


class UnknownScene(DirectorError):
    pass


class DuplicateScene(DirectorError):
    pass


class AliasCollision(DirectorError):
    pass


class NoActiveScene(DirectorError):
    pass


class SceneCommandError(DirectorError):
    """Raised by a scene runtime to reject a command with a reason; the
    director turns it into a protocol.error reply."""


class SceneStatus(enum.Enum):
    UNLOADED = "unloaded"
    LOADING = "loading"
    ACTIVE = "active"
    UNLOADING = "unloading"


class HandleResult(enum.Enum):
    HANDLED = "handled"
    UNSUPPORTED = "unsupported"


class LoadResult(enum.Enum):
    ACCEPTED = "accepted"
    DUPLICATE_IGNORED = "duplicate_ignored"


class RouteResult(enum.Enum):
    HANDLED_BY_DIRECTOR = "director"
    HANDLED_BY_SCENE = "scene"
    DEFERRED = "deferred"
    ERROR = "error"


class SceneRuntime:
    """Base runtime: what the orchestration layer needs from a scene.

    Scene authors subclass this (or any duck-typed equivalent) and never
    touch transport or protocol code.
    """

    name = "scene"

    def handle(self, env: Envelope) -> HandleResult:
        return HandleResult.UNSUPPORTED

    def camera_sync(self, camera: Camera) -> None:
        camera.sync()

    def step(self, dt: float) -> None:
        pass

    def world_view(self) -> WorldView:
        return WorldView()

    def drain_telemetry(self) -> list:
        return []

    def shutdown(self) -> None:
        pass


@dataclass
class SceneDescriptor:
    canonical_name: str
    aliases: set[str]
    factory: Callable[[], SceneRuntime]
    status: SceneStatus = SceneStatus.UNLOADED
    runtime: SceneRuntime | None = None
    deferred: list[Envelope] = field(default_factory=list)


class SceneRegistry:
    """Case-insensitive name and alias index over registered scenes."""

    def __init__(self) -> None:
        self._by_name: dict[str, SceneDescriptor] = {}
        self._alias_index: dict[str, str] = {}

    def register(self, canonical: str, aliases: set[str] | None,
                 factory: Callable[[], SceneRuntime]) -> SceneDescriptor:
        key = canonical.lower()
        if key in self._by_name or key in self._alias_index:
            raise DuplicateScene(canonical)
        aliases = set(aliases or ())
        for alias in aliases:
            akey = alias.lower()
            if akey in self._alias_index or akey in self._by_name:
                raise AliasCollision(alias)
        desc = SceneDescriptor(canonical_name=canonical, aliases=aliases,
                               factory=factory)
        self._by_name[key] = desc
        for alias in aliases:
            self._alias_index[alias.lower()] = key
        return desc

    def resolve(self, name_or_alias: str) -> str:
        key = str(name_or_alias).lower()
        if key in self._by_name:
            return self._by_name[key].canonical_name
        if key in self._alias_index:
            return self._by_name[self._alias_index[key]].canonical_name
        raise UnknownScene(name_or_alias)

    def descriptor(self, name_or_alias: str) -> SceneDescriptor:
        return self._by_name[self.resolve(name_or_alias).lower()]

    def names(self) -> list[str]:
        return [d.canonical_name for d in self._by_name.values()]

    def statuses(self) -> dict[str, SceneStatus]:
        return {d.canonical_name: d.status for d in self._by_name.values()}


class SceneDirector:
    """Owns scene lifecycle and routes every command on the main loop."""

    def __init__(self, clock, registry: SceneRegistry,
                 emit: Callable[[Envelope], None] | None = None,
                 camera: Camera | None = None,
                 id_factory: IdFactory | None = None,
                 ts_fn: Callable[[], int] | None = None,
                 load_delay_ms: float = DEFAULT_LOAD_DELAY_MS,
                 deferred_cap: int = DEFERRED_CAP):
        self.clock = clock
        self.registry = registry
        self.camera = camera or Camera()
        self._emit = emit or (lambda env: None)
        self._ids = id_factory or IdFactory("edge")
        self._ts = ts_fn or (lambda: int(clock.now_ms()))
        self.load_delay_ms = load_delay_ms
        self.deferred_cap = deferred_cap
        self.active: SceneDescriptor | None = None
        self.pending: SceneDescriptor | None = None
        self._load_timer: int | None = None
        self.loads_started = 0
        self.loads_ignored = 0
        self.deferred_dropped = 0

    # -- loading ----------------------------------------------------------

    def request_load(self, env: Envelope) -> LoadResult:
        """Honor a scene.load intent; duplicates of an in-flight or active
        target are ignored without side effects."""
        name = env.payload.get("scene")
        target = self.registry.descriptor(name)  # raises UnknownScene
        if self.pending is target:
            self.loads_ignored += 1
            return LoadResult.DUPLICATE_IGNORED
        if self.pending is None and self.active is target:
            self.loads_ignored += 1
            return LoadResult.DUPLICATE_IGNORED
        if self.pending is not None:
            # A newer intent supersedes the in-flight load.
            self._abandon_pending()
        self.pending = target
        target.status = SceneStatus.LOADING
        target.deferred = []
        self.loads_started += 1
        self._load_timer = self.clock.schedule_in(self.load_delay_ms,
                                                  self._activate_pending)
        return LoadResult.ACCEPTED

    def _abandon_pending(self) -> None:
        stale = self.pending
        self.pending = None
        if self._load_timer is not None:
            self.clock.cancel(self._load_timer)
            self._load_timer = None
        if stale is not None:
            if stale.deferred:
                self.deferred_dropped += len(stale.deferred)
                log.info("dropping %d commands deferred for abandoned load of %s",
                         len(stale.deferred), stale.canonical_name)
            stale.deferred = []
            stale.status = SceneStatus.UNLOADED

    def _activate_pending(self) -> None:
        self._load_timer = None
        target = self.pending
        if target is None:
            return
        self.pending = None
        old = self.active
        if old is not None and old is not target:
            old.status = SceneStatus.UNLOADING
            if old.runtime is not None:
                old.runtime.shutdown()
            old.runtime = None
            old.status = SceneStatus.UNLOADED
        target.runtime = target.factory()
        target.runtime.camera_sync(self.camera)
        deferred, target.deferred = target.deferred, []
        for env in deferred:
            self._deliver(target, env, replayed=True)
        target.status = SceneStatus.ACTIVE
        self.active = target
        self._emit_status(target)

    # -- routing ------------------------------------------------------------

    def route(self, env: Envelope) -> RouteResult:
        """Single entry point for session and local-console commands alike."""
        if env.type == "scene.load":
            try:
                result = self.request_load(env)
            except UnknownScene as exc:
                self._error(env, f"unknown scene: {exc}")
                return RouteResult.ERROR
            if result is LoadResult.ACCEPTED:
                target = self.registry.descriptor(env.payload["scene"])
                self._emit_status(target)
            return RouteResult.HANDLED_BY_DIRECTOR
        if self.pending is not None:
            self._defer(env)
            return RouteResult.DEFERRED
        if self.active is None or self.active.runtime is None:
            self._error(env, "no active scene")
            return RouteResult.ERROR
        if self._deliver(self.active, env, replayed=False):
            return RouteResult.HANDLED_BY_SCENE
        return RouteResult.ERROR

    def _deliver(self, desc: SceneDescriptor, env: Envelope,
                 replayed: bool) -> bool:
        bound = env.payload.get("scene")
        if bound is not None:
            try:
                if self.registry.resolve(bound) != desc.canonical_name:
                    self.deferred_dropped += replayed
                    log.info("dropping %s bound to %s (active: %s)",
                             env.type, bound, desc.canonical_name)
                    return False
            except UnknownScene:
                pass
        try:
            result = desc.runtime.handle(env)
        except SceneCommandError as exc:
            if not replayed:
                self._error(env, str(exc))
            return False
        if result is HandleResult.UNSUPPORTED:
            if replayed:
                log.info("replayed %s unsupported by %s", env.type,
                         desc.canonical_name)
            else:
                self._error(env, f"{env.type} unsupported by "
                                 f"{desc.canonical_name}")
            return False
        return True

    def _defer(self, env: Envelope) -> None:
        queue = self.pending.deferred
        if len(queue) >= self.deferred_cap:
            victim = next(
                (i for i, e in enumerate(queue)
                 if DEFAULT_REGISTRY.classify_or_default(e.type)
                 is CommandClass.SNAPSHOT),
                0,
            )
            queue.pop(victim)
            self.deferred_dropped += 1
        queue.append(env)

    # -- replies --------------------------------------------------------------

    def _emit_status(self, desc: SceneDescriptor) -> None:
        self._emit(Envelope(
            v=1, id=self._ids.next_id(), type="scene.status",
            source=self._ids.source, ts=self._ts(),
            payload={"scene": desc.canonical_name, "status": desc.status.value}))

    def _error(self, offending: Envelope, reason: str) -> None:
        log.warning("protocol error replying to %s: %s", offending.id, reason)
        self._emit(Envelope(
            v=1, id=self._ids.next_id(), type="protocol.error",
            source=self._ids.source, ts=self._ts(),
            payload={"reason": reason, "offending_id": offending.id}))

    # -- views -----------------------------------------------------------------

    def active_runtime(self) -> SceneRuntime:
        if self.active is None or self.active.runtime is None:
            raise NoActiveScene()
        return self.active.runtime

    def active_count(self) -> int:
        return sum(1 for d in self.registry._by_name.values()
                   if d.status is SceneStatus.ACTIVE)
