"""Versioned typed message envelopes: wire codec, classification, dispatch.

Every control and telemetry message crossing a session is one UTF-8 JSON
object with exactly six top-level keys::

    {"v":1, "id":"env-web-1-00c0ffee", "type":"scene.load",
     "source":"web", "ts":1710000000000, "payload":{"scene":"RoboHeTu"}}

``type`` drives dispatch on both ends.  Types fall into four semantic
classes: state intents are idempotent-by-state, snapshots supersede by
latest, telemetry is emitted data, and signaling control belongs to session
establishment.
"""

from __future__ import annotations

import enum
import json
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

PROTOCOL_VERSION = 1

_TYPE_RE = re.compile(r"^[a-z0-9_]+(\.[a-z0-9_]+)+$")

_REQUIRED_KEYS = ("v", "id", "type", "source", "ts", "payload")


class EnvelopeError(Exception):
    """Base class for protocol-layer failures."""


class InvalidEnvelope(EnvelopeError):
    """An envelope violates a field invariant and cannot be encoded."""


class MalformedMessage(EnvelopeError):
    """Inbound bytes are not a well-formed envelope."""


class UnsupportedVersion(EnvelopeError):
    """Inbound envelope declares a protocol version newer than ours.

    The receiver should answer with a ``protocol.error`` envelope rather
    than dropping the message silently.
    """

    def __init__(self, version: int, env_id: str | None = None):
        super().__init__(f"unsupported protocol version {version}")
        self.version = version
        self.env_id = env_id


class UnknownType(EnvelopeError):
    """Type string has no registered command class."""


class DuplicateType(EnvelopeError):
    """A type string was registered twice."""


class CommandClass(enum.Enum):
    STATE_INTENT = "state_intent"
    SNAPSHOT = "snapshot"
    TELEMETRY = "telemetry"
    SIGNALING_CONTROL = "signaling_control"


@dataclass(frozen=True)
class Envelope:
    """The unit of all control and telemetry traffic."""

    v: int
    id: str
    type: str
    source: str
    ts: int
    payload: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        """Raise :class:`InvalidEnvelope` unless every field invariant holds."""
        if not isinstance(self.v, int) or isinstance(self.v, bool) or self.v < 1:
            raise InvalidEnvelope(f"v must be an integer >= 1, got {self.v!r}")
        if not isinstance(self.id, str) or not self.id:
            raise InvalidEnvelope("id must be a non-empty string")
        if not isinstance(self.type, str) or not _TYPE_RE.match(self.type):
            raise InvalidEnvelope(
                f"type {self.type!r} does not match dotted lowercase grammar"
            )
        if not isinstance(self.source, str):
            raise InvalidEnvelope("source must be a string")
        if not isinstance(self.ts, int) or isinstance(self.ts, bool) or self.ts < 0:
            raise InvalidEnvelope(f"ts must be a non-negative integer, got {self.ts!r}")
        if not isinstance(self.payload, dict):
            raise InvalidEnvelope("payload must be a JSON object")


def valid_type_string(type_string: str) -> bool:
    return bool(_TYPE_RE.match(type_string))


def encode(env: Envelope) -> bytes:
    """Encode a valid envelope as one UTF-8 JSON object.

    Key order is fixed for readability but carries no meaning; equality is
    structural, never byte-level.
    """
    env.validate()
    doc = {
        "v": env.v,
        "id": env.id,
        "type": env.type,
        "source": env.source,
        "ts": env.ts,
        "payload": env.payload,
    }
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def decode(data: bytes | str) -> Envelope:
    """Parse envelope bytes; unknown extra keys are ignored for forward compat."""
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedMessage(f"not JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedMessage("top level is not a JSON object")
    missing = [k for k in _REQUIRED_KEYS if k not in doc]
    if missing:
        raise MalformedMessage(f"missing keys: {missing}")
    v = doc["v"]
    if not isinstance(v, int) or isinstance(v, bool):
        raise MalformedMessage(f"v must be an integer, got {v!r}")
    if v < 1:
        raise MalformedMessage(f"v must be >= 1, got {v}")
    if v > PROTOCOL_VERSION:
        raise UnsupportedVersion(v, doc.get("id") if isinstance(doc.get("id"), str) else None)
    env = Envelope(
        v=v,
        id=doc["id"],
        type=doc["type"],
        source=doc["source"],
        ts=doc["ts"],
        payload=doc["payload"],
    )
    try:
        env.validate()
    except InvalidEnvelope as exc:
        raise MalformedMessage(str(exc)) from None
    return env


def make_id(source: str, counter: int, entropy: int) -> str:
    """Build ``env-<source>-<counter>-<hex entropy>`` (entropy is 4 bytes)."""
    return f"env-{source}-{counter}-{entropy & 0xFFFFFFFF:08x}"


class IdFactory:
    """Thread-safe per-endpoint id source: monotonic counter + fresh entropy."""

    def __init__(self, source: str, rng=None):
        import random

        self.source = source
        self._rng = rng if rng is not None else random.Random()
        self._counter = 0
        self._lock = threading.Lock()

    def next_id(self) -> str:
        with self._lock:
            self._counter += 1
            counter = self._counter
            entropy = self._rng.getrandbits(32)
        return make_id(self.source, counter, entropy)


class TypeRegistry:
    """Maps registered type strings to their command class."""

    def __init__(self) -> None:
        self._classes: dict[str, CommandClass] = {}

    def register(self, type_string: str, command_class: CommandClass) -> None:
        if not valid_type_string(type_string):
            raise InvalidEnvelope(f"type {type_string!r} does not match grammar")
        if type_string in self._classes:
            raise DuplicateType(type_string)
        self._classes[type_string] = command_class

    def classify(self, type_string: str) -> CommandClass:
        try:
            return self._classes[type_string]
        except KeyError:
            raise UnknownType(type_string) from None

    def classify_or_default(self, type_string: str) -> CommandClass:
        """Unknown types degrade to state-intent: never superseded or dropped."""
        return self._classes.get(type_string, CommandClass.STATE_INTENT)

    def known(self, type_string: str) -> bool:
        return type_string in self._classes


def _builtin_registry() -> TypeRegistry:
    reg = TypeRegistry()
    for t in ("scene.load", "training.set_flag", "policy.switch"):
        reg.register(t, CommandClass.STATE_INTENT)
    reg.register("control.move", CommandClass.SNAPSHOT)
    for t in ("telemetry.reward", "telemetry.episode", "telemetry.curriculum",
              "scene.status"):
        reg.register(t, CommandClass.TELEMETRY)
    for t in ("relay.join", "relay.joined", "relay.peer_joined",
              "relay.peer_left", "relay.error",
              "session.describe", "session.candidate", "session.candidates_done",
              "protocol.error"):
        reg.register(t, CommandClass.SIGNALING_CONTROL)
    return reg


#: Default taxonomy shared by edge, relay, and headless client.
DEFAULT_REGISTRY = _builtin_registry()


def classify(type_string: str, registry: TypeRegistry | None = None) -> CommandClass:
    """Classify a type string against the given (default: built-in) registry."""
    return (registry or DEFAULT_REGISTRY).classify(type_string)


Handler = Callable[[Envelope], Any]


class DispatchTable:
    """Routes decoded envelopes by type; unknown types reach the fallback.

    Dispatch is total: exactly one handler runs per envelope and a missing
    registration never escalates into a process fault.
    """

    def __init__(self, fallback: Handler | None = None):
        self._handlers: dict[str, Handler] = {}
        self._fallback: Handler = fallback or (lambda env: None)

    def register(self, type_string: str, handler: Handler) -> None:
        if not valid_type_string(type_string):
            raise InvalidEnvelope(f"type {type_string!r} does not match grammar")
        if type_string in self._handlers:
            raise DuplicateType(type_string)
        self._handlers[type_string] = handler

    def set_fallback(self, handler: Handler) -> None:
        self._fallback = handler

    def dispatch(self, env: Envelope) -> Any:
        handler = self._handlers.get(env.type, self._fallback)
        return handler(env)

    def registered(self) -> list[str]:
        return sorted(self._handlers)


def error_envelope(factory: IdFactory, ts: int, reason: str,
                   offending_id: str | None = None,
                   detail: dict[str, Any] | None = None) -> Envelope:
    """Build the ``protocol.error`` reply used instead of silent drops."""
    payload: dict[str, Any] = {"reason": reason}
    if offending_id is not None:
        payload["offending_id"] = offending_id
    if detail:
        payload.update(detail)
    return Envelope(
        v=PROTOCOL_VERSION,
        id=factory.next_id(),
        type="protocol.error",
        source=factory.source,
        ts=ts,
        payload=payload,
    )
