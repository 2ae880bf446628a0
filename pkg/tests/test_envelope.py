"""Envelope codec, classification, and dispatch contracts."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gewu import envelope as ev


# --- encode -----------------------------------------------------------------

def test_encode_scene_load_listing():
    env = ev.Envelope(
        v=1, id="env-a1", type="scene.load", source="web",
        ts=1710000000000, payload={"scene": "RoboHeTu"},
    )
    doc = json.loads(ev.encode(env))
    assert doc == {
        "v": 1, "id": "env-a1", "type": "scene.load", "source": "web",
        "ts": 1710000000000, "payload": {"scene": "RoboHeTu"},
    }
    assert set(doc) == {"v", "id", "type", "source", "ts", "payload"}


def test_encode_minimal_roundtrip():
    env = ev.Envelope(v=1, id="x", type="a.b", source="s", ts=0, payload={})
    assert ev.decode(ev.encode(env)) == env


@pytest.mark.parametrize("bad_type", ["SceneLoad", "scene", "scene.", ".load",
                                      "scene.Load", "scene..load", "a.b c"])
def test_encode_rejects_bad_type_grammar(bad_type):
    env = ev.Envelope(v=1, id="x", type=bad_type, source="s", ts=0, payload={})
    with pytest.raises(ev.InvalidEnvelope):
        ev.encode(env)


@pytest.mark.parametrize("field,value", [
    ("v", 0), ("v", True), ("id", ""), ("id", 7),
    ("ts", -1), ("ts", 1.5), ("payload", []), ("source", 3),
])
def test_encode_rejects_invariant_violations(field, value):
    kwargs = dict(v=1, id="x", type="a.b", source="s", ts=0, payload={})
    kwargs[field] = value
    with pytest.raises(ev.InvalidEnvelope):
        ev.encode(ev.Envelope(**kwargs))


# --- decode -----------------------------------------------------------------

PAPER_LISTING = b'''{ "v":1, "id":"env-m9x2...",
  "type":"scene.load", "source":"web",
  "ts":1710000000000,
  "payload":{ "scene":"RoboHeTu" } }'''


def test_decode_wire_listing():
    env = ev.decode(PAPER_LISTING)
    assert env.v == 1
    assert env.id == "env-m9x2..."
    assert env.type == "scene.load"
    assert env.source == "web"
    assert env.ts == 1710000000000
    assert env.payload == {"scene": "RoboHeTu"}


def test_decode_ignores_extra_keys():
    raw = b'{"v":1,"id":"e","type":"a.b","source":"s","ts":1,"payload":{},"extra":9}'
    env = ev.decode(raw)
    assert env == ev.Envelope(v=1, id="e", type="a.b", source="s", ts=1, payload={})


@pytest.mark.parametrize("raw", [
    b'{"id":"e"}',
    b'not json at all',
    b'[1,2,3]',
    b'{"v":"1","id":"e","type":"a.b","source":"s","ts":1,"payload":{}}',
    b'{"v":0,"id":"e","type":"a.b","source":"s","ts":1,"payload":{}}',
    b'{"v":1,"id":"e","type":"nodots","source":"s","ts":1,"payload":{}}',
    b'{"v":1,"id":"e","type":"a.b","source":"s","ts":-4,"payload":{}}',
])
def test_decode_malformed(raw):
    with pytest.raises(ev.MalformedMessage):
        ev.decode(raw)


def test_decode_future_version_is_distinct_error():
    raw = b'{"v":2,"id":"e","type":"a.b","source":"s","ts":1,"payload":{}}'
    with pytest.raises(ev.UnsupportedVersion) as exc:
        ev.decode(raw)
    assert exc.value.version == 2
    assert exc.value.env_id == "e"


# --- classify ---------------------------------------------------------------

def test_builtin_taxonomy():
    assert ev.classify("scene.load") is ev.CommandClass.STATE_INTENT
    assert ev.classify("training.set_flag") is ev.CommandClass.STATE_INTENT
    assert ev.classify("control.move") is ev.CommandClass.SNAPSHOT
    for stream in ("telemetry.reward", "telemetry.episode", "telemetry.curriculum"):
        assert ev.classify(stream) is ev.CommandClass.TELEMETRY
    assert ev.classify("session.candidate") is ev.CommandClass.SIGNALING_CONTROL


def test_classify_unknown_type():
    with pytest.raises(ev.UnknownType):
        ev.classify("never.registered")
    # Safe default: unknown types degrade to state intent (never superseded).
    assert ev.DEFAULT_REGISTRY.classify_or_default("never.registered") \
        is ev.CommandClass.STATE_INTENT


def test_registry_rejects_duplicates():
    reg = ev.TypeRegistry()
    reg.register("a.b", ev.CommandClass.SNAPSHOT)
    with pytest.raises(ev.DuplicateType):
        reg.register("a.b", ev.CommandClass.TELEMETRY)


# --- make_id ----------------------------------------------------------------

def test_make_id_format():
    assert ev.make_id("web", 1, 0xDEADBEEF) == "env-web-1-deadbeef"
    assert ev.make_id("edge", 0, 0x00000000) == "env-edge-0-00000000"


def test_id_factory_monotonic_unique():
    factory = ev.IdFactory("web", rng=random.Random(7))
    ids = [factory.next_id() for _ in range(64)]
    assert len(set(ids)) == 64
    counters = [int(i.split("-")[2]) for i in ids]
    assert counters == sorted(counters)


# --- dispatch ---------------------------------------------------------------

def _env(type_string):
    return ev.Envelope(v=1, id="e", type=type_string, source="t", ts=0, payload={})


def test_dispatch_routes_by_type_and_falls_back():
    seen = []
    table = ev.DispatchTable(fallback=lambda env: seen.append(("fallback", env.type)))
    table.register("scene.load", lambda env: seen.append(("scene", env.type)))
    table.dispatch(_env("scene.load"))
    table.dispatch(_env("never.registered"))
    assert seen == [("scene", "scene.load"), ("fallback", "never.registered")]


def test_dispatch_duplicate_registration_rejected():
    table = ev.DispatchTable()
    table.register("a.b", lambda env: None)
    with pytest.raises(ev.DuplicateType):
        table.register("a.b", lambda env: None)


# --- round-trip property ----------------------------------------------------

_segment = st.from_regex(r"[a-z0-9_]{1,8}", fullmatch=True)
_type_strings = st.lists(_segment, min_size=2, max_size=4).map(".".join)
_json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-2**53, 2**53)
    | st.floats(allow_nan=False, allow_infinity=False) | st.text(max_size=12),
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=8), children, max_size=4),
    max_leaves=12,
)
_envelopes = st.builds(
    ev.Envelope,
    v=st.just(ev.PROTOCOL_VERSION),
    id=st.text(min_size=1, max_size=24),
    type=_type_strings,
    source=st.text(max_size=12),
    ts=st.integers(0, 2**53),
    payload=st.dictionaries(st.text(max_size=8), _json_values, max_size=6),
)


@settings(max_examples=300, deadline=None)
@given(_envelopes)
def test_roundtrip_property(env):
    assert ev.decode(ev.encode(env)) == env
