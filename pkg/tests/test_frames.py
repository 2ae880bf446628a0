"""Frame wire format round-trips, RLE size behavior, pacing, rendering."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gewu import frames
from gewu.clock import VirtualClock
from gewu.render import BodyPose, Renderer, WorldView


def solid(h, w, color):
    return np.full((h, w, 3), color, dtype=np.uint8)


# --- codec -------------------------------------------------------------------

def test_solid_frame_rle_roundtrip_and_size():
    raster = solid(8, 8, (255, 0, 0))
    data = frames.encode_frame(raster, seq=1, encoding=frames.ENCODING_RLE)
    header, decoded = frames.decode_frame(data)
    assert np.array_equal(decoded, raster)
    assert header.payload_len < 192
    assert header.width == 8 and header.height == 8


def test_raw_roundtrip_random_raster():
    rng = np.random.default_rng(0)
    raster = rng.integers(0, 256, size=(17, 23, 3), dtype=np.uint8)
    data = frames.encode_frame(raster, seq=9, encoding=frames.ENCODING_RAW,
                               ts_ms=1234)
    header, decoded = frames.decode_frame(data)
    assert np.array_equal(decoded, raster)
    assert header.seq == 9 and header.ts_ms == 1234
    assert header.encoding == frames.ENCODING_RAW


def test_long_runs_chunk_at_255():
    raster = solid(64, 16, (3, 5, 7))  # 1024 identical pixels
    payload = frames.rle_encode(raster)
    assert len(payload) == 4 * ((1024 + 254) // 255)
    assert np.array_equal(frames.rle_decode(payload, 16, 64), raster)


def test_truncated_stream_rejected():
    raster = solid(4, 4, (1, 2, 3))
    data = frames.encode_frame(raster, seq=1)
    with pytest.raises(frames.TruncatedFrame):
        frames.decode_frame(data[:10])
    with pytest.raises(frames.TruncatedFrame):
        frames.decode_frame(data[:-2])


def test_bad_magic_rejected():
    raster = solid(4, 4, (1, 2, 3))
    data = bytearray(frames.encode_frame(raster, seq=1))
    data[:4] = b"NOPE"
    with pytest.raises(frames.BadMagic):
        frames.decode_frame(bytes(data))


def test_unknown_encoding_rejected():
    raster = solid(4, 4, (1, 2, 3))
    with pytest.raises(frames.UnknownEncoding):
        frames.encode_frame(raster, seq=1, encoding=7)
    data = bytearray(frames.encode_frame(raster, seq=1))
    data[20] = 9
    with pytest.raises(frames.UnknownEncoding):
        frames.decode_frame(bytes(data))


@settings(max_examples=150, deadline=None)
@given(
    raster=st.tuples(st.integers(1, 24), st.integers(1, 24)).flatmap(
        lambda hw: arrays(np.uint8, (hw[0], hw[1], 3))),
    encoding=st.sampled_from([frames.ENCODING_RAW, frames.ENCODING_RLE]),
    seq=st.integers(0, 2**32 - 1),
)
def test_roundtrip_property(raster, encoding, seq):
    header, decoded = frames.decode_frame(
        frames.encode_frame(raster, seq=seq, encoding=encoding))
    assert header.seq == seq
    assert np.array_equal(decoded, raster)


# --- pacing ------------------------------------------------------------------

def test_rate_cap_30fps():
    clock = VirtualClock()
    sent = []
    pacer = frames.FramePacer(clock, target_fps=30.0, send=sent.append)
    for i in range(120):
        pacer.submit(bytes([i]))
        pacer.tick()
        clock.advance_by(1000.0 / 120.0)  # rendered at 120 fps for one second
    assert len(sent) <= 30
    assert sent == sorted(sent, key=lambda b: b[0])
    assert pacer.sent + pacer.dropped + (1 if pacer._pending else 0) == 120


def test_stall_then_release_sends_newest():
    clock = VirtualClock()
    sent = []
    congested = [True]
    pacer = frames.FramePacer(clock, target_fps=30.0, send=sent.append,
                              ready=lambda: not congested[0])
    for i in range(10):
        pacer.submit(f"frame-{i}".encode())
        pacer.tick()
        clock.advance_by(100.0)
    assert sent == []
    congested[0] = False
    pacer.tick()
    assert sent == [b"frame-9"]


def test_no_backpressure_sends_everything_under_cap():
    clock = VirtualClock()
    sent = []
    pacer = frames.FramePacer(clock, target_fps=30.0, send=sent.append)
    for i in range(10):  # rendered at 10 fps, cap at 30: all go out
        pacer.submit(bytes([i]))
        pacer.tick()
        clock.advance_by(100.0)
    assert len(sent) == 10


# --- rendering ---------------------------------------------------------------

def test_empty_world_is_sky_and_ground_only():
    img = Renderer().render(WorldView(), 64, 64)
    assert img.shape == (64, 64, 3)
    assert len(np.unique(img.reshape(-1, 3), axis=0)) <= 3


def test_render_is_deterministic():
    view = WorldView(
        body=BodyPose(x=1.0, z=0.9, pitch=0.1, heading=0.0,
                      legs=(((1.0, 0.9), (0.9, 0.0)), ((1.0, 0.9), (1.15, 0.0)))),
        coins=((2.0, 0.5), (3.0, 0.5)),
        assist_fraction=0.6,
        camera_x=1.0,
    )
    r = Renderer()
    a = r.render(view, 320, 240)
    b = r.render(view, 320, 240)
    assert np.array_equal(a, b)


def test_assist_arrow_appears_only_with_positive_fraction():
    body = BodyPose(x=0.0, z=0.9, pitch=0.0, heading=0.0)
    r = Renderer()
    with_arrow = r.render(WorldView(body=body, assist_fraction=1.0), 128, 128)
    without = r.render(WorldView(body=body, assist_fraction=0.0), 128, 128)
    diff = np.any(with_arrow != without, axis=2)
    assert diff.sum() > 0
    rows, cols = np.nonzero(diff)
    assert rows.max() < 128 * 0.78  # the arrow lives above the ground line
