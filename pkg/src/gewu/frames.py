"""Binary frame wire format, run-length codec, and send pacing.

Header layout, all integers big-endian::

    0   4  magic "GWFR"
    4   4  seq          strictly increasing among sent frames
    8   8  ts_ms
    16  2  width
    18  2  height
    20  1  encoding     0 = raw RGB8, 1 = run-length RGB8
    21  4  payload_len

Run-length payloads are records of ``[count u8 >= 1][r][g][b]`` over the
row-major pixel stream; runs may cross row boundaries and are chunked at
255.  Both encodings round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

MAGIC = b"GWFR"
ENCODING_RAW = 0
ENCODING_RLE = 1

_HEADER = struct.Struct(">4sIQHHBI")
HEADER_SIZE = _HEADER.size  # 25


class FrameError(Exception):
    pass


class BadMagic(FrameError):
    pass


class TruncatedFrame(FrameError):
    pass


class UnknownEncoding(FrameError):
    pass


@dataclass(frozen=True)
class FrameHeader:
    seq: int
    ts_ms: int
    width: int
    height: int
    encoding: int
    payload_len: int


def _check_raster(raster: np.ndarray) -> np.ndarray:
    raster = np.asarray(raster, dtype=np.uint8)
    if raster.ndim != 3 or raster.shape[2] != 3:
        raise FrameError(f"raster must be (h, w, 3) uint8, got {raster.shape}")
    h, w = raster.shape[:2]
    if h == 0 or w == 0 or h > 0xFFFF or w > 0xFFFF:
        raise FrameError(f"raster dimensions {w}x{h} out of range")
    return raster


def rle_encode(raster: np.ndarray) -> bytes:
    flat = raster.reshape(-1, 3)
    if len(flat) == 0:
        return b""
    diff = np.any(flat[1:] != flat[:-1], axis=1)
    starts = np.concatenate(([0], np.flatnonzero(diff) + 1))
    ends = np.concatenate((starts[1:], [len(flat)]))
    lengths = ends - starts
    colors = flat[starts]
    chunks = (lengths + 254) // 255  # runs longer than 255 split
    out_colors = np.repeat(colors, chunks, axis=0)
    out_counts = np.full(len(out_colors), 255, dtype=np.uint8)
    last_of_run = np.cumsum(chunks) - 1
    out_counts[last_of_run] = (lengths - (chunks - 1) * 255).astype(np.uint8)
    records = np.column_stack([out_counts, out_colors])
    return records.astype(np.uint8).tobytes()


def rle_decode(payload: bytes, width: int, height: int) -> np.ndarray:
    arr = np.frombuffer(payload, dtype=np.uint8)
    if len(arr) % 4 != 0:
        raise TruncatedFrame("run-length payload not a multiple of 4 bytes")
    records = arr.reshape(-1, 4)
    counts = records[:, 0].astype(np.int64)
    if len(counts) and counts.min() < 1:
        raise TruncatedFrame("zero-length run")
    pixels = np.repeat(records[:, 1:], counts, axis=0)
    if len(pixels) != width * height:
        raise TruncatedFrame(
            f"decoded {len(pixels)} pixels for a {width}x{height} frame")
    return pixels.reshape(height, width, 3).copy()


def encode_frame(raster: np.ndarray, seq: int, encoding: int = ENCODING_RLE,
                 ts_ms: int = 0) -> bytes:
    raster = _check_raster(raster)
    h, w = raster.shape[:2]
    if encoding == ENCODING_RAW:
        payload = raster.tobytes()
    elif encoding == ENCODING_RLE:
        payload = rle_encode(raster)
    else:
        raise UnknownEncoding(str(encoding))
    header = _HEADER.pack(MAGIC, seq & 0xFFFFFFFF, ts_ms, w, h, encoding,
                          len(payload))
    return header + payload


def decode_header(data: bytes) -> FrameHeader:
    if len(data) < HEADER_SIZE:
        raise TruncatedFrame(f"{len(data)} bytes < header size {HEADER_SIZE}")
    magic, seq, ts_ms, w, h, encoding, payload_len = _HEADER.unpack(
        data[:HEADER_SIZE])
    if magic != MAGIC:
        raise BadMagic(magic.hex())
    if w == 0 or h == 0:
        raise TruncatedFrame("zero frame dimensions")
    return FrameHeader(seq=seq, ts_ms=ts_ms, width=w, height=h,
                       encoding=encoding, payload_len=payload_len)


def decode_frame(data: bytes) -> tuple[FrameHeader, np.ndarray]:
    header = decode_header(data)
    payload = data[HEADER_SIZE:]
    if len(payload) != header.payload_len:
        raise TruncatedFrame(
            f"payload is {len(payload)} bytes, header says {header.payload_len}")
    if header.encoding == ENCODING_RAW:
        expected = header.width * header.height * 3
        if len(payload) != expected:
            raise TruncatedFrame(f"raw payload {len(payload)} != {expected}")
        raster = np.frombuffer(payload, dtype=np.uint8).reshape(
            header.height, header.width, 3).copy()
    elif header.encoding == ENCODING_RLE:
        raster = rle_decode(payload, header.width, header.height)
    else:
        raise UnknownEncoding(str(header.encoding))
    return header, raster


class FramePacer:
    """Rate cap plus newest-wins dropping under backpressure.

    Rendered frames are submitted as encoded bytes; only the newest
    undelivered frame is retained, and sends happen on ``tick`` no faster
    than the target rate and only while the channel reports ready.
    """

    def __init__(self, clock, target_fps: float, send: Callable[[bytes], None],
                 ready: Callable[[], bool] = lambda: True):
        self._clock = clock
        self._interval = 1000.0 / target_fps
        self._send = send
        self._ready = ready
        self._pending: bytes | None = None
        self._next_at = float("-inf")
        self.sent = 0
        self.dropped = 0

    def submit(self, encoded: bytes) -> None:
        if self._pending is not None:
            self.dropped += 1
        self._pending = encoded

    def tick(self) -> bool:
        """Send the pending frame if the rate cap and channel allow it."""
        if self._pending is None:
            return False
        now = self._clock.now_ms()
        if now < self._next_at or not self._ready():
            return False
        frame, self._pending = self._pending, None
        self._send(frame)
        self.sent += 1
        self._next_at = now + self._interval
        return True
