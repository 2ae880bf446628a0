"""Relayed-stream wire format shared by the relay, edge, and clients.

One session rides one byte stream; each message is framed as::

    u32 big-endian length   (covers lane byte + payload)
    u8  lane                (0 = control, 1 = media, 2 = signaling control)
    payload bytes

Media-lane payloads carry one extra leading kind byte (0 = frame bytes,
1 = envelope JSON) so lossy telemetry can share the lane with frames.
Browser clients use the same lane-byte convention per WebSocket binary
message; the socket's own message boundary replaces the length prefix.
"""

from __future__ import annotations

MAX_FRAME = 16 * 1024 * 1024

MEDIA_KIND_FRAME = 0
MEDIA_KIND_ENVELOPE = 1


class FramingError(Exception):
    """Stream violates the length-prefixed message format."""


def frame_message(lane: int, payload: bytes) -> bytes:
    if not 0 <= lane <= 255:
        raise FramingError(f"lane {lane} out of range")
    body_len = 1 + len(payload)
    if body_len > MAX_FRAME:
        raise FramingError(f"message of {body_len} bytes exceeds MAX_FRAME")
    return body_len.to_bytes(4, "big") + bytes([lane]) + payload


def tag_media(kind: int, payload: bytes) -> bytes:
    return bytes([kind]) + payload


def untag_media(payload: bytes) -> tuple[int, bytes]:
    if not payload:
        raise FramingError("empty media payload")
    return payload[0], payload[1:]


class StreamDeframer:
    """Incremental parser for the length-prefixed stream."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[tuple[int, bytes]]:
        """Absorb stream bytes; return complete (lane, payload) messages."""
        self._buf.extend(data)
        out: list[tuple[int, bytes]] = []
        while True:
            if len(self._buf) < 4:
                return out
            body_len = int.from_bytes(self._buf[:4], "big")
            if body_len < 1 or body_len > MAX_FRAME:
                raise FramingError(f"bad frame length {body_len}")
            if len(self._buf) < 4 + body_len:
                return out
            lane = self._buf[4]
            payload = bytes(self._buf[5:4 + body_len])
            del self._buf[:4 + body_len]
            out.append((lane, payload))
