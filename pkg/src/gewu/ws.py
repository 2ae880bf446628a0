"""Minimal server-side WebSocket support for the relay's browser bridge.

Covers the RFC 6455 subset a same-origin desk deployment needs: the
upgrade handshake, masked client frames, binary/text messages with
fragmentation, ping/pong, and close.  No extensions, no TLS.
"""

from __future__ import annotations

import base64
import hashlib
import struct

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WsError(Exception):
    pass


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def parse_handshake(request: bytes) -> dict[str, str]:
    """Parse an upgrade request; returns lowercase header map."""
    try:
        head = request.decode("latin-1")
    except UnicodeDecodeError as exc:
        raise WsError(f"undecodable handshake: {exc}") from None
    lines = head.split("\r\n")
    if not lines or not lines[0].startswith("GET "):
        raise WsError("handshake is not a GET request")
    headers: dict[str, str] = {}
    for line in lines[1:]:
        if ":" in line:
            name, value = line.split(":", 1)
            headers[name.strip().lower()] = value.strip()
    if headers.get("upgrade", "").lower() != "websocket":
        raise WsError("missing Upgrade: websocket")
    if "sec-websocket-key" not in headers:
        raise WsError("missing Sec-WebSocket-Key")
    return headers


def handshake_response(headers: dict[str, str]) -> bytes:
    key = accept_key(headers["sec-websocket-key"])
    return (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {key}\r\n"
        "\r\n"
    ).encode("latin-1")


def encode_frame(opcode: int, payload: bytes, fin: bool = True,
                 mask: bytes | None = None) -> bytes:
    head = bytearray([(0x80 if fin else 0x00) | opcode])
    length = len(payload)
    mask_bit = 0x80 if mask else 0x00
    if length < 126:
        head.append(mask_bit | length)
    elif length < 1 << 16:
        head.append(mask_bit | 126)
        head += struct.pack(">H", length)
    else:
        head.append(mask_bit | 127)
        head += struct.pack(">Q", length)
    if mask:
        head += mask
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return bytes(head) + payload


class FrameDecoder:
    """Incremental frame parser that reassembles fragmented messages."""

    def __init__(self, require_mask: bool = True):
        self._buf = bytearray()
        self._require_mask = require_mask
        self._fragments: bytearray | None = None
        self._fragment_opcode = 0

    def feed(self, data: bytes) -> list[tuple[int, bytes]]:
        """Returns complete (opcode, payload) messages."""
        self._buf.extend(data)
        out: list[tuple[int, bytes]] = []
        while True:
            frame = self._try_frame()
            if frame is None:
                return out
            fin, opcode, payload = frame
            if opcode in (OP_CLOSE, OP_PING, OP_PONG):
                out.append((opcode, payload))  # control frames never fragment
                continue
            if opcode == OP_CONT:
                if self._fragments is None:
                    raise WsError("continuation without a started message")
                self._fragments.extend(payload)
                if fin:
                    out.append((self._fragment_opcode, bytes(self._fragments)))
                    self._fragments = None
            else:
                if fin:
                    out.append((opcode, payload))
                else:
                    self._fragments = bytearray(payload)
                    self._fragment_opcode = opcode

    def _try_frame(self) -> tuple[bool, int, bytes] | None:
        buf = self._buf
        if len(buf) < 2:
            return None
        fin = bool(buf[0] & 0x80)
        opcode = buf[0] & 0x0F
        masked = bool(buf[1] & 0x80)
        length = buf[1] & 0x7F
        offset = 2
        if length == 126:
            if len(buf) < 4:
                return None
            length = struct.unpack(">H", buf[2:4])[0]
            offset = 4
        elif length == 127:
            if len(buf) < 10:
                return None
            length = struct.unpack(">Q", buf[2:10])[0]
            offset = 10
        if self._require_mask and not masked:
            raise WsError("client frames must be masked")
        mask = b""
        if masked:
            if len(buf) < offset + 4:
                return None
            mask = bytes(buf[offset:offset + 4])
            offset += 4
        if len(buf) < offset + length:
            return None
        payload = bytes(buf[offset:offset + length])
        del buf[:offset + length]
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return fin, opcode, payload
