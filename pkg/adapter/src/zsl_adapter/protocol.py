"""Wire protocol of the segmentation service, implemented standalone.

Frames: 4-byte big-endian payload length, then UTF-8 JSON with sorted
keys and no whitespace. Binary payloads are base64 inside the JSON.
This module deliberately shares no code with the benchmark client; byte
compatibility is guarded by the shared golden fixtures.
"""

from __future__ import annotations

import base64
import json
import socket
import struct
from dataclasses import dataclass, field

PROTO_VERSION = 1
MAX_FRAME = 64 * 1024 * 1024


class ProtocolError(Exception):
    pass


@dataclass
class Request:
    image_id: int
    width: int
    height: int
    payload: bytes
    payload_kind: str
    prompt: str
    box_threshold: float
    text_threshold: float


@dataclass
class Mask:
    cls: str
    confidence: float
    instance_id: int
    rle: list[int]


@dataclass
class Response:
    image_id: int
    masks: list[Mask] = field(default_factory=list)
    server_time_ms: int = 0
    warning: str | None = None
    backend: str | None = None


def decode_request(payload: bytes) -> Request:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"request is not valid JSON: {e}") from None
    if obj.get("proto_version") != PROTO_VERSION:
        raise ProtocolError(f"unsupported proto_version {obj.get('proto_version')!r}")
    if obj.get("kind") != "segmentation_request":
        raise ProtocolError(f"unexpected kind {obj.get('kind')!r}")
    try:
        return Request(
            image_id=int(obj["image_id"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
            payload=base64.b64decode(obj["label_payload"]),
            payload_kind=str(obj.get("payload_kind", "labels")),
            prompt=str(obj["prompt"]),
            box_threshold=float(obj["box_threshold"]),
            text_threshold=float(obj["text_threshold"]),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise ProtocolError(f"bad request fields: {e}") from None


def encode_request(req: Request) -> bytes:
    obj = {
        "proto_version": PROTO_VERSION,
        "kind": "segmentation_request",
        "image_id": req.image_id,
        "width": req.width,
        "height": req.height,
        "payload_kind": req.payload_kind,
        "label_payload": base64.b64encode(req.payload).decode("ascii"),
        "prompt": req.prompt,
        "box_threshold": req.box_threshold,
        "text_threshold": req.text_threshold,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_response(resp: Response) -> bytes:
    obj = {
        "proto_version": PROTO_VERSION,
        "kind": "segmentation_response",
        "image_id": resp.image_id,
        "server_time_ms": resp.server_time_ms,
        "masks": [
            {
                "class": m.cls,
                "confidence": m.confidence,
                "instance_id": m.instance_id,
                "rle": m.rle,
            }
            for m in resp.masks
        ],
    }
    if resp.warning is not None:
        obj["warning"] = resp.warning
    if resp.backend is not None:
        obj["backend"] = resp.backend
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_response(payload: bytes) -> Response:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"response is not valid JSON: {e}") from None
    if obj.get("kind") != "segmentation_response":
        raise ProtocolError(f"unexpected kind {obj.get('kind')!r}")
    masks = [
        Mask(str(m["class"]), float(m["confidence"]), int(m["instance_id"]),
             [int(x) for x in m["rle"]])
        for m in obj.get("masks", [])
    ]
    return Response(
        image_id=int(obj["image_id"]),
        masks=masks,
        server_time_ms=int(obj.get("server_time_ms", 0)),
        warning=obj.get("warning"),
        backend=obj.get("backend"),
    )


def rle_encode(mask) -> list[int]:
    """Alternating run lengths over the flat mask, first run counts zeros."""
    runs: list[int] = []
    val = False
    count = 0
    for bit in mask.ravel().tolist():
        bit = bool(bit)
        if bit == val:
            count += 1
        else:
            runs.append(count)
            val = bit
            count = 1
    runs.append(count)
    if not runs:
        runs = [0]
    return runs


def read_frame(sock: socket.socket) -> bytes | None:
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    payload = _read_exact(sock, length)
    if payload is None:
        raise ProtocolError("connection closed mid-frame")
    return payload


def write_frame(sock: socket.socket, payload: bytes) -> None:
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise ProtocolError("connection closed mid-read")
            return None
        buf += chunk
    return buf
