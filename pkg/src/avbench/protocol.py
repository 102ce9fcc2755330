"""Segmentation service wire protocol.

Frames are a 4-byte big-endian payload length followed by a UTF-8 JSON
object; binary payloads travel base64-encoded. Canonical encoding sorts
keys and strips whitespace so identical messages are byte-identical,
which the golden-fixture tests rely on.

proto_version is 1; decoders reject anything else.
"""

from __future__ import annotations

import base64
import json
import socket
import struct
from dataclasses import dataclass, field

import numpy as np

PROTO_VERSION = 1
MAX_FRAME = 64 * 1024 * 1024


class ProtocolError(Exception):
    """Malformed frame or message content."""


def rle_encode(mask: np.ndarray, width: int, height: int) -> list[int]:
    """Run lengths over the row-major mask, alternating and starting with zeros.

    The first run counts zeros and may be 0 when the mask starts with ones.
    """
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size != width * height:
        raise ProtocolError(f"mask has {flat.size} bits, expected {width * height}")
    runs: list[int] = []
    changes = np.nonzero(np.diff(flat))[0] + 1
    edges = [0, *changes.tolist(), flat.size]
    if flat.size and flat[0]:
        runs.append(0)
    for a, b in zip(edges, edges[1:]):
        runs.append(b - a)
    if not runs:
        runs = [0]
    return runs


def rle_decode(runs: list[int], width: int, height: int) -> np.ndarray:
    total = sum(runs)
    if total != width * height:
        raise ProtocolError(f"run lengths sum to {total}, expected {width * height}")
    if any(r < 0 for r in runs):
        raise ProtocolError("negative run length")
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    val = False
    for r in runs:
        if val:
            flat[pos : pos + r] = True
        pos += r
        val = not val
    return flat.reshape(height, width)


@dataclass
class SegmentationRequest:
    image_id: int
    width: int
    height: int
    label_payload: bytes  # label codes (oracle mode) or raw RGB8 (model mode)
    prompt: str
    box_threshold: float = 0.0
    text_threshold: float = 0.0
    payload_kind: str = "labels"  # "labels" | "rgb"

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        for name in ("box_threshold", "text_threshold"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0,1]")


@dataclass
class InstanceMask:
    cls: str
    confidence: float
    instance_id: int
    rle: list[int]

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must be in [0,1]")


@dataclass
class SegmentationResponse:
    image_id: int
    masks: list[InstanceMask] = field(default_factory=list)
    server_time_ms: int = 0
    warning: str | None = None
    backend: str | None = None


def encode_request(req: SegmentationRequest) -> bytes:
    obj = {
        "proto_version": PROTO_VERSION,
        "kind": "segmentation_request",
        "image_id": req.image_id,
        "width": req.width,
        "height": req.height,
        "payload_kind": req.payload_kind,
        "label_payload": base64.b64encode(req.label_payload).decode("ascii"),
        "prompt": req.prompt,
        "box_threshold": req.box_threshold,
        "text_threshold": req.text_threshold,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_response(resp: SegmentationResponse) -> bytes:
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


def _load_obj(payload: bytes, expected_kind: str) -> dict:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"payload is not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("payload is not a JSON object")
    if obj.get("proto_version") != PROTO_VERSION:
        raise ProtocolError(f"unsupported proto_version {obj.get('proto_version')!r}")
    if obj.get("kind") != expected_kind:
        raise ProtocolError(f"expected {expected_kind}, got {obj.get('kind')!r}")
    return obj


def decode_request(payload: bytes) -> SegmentationRequest:
    obj = _load_obj(payload, "segmentation_request")
    try:
        return SegmentationRequest(
            image_id=int(obj["image_id"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
            label_payload=base64.b64decode(obj["label_payload"]),
            prompt=str(obj["prompt"]),
            box_threshold=float(obj["box_threshold"]),
            text_threshold=float(obj["text_threshold"]),
            payload_kind=str(obj.get("payload_kind", "labels")),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise ProtocolError(f"bad request fields: {e}") from None


def decode_response(payload: bytes) -> SegmentationResponse:
    obj = _load_obj(payload, "segmentation_response")
    try:
        masks = [
            InstanceMask(
                cls=str(m["class"]),
                confidence=float(m["confidence"]),
                instance_id=int(m["instance_id"]),
                rle=[int(r) for r in m["rle"]],
            )
            for m in obj["masks"]
        ]
        return SegmentationResponse(
            image_id=int(obj["image_id"]),
            masks=masks,
            server_time_ms=int(obj["server_time_ms"]),
            warning=obj.get("warning"),
            backend=obj.get("backend"),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise ProtocolError(f"bad response fields: {e}") from None


def canonical_response_bytes(resp: SegmentationResponse) -> bytes:
    """Encoding with server timing zeroed, for equality comparisons."""
    clone = SegmentationResponse(
        image_id=resp.image_id,
        masks=resp.masks,
        server_time_ms=0,
        warning=resp.warning,
        backend=resp.backend,
    )
    return encode_response(clone)


def write_frame(sock: socket.socket, payload: bytes) -> None:
    if len(payload) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds limit")
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def read_frame(sock: socket.socket) -> bytes:
    header = _read_exact(sock, 4)
    if header is None:
        raise ConnectionError("connection closed before frame header")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise ProtocolError(f"declared frame of {length} bytes exceeds limit")
    payload = _read_exact(sock, length)
    if payload is None:
        raise ProtocolError(f"connection closed mid-frame ({length} bytes expected)")
    return payload


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise ProtocolError(f"connection closed after {len(buf)} of {n} bytes")
            return None
        buf += chunk
    return buf


def frame_bytes(payload: bytes) -> bytes:
    """Length-prefixed frame as raw bytes (used for golden fixtures)."""
    if len(payload) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds limit")
    return struct.pack(">I", len(payload)) + payload


def unframe_bytes(data: bytes) -> bytes:
    if len(data) < 4:
        raise ProtocolError("frame shorter than header")
    (length,) = struct.unpack(">I", data[:4])
    if len(data) != 4 + length:
        raise ProtocolError(f"frame length {len(data) - 4} does not match header {length}")
    return data[4:]
