"""TCP wrapper around the segmentation oracle, plus the blocking client.

One frame in, one frame out per request; requests on a connection are
handled sequentially while connections are served concurrently. Transport
failures raise distinct exception types so the pipeline can tell "server
unreachable" apart from "segmenter found nothing".
"""

from __future__ import annotations

import socket
import socketserver
import threading

from .oracle import OracleNoiseConfig, oracle_segment
from .protocol import (
    ProtocolError,
    SegmentationRequest,
    SegmentationResponse,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
    read_frame,
    write_frame,
)

DEFAULT_PORT = 7711


class SegmentationConnectError(Exception):
    """Server unreachable (refused, closed, unresolvable)."""


class SegmentationTimeout(Exception):
    """No response within the client timeout."""


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        noise = self.server.noise  # type: ignore[attr-defined]
        while True:
            try:
                payload = read_frame(self.request)
            except (ConnectionError, OSError):
                return
            except ProtocolError:
                return
            try:
                req = decode_request(payload)
                resp = oracle_segment(req, noise)
            except ProtocolError as e:
                resp = SegmentationResponse(image_id=-1, masks=[], warning=f"protocol_error: {e}")
            try:
                write_frame(self.request, encode_response(resp))
            except OSError:
                return


class OracleServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 noise: OracleNoiseConfig | None = None):
        self.noise = noise or OracleNoiseConfig()
        super().__init__((host, port), _Handler)

    @property
    def endpoint(self) -> tuple[str, int]:
        return self.server_address[0], self.server_address[1]


def serve_oracle(host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 noise: OracleNoiseConfig | None = None) -> OracleServer:
    """Start the oracle server on a background thread; returns the server handle."""
    server = OracleServer(host, port, noise)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


class SegmentationClient:
    """Blocking client holding one connection to a segmentation server."""

    def __init__(self, host: str, port: int, timeout_s: float = 10.0):
        self.host = host
        self.port = port
        self.timeout_s = timeout_s
        self._sock: socket.socket | None = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout_s)
            except socket.timeout as e:
                raise SegmentationTimeout(f"connect to {self.host}:{self.port} timed out") from e
            except OSError as e:
                raise SegmentationConnectError(f"cannot reach {self.host}:{self.port}: {e}") from e
        return self._sock

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, req: SegmentationRequest) -> SegmentationResponse:
        sock = self._connect()
        try:
            write_frame(sock, encode_request(req))
            payload = read_frame(sock)
        except socket.timeout as e:
            self.close()
            raise SegmentationTimeout(
                f"no response from {self.host}:{self.port} within {self.timeout_s}s"
            ) from e
        except (ConnectionError, OSError) as e:
            self.close()
            raise SegmentationConnectError(f"connection to {self.host}:{self.port} failed: {e}") from e
        resp = decode_response(payload)
        if resp.image_id != req.image_id:
            raise ProtocolError(
                f"response image_id {resp.image_id} does not match request {req.image_id}"
            )
        return resp


def request_segmentation(endpoint: tuple[str, int], req: SegmentationRequest,
                         timeout_s: float = 10.0) -> SegmentationResponse:
    """One-shot request/response against `endpoint` = (host, port)."""
    with SegmentationClient(endpoint[0], endpoint[1], timeout_s) as client:
        return client.request(req)
