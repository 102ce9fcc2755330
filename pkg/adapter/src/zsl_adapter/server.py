"""Framed TCP server around a segmentation backend.

One inference at a time (a lock serializes backend calls); concurrent
connections queue on it. Malformed requests get a protocol-error
response rather than a dropped connection where possible.
"""

from __future__ import annotations

import socketserver
import threading
import time

from .backend import StubBackend
from .protocol import ProtocolError, Response, encode_response, read_frame, write_frame

DEFAULT_PORT = 7712


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server = self.server
        while True:
            try:
                payload = read_frame(self.request)
            except (ProtocolError, OSError):
                return
            if payload is None:
                return
            t0 = time.perf_counter()
            try:
                from .protocol import decode_request

                req = decode_request(payload)
                with server.lock:  # type: ignore[attr-defined]
                    resp = server.backend.segment(req)  # type: ignore[attr-defined]
            except ProtocolError as e:
                resp = Response(image_id=-1, masks=[], warning=f"protocol_error: {e}")
            resp.server_time_ms = int((time.perf_counter() - t0) * 1000)
            try:
                write_frame(self.request, encode_response(resp))
            except OSError:
                return


class AdapterServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT, backend=None):
        self.backend = backend or StubBackend()
        self.lock = threading.Lock()
        super().__init__((host, port), _Handler)

    @property
    def endpoint(self):
        return self.server_address[0], self.server_address[1]


def serve_background(host: str = "127.0.0.1", port: int = DEFAULT_PORT, backend=None) -> AdapterServer:
    server = AdapterServer(host, port, backend)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
