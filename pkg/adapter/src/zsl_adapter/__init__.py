"""Reference segmentation server for the avbench wire protocol: an
open-vocabulary detector feeding a promptable segmenter, with a stub
fallback that keeps protocol conformance testable without model weights."""

__version__ = "0.1.0"

from .backend import BackendConfig, StubBackend, load_backend
from .server import AdapterServer, serve_background

__all__ = ["AdapterServer", "BackendConfig", "StubBackend", "load_backend", "serve_background"]
