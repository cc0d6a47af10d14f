"""Oracle sidecar: serves part segmentation and noise prediction over a
newline-delimited JSON protocol, with an analytic stub mode that needs
no model weights."""

from .backends import OTHERS_CODE, StubBackend, make_backend
from .config import ConfigError, ServiceConfig
from .server import RequestHandler, TcpService, serve, serve_stream
from .wire import (
    canonical_json,
    decode_array,
    decode_label_png,
    decode_rgb_png,
    encode_array,
    encode_png,
)

__all__ = [
    "OTHERS_CODE",
    "ConfigError",
    "RequestHandler",
    "ServiceConfig",
    "StubBackend",
    "TcpService",
    "canonical_json",
    "decode_array",
    "decode_label_png",
    "decode_rgb_png",
    "encode_array",
    "encode_png",
    "make_backend",
    "serve",
    "serve_stream",
]
