"""Protocol dispatch and the TCP / stdio frontends.

One JSON request per line, one JSON response per line, ids echoed.
A malformed line produces an error response with id 0 and the
connection stays open; requests on one connection are handled strictly
in order, while separate connections get separate threads.
"""
from __future__ import annotations

import base64
import io
import json
import logging
import socketserver
import sys
import threading

import numpy as np
from PIL import Image

from .backends import make_backend
from .config import ServiceConfig
from .wire import canonical_json, decode_array, encode_array, encode_png

log = logging.getLogger("oracle_service")

MAX_LABEL_CODE = 5


class RequestHandler:
    """Turns one raw request line into one response dict."""

    def __init__(self, backend):
        self.backend = backend

    def handle_line(self, raw: bytes) -> dict:
        try:
            request = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return {"id": 0, "status": "error",
                    "error": f"malformed request: {exc}"}
        rid = request.get("id") if isinstance(request, dict) else None
        if not isinstance(rid, int):
            return {"id": 0, "status": "error",
                    "error": "request lacks an integer id"}
        try:
            payload = self._dispatch(request)
        except Exception as exc:
            log.warning("request %d failed: %s", rid, exc)
            return {"id": rid, "status": "error", "error": str(exc)}
        return {"id": rid, "status": "ok", "payload": payload}

    def _dispatch(self, request: dict) -> dict:
        op = request.get("op")
        if op == "ping":
            return {"pong": True}
        if op == "segment":
            png = base64.b64decode(request["image_png"])
            with Image.open(io.BytesIO(png)) as img:
                image = np.asarray(img.convert("RGB"))
            labels = np.asarray(self.backend.segment(
                image, bool(request.get("front", False)),
                request.get("view"), tuple(request.get("prompts", ()))))
            if labels.shape != image.shape[:2] or labels.dtype != np.uint8 \
                    or labels.max(initial=0) > MAX_LABEL_CODE:
                raise ValueError(
                    "backend produced an invalid label map")
            return {"label_map_png": encode_png(labels)}
        if op == "predict_noise":
            x_t = decode_array(request["image"])
            t = float(request["t"])
            if not 0.0 < t < 1.0:
                raise ValueError(f"t out of range: {t}")
            noise = np.asarray(self.backend.predict_noise(
                x_t, t, request.get("conditions") or {},
                bool(request.get("conditional", True))))
            if noise.shape != x_t.shape:
                raise ValueError(
                    f"backend noise shape {noise.shape} does not match "
                    f"image {x_t.shape}")
            return {"noise": encode_array(noise)}
        raise ValueError(f"unknown op: {op!r}")


def serve_stream(handler: RequestHandler, rfile, wfile) -> None:
    """Serial request loop over a pair of byte streams."""
    for line in rfile:
        if not line.strip():
            continue
        response = handler.handle_line(line)
        wfile.write((canonical_json(response) + "\n").encode("utf-8"))
        wfile.flush()


class TcpService:
    """Threaded TCP frontend; one serial handler loop per connection."""

    def __init__(self, config: ServiceConfig):
        handler = RequestHandler(make_backend(config))

        class _Conn(socketserver.StreamRequestHandler):
            def handle(self):
                serve_stream(handler, self.rfile, self.wfile)

        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((config.host, config.port or 0), _Conn)
        self.port = self._server.server_address[1]
        self._thread: threading.Thread | None = None

    def start(self) -> "TcpService":
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        log.info("listening on port %d", self.port)
        self._server.serve_forever()

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted (stdio or TCP per config)."""
    if config.stdio:
        handler = RequestHandler(make_backend(config))
        serve_stream(handler, sys.stdin.buffer, sys.stdout.buffer)
    else:
        TcpService(config).serve_forever()
