"""In-process stub oracle used by the test suite.

Implements the wire protocol with analytic semantics:
  segment        foreground = any non-white pixel, labeled others(5)
  predict_noise  exact denoiser for a point mass at a configured target

Run as a script to regenerate the protocol fixtures or to serve stdio:

    python3 tests/oracle_stub.py --write-fixtures fixtures/protocol
    python3 tests/oracle_stub.py --stdio [--target-color R,G,B]
"""
from __future__ import annotations

import base64
import io
import json
import math
import socket
import socketserver
import sys
import threading

import numpy as np
from PIL import Image

from parttex.oracle import canonical_json, encode_array, encode_png

OTHERS_CODE = 5


def stub_segment_labels(image_u8: np.ndarray) -> np.ndarray:
    foreground = (image_u8 != 255).any(axis=2)
    return np.where(foreground, OTHERS_CODE, 0).astype(np.uint8)


def stub_predict_noise(x_t: np.ndarray, t: float,
                       target: np.ndarray) -> np.ndarray:
    alpha = math.cos(math.pi * t / 2.0)
    sigma = math.sin(math.pi * t / 2.0)
    return (x_t - alpha * target) / sigma


class StubHandler:
    """Protocol logic shared by the TCP and stdio frontends."""

    def __init__(self, target_color=(1.0, 0.0, 0.0), target_image=None):
        self.target_color = np.asarray(target_color, dtype=np.float64)
        self.target_image = target_image

    def _target_for(self, shape):
        if self.target_image is not None:
            if self.target_image.shape != shape:
                raise ValueError(
                    f"stub target {self.target_image.shape} vs image {shape}")
            return self.target_image
        return np.broadcast_to(self.target_color, shape)

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
            return {"id": rid, "status": "error", "error": str(exc)}
        return {"id": rid, "status": "ok", "payload": payload}

    def _dispatch(self, request: dict) -> dict:
        op = request.get("op")
        if op == "ping":
            return {"pong": True}
        if op == "segment":
            png = base64.b64decode(request["image_png"])
            with Image.open(io.BytesIO(png)) as img:
                arr = np.asarray(img.convert("RGB"))
            return {"label_map_png": encode_png(stub_segment_labels(arr))}
        if op == "predict_noise":
            spec = request["image"]
            raw = base64.b64decode(spec["data"])
            x_t = np.frombuffer(raw, dtype="<f4").reshape(
                spec["shape"]).astype(np.float64)
            t = float(request["t"])
            if not 0.0 < t < 1.0:
                raise ValueError(f"t out of range: {t}")
            noise = stub_predict_noise(x_t, t, self._target_for(x_t.shape))
            return {"noise": encode_array(noise)}
        raise ValueError(f"unknown op: {op!r}")


def serve_stream(handler: StubHandler, rfile, wfile) -> None:
    for line in rfile:
        if not line.strip():
            continue
        response = handler.handle_line(line)
        wfile.write((canonical_json(response) + "\n").encode("utf-8"))
        wfile.flush()


class StubServer:
    """Threaded TCP stub bound to an ephemeral localhost port."""

    def __init__(self, **handler_kwargs):
        handler = StubHandler(**handler_kwargs)

        class _Conn(socketserver.StreamRequestHandler):
            def handle(self):
                serve_stream(handler, self.rfile, self.wfile)

        self._server = socketserver.ThreadingTCPServer(
            ("127.0.0.1", 0), _Conn)
        self._server.daemon_threads = True
        self.port = self._server.server_address[1]
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def close(self):
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _write_fixtures(out_dir: str) -> None:
    from pathlib import Path

    from parttex.oracle import OracleClient, RecordingEndpoint, SocketEndpoint
    from parttex.sds import Conditions

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    transcript = out / "conformance.ndjson"
    with StubServer() as server:
        endpoint = RecordingEndpoint(
            SocketEndpoint("127.0.0.1", server.port), transcript)
        with OracleClient(endpoint) as client:
            client.ping()
            image = np.full((4, 4, 3), 255, dtype=np.uint8)
            image[1:3, 1:3] = (40, 80, 120)
            client.segment(image, front=True, prompts=("a photo of a person",))
            x_t = np.full((2, 2, 3), 0.25)
            conditions = Conditions(
                label_map=np.array([[0, 5], [5, 5]], dtype=np.uint8),
                front_image=None, prompts=("a photo of a person",))
            client.predict_noise(x_t, 0.5, conditions=conditions,
                                 conditional=True)
            client.predict_noise(x_t, 0.5, conditions=conditions,
                                 conditional=False)

    handler = StubHandler()
    errors = []
    bad_op = {"id": 9, "op": "frobnicate"}
    errors.append({"request_raw": canonical_json(bad_op),
                   "response": handler.handle_line(
                       canonical_json(bad_op).encode("utf-8"))})
    errors.append({"request_raw": "this is not json",
                   "response": handler.handle_line(b"this is not json")})
    bad_t = {"conditional": True,
             "conditions": {"front_image": None, "label_map_png": None,
                            "prompts": []},
             "id": 10, "image": encode_array(np.zeros((1, 1, 3))),
             "op": "predict_noise", "t": 1.5}
    errors.append({"request_raw": canonical_json(bad_t),
                   "response": handler.handle_line(
                       canonical_json(bad_t).encode("utf-8"))})
    with open(out / "errors.ndjson", "w", encoding="utf-8") as fh:
        for entry in errors:
            fh.write(canonical_json(entry) + "\n")
    print(f"wrote {transcript} and {out / 'errors.ndjson'}")


if __name__ == "__main__":
    if "--write-fixtures" in sys.argv:
        _write_fixtures(sys.argv[sys.argv.index("--write-fixtures") + 1])
    elif "--stdio" in sys.argv:
        kwargs = {}
        if "--target-color" in sys.argv:
            rgb = sys.argv[sys.argv.index("--target-color") + 1]
            kwargs["target_color"] = tuple(float(c) for c in rgb.split(","))
        serve_stream(StubHandler(**kwargs), sys.stdin.buffer,
                     sys.stdout.buffer)
    else:
        raise SystemExit(__doc__)
