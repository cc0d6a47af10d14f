"""Wire-protocol client for the neural oracle service.

All neural inference (2D part segmentation, diffusion noise prediction)
lives behind this boundary. The protocol is newline-delimited JSON over a
TCP socket or a child process's stdio; binary payloads ride inside the
JSON as base64. Sessions can be recorded to a transcript file and later
replayed bit-identically without any service running.

Wire format (one JSON object per line, UTF-8, "\\n" terminated):

    request:  {"id": <int>, "op": "ping"}
              {"id": <int>, "op": "segment", "image_png": <b64>,
               "front": <bool>, "view": <viewpoint json or null>,
               "prompts": [<str>...]}
              {"id": <int>, "op": "predict_noise", "image": <array>,
               "t": <float>, "conditional": <bool>,
               "conditions": {"label_map_png": <b64 or null>,
                              "front_image": <array or null>,
                              "prompts": [<str>...]}}
    response: {"id": <int>, "status": "ok", "payload": {...}}
              {"id": <int>, "status": "error", "error": <str>}

    array:    {"dtype": "f4", "shape": [...], "data": <b64 of raw
               little-endian float32, C order>}

Ids start at 1 and increase by 1 per request; the response echoes the id.
JSON is canonical: sorted keys, no whitespace. The transcript stores one
{"request": ..., "response": ...} pair per line; replay looks requests up
by the SHA-256 of their canonical JSON with the id removed.
"""
from __future__ import annotations

import base64
import hashlib
import io
import json
import socket
import subprocess
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (ContractError, OracleError, OracleProtocolError,
                     OracleTimeoutError, TranscriptMissError)
from .validation import MAX_LABEL_CODE

DEFAULT_TIMEOUT = 120.0
PROTOCOL_OPS = ("ping", "segment", "predict_noise")


# --- canonical encoding ------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def request_hash(request: dict) -> str:
    """SHA-256 of the canonical request with the id stripped."""
    scrubbed = {k: v for k, v in request.items() if k != "id"}
    return hashlib.sha256(canonical_json(scrubbed).encode("utf-8")).hexdigest()


def encode_array(arr) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    data = arr.astype("<f4").tobytes(order="C")
    return {
        "dtype": "f4",
        "shape": list(arr.shape),
        "data": base64.b64encode(data).decode("ascii"),
    }


def decode_array(obj) -> np.ndarray:
    if not isinstance(obj, dict) or obj.get("dtype") != "f4":
        raise OracleProtocolError(f"bad array payload: {obj!r:.80}")
    shape = tuple(int(s) for s in obj["shape"])
    raw = base64.b64decode(obj["data"])
    count = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * count:
        raise OracleProtocolError(
            f"array payload is {len(raw)} bytes but shape {shape} needs "
            f"{4 * count}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def encode_png(image) -> str:
    """uint8 image (H,W) or (H,W,3) to base64 PNG."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise ContractError("PNG payloads must be uint8")
    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_label_png(b64: str) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(base64.b64decode(b64))) as img:
            arr = np.asarray(img.convert("I"))
    except Exception as exc:
        raise OracleProtocolError(f"undecodable label PNG: {exc}") from exc
    if arr.min() < 0 or arr.max() > MAX_LABEL_CODE:
        raise OracleProtocolError(
            f"label map contains codes outside 0..{MAX_LABEL_CODE}")
    return arr.astype(np.uint8)


# --- endpoints ---------------------------------------------------------------

class SocketEndpoint:
    """Line-oriented JSON over TCP; one in-flight request at a time."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except (OSError, socket.timeout) as exc:
            raise OracleError(f"cannot reach oracle at {host}:{port}: {exc}") from exc
        self._sock.settimeout(timeout)
        self._reader = self._sock.makefile("rb")

    def roundtrip(self, request: dict) -> dict:
        line = canonical_json(request).encode("utf-8") + b"\n"
        try:
            self._sock.sendall(line)
            reply = self._reader.readline()
        except socket.timeout as exc:
            raise OracleTimeoutError(
                f"oracle timed out on request {request.get('id')}") from exc
        except OSError as exc:
            raise OracleError(f"oracle connection failed: {exc}") from exc
        if not reply:
            raise OracleError("oracle closed the connection")
        try:
            return json.loads(reply.decode("utf-8"))
        except ValueError as exc:
            raise OracleProtocolError(f"undecodable response line: {exc}") from exc

    def close(self) -> None:
        try:
            self._reader.close()
        finally:
            self._sock.close()


class StdioEndpoint:
    """Talks the protocol with a child process over its stdin/stdout."""

    def __init__(self, argv: list[str], timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as exc:
            raise OracleError(f"cannot launch oracle {argv!r}: {exc}") from exc

    def roundtrip(self, request: dict) -> dict:
        line = canonical_json(request).encode("utf-8") + b"\n"
        try:
            self._proc.stdin.write(line)
            self._proc.stdin.flush()
            reply = self._proc.stdout.readline()
        except OSError as exc:
            raise OracleError(f"oracle pipe failed: {exc}") from exc
        if not reply:
            raise OracleError("oracle process closed its stdout")
        try:
            return json.loads(reply.decode("utf-8"))
        except ValueError as exc:
            raise OracleProtocolError(f"undecodable response line: {exc}") from exc

    def close(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class ReplayEndpoint:
    """Serves recorded responses by request hash; no service required."""

    def __init__(self, transcript_path):
        self.path = Path(transcript_path)
        self._responses: dict[str, dict] = {}
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    pair = json.loads(line)
                    key = request_hash(pair["request"])
                    self._responses[key] = pair["response"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise OracleProtocolError(
                        f"bad transcript line {lineno} in {self.path}: {exc}"
                    ) from exc

    def roundtrip(self, request: dict) -> dict:
        key = request_hash(request)
        if key not in self._responses:
            raise TranscriptMissError(key)
        response = dict(self._responses[key])
        response["id"] = request.get("id")
        return response

    def close(self) -> None:
        pass


class RecordingEndpoint:
    """Transparent wrapper that appends request/response pairs to a file."""

    def __init__(self, inner, transcript_path):
        self.inner = inner
        self.path = Path(transcript_path)
        self._fh = open(self.path, "w", encoding="utf-8")

    def roundtrip(self, request: dict) -> dict:
        response = self.inner.roundtrip(request)
        self._fh.write(canonical_json(
            {"request": request, "response": response}) + "\n")
        self._fh.flush()
        return response

    def close(self) -> None:
        self._fh.close()
        self.inner.close()


# --- client ------------------------------------------------------------------

class OracleClient:
    """Typed facade over an endpoint: ping / segment / predict_noise.

    Not safe for concurrent use; hand-off between threads is fine.
    """

    def __init__(self, endpoint):
        self.endpoint = endpoint
        self._next_id = 1

    @classmethod
    def tcp(cls, host: str, port: int,
            timeout: float = DEFAULT_TIMEOUT) -> "OracleClient":
        return cls(SocketEndpoint(host, port, timeout))

    @classmethod
    def spawn(cls, argv: list[str],
              timeout: float = DEFAULT_TIMEOUT) -> "OracleClient":
        return cls(StdioEndpoint(argv, timeout))

    @classmethod
    def replay(cls, transcript_path) -> "OracleClient":
        return cls(ReplayEndpoint(transcript_path))

    def close(self) -> None:
        self.endpoint.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _call(self, request: dict) -> dict:
        request = dict(request)
        request["id"] = self._next_id
        self._next_id += 1
        response = self.endpoint.roundtrip(request)
        if not isinstance(response, dict):
            raise OracleProtocolError("response must be a JSON object")
        if response.get("id") != request["id"]:
            raise OracleProtocolError(
                f"response id {response.get('id')} does not match request "
                f"id {request['id']}")
        status = response.get("status")
        if status == "error":
            raise OracleError(
                f"oracle error: {response.get('error', 'unspecified')}")
        if status != "ok":
            raise OracleProtocolError(f"unknown response status {status!r}")
        payload = response.get("payload")
        if not isinstance(payload, dict):
            raise OracleProtocolError("ok response must carry a payload object")
        return payload

    def ping(self) -> bool:
        payload = self._call({"op": "ping"})
        if payload.get("pong") is not True:
            raise OracleProtocolError("ping payload must be {'pong': true}")
        return True

    def segment(self, image_uint8, front: bool = False, view=None,
                prompts: tuple[str, ...] = ()) -> np.ndarray:
        """Request a part-label map for an RGB image (normal-map render or
        the front-view photo); returns (H, W) uint8 codes 0..5."""
        arr = np.asarray(image_uint8)
        if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
            raise ContractError("segment expects an (H, W, 3) uint8 image")
        payload = self._call({
            "op": "segment",
            "image_png": encode_png(arr),
            "front": bool(front),
            "view": view,
            "prompts": list(prompts),
        })
        if "label_map_png" not in payload:
            raise OracleProtocolError("segment payload lacks label_map_png")
        labels = decode_label_png(payload["label_map_png"])
        if labels.shape != arr.shape[:2]:
            raise OracleProtocolError(
                f"label map {labels.shape} does not match request resolution "
                f"{arr.shape[:2]}")
        return labels

    def predict_noise(self, x_t, t: float, conditions=None,
                      conditional: bool = True) -> np.ndarray:
        """Request the denoiser's noise prediction for a noisy render."""
        x_t = np.asarray(x_t, dtype=np.float64)
        t = float(t)
        if not 0.0 < t < 1.0:
            raise ContractError(f"noise level t must lie in (0, 1), got {t}")
        cond_payload = {"label_map_png": None, "front_image": None,
                        "prompts": []}
        if conditions is not None:
            if getattr(conditions, "label_map", None) is not None:
                cond_payload["label_map_png"] = encode_png(
                    np.asarray(conditions.label_map, dtype=np.uint8))
            if getattr(conditions, "front_image", None) is not None:
                cond_payload["front_image"] = encode_array(
                    conditions.front_image)
            cond_payload["prompts"] = list(getattr(conditions, "prompts", ()))
        payload = self._call({
            "op": "predict_noise",
            "image": encode_array(x_t),
            "t": t,
            "conditional": bool(conditional),
            "conditions": cond_payload,
        })
        if "noise" not in payload:
            raise OracleProtocolError("predict_noise payload lacks noise")
        noise = decode_array(payload["noise"])
        if noise.shape != x_t.shape:
            raise OracleProtocolError(
                f"noise shape {noise.shape} does not match image {x_t.shape}")
        return noise


class RemoteScoreModel:
    """ScoreModel adapter that forwards every prediction to the oracle."""

    def __init__(self, client: OracleClient):
        self.client = client

    def predict_noise(self, x_t, t, conditions, conditional=True):
        return self.client.predict_noise(x_t, t, conditions=conditions,
                                         conditional=conditional)


class OracleLabelSource:
    """Label-map provider that sends normal-map renders to the oracle.

    View 0 is flagged as the front view so the service can route it to its
    image-space segmenter.
    """

    def __init__(self, client: OracleClient, prompts: tuple[str, ...] = ()):
        self.client = client
        self.prompts = prompts

    def __call__(self, index: int, view, buffers) -> np.ndarray:
        from .raster import encode_normal_map
        image = encode_normal_map(buffers)
        return self.client.segment(image, front=(index == 0),
                                   view=view.to_json(), prompts=self.prompts)


def endpoint_from_spec(spec: str, timeout: float = DEFAULT_TIMEOUT):
    """Build an endpoint from a CLI-style string.

    Forms: "tcp:HOST:PORT", "replay:PATH", "spawn:CMD ARG..." (whitespace
    separated).
    """
    kind, _, rest = spec.partition(":")
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise ContractError(f"bad tcp endpoint spec {spec!r}")
        return SocketEndpoint(host, int(port), timeout)
    if kind == "replay":
        if not rest:
            raise ContractError("replay endpoint needs a transcript path")
        return ReplayEndpoint(rest)
    if kind == "spawn":
        argv = rest.split()
        if not argv:
            raise ContractError("spawn endpoint needs a command")
        return StdioEndpoint(argv, timeout)
    raise ContractError(
        f"unknown oracle endpoint kind {kind!r} (use tcp:, replay:, spawn:)")
