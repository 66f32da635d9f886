"""TCP client for external classifiers speaking newline-delimited JSON.

Protocol (UTF-8, one JSON object per line):

    -> {"op": "labels"}
    <- {"op": "labels", "labels": ["a", "b", ...]}
    -> {"op": "classify", "id": <u64>, "width": w, "height": h,
        "rgb8_b64": "<base64 row-major RGB>"}
    <- {"op": "result", "id": <same>, "label": "a", "probs": {"a": 0.9, ...}}

Ids echo verbatim; requests on one connection are serialized.
"""

from __future__ import annotations

import base64
import json
import socket

from .errors import ProtocolError
from .image import Patch
from .recognition import validate_scores

DEFAULT_TIMEOUT = 2.0


class RemoteClassifier:
    """Blocking wire-protocol client; one connection, requests in order."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT,
                 input_size: int = 64):
        self.input_size = (input_size, input_size)
        self._next_id = 0
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except socket.timeout as exc:
            raise TimeoutError(f"connect to {host}:{port} timed out") from exc
        self._sock.settimeout(timeout)
        self._rfile = self._sock.makefile("rb")
        self.labels = self._handshake()

    def _send(self, obj: dict) -> None:
        self._sock.sendall(json.dumps(obj).encode("utf-8") + b"\n")

    def _recv(self) -> dict:
        try:
            line = self._rfile.readline()
        except socket.timeout as exc:
            raise TimeoutError("classifier response timed out") from exc
        if not line:
            raise ProtocolError("connection closed by classifier service")
        try:
            msg = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"invalid JSON from service: {exc}") from exc
        if not isinstance(msg, dict):
            raise ProtocolError("service sent a non-object JSON line")
        return msg

    def _handshake(self) -> list[str]:
        self._send({"op": "labels"})
        msg = self._recv()
        if msg.get("op") != "labels" or not isinstance(msg.get("labels"), list):
            raise ProtocolError(f"bad labels handshake: {msg}")
        labels = [str(lab) for lab in msg["labels"]]
        if not labels:
            raise ProtocolError("service advertises no labels")
        return labels

    def classify(self, patch: Patch) -> dict[str, float]:
        """Send one patch; validate and return the per-class probabilities."""
        req_id = self._next_id
        self._next_id += 1
        self._send({
            "op": "classify",
            "id": req_id,
            "width": patch.width,
            "height": patch.height,
            "rgb8_b64": base64.b64encode(patch.pixels.tobytes()).decode("ascii"),
        })
        msg = self._recv()
        if msg.get("op") == "error":
            raise ProtocolError(f"service error: {msg.get('msg')}")
        if msg.get("op") != "result":
            raise ProtocolError(f"unexpected op {msg.get('op')!r}")
        if msg.get("id") != req_id:
            raise ProtocolError(f"id mismatch: sent {req_id}, got {msg.get('id')}")
        probs = msg.get("probs")
        if not isinstance(probs, dict):
            raise ProtocolError("result without probs object")
        scores = {str(k): float(v) for k, v in probs.items()}
        try:
            validate_scores(scores, self.labels)
        except Exception as exc:
            raise ProtocolError(f"invalid probabilities: {exc}") from exc
        if msg.get("label") not in self.labels:
            raise ProtocolError(f"label {msg.get('label')!r} not in label set")
        return scores

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
