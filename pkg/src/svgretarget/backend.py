"""Client for the external loss/embedding service.

Wire protocol v1: length-prefixed frames over a local stream socket.
Frame = u32 little-endian byte length, then a UTF-8 JSON header terminated
by a single newline, then a raw little-endian float32 payload.

Requests:
  {"v":1,"op":"loss_grad","w":W,"h":H,"c":3}  payload: rendered RGB image
    -> {"v":1,"loss":<float>}                 payload: dL/dI, same shape
  {"v":1,"op":"embed","w":W,"h":H,"c":3}      payload: RGB image
  {"v":1,"op":"embed","text":"..."}           no payload
    -> {"v":1,"dim":D}                        payload: D float32 values

Error responses carry {"error":{"code":...,"message":...}} and raise
BackendError client-side.
"""

from __future__ import annotations

import json
import socket
import struct

import numpy as np

from .errors import BackendError

__all__ = ["RemoteLossBackend", "pack_frame", "unpack_frame"]

PROTOCOL_VERSION = 1
_HEADER_SEP = b"\n"


def pack_frame(header, payload=b""):
    """Serialize one frame (header dict + raw payload bytes)."""
    head = json.dumps(header, sort_keys=True).encode("utf-8") + _HEADER_SEP
    body = head + payload
    return struct.pack("<I", len(body)) + body


def unpack_frame(body):
    """Split a frame body into (header dict, payload bytes)."""
    sep = body.find(_HEADER_SEP)
    if sep < 0:
        raise BackendError("malformed frame: missing header terminator")
    try:
        header = json.loads(body[:sep].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BackendError(f"malformed frame header: {e}") from e
    return header, body[sep + 1:]


def _recv_exact(sock, n):
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            raise BackendError("backend closed the connection mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class RemoteLossBackend:
    """Persistent connection to a loss/embedding service.

    Endpoint formats: 'tcp:HOST:PORT' or 'unix:/path/to.sock'.
    """

    def __init__(self, endpoint, timeout=60.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._sock = None

    def _connect(self):
        if self._sock is not None:
            return self._sock
        try:
            if self.endpoint.startswith("tcp:"):
                _, host, port = self.endpoint.split(":", 2)
                s = socket.create_connection((host, int(port)),
                                             timeout=self.timeout)
            elif self.endpoint.startswith("unix:"):
                s = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
                s.settimeout(self.timeout)
                s.connect(self.endpoint[5:])
            else:
                raise BackendError(
                    f"bad endpoint '{self.endpoint}' (want tcp:host:port "
                    f"or unix:/path)")
        except OSError as e:
            raise BackendError(
                f"cannot reach backend '{self.endpoint}': {e}") from e
        self._sock = s
        return s

    def close(self):
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def _roundtrip(self, header, payload=b""):
        sock = self._connect()
        try:
            sock.sendall(pack_frame(header, payload))
            (length,) = struct.unpack("<I", _recv_exact(sock, 4))
            body = _recv_exact(sock, length)
        except (OSError, struct.error) as e:
            self.close()
            raise BackendError(f"backend I/O failure: {e}") from e
        resp, data = unpack_frame(body)
        if "error" in resp:
            err = resp["error"]
            raise BackendError(
                f"backend error {err.get('code')}: {err.get('message')}")
        if resp.get("v") != PROTOCOL_VERSION:
            raise BackendError(f"backend protocol version {resp.get('v')} "
                               f"!= {PROTOCOL_VERSION}")
        return resp, data

    def loss_grad(self, rendered):
        img = np.ascontiguousarray(rendered, dtype="<f4")
        h, w, c = img.shape
        resp, data = self._roundtrip(
            {"v": PROTOCOL_VERSION, "op": "loss_grad", "w": w, "h": h, "c": c},
            img.tobytes())
        if "loss" not in resp:
            raise BackendError("loss_grad response missing 'loss'")
        grad = np.frombuffer(data, dtype="<f4")
        if grad.size != h * w * c:
            raise BackendError(
                f"loss_grad payload has {grad.size} values, want {h * w * c}")
        return float(resp["loss"]), grad.reshape(h, w, c).astype(float)

    def embed(self, image_or_text):
        if isinstance(image_or_text, str):
            resp, data = self._roundtrip(
                {"v": PROTOCOL_VERSION, "op": "embed", "text": image_or_text})
        else:
            img = np.ascontiguousarray(image_or_text, dtype="<f4")
            h, w, c = img.shape
            resp, data = self._roundtrip(
                {"v": PROTOCOL_VERSION, "op": "embed",
                 "w": w, "h": h, "c": c}, img.tobytes())
        dim = resp.get("dim")
        vec = np.frombuffer(data, dtype="<f4")
        if dim is None or vec.size != dim:
            raise BackendError("embed response dim/payload mismatch")
        return vec.astype(float)
