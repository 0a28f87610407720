"""Wire-protocol client tests against an in-process mock service.

The mock reimplements the framing from the specification text (length
prefix, newline-terminated JSON header, float32 payload) independently of
the production client code.
"""

import json
import socket
import struct
import threading

import numpy as np
import pytest

from svgretarget import optimize
from svgretarget.backend import RemoteLossBackend, pack_frame, unpack_frame
from svgretarget.errors import BackendError


class MockService(threading.Thread):
    """Minimal loss/embedding service: squared-error loss against a fixed
    target, mean-pooled embeddings."""

    def __init__(self, target=None, corrupt=None):
        super().__init__(daemon=True)
        self.target = target
        self.corrupt = corrupt
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(1)
        self.port = self.sock.getsockname()[1]

    def run(self):
        conn, _ = self.sock.accept()
        try:
            while True:
                head = self._recv(conn, 4)
                if head is None:
                    return
                (length,) = struct.unpack("<I", head)
                body = self._recv(conn, length)
                sep = body.index(b"\n")
                header = json.loads(body[:sep])
                payload = body[sep + 1:]
                conn.sendall(self._respond(header, payload))
        finally:
            conn.close()

    def _recv(self, conn, n):
        buf = b""
        while len(buf) < n:
            chunk = conn.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    def _respond(self, header, payload):
        if self.corrupt == "version":
            return self._frame({"v": 9, "loss": 0.0}, b"")
        if self.corrupt == "garbage":
            return struct.pack("<I", 5) + b"@@@@@"
        op = header.get("op")
        if op == "loss_grad":
            h, w, c = header["h"], header["w"], header["c"]
            img = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
            diff = img - self.target
            loss = float((diff ** 2).mean())
            grad = (2.0 * diff / diff.size).astype("<f4")
            return self._frame({"v": 1, "loss": loss}, grad.tobytes())
        if op == "embed":
            if "text" in header:
                vec = np.frombuffer(header["text"].encode(), dtype=np.uint8)
                vec = vec.astype("<f4")[:8]
                vec = np.pad(vec, (0, 8 - len(vec)))
            else:
                h, w, c = header["h"], header["w"], header["c"]
                img = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
                vec = np.concatenate([img.mean(axis=(0, 1)),
                                      img.std(axis=(0, 1))]).astype("<f4")
            return self._frame({"v": 1, "dim": int(len(vec))}, vec.tobytes())
        return self._frame({"v": 1, "error": {"code": "bad-op",
                                              "message": f"unknown {op}"}}, b"")

    def _frame(self, header, payload):
        head = json.dumps(header).encode() + b"\n"
        return struct.pack("<I", len(head) + len(payload)) + head + payload


def test_frame_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(50):
        header = {"v": 1, "op": "x", "n": int(rng.integers(0, 1000))}
        payload = rng.bytes(int(rng.integers(0, 256)))
        frame = pack_frame(header, payload)
        (length,) = struct.unpack("<I", frame[:4])
        assert length == len(frame) - 4
        h2, p2 = unpack_frame(frame[4:])
        assert h2 == header and p2 == payload


def test_loss_grad_roundtrip():
    rng = np.random.default_rng(1)
    target = rng.uniform(0, 1, (8, 8, 3)).astype("<f4").astype(float)
    svc = MockService(target=target)
    svc.start()
    backend = RemoteLossBackend(f"tcp:127.0.0.1:{svc.port}")
    loss, grad = backend.loss_grad(target)
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert np.abs(grad).max() == pytest.approx(0.0, abs=1e-12)
    other = rng.uniform(0, 1, (8, 8, 3))
    loss2, grad2 = backend.loss_grad(other)
    assert loss2 > 0
    assert grad2.shape == (8, 8, 3)
    backend.close()


def test_image_loss_dispatches_to_external_backend():
    rng = np.random.default_rng(2)
    target = rng.uniform(0, 1, (8, 8, 3)).astype("<f4").astype(float)
    svc = MockService(target=target)
    svc.start()
    backend = RemoteLossBackend(f"tcp:127.0.0.1:{svc.port}")
    rendered = rng.uniform(0, 1, (8, 8, 3))
    loss, grad = optimize.image_loss(backend, rendered, None)
    want = float(((rendered.astype("<f4").astype(float) - target) ** 2).mean())
    assert loss == pytest.approx(want, rel=1e-5)
    backend.close()


def test_embed_image_and_text():
    svc = MockService(target=np.zeros((4, 4, 3)))
    svc.start()
    backend = RemoteLossBackend(f"tcp:127.0.0.1:{svc.port}")
    v = backend.embed(np.ones((4, 4, 3)))
    assert v.shape == (6,)
    t = backend.embed("hello")
    assert t.shape == (8,)
    backend.close()


def test_error_response_raises():
    svc = MockService(target=np.zeros((4, 4, 3)))
    svc.start()
    backend = RemoteLossBackend(f"tcp:127.0.0.1:{svc.port}")
    with pytest.raises(BackendError) as ei:
        backend._roundtrip({"v": 1, "op": "nope"})
    assert "bad-op" in str(ei.value)
    backend.close()


def test_protocol_version_mismatch():
    svc = MockService(target=np.zeros((4, 4, 3)), corrupt="version")
    svc.start()
    backend = RemoteLossBackend(f"tcp:127.0.0.1:{svc.port}")
    with pytest.raises(BackendError):
        backend.loss_grad(np.zeros((4, 4, 3)))
    backend.close()


def test_malformed_response_raises():
    svc = MockService(target=np.zeros((4, 4, 3)), corrupt="garbage")
    svc.start()
    backend = RemoteLossBackend(f"tcp:127.0.0.1:{svc.port}")
    with pytest.raises(BackendError):
        backend.loss_grad(np.zeros((4, 4, 3)))
    backend.close()


def test_unreachable_backend():
    backend = RemoteLossBackend("tcp:127.0.0.1:1")
    with pytest.raises(BackendError):
        backend.loss_grad(np.zeros((4, 4, 3)))
    with pytest.raises(BackendError):
        RemoteLossBackend("bogus-endpoint").loss_grad(np.zeros((4, 4, 3)))
