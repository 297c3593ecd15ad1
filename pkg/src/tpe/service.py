"""Template-blind authentication service.

The server holds only (id, ciphertext, metric) records.  Clients keep the
secret key, encrypt templates locally, and send ciphertexts at enrollment and
tokens at authentication; the server's entire view of a decision is the sign
test inside decrypt().  No key material, plaintext, or decryption magnitude
ever reaches the server process, its store, or its logs.

Store: append-only record log, replayed into an in-memory index at startup.
One writer at a time; reads and AUTH decisions run concurrently.

Wire protocol: 4-byte big-endian frame length, then a type byte, then the
payload.  Types: 0x01 ENROLL, 0x02 AUTH, 0x03 PING, 0x81 ACK, 0x82 RESULT,
0x83 PONG, 0xFF ERR.  ENROLL payload is length-prefixed id, metric byte,
ciphertext blob; the metric byte's high bits select duplicate handling
(0x40 add another record for the id, 0x80 overwrite).  AUTH payload is
length-prefixed id then token blob.  RESULT is one byte, 1 = Authenticated.
"""

from __future__ import annotations

import logging
import os
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass
from enum import Enum

from .core import (
    Ciphertext,
    Token,
    ciphertext_from_bytes,
    ciphertext_to_bytes,
    decrypt,
    token_from_bytes,
)
from .exact import DimensionMismatch
from .plans import MetricKind

log = logging.getLogger("tpe.service")

MSG_ENROLL = 0x01
MSG_AUTH = 0x02
MSG_PING = 0x03
MSG_ACK = 0x81
MSG_RESULT = 0x82
MSG_PONG = 0x83
MSG_ERR = 0xFF

_FLAG_ADD = 0x40
_FLAG_OVERWRITE = 0x80
_METRIC_MASK = 0x3F

_MAX_FRAME = 1 << 28
_MAX_ID = 4096

_STORE_OP_ADD = 1
_STORE_OP_OVERWRITE = 2


class DuplicateId(ValueError):
    pass


class StorageFailure(OSError):
    pass


class MalformedToken(ValueError):
    pass


class Outcome(Enum):
    AUTHENTICATED = "Authenticated"
    DENIED = "Denied"


@dataclass(frozen=True)
class EnrollmentRecord:
    id: str
    ciphertext: Ciphertext
    metric: MetricKind
    enrolled_at: float


@dataclass(frozen=True)
class AuthResult:
    outcome: Outcome


def _encode_record(op: int, rec: EnrollmentRecord) -> bytes:
    ident = rec.id.encode("utf-8")
    blob = ciphertext_to_bytes(rec.ciphertext)
    body = b"".join(
        (
            bytes([op]),
            struct.pack("!I", len(ident)),
            ident,
            bytes([int(rec.metric)]),
            struct.pack("!Q", int(rec.enrolled_at * 1e9)),
            struct.pack("!I", len(blob)),
            blob,
        )
    )
    return struct.pack("!I", len(body)) + body


def _decode_record(body: bytes):
    op = body[0]
    idlen = struct.unpack("!I", body[1:5])[0]
    pos = 5 + idlen
    ident = body[5:pos].decode("utf-8")
    metric = MetricKind(body[pos])
    ts = struct.unpack("!Q", body[pos + 1 : pos + 9])[0] / 1e9
    bloblen = struct.unpack("!I", body[pos + 9 : pos + 13])[0]
    blob = body[pos + 13 : pos + 13 + bloblen]
    if len(blob) != bloblen:
        raise ValueError("truncated record")
    return op, EnrollmentRecord(ident, ciphertext_from_bytes(blob), metric, ts)


class RecordStore:
    """Append-only enrollment log with an in-memory id index."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self._lock = threading.RLock()
        self._index: dict[str, list[EnrollmentRecord]] = {}
        try:
            self._replay()
            self._fh = open(self.path, "ab")
        except OSError as e:
            raise StorageFailure(f"cannot open store at {self.path}: {e}") from e

    def _replay(self):
        if not os.path.exists(self.path):
            return
        with open(self.path, "rb") as fh:
            data = fh.read()
        pos = 0
        while pos < len(data):
            if pos + 4 > len(data):
                raise StorageFailure(f"{self.path}: truncated frame header")
            (length,) = struct.unpack("!I", data[pos : pos + 4])
            body = data[pos + 4 : pos + 4 + length]
            if len(body) != length:
                raise StorageFailure(f"{self.path}: truncated record")
            try:
                op, rec = _decode_record(body)
            except (ValueError, IndexError) as e:
                raise StorageFailure(f"{self.path}: corrupt record: {e}") from e
            if op == _STORE_OP_OVERWRITE:
                self._index[rec.id] = [rec]
            else:
                self._index.setdefault(rec.id, []).append(rec)
            pos += 4 + length

    def put(self, rec: EnrollmentRecord, mode: str = "new"):
        """mode: 'new' (DuplicateId if the id exists), 'add', or 'overwrite'."""
        if mode not in ("new", "add", "overwrite"):
            raise ValueError(f"unknown put mode {mode!r}")
        with self._lock:
            if mode == "new" and rec.id in self._index:
                raise DuplicateId(rec.id)
            op = _STORE_OP_OVERWRITE if mode == "overwrite" else _STORE_OP_ADD
            try:
                self._fh.write(_encode_record(op, rec))
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as e:
                raise StorageFailure(f"write to {self.path} failed: {e}") from e
            if mode == "overwrite":
                if rec.id in self._index:
                    log.info("overwrote enrollment id=%s", rec.id)
                self._index[rec.id] = [rec]
            else:
                self._index.setdefault(rec.id, []).append(rec)

    def get(self, ident: str) -> list[EnrollmentRecord]:
        with self._lock:
            return list(self._index.get(ident, ()))

    def ids(self) -> list[str]:
        with self._lock:
            return list(self._index)

    def close(self):
        with self._lock:
            self._fh.close()


def authenticate(store: RecordStore, ident: str, token: Token) -> AuthResult:
    """Decide a query against the id's enrolled records.

    Unknown ids and malformed tokens produce the same Denied shape as a failed
    match; the latter additionally leaves an audit log line.
    """
    records = store.get(ident)
    outcome = Outcome.DENIED
    for rec in records:
        if rec.ciphertext.params_digest != token.params_digest:
            log.warning("audit: token/record digest mismatch id=%s", ident)
            continue
        try:
            if decrypt(rec.ciphertext, token, rec.metric.accept_when).accept:
                outcome = Outcome.AUTHENTICATED
                break
        except DimensionMismatch:
            log.warning("audit: token dimension mismatch id=%s", ident)
    log.info("auth id=%s outcome=%s", ident, outcome.value)
    return AuthResult(outcome)


# -- framing -------------------------------------------------------------------


def _recv_exact(sock, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def send_frame(sock, msg_type: int, payload: bytes = b""):
    if 1 + len(payload) > _MAX_FRAME:
        raise ValueError("frame too large")
    sock.sendall(struct.pack("!I", 1 + len(payload)) + bytes([msg_type]) + payload)


def recv_frame(sock):
    """Next (type, payload) frame, or None on clean EOF at a frame boundary."""
    first = sock.recv(4)
    if not first:
        return None
    header = first if len(first) == 4 else first + _recv_exact(sock, 4 - len(first))
    (length,) = struct.unpack("!I", header)
    if length < 1 or length > _MAX_FRAME:
        raise ValueError(f"implausible frame length {length}")
    body = _recv_exact(sock, length)
    return body[0], body[1:]


def _take_lp(data: bytes, what: str):
    if len(data) < 4:
        raise ValueError(f"truncated {what}")
    (n,) = struct.unpack("!I", data[:4])
    if n > _MAX_ID:
        raise ValueError(f"{what} too long")
    if len(data) < 4 + n:
        raise ValueError(f"truncated {what}")
    return data[4 : 4 + n], data[4 + n :]


def encode_enroll(ident: str, metric: MetricKind, ct_blob: bytes, mode: str = "new") -> bytes:
    flags = {"new": 0, "add": _FLAG_ADD, "overwrite": _FLAG_OVERWRITE}[mode]
    raw = ident.encode("utf-8")
    return struct.pack("!I", len(raw)) + raw + bytes([int(metric) | flags]) + ct_blob


def encode_auth(ident: str, token_blob: bytes) -> bytes:
    raw = ident.encode("utf-8")
    return struct.pack("!I", len(raw)) + raw + token_blob


# -- server ---------------------------------------------------------------------


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        while True:
            try:
                frame = recv_frame(sock)
            except (ConnectionError, OSError, ValueError) as e:
                log.info("connection dropped: %s", e)
                return
            if frame is None:
                return
            msg_type, payload = frame
            try:
                self._dispatch(sock, msg_type, payload)
            except (ConnectionError, OSError):
                return

    def _dispatch(self, sock, msg_type: int, payload: bytes):
        store = self.server.store
        if msg_type == MSG_PING:
            send_frame(sock, MSG_PONG)
        elif msg_type == MSG_ENROLL:
            try:
                raw_id, rest = _take_lp(payload, "id")
                ident = raw_id.decode("utf-8")
                if not rest:
                    raise ValueError("missing metric byte")
                tag = rest[0]
                metric = MetricKind(tag & _METRIC_MASK)
                flags = tag & ~_METRIC_MASK
                if flags == _FLAG_ADD:
                    mode = "add"
                elif flags == _FLAG_OVERWRITE:
                    mode = "overwrite"
                elif flags == 0:
                    mode = "new"
                else:
                    raise ValueError("conflicting enroll flags")
                ct = ciphertext_from_bytes(rest[1:])
            except ValueError as e:
                send_frame(sock, MSG_ERR, f"bad enroll request: {e}".encode())
                return
            try:
                store.put(EnrollmentRecord(ident, ct, metric, time.time()), mode)
            except DuplicateId:
                send_frame(sock, MSG_ERR, b"duplicate id")
                return
            except StorageFailure as e:
                log.error("storage failure: %s", e)
                send_frame(sock, MSG_ERR, b"storage failure")
                return
            log.info("enroll id=%s metric=%s mode=%s", ident, metric.cli_name, mode)
            send_frame(sock, MSG_ACK)
        elif msg_type == MSG_AUTH:
            try:
                raw_id, rest = _take_lp(payload, "id")
                ident = raw_id.decode("utf-8")
            except ValueError as e:
                send_frame(sock, MSG_ERR, f"bad auth request: {e}".encode())
                return
            try:
                token = token_from_bytes(rest)
            except ValueError:
                # malformed token: same answer shape as a failed match
                log.warning("audit: malformed token id=%s", ident)
                send_frame(sock, MSG_RESULT, b"\x00")
                return
            result = authenticate(store, ident, token)
            send_frame(
                sock,
                MSG_RESULT,
                b"\x01" if result.outcome is Outcome.AUTHENTICATED else b"\x00",
            )
        else:
            send_frame(sock, MSG_ERR, f"unknown message type {msg_type:#x}".encode())


class AuthServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, store: RecordStore):
        super().__init__(address, _Handler)
        self.store = store


def serve(bind_address, store_path, log_path=None) -> AuthServer:
    """Bind and return the server; caller runs serve_forever()."""
    if log_path:
        handler = logging.FileHandler(log_path)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(handler)
        log.setLevel(logging.INFO)
    store = RecordStore(store_path)
    return AuthServer(bind_address, store)


# -- client ----------------------------------------------------------------------


class ServiceError(RuntimeError):
    """Server answered with an ERR frame."""


def _one_round_trip(address, msg_type: int, payload: bytes, timeout=30.0):
    with socket.create_connection(address, timeout=timeout) as sock:
        send_frame(sock, msg_type, payload)
        frame = recv_frame(sock)
    if frame is None:
        raise ConnectionError("server closed the connection without answering")
    rsp_type, body = frame
    if rsp_type == MSG_ERR:
        raise ServiceError(body.decode("utf-8", "replace"))
    return rsp_type, body


def enroll_remote(address, ident: str, metric: MetricKind, ct_blob: bytes, mode: str = "new"):
    rsp_type, _ = _one_round_trip(address, MSG_ENROLL, encode_enroll(ident, metric, ct_blob, mode))
    if rsp_type != MSG_ACK:
        raise ServiceError(f"unexpected response type {rsp_type:#x}")


def auth_remote(address, ident: str, token_blob: bytes) -> Outcome:
    rsp_type, body = _one_round_trip(address, MSG_AUTH, encode_auth(ident, token_blob))
    if rsp_type != MSG_RESULT or len(body) != 1:
        raise ServiceError(f"unexpected response type {rsp_type:#x}")
    return Outcome.AUTHENTICATED if body[0] == 1 else Outcome.DENIED


def ping(address) -> bool:
    rsp_type, _ = _one_round_trip(address, MSG_PING, b"")
    return rsp_type == MSG_PONG
