"""Outsourced retrieval over hashes.

Alice turns a document into column hashes with her secret embedding
parameters and sends only those hashes (plus public retrieval settings) to
Bob.  Bob ranks passages by Hamming-distance KP-Centrality and answers with
column indices, optionally echoing the selected hashes.  Alice maps the
indices back to her plaintext passages.

Wire format (all integers little-endian)::

    frame    = "SPIR" | u8 version=1 | u8 type | u32 length | payload
    type     = 0x01 request, 0x02 response, 0x7F error
    request  = 16s bundle_id | u32 M | u32 N | u32 M_kp | u32 requested_n
               | u8 strategy (0 mean-threshold, 1 k-nearest) | u32 k
               | (N + M_kp) * ceil(M / 8) bytes of packed hashes
    response = 16s bundle_id | u32 count | count * (u32 index, u32 score)
               | u8 echo | echo ? count * ceil(M / 8) hash bytes : nothing
    error    = u16 code | UTF-8 message

Error codes are listed in :class:`ErrorCode`.
"""
from __future__ import annotations

import enum
import hashlib
import logging
import socket
import socketserver
import struct
import threading
import time
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .centrality import RankedPassages, SupportSetConfig, retrieve
from .exceptions import (
    DimensionMismatchError,
    InvalidParameterError,
    ProtocolError,
    UnknownBundleError,
)
from .sbe import BitHash, SbeParams, hash_rows
from .text import TextConfig, document_matrix

logger = logging.getLogger(__name__)

MAGIC = b"SPIR"
VERSION = 1
MAX_FRAME = 64 * 1024 * 1024

_HEADER = struct.Struct("<4sBBI")
_REQUEST_HEAD = struct.Struct("<16sIIIIBI")
_RESPONSE_HEAD = struct.Struct("<16sI")
_ENTRY = struct.Struct("<II")
_STRATEGY_CODES = {"mean-threshold": 0, "k-nearest": 1}
_STRATEGY_NAMES = {v: k for k, v in _STRATEGY_CODES.items()}


class MessageType(enum.IntEnum):
    REQUEST = 0x01
    RESPONSE = 0x02
    ERROR = 0x7F


class ErrorCode(enum.IntEnum):
    MALFORMED_FRAME = 1
    VERSION_MISMATCH = 2
    FRAME_TOO_LARGE = 3
    MALFORMED_BUNDLE = 4
    UNEXPECTED_MESSAGE = 5
    INTERNAL = 6


@dataclass(frozen=True)
class HashBundle:
    """Everything Bob receives: hashes in column order and public settings."""

    bundle_id: bytes
    M: int
    n_passages: int
    n_keyphrases: int
    hashes: tuple
    requested_n: int
    config: SupportSetConfig = SupportSetConfig()

    @classmethod
    def create(cls, hashes, n_passages, requested_n, config=SupportSetConfig()):
        """Build a bundle whose id is a digest of its own contents."""
        hashes = tuple(hashes)
        if not hashes:
            raise InvalidParameterError("a bundle needs at least one hash")
        draft = cls(bytes(16), hashes[0].M, n_passages, len(hashes) - n_passages,
                    hashes, requested_n, config)
        body = draft.to_payload()[16:]
        bundle_id = hashlib.blake2b(body, digest_size=16).digest()
        return cls(bundle_id, draft.M, n_passages, draft.n_keyphrases, hashes,
                   requested_n, config)

    def to_payload(self):
        if not self.config.include_keyphrases_as_members:
            raise InvalidParameterError(
                "the wire format always admits key phrases as support-set members")
        head = _REQUEST_HEAD.pack(self.bundle_id, self.M, self.n_passages,
                                  self.n_keyphrases, self.requested_n,
                                  _STRATEGY_CODES[self.config.strategy], self.config.k)
        return head + b"".join(h.bits for h in self.hashes)

    @classmethod
    def from_payload(cls, payload):
        if len(payload) < _REQUEST_HEAD.size:
            raise ProtocolError(ErrorCode.MALFORMED_BUNDLE, "request payload too short")
        bundle_id, M, N, M_kp, n, strategy, k = _REQUEST_HEAD.unpack_from(payload)
        if M < 1 or N < 1 or n < 1:
            raise ProtocolError(ErrorCode.MALFORMED_BUNDLE, "M, N and requested_n must be positive")
        if strategy not in _STRATEGY_NAMES:
            raise ProtocolError(ErrorCode.MALFORMED_BUNDLE, f"unknown strategy code {strategy}")
        nbytes = (M + 7) // 8
        body = payload[_REQUEST_HEAD.size:]
        if len(body) != (N + M_kp) * nbytes:
            raise ProtocolError(
                ErrorCode.MALFORMED_BUNDLE,
                f"expected {(N + M_kp) * nbytes} hash bytes for {N + M_kp} columns, got {len(body)}")
        try:
            config = SupportSetConfig(_STRATEGY_NAMES[strategy], k)
            hashes = tuple(BitHash(body[i * nbytes:(i + 1) * nbytes], M)
                           for i in range(N + M_kp))
        except ValueError as exc:
            raise ProtocolError(ErrorCode.MALFORMED_BUNDLE, str(exc)) from exc
        return cls(bundle_id, M, N, M_kp, hashes, n, config)


@dataclass(frozen=True)
class RetrievalResult:
    bundle_id: bytes
    ranked: tuple
    echo_hashes: tuple | None = None

    @property
    def indices(self):
        return [i for i, _ in self.ranked]

    def to_payload(self):
        parts = [_RESPONSE_HEAD.pack(self.bundle_id, len(self.ranked))]
        parts += [_ENTRY.pack(i, s) for i, s in self.ranked]
        if self.echo_hashes is None:
            parts.append(b"\x00")
        else:
            parts.append(b"\x01")
            parts += [h.bits for h in self.echo_hashes]
        return b"".join(parts)

    @classmethod
    def from_payload(cls, payload, M):
        if len(payload) < _RESPONSE_HEAD.size + 1:
            raise ProtocolError(ErrorCode.MALFORMED_FRAME, "response payload too short")
        bundle_id, count = _RESPONSE_HEAD.unpack_from(payload)
        offset = _RESPONSE_HEAD.size
        if len(payload) < offset + count * _ENTRY.size + 1:
            raise ProtocolError(ErrorCode.MALFORMED_FRAME, "response truncated")
        ranked = tuple(_ENTRY.unpack_from(payload, offset + j * _ENTRY.size) for j in range(count))
        offset += count * _ENTRY.size
        echo = payload[offset]
        rest = payload[offset + 1:]
        nbytes = (M + 7) // 8
        if echo == 0:
            if rest:
                raise ProtocolError(ErrorCode.MALFORMED_FRAME, "trailing bytes after response")
            return cls(bundle_id, ranked, None)
        if len(rest) != count * nbytes:
            raise ProtocolError(ErrorCode.MALFORMED_FRAME, "echoed hashes have the wrong size")
        hashes = tuple(BitHash(rest[j * nbytes:(j + 1) * nbytes], M) for j in range(count))
        return cls(bundle_id, ranked, hashes)


@dataclass(frozen=True, eq=False)
class PrivateMapping:
    """Alice-side state needed to read Bob's answer.  Never sent anywhere."""

    bundle_id: bytes
    doc_id: str | None
    passages: tuple
    params: SbeParams = field(repr=False)


def hash_matrix(matrix, params):
    """Hash every column of a compact matrix."""
    packed = hash_rows(np.asarray(matrix.weights).T, params)
    return [BitHash(row.tobytes(), params.M) for row in packed]


def alice_prepare(document, params, kp_count=None, n=3, config=SupportSetConfig(),
                  text_config=TextConfig(), key_phrases=None, feature_hashing=False,
                  doc_id=None):
    """Hash a document's matrix and package it for Bob.

    Without ``feature_hashing`` the vocabulary size must equal ``params.L``;
    with it, terms are hashed into ``params.L`` rows.
    """
    if kp_count is not None:
        text_config = TextConfig(text_config.weighting, text_config.normalize,
                                 text_config.segmentation, text_config.stopwords, kp_count)
    matrix = document_matrix(document, text_config, key_phrases,
                             n_features=params.L if feature_hashing else None)
    return alice_prepare_matrix(matrix, params, n, config, doc_id)


def alice_prepare_matrix(matrix, params, n=3, config=SupportSetConfig(), doc_id=None):
    """:func:`alice_prepare` for an already built compact matrix."""
    if matrix.T != params.L:
        raise DimensionMismatchError(
            f"document vocabulary has {matrix.T} terms but the parameters expect L={params.L}; "
            "regenerate the parameters with a matching L or enable feature hashing")
    hashes = hash_matrix(matrix, params)
    bundle = HashBundle.create(hashes, matrix.n_passages, n, config)
    mapping = PrivateMapping(bundle.bundle_id, doc_id, matrix.passages, params)
    return bundle, mapping


def bob_retrieve(bundle, echo=True):
    """Hamming-distance KP-Centrality over the bundle contents only."""
    if len(bundle.hashes) != bundle.n_passages + bundle.n_keyphrases or bundle.n_passages < 1:
        raise ProtocolError(ErrorCode.MALFORMED_BUNDLE,
                            "passage and key-phrase counts disagree with the hash count")
    if any(h.M != bundle.M for h in bundle.hashes):
        raise ProtocolError(ErrorCode.MALFORMED_BUNDLE, "hash lengths disagree with M")
    ranked = retrieve(list(bundle.hashes), bundle.requested_n, "hamming", bundle.config,
                      num_passages=bundle.n_passages)
    echoed = tuple(bundle.hashes[i] for i in ranked.indices) if echo else None
    return RetrievalResult(bundle.bundle_id, tuple(ranked.ranked), echoed)


def alice_resolve(result, mapping):
    """Plaintext passages for Bob's ranking, best first.

    ``mapping`` is a :class:`PrivateMapping` or a mapping from bundle id to one.
    """
    if isinstance(mapping, Mapping):
        if result.bundle_id not in mapping:
            raise UnknownBundleError(result.bundle_id.hex())
        mapping = mapping[result.bundle_id]
    elif mapping.bundle_id != result.bundle_id:
        raise UnknownBundleError(result.bundle_id.hex())
    out = []
    for index, _ in result.ranked:
        if not 0 <= index < len(mapping.passages):
            raise ProtocolError(ErrorCode.MALFORMED_BUNDLE,
                                f"result index {index} outside the {len(mapping.passages)} passages")
        out.append(mapping.passages[index].text)
    return out


def result_as_ranking(result):
    return RankedPassages(tuple(result.ranked))


# -- framing -----------------------------------------------------------------

def encode_frame(msg_type, payload):
    return _HEADER.pack(MAGIC, VERSION, int(msg_type), len(payload)) + payload


def encode_error(code, message):
    return encode_frame(MessageType.ERROR, struct.pack("<H", int(code)) + message.encode("utf-8"))


def _recv_exact(sock, n):
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock, max_frame=MAX_FRAME):
    """Read one frame; returns ``(type, payload)`` or raises ProtocolError."""
    header = _recv_exact(sock, _HEADER.size)
    if len(header) != _HEADER.size:
        raise ProtocolError(ErrorCode.MALFORMED_FRAME,
                            f"connection closed after {len(header)} header bytes")
    magic, version, msg_type, length = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(ErrorCode.MALFORMED_FRAME, f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(ErrorCode.VERSION_MISMATCH, f"unsupported version {version}")
    if length > max_frame:
        raise ProtocolError(ErrorCode.FRAME_TOO_LARGE,
                            f"frame of {length} bytes exceeds the {max_frame} byte limit")
    payload = _recv_exact(sock, length)
    if len(payload) != length:
        raise ProtocolError(ErrorCode.MALFORMED_FRAME,
                            f"frame truncated: {len(payload)} of {length} payload bytes")
    return msg_type, payload


def decode_error(payload):
    if len(payload) < 2:
        return ProtocolError(ErrorCode.MALFORMED_FRAME, "error frame too short")
    (code,) = struct.unpack_from("<H", payload)
    return ProtocolError(code, payload[2:].decode("utf-8", errors="replace"))


def handle_request_bytes(msg_type, payload, echo=True):
    """Pure server step: one decoded frame in, one encoded frame out."""
    if msg_type != MessageType.REQUEST:
        return encode_error(ErrorCode.UNEXPECTED_MESSAGE, f"unexpected message type {msg_type:#x}"), None
    try:
        bundle = HashBundle.from_payload(payload)
        result = bob_retrieve(bundle, echo=echo)
    except ProtocolError as exc:
        return encode_error(exc.code, exc.message), None
    return encode_frame(MessageType.RESPONSE, result.to_payload()), bundle


def _drain(sock, limit=1 << 20, timeout=0.5):
    # Closing with unread input makes the kernel send RST, which can destroy
    # an error reply before the peer reads it; half-close and drain instead.
    sock.shutdown(socket.SHUT_WR)
    sock.settimeout(timeout)
    seen = 0
    try:
        while seen < limit:
            chunk = sock.recv(65536)
            if not chunk:
                break
            seen += len(chunk)
    except OSError:
        pass


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server = self.server
        sock = self.request
        sock.settimeout(server.io_timeout)
        started = time.perf_counter()
        bundle = None
        try:
            msg_type, payload = read_frame(sock, server.max_frame)
            reply, bundle = handle_request_bytes(msg_type, payload, server.echo)
        except ProtocolError as exc:
            reply = encode_error(exc.code, exc.message)
        except OSError as exc:
            logger.warning("connection from %s failed: %s", self.client_address, exc)
            return
        except Exception as exc:  # noqa: BLE001 - server must stay up
            logger.exception("internal error")
            reply = encode_error(ErrorCode.INTERNAL, str(exc))
        try:
            sock.sendall(reply)
            _drain(sock)
        except OSError as exc:
            logger.warning("could not reply to %s: %s", self.client_address, exc)
        elapsed = (time.perf_counter() - started) * 1000.0
        if bundle is not None:
            logger.info("bundle=%s columns=%d requested_n=%d elapsed_ms=%.2f",
                        bundle.bundle_id.hex(), len(bundle.hashes), bundle.requested_n, elapsed)
        else:
            logger.info("bundle=- rejected elapsed_ms=%.2f", elapsed)


class RetrievalServer(socketserver.ThreadingTCPServer):
    """Stateless threaded TCP server; one request and one reply per connection."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, port, max_frame=MAX_FRAME, echo=True, io_timeout=30.0):
        self.max_frame = max_frame
        self.echo = echo
        self.io_timeout = io_timeout
        super().__init__((address, port), _Handler)

    @property
    def port(self):
        return self.server_address[1]

    def start_background(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve(address="127.0.0.1", port=0, max_frame=MAX_FRAME, echo=True):
    """Bind a server; call ``serve_forever()`` or ``start_background()`` on it."""
    return RetrievalServer(address, port, max_frame=max_frame, echo=echo)


def request(address, port, bundle, timeout=30.0, max_frame=MAX_FRAME):
    """Send a bundle to a server and wait for its result."""
    with socket.create_connection((address, port), timeout=timeout) as sock:
        sock.sendall(encode_frame(MessageType.REQUEST, bundle.to_payload()))
        msg_type, payload = read_frame(sock, max_frame)
    if msg_type == MessageType.ERROR:
        raise decode_error(payload)
    if msg_type != MessageType.RESPONSE:
        raise ProtocolError(ErrorCode.UNEXPECTED_MESSAGE, f"unexpected message type {msg_type:#x}")
    result = RetrievalResult.from_payload(payload, bundle.M)
    if result.bundle_id != bundle.bundle_id:
        raise ProtocolError(ErrorCode.MALFORMED_FRAME, "response carries a different bundle id")
    return result
