"""One-shot TCP distribution of a watermarked payload.

Frame layout (all integers big-endian)::

    offset 0   magic    4 bytes  b"CKD1"
    offset 4   version  1 byte   0x01
    offset 5   count    4 bytes  number of words M
    offset 9   body     8*M bytes, each word's IEEE-754 bit pattern

A client connects, receives exactly one frame and the server closes the
connection. There is no checksum; detecting tampering is left to the key
extraction and the reconstruction.
"""

import logging
import socket
import socketserver
import struct
import threading

import numpy as np

from .errors import FrameError, TransportError
from .watermark import WatermarkedPayload

log = logging.getLogger(__name__)

MAGIC = b"CKD1"
VERSION = 1
HEADER = struct.Struct(">4sBI")
DEFAULT_TIMEOUT = 30.0


def serialize(payload):
    words = np.asarray(payload.words, dtype=np.uint64)
    if words.size > 0xFFFFFFFF:
        raise FrameError("payload too long for a 32-bit count", "count", 5)
    return HEADER.pack(MAGIC, VERSION, words.size) + words.astype(">u8").tobytes()


def deserialize(data):
    data = bytes(data)
    if len(data) < 4:
        raise FrameError("truncated magic", "magic", len(data))
    if data[:4] != MAGIC:
        raise FrameError(f"bad magic {data[:4]!r}", "magic", 0)
    if len(data) < 5:
        raise FrameError("truncated version", "version", 4)
    if data[4] != VERSION:
        raise FrameError(f"unsupported version {data[4]}", "version", 4)
    if len(data) < HEADER.size:
        raise FrameError("truncated count", "count", 5)
    _, _, count = HEADER.unpack_from(data)
    end = HEADER.size + 8 * count
    if len(data) < end:
        raise FrameError(f"truncated body: {len(data) - HEADER.size} of {8 * count} bytes",
                         "body", len(data))
    if len(data) > end:
        raise FrameError(f"{len(data) - end} trailing bytes after frame", "body", end)
    words = np.frombuffer(data, dtype=">u8", count=count, offset=HEADER.size)
    return WatermarkedPayload(words.astype(np.uint64))


def parse_address(text, default_host="127.0.0.1"):
    host, sep, port = text.rpartition(":")
    if not sep:
        host, port = default_host, text
    try:
        return (host or default_host, int(port))
    except ValueError:
        raise TransportError(f"bad address {text!r}; expected host:port") from None


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        try:
            self.request.sendall(self.server.frame)
        except OSError as exc:
            log.warning("send to %s failed: %s", self.client_address, exc)
        else:
            self.server.count_served()


class PayloadServer(socketserver.ThreadingTCPServer):
    """Hands the same frame to every client; one thread per connection."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, payload):
        self.frame = serialize(payload)
        self.served = 0
        self._lock = threading.Lock()
        self._thread = None
        try:
            super().__init__(address, _Handler)
        except OSError as exc:
            raise TransportError(f"cannot bind {address}: {exc}") from exc

    @property
    def address(self):
        return self.server_address[:2]

    def count_served(self):
        with self._lock:
            self.served += 1

    def start(self):
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(address, payload, max_clients=None):
    """Blocking server; returns after ``max_clients`` connections if given."""
    with PayloadServer(address, payload) as server:
        log.info("serving %d words on %s:%d", len(payload), *server.address)
        try:
            while max_clients is None or server.served < max_clients:
                threading.Event().wait(0.05)
        except KeyboardInterrupt:
            pass
        return server.served


def fetch(address, timeout=DEFAULT_TIMEOUT):
    """Connect, read one frame until the server closes, and decode it."""
    chunks = []
    try:
        with socket.create_connection(address, timeout=timeout) as sock:
            while True:
                chunk = sock.recv(1 << 16)
                if not chunk:
                    break
                chunks.append(chunk)
    except socket.timeout as exc:
        raise TransportError(f"timed out talking to {address[0]}:{address[1]}") from exc
    except OSError as exc:
        raise TransportError(f"connection to {address[0]}:{address[1]} failed: {exc}") from exc
    return deserialize(b"".join(chunks))
