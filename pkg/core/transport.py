"""Length-prefixed framing over an in-process pipe or a TCP loopback socket.

Wire format: length (4 bytes, big-endian) = payload size + 1, then one tag
byte, then the payload. Both transports carry identical bytes.
"""

import logging
import queue
import socket
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

from .errors import FramingError

logger = logging.getLogger(__name__)

HEADER = struct.Struct("!I")
MAX_FRAME_SIZE = 256 * 1024 * 1024
DEFAULT_TIMEOUT = 30.0


class FrameTag(IntEnum):
    HELLO = 1
    REQUEST = 2
    RESPONSE = 3
    ATTEST = 4
    PROOF = 5
    REFUSAL = 6
    CLOSE = 7


@dataclass(frozen=True)
class Frame:
    tag: FrameTag
    payload: bytes = b""

    def encode(self) -> bytes:
        return HEADER.pack(len(self.payload) + 1) + bytes([self.tag]) + self.payload

    @classmethod
    def decode(cls, data: bytes) -> "Frame":
        """Parse exactly one frame; trailing or missing bytes are framing errors."""
        if len(data) < HEADER.size + 1:
            raise FramingError(f"Frame of {len(data)} bytes is shorter than its header")
        (length,) = HEADER.unpack(data[:HEADER.size])
        if length != len(data) - HEADER.size:
            raise FramingError(f"Frame declares {length} bytes, carries {len(data) - HEADER.size}")
        return cls(_parse_tag(data[HEADER.size]), bytes(data[HEADER.size + 1:]))


def _parse_tag(value: int) -> FrameTag:
    try:
        return FrameTag(value)
    except ValueError:
        raise FramingError(f"Unknown frame tag {value}") from None


class Channel(ABC):
    """One end of a framed, ordered, reliable byte stream."""

    def __init__(self, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self.bytes_sent = 0
        self.bytes_received = 0

    @abstractmethod
    def send_raw(self, data: bytes):
        pass

    @abstractmethod
    def _read(self, n: int) -> bytes:
        """Exactly n bytes, or FramingError."""
        pass

    @abstractmethod
    def close(self):
        pass

    def send(self, frame: Frame):
        data = frame.encode()
        self.send_raw(data)
        self.bytes_sent += len(data)
        logger.debug("sent %s frame, %d bytes", frame.tag.name, len(data))

    def recv(self) -> Frame:
        (length,) = HEADER.unpack(self._read(HEADER.size))
        if length < 1:
            raise FramingError("Frame length must cover the tag byte")
        if length > MAX_FRAME_SIZE:
            raise FramingError(f"Frame of {length} bytes exceeds the {MAX_FRAME_SIZE} limit")
        body = self._read(length)
        self.bytes_received += HEADER.size + length
        frame = Frame(_parse_tag(body[0]), body[1:])
        logger.debug("received %s frame, %d bytes", frame.tag.name, HEADER.size + length)
        return frame

    def expect(self, *tags: FrameTag) -> Frame:
        frame = self.recv()
        if frame.tag not in tags:
            expected = "/".join(t.name for t in tags)
            raise FramingError(f"Expected {expected} frame, got {frame.tag.name}")
        return frame

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_EOF = None


class InProcessChannel(Channel):
    """Queue-backed channel end; `pair()` returns two connected ends."""

    def __init__(self, inbox: "queue.Queue", outbox: "queue.Queue", timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        self._inbox = inbox
        self._outbox = outbox
        self._buffer = bytearray()
        self._eof = False
        self._closed = False

    @classmethod
    def pair(cls, timeout: float = DEFAULT_TIMEOUT) -> Tuple["InProcessChannel", "InProcessChannel"]:
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b, timeout), cls(b, a, timeout)

    def send_raw(self, data: bytes):
        if self._closed:
            raise FramingError("Channel is closed")
        self._outbox.put(bytes(data))

    def _read(self, n: int) -> bytes:
        while len(self._buffer) < n:
            if self._eof:
                raise FramingError(f"Short read: wanted {n} bytes, peer closed after {len(self._buffer)}")
            try:
                chunk = self._inbox.get(timeout=self.timeout)
            except queue.Empty:
                raise FramingError(f"No data within {self.timeout}s") from None
            if chunk is _EOF:
                self._eof = True
            else:
                self._buffer.extend(chunk)
        out = bytes(self._buffer[:n])
        del self._buffer[:n]
        return out

    def close(self):
        if not self._closed:
            self._closed = True
            self._outbox.put(_EOF)


class TcpChannel(Channel):
    """Socket-backed channel end."""

    def __init__(self, sock: socket.socket, timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        self.sock = sock
        self.sock.settimeout(timeout)

    def send_raw(self, data: bytes):
        try:
            self.sock.sendall(data)
        except OSError as e:
            raise FramingError(f"Send failed: {e}") from e

    def _read(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except OSError as e:
                raise FramingError(f"Receive failed: {e}") from e
            if not chunk:
                raise FramingError(f"Short read: wanted {n} bytes, peer closed after {len(buf)}")
            buf += chunk
        return buf

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class TcpListener:
    """Loopback listener; port 0 picks a free port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(1)
        self.sock.settimeout(timeout)
        self.host, self.port = self.sock.getsockname()[:2]
        logger.info("Listening on %s:%d", self.host, self.port)

    def accept(self) -> TcpChannel:
        try:
            conn, peer = self.sock.accept()
        except OSError as e:
            raise FramingError(f"Accept failed: {e}") from e
        logger.debug("Accepted connection from %s:%d", *peer[:2])
        return TcpChannel(conn, self.timeout)

    def close(self):
        self.sock.close()


def tcp_connect(host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> TcpChannel:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as e:
        raise FramingError(f"Cannot connect to {host}:{port}: {e}") from e
    return TcpChannel(sock, timeout)


def channel_pair(
    kind: str = "inproc",
    host: str = "127.0.0.1",
    port: int = 0,
    timeout: float = DEFAULT_TIMEOUT,
) -> Tuple[Channel, Channel]:
    """(client end, server end) of a fresh connection."""
    if kind == "inproc":
        return InProcessChannel.pair(timeout)
    if kind == "tcp":
        listener = TcpListener(host, port, timeout)
        try:
            client = tcp_connect(listener.host, listener.port, timeout)
            server = listener.accept()
        finally:
            listener.close()
        return client, server
    raise FramingError(f"Unknown transport: {kind}")


def send_frame(channel: Channel, tag: FrameTag, payload: bytes = b""):
    channel.send(Frame(tag, payload))
