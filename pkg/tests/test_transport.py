import threading

import pytest

from core.errors import FramingError
from core.transport import (
    HEADER,
    Frame,
    FrameTag,
    InProcessChannel,
    TcpListener,
    channel_pair,
    send_frame,
    tcp_connect,
)


def test_frame_layout():
    raw = Frame(FrameTag.REQUEST, b"abc").encode()
    assert raw == b"\x00\x00\x00\x04\x02abc"
    assert Frame.decode(raw) == Frame(FrameTag.REQUEST, b"abc")


def test_frame_decode_errors():
    with pytest.raises(FramingError):
        Frame.decode(b"\x00\x00")
    with pytest.raises(FramingError):
        Frame.decode(b"\x00\x00\x00\x05\x02abc")
    with pytest.raises(FramingError):
        Frame.decode(b"\x00\x00\x00\x01\x63")


@pytest.mark.parametrize("kind", ["inproc", "tcp"])
def test_pair_carries_frames(kind):
    client, server = channel_pair(kind, timeout=5)
    with client, server:
        send_frame(client, FrameTag.REQUEST, b"x" * 1000)
        assert server.expect(FrameTag.REQUEST).payload == b"x" * 1000
        send_frame(server, FrameTag.RESPONSE, b"")
        assert client.recv() == Frame(FrameTag.RESPONSE, b"")
        assert client.bytes_sent == server.bytes_received == HEADER.size + 1001


def test_unexpected_tag():
    client, server = InProcessChannel.pair(timeout=1)
    send_frame(client, FrameTag.HELLO)
    with pytest.raises(FramingError):
        server.expect(FrameTag.REQUEST)


def test_expect_accepts_close():
    client, server = InProcessChannel.pair(timeout=1)
    send_frame(client, FrameTag.CLOSE)
    assert server.expect(FrameTag.REQUEST, FrameTag.CLOSE).tag is FrameTag.CLOSE


@pytest.mark.parametrize("kind", ["inproc", "tcp"])
def test_one_mebibyte_echo(kind):
    payload = bytes(range(256)) * 4096  # 1 MiB
    client, server = channel_pair(kind, timeout=10)

    def echo():
        frame = server.expect(FrameTag.REQUEST)
        send_frame(server, FrameTag.RESPONSE, frame.payload)

    thread = threading.Thread(target=echo)
    with client, server:
        thread.start()
        send_frame(client, FrameTag.REQUEST, payload)
        assert client.expect(FrameTag.RESPONSE).payload == payload
        thread.join(timeout=10)


def test_peer_close_is_short_read():
    client, server = InProcessChannel.pair(timeout=1)
    client.send_raw(b"\x00\x00\x00\x09\x02ab")
    client.close()
    with pytest.raises(FramingError):
        server.recv()


def test_zero_length_rejected():
    client, server = InProcessChannel.pair(timeout=1)
    client.send_raw(b"\x00\x00\x00\x00")
    with pytest.raises(FramingError):
        server.recv()


def test_oversized_frame_rejected():
    client, server = InProcessChannel.pair(timeout=1)
    client.send_raw(b"\xff\xff\xff\xff")
    with pytest.raises(FramingError):
        server.recv()


def test_timeout():
    _, server = InProcessChannel.pair(timeout=0.05)
    with pytest.raises(FramingError):
        server.recv()


def test_send_after_close():
    client, _ = InProcessChannel.pair(timeout=1)
    client.close()
    with pytest.raises(FramingError):
        send_frame(client, FrameTag.CLOSE)


def test_tcp_listener_and_connect():
    listener = TcpListener(port=0, timeout=5)
    received = []

    def serve():
        with listener.accept() as channel:
            received.append(channel.recv())

    thread = threading.Thread(target=serve)
    thread.start()
    with tcp_connect(listener.host, listener.port, timeout=5) as channel:
        send_frame(channel, FrameTag.ATTEST, b"n" * 32)
    thread.join(5)
    listener.close()
    assert received == [Frame(FrameTag.ATTEST, b"n" * 32)]


def test_connect_refused():
    listener = TcpListener(port=0)
    port = listener.port
    listener.close()
    with pytest.raises(FramingError):
        tcp_connect("127.0.0.1", port, timeout=1)


def test_unknown_transport():
    with pytest.raises(FramingError):
        channel_pair("carrier-pigeon")
