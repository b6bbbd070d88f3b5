import json
import socket
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from demapf.engine import LocalHost
from demapf.netmodel import TravellerSpec
from demapf.plan import ProtocolViolation
from demapf.protocol import (
    WIRE_VERSION,
    LocalTransport,
    MessageKind,
    Postmarks,
    RoundMessage,
    SequenceCheck,
    decode_body,
    decode_frame,
    encode_frame,
)
from demapf.tcp import FramedSocket, RemoteHost, TransportError, serve_worker
from demapf.traveller import Traveller

from instances import TINY_CFG, line

json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10**9, 10**9) | st.text(max_size=8),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=6), inner, max_size=4),
    max_leaves=12,
)

messages = st.builds(
    RoundMessage,
    st.sampled_from(list(MessageKind)), st.integers(0, 10**6), st.text(min_size=1, max_size=10),
    st.text(min_size=1, max_size=10), st.dictionaries(st.text(max_size=6), json_values, max_size=5),
    st.integers(0, 10**6),
)


@given(messages)
def test_codec_round_trip(msg):
    frame = encode_frame(msg.to_json())
    obj, rest = decode_frame(frame)
    assert rest == b""
    back = RoundMessage.from_json(obj)
    assert back == msg
    assert encode_frame(back.to_json()) == frame


def test_frame_layout():
    frame = encode_frame({"v": 1, "x": "é"})
    body = frame[4:]
    assert int.from_bytes(frame[:4], "big") == len(body)
    assert json.loads(body.decode("utf-8")) == {"v": 1, "x": "é"}


def test_two_frames_in_one_buffer():
    buf = encode_frame({"v": 1, "n": 1}) + encode_frame({"v": 1, "n": 2})
    first, rest = decode_frame(buf)
    second, rest = decode_frame(rest)
    assert (first["n"], second["n"], rest) == (1, 2, b"")


@pytest.mark.parametrize("body", [b'{"v": 2}', b'{"kind": 1}', b"[1]", b"\xff\xfe", b"{"])
def test_bad_bodies_rejected(body):
    with pytest.raises(ProtocolViolation):
        decode_body(body)


def test_truncated_frames():
    frame = encode_frame({"v": 1})
    with pytest.raises(ProtocolViolation):
        decode_frame(frame[:3])
    with pytest.raises(ProtocolViolation):
        decode_frame(frame[:-1])


def test_unknown_version_message():
    obj = RoundMessage(MessageKind.FAILED, 1, "a", "b", {}).to_json()
    obj["v"] = WIRE_VERSION + 1
    with pytest.raises(ProtocolViolation):
        RoundMessage.from_json(obj)


class SwappingTransport(LocalTransport):
    """Test double that delivers each mailbox in reverse order."""

    def recv(self, recipient):
        msgs = list(reversed(self.boxes.pop(recipient, [])))
        return [self.check.accept(m) for m in msgs]


def test_out_of_order_delivery_detected():
    post = Postmarks()
    t = SwappingTransport()
    for i in range(2):
        t.send(post.stamp(MessageKind.RESERVE_REQUEST, 1, "a", "loc", {"i": i}))
    with pytest.raises(ProtocolViolation):
        t.recv("loc")


def test_in_order_delivery_accepted():
    post = Postmarks()
    t = LocalTransport()
    for i in range(3):
        t.send(post.stamp(MessageKind.RESERVE_REQUEST, 1, "a", "loc", {"i": i}))
    assert [m.payload["i"] for m in t.recv("loc")] == [0, 1, 2]
    assert t.pending() == [] and t.sent == 3


def test_duplicate_and_gap_detected():
    check = SequenceCheck()
    m0 = RoundMessage(MessageKind.FAILED, 1, "a", "b", {}, 0)
    check.accept(m0)
    with pytest.raises(ProtocolViolation):
        check.accept(m0)
    with pytest.raises(ProtocolViolation):
        SequenceCheck().accept(RoundMessage(MessageKind.FAILED, 1, "a", "b", {}, 1))


def test_round_going_backwards_detected():
    check = SequenceCheck()
    check.accept(RoundMessage(MessageKind.FAILED, 5, "a", "b", {}, 0))
    with pytest.raises(ProtocolViolation):
        check.accept(RoundMessage(MessageKind.FAILED, 4, "a", "b", {}, 1))


@pytest.fixture
def worker_link():
    """A RemoteHost link to a worker loop running in a thread."""
    server = socket.create_server(("127.0.0.1", 0))
    port = server.getsockname()[1]
    result = {}
    th = threading.Thread(target=lambda: result.setdefault("rc", serve_worker(f"127.0.0.1:{port}")))
    th.start()
    conn, _ = server.accept()
    server.close()
    yield FramedSocket(conn), result, th
    th.join(timeout=10)


def test_framed_socket_round_trip():
    a, b = socket.socketpair()
    fa, fb = FramedSocket(a), FramedSocket(b)
    msg = RoundMessage(MessageKind.RESERVE_REQUEST, 3, "t", "loc", {"entry": 1, "exit": 4}, 7)
    fa.send(msg.to_json())
    assert RoundMessage.from_json(fb.recv()) == msg
    fa.close()
    with pytest.raises(TransportError):
        fb.recv()
    fb.close()


def test_remote_host_mirrors_local_host(worker_link):
    link, result, th = worker_link
    net = line(3)
    specs = [TravellerSpec("x", 1, 2, "a", "c"), TravellerSpec("y", 2, 1, "c", "a")]
    local = LocalHost([Traveller(s, net, TINY_CFG) for s in specs])
    remote = RemoteHost(link, specs, net, TINY_CFG)
    assert remote.ids == ["x", "y"]
    assert remote.start() == local.start() == []
    assert remote.emit(1) == local.emit(1)
    assert remote.stats() == local.stats()
    remote.close()
    th.join(timeout=10)
    assert result["rc"] == 0


def test_worker_reports_protocol_errors(worker_link):
    link, result, th = worker_link
    link.send({"v": 1, "control": "bogus"})
    reply = link.recv()
    assert reply["control"] == "error" and "bogus" in reply["message"]
    th.join(timeout=10)
    link.close()
    assert result["rc"] == 1
