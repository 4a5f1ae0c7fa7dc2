"""Unit behavior: codec round trips, typed failures, session semantics."""

import json
import socket
import socketserver
import threading

import pytest

from retriever_client import (
    ClientSession,
    ConnectionFailed,
    ProtocolMismatch,
    ServerError,
    connect,
    decode_request,
    decode_response,
    dense_vector,
    encode_request,
    encode_response,
    sparse_vector,
)

# canonical wire lines: encode(decode(x)) must reproduce them byte for byte
PROTOCOL_TEST_VECTORS = [
    b'{"id":1,"op":"ping"}\n',
    b'{"id":2,"op":"knn_query","payload":{"entry":{"text":"a b"},"k":5}}\n',
    b'{"id":3,"op":"knn_query","payload":{"vector":{"kind":"dense","values":[1.0,-2.5]},"k":3}}\n',
    b'{"id":4,"op":"knn_query","payload":{"vector":{"kind":"sparse","ids":[3,9],"values":[0.5,1.25]},"k":1}}\n',
    b'{"id":5,"op":"pipeline_query","payload":{"entry":{"DOCNO":"q1","text":"x"},"k":10}}\n',
]

RESPONSE_TEST_VECTORS = [
    b'{"id":1,"status":"ok","hits":[]}\n',
    b'{"id":2,"status":"ok","hits":[["d1",1.5],["d2",0.25]]}\n',
    b'{"id":null,"status":"error","message":"malformed request"}\n',
]


class TestCodec:
    def test_request_round_trip(self):
        for line in PROTOCOL_TEST_VECTORS:
            obj = decode_request(line)
            encoded = encode_request(obj["id"], obj["op"], obj.get("payload"))
            assert encoded == line

    def test_response_round_trip(self):
        for line in RESPONSE_TEST_VECTORS:
            assert encode_response(decode_response(line)) == line

    def test_vector_builders(self):
        assert dense_vector([1, 2.5]) == {"kind": "dense", "values": [1.0, 2.5]}
        assert sparse_vector([3, 9], [0.5, 1.25]) == {
            "kind": "sparse", "ids": [3, 9], "values": [0.5, 1.25]}

    def test_bad_response_line(self):
        with pytest.raises(ProtocolMismatch):
            decode_response(b"{oops\n")


class _FakeServer:
    """Minimal scripted server for failure-path tests."""

    def __init__(self, banner: bytes, after=None):
        self.banner = banner
        self.after = after
        self._sock = socket.socket()
        self._sock.bind(("127.0.0.1", 0))
        self._sock.listen(1)
        self.address = self._sock.getsockname()
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    def _serve(self):
        conn, _ = self._sock.accept()
        conn.sendall(self.banner)
        if self.after == "close":
            conn.close()
        elif self.after == "echo_wrong_id":
            conn.makefile("rb").readline()
            conn.sendall(b'{"id":999,"status":"ok","hits":[]}\n')
        self._sock.close()


class TestFailures:
    def test_connection_refused(self):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        with pytest.raises(ConnectionFailed):
            connect(("127.0.0.1", port), timeout=2)

    def test_protocol_mismatch_banner(self):
        fake = _FakeServer(b'{"server":"hybrid-retriever","proto":99}\n')
        with pytest.raises(ProtocolMismatch):
            connect(fake.address, timeout=5)

    def test_server_closing_mid_session_raises(self):
        fake = _FakeServer(b'{"server":"hybrid-retriever","proto":1}\n',
                           after="close")
        session = connect(fake.address, timeout=5)
        with pytest.raises(ConnectionFailed):
            session.ping()

    def test_wrong_response_id(self):
        fake = _FakeServer(b'{"server":"hybrid-retriever","proto":1}\n',
                           after="echo_wrong_id")
        session = connect(fake.address, timeout=5)
        with pytest.raises(ProtocolMismatch):
            session.ping()

    def test_closed_session_rejects_requests(self):
        fake = _FakeServer(b'{"server":"hybrid-retriever","proto":1}\n',
                           after="close")
        session = connect(fake.address, timeout=5)
        session.close()
        with pytest.raises(ConnectionFailed):
            session.ping()


class TestAgainstRealServer:
    def test_banner_fields(self, server):
        with connect(server["address"]) as session:
            assert session.server_name == "hybrid-retriever"
            assert session.proto == 1

    def test_ids_increase_per_session(self, server):
        with connect(server["address"]) as session:
            session.ping()
            first = session._next_id
            session.ping()
            assert session._next_id == first + 1

    def test_error_status_becomes_typed_exception(self, server):
        # the toy index is sparse: a dense query vector is a type error
        with connect(server["address"]) as session:
            with pytest.raises(ServerError):
                session.knn_query(dense_vector([1.0, 2.0]), k=3)
            session.ping()  # connection survives the error

    def test_text_and_entry_forms_agree(self, server):
        with connect(server["address"]) as session:
            a = session.knn_query("t00w0 t00w1", k=5)
            b = session.knn_query({"DOCNO": "q", "text": "t00w0 t00w1"}, k=5)
            assert a == b

    def test_pipeline_query_rejects_vector_form(self, server):
        with connect(server["address"]) as session:
            with pytest.raises(TypeError):
                session.pipeline_query(dense_vector([1.0]), k=3)
