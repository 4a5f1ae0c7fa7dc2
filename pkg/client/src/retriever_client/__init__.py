"""Synchronous client for the hybrid-retriever query server.

The server speaks newline-delimited JSON over TCP (protocol 1): it sends a
banner line on connect, then answers one response object per request line,
echoing the request id. This client is blocking and not thread-safe; use
one session per thread.

    with connect(("127.0.0.1", 7654)) as session:
        session.ping()
        hits = session.knn_query("nfl team super bowl", k=10)

Failures surface as typed exceptions, never as silently empty results:
:class:`ConnectionFailed` for refused/dropped connections,
:class:`ProtocolMismatch` for a foreign or incompatible server, and
:class:`ServerError` for error-status responses.
"""

from __future__ import annotations

import json
import socket
from typing import Iterable, Union

SUPPORTED_PROTO = 1
SERVER_NAME = "hybrid-retriever"

Hit = tuple[str, float]
QueryLike = Union[str, dict]


class ClientError(Exception):
    """Base class for everything this client raises on purpose."""


class ConnectionFailed(ClientError):
    pass


class ProtocolMismatch(ClientError):
    pass


class ServerError(ClientError):
    """The server answered with status "error"; the message is preserved."""


# --- wire codec -------------------------------------------------------------
#
# Canonical encoding: compact separators, keys in protocol order. The
# round-trip tests rely on encode(decode(line)) reproducing the line.

_SEPARATORS = (",", ":")


def encode_request(request_id: int, op: str, payload: dict | None = None) -> bytes:
    obj: dict = {"id": request_id, "op": op}
    if payload is not None:
        obj["payload"] = payload
    return json.dumps(obj, separators=_SEPARATORS).encode("utf-8") + b"\n"


def decode_request(line: bytes) -> dict:
    return json.loads(line.decode("utf-8"))


def encode_response(obj: dict) -> bytes:
    return json.dumps(obj, separators=_SEPARATORS).encode("utf-8") + b"\n"


def decode_response(line: bytes) -> dict:
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolMismatch(f"unparseable server line: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolMismatch("server line is not a JSON object")
    return obj


def dense_vector(values: Iterable[float]) -> dict:
    return {"kind": "dense", "values": [float(v) for v in values]}


def sparse_vector(ids: Iterable[int], values: Iterable[float]) -> dict:
    return {"kind": "sparse", "ids": [int(i) for i in ids],
            "values": [float(v) for v in values]}


def _as_payload_query(query: QueryLike) -> dict:
    """Map the accepted query forms onto the wire payload.

    Strings become a text entry; dicts with a "kind" key are raw vectors;
    any other dict is a query entry (DOCNO optional).
    """
    if isinstance(query, str):
        return {"entry": {"text": query}}
    if isinstance(query, dict):
        if query.get("kind") in ("dense", "sparse"):
            return {"vector": query}
        return {"entry": query}
    raise TypeError(f"query must be text, an entry dict or a vector dict, "
                    f"got {type(query).__name__}")


# --- the session -------------------------------------------------------------


class ClientSession:
    """One TCP connection; request ids increase monotonically per session."""

    def __init__(self, address: tuple[str, int], timeout: float = 30.0):
        self.address = (address[0], int(address[1]))
        try:
            self._sock = socket.create_connection(self.address, timeout=timeout)
        except OSError as exc:
            raise ConnectionFailed(f"cannot connect to {self.address}: {exc}") from exc
        self._fh = self._sock.makefile("rwb")
        self._next_id = 0
        self._closed = False
        banner = decode_response(self._read_line())
        self.server_name = banner.get("server")
        self.proto = banner.get("proto")
        if self.proto != SUPPORTED_PROTO:
            self.close()
            raise ProtocolMismatch(
                f"server speaks protocol {self.proto!r}, this client needs "
                f"{SUPPORTED_PROTO}")

    # -- plumbing --------------------------------------------------------

    def _read_line(self) -> bytes:
        try:
            line = self._fh.readline()
        except OSError as exc:
            raise ConnectionFailed(f"connection lost: {exc}") from exc
        if not line:
            raise ConnectionFailed("server closed the connection")
        return line

    def _roundtrip(self, op: str, payload: dict | None = None) -> dict:
        if self._closed:
            raise ConnectionFailed("session is closed")
        self._next_id += 1
        request_id = self._next_id
        try:
            self._fh.write(encode_request(request_id, op, payload))
            self._fh.flush()
        except OSError as exc:
            raise ConnectionFailed(f"connection lost: {exc}") from exc
        response = decode_response(self._read_line())
        if response.get("id") != request_id:
            raise ProtocolMismatch(
                f"response id {response.get('id')!r} does not match request "
                f"id {request_id}")
        if response.get("status") == "error":
            raise ServerError(response.get("message", "server error"))
        if response.get("status") != "ok":
            raise ProtocolMismatch(f"unexpected status {response.get('status')!r}")
        return response

    @staticmethod
    def _hits(response: dict) -> list[Hit]:
        return [(str(docno), float(score))
                for docno, score in response.get("hits", [])]

    # -- operations --------------------------------------------------------

    def ping(self) -> None:
        self._roundtrip("ping")

    def knn_query(self, query: QueryLike, k: int = 10) -> list[Hit]:
        payload = _as_payload_query(query)
        payload["k"] = int(k)
        return self._hits(self._roundtrip("knn_query", payload))

    def pipeline_query(self, entry: QueryLike, k: int | None = None) -> list[Hit]:
        payload = _as_payload_query(entry)
        if "entry" not in payload:
            raise TypeError("pipeline_query takes a query entry, not a raw vector")
        if k is not None:
            payload["k"] = int(k)
        return self._hits(self._roundtrip("pipeline_query", payload))

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._fh.close()
            except OSError:
                pass
            self._sock.close()

    def __enter__(self) -> "ClientSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def connect(address: tuple[str, int] | str, timeout: float = 30.0) -> ClientSession:
    """Open a session; accepts ("host", port) or "host:port"."""
    if isinstance(address, str):
        host, _, port = address.partition(":")
        address = (host or "127.0.0.1", int(port or 7654))
    return ClientSession(address, timeout=timeout)


__all__ = [
    "ClientError",
    "ClientSession",
    "ConnectionFailed",
    "ProtocolMismatch",
    "ServerError",
    "connect",
    "decode_request",
    "decode_response",
    "dense_vector",
    "encode_request",
    "encode_response",
    "sparse_vector",
]
