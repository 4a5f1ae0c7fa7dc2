"""Long-running multi-client search service over built indices.

Transport is newline-delimited JSON over TCP: the server greets each
connection with the banner ``{"server": "hybrid-retriever", "proto": 1}``,
then answers one response object per request line, echoing the request id.
A malformed line produces an error response and the connection stays open.
All state is loaded read-only before the socket binds, so worker threads
share it without locks; the server adds transport, never semantics.

Request:  {"id": int, "op": "ping"|"knn_query"|"score"|"pipeline_query",
           "payload": {...}}
Response: {"id": int|null, "status": "ok"|"error",
           "hits": [[docno, score], ...], "message"?: str}

``knn_query`` payloads carry ``k`` plus either ``entry`` (a query JSON
object, vectorized server-side) or ``vector`` (``{"kind": "dense",
"values": [...]}`` or ``{"kind": "sparse", "ids": [...], "values":
[...]}``). ``score`` re-scores explicit ``docnos`` for a query entry with
the pipeline's final model (provider scores when no model is configured).
"""

from __future__ import annotations

import json
import socketserver
import threading

import numpy as np

from .forward import DOCNO_KEY, QueryEntry
from .pipeline import Pipeline
from .vectors import SparseVector, dense

PROTO_VERSION = 1
BANNER = {"server": "hybrid-retriever", "proto": PROTO_VERSION}

# compact encoding: the banner is specified byte-exactly, so no spaces
_SEPARATORS = (",", ":")


def _encode_line(obj: dict) -> bytes:
    return json.dumps(obj, separators=_SEPARATORS).encode("utf-8") + b"\n"


def decode_vector(obj: dict):
    kind = obj.get("kind")
    if kind == "dense":
        return dense(obj["values"])
    if kind == "sparse":
        return SparseVector.from_pairs(zip(obj["ids"], obj["values"]))
    raise ValueError(f"unknown vector kind {kind!r}")


def encode_vector(vec) -> dict:
    if isinstance(vec, SparseVector):
        return {"kind": "sparse", "ids": vec.term_ids.tolist(),
                "values": [float(v) for v in vec.values]}
    return {"kind": "dense", "values": [float(v) for v in np.asarray(vec)]}


def entry_from_payload(obj: dict) -> QueryEntry:
    entry = dict(obj)
    docno = str(entry.pop(DOCNO_KEY, "q"))
    return QueryEntry(docno, {k: str(v) for k, v in entry.items()})


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        self.wfile.write(_encode_line(BANNER))
        while True:
            line = self.rfile.readline()
            if not line:
                return
            if not line.strip():
                continue
            response = self.server.app.handle_line(line)
            self.wfile.write(_encode_line(response))


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class QueryServer:
    """One logical worker per connection; per-connection requests are FIFO."""

    def __init__(self, pipeline: Pipeline, host: str = "127.0.0.1", port: int = 7654):
        self.pipeline = pipeline
        self._server = _ThreadingServer((host, port), _Handler)
        self._server.app = self
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address

    # -- request handling --------------------------------------------------

    def handle_line(self, line: bytes) -> dict:
        try:
            request = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return {"id": None, "status": "error", "message": f"malformed request: {exc}"}
        req_id = request.get("id") if isinstance(request, dict) else None
        try:
            if not isinstance(request, dict):
                raise ValueError("request must be a JSON object")
            hits = self.dispatch(request.get("op"), request.get("payload") or {})
            return {"id": req_id, "status": "ok", "hits": hits}
        except Exception as exc:
            return {"id": req_id, "status": "error", "message": str(exc)}

    def dispatch(self, op: str, payload: dict) -> list:
        if op == "ping":
            return []
        if op == "knn_query":
            k = int(payload.get("k", 10))
            if "vector" in payload:
                ranking = self.pipeline.provider.search_vector(
                    decode_vector(payload["vector"]), k)
            elif "entry" in payload:
                ranking = self.pipeline.provider.search(
                    entry_from_payload(payload["entry"]), k)
            else:
                raise ValueError("knn_query payload needs 'entry' or 'vector'")
            return [[docno, score] for docno, score in ranking]
        if op == "pipeline_query":
            k = payload.get("k")
            result = self.pipeline.run(entry_from_payload(payload["entry"]),
                                       int(k) if k is not None else None)
            return [[docno, score] for docno, score in result.ranking]
        if op == "score":
            query = entry_from_payload(payload["entry"])
            docnos = [str(d) for d in payload["docnos"]]
            stage = self.pipeline.final or self.pipeline.interm
            if stage is not None:
                ranking = stage.rerank(query, [(d, 0.0) for d in docnos])
            else:
                wanted = set(docnos)
                ranking = [(d, s) for d, s in
                           self.pipeline.provider.search(query, self.pipeline.descriptor.cand_qty)
                           if d in wanted]
            return [[docno, score] for docno, score in ranking]
        raise ValueError(f"unknown op {op!r}")

    # -- lifecycle ----------------------------------------------------------

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def start_background(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve(descriptor_path: str, bind: str = "127.0.0.1:7654",
          forward_dir: str | None = None) -> QueryServer:
    """Build the pipeline, bind the socket and return the (not yet running)
    server; callers pick ``serve_forever`` or ``start_background``."""
    from .pipeline import load_descriptor

    host, _, port = bind.partition(":")
    descriptor = load_descriptor(descriptor_path)
    pipeline = Pipeline(descriptor, forward_dir=forward_dir)
    return QueryServer(pipeline, host or "127.0.0.1", int(port or 7654))
