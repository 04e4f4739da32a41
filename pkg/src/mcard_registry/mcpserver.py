"""MCP frontend: JSON-RPC 2.0 over an SSE transport with persistent sessions.

Transport shape: ``GET /sse`` opens the event stream and announces
``event: endpoint`` with the session's message path; clients POST JSON-RPC
messages to ``/messages?session_id=...`` and receive every response as an
``event: message`` on their stream, correlated by request id. A comment
heartbeat keeps idle streams alive. ``DELETE /messages?session_id=...``
closes a session explicitly.

Two backends expose the same surface (one resource, two tools): ``native``
calls the registry in-process; ``layered`` forwards each call to a REST
server and wraps the REST body verbatim, which is exactly the double
serialization an adapter architecture pays.
"""

from __future__ import annotations

import http.client
import json
import queue
import secrets
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler
from urllib.parse import parse_qs, quote, urlsplit

from . import wire
from .errors import ApiError, NotFoundError
from .registry import Registry
from .rest import QuietThreadingHTTPServer

PROTOCOL_VERSION = "2024-11-05"
SERVER_INFO = {"name": "mcard-mcp", "version": "0.1.0"}

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
NOT_INITIALIZED = -32002
RESOURCE_NOT_FOUND = -32010

RESOURCE_DESCRIPTOR = {
    "uri_template": "modelcard://{mc_id}",
    "description": "Aggregated model card for a registry identifier",
    "media_type": "application/json",
}

TOOL_DESCRIPTORS = [
    {
        "name": "create_edge",
        "description": "Create a directed, schema-validated relationship between two graph elements",
        "input_schema": {
            "type": "object",
            "properties": {
                "source_id": {"type": "string"},
                "target_id": {"type": "string"},
            },
            "required": ["source_id", "target_id"],
        },
    },
    {
        "name": "search_model_cards",
        "description": "Rank model cards against a text query",
        "input_schema": {
            "type": "object",
            "properties": {
                "query": {"type": "string"},
                "limit": {"type": "integer"},
            },
            "required": ["query"],
        },
    },
]


@dataclass
class McpConfig:
    host: str = "127.0.0.1"
    port: int = 0
    backend: str = "native"  # "native" | "layered"
    rest_base_url: str | None = None  # layered only
    session_cap: int = 256
    heartbeat_seconds: float = 15.0
    fresh_rest_connection_per_call: bool = False

    def __post_init__(self):
        if self.backend not in ("native", "layered"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "layered" and not self.rest_base_url:
            raise ValueError("layered backend needs rest_base_url")


class ToolOutcome:
    """Backend result: the exact payload text plus the error flag."""

    __slots__ = ("text", "is_error")

    def __init__(self, text: str, is_error: bool):
        self.text = text
        self.is_error = is_error


class NativeBackend:
    def __init__(self, registry: Registry):
        self.registry = registry

    def read_card(self, mc_id: str, auth: str | None) -> str:
        agg = self.registry.retrieve_model_card(mc_id)  # NotFoundError propagates
        return wire.dumps(wire.aggregated_to_jsonable(agg))

    def create_edge(self, source_id: str, target_id: str, auth: str | None) -> ToolOutcome:
        try:
            created = self.registry.create_edge(source_id, target_id)
        except ApiError as exc:
            return ToolOutcome(wire.dumps(exc.to_body()), True)
        return ToolOutcome(wire.dumps(wire.edge_created_to_jsonable(created)), False)

    def search(self, query: str, limit: int, auth: str | None) -> ToolOutcome:
        try:
            hits = self.registry.search_model_cards(query, limit)
        except ApiError as exc:
            return ToolOutcome(wire.dumps(exc.to_body()), True)
        return ToolOutcome(wire.dumps(wire.search_hits_to_jsonable(hits)), False)

    def close(self):
        pass


class LayeredBackend:
    """Adapter backend: one REST request per operation, body wrapped verbatim.

    Reuses one keep-alive connection per session unless configured to dial a
    fresh connection per call.
    """

    def __init__(self, rest_base_url: str, fresh_per_call: bool = False):
        split = urlsplit(rest_base_url)
        if split.scheme != "http" or not split.netloc:
            raise ValueError(f"rest_base_url must be http://host:port, got {rest_base_url!r}")
        self._host = split.hostname
        self._port = split.port or 80
        self._fresh_per_call = fresh_per_call
        self._conn: http.client.HTTPConnection | None = None
        self._lock = threading.Lock()

    def _request(self, method: str, path: str, body: bytes | None, auth: str | None):
        headers = {}
        if auth:
            headers["Authorization"] = auth
        if body is not None:
            headers["Content-Type"] = "application/json"
        with self._lock:
            if self._fresh_per_call and self._conn is not None:
                self._conn.close()
                self._conn = None
            for attempt in (0, 1):
                if self._conn is None:
                    self._conn = http.client.HTTPConnection(self._host, self._port, timeout=60)
                try:
                    self._conn.request(method, path, body=body, headers=headers)
                    resp = self._conn.getresponse()
                    payload = resp.read()
                    status = resp.status
                    break
                except (http.client.RemoteDisconnected, BrokenPipeError, ConnectionResetError):
                    # stale keep-alive connection: REST never saw the request
                    self._conn.close()
                    self._conn = None
                    if attempt:
                        raise
            if self._fresh_per_call:
                self._conn.close()
                self._conn = None
        return status, payload

    def read_card(self, mc_id: str, auth: str | None) -> str:
        status, payload = self._request("GET", f"/modelcard/{quote(mc_id)}", None, auth)
        if status == 404:
            raise NotFoundError(f"no model card {mc_id!r}")
        if status != 200:
            raise ApiError(f"REST backend returned {status}: {payload[:200]!r}")
        return payload.decode("utf-8")

    def create_edge(self, source_id: str, target_id: str, auth: str | None) -> ToolOutcome:
        body = wire.dump_bytes({"source_id": source_id, "target_id": target_id})
        status, payload = self._request("POST", "/edge", body, auth)
        return ToolOutcome(payload.decode("utf-8"), status >= 400)

    def search(self, query: str, limit: int, auth: str | None) -> ToolOutcome:
        path = f"/search?q={quote(query)}&limit={limit}"
        status, payload = self._request("GET", path, None, auth)
        return ToolOutcome(payload.decode("utf-8"), status >= 400)

    def close(self):
        with self._lock:
            if self._conn is not None:
                self._conn.close()
                self._conn = None


class McpSession:
    def __init__(self, session_id: str, backend):
        self.session_id = session_id
        self.state = "connected"  # -> initialized -> closed
        self.created_at = time.time()
        self.events: queue.Queue = queue.Queue()
        self.lock = threading.Lock()  # serializes request processing
        self.backend = backend

    def emit(self, message: dict) -> None:
        self.events.put(message)


class McpServer:
    def __init__(self, config: McpConfig, registry: Registry | None = None):
        self.config = config
        if config.backend == "native":
            if registry is None:
                raise ValueError("native backend needs a registry")
            self._make_backend = lambda: NativeBackend(registry)
        else:
            self._make_backend = lambda: LayeredBackend(
                config.rest_base_url, config.fresh_rest_connection_per_call
            )
        self.sessions: dict[str, McpSession] = {}
        self._sessions_lock = threading.Lock()
        handler = _make_handler(self)
        self._httpd = QuietThreadingHTTPServer((config.host, config.port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> "McpServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        for session_id in list(self.sessions):
            self.close_session(session_id)
        self._httpd.shutdown()
        self._httpd.server_close()

    # --- session management ---

    def open_session(self) -> McpSession | None:
        with self._sessions_lock:
            if len(self.sessions) >= self.config.session_cap:
                return None
            session = McpSession(secrets.token_hex(16), self._make_backend())
            self.sessions[session.session_id] = session
            return session

    def get_session(self, session_id: str) -> McpSession | None:
        with self._sessions_lock:
            return self.sessions.get(session_id)

    def close_session(self, session_id: str) -> None:
        with self._sessions_lock:
            session = self.sessions.pop(session_id, None)
        if session is None:
            return
        session.state = "closed"
        session.backend.close()
        session.events.put(None)  # wakes the stream writer

    # --- JSON-RPC dispatch ---

    def handle_post_body(self, session: McpSession, raw: bytes, auth: str | None) -> None:
        with session.lock:
            try:
                message = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                session.emit(_error_response(None, PARSE_ERROR, f"parse error: {exc}"))
                return
            if not isinstance(message, dict) or message.get("jsonrpc") != "2.0" \
                    or not isinstance(message.get("method"), str):
                msg_id = message.get("id") if isinstance(message, dict) else None
                session.emit(_error_response(msg_id, INVALID_REQUEST, "invalid request"))
                return
            msg_id = message.get("id")
            if msg_id is None:
                return  # notification: processed silently, never answered
            response = self._dispatch(session, msg_id, message["method"],
                                      message.get("params") or {}, auth)
            session.emit(response)

    def _dispatch(self, session: McpSession, msg_id, method: str, params, auth) -> dict:
        if not isinstance(params, dict):
            return _error_response(msg_id, INVALID_REQUEST, "params must be an object")
        if method == "initialize":
            if session.state != "connected":
                return _error_response(msg_id, INVALID_REQUEST, "session already initialized")
            session.state = "initialized"
            return _result_response(msg_id, {
                "protocolVersion": PROTOCOL_VERSION,
                "serverInfo": dict(SERVER_INFO),
                "capabilities": {"tools": {}, "resources": {}},
            })
        if session.state != "initialized":
            return _error_response(msg_id, NOT_INITIALIZED, "session not initialized")
        if method == "resources/list":
            return _result_response(msg_id, {"resources": [dict(RESOURCE_DESCRIPTOR)]})
        if method == "resources/read":
            return self._resources_read(session, msg_id, params, auth)
        if method == "tools/list":
            return _result_response(msg_id, {"tools": [dict(t) for t in TOOL_DESCRIPTORS]})
        if method == "tools/call":
            return self._tools_call(session, msg_id, params, auth)
        return _error_response(msg_id, METHOD_NOT_FOUND, f"unknown method {method!r}")

    def _resources_read(self, session: McpSession, msg_id, params, auth) -> dict:
        uri = params.get("uri")
        if not isinstance(uri, str) or not uri.startswith("modelcard://"):
            return _error_response(msg_id, INVALID_PARAMS, "uri must match modelcard://{mc_id}")
        mc_id = uri[len("modelcard://"):]
        if not mc_id or "/" in mc_id:
            return _error_response(msg_id, INVALID_PARAMS, "uri must carry one path segment")
        try:
            text = session.backend.read_card(mc_id, auth)
        except NotFoundError:
            return _error_response(msg_id, RESOURCE_NOT_FOUND, "NOT_FOUND")
        return _result_response(msg_id, {
            "contents": [{"uri": uri, "mimeType": "application/json", "text": text}],
        })

    def _tools_call(self, session: McpSession, msg_id, params, auth) -> dict:
        name = params.get("name")
        arguments = params.get("arguments") or {}
        if not isinstance(name, str):
            return _error_response(msg_id, INVALID_PARAMS, "tool name required")
        if not isinstance(arguments, dict):
            return _error_response(msg_id, INVALID_PARAMS, "arguments must be an object")
        if name == "create_edge":
            source = arguments.get("source_id")
            target = arguments.get("target_id")
            if not isinstance(source, str) or not isinstance(target, str):
                return _error_response(
                    msg_id, INVALID_PARAMS, "source_id and target_id must be strings"
                )
            outcome = session.backend.create_edge(source, target, auth)
        elif name == "search_model_cards":
            query = arguments.get("query")
            limit = arguments.get("limit", 10)
            if not isinstance(query, str):
                return _error_response(msg_id, INVALID_PARAMS, "query must be a string")
            if isinstance(limit, bool) or not isinstance(limit, int):
                return _error_response(msg_id, INVALID_PARAMS, "limit must be an integer")
            outcome = session.backend.search(query, limit, auth)
        else:
            return _error_response(msg_id, METHOD_NOT_FOUND, f"unknown tool {name!r}")
        return _result_response(msg_id, {
            "content": [{"type": "text", "text": outcome.text}],
            "isError": outcome.is_error,
        })


def _result_response(msg_id, result: dict) -> dict:
    return {"jsonrpc": "2.0", "id": msg_id, "result": result}


def _error_response(msg_id, code: int, message: str) -> dict:
    return {"jsonrpc": "2.0", "id": msg_id, "error": {"code": code, "message": message}}


def _make_handler(server: McpServer):
    config = server.config

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "mcard-mcp/0.1"
        sys_version = ""
        disable_nagle_algorithm = True

        def log_message(self, fmt, *args):
            pass

        def _reply_json(self, status: int, obj) -> None:
            body = wire.dump_bytes(obj)
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            split = urlsplit(self.path)
            if split.path != "/sse":
                self._reply_json(404, {"error": "NOT_FOUND", "detail": "no such endpoint"})
                return
            session = server.open_session()
            if session is None:
                self._reply_json(503, {"error": "SESSION_TABLE_FULL",
                                       "detail": f"cap is {config.session_cap}"})
                return
            try:
                self._stream(session)
            finally:
                server.close_session(session.session_id)
                self.close_connection = True

        def _stream(self, session: McpSession) -> None:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            endpoint = f"/messages?session_id={session.session_id}"
            try:
                self._write_event("endpoint", endpoint)
                while True:
                    try:
                        message = session.events.get(timeout=config.heartbeat_seconds)
                    except queue.Empty:
                        self.wfile.write(b": ping\n\n")
                        self.wfile.flush()
                        continue
                    if message is None:  # session closed
                        return
                    self._write_event("message", wire.dumps(message))
            except (BrokenPipeError, ConnectionResetError, TimeoutError, OSError):
                return

        def _write_event(self, name: str, data: str) -> None:
            # written in parts: data can be many MB and one f-string build
            # would copy it twice more
            self.wfile.write(f"event: {name}\ndata: ".encode("utf-8"))
            self.wfile.write(data.encode("utf-8"))
            self.wfile.write(b"\n\n")
            self.wfile.flush()

        def do_POST(self):
            # drain the body first so keep-alive framing survives error replies
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            split = urlsplit(self.path)
            if split.path != "/messages":
                self._reply_json(404, {"error": "NOT_FOUND", "detail": "no such endpoint"})
                return
            session_id = parse_qs(split.query).get("session_id", [""])[0]
            session = server.get_session(session_id)
            if session is None or session.state == "closed":
                self._reply_json(404, {"error": "NOT_FOUND", "detail": "unknown session"})
                return
            server.handle_post_body(session, raw, self.headers.get("Authorization"))
            self._reply_json(202, {"status": "accepted"})

        def do_DELETE(self):
            split = urlsplit(self.path)
            if split.path != "/messages":
                self._reply_json(404, {"error": "NOT_FOUND", "detail": "no such endpoint"})
                return
            session_id = parse_qs(split.query).get("session_id", [""])[0]
            server.close_session(session_id)
            self.send_response(204)
            self.send_header("Content-Length", "0")
            self.end_headers()

    return Handler
