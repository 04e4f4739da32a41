"""Stateless HTTP/1.1 frontend over the registry, signposting included.

Every response is UTF-8 JSON except the linkset document (its own media
type) and HEAD (headers only). Bodies over 1 MiB go out chunked so
multi-megabyte cards stream on keep-alive connections. An in-memory access
log records one entry per request; the layered MCP backend's
one-REST-call-per-operation contract is checked against it.
"""

from __future__ import annotations

import hashlib
import json
import sys
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

from . import wire
from .cards import (
    LINKSET_MEDIA_TYPE,
    LinkEntry,
    linkset_to_jsonable,
    parse_deployment,
    parse_model_card,
    serialize_link_header,
)
from .errors import ApiError, EmptyQueryError, MalformedJsonError, SchemaViolationError
from .registry import Registry

CHUNK_THRESHOLD = 1024 * 1024
CHUNK_SIZE = 64 * 1024


class QuietThreadingHTTPServer(ThreadingHTTPServer):
    """Thread-per-connection server that does not spam stderr when a client
    drops mid-response (normal during benchmarking with fresh connections)."""

    daemon_threads = True
    block_on_close = False

    def handle_error(self, request, client_address):
        exc = sys.exc_info()[1]
        if isinstance(exc, (BrokenPipeError, ConnectionResetError, TimeoutError)):
            return
        super().handle_error(request, client_address)

_STATUS_BY_CODE = {
    "NOT_FOUND": 404,
    "NODE_NOT_FOUND": 404,
    "DUPLICATE_CARD": 409,
    "DUPLICATE_EDGE": 409,
    "DUPLICATE_EXPERIMENT": 409,
    "SCHEMA_VIOLATION": 400,
    "MALFORMED_JSON": 400,
    "ID_MISMATCH": 400,
    "EMPTY_QUERY": 400,
    "EMPTY_COMPONENT": 400,
    "NO_SCHEMA_LABEL": 400,
    "AMBIGUOUS": 400,
    "INVALID_PROPERTY": 400,
}


@dataclass
class RestConfig:
    host: str = "127.0.0.1"
    port: int = 0
    base_url: str | None = None  # derived from the bound address when unset
    bearer_token: str | None = None
    max_body_bytes: int = 64 * 1024 * 1024
    log_body_hash: bool = False

    def __post_init__(self):
        if self.max_body_bytes < 1024 * 1024:
            raise ValueError("max_body_bytes must be at least 1 MiB")


@dataclass
class AccessLogEntry:
    method: str
    path: str
    status: int
    body_len: int
    body_sha256: str | None = None


class RestServer:
    def __init__(self, registry: Registry, config: RestConfig | None = None):
        self.registry = registry
        self.config = config or RestConfig()
        self.access_log: list[AccessLogEntry] = []
        self._log_lock = threading.Lock()
        handler = _make_handler(self)
        self._httpd = QuietThreadingHTTPServer((self.config.host, self.config.port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        if self.config.base_url:
            return self.config.base_url.rstrip("/")
        return f"http://{self.config.host}:{self.port}"

    def start(self) -> "RestServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def record(self, entry: AccessLogEntry) -> None:
        with self._log_lock:
            self.access_log.append(entry)


def _make_handler(server: RestServer):
    registry = server.registry
    config = server.config

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "mcard-rest/0.1"
        sys_version = ""
        disable_nagle_algorithm = True
        timeout = 120

        # --- plumbing ---

        def log_message(self, fmt, *args):  # default stderr noise off
            pass

        def _reply(self, status: int, body: bytes, content_type: str,
                   extra_headers: list[tuple[str, str]] | None = None,
                   head_only: bool = False) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            for name, value in extra_headers or ():
                self.send_header(name, value)
            if head_only:
                self.end_headers()
            elif len(body) > CHUNK_THRESHOLD:
                self.send_header("Transfer-Encoding", "chunked")
                self.end_headers()
                for i in range(0, len(body), CHUNK_SIZE):
                    chunk = body[i:i + CHUNK_SIZE]
                    self.wfile.write(f"{len(chunk):x}\r\n".encode("ascii"))
                    self.wfile.write(chunk)
                    self.wfile.write(b"\r\n")
                self.wfile.write(b"0\r\n\r\n")
            else:
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                if body:
                    self.wfile.write(body)
            digest = hashlib.sha256(body).hexdigest() if config.log_body_hash else None
            server.record(AccessLogEntry(self.command, self.path, status,
                                         0 if head_only else len(body), digest))

        def _reply_json(self, status: int, obj, extra_headers=None, head_only=False):
            self._reply(status, wire.dump_bytes(obj), "application/json",
                        extra_headers, head_only)

        def _reply_error(self, exc: ApiError):
            status = _STATUS_BY_CODE.get(exc.code, 500)
            self._reply_json(status, exc.to_body())

        def _stash_body(self) -> bool:
            """Read the request body before any reply so keep-alive framing
            survives early error responses. False means a reply went out."""
            self._body = None
            length = self.headers.get("Content-Length")
            if length is None:
                self._reply_json(400, {"error": "MALFORMED_JSON",
                                       "detail": "request body with Content-Length required"})
                return False
            length = int(length)
            if length > config.max_body_bytes:
                self.close_connection = True
                self._reply_json(413, {"error": "BODY_TOO_LARGE",
                                       "detail": f"limit is {config.max_body_bytes} bytes"})
                return False
            self._body = self.rfile.read(length)
            return True

        def _read_body(self) -> bytes | None:
            return self._body

        def _authorized(self, path: str) -> bool:
            if config.bearer_token is None or path == "/health":
                return True
            supplied = self.headers.get("Authorization", "")
            if supplied == f"Bearer {config.bearer_token}":
                return True
            self._reply_json(401, {"error": "UNAUTHORIZED", "detail": "bearer token required"})
            return False

        # --- dispatch ---

        def do_GET(self):
            self._route("GET")

        def do_HEAD(self):
            self._route("HEAD")

        def do_POST(self):
            self._route("POST")

        def do_DELETE(self):
            self._route("DELETE")

        def _route(self, method: str):
            try:
                split = urlsplit(self.path)
                path = unquote(split.path)
                query = parse_qs(split.query)
                if method == "POST" and not self._stash_body():
                    return
                if not self._authorized(path):
                    return
                parts = [p for p in path.split("/") if p]
                if path == "/health" and method == "GET":
                    return self._health()
                if path == "/search" and method == "GET":
                    return self._search(query)
                if path == "/modelcard" and method == "POST":
                    return self._ingest()
                if path == "/edge" and method == "POST":
                    return self._create_edge()
                if path == "/experiment" and method == "POST":
                    return self._experiment()
                if len(parts) == 2 and parts[0] == "modelcard" and method in ("GET", "HEAD"):
                    return self._card(parts[1], head_only=method == "HEAD")
                if len(parts) == 3 and parts[0] == "modelcard" and parts[2] == "linkset" \
                        and method == "GET":
                    return self._linkset(parts[1])
                if len(parts) == 3 and parts[0] == "modelcard" and parts[2] == "deployment" \
                        and method == "POST":
                    return self._deployment(parts[1])
                self._reply_json(404, {"error": "NOT_FOUND", "detail": f"no route {method} {path}"})
            except ApiError as exc:
                self._reply_error(exc)
            except (BrokenPipeError, ConnectionResetError):
                self.close_connection = True
            except Exception as exc:  # pragma: no cover - defensive
                try:
                    self._reply_json(500, {"error": "INTERNAL", "detail": str(exc)})
                except Exception:
                    self.close_connection = True

        # --- endpoints ---

        def _health(self):
            nodes, edges = registry.counts()
            self._reply_json(200, {"status": "ok", "node_count": nodes, "edge_count": edges})

        def _link_headers(self, mc_id: str) -> list[tuple[str, str]]:
            linkset = registry.get_linkset(mc_id, server.base_url)
            pointer = LinkEntry(
                f"{server.base_url}/modelcard/{mc_id}/linkset", "linkset", LINKSET_MEDIA_TYPE
            )
            return [("Link", serialize_link_header(linkset, extra=(pointer,)))]

        def _card(self, mc_id: str, head_only: bool):
            if head_only:
                # lightweight: existence probe plus signposting headers only
                registry.get_linkset(mc_id, server.base_url)
                self._reply(200, b"", "application/json",
                            self._link_headers(mc_id), head_only=True)
                return
            agg = registry.retrieve_model_card(mc_id)
            headers = self._link_headers(mc_id)
            total = sum(ms for _, ms in agg.query_timings)
            headers.append(("X-DB-Time-Ms", f"{total:.2f}"))
            self._reply_json(200, wire.aggregated_to_jsonable(agg), headers)

        def _linkset(self, mc_id: str):
            linkset = registry.get_linkset(mc_id, server.base_url)
            self._reply(200, wire.dump_bytes(linkset_to_jsonable(linkset)), LINKSET_MEDIA_TYPE)

        def _search(self, query: dict):
            if "q" not in query or not query["q"][0]:
                raise EmptyQueryError("query parameter q is required")
            raw_limit = query.get("limit", ["10"])[0]
            try:
                limit = int(raw_limit)
            except ValueError:
                raise SchemaViolationError("limit", "must be an integer") from None
            hits = registry.search_model_cards(query["q"][0], limit)
            self._reply_json(200, wire.search_hits_to_jsonable(hits))

        def _ingest(self):
            body = self._read_body()
            if body is None:
                return
            doc = parse_model_card(body)
            mc_id = registry.ingest_model_card(doc)
            self._reply_json(201, {"mc_id": mc_id},
                             [("Location", f"{server.base_url}/modelcard/{mc_id}")])

        def _create_edge(self):
            body = self._read_body()
            if body is None:
                return
            payload = _json_object(body)
            for key in ("source_id", "target_id"):
                if not isinstance(payload.get(key), str):
                    raise SchemaViolationError(key, "required string field")
            created = registry.create_edge(payload["source_id"], payload["target_id"])
            self._reply_json(201, wire.edge_created_to_jsonable(created))

        def _deployment(self, mc_id: str):
            body = self._read_body()
            if body is None:
                return
            payload = _json_object(body)
            dep = parse_deployment(payload, where="deployment.")
            element = registry.record_deployment(mc_id, dep)
            self._reply_json(201, {"element_id": str(element)})

        def _experiment(self):
            body = self._read_body()
            if body is None:
                return
            payload = _json_object(body)
            if not isinstance(payload.get("experiment_id"), str):
                raise SchemaViolationError("experiment_id", "required string field")
            deployment_ids = payload.get("deployment_element_ids", [])
            if not isinstance(deployment_ids, list) or not all(
                isinstance(d, str) for d in deployment_ids
            ):
                raise SchemaViolationError("deployment_element_ids", "must be a list of ids")
            element = registry.record_experiment(payload["experiment_id"], deployment_ids)
            self._reply_json(201, {"experiment_id": payload["experiment_id"],
                                   "element_id": str(element)})

    return Handler


def _json_object(body: bytes) -> dict:
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedJsonError(f"invalid JSON body: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedJsonError("body must be a JSON object")
    return payload
