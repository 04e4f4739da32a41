"""mcard-server CLI: run the REST frontend, either MCP variant, or all three
at once for benchmarking."""

from __future__ import annotations

import argparse
import os
import time

from .graphstore import GraphStore
from .mcpserver import McpConfig, McpServer
from .registry import Registry
from .rest import RestConfig, RestServer


def _addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _registry(args) -> Registry:
    if args.snapshot and os.path.exists(args.snapshot):
        store = GraphStore.snapshot_load(args.snapshot)
        print(f"loaded snapshot {args.snapshot}: "
              f"{store.node_count()} nodes, {store.edge_count()} edges")
    else:
        store = GraphStore()
    return Registry(store, per_query_locking=args.per_query_locking)


def _cmd_rest(args) -> int:
    host, port = _addr(args.bind)
    registry = _registry(args)
    server = RestServer(registry, RestConfig(
        host=host, port=port, base_url=args.base_url,
        bearer_token=args.bearer_token, max_body_bytes=args.max_body_bytes,
    )).start()
    print(f"REST server on {server.base_url}")
    return _wait(lambda: server.stop())


def _cmd_mcp(args) -> int:
    host, port = _addr(args.bind)
    config = McpConfig(
        host=host, port=port, backend=args.backend, rest_base_url=args.rest_base,
        session_cap=args.session_cap, heartbeat_seconds=args.heartbeat_seconds,
        fresh_rest_connection_per_call=args.fresh_rest_connections,
    )
    registry = _registry(args) if args.backend == "native" else None
    server = McpServer(config, registry).start()
    print(f"{args.backend} MCP server on http://{host}:{server.port} (SSE at /sse)")
    return _wait(lambda: server.stop())


def _cmd_all(args) -> int:
    registry = _registry(args)
    rest = RestServer(registry, RestConfig(host=args.host, port=args.rest_port)).start()
    native = McpServer(McpConfig(host=args.host, port=args.native_port,
                                 backend="native"), registry).start()
    layered = McpServer(McpConfig(host=args.host, port=args.layered_port,
                                  backend="layered", rest_base_url=rest.base_url)).start()
    print(f"REST:        {rest.base_url}")
    print(f"native MCP:  http://{args.host}:{native.port}")
    print(f"layered MCP: http://{args.host}:{layered.port}")

    def stop():
        layered.stop()
        native.stop()
        rest.stop()

    return _wait(stop)


def _wait(stop) -> int:
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcard-server",
                                     description="Model-card registry servers")
    sub = parser.add_subparsers(dest="command", required=True)

    rest = sub.add_parser("rest", help="REST frontend")
    rest.add_argument("--bind", default=os.environ.get("BIND_ADDR", "127.0.0.1:8080"))
    rest.add_argument("--base-url", default=os.environ.get("BASE_URL"))
    rest.add_argument("--bearer-token", default=os.environ.get("BEARER_TOKEN"))
    rest.add_argument("--max-body-bytes", type=int,
                      default=int(os.environ.get("MAX_BODY_BYTES", 64 * 1024 * 1024)))
    rest.add_argument("--snapshot", help="graph snapshot to load at startup")
    rest.add_argument("--per-query-locking", action="store_true")
    rest.set_defaults(func=_cmd_rest)

    mcp = sub.add_parser("mcp", help="MCP frontend (native or layered)")
    mcp.add_argument("--bind", default="127.0.0.1:8081")
    mcp.add_argument("--backend", choices=("native", "layered"), default="native")
    mcp.add_argument("--rest-base", help="REST base URL (layered backend)")
    mcp.add_argument("--session-cap", type=int, default=256)
    mcp.add_argument("--heartbeat-seconds", type=float, default=15.0)
    mcp.add_argument("--fresh-rest-connections", action="store_true",
                     help="layered: dial REST per call instead of keep-alive")
    mcp.add_argument("--snapshot")
    mcp.add_argument("--per-query-locking", action="store_true")
    mcp.set_defaults(func=_cmd_mcp)

    both = sub.add_parser("all", help="REST + native MCP + layered MCP on one store")
    both.add_argument("--host", default="127.0.0.1")
    both.add_argument("--rest-port", type=int, default=8080)
    both.add_argument("--native-port", type=int, default=8081)
    both.add_argument("--layered-port", type=int, default=8082)
    both.add_argument("--snapshot")
    both.add_argument("--per-query-locking", action="store_true")
    both.set_defaults(func=_cmd_all)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
