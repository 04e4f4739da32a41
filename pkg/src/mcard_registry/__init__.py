"""Model-card registry: embedded property graph, REST and MCP frontends,
WAN emulation proxy, and a latency benchmark harness."""

__version__ = "0.1.0"
