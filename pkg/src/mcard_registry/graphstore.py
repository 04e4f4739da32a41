"""Embedded, transactional property-graph engine.

Storage is in-memory maps (id -> node, id -> edge, label -> ids, adjacency
lists) guarded by a single-writer / multi-reader lock. Persistence is a
whole-store snapshot in line-delimited JSON; there is no write-ahead log.
Element ordinals are allocated once per store lifetime and never reused,
including after a rollback.

Records handed to callers are immutable copies: mutating them cannot affect
the store, and they are safe to pass between threads.
"""

from __future__ import annotations

import json
import math
import threading
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any

from .errors import (
    CorruptSnapshotError,
    EmptyLabelsError,
    DuplicateEdgeError,
    InvalidPropertyError,
    FileIoError,
    WorkFailedError,
)
from .fulltext import FullTextIndex

SNAPSHOT_FORMAT = "mcgraph-snapshot"
SNAPSHOT_VERSION = 1

# Fields indexed for ranked search, per indexed label.
DEFAULT_INDEXED_FIELDS: dict[str, tuple[str, ...]] = {
    "ModelCard": ("name", "short_description", "full_description", "keywords", "author"),
}

_SCALAR_TYPES = (str, int, float, bool)


@dataclass(frozen=True)
class ElementId:
    kind: str  # "node" or "edge"
    ordinal: int

    def __str__(self) -> str:
        return f"{'n' if self.kind == 'node' else 'e'}:{self.ordinal}"

    @classmethod
    def parse(cls, text: str) -> "ElementId":
        prefix, _, rest = text.partition(":")
        if prefix not in ("n", "e") or not rest.isdigit():
            raise ValueError(f"not an element id: {text!r}")
        return cls("node" if prefix == "n" else "edge", int(rest))


def node_id(ordinal: int) -> ElementId:
    return ElementId("node", ordinal)


def edge_id(ordinal: int) -> ElementId:
    return ElementId("edge", ordinal)


@dataclass(frozen=True)
class NodeRecord:
    id: ElementId
    labels: frozenset[str]
    properties: dict[str, Any]


@dataclass(frozen=True)
class EdgeRecord:
    id: ElementId
    src: ElementId
    dst: ElementId
    rel_type: str
    properties: dict[str, Any]


def _validate_properties(properties: Mapping[str, Any]) -> dict[str, Any]:
    """Check the tagged-union property contract; returns a defensive copy."""
    out: dict[str, Any] = {}
    for key, value in properties.items():
        if not isinstance(key, str) or not key:
            raise InvalidPropertyError(f"property key must be a non-empty string, got {key!r}")
        if isinstance(value, bool) or isinstance(value, (str, int)):
            out[key] = value
        elif isinstance(value, float):
            if not math.isfinite(value):
                raise InvalidPropertyError(f"property {key} is a non-finite float")
            out[key] = value
        elif isinstance(value, datetime):
            if value.tzinfo is None:
                raise InvalidPropertyError(f"timestamp property {key} must be timezone-aware")
            out[key] = value.astimezone(timezone.utc)
        elif isinstance(value, (list, tuple)):
            items = list(value)
            for item in items:
                if not isinstance(item, _SCALAR_TYPES):
                    raise InvalidPropertyError(
                        f"property {key} list may only hold scalars, got {type(item).__name__}"
                    )
                if isinstance(item, float) and not math.isfinite(item):
                    raise InvalidPropertyError(f"property {key} list holds a non-finite float")
            out[key] = items
        else:
            raise InvalidPropertyError(
                f"property {key} has unsupported type {type(value).__name__}"
            )
    return out


def _copy_props(props: dict[str, Any]) -> dict[str, Any]:
    return {k: (list(v) if isinstance(v, list) else v) for k, v in props.items()}


class _RWLock:
    """Single-writer / multi-reader lock with re-entrant reads.

    A thread holding the write lock may take read locks freely; nested read
    acquisitions by one thread are counted, not re-acquired.
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer: int | None = None
        self._pending_writers = 0
        self._local = threading.local()

    def _depth(self) -> int:
        return getattr(self._local, "depth", 0)

    def acquire_read(self) -> None:
        me = threading.get_ident()
        if self._writer == me or self._depth() > 0:
            self._local.depth = self._depth() + 1
            return
        with self._cond:
            while self._writer is not None or self._pending_writers > 0:
                self._cond.wait()
            self._readers += 1
        self._local.depth = 1

    def release_read(self) -> None:
        depth = self._depth()
        if depth <= 0:
            raise RuntimeError("release_read without acquire_read")
        self._local.depth = depth - 1
        if depth == 1 and self._writer != threading.get_ident():
            with self._cond:
                self._readers -= 1
                self._cond.notify_all()

    def acquire_write(self) -> None:
        me = threading.get_ident()
        if self._writer == me:
            raise RuntimeError("write lock is not re-entrant")
        if self._depth() > 0:
            raise RuntimeError("cannot upgrade a read lock to a write lock")
        with self._cond:
            self._pending_writers += 1
            try:
                while self._writer is not None or self._readers > 0:
                    self._cond.wait()
                self._writer = me
            finally:
                self._pending_writers -= 1

    def release_write(self) -> None:
        with self._cond:
            if self._writer != threading.get_ident():
                raise RuntimeError("release_write by non-owner")
            self._writer = None
            self._cond.notify_all()


class _ReadSession:
    def __init__(self, lock: _RWLock):
        self._lock = lock

    def __enter__(self):
        self._lock.acquire_read()
        return self

    def __exit__(self, *exc):
        self._lock.release_read()
        return False


class WriteTransaction:
    """Mutation buffer handed to ``atomic_write`` closures.

    Ordinals are allocated eagerly, so a rolled-back transaction burns them;
    that is what keeps ids unique over the store's whole lifetime.
    """

    def __init__(self, store: "GraphStore"):
        self._store = store
        self.state = "open"
        self.pending_nodes: list[NodeRecord] = []
        self.pending_edges: list[tuple[EdgeRecord, bool]] = []
        self._pending_node_ids: set[int] = set()

    def create_node(self, labels: Sequence[str] | set[str], properties: Mapping[str, Any]) -> ElementId:
        self._check_open()
        label_set = frozenset(labels)
        if not label_set or any(not isinstance(l, str) or not l for l in label_set):
            raise EmptyLabelsError("a node needs at least one non-empty label")
        props = _validate_properties(properties)
        nid = node_id(self._store._next_node_ordinal)
        self._store._next_node_ordinal += 1
        self.pending_nodes.append(NodeRecord(nid, label_set, props))
        self._pending_node_ids.add(nid.ordinal)
        return nid

    def create_edge(
        self,
        src: ElementId,
        dst: ElementId,
        rel_type: str,
        properties: Mapping[str, Any] | None = None,
        ensure_unique: bool = False,
    ) -> ElementId:
        self._check_open()
        if not rel_type:
            raise InvalidPropertyError("rel_type must be non-empty")
        props = _validate_properties(properties or {})
        eid = edge_id(self._store._next_edge_ordinal)
        self._store._next_edge_ordinal += 1
        self.pending_edges.append((EdgeRecord(eid, src, dst, rel_type, props), ensure_unique))
        return eid

    def node_exists(self, element_id: ElementId) -> bool:
        """True if the id names a committed node or one staged in this transaction."""
        if element_id.kind != "node":
            return False
        return (
            element_id.ordinal in self._store._nodes
            or element_id.ordinal in self._pending_node_ids
        )

    def _check_open(self):
        if self.state != "open":
            raise RuntimeError(f"transaction already {self.state}")


class GraphStore:
    def __init__(self, indexed_fields: Mapping[str, Sequence[str]] | None = None):
        self._lock = _RWLock()
        self._nodes: dict[int, NodeRecord] = {}
        self._edges: dict[int, EdgeRecord] = {}
        self._labels: dict[str, list[int]] = {}
        self._out: dict[int, list[int]] = {}
        self._in: dict[int, list[int]] = {}
        self._next_node_ordinal = 1
        self._next_edge_ordinal = 1
        self._indexed_fields = {
            label: tuple(fields)
            for label, fields in (indexed_fields or DEFAULT_INDEXED_FIELDS).items()
        }
        self._index = FullTextIndex()

    # --- transactions ---

    def atomic_write(self, work: Callable[[WriteTransaction], Any]) -> Any:
        """Run ``work(tx)`` and commit its staged mutations atomically.

        On any failure (the closure raising, or commit-time validation such
        as a dangling edge) the store is left exactly as before and a
        WorkFailedError carrying the original exception is raised.
        """
        self._lock.acquire_write()
        tx = WriteTransaction(self)
        try:
            result = work(tx)
            self._commit(tx)
            tx.state = "committed"
            return result
        except BaseException as exc:
            tx.state = "rolled-back"
            if isinstance(exc, WorkFailedError):
                raise
            raise WorkFailedError(f"mutation closure failed: {exc}", cause=exc) from exc
        finally:
            self._lock.release_write()

    def _commit(self, tx: WriteTransaction) -> None:
        staged = {rec.id.ordinal for rec in tx.pending_nodes}
        for edge, ensure_unique in tx.pending_edges:
            for endpoint, name in ((edge.src, "src"), (edge.dst, "dst")):
                if endpoint.kind != "node" or (
                    endpoint.ordinal not in self._nodes and endpoint.ordinal not in staged
                ):
                    raise InvalidPropertyError(
                        f"edge {edge.id} {name} {endpoint} does not reference an existing node"
                    )
            if ensure_unique and self._edge_exists_unlocked(edge.src, edge.dst, edge.rel_type):
                raise DuplicateEdgeError(
                    f"{edge.rel_type} edge {edge.src} -> {edge.dst} already exists"
                )
        for rec in tx.pending_nodes:
            self._nodes[rec.id.ordinal] = rec
            for label in rec.labels:
                self._labels.setdefault(label, []).append(rec.id.ordinal)
            self._maybe_index(rec)
        for edge, _ in tx.pending_edges:
            self._edges[edge.id.ordinal] = edge
            self._out.setdefault(edge.src.ordinal, []).append(edge.id.ordinal)
            self._in.setdefault(edge.dst.ordinal, []).append(edge.id.ordinal)

    def _maybe_index(self, rec: NodeRecord) -> None:
        fields: dict[str, str] = {}
        for label in rec.labels:
            for fname in self._indexed_fields.get(label, ()):
                value = rec.properties.get(fname)
                if value is None:
                    continue
                if isinstance(value, list):
                    fields[fname] = " ".join(str(v) for v in value)
                else:
                    fields[fname] = str(value)
        if fields:
            self._index.add_document(rec.id.ordinal, fields)

    # --- single-mutation helpers ---

    def create_node(self, labels: Sequence[str] | set[str], properties: Mapping[str, Any]) -> ElementId:
        return self.atomic_write(lambda tx: tx.create_node(labels, properties))

    def create_edge(
        self,
        src: ElementId,
        dst: ElementId,
        rel_type: str,
        properties: Mapping[str, Any] | None = None,
        ensure_unique: bool = False,
    ) -> ElementId:
        return self.atomic_write(
            lambda tx: tx.create_edge(src, dst, rel_type, properties, ensure_unique)
        )

    # --- reads ---

    def read_session(self) -> _ReadSession:
        """Hold the read lock across several queries (one-session retrieval)."""
        return _ReadSession(self._lock)

    def get_node(self, element_id: ElementId) -> NodeRecord | None:
        with self.read_session():
            if element_id.kind != "node":
                return None
            rec = self._nodes.get(element_id.ordinal)
            return self._copy_node(rec) if rec else None

    def get_edge(self, element_id: ElementId) -> EdgeRecord | None:
        with self.read_session():
            if element_id.kind != "edge":
                return None
            rec = self._edges.get(element_id.ordinal)
            return self._copy_edge(rec) if rec else None

    def node_labels(self, element_id: ElementId) -> frozenset[str] | None:
        with self.read_session():
            if element_id.kind != "node":
                return None
            rec = self._nodes.get(element_id.ordinal)
            return rec.labels if rec else None

    def find_nodes(
        self, label: str, property_equals: Mapping[str, Any] | None = None
    ) -> list[NodeRecord]:
        if not label:
            raise EmptyLabelsError("label must be non-empty")
        filters = dict(property_equals or {})
        with self.read_session():
            hits = []
            for ordinal in sorted(self._labels.get(label, ())):
                rec = self._nodes[ordinal]
                if all(rec.properties.get(k) == v for k, v in filters.items()):
                    hits.append(self._copy_node(rec))
            return hits

    def edge_exists(self, src: ElementId, dst: ElementId, rel_type: str) -> bool:
        with self.read_session():
            return self._edge_exists_unlocked(src, dst, rel_type)

    def _edge_exists_unlocked(self, src: ElementId, dst: ElementId, rel_type: str) -> bool:
        for eord in self._out.get(src.ordinal, ()):
            edge = self._edges[eord]
            if edge.dst.ordinal == dst.ordinal and edge.rel_type == rel_type:
                return True
        return False

    def neighbors(
        self, node: ElementId, direction: str, rel_type: str | None = None
    ) -> list[tuple[EdgeRecord, NodeRecord]]:
        if direction not in ("out", "in"):
            raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")
        with self.read_session():
            adjacency = self._out if direction == "out" else self._in
            pairs = []
            for eord in sorted(adjacency.get(node.ordinal, ())):
                edge = self._edges[eord]
                if rel_type is not None and edge.rel_type != rel_type:
                    continue
                other = edge.dst if direction == "out" else edge.src
                pairs.append((self._copy_edge(edge), self._copy_node(self._nodes[other.ordinal])))
            return pairs

    def fulltext_query(self, text: str, limit: int) -> list[tuple[ElementId, float]]:
        with self.read_session():
            return [(node_id(ordinal), score) for ordinal, score in self._index.query(text, limit)]

    def node_count(self) -> int:
        with self.read_session():
            return len(self._nodes)

    def edge_count(self) -> int:
        with self.read_session():
            return len(self._edges)

    def iter_nodes(self) -> Iterator[NodeRecord]:
        with self.read_session():
            records = [self._copy_node(self._nodes[o]) for o in sorted(self._nodes)]
        return iter(records)

    def iter_edges(self) -> Iterator[EdgeRecord]:
        with self.read_session():
            records = [self._copy_edge(self._edges[o]) for o in sorted(self._edges)]
        return iter(records)

    def _copy_node(self, rec: NodeRecord) -> NodeRecord:
        return NodeRecord(rec.id, rec.labels, _copy_props(rec.properties))

    def _copy_edge(self, rec: EdgeRecord) -> EdgeRecord:
        return EdgeRecord(rec.id, rec.src, rec.dst, rec.rel_type, _copy_props(rec.properties))

    # --- snapshots ---

    def snapshot_save(self, path: str) -> None:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(self.snapshot_bytes().decode("utf-8"))
        except OSError as exc:
            raise FileIoError(f"cannot write snapshot to {path}: {exc}") from exc

    def snapshot_bytes(self) -> bytes:
        """Deterministic serialization; equal stores yield equal bytes."""
        with self.read_session():
            lines = [
                json.dumps(
                    {
                        "format": SNAPSHOT_FORMAT,
                        "version": SNAPSHOT_VERSION,
                        "next_node_ordinal": self._next_node_ordinal,
                        "next_edge_ordinal": self._next_edge_ordinal,
                    },
                    sort_keys=True,
                )
            ]
            for ordinal in sorted(self._nodes):
                rec = self._nodes[ordinal]
                lines.append(
                    json.dumps(
                        {
                            "id": str(rec.id),
                            "labels": sorted(rec.labels),
                            "properties": _encode_props(rec.properties),
                        },
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                )
            for ordinal in sorted(self._edges):
                rec = self._edges[ordinal]
                lines.append(
                    json.dumps(
                        {
                            "id": str(rec.id),
                            "src": str(rec.src),
                            "dst": str(rec.dst),
                            "rel_type": rec.rel_type,
                            "properties": _encode_props(rec.properties),
                        },
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                )
        return ("\n".join(lines) + "\n").encode("utf-8")

    @classmethod
    def snapshot_load(
        cls, path: str, indexed_fields: Mapping[str, Sequence[str]] | None = None
    ) -> "GraphStore":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = fh.read()
        except OSError as exc:
            raise FileIoError(f"cannot read snapshot from {path}: {exc}") from exc
        return cls.from_snapshot_bytes(raw.encode("utf-8"), indexed_fields)

    @classmethod
    def from_snapshot_bytes(
        cls, data: bytes, indexed_fields: Mapping[str, Sequence[str]] | None = None
    ) -> "GraphStore":
        lines = data.decode("utf-8").splitlines()
        if not lines:
            raise CorruptSnapshotError("empty snapshot")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise CorruptSnapshotError(f"unreadable header: {exc}") from exc
        if (
            not isinstance(header, dict)
            or header.get("format") != SNAPSHOT_FORMAT
            or header.get("version") != SNAPSHOT_VERSION
        ):
            raise CorruptSnapshotError("not a mcgraph snapshot or unsupported version")
        store = cls(indexed_fields)
        try:
            store._next_node_ordinal = int(header["next_node_ordinal"])
            store._next_edge_ordinal = int(header["next_edge_ordinal"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptSnapshotError("header missing ordinal counters") from exc
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                raise CorruptSnapshotError(f"blank line {lineno} inside snapshot")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptSnapshotError(f"unreadable line {lineno}: {exc}") from exc
            try:
                store._load_element(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptSnapshotError(f"malformed element at line {lineno}: {exc}") from exc
        return store

    def _load_element(self, obj: dict) -> None:
        eid = ElementId.parse(obj["id"])
        props = _decode_props(obj["properties"])
        if eid.kind == "node":
            if eid.ordinal in self._nodes or eid.ordinal >= self._next_node_ordinal:
                raise ValueError(f"node ordinal {eid.ordinal} out of range or duplicated")
            rec = NodeRecord(eid, frozenset(obj["labels"]), props)
            if not rec.labels:
                raise ValueError("node with empty label set")
            self._nodes[eid.ordinal] = rec
            for label in rec.labels:
                self._labels.setdefault(label, []).append(eid.ordinal)
            self._maybe_index(rec)
        else:
            if eid.ordinal in self._edges or eid.ordinal >= self._next_edge_ordinal:
                raise ValueError(f"edge ordinal {eid.ordinal} out of range or duplicated")
            src = ElementId.parse(obj["src"])
            dst = ElementId.parse(obj["dst"])
            if src.ordinal not in self._nodes or dst.ordinal not in self._nodes:
                raise ValueError(f"edge {eid} references a missing node")
            rec = EdgeRecord(eid, src, dst, obj["rel_type"], props)
            if not rec.rel_type:
                raise ValueError("edge with empty rel_type")
            self._edges[eid.ordinal] = rec
            self._out.setdefault(src.ordinal, []).append(eid.ordinal)
            self._in.setdefault(dst.ordinal, []).append(eid.ordinal)


def _encode_props(props: dict[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in props.items():
        if isinstance(value, datetime):
            out[key] = {"$ts": render_timestamp(value)}
        else:
            out[key] = value
    return out


def _decode_props(raw: dict[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            if set(value) != {"$ts"}:
                raise ValueError(f"unknown tagged property {key}")
            out[key] = parse_timestamp(value["$ts"])
        else:
            out[key] = value
    return _validate_properties(out)


def parse_timestamp(text: str) -> datetime:
    """Accept ISO-8601 with 'Z' or explicit offset; normalize to UTC."""
    candidate = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        parsed = datetime.fromisoformat(candidate)
    except ValueError as exc:
        raise ValueError(f"not an ISO-8601 timestamp: {text!r}") from exc
    if parsed.tzinfo is None:
        raise ValueError(f"timestamp must carry a timezone: {text!r}")
    return parsed.astimezone(timezone.utc)


def render_timestamp(value: datetime) -> str:
    return value.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")
