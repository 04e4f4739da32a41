"""Protocol-independent registry logic over the graph store.

Card ingest builds the whole card subgraph in one transaction; retrieval runs
a fixed five-query aggregation plan (base card fetch plus model, bias, xai
and deployment traversals) and records per-query wall time including result
materialization; edge creation runs a four-stage validate-and-commit
pipeline. Deployment events append to the graph, which is what makes a card
"dynamic".
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any

from . import cards, wire
from .cards import (
    DeploymentRecord,
    ModelCardDocument,
    infer_relationship_type,
)
from .errors import (
    ApiError,
    DuplicateCardError,
    DuplicateEdgeError,
    DuplicateExperimentError,
    NodeNotFoundError,
    NotFoundError,
    SchemaViolationError,
    WorkFailedError,
)
from .graphstore import ElementId, GraphStore, WriteTransaction

SEARCH_LIMIT_CAP = 100
RETRIEVAL_QUERY_NAMES = ("model_card", "model", "bias_analysis", "xai_analysis", "deployments")


@dataclass
class AggregatedCard:
    model_card: dict
    ai_model: dict
    bias_analysis: dict | None
    xai_analysis: dict | None
    deployments: list[dict]
    query_timings: list[tuple[str, float]] = field(default_factory=list)


@dataclass(frozen=True)
class EdgeCreated:
    edge_id: ElementId
    rel_type: str
    src: ElementId
    dst: ElementId


@dataclass(frozen=True)
class SearchHit:
    mc_id: str
    score: float
    name: str
    short_description: str


def _unwrap(exc: WorkFailedError) -> ApiError:
    if isinstance(exc.cause, ApiError):
        return exc.cause
    return exc


class Registry:
    def __init__(self, store: GraphStore | None = None, per_query_locking: bool = False):
        self.store = store if store is not None else GraphStore()
        # per_query_locking re-acquires the read lock for each of the five
        # retrieval queries instead of holding one session across them.
        self.per_query_locking = per_query_locking

    # --- ingest ---

    def ingest_model_card(self, doc: ModelCardDocument) -> str:
        mc_id = doc.external_id

        def work(tx: WriteTransaction) -> None:
            if self.store.find_nodes("ModelCard", {"external_id": mc_id}):
                raise DuplicateCardError(f"card {mc_id} already ingested")
            card_node = tx.create_node(
                {"ModelCard"},
                {
                    "external_id": mc_id,
                    "name": doc.name,
                    "version": doc.version,
                    "author": doc.author,
                    "short_description": doc.short_description,
                    "full_description": doc.full_description,
                    "keywords": list(doc.keywords),
                    "input_type": doc.input_type,
                    "output_type": doc.output_type,
                    "documentation_format_version": doc.documentation_format_version,
                },
            )
            ai = doc.ai_model
            model_props: dict[str, Any] = {
                "name": ai.name,
                "version": ai.version,
                "owner": ai.owner,
                "artifact_location": ai.artifact_location,
                "license": ai.license,
                "framework": ai.framework,
                "model_type": ai.model_type,
                "test_accuracy": ai.test_accuracy,
                "lifecycle_stage": ai.lifecycle_stage,
            }
            if ai.container_image_location is not None:
                model_props["container_image_location"] = ai.container_image_location
            model_node = tx.create_node({"Model"}, model_props)
            tx.create_edge(card_node, model_node, "HAS_MODEL")
            if doc.bias_analysis is not None:
                bias_node = tx.create_node(
                    {"BiasAnalysis"},
                    {
                        "demographic_parity": doc.bias_analysis.demographic_parity,
                        "equal_odds": doc.bias_analysis.equal_odds,
                        "notes": doc.bias_analysis.notes,
                    },
                )
                tx.create_edge(card_node, bias_node, "HAS_BIAS_ANALYSIS")
            if doc.xai_analysis is not None:
                xai_node = tx.create_node(
                    {"XAIAnalysis"},
                    {
                        "method": doc.xai_analysis.method,
                        "feature_names": [n for n, _ in doc.xai_analysis.top_features],
                        "feature_importances": [v for _, v in doc.xai_analysis.top_features],
                        "notes": doc.xai_analysis.notes,
                    },
                )
                tx.create_edge(card_node, xai_node, "HAS_XAI_ANALYSIS")
            pending_devices: dict[str, ElementId] = {}
            for dep in doc.deployments:
                self._append_deployment(tx, model_node, dep, pending_devices)

        try:
            self.store.atomic_write(work)
        except WorkFailedError as exc:
            raise _unwrap(exc) from exc.cause
        return mc_id

    def _append_deployment(
        self,
        tx: WriteTransaction,
        model_node: ElementId,
        dep: DeploymentRecord,
        pending_devices: dict[str, ElementId],
    ) -> ElementId:
        props: dict[str, Any] = {
            "deployment_id": dep.deployment_id,
            "device_id": dep.device_id,
            "start_time": dep.start_time,
        }
        if dep.end_time is not None:
            props["end_time"] = dep.end_time
        props.update(
            location=dep.location,
            mean_latency_ms=dep.mean_latency_ms,
            mean_accuracy=dep.mean_accuracy,
            requests_served=dep.requests_served,
            cpu_utilization=dep.cpu_utilization,
            gpu_utilization=dep.gpu_utilization,
            energy_joules=dep.energy_joules,
        )
        if dep.notes is not None:
            props["notes"] = dep.notes
        dep_node = tx.create_node({"Deployment"}, props)
        tx.create_edge(model_node, dep_node, "HAS_DEPLOYMENT")
        device_node = pending_devices.get(dep.device_id)
        if device_node is None:
            existing = self.store.find_nodes("Device", {"device_id": dep.device_id})
            if existing:
                device_node = existing[0].id
            else:
                device_node = tx.create_node({"Device"}, {"device_id": dep.device_id})
                pending_devices[dep.device_id] = device_node
        tx.create_edge(dep_node, device_node, "RUNS_ON")
        return dep_node

    # --- retrieval ---

    def retrieve_model_card(self, mc_id: str) -> AggregatedCard:
        """Five-query aggregation; per-query wall time covers the query plus
        result materialization, never serialization."""
        if self.per_query_locking:
            return self._retrieve(mc_id)
        with self.store.read_session():
            return self._retrieve(mc_id)

    def _retrieve(self, mc_id: str) -> AggregatedCard:
        timings: list[tuple[str, float]] = []

        def timed(name, fn):
            start = time.perf_counter_ns()
            value = fn()
            timings.append((name, (time.perf_counter_ns() - start) / 1e6))
            return value

        def base_query():
            found = self.store.find_nodes("ModelCard", {"external_id": mc_id})
            if not found:
                raise NotFoundError(f"no model card {mc_id!r}")
            return wire.project_node(found[0], wire.MODEL_CARD_FIELDS), found[0].id

        card_map, card_node = timed("model_card", base_query)

        def model_query():
            pairs = self.store.neighbors(card_node, "out", "HAS_MODEL")
            if not pairs:
                raise NotFoundError(f"card {mc_id!r} has no model node")
            record = pairs[0][1]
            return wire.project_node(record, wire.MODEL_FIELDS), record.id

        model_map, model_node = timed("model", model_query)

        def analysis_query(rel_type: str, order: tuple[str, ...]):
            pairs = self.store.neighbors(card_node, "out", rel_type)
            return wire.project_node(pairs[0][1], order) if pairs else None

        bias_map = timed(
            "bias_analysis", lambda: analysis_query("HAS_BIAS_ANALYSIS", wire.BIAS_FIELDS)
        )
        xai_map = timed(
            "xai_analysis", lambda: analysis_query("HAS_XAI_ANALYSIS", wire.XAI_FIELDS)
        )

        def deployments_query():
            pairs = self.store.neighbors(model_node, "out", "HAS_DEPLOYMENT")
            records = [rec for _, rec in pairs]
            records.sort(
                key=lambda r: (r.properties["start_time"], r.properties["deployment_id"])
            )
            return [wire.project_node(rec, wire.DEPLOYMENT_FIELDS) for rec in records]

        deployments = timed("deployments", deployments_query)
        return AggregatedCard(
            model_card=card_map,
            ai_model=model_map,
            bias_analysis=bias_map,
            xai_analysis=xai_map,
            deployments=deployments,
            query_timings=timings,
        )

    # --- search ---

    def search_model_cards(self, query_text: str, limit: int = 10) -> list[SearchHit]:
        if not isinstance(limit, int) or limit < 1:
            raise SchemaViolationError("limit", "must be an integer >= 1")
        limit = min(limit, SEARCH_LIMIT_CAP)
        hits = self.store.fulltext_query(query_text, limit)
        out = []
        for element_id, score in hits:
            record = self.store.get_node(element_id)
            if record is None or "ModelCard" not in record.labels:
                continue
            props = record.properties
            out.append(
                SearchHit(
                    mc_id=props.get("external_id", ""),
                    score=score,
                    name=props.get("name", ""),
                    short_description=props.get("short_description", ""),
                )
            )
        return out

    # --- edge pipeline ---

    def create_edge(self, src_element_id: str, dst_element_id: str) -> EdgeCreated:
        # stage 1: both nodes exist, labels fetched
        endpoints = {}
        for which, raw in (("src", src_element_id), ("dst", dst_element_id)):
            try:
                element_id = ElementId.parse(raw)
            except ValueError:
                raise NodeNotFoundError(which, f"{which} id {raw!r} names no node") from None
            labels = self.store.node_labels(element_id)
            if labels is None:
                raise NodeNotFoundError(which, f"{which} node {raw} not found")
            endpoints[which] = (element_id, labels)
        src, src_labels = endpoints["src"]
        dst, dst_labels = endpoints["dst"]
        # stage 2: relationship inferred from the label pair and validated
        rel_type = infer_relationship_type(src_labels, dst_labels)
        # stage 3: duplicate check
        if self.store.edge_exists(src, dst, rel_type):
            raise DuplicateEdgeError(f"{rel_type} edge {src} -> {dst} already exists")
        # stage 4: committed in one atomic write (re-checks uniqueness under
        # the writer lock so concurrent duplicates cannot slip through)
        try:
            edge = self.store.atomic_write(
                lambda tx: tx.create_edge(src, dst, rel_type, ensure_unique=True)
            )
        except WorkFailedError as exc:
            raise _unwrap(exc) from exc.cause
        return EdgeCreated(edge_id=edge, rel_type=rel_type, src=src, dst=dst)

    # --- dynamic-card events ---

    def record_deployment(self, mc_id: str, dep: DeploymentRecord) -> ElementId:
        card = self.store.find_nodes("ModelCard", {"external_id": mc_id})
        if not card:
            raise NotFoundError(f"no model card {mc_id!r}")
        pairs = self.store.neighbors(card[0].id, "out", "HAS_MODEL")
        if not pairs:
            raise NotFoundError(f"card {mc_id!r} has no model node")
        model_node = pairs[0][1].id
        try:
            return self.store.atomic_write(
                lambda tx: self._append_deployment(tx, model_node, dep, {})
            )
        except WorkFailedError as exc:
            raise _unwrap(exc) from exc.cause

    def record_experiment(
        self, experiment_id: str, deployment_element_ids: list[str] | None = None
    ) -> ElementId:
        if not experiment_id or not experiment_id.strip():
            raise SchemaViolationError("experiment_id", "must be non-empty")
        deployment_ids = []
        for raw in deployment_element_ids or []:
            try:
                element_id = ElementId.parse(raw)
            except ValueError:
                raise NodeNotFoundError("deployment", f"{raw!r} names no node") from None
            labels = self.store.node_labels(element_id)
            if labels is None:
                raise NodeNotFoundError("deployment", f"node {raw} not found")
            deployment_ids.append(element_id)

        def work(tx: WriteTransaction) -> ElementId:
            if self.store.find_nodes("Experiment", {"experiment_id": experiment_id}):
                raise DuplicateExperimentError(f"experiment {experiment_id} already recorded")
            exp_node = tx.create_node({"Experiment"}, {"experiment_id": experiment_id})
            for dep_node in deployment_ids:
                tx.create_edge(exp_node, dep_node, "INCLUDES")
            return exp_node

        try:
            return self.store.atomic_write(work)
        except WorkFailedError as exc:
            raise _unwrap(exc) from exc.cause

    # --- signposting ---

    def get_linkset(self, mc_id: str, base_url: str) -> cards.LinkSet:
        card = self.store.find_nodes("ModelCard", {"external_id": mc_id})
        if not card:
            raise NotFoundError(f"no model card {mc_id!r}")
        pairs = self.store.neighbors(card[0].id, "out", "HAS_MODEL")
        if not pairs:
            raise NotFoundError(f"card {mc_id!r} has no model node")
        model = pairs[0][1].properties
        return cards.build_linkset_from_fields(
            mc_id,
            model["artifact_location"],
            model.get("container_image_location"),
            base_url,
        )

    # --- selection ---

    def select_best_model(
        self, query_text: str, max_mean_latency_ms: float
    ) -> SearchHit | None:
        """Highest test accuracy among matches whose most recent deployment
        meets the latency bound; cards without deployments are excluded."""
        if max_mean_latency_ms <= 0:
            raise ValueError("latency bound must be > 0")
        matches = self.search_model_cards(query_text, limit=SEARCH_LIMIT_CAP)
        best: tuple[float, str] | None = None
        best_hit: SearchHit | None = None
        for hit in matches:
            card = self.store.find_nodes("ModelCard", {"external_id": hit.mc_id})
            if not card:
                continue
            model_pairs = self.store.neighbors(card[0].id, "out", "HAS_MODEL")
            if not model_pairs:
                continue
            model = model_pairs[0][1]
            deployments = [
                rec for _, rec in self.store.neighbors(model.id, "out", "HAS_DEPLOYMENT")
            ]
            if not deployments:
                continue
            latest = max(
                deployments,
                key=lambda r: (r.properties["start_time"], r.properties["deployment_id"]),
            )
            if latest.properties["mean_latency_ms"] > max_mean_latency_ms:
                continue
            accuracy = model.properties["test_accuracy"]
            # argmax accuracy, ties broken by ascending rendered id
            key = (-accuracy, hit.mc_id)
            if best is None or key < best:
                best = key
                best_hit = hit
        return best_hit

    # --- plumbing for the frontends ---

    def counts(self) -> tuple[int, int]:
        return self.store.node_count(), self.store.edge_count()
