"""Wire-level JSON projections shared by the REST and MCP frontends.

Key order is fixed here (element_id first, then declared fields, then any
leftovers sorted) so the two frontends emit byte-identical JSON for the same
store state.
"""

from __future__ import annotations

import json
from datetime import datetime
from typing import Any

from .graphstore import NodeRecord, render_timestamp

MODEL_CARD_FIELDS = (
    "external_id", "name", "version", "author", "short_description",
    "full_description", "keywords", "input_type", "output_type",
    "documentation_format_version",
)
MODEL_FIELDS = (
    "name", "version", "owner", "artifact_location", "container_image_location",
    "license", "framework", "model_type", "test_accuracy", "lifecycle_stage",
)
BIAS_FIELDS = ("demographic_parity", "equal_odds", "notes")
XAI_FIELDS = ("method", "feature_names", "feature_importances", "notes")
DEPLOYMENT_FIELDS = (
    "deployment_id", "device_id", "start_time", "end_time", "location",
    "mean_latency_ms", "mean_accuracy", "requests_served", "cpu_utilization",
    "gpu_utilization", "energy_joules", "notes",
)


def _jsonable(value: Any) -> Any:
    if isinstance(value, datetime):
        return render_timestamp(value)
    return value


def project_node(record: NodeRecord, field_order: tuple[str, ...]) -> dict:
    out: dict = {"element_id": str(record.id)}
    props = record.properties
    for key in field_order:
        if key in props:
            out[key] = _jsonable(props[key])
    for key in sorted(props):
        if key not in out:
            out[key] = _jsonable(props[key])
    return out


def dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def dump_bytes(obj: Any) -> bytes:
    return dumps(obj).encode("utf-8")


def aggregated_to_jsonable(agg) -> dict:
    out: dict = {"model_card": agg.model_card, "ai_model": agg.ai_model}
    if agg.bias_analysis is not None:
        out["bias_analysis"] = agg.bias_analysis
    if agg.xai_analysis is not None:
        out["xai_analysis"] = agg.xai_analysis
    out["deployments"] = agg.deployments
    out["_timings"] = [{"query": name, "ms": ms} for name, ms in agg.query_timings]
    return out


def search_hits_to_jsonable(hits) -> list[dict]:
    return [
        {
            "mc_id": hit.mc_id,
            "score": hit.score,
            "name": hit.name,
            "short_description": hit.short_description,
        }
        for hit in hits
    ]


def edge_created_to_jsonable(created) -> dict:
    return {
        "edge_id": str(created.edge_id),
        "rel_type": created.rel_type,
        "src": str(created.src),
        "dst": str(created.dst),
    }
