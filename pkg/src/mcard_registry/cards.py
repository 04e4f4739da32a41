"""Model-card domain: document schema, identifier composition, the directed
label-pair relationship dictionary, and signposting linkset construction.

Everything here is pure values and pure functions; nothing touches the store.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from urllib.parse import urlparse

from .errors import (
    AmbiguousLabelError,
    EmptyComponentError,
    IdMismatchError,
    MalformedJsonError,
    NoSchemaLabelError,
    SchemaViolationError,
)
from .graphstore import parse_timestamp, render_timestamp

DOC_FORMAT_VERSION = "1.0"

LIFECYCLE_STAGES = (
    "program_object",
    "serialized_object",
    "model_image",
    "inference_execution_instance",
)

# Directed (source label, target label) -> relationship type. Lookups outside
# this table are schema violations; reversed pairs are not implied.
SCHEMA_ADJACENCY: dict[tuple[str, str], str] = {
    ("ModelCard", "Model"): "HAS_MODEL",
    ("ModelCard", "BiasAnalysis"): "HAS_BIAS_ANALYSIS",
    ("ModelCard", "XAIAnalysis"): "HAS_XAI_ANALYSIS",
    ("Model", "Deployment"): "HAS_DEPLOYMENT",
    ("Deployment", "Device"): "RUNS_ON",
    ("Experiment", "Deployment"): "INCLUDES",
}

SCHEMA_LABELS = frozenset(l for pair in SCHEMA_ADJACENCY for l in pair)

# EdgeServer is accepted as an alias of Device at ingest and normalization.
LABEL_ALIASES = {"EdgeServer": "Device"}

LINKSET_RELS = frozenset({"cite-as", "describedby", "item", "collection", "type"})
LINKSET_MEDIA_TYPE = "application/linkset+json"

_WS_RUN = re.compile(r"\s+")


@dataclass(frozen=True)
class ModelCardId:
    author: str
    model_name: str
    version: str

    @property
    def rendered(self) -> str:
        return f"{self.author}-{self.model_name}-{self.version}"


def _sanitize(component: str) -> str:
    return _WS_RUN.sub("_", component.strip()).lower()


def compose_mc_id(author: str, model_name: str, version: str) -> ModelCardId:
    parts = {}
    for name, raw in (("author", author), ("model_name", model_name), ("version", version)):
        clean = _sanitize(raw)
        if not clean:
            raise EmptyComponentError(f"id component {name} is empty after trimming")
        parts[name] = clean
    return ModelCardId(parts["author"], parts["model_name"], parts["version"])


@dataclass
class AIModelInfo:
    name: str
    version: str
    owner: str
    artifact_location: str
    license: str
    framework: str
    model_type: str
    test_accuracy: float
    lifecycle_stage: str
    container_image_location: str | None = None


@dataclass
class BiasAnalysis:
    demographic_parity: float
    equal_odds: float
    notes: str = ""


@dataclass
class XAIAnalysis:
    method: str
    top_features: list[tuple[str, float]] = field(default_factory=list)
    notes: str = ""


@dataclass
class DeploymentRecord:
    deployment_id: str
    device_id: str
    start_time: datetime
    location: str
    mean_latency_ms: float
    mean_accuracy: float
    requests_served: int
    cpu_utilization: float
    gpu_utilization: float
    energy_joules: float
    end_time: datetime | None = None
    notes: str | None = None


@dataclass
class DeviceInfo:
    device_id: str
    name: str = ""
    owner: str = ""
    location: str = ""


@dataclass
class ExperimentInfo:
    experiment_id: str
    deployment_ids: list[str] = field(default_factory=list)


@dataclass
class ModelCardDocument:
    external_id: str
    name: str
    version: str
    author: str
    short_description: str
    full_description: str
    keywords: list[str]
    input_type: str
    output_type: str
    ai_model: AIModelInfo
    bias_analysis: BiasAnalysis | None = None
    xai_analysis: XAIAnalysis | None = None
    deployments: list[DeploymentRecord] = field(default_factory=list)
    documentation_format_version: str = DOC_FORMAT_VERSION
    extras: dict = field(default_factory=dict)  # unknown top-level keys, kept for round-trip


# --- parsing helpers ---

_KNOWN_TOP_KEYS = (
    "external_id", "name", "version", "author", "short_description",
    "full_description", "keywords", "input_type", "output_type", "ai_model",
    "bias_analysis", "xai_analysis", "deployments", "documentation_format_version",
)


def _need(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise SchemaViolationError(f"{where}{key}", "missing required field")
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaViolationError(f"{where}{key}", "expected a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaViolationError(f"{where}{key}", "expected an integer")
        return value
    if not isinstance(value, kind):
        raise SchemaViolationError(f"{where}{key}", f"expected {kind.__name__}")
    return value


def _need_str(obj: dict, key: str, where: str = "") -> str:
    value = _need(obj, key, str, where)
    if not value.strip():
        raise SchemaViolationError(f"{where}{key}", "must be non-empty")
    return value


def _finite(value: float, field_name: str) -> float:
    if not math.isfinite(value):
        raise SchemaViolationError(field_name, "must be finite")
    return value


def _non_negative(value: float, field_name: str) -> float:
    _finite(value, field_name)
    if value < 0:
        raise SchemaViolationError(field_name, "must be non-negative")
    return value


def is_absolute_url(text: str) -> bool:
    parsed = urlparse(text)
    return bool(parsed.scheme) and bool(parsed.netloc)


def _need_url(obj: dict, key: str, where: str) -> str:
    value = _need_str(obj, key, where)
    if not is_absolute_url(value):
        raise SchemaViolationError(f"{where}{key}", "must be an absolute URL")
    return value


def _parse_ts(obj: dict, key: str, where: str) -> datetime:
    raw = _need_str(obj, key, where)
    try:
        return parse_timestamp(raw)
    except ValueError:
        raise SchemaViolationError(f"{where}{key}", "not an ISO-8601 UTC timestamp") from None


def parse_ai_model(obj) -> AIModelInfo:
    if not isinstance(obj, dict):
        raise SchemaViolationError("ai_model", "must be an object")
    where = "ai_model."
    accuracy = _finite(_need(obj, "test_accuracy", float, where), where + "test_accuracy")
    if not 0.0 <= accuracy <= 1.0:
        raise SchemaViolationError(where + "test_accuracy", "out of range [0, 1]")
    stage = _need_str(obj, "lifecycle_stage", where)
    if stage not in LIFECYCLE_STAGES:
        raise SchemaViolationError(where + "lifecycle_stage", f"unknown stage {stage!r}")
    image = obj.get("container_image_location")
    if image is not None:
        if not isinstance(image, str) or not is_absolute_url(image):
            raise SchemaViolationError(where + "container_image_location", "must be an absolute URL")
    return AIModelInfo(
        name=_need_str(obj, "name", where),
        version=_need_str(obj, "version", where),
        owner=_need_str(obj, "owner", where),
        artifact_location=_need_url(obj, "artifact_location", where),
        license=_need_str(obj, "license", where),
        framework=_need_str(obj, "framework", where),
        model_type=_need_str(obj, "model_type", where),
        test_accuracy=accuracy,
        lifecycle_stage=stage,
        container_image_location=image,
    )


def parse_deployment(obj, where: str = "deployment.") -> DeploymentRecord:
    if not isinstance(obj, dict):
        raise SchemaViolationError(where.rstrip("."), "must be an object")
    start = _parse_ts(obj, "start_time", where)
    end = None
    if obj.get("end_time") is not None:
        end = _parse_ts(obj, "end_time", where)
        if end < start:
            raise SchemaViolationError(where + "end_time", "precedes start_time")
    notes = obj.get("notes")
    if notes is not None and not isinstance(notes, str):
        raise SchemaViolationError(where + "notes", "must be a string")
    return DeploymentRecord(
        deployment_id=_need_str(obj, "deployment_id", where),
        device_id=_need_str(obj, "device_id", where),
        start_time=start,
        end_time=end,
        location=_need(obj, "location", str, where),
        mean_latency_ms=_non_negative(_need(obj, "mean_latency_ms", float, where), where + "mean_latency_ms"),
        mean_accuracy=_non_negative(_need(obj, "mean_accuracy", float, where), where + "mean_accuracy"),
        requests_served=int(_non_negative(_need(obj, "requests_served", int, where), where + "requests_served")),
        cpu_utilization=_non_negative(_need(obj, "cpu_utilization", float, where), where + "cpu_utilization"),
        gpu_utilization=_non_negative(_need(obj, "gpu_utilization", float, where), where + "gpu_utilization"),
        energy_joules=_non_negative(_need(obj, "energy_joules", float, where), where + "energy_joules"),
        notes=notes,
    )


def parse_bias(obj) -> BiasAnalysis:
    if not isinstance(obj, dict):
        raise SchemaViolationError("bias_analysis", "must be an object")
    where = "bias_analysis."
    return BiasAnalysis(
        demographic_parity=_finite(_need(obj, "demographic_parity", float, where), where + "demographic_parity"),
        equal_odds=_finite(_need(obj, "equal_odds", float, where), where + "equal_odds"),
        notes=obj.get("notes", "") if isinstance(obj.get("notes", ""), str) else "",
    )


def parse_xai(obj) -> XAIAnalysis:
    if not isinstance(obj, dict):
        raise SchemaViolationError("xai_analysis", "must be an object")
    where = "xai_analysis."
    features: list[tuple[str, float]] = []
    for i, entry in enumerate(obj.get("top_features", [])):
        if not isinstance(entry, dict) or "name" not in entry or "importance" not in entry:
            raise SchemaViolationError(f"{where}top_features[{i}]", "expected {name, importance}")
        importance = entry["importance"]
        if isinstance(importance, bool) or not isinstance(importance, (int, float)):
            raise SchemaViolationError(f"{where}top_features[{i}].importance", "expected a number")
        features.append((str(entry["name"]), _finite(float(importance), f"{where}top_features[{i}].importance")))
    return XAIAnalysis(
        method=_need_str(obj, "method", where),
        top_features=features,
        notes=obj.get("notes", "") if isinstance(obj.get("notes", ""), str) else "",
    )


def parse_model_card(data: bytes | str) -> ModelCardDocument:
    """Validate an external card document and build the typed form.

    Unknown top-level keys survive in ``extras`` so serialize(parse(x))
    loses nothing the producer added.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJsonError(f"not UTF-8: {exc}") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaViolationError("<root>", "card document must be a JSON object")

    external_id = _need_str(obj, "external_id")
    name = _need_str(obj, "name")
    version = _need_str(obj, "version")
    author = _need_str(obj, "author")
    expected = compose_mc_id(author, name, version).rendered
    if external_id != expected:
        raise IdMismatchError(
            f"external_id {external_id!r} does not match composed id {expected!r}"
        )

    keywords = _need(obj, "keywords", list, "")
    if not all(isinstance(k, str) for k in keywords):
        raise SchemaViolationError("keywords", "must be a list of strings")

    if "ai_model" not in obj:
        raise SchemaViolationError("ai_model", "missing required field")
    ai_model = parse_ai_model(obj["ai_model"])

    deployments = []
    raw_deployments = obj.get("deployments", [])
    if not isinstance(raw_deployments, list):
        raise SchemaViolationError("deployments", "must be a list")
    for i, entry in enumerate(raw_deployments):
        deployments.append(parse_deployment(entry, where=f"deployments[{i}]."))

    bias = parse_bias(obj["bias_analysis"]) if obj.get("bias_analysis") is not None else None
    xai = parse_xai(obj["xai_analysis"]) if obj.get("xai_analysis") is not None else None

    extras = {k: v for k, v in obj.items() if k not in _KNOWN_TOP_KEYS}
    return ModelCardDocument(
        external_id=external_id,
        name=name,
        version=version,
        author=author,
        short_description=_need(obj, "short_description", str, ""),
        full_description=_need(obj, "full_description", str, ""),
        keywords=list(keywords),
        input_type=_need(obj, "input_type", str, ""),
        output_type=_need(obj, "output_type", str, ""),
        ai_model=ai_model,
        bias_analysis=bias,
        xai_analysis=xai,
        deployments=deployments,
        documentation_format_version=str(obj.get("documentation_format_version", DOC_FORMAT_VERSION)),
        extras=extras,
    )


def document_to_jsonable(doc: ModelCardDocument) -> dict:
    """External JSON form, stable key order."""
    ai = doc.ai_model
    ai_obj: dict = {
        "name": ai.name,
        "version": ai.version,
        "owner": ai.owner,
        "artifact_location": ai.artifact_location,
    }
    if ai.container_image_location is not None:
        ai_obj["container_image_location"] = ai.container_image_location
    ai_obj.update(
        license=ai.license,
        framework=ai.framework,
        model_type=ai.model_type,
        test_accuracy=ai.test_accuracy,
        lifecycle_stage=ai.lifecycle_stage,
    )
    out: dict = {
        "external_id": doc.external_id,
        "name": doc.name,
        "version": doc.version,
        "author": doc.author,
        "short_description": doc.short_description,
        "full_description": doc.full_description,
        "keywords": list(doc.keywords),
        "input_type": doc.input_type,
        "output_type": doc.output_type,
        "ai_model": ai_obj,
    }
    if doc.bias_analysis is not None:
        out["bias_analysis"] = {
            "demographic_parity": doc.bias_analysis.demographic_parity,
            "equal_odds": doc.bias_analysis.equal_odds,
            "notes": doc.bias_analysis.notes,
        }
    if doc.xai_analysis is not None:
        out["xai_analysis"] = {
            "method": doc.xai_analysis.method,
            "top_features": [
                {"name": n, "importance": imp} for n, imp in doc.xai_analysis.top_features
            ],
            "notes": doc.xai_analysis.notes,
        }
    out["deployments"] = [deployment_to_jsonable(d) for d in doc.deployments]
    out["documentation_format_version"] = doc.documentation_format_version
    out.update(doc.extras)
    return out


def deployment_to_jsonable(dep: DeploymentRecord) -> dict:
    obj: dict = {
        "deployment_id": dep.deployment_id,
        "device_id": dep.device_id,
        "start_time": render_timestamp(dep.start_time),
    }
    if dep.end_time is not None:
        obj["end_time"] = render_timestamp(dep.end_time)
    obj.update(
        location=dep.location,
        mean_latency_ms=dep.mean_latency_ms,
        mean_accuracy=dep.mean_accuracy,
        requests_served=dep.requests_served,
        cpu_utilization=dep.cpu_utilization,
        gpu_utilization=dep.gpu_utilization,
        energy_joules=dep.energy_joules,
    )
    if dep.notes is not None:
        obj["notes"] = dep.notes
    return obj


def serialize_model_card(doc: ModelCardDocument) -> bytes:
    return json.dumps(document_to_jsonable(doc), ensure_ascii=False, separators=(",", ":")).encode("utf-8")


# --- relationship inference ---

def normalize_schema_label(labels: set[str] | frozenset[str]) -> str:
    """Pick the single schema-relevant label out of a node's label set."""
    mapped = {LABEL_ALIASES.get(l, l) for l in labels}
    relevant = sorted(mapped & SCHEMA_LABELS)
    if not relevant:
        raise NoSchemaLabelError(f"no schema label among {sorted(labels)}")
    if len(relevant) > 1:
        raise AmbiguousLabelError(f"more than one schema label among {sorted(labels)}: {relevant}")
    return relevant[0]


def infer_relationship_type(
    src_labels: set[str] | frozenset[str],
    dst_labels: set[str] | frozenset[str],
    schema: dict[tuple[str, str], str] | None = None,
) -> str:
    if not src_labels or not dst_labels:
        raise NoSchemaLabelError("both label sets must be non-empty")
    table = schema if schema is not None else SCHEMA_ADJACENCY
    pair = (normalize_schema_label(src_labels), normalize_schema_label(dst_labels))
    try:
        return table[pair]
    except KeyError:
        raise SchemaViolationError(
            "label pair", f"({pair[0]}, {pair[1]}) has no relationship in the schema"
        ) from None


# --- signposting ---

@dataclass(frozen=True)
class LinkEntry:
    target: str
    rel: str
    media_type: str | None = None


@dataclass(frozen=True)
class LinkSet:
    anchor: str
    links: tuple[LinkEntry, ...]


def build_linkset_from_fields(
    mc_id: str,
    artifact_location: str,
    container_image_location: str | None,
    base_url: str,
) -> LinkSet:
    if not is_absolute_url(base_url):
        raise ValueError(f"base_url must be absolute, got {base_url!r}")
    anchor = f"{base_url.rstrip('/')}/modelcard/{mc_id}"
    links = [
        LinkEntry(anchor, "cite-as"),
        LinkEntry(anchor, "describedby", "application/json"),
        LinkEntry(artifact_location, "item"),
    ]
    if container_image_location:
        links.append(LinkEntry(container_image_location, "item"))
    return LinkSet(anchor=anchor, links=tuple(links))


def build_linkset(doc: ModelCardDocument, base_url: str) -> LinkSet:
    return build_linkset_from_fields(
        doc.external_id,
        doc.ai_model.artifact_location,
        doc.ai_model.container_image_location,
        base_url,
    )


def linkset_to_jsonable(linkset: LinkSet) -> dict:
    """Linkset document shape: one context object keyed by link relation."""
    context: dict = {"anchor": linkset.anchor}
    for entry in linkset.links:
        target: dict = {"href": entry.target}
        if entry.media_type:
            target["type"] = entry.media_type
        context.setdefault(entry.rel, []).append(target)
    return {"linkset": [context]}


def serialize_link_header(linkset: LinkSet, extra: tuple[LinkEntry, ...] = ()) -> str:
    """Web-linking header value for the linkset plus any extra entries."""
    parts = []
    for entry in tuple(linkset.links) + tuple(extra):
        segment = f'<{entry.target}>; rel="{entry.rel}"'
        if entry.media_type:
            segment += f'; type="{entry.media_type}"'
        parts.append(segment)
    return ", ".join(parts)
