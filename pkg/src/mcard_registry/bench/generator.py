"""Deterministic synthetic model-card corpus generator.

Two presets: ``micro`` makes a handful of 2-8 KB cards for protocol
microbenchmarks; ``realworld`` makes one heavily deployed card (10,000
deployments over 100 devices, 1,000 experiments) whose serialized JSON is
auto-tuned to the multi-megabyte target via per-deployment note padding.
All draws come from one seeded RNG, so a given spec yields byte-identical
files run after run.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .. import wire
from ..errors import ApiError
from .clients import RestClient, rest_retrieve_path

MICRO_DEFAULTS = dict(cards=20, deployments_per_card=5, experiments=200, devices=5,
                      target_card_bytes=None)
REALWORLD_DEFAULTS = dict(cards=1, deployments_per_card=10_000, experiments=1_000,
                          devices=100, target_card_bytes=13_630_000)

SIZE_TOLERANCE = 0.05
MAX_TUNING_ROUNDS = 20

_ADJECTIVES = ("swift", "deep", "tiny", "robust", "field", "night", "compact", "sparse",
               "wide", "lean")
_TASKS = ("wildlife", "traffic", "speech", "crop", "weather", "seismic", "acoustic",
          "thermal", "canopy", "plankton")
_ARCHS = ("resnet", "yolo", "mobilenet", "transformer", "unet", "lstm", "vit", "gbm")
_WORDS = ("camera trap imagery classifier tuned for low latency edge inference "
          "monitoring sensor stream detection ranking accuracy habitat species "
          "deployment telemetry drift seasonal model registry provenance").split()
_AUTHORS = ("asmith", "jdoe", "lchen", "mgarcia", "rpatel", "tnguyen", "kmori", "efox")
_LICENSES = ("apache-2.0", "mit", "bsd-3-clause", "cc-by-4.0")
_FRAMEWORKS = ("pytorch", "tensorflow", "onnx", "jax")
_MODEL_TYPES = ("cnn", "transformer", "detector", "segmenter")
_STAGES = ("serialized_object", "model_image")
_LOCATIONS = ("ridge-a", "valley-b", "coast-c", "forest-d", "station-e")

_PAD_PHRASE = "telemetry trace segment "


class TargetUnreachableError(ApiError):
    code = "TARGET_UNREACHABLE"


@dataclass(frozen=True)
class GeneratorSpec:
    preset: str
    cards: int
    deployments_per_card: int
    experiments: int
    devices: int
    seed: int
    target_card_bytes: int | None = None


def make_spec(preset: str, seed: int, **overrides) -> GeneratorSpec:
    if preset == "micro":
        fields = dict(MICRO_DEFAULTS)
    elif preset == "realworld":
        fields = dict(REALWORLD_DEFAULTS)
    else:
        raise ValueError(f"unknown preset {preset!r}")
    fields.update({k: v for k, v in overrides.items() if v is not None})
    return GeneratorSpec(preset=preset, seed=seed, **fields)


def _sentence(rng: random.Random, words: int) -> str:
    return " ".join(rng.choice(_WORDS) for _ in range(words))


def _iso(day: int, hour: int, minute: int) -> str:
    return f"2024-{1 + day // 28:02d}-{1 + day % 28:02d}T{hour:02d}:{minute:02d}:00Z"


def _padding(length: int) -> str:
    if length <= 0:
        return ""
    reps = length // len(_PAD_PHRASE) + 1
    return (_PAD_PHRASE * reps)[:length]


def _deployment(rng: random.Random, global_idx: int, spec: GeneratorSpec) -> dict:
    day = rng.randint(0, 300) % 336
    hour, minute = rng.randint(0, 22), rng.randint(0, 59)
    return {
        "deployment_id": f"dep-{global_idx:06d}",
        "device_id": f"device-{global_idx % spec.devices:03d}",
        "start_time": _iso(day, hour, minute),
        "end_time": _iso(day, hour + 1, minute),
        "location": rng.choice(_LOCATIONS),
        "mean_latency_ms": round(rng.uniform(5, 400), 3),
        "mean_accuracy": round(rng.uniform(0.4, 0.999), 4),
        "requests_served": rng.randint(10, 100_000),
        "cpu_utilization": round(rng.uniform(0.05, 0.95), 4),
        "gpu_utilization": round(rng.uniform(0.0, 0.9), 4),
        "energy_joules": round(rng.uniform(1, 5000), 2),
        "notes": "",
    }


def _base_card(rng: random.Random, idx: int, spec: GeneratorSpec, dep_offset: int) -> dict:
    author = rng.choice(_AUTHORS)
    name = f"{rng.choice(_ADJECTIVES)}_{rng.choice(_TASKS)}_{rng.choice(_ARCHS)}_{idx}"
    version = f"{rng.randint(1, 3)}.{rng.randint(0, 9)}"
    keywords = sorted(rng.sample(_WORDS, 5))
    card = {
        "external_id": f"{author}-{name}-{version}",
        "name": name,
        "version": version,
        "author": author,
        "short_description": _sentence(rng, 6),
        "full_description": _sentence(rng, 40),
        "keywords": keywords,
        "input_type": rng.choice(("image", "audio", "timeseries")),
        "output_type": rng.choice(("label", "boxes", "transcript")),
        "ai_model": {
            "name": name,
            "version": version,
            "owner": author,
            "artifact_location": f"https://models.example.org/{author}/{name}-{version}.pt",
            "container_image_location": f"https://images.example.org/{author}/{name}:{version}",
            "license": rng.choice(_LICENSES),
            "framework": rng.choice(_FRAMEWORKS),
            "model_type": rng.choice(_MODEL_TYPES),
            "test_accuracy": round(rng.uniform(0.5, 0.999), 4),
            "lifecycle_stage": rng.choice(_STAGES),
        },
        "bias_analysis": {
            "demographic_parity": round(rng.uniform(0.5, 1.0), 4),
            "equal_odds": round(rng.uniform(0.5, 1.0), 4),
            "notes": _sentence(rng, 8),
        },
        "xai_analysis": {
            "method": rng.choice(("shap", "lime", "gradcam")),
            "top_features": [
                {"name": f"feature_{i}", "importance": round(rng.uniform(0, 1), 4)}
                for i in range(4)
            ],
            "notes": _sentence(rng, 6),
        },
        "deployments": [
            _deployment(rng, dep_offset + i, spec)
            for i in range(spec.deployments_per_card)
        ],
        "documentation_format_version": "1.0",
    }
    return card


def _card_size(card: dict) -> int:
    return len(wire.dump_bytes(card))


def _tune_card_to_target(card: dict, target: int) -> dict:
    """Distribute note padding over the deployments until the serialized size
    lands within the +/-5% window."""
    deployments = card["deployments"]
    if not deployments:
        raise TargetUnreachableError("cannot pad a card with no deployments")
    low, high = target * (1 - SIZE_TOLERANCE), target * (1 + SIZE_TOLERANCE)
    pad = 0
    for _ in range(MAX_TUNING_ROUNDS):
        for dep in deployments:
            dep["notes"] = _padding(pad)
        size = _card_size(card)
        if low <= size <= high:
            return card
        pad = max(0, pad + round((target - size) / len(deployments)))
    raise TargetUnreachableError(
        f"size tuning did not converge on {target} bytes in {MAX_TUNING_ROUNDS} rounds"
    )


def _tune_micro_card(card: dict, rng: random.Random) -> dict:
    target = rng.randint(2600, 7600)
    base = _card_size(card)
    if base < target:
        card["full_description"] = card["full_description"] + " " + _padding(target - base)
    size = _card_size(card)
    if not 2048 <= size <= 8192:
        raise TargetUnreachableError(f"micro card size {size} outside the 2-8 KB window")
    return card


def generate_documents(spec: GeneratorSpec) -> tuple[list[dict], list[dict]]:
    """All card documents plus the experiment list for a spec; pure function
    of the seed."""
    rng = random.Random(spec.seed)
    cards = []
    seen_ids = set()
    for idx in range(spec.cards):
        card = _base_card(rng, idx, spec, dep_offset=idx * spec.deployments_per_card)
        while card["external_id"] in seen_ids:  # same author/name/version redraw
            card = _base_card(rng, idx, spec, dep_offset=idx * spec.deployments_per_card)
        seen_ids.add(card["external_id"])
        if spec.target_card_bytes:
            card = _tune_card_to_target(card, spec.target_card_bytes)
        else:
            card = _tune_micro_card(card, rng)
        cards.append(card)
    experiments = [
        {"experiment_id": f"exp-{i:04d}", "deployment_element_ids": []}
        for i in range(spec.experiments)
    ]
    return cards, experiments


def write_corpus(spec: GeneratorSpec, out_dir: str,
                 documents: tuple[list[dict], list[dict]] | None = None) -> dict:
    """Write the card files and experiment list; returns the file map."""
    cards, experiments = documents if documents is not None else generate_documents(spec)
    root = Path(out_dir)
    card_dir = root / "cards"
    card_dir.mkdir(parents=True, exist_ok=True)
    card_files = []
    for i, card in enumerate(cards):
        path = card_dir / f"card_{i:04d}.json"
        path.write_bytes(wire.dump_bytes(card))
        card_files.append(str(path))
    experiments_path = root / "experiments.json"
    experiments_path.write_bytes(wire.dump_bytes(experiments))
    return {
        "cards": card_files,
        "experiments": str(experiments_path),
        "mc_ids": [c["external_id"] for c in cards],
        "card_sizes": [_card_size(c) for c in cards],
    }


def ingest_corpus(spec: GeneratorSpec, out_dir: str, endpoint: str,
                  bearer_token: str | None = None) -> dict:
    """Write the corpus, POST it into a server, and build the run manifest
    (model-card ids, element ids for edge benchmarks, search terms)."""
    documents = generate_documents(spec)
    files = write_corpus(spec, out_dir, documents)
    cards, experiments = documents
    client = RestClient(endpoint)
    client.connect()
    auth = {"Authorization": f"Bearer {bearer_token}"} if bearer_token else {}
    try:
        for card in cards:
            status, _, body = client.request(
                "POST", "/modelcard", wire.dump_bytes(card), headers=auth)
            if status != 201:
                raise ApiError(f"ingest of {card['external_id']} failed: {status} {body[:200]!r}")
        experiment_elements = []
        for experiment in experiments:
            status, _, body = client.request(
                "POST", "/experiment", wire.dump_bytes(experiment), headers=auth)
            if status != 201:
                raise ApiError(f"experiment ingest failed: {status} {body[:200]!r}")
            experiment_elements.append(json.loads(body)["element_id"])
        deployment_elements = []
        for card in cards:
            status, _, body = client.request(
                "GET", rest_retrieve_path(card["external_id"]), headers=auth)
            if status != 200:
                raise ApiError(f"retrieval of {card['external_id']} failed: {status}")
            deployment_elements.extend(
                d["element_id"] for d in json.loads(body)["deployments"])
    finally:
        client.close()
    search_terms = sorted({kw for card in cards for kw in card["keywords"]})
    manifest = {
        "preset": spec.preset,
        "seed": spec.seed,
        "mc_ids": files["mc_ids"],
        "card_sizes": files["card_sizes"],
        "experiment_element_ids": experiment_elements,
        "deployment_element_ids": deployment_elements,
        "search_terms": search_terms,
    }
    manifest_path = Path(out_dir) / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
