import json
import random
from datetime import datetime, timedelta, timezone

import pytest

from mcard_registry.cards import parse_model_card
from mcard_registry.registry import Registry

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)

WORDS = (
    "camera trap wildlife classifier detection speech transcription model "
    "edge inference latency accuracy field sensor image audio stream drift "
    "resnet yolo transformer embedding monitor habitat species night thermal"
).split()


def iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def deployment_dict(i: int = 0, device: str = "dev-1", **overrides) -> dict:
    base = {
        "deployment_id": f"dep-{i:04d}",
        "device_id": device,
        "start_time": iso(EPOCH + timedelta(hours=i)),
        "end_time": iso(EPOCH + timedelta(hours=i + 1)),
        "location": "field-site-a",
        "mean_latency_ms": 42.0 + i,
        "mean_accuracy": 0.9,
        "requests_served": 100 + i,
        "cpu_utilization": 0.5,
        "gpu_utilization": 0.25,
        "energy_joules": 12.5,
    }
    base.update(overrides)
    return base


def card_dict(author="jdoe", name="resnet", version="1.0", **overrides) -> dict:
    base = {
        "external_id": f"{author}-{name}-{version}",
        "name": name,
        "version": version,
        "author": author,
        "short_description": "camera trap classifier",
        "full_description": "A wildlife image classifier tuned for edge devices.",
        "keywords": ["wildlife", "classifier"],
        "input_type": "image",
        "output_type": "label",
        "ai_model": {
            "name": name,
            "version": version,
            "owner": author,
            "artifact_location": f"https://models.example.org/{author}/{name}-{version}.pt",
            "license": "apache-2.0",
            "framework": "pytorch",
            "model_type": "cnn",
            "test_accuracy": 0.91,
            "lifecycle_stage": "model_image",
        },
        "deployments": [],
        "documentation_format_version": "1.0",
    }
    base.update(overrides)
    return base


def random_card_dict(rng: random.Random, idx: int) -> dict:
    author = f"user{rng.randint(0, 999)}"
    name = f"{rng.choice(WORDS)}_{rng.choice(WORDS)}_{idx}"
    version = f"{rng.randint(0, 3)}.{rng.randint(0, 9)}"
    n_deps = rng.randint(0, 20)
    deployments = [
        deployment_dict(
            i,
            device=f"dev-{rng.randint(1, 5)}",
            mean_latency_ms=round(rng.uniform(1, 500), 3),
            mean_accuracy=round(rng.uniform(0.3, 1.0), 4),
        )
        for i in range(n_deps)
    ]
    card = card_dict(
        author=author,
        name=name,
        version=version,
        short_description=" ".join(rng.sample(WORDS, 4)),
        full_description=" ".join(rng.choices(WORDS, k=30)),
        keywords=rng.sample(WORDS, 3),
        deployments=deployments,
    )
    card["ai_model"]["test_accuracy"] = round(rng.uniform(0.2, 1.0), 4)
    if rng.random() < 0.5:
        card["bias_analysis"] = {
            "demographic_parity": round(rng.uniform(0, 1), 3),
            "equal_odds": round(rng.uniform(0, 1), 3),
            "notes": "synthetic",
        }
    if rng.random() < 0.5:
        card["xai_analysis"] = {
            "method": "shap",
            "top_features": [
                {"name": rng.choice(WORDS), "importance": round(rng.random(), 4)}
                for _ in range(rng.randint(0, 4))
            ],
            "notes": "",
        }
    if rng.random() < 0.3:
        card["ai_model"]["container_image_location"] = (
            f"https://images.example.org/{author}/{name}:{version}"
        )
    return card


def ingest_dict(registry: Registry, card: dict) -> str:
    return registry.ingest_model_card(parse_model_card(json.dumps(card)))


@pytest.fixture
def registry() -> Registry:
    return Registry()


# detail strings recorded by the acceptance tests, printed by the hook below
acceptance_details: dict = {}


def pytest_runtest_logreport(report):
    # one pass/fail line per acceptance criterion, outside stdout capture
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        verdict = "PASS" if report.passed else "FAIL"
        detail = acceptance_details.get(name)
        suffix = f" ({detail})" if detail and report.passed else ""
        print(f"\n[acceptance] {name}: {verdict}{suffix}", flush=True)
