import json
import random

import pytest
import requests.utils
from hypothesis import given, settings, strategies as st

from mcard_registry.cards import (
    LIFECYCLE_STAGES,
    LINKSET_RELS,
    SCHEMA_ADJACENCY,
    build_linkset,
    compose_mc_id,
    document_to_jsonable,
    infer_relationship_type,
    linkset_to_jsonable,
    parse_model_card,
    serialize_link_header,
    serialize_model_card,
)
from mcard_registry.errors import (
    AmbiguousLabelError,
    EmptyComponentError,
    IdMismatchError,
    MalformedJsonError,
    NoSchemaLabelError,
    SchemaViolationError,
)

from conftest import card_dict, deployment_dict, random_card_dict


# --- id composition ---

def test_compose_direct():
    assert compose_mc_id("jdoe", "resnet", "1.0").rendered == "jdoe-resnet-1.0"


def test_compose_sanitizes_whitespace_and_case():
    assert compose_mc_id("J Doe", "My Model", "2").rendered == "j_doe-my_model-2"
    assert compose_mc_id("  a\t b ", "x", "1").rendered == "a_b-x-1"


def test_compose_empty_component():
    with pytest.raises(EmptyComponentError):
        compose_mc_id("", "x", "1")
    with pytest.raises(EmptyComponentError):
        compose_mc_id("a", "   ", "1")


_component = st.text(
    alphabet=st.sampled_from("abcdefgxyz0123456789_ ."), min_size=1, max_size=8
).filter(lambda s: s.strip())


@settings(max_examples=200)
@given(_component, _component, _component, _component, _component, _component)
def test_compose_injective_over_sanitized_triples(a1, m1, v1, a2, m2, v2):
    one = compose_mc_id(a1, m1, v1)
    two = compose_mc_id(a2, m2, v2)
    if (one.author, one.model_name, one.version) != (two.author, two.model_name, two.version):
        assert one.rendered != two.rendered
    else:
        assert one.rendered == two.rendered
    assert " " not in one.rendered


# --- document parsing ---

def test_parse_minimal_card():
    doc = parse_model_card(json.dumps(card_dict()))
    assert doc.external_id == "jdoe-resnet-1.0"
    assert doc.deployments == []
    assert doc.bias_analysis is None
    assert doc.xai_analysis is None
    assert doc.ai_model.test_accuracy == 0.91


def test_parse_accepts_bytes():
    doc = parse_model_card(json.dumps(card_dict()).encode("utf-8"))
    assert doc.name == "resnet"


def test_parse_accuracy_out_of_range():
    card = card_dict()
    card["ai_model"]["test_accuracy"] = 1.3
    with pytest.raises(SchemaViolationError) as excinfo:
        parse_model_card(json.dumps(card))
    assert excinfo.value.field == "ai_model.test_accuracy"


def test_parse_malformed_json():
    with pytest.raises(MalformedJsonError):
        parse_model_card(b"{not json")


def test_parse_id_mismatch():
    card = card_dict()
    card["external_id"] = "someone-else-9.9"
    with pytest.raises(IdMismatchError):
        parse_model_card(json.dumps(card))


def test_parse_relative_artifact_url_rejected():
    card = card_dict()
    card["ai_model"]["artifact_location"] = "models/resnet.pt"
    with pytest.raises(SchemaViolationError):
        parse_model_card(json.dumps(card))


def test_parse_bad_lifecycle_stage():
    card = card_dict()
    card["ai_model"]["lifecycle_stage"] = "retired"
    with pytest.raises(SchemaViolationError):
        parse_model_card(json.dumps(card))
    assert set(LIFECYCLE_STAGES) == {
        "program_object", "serialized_object", "model_image", "inference_execution_instance"
    }


def test_parse_deployment_end_before_start():
    dep = deployment_dict(0)
    dep["end_time"] = "2023-01-01T00:00:00Z"
    card = card_dict(deployments=[dep])
    with pytest.raises(SchemaViolationError):
        parse_model_card(json.dumps(card))


def test_parse_negative_metric_rejected():
    dep = deployment_dict(0, mean_latency_ms=-1.0)
    card = card_dict(deployments=[dep])
    with pytest.raises(SchemaViolationError):
        parse_model_card(json.dumps(card))


def test_unknown_top_level_keys_survive_round_trip():
    card = card_dict()
    card["custom_annotation"] = {"anything": [1, 2, 3]}
    doc = parse_model_card(json.dumps(card))
    assert doc.extras == {"custom_annotation": {"anything": [1, 2, 3]}}
    again = document_to_jsonable(doc)
    assert again["custom_annotation"] == {"anything": [1, 2, 3]}


def test_round_trip_over_generated_corpus():
    rng = random.Random(1234)
    for idx in range(100):
        card = random_card_dict(rng, idx)
        doc = parse_model_card(json.dumps(card))
        re_parsed = parse_model_card(serialize_model_card(doc))
        assert re_parsed == doc, f"card {idx} failed round-trip"


# --- relationship inference ---

def test_full_declared_table():
    expected = {
        ("ModelCard", "Model"): "HAS_MODEL",
        ("ModelCard", "BiasAnalysis"): "HAS_BIAS_ANALYSIS",
        ("ModelCard", "XAIAnalysis"): "HAS_XAI_ANALYSIS",
        ("Model", "Deployment"): "HAS_DEPLOYMENT",
        ("Deployment", "Device"): "RUNS_ON",
        ("Experiment", "Deployment"): "INCLUDES",
    }
    assert SCHEMA_ADJACENCY == expected
    for (src, dst), rel in expected.items():
        assert infer_relationship_type({src}, {dst}) == rel


def test_reversed_pairs_are_schema_violations():
    for src, dst in SCHEMA_ADJACENCY:
        if (dst, src) in SCHEMA_ADJACENCY:
            continue
        with pytest.raises(SchemaViolationError):
            infer_relationship_type({dst}, {src})


def test_unrelated_pair_is_schema_violation():
    with pytest.raises(SchemaViolationError):
        infer_relationship_type({"Device"}, {"Experiment"})


def test_no_schema_label():
    with pytest.raises(NoSchemaLabelError):
        infer_relationship_type({"Banana"}, {"Model"})
    with pytest.raises(NoSchemaLabelError):
        infer_relationship_type(set(), {"Model"})


def test_ambiguous_labels():
    with pytest.raises(AmbiguousLabelError):
        infer_relationship_type({"ModelCard", "Model"}, {"Deployment"})


def test_edge_server_alias_normalizes_to_device():
    assert infer_relationship_type({"Deployment"}, {"EdgeServer"}) == "RUNS_ON"


def test_extra_non_schema_labels_are_ignored():
    assert infer_relationship_type({"ModelCard", "Archived"}, {"Model", "V2"}) == "HAS_MODEL"


# --- signposting ---

def _doc(with_image: bool):
    card = card_dict()
    if with_image:
        card["ai_model"]["container_image_location"] = "https://images.example.org/resnet:1.0"
    return parse_model_card(json.dumps(card))


def test_linkset_with_image_has_four_links():
    linkset = build_linkset(_doc(True), "http://srv.example:8080")
    assert linkset.anchor == "http://srv.example:8080/modelcard/jdoe-resnet-1.0"
    assert len(linkset.links) == 4
    rels = sorted(l.rel for l in linkset.links)
    assert rels == ["cite-as", "describedby", "item", "item"]


def test_linkset_without_image_has_three_links():
    linkset = build_linkset(_doc(False), "http://srv.example:8080")
    assert len(linkset.links) == 3


def test_linkset_rel_vocabulary_and_absolute_targets():
    linkset = build_linkset(_doc(True), "http://srv.example:8080")
    for entry in linkset.links:
        assert entry.rel in LINKSET_RELS
        assert "://" in entry.target


def test_linkset_jsonable_shape():
    body = linkset_to_jsonable(build_linkset(_doc(True), "http://srv.example:8080"))
    assert set(body) == {"linkset"}
    context = body["linkset"][0]
    assert context["anchor"].endswith("/modelcard/jdoe-resnet-1.0")
    total = sum(len(v) for k, v in context.items() if k != "anchor")
    assert total == 4


def test_link_header_parses_with_independent_parser():
    linkset = build_linkset(_doc(True), "http://srv.example:8080")
    header = serialize_link_header(linkset)
    parsed = requests.utils.parse_header_links(header)
    assert len(parsed) == 4
    by_rel = {}
    for link in parsed:
        by_rel.setdefault(link["rel"], []).append(link["url"])
    assert by_rel["cite-as"] == ["http://srv.example:8080/modelcard/jdoe-resnet-1.0"]
    assert by_rel["describedby"] == ["http://srv.example:8080/modelcard/jdoe-resnet-1.0"]
    assert len(by_rel["item"]) == 2
