"""HTTP client behavior, response validation, and offline clients."""

from __future__ import annotations

import json

import pytest

from kgaudit.clients import (
    EchoGenerationClient,
    HttpEntailmentClient,
    HttpExtractorClient,
    HttpGenerationClient,
    LexicalEntailmentClient,
    SchemaError,
    StaticGenerationClient,
    TemplateGenerationClient,
    TransportError,
    validate_entailment_response,
    validate_extraction_response,
)

GOOD_NLI = {
    "label": "entailment",
    "scores": {"entailment": 0.9, "neutral": 0.08, "contradiction": 0.02},
}


def test_generation_client_sends_chat_payload(stub_server):
    stub_server.routes["/gen"] = lambda payload: (200, {"content": "hi there"})
    client = HttpGenerationClient(
        endpoint_url=stub_server.url("/gen"), model="m1", temperature=0.4
    )
    assert client.generate("be brief", "say hi") == "hi there"
    path, payload = stub_server.calls[-1]
    assert path == "/gen"
    assert payload["model"] == "m1"
    assert payload["temperature"] == 0.4
    assert payload["messages"] == [
        {"role": "system", "content": "be brief"},
        {"role": "user", "content": "say hi"},
    ]


def test_generation_client_omits_system_message_when_none(stub_server):
    stub_server.routes["/gen"] = lambda payload: (200, {"content": "answer"})
    client = HttpGenerationClient(endpoint_url=stub_server.url("/gen"), model="m")
    client.generate(None, "just the question")
    _, payload = stub_server.calls[-1]
    assert payload["messages"] == [{"role": "user", "content": "just the question"}]


def test_generation_client_reads_api_key_from_env(stub_server, monkeypatch):
    monkeypatch.setenv("AUDIT_GEN_API_KEY", "sk-test-123")
    stub_server.routes["/gen"] = lambda payload: (200, {"content": "ok"})
    client = HttpGenerationClient(endpoint_url=stub_server.url("/gen"), model="m")
    client.generate(None, "q")
    _, headers = stub_server.request_headers[-1]
    assert headers.get("Authorization") == "Bearer sk-test-123"


def test_generation_client_no_auth_header_without_env(stub_server, monkeypatch):
    monkeypatch.delenv("AUDIT_GEN_API_KEY", raising=False)
    stub_server.routes["/gen"] = lambda payload: (200, {"content": "ok"})
    HttpGenerationClient(endpoint_url=stub_server.url("/gen"), model="m").generate(None, "q")
    _, headers = stub_server.request_headers[-1]
    assert "Authorization" not in headers


def test_retry_then_success(stub_server):
    state = {"n": 0}

    def flaky(payload):
        state["n"] += 1
        if state["n"] < 3:
            return 500, {"error": "busy"}
        return 200, {"content": "finally"}

    stub_server.routes["/gen"] = flaky
    client = HttpGenerationClient(
        endpoint_url=stub_server.url("/gen"), model="m", max_retries=2
    )
    assert client.generate(None, "q") == "finally"
    assert stub_server.count("/gen") == 3


def test_transport_error_after_retries_exhausted(stub_server):
    stub_server.routes["/gen"] = lambda payload: (500, {"error": "down"})
    client = HttpGenerationClient(
        endpoint_url=stub_server.url("/gen"), model="m", max_retries=1
    )
    with pytest.raises(TransportError, match="status 500"):
        client.generate(None, "q")
    assert stub_server.count("/gen") == 2


def test_connection_refused_is_transport_error():
    client = HttpGenerationClient(
        endpoint_url="http://127.0.0.1:9/gen", model="m", max_retries=0, timeout_ms=500
    )
    with pytest.raises(TransportError):
        client.generate(None, "q")


def test_non_json_body_is_schema_error(stub_server):
    stub_server.routes["/gen"] = lambda payload: (200, "this is not json")
    client = HttpGenerationClient(
        endpoint_url=stub_server.url("/gen"), model="m", max_retries=0
    )
    with pytest.raises(SchemaError, match="non-JSON"):
        client.generate(None, "q")


def test_missing_content_is_schema_error(stub_server):
    stub_server.routes["/gen"] = lambda payload: (200, {"text": "wrong key"})
    client = HttpGenerationClient(endpoint_url=stub_server.url("/gen"), model="m")
    with pytest.raises(SchemaError, match="content"):
        client.generate(None, "q")


def test_entailment_client_round_trip(stub_server):
    stub_server.routes["/nli"] = lambda payload: (200, GOOD_NLI)
    client = HttpEntailmentClient(endpoint_url=stub_server.url("/nli"))
    label, scores = client.classify("a premise", "a hypothesis")
    assert label == "entailment"
    assert scores == GOOD_NLI["scores"]
    _, payload = stub_server.calls[-1]
    assert payload == {"premise": "a premise", "hypothesis": "a hypothesis"}


def test_extractor_client_round_trip(stub_server):
    triples = {"triples": [{"head": "A B", "relation": "wrote", "tail": "C D"}]}
    stub_server.routes["/extract"] = lambda payload: (200, triples)
    client = HttpExtractorClient(endpoint_url=stub_server.url("/extract"))
    assert client.extract("some text") == [("A B", "wrote", "C D")]
    _, payload = stub_server.calls[-1]
    assert payload == {"text": "some text"}


def test_validate_entailment_response_rejects_bad_bodies():
    assert validate_entailment_response(GOOD_NLI)[0] == "entailment"
    for body in (
        [],
        {"label": "maybe", "scores": GOOD_NLI["scores"]},
        {"label": "entailment"},
        {"label": "entailment", "scores": {"entailment": 0.9, "neutral": 0.1}},
        {"label": "entailment", "scores": {"entailment": 1.5, "neutral": 0.1, "contradiction": 0.1}},
        {"label": "entailment", "scores": {"entailment": "high", "neutral": 0.1, "contradiction": 0.1}},
        {"label": "entailment", "scores": {"entailment": True, "neutral": 0.1, "contradiction": 0.1}},
    ):
        with pytest.raises(SchemaError):
            validate_entailment_response(body)


def test_validate_extraction_response_rejects_bad_bodies():
    good = {"triples": [{"head": "a", "relation": "b", "tail": "c"}]}
    assert validate_extraction_response(good) == [("a", "b", "c")]
    assert validate_extraction_response({"triples": []}) == []
    for body in (
        {},
        {"triples": "nope"},
        {"triples": [["a", "b", "c"]]},
        {"triples": [{"head": "a", "relation": "b"}]},
        {"triples": [{"head": "a", "relation": "b", "tail": 3}]},
    ):
        with pytest.raises(SchemaError):
            validate_extraction_response(body)


def _template_prompt() -> str:
    from kgaudit.graph import Fact
    from kgaudit.synthesis import compose_prompt

    fact = Fact(
        head="Harry Potter",
        relation="attends",
        tail="Hogwarts School",
        provenance=frozenset(["c1"]),
    )
    return compose_prompt(fact, "Harry Potter attends Hogwarts School.").user_text


def test_template_client_emits_parseable_json():
    client = TemplateGenerationClient(questions_per_fact=3)
    raw = client.generate("sys", _template_prompt())
    data = json.loads(raw)
    assert sorted(data) == ["1", "2", "3"]
    for entry in data.values():
        assert set(entry) == {"question", "reference_answer"}
        assert entry["question"] and entry["reference_answer"]
    assert data["1"]["reference_answer"] == "Hogwarts School"
    assert data["2"]["reference_answer"] == "Harry Potter"
    assert data["3"]["reference_answer"] == "attends"


def test_template_client_is_deterministic():
    client = TemplateGenerationClient(questions_per_fact=5)
    prompt = _template_prompt()
    assert client.generate(None, prompt) == client.generate(None, prompt)


def test_template_client_bounds():
    with pytest.raises(ValueError):
        TemplateGenerationClient(questions_per_fact=0)
    with pytest.raises(ValueError):
        TemplateGenerationClient(questions_per_fact=6)


def test_template_client_needs_relationship_line():
    with pytest.raises(SchemaError, match="relationship"):
        TemplateGenerationClient().generate(None, "no slots here")


def test_echo_and_static_clients():
    assert EchoGenerationClient().generate(None, "ping") == "ping"
    assert StaticGenerationClient(reply="nope").generate("s", "q") == "nope"


def test_lexical_entailment_subsequence_rule():
    client = LexicalEntailmentClient()
    label, scores = client.classify("the Greek Orthodox church observes", "greek orthodox")
    assert label == "entailment"
    assert abs(sum(scores.values()) - 1.0) < 1e-9
    label, _ = client.classify("no overlap here", "greek orthodox")
    assert label == "neutral"
    # Order matters: reversed tokens are not a subsequence.
    label, _ = client.classify("orthodox greek", "greek orthodox")
    assert label == "neutral"
    # An empty hypothesis never counts as entailed.
    label, _ = client.classify("anything", "")
    assert label == "neutral"
