"""Context retrieval, prompt composition, response parsing, suites."""

from __future__ import annotations

import ast
import json
import logging
from pathlib import Path

import pytest

from kgaudit.clients import TransportError
from kgaudit.corpus import TextChunk
from kgaudit.graph import Fact, KnowledgeGraph, add_fact
from kgaudit.prompts import SYSTEM_PROMPT, USER_PROMPT
from kgaudit.synthesis import (
    AuditSuite,
    EmptyResponseError,
    NotJsonError,
    QAParseError,
    SynthesisConfig,
    SynthesisError,
    WrongShapeError,
    compose_prompt,
    parse_qa_response,
    read_suite,
    retrieve_context,
    synthesize_suite,
    write_suite,
)

DATA_DIR = Path(__file__).parent / "data"

LENT_PASSAGE = (
    "The Greek Orthodox Church observes Lent as a period of fasting and "
    "spiritual reflection that begins on Clean Monday and lasts for 40 days. "
    "During this time, adherents follow strict dietary restrictions and "
    "increase their prayer and attendance at special services."
)

LENT_EXAMPLE_OUTPUT = """{
    "1": {
        "question": "Which religious denomination observes Lent beginning on Clean Monday with a 40-day period of fasting and spiritual reflection?",
        "reference_answer": "Greek Orthodox"
    },
    "2": {
        "question": "In the Greek Orthodox tradition, what is the length of the Lent period?",
        "reference_answer": "40 days"
    }
}"""


def _chunk(text: str, chunk_id: str) -> TextChunk:
    return TextChunk(chunk_id=chunk_id, doc_id="d", start=0, end=len(text), text=text)


def _fact(head="Lent", relation="religion", tail="Greek Orthodox", chunks=("c1",)) -> Fact:
    return Fact(head=head, relation=relation, tail=tail, provenance=frozenset(chunks))


def test_prompt_templates_match_frozen_fixtures():
    assert SYSTEM_PROMPT == (DATA_DIR / "quiz_system_prompt.txt").read_text(encoding="utf-8")
    assert USER_PROMPT == (DATA_DIR / "quiz_user_prompt.txt").read_text(encoding="utf-8")


def test_retrieve_context_single_chunk_verbatim():
    chunks = {"c1": _chunk(LENT_PASSAGE, "c1")}
    assert retrieve_context(_fact(), chunks) == LENT_PASSAGE


def test_retrieve_context_joins_in_chunk_id_order():
    chunks = {"c2": _chunk("second text", "c2"), "c1": _chunk("first text", "c1")}
    fact = _fact(chunks=("c2", "c1"))
    assert retrieve_context(fact, chunks) == "first text\n\nsecond text"


def test_retrieve_context_truncates_to_budget():
    chunks = {"c1": _chunk("x" * 500, "c1")}
    ctx = retrieve_context(_fact(), chunks, budget=100)
    assert len(ctx) == 100
    assert ctx.endswith("...[truncated]")


def test_retrieve_context_dangling_chunk():
    with pytest.raises(SynthesisError, match="unknown chunk"):
        retrieve_context(_fact(chunks=("ghost",)), {})


def test_compose_prompt_lent_example():
    bundle = compose_prompt(_fact(), LENT_PASSAGE)
    assert bundle.system_text == SYSTEM_PROMPT
    assert bundle.system_text.startswith("You are an expert quiz generator")
    assert (
        "Relationship: {'head': 'Lent', 'type': 'religion', 'tail': 'Greek Orthodox'}"
        in bundle.user_text
    )
    assert f"Text: {LENT_PASSAGE}\n" in bundle.user_text


def test_compose_prompt_preserves_braces_in_context():
    ctx = 'code {"a": 1} and {braces} and a fake\nRelationship: line'
    bundle = compose_prompt(_fact(head="A B", relation="wrote", tail="C D"), ctx)
    assert '{"a": 1}' in bundle.user_text
    assert "{braces}" in bundle.user_text
    # The real relationship line is the last one; parsing recovers it.
    rel_line = bundle.user_text.rsplit("\nRelationship: ", 1)[1].strip()
    assert ast.literal_eval(rel_line) == {"head": "A B", "type": "wrote", "tail": "C D"}


def test_compose_prompt_round_trips_context_and_surfaces():
    ctx = "Some Passage with Facts."
    fact = _fact(head="He'd Say", relation="works for", tail='Quote "Corp"')
    bundle = compose_prompt(fact, ctx)
    body = bundle.user_text.split("Text: ", 1)[1]
    recovered_ctx, rel_part = body.rsplit("\nRelationship: ", 1)
    assert recovered_ctx == ctx
    rel = ast.literal_eval(rel_part.strip())
    assert rel == {"head": fact.head, "type": fact.relation, "tail": fact.tail}


def test_compose_prompt_rejects_empty_context():
    with pytest.raises(SynthesisError, match="non-empty context"):
        compose_prompt(_fact(), "")


def test_parse_appendix_example_output():
    pairs = parse_qa_response(LENT_EXAMPLE_OUTPUT, _fact())
    assert len(pairs) == 2
    assert "denomination" in pairs[0].question
    assert pairs[0].reference_answer == "Greek Orthodox"
    assert pairs[1].reference_answer == "40 days"
    assert all(p.fact_key == _fact().norm_key for p in pairs)
    assert all(p.chunk_id == "c1" for p in pairs)


def test_parse_single_entry():
    pairs = parse_qa_response('{"1": {"question": "q", "reference_answer": "a"}}', _fact())
    assert len(pairs) == 1
    assert pairs[0].question == "q"


def test_parse_tolerates_code_fence():
    fenced = "```json\n" + LENT_EXAMPLE_OUTPUT + "\n```"
    assert len(parse_qa_response(fenced, _fact())) == 2


def test_parse_not_json():
    with pytest.raises(NotJsonError):
        parse_qa_response("certainly! here are questions:", _fact())


def test_parse_wrong_shapes():
    fact = _fact()
    with pytest.raises(WrongShapeError, match="not a JSON object"):
        parse_qa_response('["a", "b"]', fact)
    with pytest.raises(WrongShapeError, match="non-numeric"):
        parse_qa_response('{"one": {"question": "q", "reference_answer": "a"}}', fact)
    with pytest.raises(WrongShapeError, match="not an object"):
        parse_qa_response('{"1": "qa"}', fact)
    with pytest.raises(WrongShapeError, match="wrong fields"):
        parse_qa_response('{"1": {"question": "q", "answer": "a"}}', fact)
    with pytest.raises(WrongShapeError, match="non-string"):
        parse_qa_response('{"1": {"question": "q", "reference_answer": 7}}', fact)


def test_parse_zero_entries():
    with pytest.raises(EmptyResponseError):
        parse_qa_response("{}", _fact())
    with pytest.raises(EmptyResponseError):
        parse_qa_response('{"1": {"question": " ", "reference_answer": "a"}}', _fact())


def test_parse_caps_at_five_with_warning(caplog):
    data = {
        str(i): {"question": f"q{i}", "reference_answer": f"a{i}"} for i in range(1, 7)
    }
    with caplog.at_level(logging.WARNING, logger="kgaudit.synthesis"):
        pairs = parse_qa_response(json.dumps(data), _fact())
    assert len(pairs) == 5
    assert [p.question for p in pairs] == ["q1", "q2", "q3", "q4", "q5"]
    assert "keeping the first 5" in caplog.text


def test_parse_qa_ids_are_stable_and_distinct():
    pairs = parse_qa_response(LENT_EXAMPLE_OUTPUT, _fact())
    again = parse_qa_response(LENT_EXAMPLE_OUTPUT, _fact())
    assert [p.qa_id for p in pairs] == [p.qa_id for p in again]
    assert len({p.qa_id for p in pairs}) == 2
    assert pairs[0].qa_id.endswith("-1")


def _qa_payload(n: int) -> str:
    return json.dumps(
        {
            str(i + 1): {"question": f"q{i + 1}?", "reference_answer": f"a{i + 1}"}
            for i in range(n)
        }
    )


class FixedQAClient:
    """Returns n well-formed QA entries for every prompt."""

    def __init__(self, n: int) -> None:
        self.n = n
        self.calls = 0

    def generate(self, system_text, user_text) -> str:
        self.calls += 1
        return _qa_payload(self.n)


class FlakyThenGoodClient(FixedQAClient):
    """First call per instance returns garbage, the rest are valid."""

    def generate(self, system_text, user_text) -> str:
        self.calls += 1
        if self.calls == 1:
            return "not json at all"
        return _qa_payload(self.n)


class AlwaysFailsClient:
    def generate(self, system_text, user_text) -> str:
        raise TransportError("gateway down")


def _test_graph(n_facts: int) -> tuple[KnowledgeGraph, dict[str, TextChunk]]:
    g = KnowledgeGraph(label="test")
    chunks: dict[str, TextChunk] = {}
    for i in range(n_facts):
        chunk_id = f"c{i}"
        text = f"Entity{i} Alpha wrote Book{i} Beta."
        chunks[chunk_id] = _chunk(text, chunk_id)
        add_fact(
            g,
            Fact(
                head=f"Entity{i} Alpha",
                relation="wrote",
                tail=f"Book{i} Beta",
                provenance=frozenset([chunk_id]),
            ),
        )
    return g, chunks


def test_synthesize_suite_mock_counts():
    g, chunks = _test_graph(3)
    client = FixedQAClient(2)
    suite = synthesize_suite(g, chunks, client, SynthesisConfig(suite_id="s", timestamp="t0"))
    assert len(suite.qa_pairs) == 6
    assert suite.succeeded_facts == 3
    assert suite.failed_facts == 0
    assert client.calls == 3
    assert suite.fact_keys() == set(g.facts)
    assert len(suite.qa_pairs) / len(g) == 2.0


def test_synthesize_suite_requires_test_label():
    g, chunks = _test_graph(1)
    forget = KnowledgeGraph(label="forget", facts=dict(g.facts))
    with pytest.raises(SynthesisError, match="test-labeled"):
        synthesize_suite(forget, chunks, FixedQAClient(1), SynthesisConfig())


def test_synthesize_suite_empty_graph():
    suite = synthesize_suite(
        KnowledgeGraph(label="test"), {}, FixedQAClient(1), SynthesisConfig()
    )
    assert suite.qa_pairs == []
    assert suite.succeeded_facts == 0


def test_synthesize_suite_retries_parse_failures():
    g, chunks = _test_graph(1)
    client = FlakyThenGoodClient(2)
    suite = synthesize_suite(
        g, chunks, client, SynthesisConfig(parse_retries=2, timestamp="t0")
    )
    assert suite.failed_facts == 0
    assert len(suite.qa_pairs) == 2
    assert client.calls == 2


def test_synthesize_suite_records_exhausted_retries():
    g, chunks = _test_graph(2)

    class AlwaysGarbage:
        def __init__(self) -> None:
            self.calls = 0

        def generate(self, system_text, user_text) -> str:
            self.calls += 1
            return "garbage"

    client = AlwaysGarbage()
    suite = synthesize_suite(
        g, chunks, client, SynthesisConfig(parse_retries=1, timestamp="t0")
    )
    assert suite.failed_facts == 2
    assert suite.succeeded_facts == 0
    assert suite.qa_pairs == []
    assert client.calls == 4  # two facts, one retry each
    assert all("NotJsonError" in reason for _, reason in suite.failures)


def test_synthesize_suite_records_client_failures_and_continues():
    g, chunks = _test_graph(2)
    suite = synthesize_suite(g, chunks, AlwaysFailsClient(), SynthesisConfig(timestamp="t0"))
    assert suite.failed_facts == 2
    assert all("generation call failed" in reason for _, reason in suite.failures)


def test_synthesize_suite_coverage_lower_bound():
    g, chunks = _test_graph(4)

    class FailsForOneFact(FixedQAClient):
        def generate(self, system_text, user_text) -> str:
            if "Entity2 Alpha" in user_text:
                return "broken"
            return super().generate(system_text, user_text)

    suite = synthesize_suite(
        g, chunks, FailsForOneFact(3), SynthesisConfig(parse_retries=0, timestamp="t0")
    )
    assert suite.failed_facts == 1
    assert len(suite.fact_keys()) == len(g) - suite.failed_facts


def test_synthesize_suite_is_deterministic():
    g, chunks = _test_graph(3)
    cfg = SynthesisConfig(suite_id="s", timestamp="t0")
    first = synthesize_suite(g, chunks, FixedQAClient(2), cfg)
    second = synthesize_suite(g, chunks, FixedQAClient(2), cfg)
    assert first.qa_pairs == second.qa_pairs
    assert first.generation_meta == second.generation_meta


def test_suite_round_trip(tmp_path):
    g, chunks = _test_graph(3)
    suite = synthesize_suite(
        g, chunks, FixedQAClient(2), SynthesisConfig(suite_id="s", timestamp="t0")
    )
    path = tmp_path / "suite.jsonl"
    assert write_suite(path, suite) == 6
    loaded = read_suite(path)
    assert loaded.suite_id == suite.suite_id
    assert loaded.qa_pairs == suite.qa_pairs
    assert loaded.generation_meta == suite.generation_meta
    assert loaded.succeeded_facts == 3


def test_read_suite_rejects_duplicate_qa_ids(tmp_path):
    g, chunks = _test_graph(1)
    suite = synthesize_suite(
        g, chunks, FixedQAClient(1), SynthesisConfig(suite_id="s", timestamp="t0")
    )
    path = tmp_path / "suite.jsonl"
    write_suite(path, suite)
    line = path.read_text(encoding="utf-8")
    path.write_text(line + line, encoding="utf-8")
    with pytest.raises(SynthesisError, match="duplicate qa_id"):
        read_suite(path)


def test_qa_parse_error_hierarchy():
    for exc_type in (NotJsonError, WrongShapeError, EmptyResponseError):
        assert issubclass(exc_type, QAParseError)


def test_audit_suite_default_fields():
    suite = AuditSuite(suite_id="x")
    assert suite.qa_pairs == []
    assert suite.fact_keys() == set()
