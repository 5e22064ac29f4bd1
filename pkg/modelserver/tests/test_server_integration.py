"""Live-server smoke: the audit pipeline runs against real HTTP endpoints."""

from __future__ import annotations

import requests

from kgaudit.clients import HttpExtractorClient
from kgaudit.config import load_config
from kgaudit.graph import read_graph
from kgaudit.pipeline import run_audit, run_generation, run_paths
from kgaudit.synthesis import read_suite

# Every sentence is exactly six words, so a six-word window with no
# overlap puts one whole sentence in each of the 20 chunks.
SENTENCES = [
    "Harry Potter attends Hogwarts School daily.",
    "Hermione Granger attends Hogwarts School daily.",
    "Ronald Weasley attends Hogwarts School daily.",
    "Jane Austen wrote Pride Prejudice carefully.",
    "Leo Tolstoy wrote War Peace carefully.",
    "Mary Shelley wrote Frankenstein Novel carefully.",
    "George Orwell wrote Animal Farm carefully.",
    "Ada Lovelace works for Analytical Engines.",
    "Grace Hopper works for United Navy.",
    "Marie Curie works for Radium Institute.",
    "Alan Turing works for Bletchley Park.",
    "Henry Ford founded Ford Motors proudly.",
    "Elon Reeve founded Space Explorations proudly.",
    "Walt Disney founded Disney Studios proudly.",
    "Louvre Museum is located in Paris.",
    "Eiffel Tower is located in Paris.",
    "Big Ben is located in London.",
    "Statue Liberty is located in York.",
    "Isaac Newton wrote Principia Mathematica carefully.",
    "Charles Babbage founded Difference Engines proudly.",
]


def test_health_over_real_http(live_server):
    response = requests.get(f"{live_server}/health", timeout=5)
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_extractor_client_against_live_server(live_server):
    client = HttpExtractorClient(endpoint_url=f"{live_server}/extract")
    triples = client.extract("Harry Potter attends Hogwarts School.")
    assert ("Harry Potter", "educated at", "Hogwarts School") in triples


def test_pipeline_against_live_server(live_server, tmp_path):
    for sentence in SENTENCES:
        assert len(sentence.split()) == 6, sentence
    forget_dir = tmp_path / "forget"
    retain_dir = tmp_path / "retain"
    forget_dir.mkdir()
    retain_dir.mkdir()
    (forget_dir / "doc.txt").write_text(" ".join(SENTENCES) + "\n", encoding="utf-8")
    # One sentence shared with the forget corpus, one unique to retain.
    (retain_dir / "doc.txt").write_text(
        "Louvre Museum is located in Paris. Nikola Tesla founded Tesla Laboratories proudly.\n",
        encoding="utf-8",
    )

    cfg = load_config(
        overrides=[
            f"corpus.forget_path={forget_dir}",
            f"corpus.retain_path={retain_dir}",
            f"run.out_dir={tmp_path / 'runs'}",
            "run.run_id=live",
            "chunking.window_words=6",
            "chunking.overlap_words=0",
            "extractor.backend=remote",
            f"extractor.endpoint_url={live_server}/extract",
            "judge.client=http",
            f"judge.endpoint_url={live_server}/nli",
        ]
    )
    suite = run_generation(cfg)
    report = run_audit(cfg)

    paths = run_paths(cfg)
    from kgaudit.pipeline import Manifest

    manifest = Manifest.load(paths.manifest)
    assert manifest.stages["ingest"]["info"]["forget_chunks"] == 20

    g_fgt = read_graph(paths.g_fgt)
    g_test = read_graph(paths.g_test)
    assert len(g_fgt) == 20
    assert len(g_test) == 19  # the shared Louvre fact is removed
    assert len(suite.qa_pairs) == 3 * 19
    assert read_suite(paths.suite).qa_pairs == suite.qa_pairs
    assert report.n_cases == 57
    # The echo model parrots questions, so the live NLI endpoint judged
    # real traffic without flagging memorization.
    assert report.kmc_rouge_count == 0
