"""kgaudit: knowledge-graph based audit suite generation and judging for LLM unlearning.

The pipeline loads a forget corpus and a retain corpus, extracts a knowledge
graph from each, removes facts shared between the two graphs, synthesizes a
fact-anchored QA audit suite with an LLM, and judges an audited model's
answers to count knowledge-memorization cases.
"""

__version__ = "0.1.0"
