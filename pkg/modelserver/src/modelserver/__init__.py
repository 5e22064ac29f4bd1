"""HTTP service wrapping a relation-extraction model and an NLI model.

Endpoints: POST /extract (text to triples), POST /nli (premise and
hypothesis to a three-way label with scores), GET /health.  Backends are
pluggable: pretrained transformer models when their weights are present
locally, otherwise deterministic pattern rules so the service always
answers the same contract.
"""

__version__ = "0.1.0"
