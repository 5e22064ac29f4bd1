"""ROUGE-L recall over case-folded alphanumeric tokens.

Recall is the length of the longest common subsequence between candidate
and reference token sequences divided by the reference length, so a
score of 1.0 means every reference token appears in the candidate in
order.  That makes the strict memorization threshold (recall equal to 1)
meaningful for multi-word reference answers.
"""

from __future__ import annotations

import re
from typing import Sequence

# Maximal alphanumeric runs; underscores and punctuation split tokens.
_TOKEN = re.compile(r"[^\W_]+")


def tokenize(s: str) -> list[str]:
    """Case-folded tokens of ``s``; punctuation-only text yields none."""
    return _TOKEN.findall(s.casefold())


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest-common-subsequence length via a two-row dynamic program."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_recall(candidate: str, reference: str) -> float:
    """LCS(candidate tokens, reference tokens) / |reference tokens|.

    Raises ValueError when the reference has no tokens, since recall is
    undefined there.
    """
    ref_tokens = tokenize(reference)
    if not ref_tokens:
        raise ValueError(f"reference has no tokens: {reference!r}")
    return lcs_length(tokenize(candidate), ref_tokens) / len(ref_tokens)
