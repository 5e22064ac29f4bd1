"""Deterministic pronoun-to-antecedent substitution.

A deliberately coarse preprocessor: each third-person pronoun is
replaced by the most recent TitleCase entity span seen before it, and
left alone when no entity has appeared yet.  It is a server-side toggle
(default off) applied before extraction; no learned coreference system
is bundled.
"""

from __future__ import annotations

import re

_ENTITY_SRC = r"[A-Z][A-Za-z0-9'’\-]*(?:[ ][A-Z][A-Za-z0-9'’\-]*)*"
_SPAN = re.compile(rf"({_ENTITY_SRC})|\b(he|she|it|they)\b")

# Capitalized forms that look like one-word TitleCase entities but are
# pronouns (or too generic to be antecedents).
_CAPITALIZED_PRONOUNS = frozenset({"He", "She", "It", "They", "I", "We", "You"})


def resolve_pronouns(text: str) -> str:
    """Rewrite pronouns to the latest entity span; whitespace untouched."""
    parts: list[str] = []
    last_entity: str | None = None
    pos = 0
    for match in _SPAN.finditer(text):
        parts.append(text[pos : match.start()])
        span = match.group(0)
        if match.group(1) is not None and span not in _CAPITALIZED_PRONOUNS:
            last_entity = span
            parts.append(span)
        else:
            parts.append(last_entity if last_entity is not None else span)
        pos = match.end()
    parts.append(text[pos:])
    return "".join(parts)
