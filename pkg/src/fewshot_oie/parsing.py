"""Conversion between model responses and triplet lists.

Response grammar, one triplet per line::

    1. (subject, predicate, object)

The numeric prefix (``N.`` or ``N)``) is optional. The body is split at its first two
commas, so the object keeps any further commas.
"""

from __future__ import annotations

import re

from .corpus import DegenerateTripletError, Triplet, canonical_key

__all__ = ["parse_response", "format_triplet", "canonical_key"]

_INDEX_PREFIX = re.compile(r"^\d+\s*[.)]")


def _strip_index(line: str) -> str:
    line = line.strip()
    m = _INDEX_PREFIX.match(line)
    if m:
        line = line[m.end():].strip()
    return line


def parse_response(text: str) -> tuple[list[Triplet], list[str]]:
    """Extract triplets from a model response; never raises on string input.

    Returns the deduplicated triplets (first occurrence wins) and one warning per
    skipped non-blank line.
    """
    triplets: list[Triplet] = []
    warnings: list[str] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.split("\n"), start=1):
        if not raw.strip():
            continue
        line = _strip_index(raw)
        if len(line) < 2 or not (line.startswith("(") and line.endswith(")")):
            warnings.append(f"line {lineno}: not a parenthesized triplet: {raw.strip()[:80]!r}")
            continue
        parts = line[1:-1].split(",", 2)
        if len(parts) != 3:
            warnings.append(f"line {lineno}: expected 3 fields, found {len(parts)}")
            continue
        fields = [p.strip() for p in parts]
        try:
            t = Triplet(*fields)
            key = canonical_key(t)
        except DegenerateTripletError as exc:
            warnings.append(f"line {lineno}: degenerate triplet ({exc})")
            continue
        except ValueError as exc:
            warnings.append(f"line {lineno}: {exc}")
            continue
        if key in seen:
            continue
        seen.add(key)
        triplets.append(t)
    return triplets, warnings


def format_triplet(t: Triplet, index: int) -> str:
    return f"{index}. ({t.subject}, {t.predicate}, {t.object})"
