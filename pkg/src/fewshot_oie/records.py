"""Extraction output files: one JSON object per target sentence."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .corpus import AnnotatedCorpus, CorpusFormatError, DegenerateTripletError, Triplet, canonical_key
from .ensemble import ScoredTriplet


def extraction_line(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False) + "\n"


def write_extractions(results: Iterable, path) -> None:
    """Write results (objects with ``to_record()`` or plain dicts) in the given order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in results:
            fh.write(extraction_line(r.to_record() if hasattr(r, "to_record") else r))


def read_extractions(path) -> dict[str, list[ScoredTriplet]]:
    """Load an extraction file as ``{id: [ScoredTriplet, ...]}``.

    Missing ``uncertainty``/``count`` default to 0 and 1, so a gold file converted to
    this format reads as fully confident predictions.
    """
    out: dict[str, list[ScoredTriplet]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
                sid = rec["id"]
                scored = []
                for t in rec.get("triplets", []):
                    triplet = Triplet(t["subject"], t["predicate"], t["object"])
                    canonical_key(triplet)
                    scored.append(ScoredTriplet(triplet, int(t.get("count", 1)), float(t.get("uncertainty", 0.0))))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, DegenerateTripletError) as exc:
                raise CorpusFormatError(f"{where}: bad extraction record ({exc})") from exc
            if sid in out:
                raise CorpusFormatError(f"{where}: duplicate id {sid!r}")
            out[sid] = scored
    return out


def corpus_as_extractions(corpus: AnnotatedCorpus) -> list[dict]:
    """Gold annotations in extraction format, every triplet fully confident."""
    return [
        {
            "id": a.id,
            "sentence": a.text,
            "triplets": [{"subject": t.subject, "predicate": t.predicate, "object": t.object,
                          "uncertainty": 0.0, "count": 1} for t in a.gold],
            "N": len(a.gold),
            "ensemble": 1,
            "mode": None,
            "k": None,
        }
        for a in corpus
    ]
