"""Canonical in-memory corpus, loaders, and the shared text normalization."""

from __future__ import annotations

import json
import logging
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

_PUNCT = string.punctuation
# Unit separator; cannot survive normalize_text, so keys never collide across fields.
KEY_SEPARATOR = "\x1f"


class CorpusFormatError(ValueError):
    """Raised when a corpus file violates the expected format."""


class DegenerateTripletError(ValueError):
    """Raised when a triplet field normalizes to nothing."""


def normalize_text(text: str) -> list[str]:
    """Lowercase, split on whitespace and strip ASCII punctuation from each token's ends.

    >>> normalize_text("The Flemish Region,")
    ['the', 'flemish', 'region']
    """
    tokens = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class Sentence:
    id: str
    text: str
    tokens: tuple[str, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError(f"sentence {self.id!r} has empty text")
        object.__setattr__(self, "tokens", tuple(normalize_text(self.text)))


@dataclass(frozen=True)
class Triplet:
    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        for name in ("subject", "predicate", "object"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"triplet {name} must be a non-empty string, got {value!r}")
            if "\n" in value or "\r" in value:
                raise ValueError(f"triplet {name} contains a newline: {value!r}")

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)

    @property
    def key(self) -> str:
        return canonical_key(self)


def canonical_key(t: Triplet) -> str:
    """Normalized identity of a triplet.

    Two triplets with equal keys are the same fact for counting, deduplication and
    exact-match scoring.
    """
    parts = []
    for name, value in zip(("subject", "predicate", "object"), t.as_tuple()):
        tokens = normalize_text(value)
        if not tokens:
            raise DegenerateTripletError(f"triplet {name} {value!r} normalizes to nothing")
        parts.append(" ".join(tokens))
    return KEY_SEPARATOR.join(parts)


def dedupe_triplets(triplets: Iterable[Triplet]) -> tuple[list[Triplet], list[Triplet]]:
    """Split into (first occurrences, dropped duplicates) by canonical key."""
    seen: set[str] = set()
    kept, dropped = [], []
    for t in triplets:
        k = canonical_key(t)
        if k in seen:
            dropped.append(t)
        else:
            seen.add(k)
            kept.append(t)
    return kept, dropped


@dataclass(frozen=True)
class AnnotatedSentence:
    sentence: Sentence
    gold: tuple[Triplet, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gold", tuple(self.gold))
        keys = [canonical_key(t) for t in self.gold]
        if len(keys) != len(set(keys)):
            raise ValueError(f"duplicate gold triplets in sentence {self.sentence.id!r}")

    @property
    def id(self) -> str:
        return self.sentence.id

    @property
    def text(self) -> str:
        return self.sentence.text

    @classmethod
    def from_raw(cls, id: str, text: str, gold: Iterable[Sequence[str]] = ()) -> "AnnotatedSentence":
        """Build from plain values, dropping duplicate gold triplets with a warning."""
        triplets = [t if isinstance(t, Triplet) else Triplet(*t) for t in gold]
        kept, dropped = dedupe_triplets(triplets)
        for t in dropped:
            logger.warning("sentence %s: dropping duplicate gold triplet %s", id, t.as_tuple())
        return cls(Sentence(id, text), tuple(kept))


@dataclass(frozen=True)
class AnnotatedCorpus:
    items: tuple[AnnotatedSentence, ...] = ()
    source: str = field(default="<memory>", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        seen = set()
        for a in self.items:
            if a.id in seen:
                raise CorpusFormatError(f"duplicate sentence id {a.id!r} in {self.source}")
            seen.add(a.id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[AnnotatedSentence]:
        return iter(self.items)

    def __getitem__(self, index: int) -> AnnotatedSentence:
        return self.items[index]

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.items]

    def by_id(self) -> dict[str, AnnotatedSentence]:
        return {a.id: a for a in self.items}

    def sentences(self) -> list[Sentence]:
        return [a.sentence for a in self.items]


def _item_from_record(record, where: str) -> AnnotatedSentence:
    if not isinstance(record, dict):
        raise CorpusFormatError(f"{where}: expected a JSON object")
    for key in ("id", "sentence"):
        if not isinstance(record.get(key), str):
            raise CorpusFormatError(f"{where}: field {key!r} must be a string")
    gold = record.get("gold", [])
    if not isinstance(gold, list):
        raise CorpusFormatError(f"{where}: field 'gold' must be a list")
    for j, entry in enumerate(gold):
        if not isinstance(entry, list) or len(entry) != 3:
            n = len(entry) if isinstance(entry, list) else "non-list"
            raise CorpusFormatError(f"{where}: gold entry {j} must have arity 3, got {n}")
    try:
        return AnnotatedSentence.from_raw(record["id"], record["sentence"], gold)
    except (ValueError, TypeError) as exc:
        raise CorpusFormatError(f"{where}: {exc}") from exc


def load_jsonl(path) -> AnnotatedCorpus:
    """Load the canonical JSONL format: one ``{"id", "sentence", "gold"}`` object per line."""
    path = Path(path)
    items = []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{where}: malformed JSON ({exc.msg})") from exc
            item = _item_from_record(record, where)
            if item.id in seen:
                raise CorpusFormatError(f"{where}: duplicate id {item.id!r}")
            seen.add(item.id)
            items.append(item)
    return AnnotatedCorpus(tuple(items), source=f"{path} (jsonl)")


def corpus_to_jsonl(corpus: Iterable[AnnotatedSentence]) -> str:
    lines = []
    for a in corpus:
        record = {"id": a.id, "sentence": a.text, "gold": [list(t.as_tuple()) for t in a.gold]}
        lines.append(json.dumps(record, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def dump_jsonl(corpus: Iterable[AnnotatedSentence], path) -> None:
    Path(path).write_text(corpus_to_jsonl(corpus), encoding="utf-8")


def load_benchmark_tsv(path) -> AnnotatedCorpus:
    """Import a CaRB-style gold TSV (sentence, relation, arg1, arg2[, more args...]).

    Rows repeating a sentence verbatim are grouped into one item. Ids are assigned
    in order of first appearance as ``s0``, ``s1``, ...
    """
    path = Path(path)
    groups: dict[str, list[Triplet]] = {}
    with path.open(encoding="utf-8") as fh:
        for rowno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 4:
                raise CorpusFormatError(f"{path}: row {rowno} has {len(cols)} columns, need at least 4")
            sentence, relation, arg1 = cols[0], cols[1], cols[2]
            obj = " ".join(c.strip() for c in cols[3:] if c.strip())
            try:
                triplet = Triplet(arg1.strip(), relation.strip(), obj)
            except ValueError as exc:
                raise CorpusFormatError(f"{path}: row {rowno}: {exc}") from exc
            groups.setdefault(sentence, []).append(triplet)
    items = []
    for idx, (sentence, triplets) in enumerate(groups.items()):
        try:
            items.append(AnnotatedSentence.from_raw(f"s{idx}", sentence, triplets))
        except ValueError as exc:
            raise CorpusFormatError(f"{path}: sentence {idx}: {exc}") from exc
    return AnnotatedCorpus(tuple(items), source=f"{path} (tsv)")
