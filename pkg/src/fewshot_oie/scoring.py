"""Benchmark scoring: exact, lexical and tuple matchers, and the max-F1 sweep."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .corpus import AnnotatedCorpus, DegenerateTripletError, Triplet, canonical_key, normalize_text
from .ensemble import ScoredTriplet

STOPWORDS = frozenset({"the", "a", "an", "of", "and", "to", "in", "is"})
MATCHERS = ("exact", "lexical", "tuple")
SLOTS = ("subject", "predicate", "object")


class UnknownIdError(KeyError):
    def __init__(self, ids):
        self.ids = sorted(ids)
        super().__init__(f"prediction ids not in gold corpus: {', '.join(self.ids[:20])}")


def _safe_key(t: Triplet) -> str:
    try:
        return canonical_key(t)
    except DegenerateTripletError:
        return ""


def exact_match(pred: Triplet, gold: Triplet) -> bool:
    k = _safe_key(pred)
    return bool(k) and k == _safe_key(gold)


def _slot_overlaps(pred: str, gold: str) -> bool:
    p, g = set(normalize_text(pred)), set(normalize_text(gold))
    pf, gf = p - STOPWORDS, g - STOPWORDS
    if pf and gf:
        return bool(pf & gf)
    if not pf and not gf:
        # Slots made only of stopwords (or empty) fall back to raw tokens.
        return bool(p & g) or (not p and not g)
    return False


def lexical_match(pred: Triplet, gold: Triplet) -> bool:
    """Every slot pair shares a non-stopword token.

    A stand-in for the OIE2016-style lexical matcher; pass any other
    ``(pred, gold) -> bool`` callable to :func:`evaluate` to swap it out.
    """
    return (_slot_overlaps(pred.predicate, gold.predicate)
            and _slot_overlaps(pred.subject, gold.subject)
            and _slot_overlaps(pred.object, gold.object))


def _slot_tokens(t: Triplet) -> list[Counter]:
    return [Counter(normalize_text(v)) for v in t.as_tuple()]


def tuple_pair_scores(pred: Triplet, gold: Triplet) -> tuple[float, float]:
    """(precision-score, recall-score) of one pair: slotwise multiset token overlap."""
    p, g = _slot_tokens(pred), _slot_tokens(gold)
    overlap = sum(sum((ps & gs).values()) for ps, gs in zip(p, g))
    p_len = sum(sum(c.values()) for c in p)
    g_len = sum(sum(c.values()) for c in g)
    return (overlap / p_len if p_len else 0.0, overlap / g_len if g_len else 0.0)


def _tuple_sums(preds: Sequence[Triplet], golds: Sequence[Triplet]) -> tuple[float, float, list]:
    """Numerators of tuple precision and recall, plus the recall matching."""
    if not preds or not golds:
        return 0.0, 0.0, []
    table = [[tuple_pair_scores(p, g) for g in golds] for p in preds]
    prec_sum = sum(max(row[j][0] for j in range(len(golds))) for row in table)

    pairs = sorted(((table[i][j][1], i, j) for i in range(len(preds)) for j in range(len(golds))),
                   key=lambda x: (-x[0], x[1], x[2]))
    used_p, used_g, matches = set(), set(), []
    rec_sum = 0.0
    for score, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        rec_sum += score
        matches.append((i, j, score))
    return prec_sum, rec_sum, matches


def tuple_match_scores(preds: Sequence[Triplet], golds: Sequence[Triplet]) -> tuple[float, float]:
    """CaRB-style scores: best-match precision, one-to-one greedy recall."""
    if not preds and not golds:
        return 1.0, 1.0
    if not preds or not golds:
        return 0.0, 0.0
    prec_sum, rec_sum, _ = _tuple_sums(preds, golds)
    return prec_sum / len(preds), rec_sum / len(golds)


def greedy_boolean_matching(preds: Sequence[Triplet], golds: Sequence[Triplet],
                            match: Callable[[Triplet, Triplet], bool]) -> list[tuple[int, int]]:
    """Each pred, in the given order, takes the lowest-index unmatched gold it matches."""
    used, pairs = set(), []
    for i, p in enumerate(preds):
        for j, g in enumerate(golds):
            if j not in used and match(p, g):
                used.add(j)
                pairs.append((i, j))
                break
    return pairs


@dataclass(frozen=True)
class MatchDecision:
    sentence_id: str
    pred_index: int
    gold_index: int
    matcher: str
    score: float


@dataclass
class EvalReport:
    matcher: str
    precision: float
    recall: float
    f1: float
    best_threshold: float | None
    curve: list[tuple[float, float, float]]
    counts: dict[str, float]
    matches: list[MatchDecision] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "matcher": self.matcher,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "best_threshold": self.best_threshold,
            "curve": [{"threshold": k, "precision": p, "recall": r} for k, p, r in self.curve],
            "counts": self.counts,
        }

    def table(self) -> str:
        lines = [f"matcher: {self.matcher}",
                 f"{'threshold':>10} {'precision':>10} {'recall':>10} {'f1':>10}"]
        for k, p, r in self.curve:
            mark = " *" if k == self.best_threshold else ""
            lines.append(f"{k:>10.4f} {p:>10.4f} {r:>10.4f} {f1_score(p, r):>10.4f}{mark}")
        lines.append(f"best: P={self.precision:.4f} R={self.recall:.4f} F1={self.f1:.4f}")
        return "\n".join(lines)


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _ratio(num: float, den: int, other_den: int) -> float:
    if den:
        return num / den
    return 1.0 if other_den == 0 else 0.0


def _resolve_matcher(matcher) -> tuple[str, Callable | None]:
    if callable(matcher):
        return getattr(matcher, "__name__", "custom"), matcher
    if matcher == "exact":
        return "exact", exact_match
    if matcher == "lexical":
        return "lexical", lexical_match
    if matcher == "tuple":
        return "tuple", None
    raise ValueError(f"matcher must be one of {MATCHERS} or a callable, got {matcher!r}")


def _point(predictions, golds_by_id, ids, k, name, match):
    num_pred = num_gold = 0
    prec_num = rec_num = 0.0
    decisions = []
    for sid in ids:
        gold = list(golds_by_id[sid].gold)
        kept = [(i, s) for i, s in enumerate(predictions.get(sid, ())) if s.uncertainty <= k]
        kept.sort(key=lambda item: (item[1].uncertainty, _safe_key(item[1].triplet)))
        preds = [s.triplet for _, s in kept]
        # decisions report positions in the caller's prediction list
        origin = [i for i, _ in kept]
        num_pred += len(preds)
        num_gold += len(gold)
        if match is None:
            p_sum, r_sum, pairs = _tuple_sums(preds, gold)
            prec_num += p_sum
            rec_num += r_sum
            decisions += [MatchDecision(sid, origin[i], j, name, s) for i, j, s in pairs]
        else:
            pairs = greedy_boolean_matching(preds, gold, match)
            prec_num += len(pairs)
            rec_num += len(pairs)
            decisions += [MatchDecision(sid, origin[i], j, name, 1.0) for i, j in pairs]
    p = _ratio(prec_num, num_pred, num_gold)
    r = _ratio(rec_num, num_gold, num_pred)
    counts = {"num_pred": num_pred, "num_gold": num_gold,
              "precision_sum": prec_num, "recall_sum": rec_num}
    return p, r, counts, decisions


def evaluate(predictions: Mapping[str, Sequence[ScoredTriplet]], golds: AnnotatedCorpus,
             matcher="exact", thresholds: Sequence[float] | None = None) -> EvalReport:
    """Micro-averaged precision/recall over a confidence sweep; F1 is the best point.

    Predictions with uncertainty ``<= k`` are kept at threshold ``k``. The default
    thresholds are the distinct uncertainties present plus 1.0. Boolean matchers use
    one-to-one greedy matching with predictions taken in order of increasing
    uncertainty, then canonical key.
    """
    golds_by_id = golds.by_id()
    unknown = set(predictions) - set(golds_by_id)
    if unknown:
        raise UnknownIdError(unknown)
    name, match = _resolve_matcher(matcher)
    if thresholds is None:
        values = {s.uncertainty for preds in predictions.values() for s in preds}
        values.add(1.0)
    else:
        values = set(float(k) for k in thresholds)
    ks = sorted(values)
    if not ks:
        raise ValueError("need at least one threshold")
    ids = sorted(golds_by_id)

    curve, best = [], None
    for k in ks:
        p, r, counts, decisions = _point(predictions, golds_by_id, ids, k, name, match)
        curve.append((k, p, r))
        f = f1_score(p, r)
        if best is None or f > best[0]:
            best = (f, k, p, r, counts, decisions)
    f, k, p, r, counts, decisions = best
    return EvalReport(name, p, r, f, k, curve, counts, decisions)


def as_scored(triplets: Sequence[Triplet], uncertainty: float = 0.0) -> list[ScoredTriplet]:
    """Wrap plain triplets (e.g. from a non-ensemble run) as fully confident predictions."""
    return [ScoredTriplet(t, 1, uncertainty) for t in triplets]
