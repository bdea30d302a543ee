"""Demonstration-subset ensembles and per-triplet demonstration uncertainty.

Each ensemble member answers the same extraction query with a different random
subset of the retrieved demonstrations. A triplet's uncertainty is one minus its
occurrence frequency across the pooled answers:

* ``concat``: ``u = 1 - count / N`` where ``N`` is the total number of triplets
  pooled over all runs (the formulation used by default);
* ``run_fraction``: ``u = 1 - count / M`` over the ``M`` runs.

``count`` is the number of runs that produced the triplet (identity is the
canonical key), so a triplet repeated within one answer votes once.
"""

from __future__ import annotations

import logging
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import AnnotatedSentence, Sentence, Triplet, canonical_key
from .gateway import BackendError, CompletionParams, Gateway, RawResponse
from .parsing import parse_response
from .prompts import PromptConfig, PromptError, Transcript, build_preamble, extraction_query

logger = logging.getLogger(__name__)

COUNT_MODES = ("concat", "run_fraction")
FILTER_RULES = ("le", "ge")


@dataclass(frozen=True)
class EnsembleConfig:
    ensemble_size: int = 5
    subset_size: int = 3
    threshold: float = 0.8
    seed: int = 0
    count_mode: str = "concat"
    # "le" keeps u <= k; "ge" is the literal set-builder reading, kept for audits.
    filter_rule: str = "le"

    def __post_init__(self):
        if self.ensemble_size <= 0 or self.subset_size <= 0:
            raise ValueError("ensemble_size and subset_size must be positive")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.count_mode not in COUNT_MODES:
            raise ValueError(f"count_mode must be one of {COUNT_MODES}")
        if self.filter_rule not in FILTER_RULES:
            raise ValueError(f"filter_rule must be one of {FILTER_RULES}")


@dataclass(frozen=True)
class DemonstrationSubset:
    demos: tuple[AnnotatedSentence, ...]
    draw_index: int
    seed: int


@dataclass
class ExtractionRun:
    subset: DemonstrationSubset
    transcript: Transcript | None
    raw: RawResponse | None
    triplets: list[Triplet] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    error: str | None = None


@dataclass(frozen=True)
class ScoredTriplet:
    triplet: Triplet
    count: int
    uncertainty: float

    @property
    def key(self) -> str:
        return canonical_key(self.triplet)


def sample_subsets(pool, config: EnsembleConfig) -> list[DemonstrationSubset]:
    """Draw ``ensemble_size`` subsets uniformly without replacement from ``pool``.

    Draw ``i`` uses ``random.Random(f"{seed}:{i}").sample``, so each subset depends only
    on the seed and its index.
    """
    demos = list(pool.demos if hasattr(pool, "demos") else pool)
    if not demos:
        raise ValueError("cannot sample from an empty pool")
    size = config.subset_size
    if size > len(demos):
        logger.warning("subset_size %d exceeds pool size %d; clamping", size, len(demos))
        size = len(demos)
    subsets = []
    for i in range(config.ensemble_size):
        rng = random.Random(f"{config.seed}:{i}")
        picked = rng.sample(range(len(demos)), size)
        subsets.append(DemonstrationSubset(tuple(demos[j] for j in picked), i, config.seed))
    return subsets


def _run_one(target: Sentence, subset: DemonstrationSubset, prompt_config: PromptConfig,
             gateway: Gateway, params: CompletionParams) -> ExtractionRun:
    transcript = build_preamble(prompt_config, subset.demos).append(extraction_query(target))
    try:
        resolved, raw = gateway.converse(transcript, params)
    except BackendError as exc:
        logger.warning("run %d for %s failed: %s", subset.draw_index, target.id, exc)
        return ExtractionRun(subset, transcript, None, error=f"{type(exc).__name__}: {exc}")
    triplets, warnings = parse_response(raw.text)
    return ExtractionRun(subset, resolved, raw, triplets, warnings)


def run_ensemble(target: Sentence, subsets: Sequence[DemonstrationSubset], prompt_config: PromptConfig,
                 gateway: Gateway, params: CompletionParams, max_workers: int | None = None) -> list[ExtractionRun]:
    """One extraction run per subset, returned in draw order.

    Runs whose backend call fails (after the gateway's retries) are kept with no
    triplets and an ``error`` note.
    """
    for s in subsets:
        for d in s.demos:
            if not d.gold:
                raise PromptError(f"demonstration {d.id!r} has no gold triplets")
    if len(subsets) <= 1:
        runs = [_run_one(target, s, prompt_config, gateway, params) for s in subsets]
    else:
        workers = max_workers or gateway.backend.max_in_flight
        with ThreadPoolExecutor(max_workers=max(1, min(workers, len(subsets)))) as pool:
            runs = list(pool.map(lambda s: _run_one(target, s, prompt_config, gateway, params), subsets))
    return sorted(runs, key=lambda r: r.subset.draw_index)


def compute_uncertainty(runs: Sequence[ExtractionRun], count_mode: str = "concat") -> list[ScoredTriplet]:
    """Score every distinct triplet over the ensemble's answers.

    Sorted by uncertainty, then canonical key. When several surface forms share a
    key, the most frequent one represents it (ties: lexicographically smallest).
    """
    if not runs:
        raise ValueError("need at least one run")
    if count_mode not in COUNT_MODES:
        raise ValueError(f"count_mode must be one of {COUNT_MODES}")
    run_counts: Counter[str] = Counter()
    surfaces: dict[str, Counter] = {}
    total = 0
    for run in runs:
        seen = set()
        for t in run.triplets:
            k = canonical_key(t)
            if k in seen:
                continue
            seen.add(k)
            run_counts[k] += 1
            surfaces.setdefault(k, Counter())[t.as_tuple()] += 1
        total += len(seen)
    if total == 0:
        return []

    denom = total if count_mode == "concat" else len(runs)
    scored = []
    for k, count in run_counts.items():
        surface = min(surfaces[k].items(), key=lambda kv: (-kv[1], kv[0]))[0]
        # (denom - count) / denom rounds once, so it equals the exact fraction's nearest float.
        scored.append(ScoredTriplet(Triplet(*surface), count, (denom - count) / denom))
    scored.sort(key=lambda s: (s.uncertainty, s.key))
    return scored


def filter_by_threshold(scored: Sequence[ScoredTriplet], k: float, rule: str = "le") -> list[Triplet]:
    """Keep ``u <= k`` (``rule="le"``), or ``u >= k`` for the literal ``"ge"`` reading."""
    if rule == "le":
        return [s.triplet for s in scored if s.uncertainty <= k]
    if rule == "ge":
        return [s.triplet for s in scored if s.uncertainty >= k]
    raise ValueError(f"rule must be one of {FILTER_RULES}")
