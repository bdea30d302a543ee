"""scikit-learn style front end for the extraction pipeline."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import AnnotatedCorpus, Sentence
from .ensemble import (
    DemonstrationSubset,
    EnsembleConfig,
    ExtractionRun,
    ScoredTriplet,
    compute_uncertainty,
    filter_by_threshold,
    run_ensemble,
    sample_subsets,
)
from .gateway import ChatBackend, CompletionParams, Gateway, ResponseCache
from .prompts import PromptAssets, load_assets, make_config
from .retrieval import DemonstrationRetriever, EmbeddingError, EmptyPoolError
from .scoring import evaluate
from .validation import check_corpus, check_positive_int, check_sentences, check_unit_interval

logger = logging.getLogger(__name__)

PIPELINE_MODES = ("zero_shot", "fixed_demo", "selected_demo", "selected_demo_uncertainty")
_RETRIEVAL_MODES = ("selected_demo", "selected_demo_uncertainty")


@dataclass
class ExtractionResult:
    id: str
    sentence: str
    pipeline: str
    scored: list[ScoredTriplet]
    n_total: int
    ensemble: int
    count_mode: str | None = None
    threshold: float | None = None
    runs: list[ExtractionRun] = field(default_factory=list, repr=False)
    error: str | None = None
    elapsed_ms: int = 0

    @property
    def triplets(self):
        return [s.triplet for s in self.scored]

    @property
    def cache_hits(self) -> int:
        return sum(1 for r in self.runs if r.raw is not None and r.raw.cached)

    @property
    def warnings(self) -> list[str]:
        return [w for r in self.runs for w in r.warnings]

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "sentence": self.sentence,
            "triplets": [
                {"subject": s.triplet.subject, "predicate": s.triplet.predicate, "object": s.triplet.object,
                 "uncertainty": s.uncertainty, "count": s.count}
                for s in self.scored
            ],
            "N": self.n_total,
            "ensemble": self.ensemble,
            "mode": self.count_mode,
            "k": self.threshold,
            "pipeline": self.pipeline,
        }
        if self.error:
            record["error"] = self.error
        return record


class FewShotExtractor(BaseEstimator):
    """Few-shot triplet extractor with optional demonstration-uncertainty filtering.

    ``fit`` takes the annotated demonstration source; ``predict`` takes target
    sentences and returns one :class:`ExtractionResult` per sentence, in input order.

    Parameters
    ----------
    backend : ChatBackend
        Chat model backend.
    mode : {"zero_shot", "fixed_demo", "selected_demo", "selected_demo_uncertainty"}
        Pipeline configuration. Only the last one runs an ensemble and filters.
    embedder : Embedder, default=None
        Used by the retrieval modes; ``None`` means the hashing embedder.
    pool_size, subset_size, ensemble_size, threshold, count_mode, filter_rule, seed
        Retrieval and ensemble settings. ``subset_size`` is also the number of
        demonstrations shown in ``selected_demo`` mode.
    quiz : bool, default=True
        Run the error-correction quiz in the demonstration modes.
    assets : str, Path or PromptAssets, default=None
        Instruction, quiz and fixed demonstrations; ``None`` uses the packaged ones.
    cache_dir : str or Path, default=None
        Response cache directory; ``None`` disables caching.
    n_jobs : int, default=4
        Sentences processed concurrently.
    """

    def __init__(self, backend=None, mode="selected_demo_uncertainty", embedder=None, pool_size=10,
                 subset_size=3, ensemble_size=5, threshold=0.8, count_mode="concat", filter_rule="le",
                 seed=0, quiz=True, assets=None, cache_dir=None, model="gpt-3.5-turbo", temperature=0.7,
                 max_tokens=512, n_jobs=4, leakage_guard=True, max_retries=3):
        self.backend = backend
        self.mode = mode
        self.embedder = embedder
        self.pool_size = pool_size
        self.subset_size = subset_size
        self.ensemble_size = ensemble_size
        self.threshold = threshold
        self.count_mode = count_mode
        self.filter_rule = filter_rule
        self.seed = seed
        self.quiz = quiz
        self.assets = assets
        self.cache_dir = cache_dir
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.n_jobs = n_jobs
        self.leakage_guard = leakage_guard
        self.max_retries = max_retries

    def _validate_params(self):
        if self.mode not in PIPELINE_MODES:
            raise ValueError(f"mode must be one of {PIPELINE_MODES}, got {self.mode!r}")
        if not isinstance(self.backend, ChatBackend):
            raise TypeError("backend must be a ChatBackend instance")
        check_positive_int(self.pool_size, "pool_size")
        check_positive_int(self.n_jobs, "n_jobs")
        check_unit_interval(self.threshold, "threshold")

    def fit(self, X=None, y=None):
        """Prepare prompts, gateway and (for retrieval modes) the demonstration index.

        ``X`` is the annotated demonstration corpus; it is required only by the
        retrieval modes. Sentences without gold triplets cannot be demonstrated and
        are left out of the index.
        """
        self._validate_params()
        self.assets_ = self.assets if isinstance(self.assets, PromptAssets) else load_assets(self.assets)
        demo_mode = {"zero_shot": "none", "fixed_demo": "fixed"}.get(self.mode, "selected")
        use_quiz = bool(self.quiz) and self.mode != "zero_shot"
        self.prompt_config_ = make_config(self.assets_, demo_mode, self.subset_size, quiz=use_quiz)
        ensemble_size = self.ensemble_size if self.mode == "selected_demo_uncertainty" else 1
        self.ensemble_config_ = EnsembleConfig(ensemble_size, self.subset_size, self.threshold, self.seed,
                                               self.count_mode, self.filter_rule)
        self.params_ = CompletionParams(self.model, self.temperature, self.max_tokens, seed_hint=self.seed)
        cache = ResponseCache(self.cache_dir) if self.cache_dir is not None else None
        self.gateway_ = Gateway(self.backend, cache, max_retries=self.max_retries)

        self.retriever_ = None
        if self.mode in _RETRIEVAL_MODES:
            if X is None:
                raise ValueError(f"mode {self.mode!r} needs an annotated corpus to select demonstrations from")
            corpus = check_corpus(X, allow_empty=False)
            usable = [a for a in corpus if a.gold]
            if len(usable) < len(corpus):
                logger.info("skipping %d unannotated sentences as demonstrations", len(corpus) - len(usable))
            self.retriever_ = DemonstrationRetriever(self.embedder, self.pool_size, self.leakage_guard)
            self.retriever_.fit(AnnotatedCorpus(tuple(usable), source=corpus.source))
        return self

    def _subsets(self, target: Sentence) -> list[DemonstrationSubset]:
        if self.mode == "zero_shot":
            return [DemonstrationSubset((), 0, self.seed)]
        if self.mode == "fixed_demo":
            return [DemonstrationSubset(tuple(self.assets_.fixed_demos), 0, self.seed)]
        pool = self.retriever_.select(target)
        if self.mode == "selected_demo":
            return [DemonstrationSubset(tuple(pool.demos[:self.subset_size]), 0, self.seed)]
        return sample_subsets(pool, self.ensemble_config_)

    def extract_one(self, target: Sentence) -> ExtractionResult:
        check_is_fitted(self, "gateway_")
        start = time.perf_counter()
        cfg = self.ensemble_config_
        ensemble = self.mode == "selected_demo_uncertainty"
        result = ExtractionResult(target.id, target.text, self.mode, [], 0, cfg.ensemble_size,
                                  cfg.count_mode if ensemble else None, cfg.threshold if ensemble else None)
        try:
            subsets = self._subsets(target)
        except (EmptyPoolError, EmbeddingError) as exc:
            result.error = f"{type(exc).__name__}: {exc}"
            return result
        runs = run_ensemble(target, subsets, self.prompt_config_, self.gateway_, self.params_)
        result.runs = runs
        if all(r.error for r in runs):
            result.error = "; ".join(r.error for r in runs)
        if ensemble:
            scored = compute_uncertainty(runs, cfg.count_mode)
            kept = {id(t) for t in filter_by_threshold(scored, cfg.threshold, cfg.filter_rule)}
            result.scored = [s for s in scored if id(s.triplet) in kept]
            result.n_total = sum(len({t.key for t in r.triplets}) for r in runs)
        else:
            triplets = runs[0].triplets
            result.scored = [ScoredTriplet(t, 1, 0.0) for t in triplets]
            result.n_total = len(triplets)
        result.elapsed_ms = int((time.perf_counter() - start) * 1000)
        return result

    def predict(self, X) -> list[ExtractionResult]:
        check_is_fitted(self, "gateway_")
        sentences = check_sentences(X.sentences() if isinstance(X, AnnotatedCorpus) else X)
        if self.n_jobs == 1 or len(sentences) <= 1:
            return [self.extract_one(s) for s in sentences]
        with ThreadPoolExecutor(max_workers=self.n_jobs) as pool:
            return list(pool.map(self.extract_one, sentences))

    def score(self, X, y=None, matcher="exact") -> float:
        """Max-F1 of the predictions on the annotated corpus ``X``."""
        corpus = check_corpus(X)
        results = self.predict(corpus)
        return evaluate({r.id: r.scored for r in results}, corpus, matcher).f1


