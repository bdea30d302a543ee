"""Few-shot open information extraction with demonstration uncertainty."""

from .corpus import (
    AnnotatedCorpus,
    AnnotatedSentence,
    Sentence,
    Triplet,
    canonical_key,
    dump_jsonl,
    load_benchmark_tsv,
    load_jsonl,
    normalize_text,
)
from .ensemble import EnsembleConfig, ScoredTriplet, compute_uncertainty, filter_by_threshold, sample_subsets
from .estimator import FewShotExtractor
from .gateway import CompletionParams, Gateway, ResponseCache, ScriptedBackend, SyntheticExtractor, cache_key
from .parsing import format_triplet, parse_response
from .retrieval import DemonstrationRetriever, HashingEmbedder, cosine_similarity, select_demonstrations
from .scoring import evaluate, lexical_match, tuple_match_scores

__version__ = "0.1.0"
