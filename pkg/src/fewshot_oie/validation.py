"""Input coercion for the estimator entry points."""

from __future__ import annotations

from numbers import Integral, Real

from .corpus import AnnotatedCorpus, AnnotatedSentence, Sentence


def check_corpus(X, *, allow_empty: bool = True) -> AnnotatedCorpus:
    """Coerce ``X`` to an :class:`AnnotatedCorpus`.

    Accepts a corpus or any iterable of ``AnnotatedSentence``.
    """
    if isinstance(X, AnnotatedCorpus):
        corpus = X
    else:
        try:
            items = list(X)
        except TypeError:
            raise TypeError(f"expected an AnnotatedCorpus or iterable of AnnotatedSentence, got {type(X).__name__}")
        bad = [type(a).__name__ for a in items if not isinstance(a, AnnotatedSentence)]
        if bad:
            raise TypeError(f"expected AnnotatedSentence items, got {bad[0]}")
        corpus = AnnotatedCorpus(tuple(items))
    if not allow_empty and len(corpus) == 0:
        raise ValueError("corpus is empty")
    return corpus


def check_sentence(x, default_id: str = "target") -> Sentence:
    if isinstance(x, Sentence):
        return x
    if isinstance(x, AnnotatedSentence):
        return x.sentence
    if isinstance(x, str):
        return Sentence(default_id, x)
    raise TypeError(f"expected Sentence, AnnotatedSentence or str, got {type(x).__name__}")


def check_sentences(X) -> list[Sentence]:
    """Coerce a corpus, or a list of sentences/strings, to a list of ``Sentence``.

    Bare strings get their list position as id.
    """
    if isinstance(X, (str, Sentence, AnnotatedSentence)):
        raise TypeError("expected a collection of sentences, got a single sentence")
    sentences = [check_sentence(x, default_id=str(i)) for i, x in enumerate(X)]
    ids = [s.id for s in sentences]
    if len(ids) != len(set(ids)):
        raise ValueError("sentence ids must be unique")
    return sentences


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral) or value <= 0:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_unit_interval(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, Real) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be a real in [0, 1], got {value!r}")
    return float(value)
