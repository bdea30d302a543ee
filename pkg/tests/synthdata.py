"""Templated synthetic corpora with known gold triplets."""

import random

from fewshot_oie.corpus import AnnotatedCorpus, AnnotatedSentence

PEOPLE = ["Alice Moreau", "Bruno Silva", "Chen Wei", "Dana Okafor", "Emil Novak", "Farah Haddad",
          "Goran Petrov", "Hana Sato", "Ivan Lund", "Julia Costa", "Kofi Mensah", "Lena Berg"]
ORGS = ["the city council", "a small bakery", "the river authority", "the national library",
        "a shipping firm", "the university press", "the football club", "a local charity"]
THINGS = ["a new bridge", "the annual report", "three paintings", "an old map", "the harbor lights",
          "a grant proposal", "the school garden", "a rare manuscript", "the winter festival"]
PLACES = ["Lisbon", "Osaka", "Nairobi", "Tromso", "Quito", "Tbilisi", "Perth", "Leipzig"]
VERBS = [("built", "builds"), ("funded", "funds"), ("restored", "restores"), ("reviewed", "reviews"),
         ("donated", "donates"), ("designed", "designs"), ("sold", "sells")]


def _sentence(rng):
    kind = rng.randrange(4)
    a, b = rng.sample(PEOPLE, 2)
    org = rng.choice(ORGS)
    thing, thing2 = rng.sample(THINGS, 2)
    place = rng.choice(PLACES)
    v1, v2 = rng.sample(VERBS, 2)
    if kind == 0:
        return f"{a} {v1[0]} {thing}.", [(a, v1[0], thing)]
    if kind == 1:
        return (f"{a}, who works for {org}, {v1[0]} {thing} in {place}.",
                [(a, "works for", org), (a, v1[0], thing), (a, f"{v1[0]} {thing} in", place)])
    if kind == 2:
        return (f"Who {v1[1]} {thing} that {b} {v2[0]} last year?",
                [(b, v2[0], thing), (b, f"{v2[0]} {thing}", "last year")])
    return (f"{org.capitalize()} {v1[0]} {thing} and {v2[0]} {thing2}.",
            [(org.capitalize(), v1[0], thing), (org.capitalize(), v2[0], thing2)])


def make_corpus(n, seed=0, prefix="syn"):
    rng = random.Random(seed)
    seen, items = set(), []
    while len(items) < n:
        text, gold = _sentence(rng)
        if text in seen:
            continue
        seen.add(text)
        items.append(AnnotatedSentence.from_raw(f"{prefix}-{len(items)}", text, gold))
    return AnnotatedCorpus(tuple(items), source=f"synthetic(seed={seed})")
