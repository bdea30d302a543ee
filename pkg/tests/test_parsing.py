import random
import string

from hypothesis import given, strategies as st

from fewshot_oie.corpus import Triplet, canonical_key, normalize_text
from fewshot_oie.parsing import format_triplet, parse_response

from . import case_study


def test_case_study_line():
    triplets, warnings = parse_response("1. (the Flemish Region, assigned, all of its powers to the Flemish Community)")
    assert triplets == [Triplet("the Flemish Region", "assigned", "all of its powers to the Flemish Community")]
    assert warnings == []


def test_arity_warning():
    triplets, warnings = parse_response("(a, b)")
    assert triplets == []
    assert len(warnings) == 1 and "3 fields" in warnings[0]


def test_object_absorbs_commas():
    triplets, _ = parse_response("2. (x, y, z, and w)")
    assert triplets == [Triplet("x", "y", "z, and w")]


def test_paren_index_prefix_and_noise_lines():
    text = "Here you go:\n1) (a, b, c)\n\n- (d, e, f)\n(g, h, i)"
    triplets, warnings = parse_response(text)
    assert [t.as_tuple() for t in triplets] == [("a", "b", "c"), ("g", "h", "i")]
    assert len(warnings) == 2


def test_dedupes_by_canonical_key():
    triplets, _ = parse_response("1. (A, eats, B)\n2. (a, EATS, b)\n3. (A, eats, C)")
    assert [t.as_tuple() for t in triplets] == [("A", "eats", "B"), ("A", "eats", "C")]


def test_degenerate_fields_warned():
    triplets, warnings = parse_response("1. (..., eats, B)")
    assert triplets == [] and "degenerate" in warnings[0]


def test_format_triplet():
    assert format_triplet(Triplet("A", "eats", "B"), 1) == "1. (A, eats, B)"


def test_case_study_rows_parse_fully():
    for row, n in [(case_study.ZERO_SHOT, 3), (case_study.SELECTED_DEMO, 5), (case_study.UNCERTAINTY, 4), (case_study.GOLD_TEXT, 3)]:
        triplets, warnings = parse_response(row)
        assert len(triplets) == n and warnings == []


def test_case_study_prediction_matches_gold_key():
    pred = parse_response(case_study.UNCERTAINTY)[0][1]
    assert canonical_key(pred) == canonical_key(Triplet(*case_study.GOLD[1]))


_head = st.text(alphabet=st.characters(blacklist_characters=",\n\r"), min_size=1)
_tail = st.text(alphabet=st.characters(blacklist_characters="\n\r"), min_size=1)


def _valid(s):
    return s == s.strip() and normalize_text(s)


@given(_head.filter(_valid), _head.filter(_valid), _tail.filter(_valid))
def test_round_trip_law(s, p, o):
    t = Triplet(s, p, o)
    assert parse_response(format_triplet(t, 1)) == ([t], [])


@given(st.binary())
def test_never_raises_on_bytes(data):
    triplets, warnings = parse_response(data.decode("utf-8", errors="replace"))
    assert all(isinstance(t, Triplet) for t in triplets)
    keys = [canonical_key(t) for t in triplets]
    assert len(keys) == len(set(keys))


def test_random_comma_objects_round_trip():
    rng = random.Random(7)
    alphabet = string.ascii_letters + " ,'-"
    for _ in range(500):
        obj = "x" + "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 20))) + ", y"
        t = Triplet("subj", "pred", obj.strip())
        assert parse_response(format_triplet(t, 3))[0] == [t]
