
import pytest
from hypothesis import given, strategies as st

from medsumm_kit.codemix import (
    AmbiguityPolicy,
    LanguageTagging,
    Lexicons,
    Tag,
    cmi,
    cmi_from_counts,
    corpus_cmi,
    read_lexicon,
    tag_tokens,
)
from medsumm_kit.textnorm import tokenize

LEX = Lexicons(frozenset({"mujhe", "hai", "din", "se", "dard", "ho"}), frozenset({"fever", "pain", "since", "i", "have", "ho"}))


def test_tagging_rules():
    t = tag_tokens(tokenize("hai fever 3"), LEX)
    assert t.tags == (Tag.LANG1, Tag.LANG2, Tag.INDEPENDENT)
    t = tag_tokens(tokenize("mujhe dard hai"), LEX)
    assert t.w == (3, 0) and t.u == 0 and t.n == 3
    assert tag_tokens(["ho"], LEX, AmbiguityPolicy.PREFER_LANG2).tags == (Tag.LANG2,)
    assert tag_tokens(["ho"], LEX, AmbiguityPolicy.PREFER_LANG1).tags == (Tag.LANG1,)
    assert tag_tokens(["ho"], LEX).tags == (Tag.INDEPENDENT,)
    assert tag_tokens(["xyz", "४२"], LEX).tags == (Tag.INDEPENDENT, Tag.INDEPENDENT)


def test_lexicons_must_be_non_empty(tmp_path):
    with pytest.raises(ValueError):
        Lexicons(frozenset(), frozenset({"a"}))
    p = tmp_path / "hi.txt"
    p.write_text("# romanized Hindi\nHai\n\nmujhe\n", encoding="utf-8")
    assert read_lexicon(p) == {"hai", "mujhe"}


def test_cmi_examples():
    assert cmi(LanguageTagging.from_counts(7, 0)) == 0.0
    assert cmi(LanguageTagging.from_counts(6, 6)) == 50.0
    assert cmi_from_counts(10, 2, (5, 3)) == 37.5
    assert cmi(LanguageTagging.from_counts(0, 0, 4)) == 0.0
    with pytest.raises(ValueError):
        cmi(LanguageTagging(()))


def test_corpus_cmi():
    # CMI 20: w=(4,1); CMI 40: w=(3,2)
    corpus = [["hai"] * 4 + ["fever"], ["hai"] * 3 + ["fever"] * 2, []]
    res = corpus_cmi(corpus, LEX)
    assert res.mean_cmi == pytest.approx(30.0)
    assert res.skipped == 1 and res.per_record[2] is None
    assert corpus_cmi([["mujhe", "dard"]], LEX).mean_cmi == 0.0
    # n=200, u=0, max w=139 -> 100 * 61/200
    rec = ["hai"] * 139 + ["fever"] * 61
    assert corpus_cmi([rec, rec], LEX).mean_cmi == pytest.approx(30.5, abs=1e-12)
    with pytest.raises(ValueError):
        corpus_cmi([], LEX)
    with pytest.raises(ValueError):
        corpus_cmi([[], []], LEX)


tags = st.lists(st.sampled_from(list(Tag)), min_size=1, max_size=40)


@given(tags, st.randoms(use_true_random=False))
def test_cmi_invariances(ts, rnd):
    t = LanguageTagging(tuple(ts))
    value = cmi(t)
    assert 0.0 <= value <= 50.0
    shuffled = list(ts)
    rnd.shuffle(shuffled)
    assert cmi(LanguageTagging(tuple(shuffled))) == value
    swap = {Tag.LANG1: Tag.LANG2, Tag.LANG2: Tag.LANG1, Tag.INDEPENDENT: Tag.INDEPENDENT}
    assert cmi(LanguageTagging(tuple(swap[x] for x in ts))) == value
    w1, w2 = t.w
    assert (value == 0.0) == (w1 == 0 or w2 == 0)
