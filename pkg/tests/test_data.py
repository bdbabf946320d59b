import json

import pytest
from hypothesis import given, settings, strategies as st

from medsumm_kit.data import (
    Category,
    CorpusError,
    DatasetRecord,
    dedup,
    load_corpus,
    load_split,
    split,
    write_corpus,
    write_split,
)


def rec(i, q=None, **kw):
    return DatasetRecord(id=f"q{i}", query_codemixed=q or f"query number {i}", **kw)


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")
    return path


def test_load_three_records(tmp_path):
    p = write_lines(tmp_path / "c.jsonl", [{"id": f"q{i}", "query_codemixed": "x"} for i in range(3)])
    assert [r.id for r in load_corpus(p)] == ["q0", "q1", "q2"]


def test_duplicate_id_names_both_lines(tmp_path):
    p = write_lines(tmp_path / "c.jsonl", [{"id": "q1", "query_codemixed": "a"}, {"id": "q2", "query_codemixed": "b"}, {"id": "q1", "query_codemixed": "c"}])
    with pytest.raises(CorpusError, match=r"c.jsonl:3: duplicate id 'q1' \(first seen on line 1\)"):
        load_corpus(p)


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"id": "q1", "query_codemixed": "a"}\n{not json\n', encoding="utf-8")
    with pytest.raises(CorpusError) as e:
        load_corpus(p)
    assert e.value.line == 2


def test_feature_length_mismatch(tmp_path):
    p = write_lines(
        tmp_path / "c.jsonl",
        [{"id": "a", "query_codemixed": "x", "image_feature": [1, 2]}, {"id": "b", "query_codemixed": "y", "image_feature": [1, 2, 3]}],
    )
    with pytest.raises(CorpusError, match="image_feature"):
        load_corpus(p)
    p2 = write_lines(tmp_path / "d.jsonl", [{"id": "a", "query_codemixed": "x", "image_feature": [1, 2]}])
    with pytest.raises(CorpusError):
        load_corpus(p2, feature_dim=3)


def test_invalid_category_and_empty_query(tmp_path):
    with pytest.raises(ValueError):
        rec(1, category="EAR")
    with pytest.raises(ValueError):
        DatasetRecord(id="x", query_codemixed="   ")


def test_roundtrip_fields(tmp_path):
    r = rec(
        7,
        category="SKIN",
        disorder_phrase="skin rash",
        image_ref="img/7.jpg",
        image_feature=[0.5, -1.0],
        gold_facts=["rash", "itching"],
        golden_summary="Patient has a rash.",
        query_english="I have rash",
    )
    p = tmp_path / "c.jsonl"
    write_corpus([r], p)
    back = load_corpus(p)[0]
    assert back == r
    assert back.category is Category.SKIN and back.disorder_phrase == "skin rash"


def test_write_load_write_is_byte_identical(tmp_path):
    p = write_lines(
        tmp_path / "in.jsonl",
        [
            {"category": "EYE", "id": "b", "query_codemixed": "aankh laal hai", "gold_facts": ["red eye"]},
            {"id": "a", "query_codemixed": "मुझे बुखार"},
        ],
    )
    out1, out2 = tmp_path / "o1.jsonl", tmp_path / "o2.jsonl"
    write_corpus(load_corpus(p), out1)
    write_corpus(load_corpus(out1), out2)
    assert out1.read_bytes() == out2.read_bytes()
    assert "मुझे" in out1.read_text(encoding="utf-8")


def test_dedup_examples():
    kept, removed = dedup([rec(i) for i in range(5)])
    assert (len(kept), removed) == (5, 0)
    kept, removed = dedup([rec(1, "I have rash"), rec(2, "i  have rash"), rec(3, "fever")])
    assert [r.id for r in kept] == ["q1", "q3"] and removed == 1
    assert dedup([]) == ([], 0)


@given(st.lists(st.sampled_from(["a b", "A  b", "c", "C", "d e f"]), max_size=12))
def test_dedup_idempotent(queries):
    kept, _ = dedup([rec(i, q) for i, q in enumerate(queries)])
    again, removed = dedup(kept)
    assert removed == 0 and again == kept


def test_split_3015_records():
    s = split([rec(i) for i in range(3015)], (0.8, 0.05, 0.15), seed=0)
    assert s.counts == (2412, 150, 453)


def test_split_empty_and_bad_ratios():
    assert split([], (0.8, 0.05, 0.15), 1).counts == (0, 0, 0)
    with pytest.raises(ValueError):
        split([rec(1)], (0.8, 0.1, 0.15), 0)
    with pytest.raises(ValueError):
        split([rec(1)], (1.2, -0.2, 0.0), 0)


def test_split_deterministic_and_seed_sensitive():
    records = [rec(i) for i in range(100)]
    assert split(records, (0.8, 0.05, 0.15), 3) == split(records, (0.8, 0.05, 0.15), 3)
    assert split(records, (0.8, 0.05, 0.15), 3).train_ids != split(records, (0.8, 0.05, 0.15), 4).train_ids


@settings(max_examples=200)
@given(st.integers(0, 400), st.integers(0, 2**31), st.integers(0, 100), st.integers(0, 100))
def test_split_partitions(n, seed, a, b):
    a, b = sorted((a, b))
    ratios = (a / 100, (b - a) / 100, (100 - b) / 100)
    records = [rec(i) for i in range(n)]
    s = split(records, ratios, seed)
    ids = s.train_ids + s.val_ids + s.test_ids
    assert sorted(ids) == sorted(r.id for r in records)
    assert len(s.train_ids) == int(n * ratios[0] + 1e-9) // 1


def test_stratified_split_keeps_category_ratios(tmp_path):
    cats = ["ENT"] * 40 + ["EYE"] * 20 + ["SKIN"] * 40
    records = [rec(i, category=c) for i, c in enumerate(cats)]
    s = split(records, (0.5, 0.25, 0.25), seed=9, stratify=True)
    by_id = {r.id: r.category.value for r in records}
    train_cats = [by_id[i] for i in s.train_ids]
    assert train_cats.count("ENT") == 20 and train_cats.count("EYE") == 10 and train_cats.count("SKIN") == 20
    p = tmp_path / "split.json"
    write_split(s, p)
    assert load_split(p) == s
