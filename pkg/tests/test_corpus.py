from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlmaml.corpus import (
    DataError,
    Dataset,
    Example,
    build_multimonolang,
    corrupt_spans,
    load_dataset,
    reconstruct,
    sample_spans,
    sample_task_batch,
    span_corrupt,
    split_support_query,
    support_size,
    tag_example,
    write_dataset,
)
from xlmaml.tokenizer import CharTokenizer, TokenizerError

SENTINELS = list(range(1000, 1032))


def _tok() -> CharTokenizer:
    return CharTokenizer.build(["abcdefghij "], ["en", "hi", "bn"], n_sentinels=4)


# ---------------------------------------------------------------- loading


def test_load_summarization(tmp_path: Path) -> None:
    p = tmp_path / "hi.jsonl"
    p.write_text('{"document": "abc", "summary": "a", "lang": "hi"}\n')
    ds = load_dataset(p, "summarization", "hi")
    assert ds.examples == [Example("abc", "a", "hi", "summarization")]


def test_load_question_generation_joins_answer_and_passage(tmp_path: Path) -> None:
    p = tmp_path / "qg.jsonl"
    p.write_text('{"passage": "ctx", "answer": "ans", "question": "q", "lang": "hi"}\n')
    ds = load_dataset(p, "question_generation", "hi", "train")
    assert ds.examples[0].source == "ans </s> ctx"


def test_load_errors_name_line(tmp_path: Path) -> None:
    p = tmp_path / "bad.jsonl"
    p.write_text('{"document": "abc", "summary": "a", "lang": "hi"}\n{"document": "x", "lang": "hi"}\n')
    with pytest.raises(DataError, match=r"bad\.jsonl:2.*summary"):
        load_dataset(p, "summarization", "hi")
    p.write_text('{"document": "abc", "summary": "a", "lang": "bn"}\n')
    with pytest.raises(DataError, match="bn"):
        load_dataset(p, "summarization", "hi")
    p.write_text("{not json\n")
    with pytest.raises(DataError, match=":1"):
        load_dataset(p, "summarization", "hi")
    with pytest.raises(DataError, match="no such file"):
        load_dataset(tmp_path / "missing.jsonl", "summarization", "hi")


def test_empty_source_rejected() -> None:
    with pytest.raises(DataError):
        Example("", "x", "hi")


def test_write_load_roundtrip(tmp_path: Path) -> None:
    exs = [Example("abc", "cba", "hi", "transduction"), Example("dd", "d", "hi", "transduction")]
    write_dataset(tmp_path / "x.jsonl", exs)
    assert load_dataset(tmp_path / "x.jsonl", "transduction", "hi").examples == exs


# ---------------------------------------------------------------- tagging


def test_tag_prefix_and_eos() -> None:
    tok = _tok()
    seq, tgt = tag_example(Example("abc", "ba", "hi"), tok)
    assert list(seq.tokens[:2]) == tok.tag_ids("hi")
    assert tok.decode(seq.tokens) == "abc"
    assert tgt[-1] == tok.eos_id and tok.decode(tgt) == "ba"


def test_truncation_keeps_tags() -> None:
    tok = _tok()
    seq, _ = tag_example(Example("a" * 600, "b", "en"), tok)
    assert len(seq.tokens) == 512 + 2
    assert list(seq.tokens[:2]) == tok.tag_ids("en")


def test_unknown_tag_raises() -> None:
    with pytest.raises(TokenizerError):
        tag_example(Example("abc", "a", "zz"), _tok())


def test_empty_vocabulary_raises() -> None:
    with pytest.raises(TokenizerError):
        CharTokenizer([], [], 0).encode("a")


def test_tokenizer_roundtrip() -> None:
    tok = _tok()
    again = CharTokenizer.from_dict(json.loads(json.dumps(tok.to_dict())))
    assert again.itos == tok.itos


# ---------------------------------------------------------------- multimonolang


def _mono(tmp_path: Path, langs: dict[str, int]) -> dict[str, Path]:
    out = {}
    for lang, n in langs.items():
        p = tmp_path / f"{lang}.txt"
        p.write_text("".join(f"{lang} line {i}\n" for i in range(n)))
        out[lang] = p
    return out


def test_multimonolang_counts_and_disjoint(tmp_path: Path) -> None:
    paths = _mono(tmp_path, {"hi": 50, "bn": 40})
    ds = build_multimonolang(paths, {"train": 20, "valid": 5, "test": 5}, 0)
    for lang in ("hi", "bn"):
        seen = [set(ex.source for ex in ds[s] if ex.lang == lang) for s in ("train", "valid", "test")]
        assert [len(x) for x in seen] == [20, 5, 5]
        assert not (seen[0] & seen[1]) and not (seen[0] & seen[2]) and not (seen[1] & seen[2])
    assert ds["train"].examples == build_multimonolang(paths, {"train": 20, "valid": 5, "test": 5}, 0)["train"].examples


def test_multimonolang_shortfall_names_language(tmp_path: Path) -> None:
    paths = _mono(tmp_path, {"hi": 50, "bn": 10})
    with pytest.raises(DataError, match="'bn'"):
        build_multimonolang(paths, {"train": 20}, 0)


# ---------------------------------------------------------------- span corruption


def test_corrupt_spans_example() -> None:
    inp, tgt = corrupt_spans([5, 6, 7, 8, 9], [(1, 3), (4, 5)], [100, 101])
    assert inp == [5, 100, 8, 101]
    assert tgt == [100, 6, 7, 101, 9]
    assert reconstruct(inp, tgt, [100, 101]) == [5, 6, 7, 8, 9]


def test_corrupt_spans_rejects_overlap() -> None:
    with pytest.raises(ValueError):
        corrupt_spans([1, 2, 3], [(0, 2), (1, 3)], [100, 101])


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.integers(0, 50), min_size=1, max_size=80),
    st.floats(0.05, 0.6),
    st.floats(1.0, 5.0),
    st.integers(0, 2**32 - 1),
)
def test_span_corruption_reconstructs(tokens, rate, mean_span, seed) -> None:
    rng = np.random.default_rng(seed)
    spans = sample_spans(len(tokens), rate, mean_span, rng)
    noise = sum(b - a for a, b in spans)
    if len(tokens) > 1:
        assert noise == min(max(round(len(tokens) * rate), 1), len(tokens) - 1)
    for (a, b), (c, _) in zip(spans, spans[1:]):
        assert b < c  # kept tokens separate consecutive spans
    inp, tgt = corrupt_spans(tokens, spans, SENTINELS)
    assert reconstruct(inp, tgt, SENTINELS) == list(tokens)
    inp2, tgt2 = span_corrupt(tokens, rate, mean_span, np.random.default_rng(seed), SENTINELS)
    assert (inp2, tgt2) == (inp, tgt)


def test_sample_spans_mean_length() -> None:
    # 100 tokens at 15% gives 15 noise tokens in round(15 / 3) = 5 spans
    spans = sample_spans(100, 0.15, 3.0, np.random.default_rng(0))
    assert len(spans) == 5
    assert sum(b - a for a, b in spans) == 15


# ---------------------------------------------------------------- support / query


def test_support_size_examples() -> None:
    assert support_size(8, 0.5) == 4
    assert support_size(2, 0.5) == 1
    assert support_size(9, 0.5) == 5
    assert support_size(10, 0.01) == 1
    assert support_size(10, 0.99) == 9
    with pytest.raises(DataError):
        support_size(1, 0.5)


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 40), st.floats(0.01, 0.99), st.integers(0, 10**6))
def test_split_is_a_partition(n, frac, seed) -> None:
    batch = [Example(f"s{i}", "t", "hi") for i in range(n)]
    support, query = split_support_query(batch, frac, random.Random(seed))
    assert support and query
    assert len(support) == support_size(n, frac)
    assert not set(support) & set(query)
    assert sorted(support + query, key=lambda e: e.source) == sorted(batch, key=lambda e: e.source)


def _meta_sets(sizes: dict[str, int]) -> dict[str, Dataset]:
    return {
        lang: Dataset([Example(f"{lang}{i}", "t", lang) for i in range(n)], lang, "valid")
        for lang, n in sizes.items()
    }


def test_task_batch_is_single_language() -> None:
    meta = _meta_sets({"hi": 20, "es": 20, "th": 20})
    rng = random.Random(0)
    for _ in range(50):
        tb = sample_task_batch(meta, 8, rng)
        assert len(tb.support) == 4 and len(tb.query) == 4
        assert {ex.lang for ex in tb.support + tb.query} == {tb.lang}


def test_task_batch_shortfall() -> None:
    with pytest.raises(DataError, match="'es'"):
        sample_task_batch(_meta_sets({"es": 3}), 8, random.Random(0))


def test_language_sampling_uniform() -> None:
    from scipy.stats import chisquare

    meta = _meta_sets({"hi": 10, "es": 10, "th": 10})
    rng = random.Random(1)
    counts = {k: 0 for k in meta}
    for _ in range(3000):
        counts[sample_task_batch(meta, 4, rng).lang] += 1
    assert chisquare(list(counts.values())).pvalue >= 0.01
