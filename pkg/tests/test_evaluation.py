from __future__ import annotations

import json

import numpy as np
import pytest
import torch

from xlmaml.corpus import Dataset, Example
from xlmaml.evaluation import (
    ContaminationError,
    EvalReport,
    MetricResult,
    average_reports,
    format_table,
    heat_table,
    matrix_to_csv,
    mean_off_diagonal,
    score_outputs,
    tag_distance_matrix,
    zero_shot_evaluate,
)
from xlmaml.model import DecodeConfig, ModelConfig, init_model
from xlmaml.tokenizer import CharTokenizer

LANGS = ["en", "fr", "de", "es"]


@pytest.fixture(scope="module")
def setup():
    tok = CharTokenizer(LANGS, list("abcd"), 2)
    cfg = ModelConfig(vocab_size=tok.vocab_size, d_model=16, n_layers=1, n_heads=2, d_ff=16, max_positions=24)
    model = init_model(cfg, 0)
    tests = {
        lang: Dataset([Example(s, s, lang, "transduction") for s in ("ab", "cd", "abc")], lang, "test")
        for lang in ("fr", "de")
    }
    return model, tok, tests


def _report(scores: dict[str, float], metric: str = "accuracy") -> EvalReport:
    return EvalReport({k: MetricResult(metric, 10, v) for k, v in scores.items()}, metric, DecodeConfig(beam_size=1))


def test_contamination_guard(setup) -> None:
    model, tok, tests = setup
    with pytest.raises(ContaminationError, match="fr"):
        zero_shot_evaluate(model, tok, tests, DecodeConfig(beam_size=1, max_len=6), "accuracy", ["fr", "es"])
    rep = zero_shot_evaluate(model, tok, tests, DecodeConfig(beam_size=1, max_len=6), "accuracy", ["fr"], allow_overlap=True)
    assert set(rep.per_lang) == {"fr", "de"}


def test_evaluation_leaves_model_untouched_and_is_deterministic(setup, tmp_path) -> None:
    model, tok, tests = setup
    before = {k: v.clone() for k, v in model.state_dict().items()}
    dc = DecodeConfig(beam_size=2, max_len=6)
    a = zero_shot_evaluate(model, tok, tests, dc, "rouge_l", dump_path=tmp_path / "out.jsonl")
    b = zero_shot_evaluate(model, tok, tests, dc, "rouge_l")
    assert a.to_json() == b.to_json()
    for k, v in model.state_dict().items():
        assert torch.equal(v, before[k])
    rows = [json.loads(line) for line in (tmp_path / "out.jsonl").read_text().splitlines()]
    assert len(rows) == 6 and {r["lang"] for r in rows} == {"fr", "de"}


def test_unknown_metric(setup) -> None:
    model, tok, tests = setup
    with pytest.raises(ValueError):
        zero_shot_evaluate(model, tok, tests, DecodeConfig(), "meteor")


def test_score_outputs() -> None:
    assert score_outputs("accuracy", ["a", "b"], ["a", "c"], "en").score == 0.5
    r = score_outputs("rouge_l", ["a b", "c"], ["a b", "d"], "en")
    assert (r.score, r.precision, r.recall) == (0.5, 0.5, 0.5)
    assert score_outputs("bleu", ["a b c d"], ["a b c d"], "en").score == pytest.approx(100.0)


def test_metric_result_validation() -> None:
    with pytest.raises(ValueError):
        MetricResult("accuracy", 0, 0.5)
    with pytest.raises(ValueError):
        MetricResult("rouge_l", 3, 1.5)
    MetricResult("bleu", 3, 55.0)


def test_table_shape() -> None:
    table = format_table({"EnZ": _report({"fr": 0.1, "de": 0.3}), "Meta": _report({"fr": 0.5})})
    lines = table.splitlines()
    assert lines[0].split("|")[1:] == ["     de ", "     fr ", "    avg"]
    assert lines[2].split() == ["EnZ", "|", "30.00", "|", "10.00", "|", "20.00"]
    assert lines[3].split() == ["Meta", "|", "-", "|", "50.00", "|", "50.00"]
    with pytest.raises(ValueError):
        format_table({})


def test_average_reports() -> None:
    avg = average_reports([_report({"fr": 0.2, "de": 0.4}), _report({"fr": 0.4, "de": 0.0})])
    assert avg.per_lang["fr"].score == pytest.approx(0.3)
    assert avg.average == pytest.approx(0.25)
    with pytest.raises(ValueError):
        average_reports([_report({"fr": 0.2}), _report({"de": 0.2})])
    with pytest.raises(ValueError):
        average_reports([])


def test_report_json_roundtrips_values() -> None:
    d = json.loads(_report({"fr": 0.25, "de": 0.75}).to_json())
    assert d["average"] == 0.5 and list(d["per_lang"]) == ["de", "fr"]


def test_tag_distance_matrix(setup) -> None:
    model, tok, _ = setup
    probes = {lang: ["abc", "dcba", "ab"] for lang in LANGS}
    m = tag_distance_matrix(model, tok, LANGS, probes)
    assert m.shape == (4, 4)
    assert np.allclose(m, m.T) and np.all(np.diag(m) == 0)
    assert np.all(m[~np.eye(4, dtype=bool)] > 0)
    assert mean_off_diagonal(m) == pytest.approx(m.sum() / 12)
    with pytest.raises(ValueError):
        tag_distance_matrix(model, tok, ["fr"], probes)


def test_matrix_renderings() -> None:
    m = np.array([[0.0, 0.5], [0.5, 0.0]])
    assert matrix_to_csv(["a", "b"], m) == "lang,a,b\na,0.000000,0.500000\nb,0.500000,0.000000\n"
    heat = heat_table(["a", "b"], m).splitlines()
    assert len(heat) == 3 and "@" in heat[1]
