"""Zero-shot evaluation runs and the language-tag distance analysis."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Dataset, Example, tag_example
from .langspace import cosine_distance
from .metrics import bleu, rouge_l, sequence_accuracy
from .model import DecodeConfig, Seq2SeqTransformer, generate, greedy_decode, language_tag_representation
from .tokenizer import CharTokenizer

METRICS = ("rouge_l", "bleu", "accuracy")


class ContaminationError(RuntimeError):
    """An evaluation language was also used for meta-training."""


@dataclass
class MetricResult:
    name: str
    n: int
    score: float
    precision: float | None = None
    recall: float | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("metric over zero examples")
        hi = 100.0 if self.name == "bleu" else 1.0
        for v in (self.score, self.precision, self.recall):
            if v is not None and not 0.0 <= v <= hi + 1e-9:
                raise ValueError(f"{self.name} component {v} outside [0, {hi}]")

    def to_dict(self) -> dict:
        out = {"name": self.name, "n": self.n, "score": round(self.score, 6)}
        if self.precision is not None:
            out["precision"] = round(self.precision, 6)
            out["recall"] = round(self.recall or 0.0, 6)
        return out


@dataclass
class EvalReport:
    per_lang: dict[str, MetricResult]
    metric: str
    decode_cfg: DecodeConfig
    model_provenance: list[dict] = field(default_factory=list)

    @property
    def average(self) -> float:
        return float(np.mean([r.score for r in self.per_lang.values()]))

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "decode": {
                "beam_size": self.decode_cfg.beam_size,
                "max_len": self.decode_cfg.max_len,
                "min_len": self.decode_cfg.min_len,
            },
            "per_lang": {k: v.to_dict() for k, v in sorted(self.per_lang.items())},
            "average": round(self.average, 6),
            "model_provenance": self.model_provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self, row_name: str = "model") -> str:
        return format_table({row_name: self})


def format_table(rows: Mapping[str, EvalReport]) -> str:
    """Aligned table: one column per language plus ``avg``, one row per model.

    ROUGE-L and accuracy are shown x100, BLEU as is.
    """
    if not rows:
        raise ValueError("no rows")
    langs = sorted(set().union(*(r.per_lang for r in rows.values())))
    width = max(5, *(len(name) for name in rows))
    head = f"{'Model':<{width}} | " + " | ".join(f"{lang:>6}" for lang in langs) + " |    avg"
    lines = [head, "-" * len(head)]
    for name, rep in rows.items():
        scale = 1.0 if rep.metric == "bleu" else 100.0
        cells = [f"{rep.per_lang[l].score * scale:6.2f}" if l in rep.per_lang else f"{'-':>6}" for l in langs]
        lines.append(f"{name:<{width}} | " + " | ".join(cells) + f" | {rep.average * scale:6.2f}")
    return "\n".join(lines) + "\n"


def _mean_or_none(xs: Sequence[float | None]) -> float | None:
    return None if any(x is None for x in xs) else float(np.mean(xs))


def average_reports(reports: Sequence[EvalReport], provenance: list[dict] | None = None) -> EvalReport:
    """Per-language mean over several reports of the same metric and languages."""
    if not reports:
        raise ValueError("no reports to average")
    first = reports[0]
    if any(r.metric != first.metric or set(r.per_lang) != set(first.per_lang) for r in reports):
        raise ValueError("reports differ in metric or languages")
    per_lang = {}
    for lang, res in first.per_lang.items():
        items = [r.per_lang[lang] for r in reports]
        per_lang[lang] = MetricResult(
            res.name,
            res.n,
            float(np.mean([i.score for i in items])),
            _mean_or_none([i.precision for i in items]),
            _mean_or_none([i.recall for i in items]),
        )
    return EvalReport(per_lang, first.metric, first.decode_cfg, list(provenance or first.model_provenance))


def score_outputs(metric: str, hyps: Sequence[str], refs: Sequence[str], lang: str) -> MetricResult:
    if metric == "rouge_l":
        prf = [rouge_l(h, r, lang) for h, r in zip(hyps, refs)]
        p, r, f = (float(np.mean(x)) for x in zip(*prf))
        return MetricResult("rouge_l", len(hyps), f, p, r)
    if metric == "bleu":
        return MetricResult("bleu", len(hyps), bleu(hyps, refs, lang))
    if metric == "accuracy":
        return MetricResult("accuracy", len(hyps), sequence_accuracy(hyps, refs))
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def decode_dataset(
    model: Seq2SeqTransformer,
    tokenizer: CharTokenizer,
    examples: Sequence[Example],
    decode_cfg: DecodeConfig,
    max_source_len: int = 512,
) -> list[str]:
    inputs = [tag_example(ex, tokenizer, max_source_len)[0] for ex in examples]
    if decode_cfg.beam_size == 1:
        outs = greedy_decode(model, inputs, decode_cfg.max_len, decode_cfg.min_len)
    else:
        outs = [generate(model, x, decode_cfg) for x in inputs]
    return [tokenizer.decode(o) for o in outs]


def zero_shot_evaluate(
    model: Seq2SeqTransformer,
    tokenizer: CharTokenizer,
    test_sets: Mapping[str, Dataset],
    decode_cfg: DecodeConfig,
    metric: str,
    meta_train_langs: Iterable[str] = (),
    allow_overlap: bool = False,
    provenance: list[dict] | None = None,
    dump_path: str | Path | None = None,
) -> EvalReport:
    """Decode every test example and score per language, with no parameter updates."""
    overlap = sorted(set(test_sets) & set(meta_train_langs))
    if overlap and not allow_overlap:
        raise ContaminationError(f"test language(s) {overlap} were used in meta-training")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    per_lang = {}
    dumped = []
    for lang in sorted(test_sets):
        exs = test_sets[lang].examples
        hyps = decode_dataset(model, tokenizer, exs, decode_cfg)
        refs = [ex.target for ex in exs]
        per_lang[lang] = score_outputs(metric, hyps, refs, lang)
        dumped += [
            {"lang": lang, "source": ex.source, "reference": ex.target, "hypothesis": h}
            for ex, h in zip(exs, hyps)
        ]
    if dump_path is not None:
        with Path(dump_path).open("w", encoding="utf-8") as fh:
            for rec in dumped:
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    return EvalReport(per_lang, metric, decode_cfg, list(provenance or []))


def tag_representations(
    model: Seq2SeqTransformer,
    tokenizer: CharTokenizer,
    probes: Mapping[str, Sequence[str]],
) -> dict[str, np.ndarray]:
    out = {}
    for lang, texts in probes.items():
        inputs = [tag_example(Example(t, t, lang, "denoising"), tokenizer)[0] for t in texts]
        out[lang] = language_tag_representation(model, lang, inputs)
    return out


def tag_distance_matrix(
    model: Seq2SeqTransformer,
    tokenizer: CharTokenizer,
    langs: Sequence[str],
    probes: Mapping[str, Sequence[str]],
) -> np.ndarray:
    """Pairwise cosine distances between language-tag representations."""
    if len(langs) < 2:
        raise ValueError("need at least two languages")
    reps = tag_representations(model, tokenizer, {lang: probes[lang] for lang in langs})
    n = len(langs)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = cosine_distance(reps[langs[i]], reps[langs[j]])
    return out


def mean_off_diagonal(matrix: np.ndarray) -> float:
    n = matrix.shape[0]
    return float(matrix[~np.eye(n, dtype=bool)].mean())


def matrix_to_csv(langs: Sequence[str], matrix: np.ndarray) -> str:
    lines = ["lang," + ",".join(langs)]
    for lang, row in zip(langs, matrix):
        lines.append(lang + "," + ",".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def heat_table(langs: Sequence[str], matrix: np.ndarray) -> str:
    """Text heat map: darker glyphs for larger distances."""
    shades = " .:-=+*#%@"
    top = float(matrix.max()) or 1.0
    lines = ["      " + " ".join(f"{l:>6}" for l in langs)]
    for lang, row in zip(langs, matrix):
        cells = []
        for v in row:
            glyph = shades[min(len(shades) - 1, int(v / top * (len(shades) - 1)))]
            cells.append(f"{v:5.3f}{glyph}")
        lines.append(f"{lang:>6} " + " ".join(cells))
    return "\n".join(lines) + "\n"
