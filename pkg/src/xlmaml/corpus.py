"""Datasets, language tagging, denoising corpus construction and meta-task sampling."""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .tokenizer import CharTokenizer

TASKS = ("summarization", "question_generation", "denoising", "transduction")
SPLITS = ("train", "valid", "test")
QG_DELIMITER = " </s> "
MAX_SOURCE_LEN = 512

# field names per task: (source fields, target field)
SCHEMAS = {
    "summarization": (("document",), "summary"),
    "question_generation": (("answer", "passage"), "question"),
    "transduction": (("source",), "target"),
}


class DataError(ValueError):
    """Raised for malformed, missing or insufficient data."""


@dataclass(frozen=True)
class Example:
    source: str
    target: str
    lang: str
    task: str = "summarization"

    def __post_init__(self) -> None:
        if not self.source:
            raise DataError("example source is empty")
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")


@dataclass
class Dataset:
    examples: list[Example]
    lang: str
    split: str = "train"

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise DataError(f"unknown split {self.split!r}")
        tasks = {ex.task for ex in self.examples}
        if len(tasks) > 1:
            raise DataError(f"mixed tasks in one dataset: {sorted(tasks)}")
        langs = {ex.lang for ex in self.examples}
        if self.lang != "mul" and langs - {self.lang}:
            raise DataError(f"dataset for {self.lang!r} holds examples in {sorted(langs - {self.lang})}")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


@dataclass(frozen=True)
class TaskBatch:
    lang: str
    support: tuple[Example, ...]
    query: tuple[Example, ...]

    def __post_init__(self) -> None:
        if not self.support or not self.query:
            raise DataError("support and query sets must both be non-empty")
        if {ex.lang for ex in self.support + self.query} != {self.lang}:
            raise DataError("task batch mixes languages")


@dataclass(frozen=True)
class TaggedSequence:
    tokens: tuple[int, ...]
    lang: str


def load_dataset(path: str | Path, task: str, lang: str, split: str = "test") -> Dataset:
    """Read a JSONL task file.

    Summarization records carry ``document``/``summary``; question generation
    records carry ``passage``/``answer``/``question`` and become
    ``answer </s> passage`` sources; ``transduction`` (the synthetic task) uses
    ``source``/``target``. Every record needs a ``lang`` equal to ``lang``.
    """
    if task not in SCHEMAS:
        raise DataError(f"no file schema for task {task!r}")
    src_fields, tgt_field = SCHEMAS[task]
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    examples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            missing = [f for f in (*src_fields, tgt_field, "lang") if f not in rec]
            if missing:
                raise DataError(f"{path}:{lineno}: missing field(s) {missing}")
            if rec["lang"] != lang:
                raise DataError(f"{path}:{lineno}: lang {rec['lang']!r} but dataset declared {lang!r}")
            if task == "question_generation":
                source = f"{rec['answer']}{QG_DELIMITER}{rec['passage']}"
            else:
                source = rec[src_fields[0]]
            try:
                examples.append(Example(source, rec[tgt_field], lang, task))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not examples:
        raise DataError(f"{path}: empty dataset")
    return Dataset(examples, lang, split)


def write_dataset(path: str | Path, examples: Sequence[Example]) -> None:
    """Inverse of :func:`load_dataset` for summarization and transduction files."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            src_fields, tgt_field = SCHEMAS[ex.task]
            rec = {src_fields[0]: ex.source, tgt_field: ex.target, "lang": ex.lang}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def tag_example(
    example: Example, tokenizer: CharTokenizer, max_source_len: int = MAX_SOURCE_LEN
) -> tuple[TaggedSequence, list[int]]:
    """Prefix ``<fxx> <2xx>`` to the tokenized source; append EOS to the target.

    The source is truncated to ``max_source_len`` tokens before the two tags
    are added.
    """
    tags = tokenizer.tag_ids(example.lang)
    src = tokenizer.encode(example.source)[:max_source_len]
    tgt = tokenizer.encode(example.target) + [tokenizer.eos_id]
    return TaggedSequence(tuple(tags + src), example.lang), tgt


def read_lines(path: str | Path) -> list[str]:
    with Path(path).open(encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def build_multimonolang(
    mono_paths: Mapping[str, str | Path],
    per_lang: Mapping[str, int],
    rng_seed: int,
) -> dict[str, Dataset]:
    """Sample monolingual lines per language without replacement and pool them.

    ``per_lang`` gives counts per split. Splits are disjoint within each
    language. The pooled train split is shuffled with ``rng_seed``.
    """
    rng = random.Random(rng_seed)
    need = sum(per_lang.get(s, 0) for s in SPLITS)
    pooled: dict[str, list[Example]] = {s: [] for s in SPLITS}
    for lang in sorted(mono_paths):
        path = Path(mono_paths[lang])
        if not path.exists():
            raise DataError(f"{path}: monolingual file for {lang!r} not found")
        lines = read_lines(path)
        if len(lines) < need:
            raise DataError(f"language {lang!r}: requested {need} lines, file has {len(lines)}")
        picked = rng.sample(lines, need)
        start = 0
        for split in SPLITS:
            n = per_lang.get(split, 0)
            pooled[split] += [Example(t, t, lang, "denoising") for t in picked[start : start + n]]
            start += n
    rng.shuffle(pooled["train"])
    return {s: Dataset(exs, "mul", s) for s, exs in pooled.items()}


def corrupt_spans(
    tokens: Sequence[int], spans: Sequence[tuple[int, int]], sentinels: Sequence[int]
) -> tuple[list[int], list[int]]:
    """Replace each half-open ``[start, end)`` span with the next sentinel.

    The target lists each sentinel followed by the tokens it replaced.
    """
    if len(spans) > len(sentinels):
        raise ValueError(f"{len(spans)} spans but only {len(sentinels)} sentinels")
    inp: list[int] = []
    tgt: list[int] = []
    pos = 0
    for i, (a, b) in enumerate(sorted(spans)):
        if not pos <= a < b <= len(tokens):
            raise ValueError(f"invalid or overlapping span ({a}, {b})")
        inp += list(tokens[pos:a]) + [sentinels[i]]
        tgt += [sentinels[i]] + list(tokens[a:b])
        pos = b
    inp += list(tokens[pos:])
    return inp, tgt


def reconstruct(inp: Sequence[int], tgt: Sequence[int], sentinels: Sequence[int]) -> list[int]:
    """Splice the removed spans in ``tgt`` back into ``inp``."""
    sset = set(sentinels)
    fills: dict[int, list[int]] = {}
    current = None
    for t in tgt:
        if t in sset:
            current = t
            fills[t] = []
        elif current is not None:
            fills[current].append(t)
    out: list[int] = []
    for t in inp:
        out += fills.get(t, []) if t in sset else [t]
    return out


def _random_segmentation(n_items: int, n_segments: int, rng: np.random.Generator) -> np.ndarray:
    # uniformly random composition of n_items into n_segments positive parts
    cuts = np.sort(rng.choice(np.arange(1, n_items), size=n_segments - 1, replace=False))
    return np.diff(np.concatenate([[0], cuts, [n_items]]))


def sample_spans(
    length: int, corruption_rate: float, mean_span: float, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Pick noise spans the way the T5 span-corruption objective does.

    ``round(length * rate)`` tokens (at least 1, at most ``length - 1``) are
    split into ``round(noise / mean_span)`` spans that alternate with kept
    spans; the sequence starts with a kept span unless it has one token.
    """
    if not 0.0 < corruption_rate < 1.0:
        raise ValueError(f"corruption_rate must be in (0, 1), got {corruption_rate}")
    if mean_span <= 0:
        raise ValueError("mean_span must be positive")
    if length < 1:
        raise ValueError("cannot corrupt an empty sequence")
    if length == 1:
        return [(0, 1)]
    n_noise = min(max(int(round(length * corruption_rate)), 1), length - 1)
    n_spans = max(int(round(n_noise / mean_span)), 1)
    n_keep = length - n_noise
    n_spans = min(n_spans, n_noise, n_keep)
    noise_lens = _random_segmentation(n_noise, n_spans, rng)
    keep_lens = _random_segmentation(n_keep, n_spans, rng)
    spans = []
    pos = 0
    for keep, noise in zip(keep_lens, noise_lens):
        pos += int(keep)
        spans.append((pos, pos + int(noise)))
        pos += int(noise)
    return spans


def span_corrupt(
    tokens: Sequence[int],
    corruption_rate: float,
    mean_span: float,
    rng: np.random.Generator,
    sentinels: Sequence[int],
) -> tuple[list[int], list[int]]:
    if not tokens:
        raise ValueError("cannot corrupt an empty sequence")
    spans = sample_spans(len(tokens), corruption_rate, mean_span, rng)
    return corrupt_spans(tokens, spans, sentinels)


def support_size(n: int, support_fraction: float) -> int:
    if n < 2:
        raise DataError(f"need at least 2 examples to split, got {n}")
    if not 0.0 < support_fraction < 1.0:
        raise ValueError(f"support_fraction must be in (0, 1), got {support_fraction}")
    # round half up so that 0.5 * odd sizes is stable across platforms
    k = int(np.floor(support_fraction * n + 0.5))
    return min(max(k, 1), n - 1)


def split_support_query(
    batch: Sequence[Example], support_fraction: float, rng: random.Random
) -> tuple[list[Example], list[Example]]:
    k = support_size(len(batch), support_fraction)
    order = list(range(len(batch)))
    rng.shuffle(order)
    return [batch[i] for i in order[:k]], [batch[i] for i in order[k:]]


def sample_task_batch(
    meta_sets: Mapping[str, Dataset],
    batch_size: int,
    rng: random.Random,
    support_fraction: float = 0.5,
) -> TaskBatch:
    """Pick a language uniformly, draw ``batch_size`` of its examples, split them."""
    if not meta_sets:
        raise DataError("no meta-training datasets")
    langs = sorted(meta_sets)
    lang = langs[rng.randrange(len(langs))]
    ds = meta_sets[lang]
    if len(ds) < batch_size:
        raise DataError(f"dataset for {lang!r} has {len(ds)} examples, batch needs {batch_size}")
    picked = rng.sample(ds.examples, batch_size)
    support, query = split_support_query(picked, support_fraction, rng)
    return TaskBatch(lang, tuple(support), tuple(query))


def language_counts(tasks: Sequence[TaskBatch]) -> dict[str, int]:
    return dict(sorted(Counter(t.lang for t in tasks).items()))
