"""Synthetic cross-lingual benchmark built from token permutations.

A "language" writes a shared set of abstract symbols with its own bijection
onto a common surface alphabet. Languages in one cluster share a prototype
bijection and differ from it by a few transpositions; prototypes of
different clusters are unrelated. All languages solve the same base task on
symbol sequences, so transfer difficulty is governed by how far two
languages' bijections are apart.

Monolingual text consists of runs of consecutive symbols, which is what
lets a denoising-trained model learn each language's symbol order without
any task supervision.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

from .corpus import Example, write_dataset

ALPHABET = "abcdefghijklmnopqrstuvwxyz"
ENGLISH = "en"


def _copy(seq: list[int], n: int) -> list[int]:
    return list(seq)


def _reverse(seq: list[int], n: int) -> list[int]:
    return seq[::-1]


def _successor(seq: list[int], n: int) -> list[int]:
    return [(s + 1) % n for s in seq]


def _sort(seq: list[int], n: int) -> list[int]:
    return sorted(seq)


BASE_TASKS: dict[str, Callable[[list[int], int], list[int]]] = {
    "copy": _copy,
    "reverse": _reverse,
    "successor": _successor,
    "sort": _sort,
}


@dataclass
class SynthConfig:
    n_symbols: int = 12
    n_clusters: int = 3
    per_cluster: int = 2
    swaps: int = 1
    task: str = "successor"
    seq_min: int = 4
    seq_max: int = 6
    mono_min: int = 5
    mono_max: int = 9
    mono_lines: int = 2000
    english_train: int = 2000
    english_valid: int = 200
    meta_size: int = 200
    test_size: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if not 2 <= self.n_symbols <= len(ALPHABET):
            raise ValueError(f"n_symbols must be in [2, {len(ALPHABET)}]")
        if self.task not in BASE_TASKS:
            raise ValueError(f"unknown base task {self.task!r}; choose from {sorted(BASE_TASKS)}")
        if self.n_clusters < 1 or self.per_cluster < 1:
            raise ValueError("need at least one cluster with one member")
        if not 1 <= self.seq_min <= self.seq_max or not 1 <= self.mono_min <= self.mono_max:
            raise ValueError("length bounds must satisfy 1 <= min <= max")


@dataclass
class SynthLanguage:
    code: str
    cluster: int | None
    mapping: list[int]  # symbol index -> surface character index

    def render(self, symbols: list[int]) -> str:
        return "".join(ALPHABET[self.mapping[s]] for s in symbols)

    def read(self, text: str) -> list[int]:
        inverse = {ALPHABET[c]: s for s, c in enumerate(self.mapping)}
        return [inverse[ch] for ch in text]


def language_codes(cfg: SynthConfig) -> list[list[str]]:
    """Codes per cluster: ``l0``, ``l1``, ... in cluster order."""
    out, i = [], 0
    for _ in range(cfg.n_clusters):
        out.append([f"l{i + j}" for j in range(cfg.per_cluster)])
        i += cfg.per_cluster
    return out


def build_languages(cfg: SynthConfig) -> list[SynthLanguage]:
    rng = random.Random(cfg.seed)
    n = cfg.n_symbols
    langs = [SynthLanguage(ENGLISH, None, list(range(n)))]
    for k, codes in enumerate(language_codes(cfg)):
        proto = list(range(n))
        rng.shuffle(proto)
        for code in codes:
            perm = list(proto)
            for _ in range(cfg.swaps):
                i, j = rng.sample(range(n), 2)
                perm[i], perm[j] = perm[j], perm[i]
            langs.append(SynthLanguage(code, k, perm))
    return langs


def permutation_features(lang: SynthLanguage) -> list[float]:
    """Flattened permutation matrix; cosine distance equals Hamming distance / n."""
    n = len(lang.mapping)
    feats = [0.0] * (n * n)
    for s, c in enumerate(lang.mapping):
        feats[s * n + c] = 1.0
    return feats


def hamming(a: SynthLanguage, b: SynthLanguage) -> int:
    return sum(x != y for x, y in zip(a.mapping, b.mapping))


def base_task_output(task: str, symbols: list[int], n: int) -> list[int]:
    return BASE_TASKS[task](list(symbols), n)


def _task_examples(lang: SynthLanguage, cfg: SynthConfig, count: int, rng: random.Random) -> list[Example]:
    out = []
    for _ in range(count):
        length = rng.randint(cfg.seq_min, cfg.seq_max)
        seq = [rng.randrange(cfg.n_symbols) for _ in range(length)]
        tgt = base_task_output(cfg.task, seq, cfg.n_symbols)
        out.append(Example(lang.render(seq), lang.render(tgt), lang.code, "transduction"))
    return out


def _mono_lines(lang: SynthLanguage, cfg: SynthConfig, count: int, rng: random.Random) -> list[str]:
    lines = []
    for _ in range(count):
        start = rng.randrange(cfg.n_symbols)
        length = rng.randint(cfg.mono_min, cfg.mono_max)
        lines.append(lang.render([(start + i) % cfg.n_symbols for i in range(length)]))
    return lines


def generate_benchmark(cfg: SynthConfig, out_dir: str | Path) -> dict:
    """Write vectors, monolingual text, task splits and a manifest under ``out_dir``.

    Returns the manifest. Everything is a pure function of ``cfg``.
    """
    out = Path(out_dir)
    (out / "mono").mkdir(parents=True, exist_ok=True)
    (out / "data").mkdir(parents=True, exist_ok=True)
    langs = build_languages(cfg)
    clustered = [l for l in langs if l.cluster is not None]

    with (out / "vectors.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code"] + [f"v{i}" for i in range(cfg.n_symbols**2)])
        for lang in clustered:
            w.writerow([lang.code] + [f"{x:g}" for x in permutation_features(lang)])

    files: dict[str, dict[str, str]] = {}
    for idx, lang in enumerate(langs):
        rng = random.Random(cfg.seed * 1_000_003 + idx)
        mono = out / "mono" / f"{lang.code}.txt"
        mono.write_text("\n".join(_mono_lines(lang, cfg, cfg.mono_lines, rng)) + "\n", encoding="utf-8")
        if lang.code == ENGLISH:
            sizes = {"train": cfg.english_train, "valid": cfg.english_valid, "test": cfg.test_size}
        else:
            sizes = {"valid": cfg.meta_size, "test": cfg.test_size}
        files[lang.code] = {"mono": str(mono.relative_to(out))}
        for split, count in sizes.items():
            path = out / "data" / f"{lang.code}.{split}.jsonl"
            write_dataset(path, _task_examples(lang, cfg, count, rng))
            files[lang.code][split] = str(path.relative_to(out))

    manifest = {
        "config": asdict(cfg),
        "english": ENGLISH,
        "clusters": language_codes(cfg),
        "languages": {
            l.code: {"cluster": l.cluster, "mapping": l.mapping, "files": files[l.code]} for l in langs
        },
        "vectors": "vectors.csv",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
