"""ROUGE-L and corpus BLEU-4 over language-specific tokenization."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

Tokenize = Callable[[str], list[str]]

_WORD_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

# scripts written without spaces between words
CHAR_LANGS = frozenset({"zh", "ja", "th", "lo", "km", "my"})


def whitespace_punct_tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text)


def char_tokenize(text: str) -> list[str]:
    return [ch for ch in text if not ch.isspace()]


class TokenizerRegistry:
    """Per-language tokenizers with an optional stemming hook.

    Unregistered languages fall back to character tokenization for scripts
    without word boundaries and to word/punctuation splitting otherwise.
    """

    def __init__(self) -> None:
        self._tokenizers: dict[str, Tokenize] = {}
        self._stemmers: dict[str, Callable[[str], str]] = {}

    def register(self, lang: str, tokenizer: Tokenize, stemmer: Callable[[str], str] | None = None) -> None:
        self._tokenizers[lang] = tokenizer
        if stemmer is not None:
            self._stemmers[lang] = stemmer

    def __call__(self, lang: str | None) -> Tokenize:
        if lang in self._tokenizers:
            base = self._tokenizers[lang]  # type: ignore[index]
        elif lang in CHAR_LANGS:
            base = char_tokenize
        else:
            base = whitespace_punct_tokenize
        stem = self._stemmers.get(lang) if lang else None
        if stem is None:
            return base
        return lambda text: [stem(t) for t in base(text)]


tokenizer_for = TokenizerRegistry()


def _tokens(text: str, lang: str | None, tokenize: Tokenize | None, lowercase: bool) -> list[str]:
    if lowercase:
        text = text.lower()
    return (tokenize or tokenizer_for(lang))(text)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(
    hypothesis: str,
    reference: str,
    lang: str | None = None,
    tokenize: Tokenize | None = None,
    lowercase: bool = False,
) -> tuple[float, float, float]:
    """LCS precision, recall and F1 of ``hypothesis`` against ``reference``."""
    ref = _tokens(reference, lang, tokenize, lowercase)
    if not ref:
        raise ValueError("reference is empty after tokenization")
    hyp = _tokens(hypothesis, lang, tokenize, lowercase)
    if not hyp:
        return 0.0, 0.0, 0.0
    lcs = lcs_length(hyp, ref)
    p, r = lcs / len(hyp), lcs / len(ref)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


@dataclass(frozen=True)
class BleuStats:
    correct: tuple[int, ...]
    total: tuple[int, ...]
    sys_len: int
    ref_len: int


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]], max_order: int = 4) -> BleuStats:
    correct = [0] * max_order
    total = [0] * max_order
    sys_len = ref_len = 0
    for h, r in zip(hyps, refs):
        sys_len += len(h)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            correct[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[n - 1] += max(len(h) - n + 1, 0)
    return BleuStats(tuple(correct), tuple(total), sys_len, ref_len)


def bleu_from_stats(stats: BleuStats) -> float:
    """Corpus BLEU with exponential smoothing of zero-match orders.

    For the k-th order (counting only orders that have zero matches) the
    precision becomes ``1 / (2**k * total)``. Orders with no candidate
    n-grams at all stop the product, matching the usual BLEU-4 convention
    of contributing a zero precision. A corpus without a single matching
    unigram scores 0 rather than a smoothed value.
    """
    order = len(stats.correct)
    if stats.sys_len == 0 or not any(stats.correct):
        return 0.0
    log_sum = 0.0
    smooth = 1.0
    for n in range(order):
        if stats.total[n] == 0:
            return 0.0
        if stats.correct[n] == 0:
            smooth *= 2.0
            p = 1.0 / (smooth * stats.total[n])
        else:
            p = stats.correct[n] / stats.total[n]
        log_sum += math.log(p)
    bp = 1.0 if stats.sys_len >= stats.ref_len else math.exp(1.0 - stats.ref_len / stats.sys_len)
    return 100.0 * bp * math.exp(log_sum / order)


def bleu(
    hypotheses: Sequence[str],
    references: Sequence[str],
    lang: str | None = None,
    tokenize: Tokenize | None = None,
    lowercase: bool = False,
) -> float:
    """Corpus-level BLEU-4 in [0, 100]; casing is preserved unless ``lowercase``."""
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("empty corpus")
    hyps = [_tokens(h, lang, tokenize, lowercase) for h in hypotheses]
    refs = [_tokens(r, lang, tokenize, lowercase) for r in references]
    return bleu_from_stats(bleu_stats(hyps, refs))


def sequence_accuracy(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    if len(hypotheses) != len(references) or not hypotheses:
        raise ValueError("need equally many, and at least one, hypotheses and references")
    return sum(h == r for h, r in zip(hypotheses, references)) / len(hypotheses)
