"""Character-level tokenizer with reserved language-tag, sentinel and EOS ids."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

PAD = "<pad>"
EOS = "</s>"
UNK = "<unk>"
SPECIALS = (PAD, EOS, UNK)


def source_tag(lang: str) -> str:
    return f"<f{lang}>"


def target_tag(lang: str) -> str:
    return f"<2{lang}>"


def sentinel(i: int) -> str:
    return f"<extra_id_{i}>"


class TokenizerError(ValueError):
    pass


@dataclass
class CharTokenizer:
    """Maps text to ids one character at a time.

    Id layout: specials, then two tags per language, then sentinels, then
    characters. The layout is stable for a given ``(languages, chars,
    n_sentinels)`` so a tokenizer rebuilt from its spec gives identical ids.
    """

    languages: list[str] = field(default_factory=list)
    chars: list[str] = field(default_factory=list)
    n_sentinels: int = 0

    def __post_init__(self) -> None:
        self.languages = sorted(set(self.languages))
        self.chars = sorted(set(self.chars))
        vocab = list(SPECIALS)
        for lang in self.languages:
            vocab += [source_tag(lang), target_tag(lang)]
        vocab += [sentinel(i) for i in range(self.n_sentinels)]
        vocab += self.chars
        self.itos = vocab
        self.stoi = {s: i for i, s in enumerate(vocab)}
        if len(self.stoi) != len(vocab):
            raise TokenizerError("a character collides with a reserved token")

    @classmethod
    def build(cls, texts: Iterable[str], languages: Iterable[str], n_sentinels: int = 32) -> "CharTokenizer":
        chars: set[str] = set()
        for t in texts:
            chars.update(t)
        return cls(list(languages), sorted(chars), n_sentinels)

    @property
    def vocab_size(self) -> int:
        return len(self.itos)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    @property
    def unk_id(self) -> int:
        return 2

    @property
    def sentinel_ids(self) -> list[int]:
        return [self.stoi[sentinel(i)] for i in range(self.n_sentinels)]

    def tag_ids(self, lang: str, target_lang: str | None = None) -> list[int]:
        tags = (source_tag(lang), target_tag(target_lang or lang))
        missing = [t for t in tags if t not in self.stoi]
        if missing:
            raise TokenizerError(f"no tag tokens for language(s): {missing}")
        return [self.stoi[t] for t in tags]

    def encode(self, text: str) -> list[int]:
        if len(self.itos) <= len(SPECIALS):
            raise TokenizerError("tokenizer vocabulary is empty")
        return [self.stoi.get(ch, self.unk_id) for ch in text]

    def decode(self, ids: Iterable[int], skip_special: bool = True) -> str:
        out = []
        n_reserved = len(SPECIALS) + 2 * len(self.languages) + self.n_sentinels
        for i in ids:
            i = int(i)
            if i == self.eos_id and skip_special:
                break
            if skip_special and i < n_reserved:
                continue
            out.append(self.itos[i] if 0 <= i < len(self.itos) else UNK)
        return "".join(out)

    def to_dict(self) -> dict:
        return {"kind": "char", "languages": self.languages, "chars": self.chars, "n_sentinels": self.n_sentinels}

    @classmethod
    def from_dict(cls, spec: dict) -> "CharTokenizer":
        if spec.get("kind", "char") != "char":
            raise TokenizerError(f"unsupported tokenizer kind {spec.get('kind')!r}")
        return cls(spec["languages"], spec["chars"], spec["n_sentinels"])
