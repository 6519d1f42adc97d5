"""A small encoder-decoder Transformer with functional parameter access.

Everything the meta-learner needs goes through ``params`` dictionaries so the
same module can be evaluated at adapted parameters without touching its own
weights (``torch.func.functional_call``).
"""

from __future__ import annotations

import fnmatch
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import torch
from torch import Tensor, nn
from torch.func import functional_call

from .corpus import Example, TaggedSequence, tag_example
from .tokenizer import CharTokenizer

log = logging.getLogger(__name__)

ParameterSet = dict[str, Tensor]

# the freezing scheme that protects target-language generation
DEFAULT_FREEZE = ("token_embeddings", "decoder")


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_positions: int = 514
    dropout: float = 0.0
    extra_layernorm: bool = False
    pad_id: int = 0
    eos_id: int = 1

    def __post_init__(self) -> None:
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_positions"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def expected_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count of :class:`Seq2SeqTransformer`."""
    d, f = cfg.d_model, cfg.d_ff
    attn = 4 * (d * d + d)
    ffn = d * f + f + f * d + d
    ln = 2 * d
    enc_layer = attn + ffn + 2 * ln
    dec_layer = 2 * attn + ffn + 3 * ln
    extra = ln if cfg.extra_layernorm else 0
    enc = cfg.max_positions * d + cfg.n_layers * enc_layer + ln + extra
    dec = cfg.max_positions * d + cfg.n_layers * dec_layer + ln + extra
    return cfg.vocab_size * d + enc + dec


class Attention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.o = nn.Linear(d_model, d_model)

    def forward(self, x: Tensor, mem: Tensor, mask: Tensor) -> Tensor:
        # mask: bool, True where attention is allowed, broadcastable to [B, H, Tq, Tk]
        b, tq, d = x.shape
        h = self.n_heads
        q = self.q(x).view(b, tq, h, d // h).transpose(1, 2)
        k = self.k(mem).view(b, -1, h, d // h).transpose(1, 2)
        v = self.v(mem).view(b, -1, h, d // h).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        scores = scores.masked_fill(~mask, torch.finfo(scores.dtype).min)
        out = torch.softmax(scores, dim=-1) @ v
        return self.o(out.transpose(1, 2).reshape(b, tq, d))


def _ffn(d: int, f: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(d, f), nn.GELU(), nn.Linear(f, d))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = Attention(cfg.d_model, cfg.n_heads)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ff = _ffn(cfg.d_model, cfg.d_ff)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        h = self.norm1(x)
        x = x + self.drop(self.self_attn(h, h, mask))
        return x + self.drop(self.ff(self.norm2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = Attention(cfg.d_model, cfg.n_heads)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = Attention(cfg.d_model, cfg.n_heads)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.ff = _ffn(cfg.d_model, cfg.d_ff)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, y: Tensor, mem: Tensor, self_mask: Tensor, cross_mask: Tensor) -> Tensor:
        h = self.norm1(y)
        y = y + self.drop(self.self_attn(h, h, self_mask))
        y = y + self.drop(self.cross_attn(self.norm2(y), mem, cross_mask))
        return y + self.drop(self.ff(self.norm3(y)))


class Stack(nn.Module):
    def __init__(self, cfg: ModelConfig, layer: type[nn.Module]):
        super().__init__()
        self.position_embeddings = nn.Embedding(cfg.max_positions, cfg.d_model)
        self.embed_norm = nn.LayerNorm(cfg.d_model) if cfg.extra_layernorm else None
        self.layers = nn.ModuleList(layer(cfg) for _ in range(cfg.n_layers))
        self.final_norm = nn.LayerNorm(cfg.d_model)


class Seq2SeqTransformer(nn.Module):
    """Pre-norm encoder-decoder with output projection tied to the token embeddings."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.token_embeddings = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.encoder = Stack(cfg, EncoderLayer)
        self.decoder = Stack(cfg, DecoderLayer)
        self.drop = nn.Dropout(cfg.dropout)
        self.frozen: frozenset[str] = frozenset()

    def _embed(self, ids: Tensor, stack: Stack) -> Tensor:
        if ids.shape[1] > self.cfg.max_positions:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds max_positions={self.cfg.max_positions}")
        pos = torch.arange(ids.shape[1], device=ids.device)
        x = self.token_embeddings(ids) + stack.position_embeddings(pos)[None]
        if stack.embed_norm is not None:
            x = stack.embed_norm(x)
        return self.drop(x)

    def encode(self, src: Tensor) -> Tensor:
        mask = (src != self.cfg.pad_id)[:, None, None, :]
        x = self._embed(src, self.encoder)
        for layer in self.encoder.layers:
            x = layer(x, mask)
        return self.encoder.final_norm(x)

    def decode(self, tgt_in: Tensor, memory: Tensor, src: Tensor) -> Tensor:
        t = tgt_in.shape[1]
        causal = torch.ones(t, t, dtype=torch.bool, device=tgt_in.device).tril()[None, None]
        cross = (src != self.cfg.pad_id)[:, None, None, :]
        y = self._embed(tgt_in, self.decoder)
        for layer in self.decoder.layers:
            y = layer(y, memory, causal, cross)
        y = self.decoder.final_norm(y)
        return y @ self.token_embeddings.weight.T

    def forward(self, src: Tensor, tgt_in: Tensor) -> Tensor:
        return self.decode(tgt_in, self.encode(src), src)

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def init_model(config: ModelConfig, seed: int, dtype: torch.dtype = torch.float32) -> Seq2SeqTransformer:
    """Build a model whose weights depend only on ``config`` and ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = Seq2SeqTransformer(config)
        with torch.no_grad():
            for name, p in model.named_parameters():
                if name.endswith("embeddings.weight"):
                    p.normal_(0.0, 0.02 * math.sqrt(config.d_model))
                elif p.dim() > 1:
                    nn.init.xavier_uniform_(p)
    model = model.to(dtype)
    log.info("initialised model with %d parameters", model.num_parameters())
    return model


def parameter_set(model: nn.Module) -> ParameterSet:
    """Detached copy of every named parameter."""
    return {n: p.detach().clone() for n, p in model.named_parameters()}


def load_parameter_set(model: nn.Module, params: Mapping[str, Tensor]) -> None:
    own = dict(model.named_parameters())
    if set(own) != set(params):
        raise KeyError(f"parameter names differ: {sorted(set(own) ^ set(params))}")
    with torch.no_grad():
        for n, p in own.items():
            p.copy_(params[n])


def parameters_equal(a: Mapping[str, Tensor], b: Mapping[str, Tensor], names: Iterable[str] | None = None) -> bool:
    names = list(a) if names is None else list(names)
    return all(torch.equal(a[n], b[n]) for n in names)


# ---------------------------------------------------------------- freezing


@dataclass(frozen=True)
class FreezeMask:
    """Parameter-name patterns excluded from updates.

    A plain pattern matches the name itself and everything below it
    (``decoder`` matches ``decoder.layers.0.ff.0.weight``); patterns with
    glob characters go through :mod:`fnmatch`.
    """

    patterns: tuple[str, ...] = ()

    def matches(self, pattern: str, name: str) -> bool:
        if any(ch in pattern for ch in "*?["):
            return fnmatch.fnmatchcase(name, pattern)
        return name == pattern or name.startswith(pattern + ".")

    def resolve(self, names: Iterable[str]) -> frozenset[str]:
        names = list(names)
        out: set[str] = set()
        for pat in self.patterns:
            hit = {n for n in names if self.matches(pat, n)}
            if not hit:
                raise ValueError(f"freeze pattern {pat!r} matches no parameter")
            out |= hit
        return frozenset(out)


def apply_freeze(model: Seq2SeqTransformer, mask: FreezeMask) -> Seq2SeqTransformer:
    """Mark matched parameters as frozen; unmatched ones become trainable."""
    frozen = mask.resolve(n for n, _ in model.named_parameters())
    for n, p in model.named_parameters():
        p.requires_grad_(n not in frozen)
        p.grad = None
    model.frozen = frozen
    return model


def trainable_parameters(model: nn.Module) -> list[nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


# ---------------------------------------------------------------- batching and loss


@dataclass
class Batch:
    src: Tensor
    tgt_in: Tensor
    tgt_out: Tensor

    def __len__(self) -> int:
        return self.src.shape[0]


def _pad(seqs: Sequence[Sequence[int]], pad_id: int) -> Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), pad_id, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.as_tensor(list(s), dtype=torch.long)
    return out


def collate(pairs: Sequence[tuple[TaggedSequence | Sequence[int], Sequence[int]]], pad_id: int = 0) -> Batch:
    """Pad (input, target) pairs; the decoder input is the target shifted right behind ``pad_id``."""
    if not pairs:
        raise ValueError("empty batch")
    srcs = [p[0].tokens if isinstance(p[0], TaggedSequence) else p[0] for p in pairs]
    tgts = [list(p[1]) for p in pairs]
    if any(len(t) == 0 for t in tgts):
        raise ValueError("empty target sequence")
    return Batch(
        src=_pad(srcs, pad_id),
        tgt_in=_pad([[pad_id] + t[:-1] for t in tgts], pad_id),
        tgt_out=_pad(tgts, pad_id),
    )


def examples_to_batch(examples: Sequence[Example], tokenizer: CharTokenizer, max_source_len: int = 512) -> Batch:
    return collate([tag_example(ex, tokenizer, max_source_len) for ex in examples], tokenizer.pad_id)


def smoothed_cross_entropy(logits: Tensor, targets: Tensor, smoothing: float, ignore_index: int) -> Tensor:
    """Mean label-smoothed cross-entropy over positions where ``targets != ignore_index``.

    The smoothed target puts ``1 - smoothing + smoothing / V`` on the gold class
    and ``smoothing / V`` on every other class.
    """
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"smoothing must be in [0, 1), got {smoothing}")
    logp = torch.log_softmax(logits, dim=-1)
    keep = targets != ignore_index
    if not bool(keep.any()):
        raise ValueError("no non-pad target positions")
    nll = -logp.gather(-1, targets.clamp_min(0).unsqueeze(-1)).squeeze(-1)
    uniform = -logp.mean(dim=-1)
    per_tok = (1.0 - smoothing) * nll + smoothing * uniform
    return per_tok[keep].mean()


def sequence_loss(
    model: Seq2SeqTransformer,
    batch: Batch,
    smoothing: float = 0.1,
    params: Mapping[str, Tensor] | None = None,
) -> Tensor:
    if params is None:
        logits = model(batch.src, batch.tgt_in)
    else:
        logits = functional_call(model, dict(params), (batch.src, batch.tgt_in))
    return smoothed_cross_entropy(logits, batch.tgt_out, smoothing, model.cfg.pad_id)


def loss(
    model: Seq2SeqTransformer,
    input: TaggedSequence | Sequence[TaggedSequence],
    target: Sequence[int] | Sequence[Sequence[int]],
    smoothing: float = 0.1,
) -> Tensor:
    """Label-smoothed loss for one tagged input (or a list of them) and its target ids."""
    if isinstance(input, TaggedSequence):
        pairs = [(input, target)]
    else:
        pairs = list(zip(input, target))
    if any(len(t) == 0 for _, t in pairs):  # type: ignore[arg-type]
        raise ValueError("target is empty")
    return sequence_loss(model, collate(pairs, model.cfg.pad_id), smoothing)  # type: ignore[arg-type]


# ---------------------------------------------------------------- decoding


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 4
    max_len: int = 100
    min_len: int = 1

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError(f"need 1 <= min_len <= max_len, got {self.min_len}, {self.max_len}")


StepFn = Callable[[list[list[int]]], np.ndarray]


def beam_search(step: StepFn, eos_id: int, cfg: DecodeConfig) -> tuple[list[int], float]:
    """Find a high-scoring continuation under summed log-probabilities.

    ``step`` maps a list of prefixes to an ``[n, V]`` array of next-token
    log-probabilities. EOS is masked until ``min_len`` tokens exist; a
    hypothesis that reaches ``max_len`` tokens ends there. No length penalty.
    """
    alive: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[tuple[list[int], float]] = []
    while alive:
        if len(alive[0][0]) >= cfg.max_len:
            finished += alive
            break
        logp = np.asarray(step([toks for toks, _ in alive]), dtype=np.float64)
        cands: list[tuple[float, int, int, bool]] = []
        for bi, (toks, score) in enumerate(alive):
            for v in range(logp.shape[1]):
                if v == eos_id and len(toks) < cfg.min_len:
                    continue
                cands.append((score + float(logp[bi, v]), bi, v, v == eos_id))
        # stable order: score desc, then beam index, then token id
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        for sc, bi, v, is_eos in cands[: cfg.beam_size]:
            if is_eos:
                finished.append((alive[bi][0], sc))
        alive = [(alive[bi][0] + [v], sc) for sc, bi, v, is_eos in cands if not is_eos][: cfg.beam_size]
        if finished and alive and max(s for _, s in finished) >= alive[0][1]:
            break
    best = max(finished, key=lambda h: h[1])
    return best[0], best[1]


def _as_src(input: TaggedSequence | Sequence[int]) -> Tensor:
    toks = input.tokens if isinstance(input, TaggedSequence) else input
    return torch.as_tensor([list(toks)], dtype=torch.long)


@torch.no_grad()
def generate(
    model: Seq2SeqTransformer,
    input: TaggedSequence | Sequence[int],
    cfg: DecodeConfig = DecodeConfig(),
    params: Mapping[str, Tensor] | None = None,
) -> list[int]:
    """Beam-search decode one tagged input; returns ids without the final EOS."""
    src = _as_src(input)
    was_training = model.training
    model.eval()
    try:
        memory = model.encode(src) if params is None else _call(model, params, "encode", src)

        def step(prefixes: list[list[int]]) -> np.ndarray:
            n = len(prefixes)
            tgt_in = torch.tensor([[model.cfg.pad_id] + p for p in prefixes], dtype=torch.long)
            args = (tgt_in, memory.expand(n, -1, -1), src.expand(n, -1))
            logits = model.decode(*args) if params is None else _call(model, params, "decode", *args)
            return torch.log_softmax(logits[:, -1].double(), dim=-1).numpy()

        tokens, _ = beam_search(step, model.cfg.eos_id, cfg)
        return tokens
    finally:
        model.train(was_training)


class _MethodProxy(nn.Module):
    # functional_call only routes through forward(); this forwards to another method
    def __init__(self, inner: nn.Module, method: str):
        super().__init__()
        self.inner = inner
        self.method = method

    def forward(self, *args):
        return getattr(self.inner, self.method)(*args)


def _call(model: Seq2SeqTransformer, params: Mapping[str, Tensor], method: str, *args) -> Tensor:
    proxy = _MethodProxy(model, method)
    return functional_call(proxy, {f"inner.{k}": v for k, v in params.items()}, args)


@torch.no_grad()
def greedy_decode(
    model: Seq2SeqTransformer, inputs: Sequence[TaggedSequence | Sequence[int]], max_len: int, min_len: int = 1
) -> list[list[int]]:
    """Batched argmax decoding; used as the beam-size-1 reference and for fast evaluation."""
    was_training = model.training
    model.eval()
    try:
        src = _pad([i.tokens if isinstance(i, TaggedSequence) else list(i) for i in inputs], model.cfg.pad_id)
        memory = model.encode(src)
        n = src.shape[0]
        out = torch.full((n, 1), model.cfg.pad_id, dtype=torch.long)
        done = torch.zeros(n, dtype=torch.bool)
        results: list[list[int]] = [[] for _ in range(n)]
        for t in range(max_len):
            logits = model.decode(out, memory, src)[:, -1]
            if t < min_len:
                logits[:, model.cfg.eos_id] = -math.inf
            nxt = logits.argmax(dim=-1)
            for i in range(n):
                if not done[i]:
                    if int(nxt[i]) == model.cfg.eos_id:
                        done[i] = True
                    else:
                        results[i].append(int(nxt[i]))
            if bool(done.all()):
                break
            out = torch.cat([out, nxt[:, None]], dim=1)
        return results
    finally:
        model.train(was_training)


# ---------------------------------------------------------------- representations


@torch.no_grad()
def language_tag_representation(
    model: Seq2SeqTransformer,
    lang: str,
    probe_inputs: Sequence[TaggedSequence],
    params: Mapping[str, Tensor] | None = None,
) -> np.ndarray:
    """Mean encoder output over the two tag positions, averaged over probes."""
    if not probe_inputs:
        raise ValueError("empty probe set")
    if any(p.lang != lang for p in probe_inputs):
        raise ValueError(f"probe inputs must all be in {lang!r}")
    was_training = model.training
    model.eval()
    try:
        src = _pad([p.tokens for p in probe_inputs], model.cfg.pad_id)
        mem = model.encode(src) if params is None else _call(model, params, "encode", src)
        per_probe = mem[:, :2].mean(dim=1)
        return per_probe.mean(dim=0).double().numpy()
    finally:
        model.train(was_training)


@dataclass
class ModelBundle:
    """A model together with its tokenizer; what checkpoints hold."""

    model: Seq2SeqTransformer
    tokenizer: CharTokenizer
    provenance: list[dict] = field(default_factory=list)
