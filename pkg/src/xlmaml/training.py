"""Supervised training loops: denoising pre-training and plain fine-tuning."""

from __future__ import annotations

import logging
import random
from typing import Callable, Mapping, Sequence

import numpy as np
import torch
from torch import Tensor

from .corpus import Dataset, Example, span_corrupt
from .metalearn import DivergenceError, LossFn
from .model import Batch, Seq2SeqTransformer, collate, examples_to_batch, sequence_loss, trainable_parameters
from .tokenizer import CharTokenizer

log = logging.getLogger(__name__)


def denoising_batch(
    examples: Sequence[Example],
    tokenizer: CharTokenizer,
    rng: np.random.Generator,
    corruption_rate: float = 0.15,
    mean_span: float = 3.0,
    max_source_len: int = 512,
) -> Batch:
    """Span-corrupt each example's text behind its language tags."""
    pairs = []
    sentinels = tokenizer.sentinel_ids
    for ex in examples:
        toks = tokenizer.encode(ex.source)[:max_source_len]
        inp, tgt = span_corrupt(toks, corruption_rate, mean_span, rng, sentinels)
        pairs.append((tokenizer.tag_ids(ex.lang) + inp, tgt + [tokenizer.eos_id]))
    return collate(pairs, tokenizer.pad_id)


def train_steps(
    model: Seq2SeqTransformer,
    next_batch: Callable[[], Batch],
    steps: int,
    lr: float,
    smoothing: float = 0.1,
    weight_decay: float = 0.0,
    callbacks: Sequence[Callable[[dict], None]] = (),
    optimizer: str = "adamw",
) -> list[float]:
    """AdamW (or SGD) over the model's trainable parameters for ``steps`` batches."""
    params = trainable_parameters(model)
    losses: list[float] = []
    if steps == 0 or not params:
        return losses
    if optimizer == "adamw":
        opt: torch.optim.Optimizer = torch.optim.AdamW(params, lr=lr, weight_decay=weight_decay)
    elif optimizer == "sgd":
        opt = torch.optim.SGD(params, lr=lr, weight_decay=weight_decay)
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    model.train()
    for step in range(steps):
        batch = next_batch()
        loss = sequence_loss(model, batch, smoothing)
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at step {step}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
        for cb in callbacks:
            cb({"step": step + 1, "loss": losses[-1]})
    return losses


def pretrain_denoising(
    model: Seq2SeqTransformer,
    tokenizer: CharTokenizer,
    corpus: Dataset,
    steps: int,
    lr: float,
    batch_size: int,
    seed: int,
    corruption_rate: float = 0.15,
    mean_span: float = 3.0,
    smoothing: float = 0.1,
    callbacks: Sequence[Callable[[dict], None]] = (),
) -> list[float]:
    rng = random.Random(seed)
    nrng = np.random.default_rng(seed)
    examples = corpus.examples

    def next_batch() -> Batch:
        picked = rng.sample(examples, min(batch_size, len(examples)))
        return denoising_batch(picked, tokenizer, nrng, corruption_rate, mean_span)

    return train_steps(model, next_batch, steps, lr, smoothing, callbacks=callbacks)


def finetune(
    model: Seq2SeqTransformer,
    tokenizer: CharTokenizer,
    examples: Sequence[Example],
    steps: int,
    lr: float,
    batch_size: int,
    seed: int,
    smoothing: float = 0.1,
    weight_decay: float = 0.0,
    callbacks: Sequence[Callable[[dict], None]] = (),
) -> list[float]:
    rng = random.Random(seed)
    examples = list(examples)

    def next_batch() -> Batch:
        return examples_to_batch(rng.sample(examples, min(batch_size, len(examples))), tokenizer)

    return train_steps(model, next_batch, steps, lr, smoothing, weight_decay, callbacks)


def seq2seq_loss_fn(model: Seq2SeqTransformer, tokenizer: CharTokenizer, smoothing: float = 0.1) -> LossFn:
    """Adapter turning a model into the ``loss_fn(params, examples)`` the meta-learner expects."""

    def loss_fn(params: Mapping[str, Tensor], examples: Sequence[Example]) -> Tensor:
        return sequence_loss(model, examples_to_batch(list(examples), tokenizer), smoothing, params)

    return loss_fn


@torch.no_grad()
def evaluate_loss(model: Seq2SeqTransformer, tokenizer: CharTokenizer, examples: Sequence[Example], smoothing: float = 0.0) -> float:
    model.eval()
    try:
        return float(sequence_loss(model, examples_to_batch(list(examples), tokenizer), smoothing))
    finally:
        model.train()
