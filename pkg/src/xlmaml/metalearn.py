"""MAML: m-step inner adaptation on support sets, meta-update on query losses.

The engine is model-agnostic. A task loss is any callable
``loss_fn(params, data) -> scalar tensor`` where ``params`` maps parameter
names to tensors; the inner loop builds adapted parameter dictionaries
functionally and never writes to the originals.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import torch
from torch import Tensor

from .corpus import Dataset, TaskBatch, language_counts, sample_task_batch

log = logging.getLogger(__name__)

LossFn = Callable[[Mapping[str, Tensor], Any], Tensor]


class DivergenceError(RuntimeError):
    """A loss became non-finite during training."""


@dataclass
class MetaConfig:
    alpha: float = 1e-4
    beta: float = 1e-5
    m: int = 2
    batch_size: int = 8
    tasks_per_meta_batch: int = 4
    support_fraction: float = 0.5
    epochs: int = 10
    order: str = "second"
    outer_optimizer: str = "adamw"
    weight_decay: float = 0.0
    smoothing: float = 0.1
    # None: one epoch covers every meta-train example once in expectation
    steps_per_epoch: int | None = None

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta <= 0:
            raise ValueError("alpha must be >= 0 and beta > 0")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.tasks_per_meta_batch < 1:
            raise ValueError("tasks_per_meta_batch must be >= 1")
        if self.order not in ("first", "second"):
            raise ValueError(f"order must be 'first' or 'second', got {self.order!r}")
        if self.outer_optimizer not in ("sgd", "adamw"):
            raise ValueError(f"outer_optimizer must be 'sgd' or 'adamw', got {self.outer_optimizer!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdaptedParams:
    tensors: dict[str, Tensor]
    origin: Mapping[str, Tensor]
    steps_taken: int


def inner_adapt(
    loss_fn: LossFn,
    theta: Mapping[str, Tensor],
    support: Any,
    alpha: float,
    m: int,
    frozen: Iterable[str] = (),
    track_higher_order: bool = True,
) -> AdaptedParams:
    """Run ``m`` plain SGD steps on the support loss, functionally.

    With ``track_higher_order`` the graph through every step is kept so the
    outer gradient can differentiate through the adaptation. Otherwise the
    step directions are constants and only the identity path back to
    ``theta`` survives (first-order MAML). Frozen names are carried through
    as the very same tensors.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    frozen = set(frozen)
    fast = dict(theta)
    names = [n for n in fast if n not in frozen]
    for n in names:
        if not fast[n].requires_grad:
            # plain tensors still adapt; the alias is never written in place
            fast[n] = fast[n].detach().requires_grad_(True)
    for step in range(m):
        loss = loss_fn(fast, support)
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite support loss at inner step {step}")
        if alpha == 0.0:
            continue
        wrt = [fast[n] for n in names]
        needs = [t.requires_grad for t in wrt]
        grads = torch.autograd.grad(
            loss,
            [t for t, r in zip(wrt, needs) if r],
            create_graph=track_higher_order,
            allow_unused=True,
        )
        it = iter(grads)
        for n, r in zip(names, needs):
            g = next(it) if r else None
            if g is not None:
                if not track_higher_order:
                    g = g.detach()
                fast[n] = fast[n] - alpha * g
    return AdaptedParams(fast, theta, m)


def meta_gradient(
    loss_fn: LossFn,
    theta: Mapping[str, Tensor],
    tasks: Sequence[Any],
    alpha: float,
    m: int,
    order: str = "second",
    frozen: Iterable[str] = (),
) -> tuple[dict[str, Tensor], float]:
    """Gradient of the mean post-adaptation query loss w.r.t. the original ``theta``.

    ``tasks`` holds objects with ``support`` and ``query`` attributes. Frozen
    names get no gradient entry. Returns ``(grads, mean_query_loss)``.
    """
    if not tasks:
        raise ValueError("empty task list")
    frozen = set(frozen)
    names = [n for n in theta if n not in frozen]
    leaves = {n: (t.detach().requires_grad_(True) if n in names else t.detach()) for n, t in theta.items()}
    total = {n: torch.zeros_like(leaves[n]) for n in names}
    losses = []
    for task in tasks:
        adapted = inner_adapt(loss_fn, leaves, task.support, alpha, m, frozen, order == "second")
        q = loss_fn(adapted.tensors, task.query)
        if not torch.isfinite(q):
            raise DivergenceError("non-finite query loss")
        grads = torch.autograd.grad(q, [leaves[n] for n in names], allow_unused=True)
        for n, g in zip(names, grads):
            if g is not None:
                total[n] += g
        losses.append(float(q.detach()))
    scale = 1.0 / len(tasks)
    return {n: g * scale for n, g in total.items()}, sum(losses) * scale


def make_outer_optimizer(params: Sequence[Tensor], cfg: MetaConfig) -> torch.optim.Optimizer:
    if cfg.outer_optimizer == "sgd":
        return torch.optim.SGD(params, lr=cfg.beta, weight_decay=cfg.weight_decay)
    return torch.optim.AdamW(params, lr=cfg.beta, weight_decay=cfg.weight_decay)


def meta_step(
    loss_fn: LossFn,
    theta: Mapping[str, Tensor],
    tasks: Sequence[Any],
    cfg: MetaConfig,
    frozen: Iterable[str] = (),
    optimizer: torch.optim.Optimizer | None = None,
) -> tuple[dict[str, Tensor], float]:
    """One MetaUpdate. Returns the updated parameters and the pre-update meta-loss.

    ``theta`` tensors are updated in place when an ``optimizer`` over them is
    supplied (the stateful path used by :func:`meta_train`); otherwise a plain
    ``theta - beta * grad`` step is returned as new tensors and ``theta`` is
    left untouched. Frozen names are never changed.
    """
    frozen = set(frozen)
    grads, meta_loss = meta_gradient(loss_fn, theta, tasks, cfg.alpha, cfg.m, cfg.order, frozen)
    if optimizer is None:
        if cfg.outer_optimizer != "sgd":
            raise ValueError("stateless meta_step supports only the sgd outer optimizer")
        new = {
            n: (t.detach() - cfg.beta * (grads[n] + cfg.weight_decay * t.detach())) if n in grads else t
            for n, t in theta.items()
        }
        return new, meta_loss
    optimizer.zero_grad(set_to_none=True)
    for n, t in theta.items():
        if n in grads:
            t.grad = grads[n].to(t.dtype)
    optimizer.step()
    return dict(theta), meta_loss


@dataclass
class MetaTrainState:
    step: int = 0
    epoch: int = 0
    history: list[dict] = field(default_factory=list)


Callback = Callable[[dict], None]


def steps_per_epoch(meta_sets: Mapping[str, Dataset], cfg: MetaConfig) -> int:
    if cfg.steps_per_epoch is not None:
        return cfg.steps_per_epoch
    n = sum(len(ds) for ds in meta_sets.values())
    return max(1, math.ceil(n / (cfg.batch_size * cfg.tasks_per_meta_batch)))


def meta_train(
    params: Mapping[str, torch.nn.Parameter],
    loss_fn: LossFn,
    meta_sets: Mapping[str, Dataset],
    cfg: MetaConfig,
    frozen: Iterable[str] = (),
    rng: random.Random | None = None,
    callbacks: Sequence[Callback] = (),
) -> MetaTrainState:
    """Run ``cfg.epochs`` epochs of sampled task batches through :func:`meta_step`.

    ``params`` are the live model parameters; they are updated in place by
    the outer optimizer. Each callback receives
    ``{step, epoch, lang_counts, meta_loss}`` after every meta-update.
    """
    rng = rng or random.Random(0)
    frozen = set(frozen)
    trainable = [p for n, p in params.items() if n not in frozen]
    state = MetaTrainState()
    if cfg.epochs == 0 or not trainable:
        return state
    opt = make_outer_optimizer(trainable, cfg)
    per_epoch = steps_per_epoch(meta_sets, cfg)
    for epoch in range(cfg.epochs):
        for _ in range(per_epoch):
            tasks = [
                sample_task_batch(meta_sets, cfg.batch_size, rng, cfg.support_fraction)
                for _ in range(cfg.tasks_per_meta_batch)
            ]
            _, meta_loss = meta_step(loss_fn, params, tasks, cfg, frozen, opt)
            state.step += 1
            record = {
                "step": state.step,
                "epoch": epoch,
                "lang_counts": language_counts(tasks),
                "meta_loss": meta_loss,
            }
            state.history.append(record)
            for cb in callbacks:
                cb(record)
        state.epoch = epoch + 1
    return state


def few_shot_adapt(
    params: Mapping[str, Tensor],
    loss_fn: LossFn,
    support: Any,
    steps: int,
    lr: float,
    frozen: Iterable[str] = (),
) -> dict[str, Tensor]:
    """Plain supervised SGD on ``support``; returns an adapted detached copy."""
    if not support:
        raise ValueError("empty support set")
    frozen = set(frozen)
    current = {n: t.detach().clone() for n, t in params.items()}
    if steps == 0 or lr == 0.0:
        return current
    for step in range(steps):
        leaves = {n: (t.requires_grad_(True) if n not in frozen else t) for n, t in current.items()}
        loss = loss_fn(leaves, support)
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite loss at adaptation step {step}")
        names = [n for n in leaves if n not in frozen]
        grads = torch.autograd.grad(loss, [leaves[n] for n in names], allow_unused=True)
        with torch.no_grad():
            for n, g in zip(names, grads):
                if g is not None:
                    current[n] = (leaves[n] - lr * g).detach()
                else:
                    current[n] = leaves[n].detach()
    return current


class JsonlLogger:
    """Callback that appends every record to a JSONL file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")

    def __call__(self, record: dict) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
