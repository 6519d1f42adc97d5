"""Checkpoints carrying weights, tokenizer and stage provenance."""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path
from typing import Mapping, Sequence

import torch
from torch import Tensor

from .model import ModelConfig, Seq2SeqTransformer, init_model
from .tokenizer import CharTokenizer

log = logging.getLogger(__name__)

STAGES = ("adaptive_pretrain", "english_finetune", "meta_train", "baseline_ft")
# stage -> stage that must appear earlier in the provenance
REQUIRES = {
    "adaptive_pretrain": None,
    "english_finetune": "adaptive_pretrain",
    "meta_train": "english_finetune",
    "baseline_ft": "english_finetune",
}
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """A checkpoint is unreadable, corrupted or out of pipeline order."""


def params_sha256(state: Mapping[str, Tensor]) -> str:
    """Hash of names, dtypes, shapes and raw bytes, in sorted name order."""
    h = hashlib.sha256()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(f"{name}|{t.dtype}|{tuple(t.shape)}|".encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def provenance_entry(stage: str, state: Mapping[str, Tensor], config: dict, **extra) -> dict:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    entry = {"stage": stage, "params_sha256": params_sha256(state), "config": config}
    entry.update(extra)
    return entry


def stage_order_problem(provenance: Sequence[dict], stage: str) -> str | None:
    """Describe why ``stage`` may not follow ``provenance``, or None if it may."""
    done = [p["stage"] for p in provenance]
    need = REQUIRES[stage]
    if need is not None and need not in done:
        return f"stage {stage!r} expects a checkpoint with {need!r} provenance; found {done or 'none'}"
    if stage in done:
        return f"stage {stage!r} was already applied to this checkpoint"
    if stage in ("meta_train", "baseline_ft") and {"meta_train", "baseline_ft"} & set(done):
        return f"stage {stage!r} applied on top of {done[-1]!r}"
    return None


def save_checkpoint(
    path: str | Path,
    model: Seq2SeqTransformer,
    tokenizer: CharTokenizer,
    provenance: Sequence[dict],
) -> None:
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    if provenance and provenance[-1]["params_sha256"] != params_sha256(state):
        raise CheckpointError("last provenance entry does not describe these parameters")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {
        "format": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "state_dict": state,
        "tokenizer": tokenizer.to_dict(),
        "provenance": list(provenance),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(blob, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[Seq2SeqTransformer, CharTokenizer, list[dict]]:
    """Rebuild the model and verify its weights against the recorded hash."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: no such checkpoint")
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises several unrelated types here
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
    if blob.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format {blob.get('format')!r}")
    cfg = ModelConfig(**blob["model_config"])
    state = blob["state_dict"]
    dtype = next(iter(state.values())).dtype
    model = init_model(cfg, 0, dtype=dtype)
    model.load_state_dict(state)
    provenance = list(blob["provenance"])
    if provenance and provenance[-1]["params_sha256"] != params_sha256(model.state_dict()):
        raise CheckpointError(f"{path}: parameter hash does not match provenance")
    return model, CharTokenizer.from_dict(blob["tokenizer"]), provenance
