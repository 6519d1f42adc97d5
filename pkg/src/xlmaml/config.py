"""Declarative run configuration: one JSON file with a section per stage."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .metalearn import MetaConfig
from .model import DEFAULT_FREEZE


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""


@dataclass
class DataSection:
    task: str = "transduction"
    english_lang: str = "en"
    # lang -> monolingual text file
    mono: dict[str, str] = field(default_factory=dict)
    # split -> file for the high-resource fine-tuning language
    english: dict[str, str] = field(default_factory=dict)
    # lang -> file of candidate meta-training data (validation splits)
    meta: dict[str, str] = field(default_factory=dict)
    # lang -> test file
    test: dict[str, str] = field(default_factory=dict)


@dataclass
class TokenizerSection:
    n_sentinels: int = 8
    # None: collect characters from every data file
    chars: str | None = None


@dataclass
class ModelSection:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_positions: int = 514
    dropout: float = 0.0
    extra_layernorm: bool = False


@dataclass
class ClusterSection:
    vectors: str | None = None
    k: int = 3
    linkage: str = "average"
    output: str = "clusters.json"
    # lang -> 0-based cluster index for languages without vectors
    unrepresented: dict[str, int] = field(default_factory=dict)


@dataclass
class PretrainSection:
    steps: int = 1500
    lr: float = 3e-3
    batch_size: int = 32
    per_lang: dict[str, int] = field(default_factory=lambda: {"train": 1500, "valid": 100, "test": 100})
    corruption_rate: float = 0.15
    mean_span: float = 3.0
    smoothing: float = 0.1
    init: str | None = None


@dataclass
class FinetuneSection:
    steps: int = 1500
    lr: float = 3e-3
    batch_size: int = 32
    smoothing: float = 0.1
    weight_decay: float = 0.0


@dataclass
class MetaSection(MetaConfig):
    # None: the centroids from the cluster file
    languages: list[str] | None = None
    ablation: bool = False


@dataclass
class BaselineSection:
    # steps and batch size always mirror the meta-training budget
    lr: float | None = None


@dataclass
class DecodeSection:
    beam_size: int = 4
    max_len: int = 100
    min_len: int = 1


@dataclass
class EvaluateSection:
    metric: str = "rouge_l"
    # None: every test language not used for meta-training or fine-tuning
    languages: list[str] | None = None
    checkpoints: list[str] = field(default_factory=lambda: ["english_finetune", "baseline_ft", "meta_train"])
    allow_overlap: bool = False
    dump_outputs: bool = False


@dataclass
class AnalyzeSection:
    languages: list[str] | None = None
    probes: int = 20
    checkpoints: list[str] = field(default_factory=lambda: ["english_finetune", "baseline_ft", "meta_train"])


SECTIONS = {
    "data": DataSection,
    "tokenizer": TokenizerSection,
    "model": ModelSection,
    "cluster": ClusterSection,
    "pretrain": PretrainSection,
    "finetune": FinetuneSection,
    "meta": MetaSection,
    "baseline_ft": BaselineSection,
    "decode": DecodeSection,
    "evaluate": EvaluateSection,
    "analyze": AnalyzeSection,
}


@dataclass
class RunConfig:
    seed: int
    workdir: str
    freeze: list[str] = field(default_factory=lambda: list(DEFAULT_FREEZE))
    data: DataSection = field(default_factory=DataSection)
    tokenizer: TokenizerSection = field(default_factory=TokenizerSection)
    model: ModelSection = field(default_factory=ModelSection)
    cluster: ClusterSection = field(default_factory=ClusterSection)
    pretrain: PretrainSection = field(default_factory=PretrainSection)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)
    meta: MetaSection = field(default_factory=MetaSection)
    baseline_ft: BaselineSection = field(default_factory=BaselineSection)
    decode: DecodeSection = field(default_factory=DecodeSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    analyze: AnalyzeSection = field(default_factory=AnalyzeSection)
    # directory relative paths are resolved against; not serialized
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def path(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def run_dir(self) -> Path:
        return self.path(self.workdir)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _section(cls: type, raw: Any, name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"section {name!r}: unknown key(s) {unknown}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def from_dict(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("seed", "workdir"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    top = {"seed", "workdir", "freeze", *SECTIONS}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    if not isinstance(raw["seed"], int) or isinstance(raw["seed"], bool):
        raise ConfigError("seed must be an integer")
    kwargs: dict[str, Any] = {"seed": raw["seed"], "workdir": str(raw["workdir"])}
    if "freeze" in raw:
        if not isinstance(raw["freeze"], list) or not all(isinstance(p, str) for p in raw["freeze"]):
            raise ConfigError("freeze must be a list of parameter-name patterns")
        kwargs["freeze"] = list(raw["freeze"])
    for name, cls in SECTIONS.items():
        if name in raw:
            kwargs[name] = _section(cls, raw[name], name)
    cfg = RunConfig(**kwargs, base_dir=Path(base_dir))
    if cfg.cluster.linkage not in ("average", "complete", "single"):
        raise ConfigError(f"unknown linkage {cfg.cluster.linkage!r}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return from_dict(raw, path.parent)
