"""Command-line pipeline: cluster, synth, pretrain, finetune, meta-train, baseline-ft, evaluate, analyze."""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import fcntl
import json
import logging
import random
import sys
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

from .checkpoint import CheckpointError, load_checkpoint, provenance_entry, save_checkpoint, stage_order_problem
from .config import ConfigError, RunConfig, load_config
from .corpus import DataError, Dataset, build_multimonolang, load_dataset, read_lines, sample_task_batch
from .evaluation import (
    ContaminationError,
    EvalReport,
    average_reports,
    format_table,
    heat_table,
    matrix_to_csv,
    mean_off_diagonal,
    tag_distance_matrix,
    zero_shot_evaluate,
)
from .langspace import (
    ClusterSet,
    LanguageSpaceError,
    assign_centroids,
    assign_unrepresented,
    cluster_languages,
    format_report,
    load_language_vectors,
)
from .metalearn import DivergenceError, JsonlLogger, MetaConfig, meta_train, steps_per_epoch
from .model import DecodeConfig, FreezeMask, ModelConfig, apply_freeze, examples_to_batch, init_model
from .synth import ALPHABET, SynthConfig, generate_benchmark
from .tokenizer import CharTokenizer, TokenizerError
from .training import evaluate_loss, finetune, pretrain_denoising, seq2seq_loss_fn, train_steps

log = logging.getLogger("xlmaml")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_CONTAMINATION = 5

CHECKPOINT_NAMES = {
    "adaptive_pretrain": "adaptive_pretrain.pt",
    "english_finetune": "english_finetune.pt",
    "meta_train": "meta_train.pt",
    "baseline_ft": "baseline_ft.pt",
}


# ---------------------------------------------------------------- plumbing


@contextlib.contextmanager
def run_lock(run_dir: Path) -> Iterator[None]:
    """Exclusive ownership of a run directory for the duration of one command."""
    run_dir.mkdir(parents=True, exist_ok=True)
    with (run_dir / ".lock").open("w") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise ConfigError(f"{run_dir} is locked by another xlmaml process") from None
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def checkpoint_path(cfg: RunConfig, stage: str) -> Path:
    return cfg.run_dir / CHECKPOINT_NAMES[stage]


def check_order(provenance: list[dict], stage: str, args: argparse.Namespace) -> None:
    """Warn about out-of-order stages; refuse under --strict, or always for a missing fine-tune."""
    problem = stage_order_problem(provenance, stage)
    if problem is None:
        return
    done = {p["stage"] for p in provenance}
    hard = stage in ("meta_train", "baseline_ft") and "english_finetune" not in done
    if args.force:
        log.warning("%s (continuing because of --force)", problem)
    elif args.strict or hard:
        raise ConfigError(problem + "; pass --force to override")
    else:
        log.warning(problem)


def load_input(cfg: RunConfig, args: argparse.Namespace, default_stage: str):
    path = Path(args.input) if args.input else checkpoint_path(cfg, default_stage)
    return load_checkpoint(path)


def data_files(cfg: RunConfig) -> list[tuple[str, str, Path]]:
    """Every supervised data file as (lang, split, path)."""
    out = [(cfg.data.english_lang, split, cfg.path(p)) for split, p in sorted(cfg.data.english.items())]
    out += [(lang, "valid", cfg.path(p)) for lang, p in sorted(cfg.data.meta.items())]
    out += [(lang, "test", cfg.path(p)) for lang, p in sorted(cfg.data.test.items())]
    return out


def build_tokenizer(cfg: RunConfig) -> CharTokenizer:
    langs = {cfg.data.english_lang, *cfg.data.mono, *cfg.data.meta, *cfg.data.test}
    if cfg.tokenizer.chars is not None:
        chars = set(cfg.tokenizer.chars)
    else:
        chars = set()
        for lang, path in sorted(cfg.data.mono.items()):
            p = cfg.path(path)
            if not p.exists():
                raise DataError(f"{p}: monolingual file for {lang!r} not found")
            for line in read_lines(p):
                chars.update(line)
        for lang, split, path in data_files(cfg):
            for ex in load_dataset(path, cfg.data.task, lang, split):
                chars.update(ex.source)
                chars.update(ex.target)
    return CharTokenizer(sorted(langs), sorted(chars), cfg.tokenizer.n_sentinels)


def model_config(cfg: RunConfig, tokenizer: CharTokenizer) -> ModelConfig:
    m = cfg.model
    return ModelConfig(
        vocab_size=tokenizer.vocab_size,
        d_model=m.d_model,
        n_layers=m.n_layers,
        n_heads=m.n_heads,
        d_ff=m.d_ff,
        max_positions=m.max_positions,
        dropout=m.dropout,
        extra_layernorm=m.extra_layernorm,
        pad_id=tokenizer.pad_id,
        eos_id=tokenizer.eos_id,
    )


def meta_config(cfg: RunConfig, order: str | None) -> MetaConfig:
    own = {f.name for f in dataclasses.fields(MetaConfig)}
    values = {k: v for k, v in dataclasses.asdict(cfg.meta).items() if k in own}
    if order:
        values["order"] = order
    return MetaConfig(**values)


def cluster_file(cfg: RunConfig) -> Path:
    return cfg.run_dir / cfg.cluster.output


def centroid_languages(cfg: RunConfig) -> list[str] | None:
    path = cluster_file(cfg)
    if not path.exists():
        return None
    try:
        return ClusterSet.load(path).centroids
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable cluster file ({exc})") from None


def meta_languages(cfg: RunConfig) -> tuple[list[str], bool]:
    """Languages used for meta-training and whether that is an ablation."""
    centroids = centroid_languages(cfg)
    if cfg.meta.languages is None:
        if centroids is None:
            raise ConfigError(f"meta.languages is unset and no cluster file at {cluster_file(cfg)}; run `cluster` first")
        langs = sorted(centroids)
    else:
        langs = sorted(cfg.meta.languages)
    outside = sorted(set(langs) - set(centroids or []))
    if outside and centroids is not None and not cfg.meta.ablation:
        raise ConfigError(f"meta-train language(s) {outside} are not centroids; set meta.ablation to run anyway")
    if centroids is None and not cfg.meta.ablation:
        log.warning("no cluster file; cannot check that %s are centroids", langs)
    missing = [l for l in langs if l not in cfg.data.meta]
    if missing:
        raise ConfigError(f"no data.meta file for meta-train language(s) {missing}")
    return langs, bool(outside) or (cfg.meta.ablation and centroids is None)


def load_meta_sets(cfg: RunConfig, langs: Sequence[str]) -> dict[str, Dataset]:
    return {l: load_dataset(cfg.path(cfg.data.meta[l]), cfg.data.task, l, "valid") for l in langs}


def save_stage(cfg: RunConfig, stage: str, model, tokenizer, provenance: list[dict], config: dict, **extra) -> Path:
    entry = provenance_entry(stage, model.state_dict(), config, **extra)
    path = checkpoint_path(cfg, stage)
    save_checkpoint(path, model, tokenizer, provenance + [entry])
    log.info("wrote %s (%s)", path, entry["params_sha256"][:12])
    return path


# ---------------------------------------------------------------- commands


def cmd_cluster(cfg: RunConfig, args: argparse.Namespace) -> int:
    if not cfg.cluster.vectors:
        raise ConfigError("cluster.vectors is not set")
    space = load_language_vectors(cfg.path(cfg.cluster.vectors))
    try:
        clusters = cluster_languages(space, cfg.cluster.k, cfg.cluster.linkage)
        for lang, idx in sorted(cfg.cluster.unrepresented.items()):
            assign_unrepresented(clusters, lang, idx)
    except (ValueError, IndexError) as exc:
        raise ConfigError(str(exc)) from None
    assign_centroids(clusters, space)
    out = cluster_file(cfg)
    clusters.save(out)
    print(format_report(clusters, space).rstrip("\n"))
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        raw = raw.get("synth", raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.task:
        raw["task"] = args.task
    try:
        scfg = SynthConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synth config: {exc}") from None
    out = Path(args.out)
    manifest = generate_benchmark(scfg, out)
    template = synth_run_template(scfg, manifest)
    (out / "run.json").write_text(json.dumps(template, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(manifest['languages'])} languages to {out}; run config template at {out / 'run.json'}")
    return EXIT_OK


def synth_run_template(scfg: SynthConfig, manifest: dict) -> dict:
    """A run config sized for the synthetic benchmark, relative to the benchmark directory."""
    langs = manifest["languages"]
    english = manifest["english"]
    clustered = sorted(l for l in langs if l != english)
    return {
        "seed": scfg.seed,
        "workdir": "run",
        "data": {
            "task": "transduction",
            "english_lang": english,
            "mono": {l: langs[l]["files"]["mono"] for l in sorted(langs)},
            "english": {s: langs[english]["files"][s] for s in ("train", "valid", "test")},
            "meta": {l: langs[l]["files"]["valid"] for l in clustered},
            "test": {l: langs[l]["files"]["test"] for l in clustered},
        },
        "tokenizer": {"n_sentinels": 8, "chars": ALPHABET[: scfg.n_symbols]},
        "model": {"d_model": 64, "n_layers": 2, "n_heads": 4, "d_ff": 128, "max_positions": 32},
        "cluster": {"vectors": manifest["vectors"], "k": scfg.n_clusters, "linkage": "average"},
        "pretrain": {"steps": 1500, "lr": 3e-3, "batch_size": 32, "per_lang": {"train": 1500, "valid": 100, "test": 100}},
        "finetune": {"steps": 1500, "lr": 3e-3, "batch_size": 32},
        "meta": {
            "alpha": 0.01,
            "beta": 1e-3,
            "m": 2,
            "batch_size": 8,
            "tasks_per_meta_batch": 4,
            "epochs": 1,
            "steps_per_epoch": 300,
            "order": "second",
            "outer_optimizer": "adamw",
        },
        "baseline_ft": {"lr": None},
        "decode": {"beam_size": 1, "max_len": 2 * scfg.seq_max, "min_len": 1},
        "evaluate": {"metric": "accuracy"},
        "analyze": {"probes": 20},
    }


def cmd_pretrain(cfg: RunConfig, args: argparse.Namespace) -> int:
    p = cfg.pretrain
    seed_everything(cfg.seed)
    if p.init:
        model, tokenizer, provenance = load_checkpoint(cfg.path(p.init))
    else:
        tokenizer = build_tokenizer(cfg)
        model, provenance = init_model(model_config(cfg, tokenizer), cfg.seed), []
    check_order(provenance, "adaptive_pretrain", args)
    if not cfg.data.mono:
        raise ConfigError("data.mono lists no monolingual files")
    corpus = build_multimonolang({l: cfg.path(f) for l, f in cfg.data.mono.items()}, p.per_lang, cfg.seed)
    logger = JsonlLogger(cfg.run_dir / "logs" / "pretrain.jsonl")
    losses = pretrain_denoising(
        model, tokenizer, corpus["train"], p.steps, p.lr, p.batch_size, cfg.seed,
        p.corruption_rate, p.mean_span, p.smoothing, callbacks=[logger],
    )
    if losses:
        log.info("denoising loss %.4f -> %.4f", losses[0], float(np.mean(losses[-20:])))
    save_stage(cfg, "adaptive_pretrain", model, tokenizer, provenance, dataclasses.asdict(p), languages=sorted(cfg.data.mono))
    return EXIT_OK


def cmd_finetune(cfg: RunConfig, args: argparse.Namespace) -> int:
    f = cfg.finetune
    seed_everything(cfg.seed)
    model, tokenizer, provenance = load_input(cfg, args, "adaptive_pretrain")
    check_order(provenance, "english_finetune", args)
    apply_freeze(model, FreezeMask(tuple(cfg.freeze)))
    lang = cfg.data.english_lang
    if "train" not in cfg.data.english:
        raise ConfigError("data.english has no 'train' file")
    train = load_dataset(cfg.path(cfg.data.english["train"]), cfg.data.task, lang, "train")
    valid = None
    if "valid" in cfg.data.english:
        valid = load_dataset(cfg.path(cfg.data.english["valid"]), cfg.data.task, lang, "valid").examples
    before = evaluate_loss(model, tokenizer, valid) if valid else None
    logger = JsonlLogger(cfg.run_dir / "logs" / "finetune.jsonl")
    finetune(model, tokenizer, train.examples, f.steps, f.lr, f.batch_size, cfg.seed, f.smoothing, f.weight_decay, [logger])
    after = evaluate_loss(model, tokenizer, valid) if valid else None
    if valid:
        log.info("held-out %s loss %.4f -> %.4f", lang, before, after)
    save_stage(
        cfg, "english_finetune", model, tokenizer, provenance, dataclasses.asdict(f),
        freeze=list(cfg.freeze), valid_loss_before=before, valid_loss_after=after,
    )
    return EXIT_OK


def cmd_meta_train(cfg: RunConfig, args: argparse.Namespace) -> int:
    mc = meta_config(cfg, args.order)
    seed_everything(cfg.seed)
    model, tokenizer, provenance = load_input(cfg, args, "english_finetune")
    check_order(provenance, "meta_train", args)
    langs, ablation = meta_languages(cfg)
    meta_sets = load_meta_sets(cfg, langs)
    apply_freeze(model, FreezeMask(tuple(cfg.freeze)))
    per_epoch = steps_per_epoch(meta_sets, mc)
    epoch_dir = cfg.run_dir / "meta_train_epochs"
    epoch_losses: list[float] = []
    epoch_entries: list[dict] = []

    def on_step(record: dict) -> None:
        epoch_losses.append(record["meta_loss"])
        if record["step"] % per_epoch == 0:
            epoch = record["epoch"]
            entry = provenance_entry(
                "meta_train", model.state_dict(), mc.to_dict(), languages=langs, ablation=ablation,
                epoch=epoch, epoch_meta_loss=float(np.mean(epoch_losses)),
            )
            save_checkpoint(epoch_dir / f"epoch_{epoch:03d}.pt", model, tokenizer, provenance + [entry])
            epoch_entries.append(entry)
            epoch_losses.clear()

    logger = JsonlLogger(cfg.run_dir / "logs" / "meta_train.jsonl")
    state = meta_train(
        dict(model.named_parameters()), seq2seq_loss_fn(model, tokenizer, mc.smoothing), meta_sets, mc,
        model.frozen, random.Random(cfg.seed), [logger, on_step],
    )
    if state.history:
        log.info("meta-loss %.4f -> %.4f over %d steps", state.history[0]["meta_loss"], state.history[-1]["meta_loss"], state.step)
    save_stage(
        cfg, "meta_train", model, tokenizer, provenance, mc.to_dict(),
        languages=langs, ablation=ablation, steps=state.step, freeze=list(cfg.freeze),
    )
    return EXIT_OK


def cmd_baseline_ft(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Plain fine-tuning on the meta-training languages under the same budget and sampler."""
    mc = meta_config(cfg, None)
    seed_everything(cfg.seed)
    model, tokenizer, provenance = load_input(cfg, args, "english_finetune")
    check_order(provenance, "baseline_ft", args)
    langs, ablation = meta_languages(cfg)
    meta_sets = load_meta_sets(cfg, langs)
    apply_freeze(model, FreezeMask(tuple(cfg.freeze)))
    steps = mc.epochs * steps_per_epoch(meta_sets, mc)
    lr = cfg.baseline_ft.lr if cfg.baseline_ft.lr is not None else mc.beta
    rng = random.Random(cfg.seed)

    def next_batch():
        examples = []
        for _ in range(mc.tasks_per_meta_batch):
            task = sample_task_batch(meta_sets, mc.batch_size, rng, mc.support_fraction)
            examples += list(task.support) + list(task.query)
        return examples_to_batch(examples, tokenizer)

    logger = JsonlLogger(cfg.run_dir / "logs" / "baseline_ft.jsonl")
    losses = train_steps(model, next_batch, steps, lr, mc.smoothing, mc.weight_decay, [logger], mc.outer_optimizer)
    if losses:
        log.info("baseline loss %.4f -> %.4f over %d steps", losses[0], losses[-1], len(losses))
    save_stage(
        cfg, "baseline_ft", model, tokenizer, provenance,
        {"lr": lr, "optimizer": mc.outer_optimizer, "smoothing": mc.smoothing, "weight_decay": mc.weight_decay},
        languages=langs, ablation=ablation, steps=steps,
        examples_per_step=mc.tasks_per_meta_batch * mc.batch_size, freeze=list(cfg.freeze),
    )
    return EXIT_OK


def trained_languages(provenance: list[dict]) -> set[str]:
    out: set[str] = set()
    for p in provenance:
        if p["stage"] in ("meta_train", "baseline_ft"):
            out |= set(p.get("languages", []))
    return out


def evaluation_languages(cfg: RunConfig) -> list[str]:
    if cfg.evaluate.languages is not None:
        langs = sorted(cfg.evaluate.languages)
    else:
        try:
            exclude, _ = meta_languages(cfg)
        except ConfigError:
            exclude = []
        langs = sorted(set(cfg.data.test) - set(exclude) - {cfg.data.english_lang})
    missing = [l for l in langs if l not in cfg.data.test]
    if missing:
        raise ConfigError(f"no data.test file for language(s) {missing}")
    if not langs:
        raise ConfigError("no evaluation languages left")
    return langs


def best_k_checkpoints(cfg: RunConfig, k: int) -> list[Path]:
    paths = sorted((cfg.run_dir / "meta_train_epochs").glob("epoch_*.pt"))
    scored = []
    for p in paths:
        _, _, prov = load_checkpoint(p)
        scored.append((prov[-1]["epoch_meta_loss"], p.name, p))
    scored.sort()
    return [p for _, _, p in scored[:k]]


def cmd_evaluate(cfg: RunConfig, args: argparse.Namespace) -> int:
    e = cfg.evaluate
    seed_everything(cfg.seed)
    langs = evaluation_languages(cfg)
    tests = {l: load_dataset(cfg.path(cfg.data.test[l]), cfg.data.task, l, "test") for l in langs}
    dc = DecodeConfig(**dataclasses.asdict(cfg.decode))
    report_dir = cfg.run_dir / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    rows: dict[str, EvalReport] = {}
    for stage in e.checkpoints:
        path = checkpoint_path(cfg, stage)
        if not path.exists():
            log.warning("skipping %s: %s not found", stage, path)
            continue
        candidates = [path]
        if stage == "meta_train" and args.best_k and args.best_k > 1:
            candidates = best_k_checkpoints(cfg, args.best_k) or [path]
        reports = []
        for cand in candidates:
            model, tokenizer, provenance = load_checkpoint(cand)
            dump = report_dir / f"{stage}.outputs.jsonl" if e.dump_outputs and cand == candidates[0] else None
            reports.append(
                zero_shot_evaluate(
                    model, tokenizer, tests, dc, e.metric, trained_languages(provenance), e.allow_overlap,
                    provenance, dump,
                )
            )
        report = reports[0] if len(reports) == 1 else average_reports(
            reports, [{"averaged_checkpoints": [c.name for c in candidates]}]
        )
        (report_dir / f"{stage}.json").write_text(report.to_json(), encoding="utf-8")
        rows[stage] = report
    if not rows:
        raise ConfigError(f"none of the checkpoints {e.checkpoints} exist under {cfg.run_dir}")
    table = format_table(rows)
    (report_dir / "summary.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, args: argparse.Namespace) -> int:
    a = cfg.analyze
    langs = sorted(a.languages) if a.languages is not None else sorted(cfg.data.test)
    missing = [l for l in langs if l not in cfg.data.test]
    if missing:
        raise ConfigError(f"no data.test file for language(s) {missing}")
    probes = {
        l: [ex.source for ex in load_dataset(cfg.path(cfg.data.test[l]), cfg.data.task, l, "test").examples[: a.probes]]
        for l in langs
    }
    out_dir = cfg.run_dir / "analysis"
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for stage in a.checkpoints:
        path = checkpoint_path(cfg, stage)
        if not path.exists():
            log.warning("skipping %s: %s not found", stage, path)
            continue
        model, tokenizer, _ = load_checkpoint(path)
        matrix = tag_distance_matrix(model, tokenizer, langs, probes)
        (out_dir / f"{stage}.csv").write_text(matrix_to_csv(langs, matrix), encoding="utf-8")
        (out_dir / f"{stage}.txt").write_text(heat_table(langs, matrix), encoding="utf-8")
        summary[stage] = round(mean_off_diagonal(matrix), 6)
        print(f"{stage}: mean off-diagonal tag distance {summary[stage]:.4f}")
        print(heat_table(langs, matrix), end="")
    if not summary:
        raise ConfigError(f"none of the checkpoints {a.checkpoints} exist under {cfg.run_dir}")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "cluster": cmd_cluster,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "meta-train": cmd_meta_train,
    "baseline-ft": cmd_baseline_ft,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xlmaml", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run config JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--strict", action="store_true", help="stage-order problems are errors")
    common.add_argument("--force", action="store_true", help="proceed despite stage-order problems")
    common.add_argument("--input", help="input checkpoint instead of the run directory's default")

    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "meta-train":
            p.add_argument("--order", choices=["first", "second"], help="override meta.order")
        if name == "evaluate":
            p.add_argument("--best-k", type=int, default=1, help="average meta-train epoch checkpoints with the k lowest meta-losses")

    p = sub.add_parser("synth", help="generate the synthetic permutation benchmark")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON with synthetic-benchmark settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--task", help="base task: copy, reverse, successor or sort")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    torch.set_num_threads(max(1, torch.get_num_threads()))
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        with run_lock(cfg.run_dir):
            (cfg.run_dir / "effective_config.json").write_text(cfg.dumps(), encoding="utf-8")
            return COMMANDS[args.command](cfg, args)
    except (ConfigError, CheckpointError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (DataError, LanguageSpaceError, TokenizerError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except DivergenceError as exc:
        log.error("%s", exc)
        return EXIT_DIVERGENCE
    except ContaminationError as exc:
        log.error("%s", exc)
        return EXIT_CONTAMINATION


if __name__ == "__main__":
    sys.exit(main())
