from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from xlmaml.corpus import Example, TaggedSequence
from xlmaml.model import (
    DEFAULT_FREEZE,
    DecodeConfig,
    FreezeMask,
    ModelConfig,
    apply_freeze,
    beam_search,
    collate,
    examples_to_batch,
    expected_parameter_count,
    generate,
    greedy_decode,
    init_model,
    language_tag_representation,
    loss,
    parameter_set,
    parameters_equal,
    sequence_loss,
    smoothed_cross_entropy,
    trainable_parameters,
)
from xlmaml.tokenizer import CharTokenizer


def tiny(vocab: int = 11, **kw) -> ModelConfig:
    base = dict(vocab_size=vocab, d_model=8, n_layers=1, n_heads=2, d_ff=16, max_positions=16)
    base.update(kw)
    return ModelConfig(**base)


def random_batch(cfg: ModelConfig, seed: int, n: int = 3):
    g = torch.Generator().manual_seed(seed)
    pairs = []
    for _ in range(n):
        ls, lt = (int(x) for x in torch.randint(2, 6, (2,), generator=g))
        src = torch.randint(3, cfg.vocab_size, (ls,), generator=g).tolist()
        tgt = torch.randint(3, cfg.vocab_size, (lt,), generator=g).tolist() + [cfg.eos_id]
        pairs.append((src, tgt))
    return collate(pairs, cfg.pad_id)


# ---------------------------------------------------------------- construction


@pytest.mark.parametrize(
    "cfg",
    [
        tiny(),
        tiny(vocab=50, d_model=16, n_layers=3, n_heads=4, d_ff=24, max_positions=40),
        tiny(extra_layernorm=True),
        ModelConfig(vocab_size=300),
    ],
)
def test_parameter_count_closed_form(cfg: ModelConfig) -> None:
    assert init_model(cfg, 0).num_parameters() == expected_parameter_count(cfg)


def test_config_validation() -> None:
    with pytest.raises(ValueError, match="divisible"):
        tiny(d_model=10, n_heads=4)
    with pytest.raises(ValueError):
        tiny(vocab=0)


def test_init_is_seeded() -> None:
    a, b, c = (parameter_set(init_model(tiny(), s)) for s in (3, 3, 4))
    assert parameters_equal(a, b)
    assert not parameters_equal(a, c)


def test_overlong_input_raises() -> None:
    model = init_model(tiny(max_positions=4), 0)
    with pytest.raises(ValueError, match="max_positions"):
        model.encode(torch.ones(1, 5, dtype=torch.long) * 3)


# ---------------------------------------------------------------- loss


def test_loss_finite_difference_gradient() -> None:
    cfg = tiny()
    model = init_model(cfg, 1, dtype=torch.float64)
    batch = random_batch(cfg, 0)
    out = sequence_loss(model, batch, 0.1)
    out.backward()
    eps = 1e-6
    rng = np.random.default_rng(0)
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        for idx in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
            orig = float(flat[idx])
            with torch.no_grad():
                flat[idx] = orig + eps
                up = float(sequence_loss(model, batch, 0.1))
                flat[idx] = orig - eps
                down = float(sequence_loss(model, batch, 0.1))
                flat[idx] = orig
            fd = (up - down) / (2 * eps)
            an = float(p.grad.view(-1)[idx])
            assert abs(fd - an) <= 1e-6 + 1e-4 * abs(fd), name


def test_pad_positions_do_not_count() -> None:
    cfg = tiny()
    model = init_model(cfg, 2)
    a = (TaggedSequence((3, 4, 5), "x"), [6, 7, 1])
    b = (TaggedSequence((8, 9, 10, 4, 4, 3), "x"), [5, 5, 9, 8, 3, 1])
    with torch.no_grad():
        la, lb = (float(loss(model, s, t, 0.1)) for s, t in (a, b))
        both = float(sequence_loss(model, collate([a, b], cfg.pad_id), 0.1))
    # padding neither attends nor scores: the batch loss is the token-weighted mean
    assert both == pytest.approx((3 * la + 6 * lb) / 9, abs=1e-6)


def test_smoothing_formula() -> None:
    torch.manual_seed(0)
    logits = torch.randn(2, 3, 7)
    targets = torch.tensor([[1, 2, 0], [4, 0, 0]])
    eps = 0.1
    logp = torch.log_softmax(logits, -1)
    keep = [(0, 0), (0, 1), (1, 0)]
    hand = np.mean(
        [-(1 - eps) * float(logp[i, j, targets[i, j]]) - eps * float(logp[i, j].mean()) for i, j in keep]
    )
    assert float(smoothed_cross_entropy(logits, targets, eps, 0)) == pytest.approx(hand, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.floats(0.01, 0.5), st.integers(0, 10**6))
def test_smoothing_floor_is_entropy(vocab, eps, seed) -> None:
    # the loss is cross-entropy against q = (1 - eps) * onehot + eps / V, so its minimum is H(q)
    gold = seed % vocab
    q = torch.full((vocab,), eps / vocab, dtype=torch.float64)
    q[gold] += 1 - eps
    entropy = float(-(q * q.log()).sum())
    targets = torch.tensor([[gold]])
    at_q = float(smoothed_cross_entropy(q.log()[None, None], targets, eps, -1))
    assert at_q == pytest.approx(entropy, abs=1e-9)
    noise = torch.randn(vocab, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)
    elsewhere = float(smoothed_cross_entropy((q.log() + noise)[None, None], targets, eps, -1))
    assert elsewhere >= entropy - 1e-9


def test_empty_target_rejected() -> None:
    model = init_model(tiny(), 0)
    with pytest.raises(ValueError):
        loss(model, TaggedSequence((3, 4), "x"), [], 0.1)


def test_functional_params_match_module() -> None:
    cfg = tiny()
    model = init_model(cfg, 5)
    batch = random_batch(cfg, 1)
    a = sequence_loss(model, batch, 0.1)
    b = sequence_loss(model, batch, 0.1, parameter_set(model))
    assert float(a.detach()) == pytest.approx(float(b.detach()), abs=1e-7)


# ---------------------------------------------------------------- freezing


def test_freeze_mask_resolution() -> None:
    model = init_model(tiny(), 0)
    frozen = FreezeMask(DEFAULT_FREEZE).resolve(n for n, _ in model.named_parameters())
    assert "token_embeddings.weight" in frozen
    assert all(n.startswith("decoder.") or n == "token_embeddings.weight" for n in frozen)
    assert not any(n.startswith("encoder.") for n in frozen)
    glob = FreezeMask(("decoder.layers.*.cross_attn.*",)).resolve(n for n, _ in model.named_parameters())
    assert glob and all(".cross_attn." in n for n in glob)
    with pytest.raises(ValueError, match="matches no parameter"):
        FreezeMask(("nonexistent",)).resolve(n for n, _ in model.named_parameters())
    # "encoder" must not catch a sibling that merely shares the prefix
    assert not FreezeMask(("decode",)).matches("decode", "decoder.final_norm.weight")


def _train(model, cfg, steps: int) -> None:
    opt = torch.optim.AdamW(trainable_parameters(model), lr=1e-2, weight_decay=0.01)
    for s in range(steps):
        out = sequence_loss(model, random_batch(cfg, s), 0.1)
        opt.zero_grad()
        out.backward()
        opt.step()


def test_freeze_invariance_after_training() -> None:
    cfg = tiny()
    model = apply_freeze(init_model(cfg, 0), FreezeMask(DEFAULT_FREEZE))
    before = parameter_set(model)
    _train(model, cfg, 100)
    after = parameter_set(model)
    assert model.frozen
    assert parameters_equal(before, after, model.frozen)
    changed = [n for n in before if n.startswith("encoder.") and not torch.equal(before[n], after[n])]
    assert changed


def test_freeze_everything_is_noop() -> None:
    cfg = tiny()
    model = apply_freeze(init_model(cfg, 0), FreezeMask(("*",)))
    assert trainable_parameters(model) == []


# ---------------------------------------------------------------- decoding


def _table_step(vocab: int, seed: int):
    # next-token log-probs as a fixed function of the prefix
    cache: dict[tuple[int, ...], np.ndarray] = {}

    def row(prefix: tuple[int, ...]) -> np.ndarray:
        if prefix not in cache:
            rng = np.random.default_rng([seed, len(prefix), *prefix])
            x = rng.normal(size=vocab) * 2
            cache[prefix] = x - np.log(np.exp(x).sum())
        return cache[prefix]

    return row, lambda prefixes: np.stack([row(tuple(p)) for p in prefixes])


def _enumerate(row, vocab: int, eos: int, max_len: int, min_len: int):
    best = None
    for length in range(0, max_len + 1):
        for toks in itertools.product([v for v in range(vocab) if v != eos], repeat=length):
            score = sum(row(toks[:i])[toks[i]] for i in range(length))
            if length < max_len:
                if length < min_len:
                    continue
                score += row(toks)[eos]
            if best is None or score > best[1] + 1e-12:
                best = (list(toks), score)
    return best


@pytest.mark.parametrize("seed", range(40))
def test_beam_search_matches_exhaustive(seed: int) -> None:
    vocab, eos = 3, 0
    row, step = _table_step(vocab, seed)
    toks, score = beam_search(step, eos, DecodeConfig(beam_size=vocab**2, max_len=2, min_len=1))
    want = _enumerate(row, vocab, eos, 2, 1)
    assert toks == want[0]
    assert score == pytest.approx(want[1], abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_beam_one_is_greedy_on_table(seed: int) -> None:
    vocab, eos = 4, 1
    row, step = _table_step(vocab, seed)
    toks: list[int] = []
    while len(toks) < 6:
        lp = row(tuple(toks)).copy()
        if len(toks) < 2:
            lp[eos] = -np.inf
        nxt = int(np.argmax(lp))
        if nxt == eos:
            break
        toks.append(nxt)
    assert beam_search(step, eos, DecodeConfig(beam_size=1, max_len=6, min_len=2))[0] == toks


def test_min_len_and_max_len() -> None:
    vocab, eos = 3, 0

    def eager_eos(prefixes):
        return np.log(np.tile([0.98, 0.01, 0.01], (len(prefixes), 1)))

    toks, _ = beam_search(eager_eos, eos, DecodeConfig(beam_size=2, max_len=10, min_len=3))
    assert len(toks) == 3

    def never_eos(prefixes):
        return np.log(np.tile([1e-9, 0.5, 0.5 - 1e-9], (len(prefixes), 1)))

    toks, _ = beam_search(never_eos, eos, DecodeConfig(beam_size=2, max_len=5, min_len=1))
    assert len(toks) == 5


def test_decode_config_validation() -> None:
    with pytest.raises(ValueError):
        DecodeConfig(beam_size=0)
    with pytest.raises(ValueError):
        DecodeConfig(min_len=5, max_len=4)


def test_model_generate_beam_one_equals_greedy() -> None:
    cfg = tiny(vocab=9)
    model = init_model(cfg, 7)
    inputs = [[3, 4, 5], [6, 7], [8, 3, 3, 4]]
    greedy = greedy_decode(model, inputs, max_len=8, min_len=1)
    for x, g in zip(inputs, greedy):
        assert generate(model, x, DecodeConfig(beam_size=1, max_len=8, min_len=1)) == g


def test_generate_with_params_matches_module() -> None:
    cfg = tiny(vocab=9)
    model = init_model(cfg, 8)
    dc = DecodeConfig(beam_size=3, max_len=6)
    assert generate(model, [3, 4, 5], dc) == generate(model, [3, 4, 5], dc, parameter_set(model))


# ---------------------------------------------------------------- tag representations


def test_language_tag_representation() -> None:
    tok = CharTokenizer.build(["abc"], ["hi", "bn"], 2)
    model = init_model(tiny(vocab=tok.vocab_size), 0)
    batch = examples_to_batch([Example("ab", "a", "hi")], tok)
    probes = [TaggedSequence(tuple(batch.src[0].tolist()), "hi")]
    rep = language_tag_representation(model, "hi", probes)
    assert rep.shape == (8,) and np.isfinite(rep).all()
    with pytest.raises(ValueError):
        language_tag_representation(model, "bn", probes)
    assert math.isclose(
        float(np.abs(rep - language_tag_representation(model, "hi", probes, parameter_set(model))).max()),
        0.0,
        abs_tol=1e-6,
    )
