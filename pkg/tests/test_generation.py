
import numpy as np
import pytest
from scipy import stats

from lmaug.bpe import BOS_ID, EOS_ID
from lmaug.generation import (
    GenerationConfig,
    SyntheticSentence,
    _sample_one_stream,
    generate_corpus,
    generate_for_prefix,
    sample_tokens,
    save_synthetic,
    temperature_softmax,
)
from lmaug.transformer import TransformerConfig, init_params


class StubTokenizer:
    def decode(self, ids):
        return " ".join("t%d" % i for i in ids if i >= 4)


def constant_model(target, max_seq_len=16):
    """Model whose next-token distribution is `target` at every position."""
    target = np.asarray(target, dtype=np.float64)
    assert abs(target.sum() - 1.0) < 1e-12
    config = TransformerConfig(
        n_blocks=1,
        n_heads=1,
        d_model=4,
        d_ff=4,
        max_seq_len=max_seq_len,
        vocab_size=len(target),
        dropout_rate=0.0,
        tie_embeddings=False,
    )
    ckpt = init_params(config, seed=0, dtype=np.float64)
    ckpt.params["ln_f.g"][:] = 0.0
    ckpt.params["ln_f.b"][:] = 0.0
    ckpt.params["ln_f.b"][0] = 1.0
    ckpt.params["out_proj"][:] = 0.0
    ckpt.params["out_proj"][:, 0] = np.log(np.maximum(target, 1e-300))
    return ckpt


def random_model(seed=0):
    config = TransformerConfig(
        n_blocks=2, n_heads=2, d_model=8, d_ff=16, max_seq_len=16, vocab_size=11, dropout_rate=0.0
    )
    return init_params(config, seed=seed, dtype=np.float64)


def entropy(p):
    p = np.asarray(p)
    return float(-(p * np.log(p)).sum())


def test_temperature_softmax_worked_example():
    probs = temperature_softmax(np.array([2.0, 0.0]), 1.0)
    assert abs(probs[0] - 0.8808) < 1e-4
    assert abs(probs[1] - 0.1192) < 1e-4


def test_temperature_softmax_normalizes_and_matches_plain_softmax():
    rng = np.random.default_rng(0)
    logits = rng.normal(0, 3, size=(20, 7))
    probs = temperature_softmax(logits, 1.0)
    assert np.all(np.abs(probs.sum(axis=-1) - 1.0) < 1e-9)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    assert np.allclose(probs, e / e.sum(axis=-1, keepdims=True), atol=1e-12)


def test_temperature_preserves_argmax_and_scales_entropy():
    rng = np.random.default_rng(1)
    logits = rng.normal(0, 2, size=9)
    entropies = []
    for tau in (0.25, 0.5, 1.0, 2.0, 4.0):
        p = temperature_softmax(logits, tau)
        assert np.argmax(p) == np.argmax(logits)
        entropies.append(entropy(p))
    assert all(a < b for a, b in zip(entropies, entropies[1:]))


def test_temperature_must_be_positive():
    with pytest.raises(ValueError, match="temperature"):
        temperature_softmax(np.array([1.0, 2.0]), 0.0)
    with pytest.raises(ValueError, match="temperature"):
        GenerationConfig(temperature=-1.0)


def test_sampled_distribution_matches_model():
    target = np.array([0.02, 0.18, 0.10, 0.20, 0.30, 0.20])
    ckpt = constant_model(target)
    cfg = GenerationConfig(samples_per_prefix=10000, max_new_tokens=1, seed=7)
    samples = sample_tokens(ckpt, (4,), cfg)
    counts = np.zeros(len(target))
    for generated, _, _ in samples:
        counts[generated[0]] += 1
    result = stats.chisquare(counts, f_exp=target * len(samples))
    assert result.pvalue > 0.001, "chi-square p=%.5f" % result.pvalue


def test_higher_temperature_flattens_sampled_distribution():
    target = np.array([0.02, 0.18, 0.10, 0.20, 0.30, 0.20])
    ckpt = constant_model(target)
    cold = GenerationConfig(temperature=0.5, samples_per_prefix=4000, max_new_tokens=1, seed=3)
    hot = GenerationConfig(temperature=2.0, samples_per_prefix=4000, max_new_tokens=1, seed=3)
    freqs = []
    for cfg in (cold, hot):
        counts = np.zeros(len(target))
        for generated, _, _ in sample_tokens(ckpt, (4,), cfg):
            counts[generated[0]] += 1
        freqs.append(counts / counts.sum())
    eps = 1e-9
    assert entropy(freqs[0] + eps) < entropy(freqs[1] + eps)


def test_certain_eos_collapses_to_one_output():
    target = np.zeros(6)
    target[EOS_ID] = 1.0 - 1e-9
    target[4] = 1e-9
    ckpt = constant_model(target / target.sum())
    cfg = GenerationConfig(samples_per_prefix=25, keep_top=5, seed=0)
    out = generate_for_prefix(ckpt, StubTokenizer(), (4, 5), cfg)
    assert len(out) == 1
    only = out[0]
    assert only.duplicate_count == 25
    assert only.tokens == (BOS_ID, 4, 5, EOS_ID)
    assert only.prefix == (4, 5)


def test_batched_sampling_equals_serial_reference():
    ckpt = random_model(seed=5)
    cfg = GenerationConfig(temperature=0.9, samples_per_prefix=8, max_new_tokens=10, seed=11)
    batched = sample_tokens(ckpt, (4, 7), cfg)
    for j, (generated, logp, count) in enumerate(batched):
        ref_tokens, ref_logp, ref_count = _sample_one_stream(ckpt, (4, 7), cfg, j)
        assert generated == ref_tokens, "sample %d diverged" % j
        assert count == ref_count
        assert abs(logp - ref_logp) < 1e-9


def test_prefix_order_does_not_matter():
    ckpt = random_model(seed=2)
    cfg = GenerationConfig(samples_per_prefix=6, keep_top=3, max_new_tokens=8, seed=1)
    tok = StubTokenizer()
    prefixes = [(4,), (5, 6), (9,)]
    forward_order = generate_corpus(ckpt, tok, prefixes, cfg)
    backward_order = generate_corpus(ckpt, tok, list(reversed(prefixes)), cfg)

    def by_prefix(sentences):
        table = {}
        for s in sentences:
            table.setdefault(s.prefix, []).append((s.tokens, s.score, s.duplicate_count))
        return table

    assert by_prefix(forward_order) == by_prefix(backward_order)


def test_more_samples_extend_smaller_run():
    ckpt = random_model(seed=3)
    small = GenerationConfig(samples_per_prefix=5, max_new_tokens=8, seed=4)
    large = GenerationConfig(samples_per_prefix=10, max_new_tokens=8, seed=4)
    first = sample_tokens(ckpt, (6, 6), small)
    second = sample_tokens(ckpt, (6, 6), large)
    for a, b in zip(first, second[:5]):
        assert a[0] == b[0]
        assert abs(a[1] - b[1]) < 1e-12


def test_output_shape_and_ordering_invariants():
    ckpt = random_model(seed=9)
    cfg = GenerationConfig(samples_per_prefix=12, keep_top=4, max_new_tokens=6, seed=2)
    out = generate_for_prefix(ckpt, StubTokenizer(), (4, 5), cfg)
    assert 1 <= len(out) <= 4
    assert sum(s.duplicate_count for s in out) <= 12
    scores = [s.score for s in out]
    assert scores == sorted(scores, reverse=True)
    for s in out:
        assert s.tokens[:3] == (BOS_ID, 4, 5)
        body = s.tokens[3:]
        assert EOS_ID not in body[:-1]
        assert len(body) <= 6
        assert isinstance(s.text, str)


def test_duplicate_counts_cover_all_samples_when_nothing_truncated():
    ckpt = random_model(seed=10)
    cfg = GenerationConfig(samples_per_prefix=9, keep_top=9, max_new_tokens=5, seed=8)
    out = generate_for_prefix(ckpt, StubTokenizer(), (7,), cfg)
    assert sum(s.duplicate_count for s in out) == 9


def test_overlong_prefix_rejected():
    ckpt = random_model()
    cfg = GenerationConfig()
    with pytest.raises(ValueError, match="max_seq_len"):
        generate_for_prefix(ckpt, StubTokenizer(), tuple([4] * 16), cfg)


def test_config_validation():
    with pytest.raises(ValueError, match="samples_per_prefix"):
        GenerationConfig(samples_per_prefix=0)
    with pytest.raises(ValueError, match="keep_top"):
        GenerationConfig(keep_top=0)
    with pytest.raises(ValueError, match="max_new_tokens"):
        GenerationConfig(max_new_tokens=0)


def test_save_synthetic_writes_text_and_sidecar(tmp_path):
    sentences = [
        SyntheticSentence((0, 4, 5, 1), "t4 t5", (4,), -1.25, 3),
        SyntheticSentence((0, 4, 1), "t4", (4,), -2.5, 1),
    ]
    path = str(tmp_path / "synthetic.txt")
    save_synthetic(sentences, path)
    with open(path) as f:
        assert f.read().splitlines() == ["t4 t5", "t4"]
    with open(path + ".meta.tsv") as f:
        rows = [line.split("\t") for line in f.read().splitlines()]
    assert rows[0] == ["line", "prefix", "score", "duplicate_count"]
    assert rows[1][0] == "1" and rows[1][3] == "3"
    assert float(rows[2][2]) == pytest.approx(-2.5)
