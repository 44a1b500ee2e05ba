"""Prefix-conditioned sampling from a trained decoder.

Every (seed, prefix, sample index) triple owns an independent RNG stream
derived from the prefix content, so results do not depend on how prefixes
are ordered or batched, and raising samples_per_prefix only appends new
samples to the ones a smaller run would produce.
"""

import dataclasses

import numpy as np

from .bpe import BOS_ID, EOS_ID
from .transformer import decode_step, forward, prefill


@dataclasses.dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 1.0
    samples_per_prefix: int = 25
    keep_top: int = 5
    length_penalty: float = 1.0
    max_new_tokens: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.samples_per_prefix < 1:
            raise ValueError("samples_per_prefix must be positive")
        if self.keep_top < 1:
            raise ValueError("keep_top must be positive")
        if self.length_penalty < 0.0:
            raise ValueError("length_penalty must be non-negative")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")


@dataclasses.dataclass(frozen=True)
class SyntheticSentence:
    tokens: tuple  # full id sequence including BOS (and EOS when emitted)
    text: str
    prefix: tuple
    score: float
    duplicate_count: int


def temperature_softmax(logits, temperature):
    """Softmax of logits / temperature along the last axis."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    e = np.exp(scaled)
    return e / e.sum(axis=-1, keepdims=True)


def _sample_index(probs, u):
    cum = np.cumsum(probs)
    return min(int(np.searchsorted(cum, u, side="right")), len(probs) - 1)


def _stream(cfg_seed, prefix_ids, j):
    return np.random.default_rng(
        np.random.SeedSequence([int(cfg_seed), int(j)] + [int(t) for t in prefix_ids])
    )


def _check_prefix(ckpt, prefix_ids):
    if len(prefix_ids) + 2 > ckpt.config.max_seq_len:
        raise ValueError(
            "prefix of %d tokens leaves no room to generate under max_seq_len %d"
            % (len(prefix_ids), ckpt.config.max_seq_len)
        )
    for t in prefix_ids:
        if not 0 <= int(t) < ckpt.config.vocab_size:
            raise ValueError("prefix token id %d out of range" % t)


def sample_tokens(ckpt, prefix_ids, cfg):
    """Draw cfg.samples_per_prefix continuations of the prefix.

    Returns a list of (generated_ids, total_logprob, event_count) triples
    in sample order; generated_ids includes the final EOS when one was
    drawn before the length limit.  Log probabilities are taken under the
    temperature-adjusted distribution actually sampled from.
    """
    _check_prefix(ckpt, prefix_ids)
    cap = min(cfg.max_new_tokens, ckpt.config.max_seq_len - 1 - len(prefix_ids))
    n = cfg.samples_per_prefix
    base = np.asarray([BOS_ID] + [int(t) for t in prefix_ids], dtype=np.int64)
    logits, state = prefill(ckpt, base[None, :])
    logits = np.repeat(logits, n, axis=0)
    state = state.select_rows(np.zeros(n, dtype=np.int64))
    rngs = [_stream(cfg.seed, prefix_ids, j) for j in range(n)]
    generated = [[] for _ in range(n)]
    logps = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    active = list(range(n))
    for step_i in range(cap):
        probs = temperature_softmax(logits, cfg.temperature)
        chosen = np.empty(len(active), dtype=np.int64)
        for row, j in enumerate(active):
            u = rngs[j].random()
            tok = _sample_index(probs[row], u)
            chosen[row] = tok
            generated[j].append(tok)
            logps[j] += np.log(probs[row][tok])
            counts[j] += 1
        still = [row for row, j in enumerate(active) if generated[j][-1] != EOS_ID]
        active = [active[row] for row in still]
        if not active or step_i + 1 == cap:
            break
        if len(still) != len(chosen):
            state = state.select_rows(np.asarray(still, dtype=np.int64))
            chosen = chosen[still]
        logits, state = decode_step(ckpt, state, chosen)
    return [(generated[j], float(logps[j]), int(counts[j])) for j in range(n)]


def _sample_one_stream(ckpt, prefix_ids, cfg, j):
    """Serial reference for one sample: full forward pass per step."""
    _check_prefix(ckpt, prefix_ids)
    cap = min(cfg.max_new_tokens, ckpt.config.max_seq_len - 1 - len(prefix_ids))
    rng = _stream(cfg.seed, prefix_ids, j)
    seq = [BOS_ID] + [int(t) for t in prefix_ids]
    generated = []
    logp = 0.0
    for _ in range(cap):
        logits = forward(ckpt, seq)[-1]
        probs = temperature_softmax(logits, cfg.temperature)
        tok = _sample_index(probs, rng.random())
        generated.append(tok)
        logp += float(np.log(probs[tok]))
        seq.append(tok)
        if tok == EOS_ID:
            break
    return generated, logp, len(generated)


def generate_for_prefix(ckpt, tokenizer, prefix_ids, cfg):
    """Sample, deduplicate, and keep the cfg.keep_top best continuations.

    The score is total temperature-adjusted log probability divided by
    event_count ** length_penalty; ties rank by token sequence so output
    order is fully deterministic.
    """
    prefix_ids = tuple(int(t) for t in prefix_ids)
    samples = sample_tokens(ckpt, prefix_ids, cfg)
    by_tokens = {}
    for generated, logp, count in samples:
        key = tuple(generated)
        if key in by_tokens:
            by_tokens[key][1] += 1
        else:
            score = logp / (count**cfg.length_penalty)
            by_tokens[key] = [score, 1]
    ranked = sorted(by_tokens.items(), key=lambda kv: (-kv[1][0], kv[0]))
    out = []
    for key, (score, dups) in ranked[: cfg.keep_top]:
        tokens = (BOS_ID,) + prefix_ids + key
        out.append(
            SyntheticSentence(
                tokens=tokens,
                text=tokenizer.decode(list(tokens)),
                prefix=prefix_ids,
                score=score,
                duplicate_count=dups,
            )
        )
    return out


def generate_corpus(ckpt, tokenizer, prefixes, cfg, progress=None):
    """generate_for_prefix over a prefix list, concatenated in input order."""
    out = []
    for i, prefix in enumerate(prefixes):
        out.extend(generate_for_prefix(ckpt, tokenizer, prefix, cfg))
        if progress is not None and (i + 1) % 200 == 0:
            progress(i + 1, len(prefixes))
    return out


def save_synthetic(sentences, path):
    """Text lines plus a .meta.tsv sidecar with per-line provenance."""
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(s.text + "\n")
    with open(path + ".meta.tsv", "w", encoding="utf-8") as f:
        f.write("line\tprefix\tscore\tduplicate_count\n")
        for i, s in enumerate(sentences, start=1):
            prefix_text = " ".join(str(t) for t in s.prefix)
            f.write("%d\t%s\t%.6f\t%d\n" % (i, prefix_text, s.score, s.duplicate_count))
