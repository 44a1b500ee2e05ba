"""Adam training loop, checkpoint serialization, and perplexity evaluation.

The loop is resumable by construction: the learning-rate schedule, batch
selection, and dropout masks are all pure functions of the global step
count stored in the checkpoint, so stopping at step k and continuing later
reproduces an uninterrupted run exactly.
"""

import dataclasses
import math

import numpy as np

from .transformer import Checkpoint, TransformerConfig, loss_and_grads, param_shapes

CHECKPOINT_MAGIC = "nlm-checkpoint"
CHECKPOINT_VERSION = 1


@dataclasses.dataclass
class TrainConfig:
    learning_rate: float
    total_steps: int
    batch_size: int
    warmup_steps: int = None  # None picks 1% of total_steps, at least 1
    decay: str = "linear"  # "linear" or "constant"
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = None
    patience: int = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.total_steps < 0:
            raise ValueError("total_steps must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.decay not in ("linear", "constant"):
            raise ValueError("decay must be 'linear' or 'constant'")

    def resolved_warmup(self):
        if self.warmup_steps is not None:
            return self.warmup_steps
        return max(1, self.total_steps // 100)


@dataclasses.dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_log: list  # (step, loss, lr)
    dev_log: list  # (step, perplexity)


def _lr_at(hyper, step):
    """Learning rate for global step `step` (1-based)."""
    warmup = hyper.resolved_warmup()
    if step <= warmup:
        return hyper.learning_rate * step / warmup
    if hyper.decay == "constant":
        return hyper.learning_rate
    span = max(1, hyper.total_steps - warmup)
    frac = max(0.0, (hyper.total_steps - step) / span)
    return hyper.learning_rate * frac


def _adam_update(ckpt, grads, hyper, step):
    lr = _lr_at(hyper, step)
    total_sq = 0.0
    for g in grads.values():
        total_sq += float(np.sum(g.astype(np.float64) ** 2))
    norm = math.sqrt(total_sq)
    scale = 1.0
    if hyper.clip_norm and norm > hyper.clip_norm:
        scale = hyper.clip_norm / norm
    bc1 = 1.0 - hyper.beta1**step
    bc2 = 1.0 - hyper.beta2**step
    for name, p in ckpt.params.items():
        g = grads[name].astype(np.float64) * scale
        if name not in ckpt.opt_m:
            ckpt.opt_m[name] = np.zeros(p.shape, dtype=np.float64)
            ckpt.opt_v[name] = np.zeros(p.shape, dtype=np.float64)
        m = ckpt.opt_m[name]
        v = ckpt.opt_v[name]
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.adam_eps)
        p -= update.astype(p.dtype)
    return lr, norm


def _training_sequences(corpus, max_seq_len):
    seqs = []
    for s in getattr(corpus, "sentences", corpus):
        arr = np.asarray(s, dtype=np.int64)
        if arr.size > max_seq_len:
            arr = arr[:max_seq_len]
        if arr.size >= 2:
            seqs.append(arr)
    if not seqs:
        raise ValueError("training corpus has no usable sentences")
    return seqs


def _snapshot(ckpt):
    return (
        {k: v.copy() for k, v in ckpt.params.items()},
        {k: v.copy() for k, v in ckpt.opt_m.items()},
        {k: v.copy() for k, v in ckpt.opt_v.items()},
        ckpt.step,
    )


def train(ckpt, corpus, hyper, dev_corpus=None, stop_after=None):
    """Run Adam until the checkpoint's global step reaches hyper.total_steps.

    Returns a TrainResult whose checkpoint is the trained model (the best
    dev-perplexity state when early stopping is configured).  The loss log
    holds one (step, loss, lr) row per optimizer step taken here.
    stop_after caps the steps taken in this call, leaving a checkpoint that
    a later call with the same hyper continues exactly.
    """
    seqs = _training_sequences(corpus, ckpt.config.max_seq_len)
    n = len(seqs)
    loss_log = []
    dev_log = []
    best = None
    best_ppl = float("inf")
    bad_evals = 0
    taken = 0
    evaluating = dev_corpus is not None and hyper.eval_every
    if evaluating:
        ppl = neural_perplexity(ckpt, dev_corpus)
        dev_log.append((ckpt.step, ppl))
        best, best_ppl = _snapshot(ckpt), ppl
    while ckpt.step < hyper.total_steps and (stop_after is None or taken < stop_after):
        step = ckpt.step + 1
        rng = np.random.default_rng(np.random.SeedSequence([hyper.seed, step]))
        idx = rng.choice(n, size=hyper.batch_size, replace=n < hyper.batch_size)
        batch = [seqs[i] for i in idx]
        drop_seed = int(rng.integers(0, 2**31 - 1))
        try:
            loss, _, grads = loss_and_grads(ckpt, batch, train_mode=True, seed=drop_seed)
        except FloatingPointError:
            raise FloatingPointError("non-finite loss at step %d" % step)
        lr, _ = _adam_update(ckpt, grads, hyper, step)
        ckpt.step = step
        taken += 1
        loss_log.append((step, loss, lr))
        if evaluating and (step % hyper.eval_every == 0 or step == hyper.total_steps):
            ppl = neural_perplexity(ckpt, dev_corpus)
            dev_log.append((step, ppl))
            if ppl < best_ppl:
                best, best_ppl = _snapshot(ckpt), ppl
                bad_evals = 0
            else:
                bad_evals += 1
                if hyper.patience is not None and bad_evals >= hyper.patience:
                    break
    if evaluating and best is not None:
        ckpt.params, ckpt.opt_m, ckpt.opt_v, ckpt.step = best
    return TrainResult(ckpt, loss_log, dev_log)


def finetune(pretrained, corpus, hyper, dev_corpus=None):
    """Continue training from pretrained weights with a fresh optimizer.

    Parameters are copied exactly; Adam moments and the step counter start
    from zero so hyper.total_steps counts finetuning steps only.
    """
    max_id = max(int(np.max(s)) for s in getattr(corpus, "sentences", corpus))
    if max_id >= pretrained.config.vocab_size:
        raise ValueError(
            "config mismatch: vocab_size is %d but the corpus contains token id %d"
            % (pretrained.config.vocab_size, max_id)
        )
    fresh = Checkpoint(
        config=pretrained.config,
        params={k: v.copy() for k, v in pretrained.params.items()},
        opt_m={},
        opt_v={},
        step=0,
        rng_seed=hyper.seed,
    )
    return train(fresh, corpus, hyper, dev_corpus=dev_corpus)


def require_matching_config(config, **expected):
    """Raise if any named config field differs from its expected value."""
    diffs = [
        "%s: checkpoint has %r, expected %r" % (k, getattr(config, k), v)
        for k, v in expected.items()
        if getattr(config, k) != v
    ]
    if diffs:
        raise ValueError("config mismatch: " + "; ".join(diffs))


def neural_perplexity(ckpt, corpus, batch_size=64):
    """Word-level perplexity: exp of total NLL over (words + sentences).

    Each sentence contributes its end-of-sentence event on top of its
    whitespace words, which keeps the number comparable across tokenizers.
    """
    sentences = [np.asarray(s, dtype=np.int64) for s in corpus.sentences]
    if not sentences:
        raise ValueError("corpus is empty")
    total_nll = 0.0
    for lo in range(0, len(sentences), batch_size):
        chunk = sentences[lo : lo + batch_size]
        loss, count, _ = loss_and_grads(ckpt, chunk, want_grads=False)
        total_nll += loss * count
    denom = corpus.word_count + len(sentences)
    exponent = total_nll / denom
    return math.exp(exponent) if exponent < 700.0 else float("inf")


def save_loss_log(loss_log, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,loss,lr\n")
        for step, loss, lr in loss_log:
            f.write("%d,%.6f,%.8g\n" % (step, loss, lr))


def load_loss_log(path):
    rows = []
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "step,loss,lr":
            raise ValueError("unrecognized loss log header: %r" % header)
        for line in f:
            step, loss, lr = line.strip().split(",")
            rows.append((int(step), float(loss), float(lr)))
    return rows


# --------------------------------------------------------------- storage

_CONFIG_FIELDS = [
    "n_blocks",
    "n_heads",
    "d_model",
    "d_ff",
    "max_seq_len",
    "vocab_size",
    "dropout_rate",
    "tie_embeddings",
]


def save_checkpoint(ckpt, path):
    """Text header (format version, config, seed, step) + raw named tensors.

    Parameters are stored in their own dtype (float32 by default) and Adam
    moments in float64, all little-endian, so a load reproduces the saved
    state bit for bit.
    """
    records = []
    for name in sorted(ckpt.params):
        records.append(("param", name, ckpt.params[name]))
    for name in sorted(ckpt.opt_m):
        records.append(("adam_m", name, ckpt.opt_m[name]))
    for name in sorted(ckpt.opt_v):
        records.append(("adam_v", name, ckpt.opt_v[name]))
    with open(path, "wb") as f:
        head = ["%s %d" % (CHECKPOINT_MAGIC, CHECKPOINT_VERSION)]
        cfg = ckpt.config
        for field in _CONFIG_FIELDS:
            value = getattr(cfg, field)
            if field == "tie_embeddings":
                value = int(value)
            head.append("%s %s" % (field, value))
        head.append("rng_seed %d" % ckpt.rng_seed)
        head.append("step %d" % ckpt.step)
        head.append("tensors %d" % len(records))
        f.write(("\n".join(head) + "\n").encode("ascii"))
        for kind, name, arr in records:
            arr = np.ascontiguousarray(arr)
            if arr.dtype.byteorder == ">":
                arr = arr.astype(arr.dtype.newbyteorder("<"))
            dims = " ".join(str(d) for d in arr.shape)
            f.write(("%s %s %s %d %s\n" % (kind, name, arr.dtype.str, arr.ndim, dims)).encode("ascii"))
            f.write(arr.tobytes())
            f.write(b"\n")


def _read_line(f):
    raw = bytearray()
    while True:
        ch = f.read(1)
        if not ch:
            raise ValueError("unexpected end of checkpoint file")
        if ch == b"\n":
            return raw.decode("ascii")
        raw.extend(ch)


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = _read_line(f).split()
        if magic != [CHECKPOINT_MAGIC, str(CHECKPOINT_VERSION)]:
            raise ValueError("not a version-%d checkpoint: %s" % (CHECKPOINT_VERSION, path))
        fields = {}
        for name in _CONFIG_FIELDS + ["rng_seed", "step", "tensors"]:
            key, value = _read_line(f).split(None, 1)
            if key != name:
                raise ValueError("checkpoint header: expected %r, found %r" % (name, key))
            fields[key] = value
        config = TransformerConfig(
            n_blocks=int(fields["n_blocks"]),
            n_heads=int(fields["n_heads"]),
            d_model=int(fields["d_model"]),
            d_ff=int(fields["d_ff"]),
            max_seq_len=int(fields["max_seq_len"]),
            vocab_size=int(fields["vocab_size"]),
            dropout_rate=float(fields["dropout_rate"]),
            tie_embeddings=bool(int(fields["tie_embeddings"])),
        )
        ckpt = Checkpoint(
            config=config,
            params={},
            opt_m={},
            opt_v={},
            step=int(fields["step"]),
            rng_seed=int(fields["rng_seed"]),
        )
        stores = {"param": ckpt.params, "adam_m": ckpt.opt_m, "adam_v": ckpt.opt_v}
        for _ in range(int(fields["tensors"])):
            parts = _read_line(f).split()
            kind, name, dtype_str, rank = parts[0], parts[1], parts[2], int(parts[3])
            dims = tuple(int(d) for d in parts[4 : 4 + rank])
            if kind not in stores:
                raise ValueError("unknown tensor kind %r in checkpoint" % kind)
            dtype = np.dtype(dtype_str)
            nbytes = dtype.itemsize * int(np.prod(dims, dtype=np.int64)) if dims else dtype.itemsize
            raw = f.read(nbytes)
            if len(raw) != nbytes:
                raise ValueError("truncated tensor %r in checkpoint" % name)
            if f.read(1) != b"\n":
                raise ValueError("malformed tensor framing after %r" % name)
            stores[kind][name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    expected = param_shapes(config)
    missing = sorted(set(expected) - set(ckpt.params))
    if missing:
        raise ValueError("checkpoint is missing parameters: %s" % ", ".join(missing))
    for name, shape in expected.items():
        if ckpt.params[name].shape != shape:
            raise ValueError(
                "parameter %s has shape %s, expected %s" % (name, ckpt.params[name].shape, shape)
            )
    return ckpt
