"""Autoregressive Transformer decoder LM in plain numpy.

Pre-norm blocks (layer norm, multi-head causal self-attention, residual,
layer norm, GELU feed-forward, residual) with learned absolute position
embeddings and a final layer norm.  The output projection is tied to the
token embedding by default.  Forward, loss, and reverse-mode gradients are
written out by hand; an incremental decoding path with per-block key/value
caches serves sampling.

Batches are packed by right-padding, so a position's logits depend only on
earlier positions and padding never influences any loss-bearing position.
"""

import dataclasses
import math

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5
NEG_INF = -1e9


@dataclasses.dataclass(frozen=True)
class TransformerConfig:
    n_blocks: int
    n_heads: int
    d_model: int
    d_ff: int
    max_seq_len: int
    vocab_size: int
    dropout_rate: float = 0.1
    tie_embeddings: bool = True

    def __post_init__(self):
        for field in ("n_blocks", "n_heads", "d_model", "d_ff", "max_seq_len", "vocab_size"):
            if getattr(self, field) < 1:
                raise ValueError("%s must be positive" % field)
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclasses.dataclass
class Checkpoint:
    config: TransformerConfig
    params: dict
    opt_m: dict
    opt_v: dict
    step: int
    rng_seed: int


def param_shapes(config):
    d, ff, v = config.d_model, config.d_ff, config.vocab_size
    shapes = {"tok_emb": (v, d), "pos_emb": (config.max_seq_len, d)}
    for i in range(config.n_blocks):
        p = "blocks.%d." % i
        shapes[p + "ln1.g"] = (d,)
        shapes[p + "ln1.b"] = (d,)
        for name in ("wq", "wk", "wv", "wo"):
            shapes[p + "attn." + name] = (d, d)
        for name in ("bq", "bk", "bv", "bo"):
            shapes[p + "attn." + name] = (d,)
        shapes[p + "ln2.g"] = (d,)
        shapes[p + "ln2.b"] = (d,)
        shapes[p + "ff.w1"] = (d, ff)
        shapes[p + "ff.b1"] = (ff,)
        shapes[p + "ff.w2"] = (ff, d)
        shapes[p + "ff.b2"] = (d,)
    shapes["ln_f.g"] = (d,)
    shapes["ln_f.b"] = (d,)
    if not config.tie_embeddings:
        shapes["out_proj"] = (v, d)
    return shapes


def init_params(config, seed, dtype=np.float32):
    """Fresh checkpoint: N(0, 0.02) weights, unit layer-norm gains, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("g",):
            params[name] = np.ones(shape, dtype=dtype)
        elif leaf.startswith("b") and len(shape) == 1:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            params[name] = rng.normal(0.0, 0.02, size=shape).astype(dtype)
    return Checkpoint(config, params, {}, {}, step=0, rng_seed=seed)


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_grad(x):
    phi = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0))) + x * phi


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * hd)


def _dropout_mask(rng, shape, rate, dtype):
    return (rng.random(shape) >= rate).astype(dtype) / dtype(1.0 - rate)


def _forward_batch(ckpt, tokens, train_mode=False, seed=0):
    """Batched forward pass.

    tokens: (B, T) int array, right-padded (pad value is irrelevant to the
    loss, see module docstring).  Returns (logits, cache); the cache holds
    every intermediate needed by _backward_batch plus the per-block
    attention probabilities.
    """
    cfg = ckpt.config
    p = ckpt.params
    b, t = tokens.shape
    if t > cfg.max_seq_len:
        raise ValueError("sequence length %d exceeds max_seq_len %d" % (t, cfg.max_seq_len))
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ValueError("token id out of range for vocab_size %d" % cfg.vocab_size)
    dtype = p["tok_emb"].dtype
    drop = train_mode and cfg.dropout_rate > 0.0
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, ckpt.step]))

    x = p["tok_emb"][tokens] + p["pos_emb"][:t]
    causal = np.triu(np.full((t, t), NEG_INF, dtype=dtype), k=1)
    scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)
    cache = {"tokens": tokens, "blocks": [], "drop": drop}
    for i in range(cfg.n_blocks):
        pre = "blocks.%d." % i
        blk = {"x_in": x}
        ln1, ln1_cache = _layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
        q = ln1 @ p[pre + "attn.wq"] + p[pre + "attn.bq"]
        k = ln1 @ p[pre + "attn.wk"] + p[pre + "attn.bk"]
        v = ln1 @ p[pre + "attn.wv"] + p[pre + "attn.bv"]
        qh, kh, vh = (_split_heads(a, cfg.n_heads) for a in (q, k, v))
        scores = qh @ kh.transpose(0, 1, 3, 2) * dtype.type(scale) + causal
        probs = _softmax(scores)
        ctx = _merge_heads(probs @ vh)
        attn_out = ctx @ p[pre + "attn.wo"] + p[pre + "attn.bo"]
        if drop:
            blk["attn_drop"] = _dropout_mask(rng, attn_out.shape, cfg.dropout_rate, dtype.type)
            attn_out = attn_out * blk["attn_drop"]
        x = x + attn_out
        blk.update(ln1=ln1, ln1_cache=ln1_cache, qh=qh, kh=kh, vh=vh, probs=probs, ctx=ctx, x_mid=x)
        ln2, ln2_cache = _layer_norm(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
        h1 = ln2 @ p[pre + "ff.w1"] + p[pre + "ff.b1"]
        act = _gelu(h1)
        ff_out = act @ p[pre + "ff.w2"] + p[pre + "ff.b2"]
        if drop:
            blk["ff_drop"] = _dropout_mask(rng, ff_out.shape, cfg.dropout_rate, dtype.type)
            ff_out = ff_out * blk["ff_drop"]
        x = x + ff_out
        blk.update(ln2=ln2, ln2_cache=ln2_cache, h1=h1, act=act)
        cache["blocks"].append(blk)
    xf, lnf_cache = _layer_norm(x, p["ln_f.g"], p["ln_f.b"])
    cache.update(x_last=x, xf=xf, lnf_cache=lnf_cache)
    emb_out = p["tok_emb"] if cfg.tie_embeddings else p["out_proj"]
    logits = xf @ emb_out.T
    return logits, cache


def _backward_batch(ckpt, cache, dlogits):
    """Gradients of every parameter given d(loss)/d(logits)."""
    cfg = ckpt.config
    p = ckpt.params
    tokens = cache["tokens"]
    b, t = tokens.shape
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    emb_name = "tok_emb" if cfg.tie_embeddings else "out_proj"
    xf = cache["xf"]
    grads[emb_name] += dlogits.reshape(-1, dlogits.shape[-1]).T @ xf.reshape(-1, cfg.d_model)
    dxf = dlogits @ p[emb_name]
    dx, dg, db = _layer_norm_backward(dxf, p["ln_f.g"], cache["lnf_cache"])
    grads["ln_f.g"] += dg
    grads["ln_f.b"] += db
    scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)
    for i in reversed(range(cfg.n_blocks)):
        pre = "blocks.%d." % i
        blk = cache["blocks"][i]
        # feed-forward sublayer
        dff_out = dx * blk["ff_drop"] if cache["drop"] else dx
        grads[pre + "ff.b2"] += dff_out.sum(axis=(0, 1))
        grads[pre + "ff.w2"] += blk["act"].reshape(-1, cfg.d_ff).T @ dff_out.reshape(-1, cfg.d_model)
        dact = dff_out @ p[pre + "ff.w2"].T
        dh1 = dact * _gelu_grad(blk["h1"])
        grads[pre + "ff.b1"] += dh1.sum(axis=(0, 1))
        grads[pre + "ff.w1"] += blk["ln2"].reshape(-1, cfg.d_model).T @ dh1.reshape(-1, cfg.d_ff)
        dln2 = dh1 @ p[pre + "ff.w1"].T
        dx_mid, dg, db = _layer_norm_backward(dln2, p[pre + "ln2.g"], blk["ln2_cache"])
        grads[pre + "ln2.g"] += dg
        grads[pre + "ln2.b"] += db
        dx = dx + dx_mid
        # attention sublayer
        dattn_out = dx * blk["attn_drop"] if cache["drop"] else dx
        grads[pre + "attn.bo"] += dattn_out.sum(axis=(0, 1))
        grads[pre + "attn.wo"] += blk["ctx"].reshape(-1, cfg.d_model).T @ dattn_out.reshape(
            -1, cfg.d_model
        )
        dctx = _split_heads(dattn_out @ p[pre + "attn.wo"].T, cfg.n_heads)
        dprobs = dctx @ blk["vh"].transpose(0, 1, 3, 2)
        dvh = blk["probs"].transpose(0, 1, 3, 2) @ dctx
        probs = blk["probs"]
        dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dqh = dscores @ blk["kh"] * probs.dtype.type(scale)
        dkh = dscores.transpose(0, 1, 3, 2) @ blk["qh"] * probs.dtype.type(scale)
        dq, dk, dv = (_merge_heads(a) for a in (dqh, dkh, dvh))
        ln1_flat = blk["ln1"].reshape(-1, cfg.d_model)
        for name, d_out in (("q", dq), ("k", dk), ("v", dv)):
            grads[pre + "attn.b" + name] += d_out.sum(axis=(0, 1))
            grads[pre + "attn.w" + name] += ln1_flat.T @ d_out.reshape(-1, cfg.d_model)
        dln1 = dq @ p[pre + "attn.wq"].T + dk @ p[pre + "attn.wk"].T + dv @ p[pre + "attn.wv"].T
        dx_in, dg, db = _layer_norm_backward(dln1, p[pre + "ln1.g"], blk["ln1_cache"])
        grads[pre + "ln1.g"] += dg
        grads[pre + "ln1.b"] += db
        dx = dx + dx_in
    grads["pos_emb"][:t] += dx.sum(axis=0)
    np.add.at(grads["tok_emb"], tokens.reshape(-1), dx.reshape(-1, cfg.d_model))
    return grads


def _pack(batch, pad_value=0):
    lengths = [len(s) for s in batch]
    t = max(lengths)
    out = np.full((len(batch), t), pad_value, dtype=np.int64)
    for i, s in enumerate(batch):
        out[i, : len(s)] = np.asarray(s, dtype=np.int64)
    return out, np.asarray(lengths)


def _loss_mask(tokens, lengths):
    # predict positions 1..len-1; the first token is only conditioned on
    b, t = tokens.shape
    mask = np.zeros((b, t), dtype=bool)
    for i, n in enumerate(lengths):
        mask[i, 1:n] = True
    return mask


def _check_batch(batch):
    if not batch:
        raise ValueError("batch is empty")
    for s in batch:
        if len(s) < 2:
            raise ValueError("every sequence needs at least 2 tokens")


def loss_and_grads(ckpt, batch, train_mode=False, seed=0, want_grads=True):
    """Mean NLL per predicted token, token count, and (optionally) gradients."""
    _check_batch(batch)
    tokens, lengths = _pack(batch)
    logits, cache = _forward_batch(ckpt, tokens, train_mode=train_mode, seed=seed)
    mask = _loss_mask(tokens, lengths)
    n_pred = int(mask.sum())
    # position t scores token t+1, so shift targets left by one
    pred_from = np.zeros_like(mask)
    pred_from[:, :-1] = mask[:, 1:]
    shifted_targets = np.zeros_like(tokens)
    shifted_targets[:, :-1] = tokens[:, 1:]
    log_z = np.log(np.exp(logits - logits.max(axis=-1, keepdims=True)).sum(axis=-1)) + logits.max(
        axis=-1
    )
    target_logit = np.take_along_axis(logits, shifted_targets[..., None], axis=-1)[..., 0]
    loss = float(((log_z - target_logit) * pred_from).sum() / n_pred)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    if not want_grads:
        return loss, n_pred, None
    dlogits = _softmax(logits)
    np.put_along_axis(
        dlogits,
        shifted_targets[..., None],
        np.take_along_axis(dlogits, shifted_targets[..., None], axis=-1) - 1.0,
        axis=-1,
    )
    dlogits *= pred_from[..., None] / n_pred
    grads = _backward_batch(ckpt, cache, dlogits.astype(logits.dtype))
    return loss, n_pred, grads


def forward(ckpt, tokens, train_mode=False, seed=0):
    """Logits for one sequence: (T, vocab_size)."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.size == 0:
        raise ValueError("tokens must be a non-empty 1-d sequence")
    logits, _ = _forward_batch(ckpt, tokens[None, :], train_mode=train_mode, seed=seed)
    return logits[0]


def nll_loss(ckpt, batch):
    """(mean NLL per predicted token, number of predicted tokens)."""
    loss, count, _ = loss_and_grads(ckpt, batch, want_grads=False)
    return loss, count


def backward(ckpt, batch):
    """Named parameter gradients of nll_loss (dropout disabled)."""
    _, _, grads = loss_and_grads(ckpt, batch)
    return grads


# ------------------------------------------------------------ incremental


class DecoderState:
    """Per-block key/value caches for incremental decoding (eval mode)."""

    def __init__(self, ks, vs, pos):
        self.ks = ks
        self.vs = vs
        self.pos = pos

    def select_rows(self, idx):
        return DecoderState([k[idx] for k in self.ks], [v[idx] for v in self.vs], self.pos)


def prefill(ckpt, tokens):
    """Run the full prefix through the model; returns (last logits, state).

    tokens: (B, T) with no padding (all rows the same real length).
    """
    logits, cache = _forward_batch(ckpt, tokens, train_mode=False)
    ks = [blk["kh"] for blk in cache["blocks"]]
    vs = [blk["vh"] for blk in cache["blocks"]]
    return logits[:, -1, :], DecoderState(ks, vs, tokens.shape[1])


def decode_step(ckpt, state, new_tokens):
    """Advance one position for every row; returns (logits (B, V), state)."""
    cfg = ckpt.config
    p = ckpt.params
    if state.pos >= cfg.max_seq_len:
        raise ValueError("sequence length %d exceeds max_seq_len %d" % (state.pos + 1, cfg.max_seq_len))
    x = p["tok_emb"][np.asarray(new_tokens, dtype=np.int64)] + p["pos_emb"][state.pos]
    x = x[:, None, :]  # (B, 1, d)
    scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)
    new_ks, new_vs = [], []
    for i in range(cfg.n_blocks):
        pre = "blocks.%d." % i
        ln1, _ = _layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
        q = _split_heads(ln1 @ p[pre + "attn.wq"] + p[pre + "attn.bq"], cfg.n_heads)
        k = _split_heads(ln1 @ p[pre + "attn.wk"] + p[pre + "attn.bk"], cfg.n_heads)
        v = _split_heads(ln1 @ p[pre + "attn.wv"] + p[pre + "attn.bv"], cfg.n_heads)
        kh = np.concatenate([state.ks[i], k], axis=2)
        vh = np.concatenate([state.vs[i], v], axis=2)
        new_ks.append(kh)
        new_vs.append(vh)
        scores = q @ kh.transpose(0, 1, 3, 2) * x.dtype.type(scale)
        probs = _softmax(scores)
        ctx = _merge_heads(probs @ vh)
        x = x + (ctx @ p[pre + "attn.wo"] + p[pre + "attn.bo"])
        ln2, _ = _layer_norm(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
        x = x + (_gelu(ln2 @ p[pre + "ff.w1"] + p[pre + "ff.b1"]) @ p[pre + "ff.w2"] + p[pre + "ff.b2"])
    xf, _ = _layer_norm(x, p["ln_f.g"], p["ln_f.b"])
    emb_out = p["tok_emb"] if cfg.tie_embeddings else p["out_proj"]
    return (xf @ emb_out.T)[:, 0, :], DecoderState(new_ks, new_vs, state.pos + 1)
