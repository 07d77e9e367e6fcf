"""Small transformer encoder pretrained from scratch with masked language modeling.

Post-norm architecture with learned absolute positional embeddings and the
MLM output projection tied to the token embedding table. All math is
float64 numpy with hand-written backward passes so that analytic gradients
can be checked against finite differences.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .optim import Adam, NumericError
from .tokenizer import CLS_ID, PAD_ID, MASK_ID, TokenBlock, Vocab, encode

LN_EPS = 1e-5
_NEG_INF = -1e30
_GELU_C = math.sqrt(2.0 / math.pi)


class EmptyBlock(ValueError):
    """A block with no non-PAD positions cannot be masked."""


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 160
    mask_probability: float = 0.15
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 < self.mask_probability < 1.0:
            raise ValueError("mask_probability must be in (0, 1)")
        if self.max_len < 129:
            raise ValueError("max_len must be at least 129 (CLS + one 128-token block)")


@dataclass
class EncoderState:
    config: EncoderConfig
    params: dict[str, np.ndarray]

    def copy(self) -> "EncoderState":
        return EncoderState(config=self.config, params=copy.deepcopy(self.params))


@dataclass(frozen=True)
class MlmBatch:
    input_ids: np.ndarray  # (B, L) with MASK substitutions
    target_ids: np.ndarray  # (B, L) original ids
    mask_positions: np.ndarray  # (B, L) bool
    attention_mask: np.ndarray  # (B, L) 0/1


def init_encoder(config: EncoderConfig) -> EncoderState:
    rng = np.random.default_rng(config.seed)
    d, f, v = config.d_model, config.d_ff, config.vocab_size

    def w(*shape: int) -> np.ndarray:
        return rng.normal(0.0, 0.02, size=shape)

    params: dict[str, np.ndarray] = {
        "tok_emb": w(v, d),
        "pos_emb": w(config.max_len, d),
        "mlm_bias": np.zeros(v),
    }
    for l in range(config.n_layers):
        p = f"l{l}."
        for name in ("wq", "wk", "wv", "wo"):
            params[p + name] = w(d, d)
        for name in ("bq", "bk", "bv", "bo"):
            params[p + name] = np.zeros(d)
        params[p + "w1"] = w(d, f)
        params[p + "b1"] = np.zeros(f)
        params[p + "w2"] = w(f, d)
        params[p + "b2"] = np.zeros(d)
        for name in ("ln1_g", "ln2_g"):
            params[p + name] = np.ones(d)
        for name in ("ln1_b", "ln2_b"):
            params[p + name] = np.zeros(d)
    return EncoderState(config=config, params=params)


# ---------------------------------------------------------------------------
# primitives

def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)


def _ln_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * istd
    return g * xhat + b, (xhat, istd)


def _ln_backward(dy: np.ndarray, g: np.ndarray, cache):
    xhat, istd = cache
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = istd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, l, d = x.shape
    return x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


# ---------------------------------------------------------------------------
# encoder forward / backward

def encoder_forward(state: EncoderState, ids: np.ndarray, attn_mask: np.ndarray):
    """Run the encoder; returns (hidden (B,L,D), cache for backward)."""
    cfg, p = state.config, state.params
    ids = np.asarray(ids, dtype=np.int64)
    attn_mask = np.asarray(attn_mask, dtype=np.float64)
    B, L = ids.shape
    if L > cfg.max_len:
        raise ValueError(f"sequence length {L} exceeds max_len {cfg.max_len}")

    x = p["tok_emb"][ids] + p["pos_emb"][:L][None, :, :]
    key_bias = (1.0 - attn_mask)[:, None, None, :] * _NEG_INF
    scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)

    layers = []
    for l in range(cfg.n_layers):
        pre = f"l{l}."
        x_in = x
        q = _split_heads(x_in @ p[pre + "wq"] + p[pre + "bq"], cfg.n_heads)
        k = _split_heads(x_in @ p[pre + "wk"] + p[pre + "bk"], cfg.n_heads)
        v = _split_heads(x_in @ p[pre + "wv"] + p[pre + "bv"], cfg.n_heads)
        scores = q @ k.swapaxes(-1, -2) * scale + key_bias
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(attn @ v)
        attn_out = ctx @ p[pre + "wo"] + p[pre + "bo"]
        h1, ln1c = _ln_forward(x_in + attn_out, p[pre + "ln1_g"], p[pre + "ln1_b"])
        u = h1 @ p[pre + "w1"] + p[pre + "b1"]
        a = _gelu(u)
        ffo = a @ p[pre + "w2"] + p[pre + "b2"]
        x, ln2c = _ln_forward(h1 + ffo, p[pre + "ln2_g"], p[pre + "ln2_b"])
        layers.append((x_in, q, k, v, attn, ctx, ln1c, h1, u, a, ln2c))

    # CLS readout: the hidden vector reported at a CLS position is the mean of
    # the real token hiddens, so the classification summary stays additive in
    # the query's tokens. CLS never occurs in pretraining blocks, so the MLM
    # path is untouched.
    cls_pos = ids == CLS_ID
    pool_w = None
    if cls_pos.any():
        token_w = attn_mask * ~cls_pos
        totals = token_w.sum(axis=-1, keepdims=True)
        pool_w = np.where(totals > 0, token_w / np.maximum(totals, 1.0), 0.0)
        pooled = pool_w[:, :, None].swapaxes(-1, -2) @ x  # (B, 1, D)
        rows = cls_pos.any(axis=1) & (totals[:, 0] > 0)
        x = x.copy()
        for b in np.nonzero(rows)[0]:
            x[b, cls_pos[b]] = pooled[b, 0]

    cache = {"ids": ids, "L": L, "scale": scale, "layers": layers, "pool_w": pool_w}
    return x, cache


def encoder_backward(state: EncoderState, cache, d_hidden: np.ndarray) -> dict[str, np.ndarray]:
    """Backpropagate d_hidden (B,L,D) through the encoder; returns param grads."""
    cfg, p = state.config, state.params
    ids, L, scale = cache["ids"], cache["L"], cache["scale"]
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    dx = d_hidden

    pool_w = cache.get("pool_w")
    if pool_w is not None:
        cls_pos = ids == CLS_ID
        dx = dx.copy()
        for b in np.nonzero(cls_pos.any(axis=1) & (pool_w.sum(axis=1) > 0))[0]:
            d_pooled = dx[b, cls_pos[b]].sum(axis=0)
            dx[b, cls_pos[b]] = 0.0
            dx[b] += pool_w[b][:, None] * d_pooled

    for l in range(cfg.n_layers - 1, -1, -1):
        pre = f"l{l}."
        x_in, q, k, v, attn, ctx, ln1c, h1, u, a, ln2c = cache["layers"][l]

        dr2, dg2, db2 = _ln_backward(dx, p[pre + "ln2_g"], ln2c)
        grads[pre + "ln2_g"] += dg2
        grads[pre + "ln2_b"] += db2
        dh1 = dr2.copy()
        dffo = dr2
        grads[pre + "w2"] += np.tensordot(a, dffo, axes=([0, 1], [0, 1]))
        grads[pre + "b2"] += dffo.sum(axis=(0, 1))
        du = (dffo @ p[pre + "w2"].T) * _gelu_grad(u)
        grads[pre + "w1"] += np.tensordot(h1, du, axes=([0, 1], [0, 1]))
        grads[pre + "b1"] += du.sum(axis=(0, 1))
        dh1 += du @ p[pre + "w1"].T

        dr1, dg1, db1 = _ln_backward(dh1, p[pre + "ln1_g"], ln1c)
        grads[pre + "ln1_g"] += dg1
        grads[pre + "ln1_b"] += db1
        dx = dr1.copy()
        dattn_out = dr1
        grads[pre + "wo"] += np.tensordot(ctx, dattn_out, axes=([0, 1], [0, 1]))
        grads[pre + "bo"] += dattn_out.sum(axis=(0, 1))
        dctx = _split_heads(dattn_out @ p[pre + "wo"].T, cfg.n_heads)

        dattn = dctx @ v.swapaxes(-1, -2)
        dv = attn.swapaxes(-1, -2) @ dctx
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dq = dscores @ k * scale
        dk = dscores.swapaxes(-1, -2) @ q * scale

        for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
            dflat = _merge_heads(dproj)
            grads[pre + "w" + name] += np.tensordot(x_in, dflat, axes=([0, 1], [0, 1]))
            grads[pre + "b" + name] += dflat.sum(axis=(0, 1))
            dx += dflat @ p[pre + "w" + name].T

    np.add.at(grads["tok_emb"], ids, dx)
    grads["pos_emb"][:L] += dx.sum(axis=0)
    return grads


def forward(state: EncoderState, block: TokenBlock) -> np.ndarray:
    """Per-position hidden vectors for a single block (block_len, d_model)."""
    ids = np.array([block.ids])
    mask = np.array([block.attention_mask])
    hidden, _ = encoder_forward(state, ids, mask)
    return hidden[0]


# ---------------------------------------------------------------------------
# masked language modeling

def blocks_to_arrays(blocks: list[TokenBlock]) -> tuple[np.ndarray, np.ndarray]:
    ids = np.array([b.ids for b in blocks], dtype=np.int64)
    mask = np.array([b.attention_mask for b in blocks], dtype=np.float64)
    return ids, mask


def mask_batch(
    blocks: list[TokenBlock], mask_probability: float, seed: int, vocab_size: int
) -> MlmBatch:
    """BERT-style masking: select positions at mask_probability, then 80/10/10."""
    ids, attn = blocks_to_arrays(blocks)
    if np.any(attn.sum(axis=1) == 0):
        raise EmptyBlock("block with no non-PAD positions")
    rng = np.random.default_rng(seed)
    valid = attn.astype(bool)
    while True:
        selected = (rng.random(ids.shape) < mask_probability) & valid
        if selected.any():
            break
    r = rng.random(ids.shape)
    input_ids = ids.copy()
    input_ids[selected & (r < 0.8)] = MASK_ID
    random_pos = selected & (r >= 0.8) & (r < 0.9)
    if random_pos.any():
        input_ids[random_pos] = rng.integers(4, vocab_size, size=int(random_pos.sum()))
    return MlmBatch(
        input_ids=input_ids, target_ids=ids, mask_positions=selected, attention_mask=attn
    )


def _mlm_forward(state: EncoderState, batch: MlmBatch):
    hidden, cache = encoder_forward(state, batch.input_ids, batch.attention_mask)
    hm = hidden[batch.mask_positions]  # (M, D)
    targets = batch.target_ids[batch.mask_positions]
    logits = hm @ state.params["tok_emb"].T + state.params["mlm_bias"]
    logits = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(logits).sum(axis=-1))
    loss = float(np.mean(logz - logits[np.arange(len(targets)), targets]))
    return loss, hidden, cache, hm, logits, logz, targets


def mlm_loss(state: EncoderState, batch: MlmBatch) -> float:
    """Mean cross-entropy of the tied MLM head over masked positions."""
    return _mlm_forward(state, batch)[0]


def mlm_loss_and_grads(state: EncoderState, batch: MlmBatch):
    loss, hidden, cache, hm, logits, logz, targets = _mlm_forward(state, batch)
    m = len(targets)
    probs = np.exp(logits - logz[:, None])
    dlogits = probs
    dlogits[np.arange(m), targets] -= 1.0
    dlogits /= m

    d_hidden = np.zeros_like(hidden)
    d_hidden[batch.mask_positions] = dlogits @ state.params["tok_emb"]
    grads = encoder_backward(state, cache, d_hidden)
    grads["tok_emb"] += dlogits.T @ hm  # tied output projection
    grads["mlm_bias"] += dlogits.sum(axis=0)
    return loss, grads


def perplexity(
    state: EncoderState,
    blocks: list[TokenBlock],
    seed: int = 1234,
    batch_size: int = 32,
    n_draws: int = 3,
) -> float:
    """exp(mean masked cross-entropy), averaged over a few fixed-seed mask draws."""
    cfg = state.config
    total, count = 0.0, 0
    for draw in range(n_draws):
        for i in range(0, len(blocks), batch_size):
            chunk = blocks[i : i + batch_size]
            batch = mask_batch(chunk, cfg.mask_probability, seed + 613 * draw + i, cfg.vocab_size)
            loss = mlm_loss(state, batch)
            n = int(batch.mask_positions.sum())
            total += loss * n
            count += n
    if count == 0:
        raise EmptyBlock("no blocks to evaluate")
    return float(np.exp(total / count))


def pretrain(
    state: EncoderState,
    blocks: list[TokenBlock],
    epochs: int = 8,
    lr: float = 3e-3,
    batch_size: int = 4,
    seed: int = 0,
    val_fraction: float = 0.1,
    warmup_steps: int = 20,
) -> tuple[EncoderState, list[float]]:
    """MLM pretraining; returns the trained state and per-epoch validation
    perplexity (index 0 is the pre-training value)."""
    cfg = state.config
    if not blocks:
        raise EmptyBlock("no pretraining blocks")
    state = state.copy()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(blocks))
    n_val = max(1, round(len(blocks) * val_fraction))
    val = [blocks[i] for i in order[:n_val]]
    train = [blocks[i] for i in order[n_val:]] or val

    opt = Adam(lr=lr, warmup_steps=warmup_steps)
    history = [perplexity(state, val)]
    for epoch in range(epochs):
        perm = rng.permutation(len(train))
        for bi, start in enumerate(range(0, len(train), batch_size)):
            chunk = [train[i] for i in perm[start : start + batch_size]]
            batch = mask_batch(
                chunk, cfg.mask_probability, seed + 7919 * epoch + 31 * bi + 1, cfg.vocab_size
            )
            loss, grads = mlm_loss_and_grads(state, batch)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite MLM loss at epoch {epoch} (learning rate too high?)")
            opt.step(state.params, grads)
        history.append(perplexity(state, val))
    return state, history


# ---------------------------------------------------------------------------
# query embedding

def query_ids(query: str, vocab: Vocab, max_len: int) -> list[int]:
    ids = [CLS_ID] + encode(query, vocab)
    return ids[:max_len]


def embed_query(state: EncoderState, query: str, vocab: Vocab) -> np.ndarray:
    """CLS hidden vector for a query (d_model,)."""
    return embed_query_batch(state, [query_ids(query, vocab, state.config.max_len)])[0]


def embed_query_batch(
    state: EncoderState, ids_list: list[list[int]], pad_to: int | None = None
) -> np.ndarray:
    """CLS hidden vectors for pre-tokenized queries (each starting with CLS)."""
    hidden, _, _ = embed_query_batch_cached(state, ids_list, pad_to)
    return hidden


def embed_query_batch_cached(state: EncoderState, ids_list: list[list[int]], pad_to=None):
    """Like embed_query_batch but also returns the forward cache and full hidden
    tensor, for backpropagation into the backbone."""
    length = pad_to if pad_to is not None else state.config.max_len
    length = min(length, state.config.max_len)
    ids = np.full((len(ids_list), length), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(ids_list), length), dtype=np.float64)
    for i, row in enumerate(ids_list):
        row = row[:length]
        ids[i, : len(row)] = row
        mask[i, : len(row)] = 1.0
    hidden, cache = encoder_forward(state, ids, mask)
    return hidden[:, 0, :], hidden, cache
