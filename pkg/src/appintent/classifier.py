"""Multi-label product classifier head over the encoder's CLS embedding.

A two-hidden-layer MLP with dropout produces independent per-product
sigmoid scores, trained with relevance-weighted binary cross entropy.
Training freezes the backbone for the first epochs (head-only updates on
cached embeddings, backbone bitwise untouched), then unfreezes and trains
the full stack.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import checkpoints
from .catalog import Catalog, load_catalog
from .checkpoints import encoder_bytes
from .encoder import (
    EncoderState,
    embed_query_batch,
    embed_query_batch_cached,
    encoder_backward,
    query_ids,
    _gelu,
    _gelu_grad,
)
from .optim import Adam, NumericError
from .pipeline import DatasetSplit, LabeledQuery
from .tokenizer import Vocab, load_vocab

PROB_EPS = 1e-7


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: tuple[int, int] = (128, 64)
    dropout: float = 0.5
    lr: float = 1e-5
    # backbone step size for the unfrozen phase; an order below the head lr
    # keeps pretrained representations from being washed out
    backbone_lr: float | None = None  # defaults to lr / 10
    freeze_epochs: int = 2
    total_epochs: int = 6
    batch_size: int = 32
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0 <= self.freeze_epochs <= self.total_epochs:
            raise ValueError("freeze_epochs must be within [0, total_epochs]")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")


@dataclass
class ClassifierState:
    config: ClassifierConfig
    params: dict[str, np.ndarray]  # w1 b1 w2 b2 w3 b3
    encoder: EncoderState
    frozen: bool = False


@dataclass
class TrainResult:
    classifier: ClassifierState
    encoder: EncoderState
    f1_history: list[float]
    backbone_hash_input: str
    backbone_hash_after_freeze: str


def init_classifier(
    config: ClassifierConfig, encoder: EncoderState, n_products: int
) -> ClassifierState:
    rng = np.random.default_rng(config.seed)
    d = encoder.config.d_model
    h1, h2 = config.hidden

    def w(n_in: int, n_out: int) -> np.ndarray:
        return rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out))

    params = {
        "w1": w(d, h1), "b1": np.zeros(h1),
        "w2": w(h1, h2), "b2": np.zeros(h2),
        "w3": w(h2, n_products), "b3": np.zeros(n_products),
    }
    return ClassifierState(config=config, params=params, encoder=encoder)


# ---------------------------------------------------------------------------
# MLP forward / backward

def _mlp_forward(params, x: np.ndarray, dropout: float = 0.0, rng=None):
    u1 = x @ params["w1"] + params["b1"]
    a1 = _gelu(u1)
    m1 = None
    if dropout > 0.0 and rng is not None:
        m1 = (rng.random(a1.shape) >= dropout) / (1.0 - dropout)
        a1 = a1 * m1
    u2 = a1 @ params["w2"] + params["b2"]
    a2 = _gelu(u2)
    m2 = None
    if dropout > 0.0 and rng is not None:
        m2 = (rng.random(a2.shape) >= dropout) / (1.0 - dropout)
        a2 = a2 * m2
    logits = a2 @ params["w3"] + params["b3"]
    return logits, (x, u1, a1, m1, u2, a2, m2)


def _mlp_backward(params, cache, dlogits: np.ndarray):
    x, u1, a1, m1, u2, a2, m2 = cache
    grads = {
        "w3": a2.T @ dlogits,
        "b3": dlogits.sum(axis=0),
    }
    da2 = dlogits @ params["w3"].T
    if m2 is not None:
        da2 = da2 * m2
    du2 = da2 * _gelu_grad(u2)
    grads["w2"] = a1.T @ du2
    grads["b2"] = du2.sum(axis=0)
    da1 = du2 @ params["w2"].T
    if m1 is not None:
        da1 = da1 * m1
    du1 = da1 * _gelu_grad(u1)
    grads["w1"] = x.T @ du1
    grads["b1"] = du1.sum(axis=0)
    dx = du1 @ params["w1"].T
    return grads, dx


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# loss

def weighted_bce(
    pred: np.ndarray,
    labels: dict[str, float],
    label_index: dict[str, int],
    negative_weight: float = 1.0,
) -> float:
    """Relevance-weighted binary cross entropy over one prediction vector."""
    P = len(pred)
    y = np.zeros(P)
    w = np.zeros(P)
    for pid, weight in labels.items():
        if not 0.0 < weight <= 1.0:
            raise ValueError(f"label weight must be in (0, 1], got {weight} for {pid!r}")
        y[label_index[pid]] = 1.0
        w[label_index[pid]] = weight
    p = np.clip(pred, PROB_EPS, 1.0 - PROB_EPS)
    terms = w * y * np.log(p) + negative_weight * (1.0 - y) * np.log(1.0 - p)
    return float(-terms.sum() / P)


def _bce_batch_grad(logits: np.ndarray, y: np.ndarray, w: np.ndarray, negative_weight: float):
    """Mean weighted BCE over a batch and its gradient w.r.t. logits."""
    B, P = logits.shape
    p = _sigmoid(logits)
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    loss = float(-(w * y * np.log(pc) + negative_weight * (1.0 - y) * np.log(1.0 - pc)).sum() / (B * P))
    dlogits = (w * y * (p - 1.0) + negative_weight * (1.0 - y) * p) / (B * P)
    return loss, dlogits


# ---------------------------------------------------------------------------
# inference

def class_forward(state: ClassifierState, query: str, vocab: Vocab) -> np.ndarray:
    """Per-product probability scores in [0,1]^P (eval mode, dropout off)."""
    ids = query_ids(query, vocab, state.encoder.config.max_len)
    cls = embed_query_batch(state.encoder, [ids])
    logits, _ = _mlp_forward(state.params, cls)
    return _sigmoid(logits[0])


def predict_products(
    state: ClassifierState,
    query: str,
    vocab: Vocab,
    catalog: Catalog,
    tau: float | None = None,
    top_k: int | None = None,
) -> list[tuple[str, float]]:
    """Products scoring >= tau, by descending score then product id."""
    tau = state.config.threshold if tau is None else tau
    scores = class_forward(state, query, vocab)
    ranked = sorted(
        ((p.id, float(scores[k])) for k, p in enumerate(catalog.products) if scores[k] >= tau),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked[:top_k] if top_k is not None else ranked


# ---------------------------------------------------------------------------
# training

def _label_matrices(rows: list[LabeledQuery], catalog: Catalog):
    y = np.zeros((len(rows), catalog.size))
    w = np.zeros((len(rows), catalog.size))
    for i, lq in enumerate(rows):
        for pid, weight in lq.labels.items():
            k = catalog.label_index[pid]
            y[i, k] = 1.0
            w[i, k] = weight
    return y, w


def _micro_f1(probs: np.ndarray, y: np.ndarray, tau: float) -> float:
    pred = probs >= tau
    gold = y >= 0.5
    tp = int((pred & gold).sum())
    fp = int((pred & ~gold).sum())
    fn = int((~pred & gold).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def _eval_probs(params, encoder: EncoderState, ids_list, pad_to: int, batch_size: int):
    out = []
    for i in range(0, len(ids_list), batch_size):
        cls = embed_query_batch(encoder, ids_list[i : i + batch_size], pad_to=pad_to)
        logits, _ = _mlp_forward(params, cls)
        out.append(_sigmoid(logits))
    return np.vstack(out)


def train_classifier(
    encoder_state: EncoderState,
    data: DatasetSplit,
    cfg: ClassifierConfig,
    vocab: Vocab,
    catalog: Catalog,
    negative_weight: float = 1.0,
) -> TrainResult:
    """Freeze-then-unfreeze training. The input encoder state is never mutated;
    the returned encoder is a trained copy (identical if never unfrozen)."""
    if not data.train:
        raise ValueError("empty training split")
    max_len = encoder_state.config.max_len
    train_ids = [query_ids(lq.query, vocab, max_len) for lq in data.train]
    val_rows = data.validation or data.train
    val_ids = [query_ids(lq.query, vocab, max_len) for lq in val_rows]
    pad_to = min(max(len(r) for r in train_ids + val_ids), max_len)

    y_train, w_train = _label_matrices(data.train, catalog)
    y_val, _ = _label_matrices(val_rows, catalog)

    clf = init_classifier(cfg, encoder_state, catalog.size)
    clf.frozen = True
    rng = np.random.default_rng(cfg.seed)
    head_opt = Adam(lr=cfg.lr)
    n = len(train_ids)
    f1_history: list[float] = []

    input_hash = hashlib.sha256(encoder_bytes(encoder_state)).hexdigest()

    # frozen phase: backbone is read-only, so CLS embeddings are computed once
    cached_cls = None
    if cfg.freeze_epochs > 0:
        cls_chunks = []
        for i in range(0, n, cfg.batch_size):
            cls_chunks.append(
                embed_query_batch(encoder_state, train_ids[i : i + cfg.batch_size], pad_to=pad_to)
            )
        cached_cls = np.vstack(cls_chunks)

    for epoch in range(cfg.freeze_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            logits, cache = _mlp_forward(clf.params, cached_cls[idx], cfg.dropout, rng)
            loss, dlogits = _bce_batch_grad(logits, y_train[idx], w_train[idx], negative_weight)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite classifier loss at epoch {epoch}")
            grads, _ = _mlp_backward(clf.params, cache, dlogits)
            head_opt.step(clf.params, grads)
        probs = _eval_probs(clf.params, encoder_state, val_ids, pad_to, cfg.batch_size)
        f1_history.append(_micro_f1(probs, y_val, cfg.threshold))

    after_freeze_hash = hashlib.sha256(encoder_bytes(encoder_state)).hexdigest()

    # unfrozen phase: train a copy of the backbone together with the head
    encoder_out = encoder_state
    if cfg.total_epochs > cfg.freeze_epochs:
        encoder_out = encoder_state.copy()
        backbone_lr = cfg.backbone_lr if cfg.backbone_lr is not None else cfg.lr / 10.0
        full_opt = Adam(lr=backbone_lr)
        clf.frozen = False
        for epoch in range(cfg.freeze_epochs, cfg.total_epochs):
            perm = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                batch_ids = [train_ids[i] for i in idx]
                cls, hidden, cache = embed_query_batch_cached(encoder_out, batch_ids, pad_to=pad_to)
                logits, mlp_cache = _mlp_forward(clf.params, cls, cfg.dropout, rng)
                loss, dlogits = _bce_batch_grad(logits, y_train[idx], w_train[idx], negative_weight)
                if not math.isfinite(loss):
                    raise NumericError(f"non-finite classifier loss at epoch {epoch}")
                head_grads, dcls = _mlp_backward(clf.params, mlp_cache, dlogits)
                d_hidden = np.zeros_like(hidden)
                d_hidden[:, 0, :] = dcls
                enc_grads = encoder_backward(encoder_out, cache, d_hidden)
                head_opt.step(clf.params, head_grads)
                full_opt.step(encoder_out.params, enc_grads)
            probs = _eval_probs(clf.params, encoder_out, val_ids, pad_to, cfg.batch_size)
            f1_history.append(_micro_f1(probs, y_val, cfg.threshold))

    clf.encoder = encoder_out
    return TrainResult(
        classifier=clf,
        encoder=encoder_out,
        f1_history=f1_history,
        backbone_hash_input=input_hash,
        backbone_hash_after_freeze=after_freeze_hash,
    )


# ---------------------------------------------------------------------------
# checkpoint bundle

def save_bundle(result: TrainResult, encoder_path, classifier_path,
                vocab_hash: str, catalog_hash: str) -> None:
    """Write the trained backbone and head; the head references the backbone
    and catalog by hash so serving can refuse mismatched artifacts."""
    checkpoints.save_encoder(result.encoder, encoder_path, vocab_hash=vocab_hash)
    cfg = result.classifier.config
    cfg_dict = {
        "hidden": list(cfg.hidden), "dropout": cfg.dropout, "lr": cfg.lr,
        "freeze_epochs": cfg.freeze_epochs, "total_epochs": cfg.total_epochs,
        "batch_size": cfg.batch_size, "threshold": cfg.threshold, "seed": cfg.seed,
    }
    checkpoints.save_classifier(
        cfg_dict, result.classifier.params, classifier_path,
        encoder_hash=checkpoints.file_sha256(encoder_path),
        catalog_hash=catalog_hash,
    )


def load_bundle(catalog_path, vocab_path, encoder_path, classifier_path):
    """Load and hash-verify a (catalog, vocab, classifier) serving bundle."""
    catalog = load_catalog(catalog_path)
    vocab = load_vocab(vocab_path)
    vocab_hash = checkpoints.file_sha256(vocab_path)
    encoder = checkpoints.load_encoder(encoder_path, expected_vocab_hash=vocab_hash)
    meta, params = checkpoints.load_classifier(
        classifier_path,
        expected_encoder_hash=checkpoints.file_sha256(encoder_path),
        expected_catalog_hash=checkpoints.file_sha256(catalog_path),
    )
    cfg_dict = dict(meta["config"])
    cfg_dict["hidden"] = tuple(cfg_dict["hidden"])
    clf = ClassifierState(
        config=ClassifierConfig(**cfg_dict), params=params, encoder=encoder, frozen=True
    )
    return catalog, vocab, clf
