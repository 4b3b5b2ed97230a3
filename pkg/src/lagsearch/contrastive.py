"""InfoNCE training of the encoder on distance-ranked positives and negatives."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .encoder import EncoderParams, backward_batch, cosine_sim, forward_batch, series_window
from .errors import InvalidInputError, NotFoundError, TrainingError
from .retrieval import ContrastiveSample
from .series import Dataset


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.2
    k_e: int = 5

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidInputError("temperature must be positive")
        if self.k_e < 1:
            raise InvalidInputError("k_e must be positive")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 50
    batch_size: int = 32
    early_stop_patience: int = 5
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")
        if min(self.learning_rate, self.max_epochs, self.batch_size, self.early_stop_patience) <= 0:
            raise InvalidInputError("training hyperparameters must be positive")
        if self.early_stop_patience > self.max_epochs:
            raise InvalidInputError("patience cannot exceed max_epochs")


def _log_ratio(pos_logits: np.ndarray, neg_logits: np.ndarray) -> np.ndarray:
    """``-log(Zpos / (Zpos + Zneg))`` row-wise, as a softplus of the log-ratio."""
    def lse(x):
        m = x.max(axis=-1, keepdims=True)
        return (m + np.log(np.sum(np.exp(x - m), axis=-1, keepdims=True)))[..., 0]

    d = lse(neg_logits) - lse(pos_logits)
    return np.where(d > 0, d + np.log1p(np.exp(-np.abs(d))), np.log1p(np.exp(-np.abs(d))))


def info_nce_loss(anchor, positives: Sequence, negatives: Sequence, lam: float = 0.2) -> float:
    """Contrastive loss of one anchor against its positive and negative embeddings."""
    if not positives or not negatives:
        raise InvalidInputError("need at least one positive and one negative")
    if not lam > 0:
        raise InvalidInputError("temperature must be positive")
    anchor = np.asarray(anchor, dtype=np.float64)
    for v in list(positives) + list(negatives):
        if np.shape(v) != anchor.shape:
            raise InvalidInputError("embedding dimensions differ")
    pos = np.array([cosine_sim(anchor, p) for p in positives]) / lam
    neg = np.array([cosine_sim(anchor, n) for n in negatives]) / lam
    return float(_log_ratio(pos, neg))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _windows(dataset: Dataset, ids: Sequence[str], input_len: int, where: str) -> np.ndarray:
    rows = []
    for sid in ids:
        if sid not in dataset:
            raise NotFoundError(f"sample refers to unknown series {sid!r}")
        rows.append(series_window(dataset[sid].values, input_len, where))
    return np.stack(rows)


def _index_batch(batch: Sequence[ContrastiveSample]):
    uniq: dict[str, int] = {}
    for s in batch:
        for sid in s.ids:
            uniq.setdefault(sid, len(uniq))
    try:
        anchors = np.array([uniq[s.anchor_id] for s in batch])
        pos = np.array([[uniq[p] for p in s.positive_ids] for s in batch])
        neg = np.array([[uniq[n] for n in s.negative_ids] for s in batch])
    except ValueError:
        raise InvalidInputError("samples in a batch must share positive/negative counts") from None
    return list(uniq), anchors, pos, neg


def batch_loss(params: EncoderParams, batch, dataset: Dataset, loss_cfg: LossConfig,
               where: str = "tail") -> float:
    ids, anchors, pos, neg = _index_batch(batch)
    emb, _ = forward_batch(params, _windows(dataset, ids, params.arch.input_len, where))
    return _loss_from_embeddings(emb, anchors, pos, neg, loss_cfg.lam)[0]


def _loss_from_embeddings(emb, anchors, pos, neg, lam, want_grad=False):
    a = emb[anchors]                                   # (B, D)
    pl = np.einsum("bd,bkd->bk", a, emb[pos]) / lam    # (B, P)
    nl = np.einsum("bd,bkd->bk", a, emb[neg]) / lam    # (B, N)
    losses = _log_ratio(pl, nl)
    loss = float(losses.mean())
    if not want_grad:
        return loss, None
    B = anchors.size
    all_logits = np.concatenate([pl, nl], axis=1)
    p_all = _softmax(all_logits)
    d_pl = (p_all[:, :pl.shape[1]] - _softmax(pl)) / (lam * B)
    d_nl = p_all[:, pl.shape[1]:] / (lam * B)
    d_emb = np.zeros_like(emb)
    np.add.at(d_emb, anchors, np.einsum("bk,bkd->bd", d_pl, emb[pos]) + np.einsum("bk,bkd->bd", d_nl, emb[neg]))
    np.add.at(d_emb, pos, d_pl[:, :, None] * a[:, None, :])
    np.add.at(d_emb, neg, d_nl[:, :, None] * a[:, None, :])
    return loss, d_emb


def loss_and_grads(
    params: EncoderParams,
    batch: Sequence[ContrastiveSample],
    dataset: Dataset,
    loss_cfg: LossConfig = LossConfig(),
    where: str = "tail",
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean InfoNCE loss over ``batch`` and its exact gradient per tensor.

    Each distinct series in the batch is encoded once; gradients with
    respect to its embedding are accumulated before a single backward pass.
    """
    if not batch:
        raise InvalidInputError("empty batch")
    ids, anchors, pos, neg = _index_batch(batch)
    x = _windows(dataset, ids, params.arch.input_len, where)
    emb, cache = forward_batch(params, x, keep_cache=True)
    loss, d_emb = _loss_from_embeddings(emb, anchors, pos, neg, loss_cfg.lam, want_grad=True)
    return loss, backward_batch(params, cache, d_emb)


class Adam:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: EncoderParams, grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            m_hat = m / (1 - c.beta1 ** self.t)
            v_hat = v / (1 - c.beta2 ** self.t)
            params.tensors[name] -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)


class SGD:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, params: EncoderParams, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            params.tensors[name] -= self.cfg.learning_rate * g


@dataclass
class TrainHistory:
    rows: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,train_loss,val_loss\n")
        for epoch, tr, va in self.rows:
            buf.write(f"{epoch},{tr!r},{va!r}\n")
        return buf.getvalue()

    @property
    def val_losses(self) -> list[float]:
        return [r[2] for r in self.rows]


def _batched_loss(params, samples, dataset, loss_cfg, batch_size, where) -> float:
    total = 0.0
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        total += batch_loss(params, chunk, dataset, loss_cfg, where) * len(chunk)
    return total / len(samples)


def train(
    params: EncoderParams,
    samples: Sequence[ContrastiveSample],
    dataset: Dataset,
    loss_cfg: LossConfig = LossConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    val_samples: Optional[Sequence[ContrastiveSample]] = None,
    where: str = "tail",
    loss_fn: Optional[Callable] = None,
    log: Optional[Callable[[str], None]] = None,
    val_dataset: Optional[Dataset] = None,
) -> tuple[EncoderParams, TrainHistory]:
    """Mini-batch training with early stopping on validation loss.

    Returns a copy of the parameters from the best validation epoch. The
    shuffle order comes from ``train_cfg.seed``, so a rerun with the same
    inputs reproduces the result. ``loss_fn`` replaces ``loss_and_grads``
    (same signature) for instrumentation. Validation ids resolve against
    ``val_dataset`` when given, else against ``dataset``.
    """
    if not samples or not val_samples:
        raise InvalidInputError("training needs non-empty train and validation samples")
    loss_fn = loss_fn or loss_and_grads
    val_dataset = dataset if val_dataset is None else val_dataset
    params = params.copy()
    opt = Adam(train_cfg) if train_cfg.optimizer == "adam" else SGD(train_cfg)
    rng = np.random.default_rng(train_cfg.seed)
    samples = list(samples)
    val_samples = list(val_samples)
    history = TrainHistory()
    best_val, best_params, stale = math.inf, params.copy(), 0

    for epoch in range(1, train_cfg.max_epochs + 1):
        order = rng.permutation(len(samples))
        total = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            chunk = [samples[i] for i in order[start:start + train_cfg.batch_size]]
            loss, grads = loss_fn(params, chunk, dataset, loss_cfg, where)
            if not math.isfinite(loss):
                raise TrainingError("non-finite training loss", epoch)
            opt.step(params, grads)
            total += loss * len(chunk)
        if not params.is_finite():
            raise TrainingError("parameters diverged", epoch)
        if loss_fn is loss_and_grads:
            val = _batched_loss(params, val_samples, val_dataset, loss_cfg, train_cfg.batch_size, where)
        else:
            val = loss_fn(params, val_samples, val_dataset, loss_cfg, where)[0]
        if not math.isfinite(val):
            raise TrainingError("non-finite validation loss", epoch)
        history.rows.append((epoch, total / len(samples), float(val)))
        if log:
            log(f"epoch {epoch}: train {total / len(samples):.5f} val {val:.5f}")
        if val < best_val:
            best_val, best_params, stale = val, params.copy(), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= train_cfg.early_stop_patience:
                break
    return best_params, history
