"""Convolutional series encoder with hand-written backward pass.

Each block is a same-padded stride-1 1-D convolution, ReLU and a
floor-mode max-pool. After the last block the time axis is averaged away,
an affine layer projects to the embedding size and the result is scaled to
unit L2 norm, so cosine similarity between embeddings is a dot product.

Activations are kept channels-last, ``(batch, time, channels)``.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._io import Reader, pack_str, write_atomic
from .errors import DataError, InvalidInputError
from .series import Dataset
from .ssdtw import DistanceMatrix

PARAMS_MAGIC = b"TLCC-E1"
EMBED_MAGIC = b"TLCC-V1"
DEFAULT_BLOCKS = ((32, 8, 2), (64, 5, 2), (128, 3, 2))


@dataclass(frozen=True)
class EncoderArch:
    """Layer sizes. ``blocks`` holds ``(out_channels, kernel_size, pool_size)``."""

    input_len: int
    blocks: tuple[tuple[int, int, int], ...] = DEFAULT_BLOCKS
    embedding_dim: int = 128
    in_channels: int = 1

    def __post_init__(self):
        blocks = tuple(tuple(int(v) for v in b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise InvalidInputError("encoder needs at least one block")
        if any(len(b) != 3 or min(b) < 1 for b in blocks):
            raise InvalidInputError("blocks are positive (out_channels, kernel, pool) triples")
        if self.embedding_dim < 2:
            raise InvalidInputError("embedding_dim must be at least 2")
        if self.input_len < 1 or self.in_channels < 1:
            raise InvalidInputError("input_len and in_channels must be positive")
        if self.lengths()[-1] < 1:
            raise InvalidInputError(f"input_len {self.input_len} pools away to nothing")

    def lengths(self) -> list[int]:
        """Temporal length entering each block, then after the last one."""
        out = [self.input_len]
        for _, _, pool in self.blocks:
            out.append(out[-1] // pool)
        return out

    def shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        in_ch = self.in_channels
        for i, (out_ch, k, _) in enumerate(self.blocks):
            shapes[f"conv{i}.weight"] = (out_ch, in_ch, k)
            shapes[f"conv{i}.bias"] = (out_ch,)
            in_ch = out_ch
        shapes["proj.weight"] = (self.embedding_dim, in_ch)
        shapes["proj.bias"] = (self.embedding_dim,)
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())


@dataclass
class EncoderParams:
    arch: EncoderArch
    tensors: dict[str, np.ndarray]
    seed: int = 0

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.arch, {k: v.copy() for k, v in self.tensors.items()}, self.seed)

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors.values()])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())

    # -- file format ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        a = self.arch
        head = [PARAMS_MAGIC, struct.pack("<III", a.input_len, a.in_channels, len(a.blocks))]
        head += [struct.pack("<III", *b) for b in a.blocks]
        head.append(struct.pack("<IQ", a.embedding_dim, self.seed))
        return b"".join(head) + self.flat().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncoderParams":
        r = Reader(data, "encoder params")
        r.magic(PARAMS_MAGIC)
        input_len, in_ch, n_blocks = r.unpack("<III")
        blocks = tuple(r.unpack("<III") for _ in range(n_blocks))
        emb, seed = r.unpack("<IQ")
        arch = EncoderArch(input_len, blocks, emb, in_ch)
        tensors = {}
        for name, shape in arch.shapes().items():
            n = int(np.prod(shape))
            tensors[name] = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
        if not r.at_end():
            raise DataError("trailing bytes after encoder params")
        return cls(arch, tensors, seed)

    def save(self, path) -> None:
        write_atomic(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "EncoderParams":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def init_params(arch: EncoderArch, seed: int = 0) -> EncoderParams:
    """Fan-in scaled uniform init: He bounds for convolutions, LeCun for the projection."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in arch.shapes().items():
        layer = name.split(".")[0]
        w_shape = arch.shapes()[f"{layer}.weight"]
        fan_in = int(np.prod(w_shape[1:]))
        if name.endswith(".weight"):
            gain = 6.0 if layer.startswith("conv") else 3.0
            bound = np.sqrt(gain / fan_in)
        else:
            bound = 1.0 / np.sqrt(fan_in)
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    return EncoderParams(arch, tensors, seed)


# -- forward / backward -------------------------------------------------------

def _as_batch(params: EncoderParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    arch = params.arch
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[1] != arch.input_len or x.shape[2] != arch.in_channels:
        raise InvalidInputError(
            f"encoder expects length {arch.input_len} with {arch.in_channels} channel(s), "
            f"got shape {x.shape}"
        )
    return x


def _patches(x: np.ndarray, k: int) -> np.ndarray:
    """Same-padded sliding windows, ``(B, L, C*k)`` ordered like ``weight.reshape(out, C*k)``."""
    left = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (left, k - 1 - left), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (B, L, C, k)
    return win.reshape(x.shape[0], x.shape[1], -1)


def forward_batch(params: EncoderParams, x, keep_cache: bool = False):
    """Embed a batch; returns ``(embeddings, cache)`` with cache ``None`` unless asked."""
    x = _as_batch(params, x)
    t = params.tensors
    h = x
    cache = {"blocks": []}
    for i, (out_ch, k, pool) in enumerate(params.arch.blocks):
        w = t[f"conv{i}.weight"]
        cols = _patches(h, k)
        z = cols @ w.reshape(out_ch, -1).T + t[f"conv{i}.bias"]
        r = np.maximum(z, 0.0)
        B, L, C = r.shape
        Lp = L // pool
        grouped = r[:, :Lp * pool].reshape(B, Lp, pool, C)
        if keep_cache:
            arg = grouped.argmax(axis=2)
            h = np.take_along_axis(grouped, arg[:, :, None, :], axis=2)[:, :, 0, :]
            cache["blocks"].append((cols, z, arg, L))
        else:
            h = grouped.max(axis=2)
    g = h.mean(axis=1)
    pre = g @ t["proj.weight"].T + t["proj.bias"]
    norm = np.sqrt(np.sum(pre * pre, axis=1))
    degenerate = norm == 0.0
    safe = np.where(degenerate, 1.0, norm)
    emb = pre / safe[:, None]
    emb[degenerate] = 0.0
    emb[degenerate, 0] = 1.0
    if keep_cache:
        cache.update(g=g, emb=emb, norm=safe, degenerate=degenerate, Lp=h.shape[1])
        return emb, cache
    return emb, None


def backward_batch(params: EncoderParams, cache, d_emb: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of ``sum(d_emb * embeddings)`` with respect to every tensor."""
    t = params.tensors
    emb, norm = cache["emb"], cache["norm"]
    d_pre = (d_emb - emb * np.sum(emb * d_emb, axis=1, keepdims=True)) / norm[:, None]
    d_pre[cache["degenerate"]] = 0.0  # fallback embedding is constant
    grads = {
        "proj.weight": d_pre.T @ cache["g"],
        "proj.bias": d_pre.sum(axis=0),
    }
    d_g = d_pre @ t["proj.weight"]
    d_h = np.repeat(d_g[:, None, :] / cache["Lp"], cache["Lp"], axis=1)
    blocks = params.arch.blocks
    for i in range(len(blocks) - 1, -1, -1):
        out_ch, k, pool = blocks[i]
        cols, z, arg, L = cache["blocks"][i]
        B, Lp, C = d_h.shape
        d_grouped = np.zeros((B, Lp, pool, C))
        np.put_along_axis(d_grouped, arg[:, :, None, :], d_h[:, :, None, :], axis=2)
        d_r = np.zeros((B, L, C))
        d_r[:, :Lp * pool] = d_grouped.reshape(B, Lp * pool, C)
        d_z = d_r * (z > 0.0)
        w = t[f"conv{i}.weight"]
        flat_dz = d_z.reshape(-1, out_ch)
        grads[f"conv{i}.weight"] = (flat_dz.T @ cols.reshape(flat_dz.shape[0], -1)).reshape(w.shape)
        grads[f"conv{i}.bias"] = flat_dz.sum(axis=0)
        if i == 0:
            break
        in_ch = w.shape[1]
        d_cols = (d_z @ w.reshape(out_ch, -1)).reshape(B, L, in_ch, k)
        left = (k - 1) // 2
        d_xp = np.zeros((B, L + k - 1, in_ch))
        for s in range(k):
            d_xp[:, s:s + L] += d_cols[:, :, :, s]
        d_h = d_xp[:, left:left + L]
    return {name: grads[name] for name in t}


def forward(params: EncoderParams, x) -> np.ndarray:
    """Unit-norm embedding of one input window.

    An all-zero pre-normalization vector maps to the first basis vector.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 and not (x.ndim == 2 and params.arch.in_channels > 1):
        raise InvalidInputError("forward takes a single window; use forward_batch")
    return forward_batch(params, x)[0][0]


def cosine_sim(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InvalidInputError("cosine_sim needs vectors of equal shape")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise InvalidInputError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


# -- batch embedding ----------------------------------------------------------

def series_window(values: np.ndarray, input_len: int, where: str = "tail") -> np.ndarray:
    if values.size < input_len:
        raise DataError(f"series of length {values.size} is shorter than input_len {input_len}")
    if where == "tail":
        return values[values.size - input_len:]
    if where == "head":
        return values[:input_len]
    raise InvalidInputError(f"window must be 'tail' or 'head', not {where!r}")


@dataclass
class EmbeddingSet:
    ids: list[str]
    vectors: np.ndarray
    errors: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64).reshape(len(self.ids), -1)

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(zip(self.ids, self.vectors))

    def to_bytes(self) -> bytes:
        parts = [EMBED_MAGIC, struct.pack("<II", len(self.ids), self.dim)]
        for sid, vec in zip(self.ids, self.vectors):
            parts.append(pack_str(sid))
            parts.append(vec.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddingSet":
        r = Reader(data, "embedding set")
        r.magic(EMBED_MAGIC)
        count, dim = r.unpack("<II")
        ids, vecs = [], []
        for _ in range(count):
            ids.append(r.string())
            vecs.append(np.frombuffer(r.take(8 * dim), dtype="<f8"))
        if not r.at_end():
            raise DataError("trailing bytes after embedding set")
        return cls(ids, np.array(vecs).reshape(count, dim))

    def save(self, path) -> None:
        write_atomic(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "EmbeddingSet":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("series_id," + ",".join(f"e{k}" for k in range(self.dim)) + "\n")
        for sid, vec in zip(self.ids, self.vectors):
            buf.write(sid + "," + ",".join(repr(float(v)) for v in vec) + "\n")
        return buf.getvalue()


def embed_all(params: EncoderParams, dataset: Dataset, where: str = "tail") -> EmbeddingSet:
    """Embed every series from its ``input_len`` slice (most recent values by default).

    Series are embedded one at a time so each vector is independent of the
    dataset's order. Too-short series are reported in ``errors`` and skipped.
    """
    ids, vecs, errors = [], [], {}
    for ts in dataset:
        try:
            window = series_window(ts.values, params.arch.input_len, where)
        except DataError as exc:
            errors[ts.id] = str(exc)
            continue
        ids.append(ts.id)
        vecs.append(forward_batch(params, window)[0][0])
    dim = params.arch.embedding_dim
    return EmbeddingSet(ids, np.array(vecs).reshape(len(ids), dim), errors)


def embedding_matrix(rows: EmbeddingSet, cols: Optional[EmbeddingSet] = None) -> DistanceMatrix:
    """Cosine distances ``1 - sim`` between embedded series; self pairs are ``inf``."""
    cols = rows if cols is None else cols
    values = np.maximum(1.0 - rows.vectors @ cols.vectors.T, 0.0)
    col_pos = {c: j for j, c in enumerate(cols.ids)}
    for i, rid in enumerate(rows.ids):
        j = col_pos.get(rid)
        if j is not None:
            values[i, j] = np.inf
    return DistanceMatrix(list(rows.ids), list(cols.ids), values, metric="cosine")
