"""Baseline one-step forecasters fed with the target plus retrieved series."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .dtw import DEFAULT_CONFIG, DtwConfig
from .encoder import EmbeddingSet, EncoderParams, embed_all, embedding_matrix
from .errors import DataError, InvalidInputError, NumericalError
from .retrieval import RetrievalResult, top_k
from .series import Dataset, SplitSpec, WindowSpec, make_windows, normalize_dataset, split_indices
from .ssdtw import ShiftSet, pairwise_matrix

METHODS = ("single", "random", "dtw", "ssdtw", "cle")


@dataclass(frozen=True)
class ForecastSample:
    target_id: str
    target_window: np.ndarray
    aux_windows: np.ndarray  # (k, input_len), k may be 0
    label: float

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.target_window, self.aux_windows.ravel()])


def build_samples(
    dataset: Dataset,
    retrieval: Mapping[str, RetrievalResult],
    window: WindowSpec = WindowSpec(),
    aux_shifts: Optional[Mapping[str, Mapping[str, int]]] = None,
) -> list[ForecastSample]:
    """Sliding-window samples for every target in ``retrieval``.

    Auxiliary windows cover the same time steps as the target window.
    ``aux_shifts[target][aux]`` instead takes aux windows ``shift`` steps
    earlier, lining each lead series up with the target; windows that
    would start before the series are dropped.
    """
    out = []
    for tid, res in retrieval.items():
        target = dataset[tid].values
        aux = [dataset[cid].values for cid in res.ids]
        for cid, vals in zip(res.ids, aux):
            if vals.size != target.size:
                raise DataError(f"aux series {cid!r} is not aligned with target {tid!r}")
        shifts = [int((aux_shifts or {}).get(tid, {}).get(cid, 0)) for cid in res.ids]
        w = make_windows(target, window)
        lo = max(shifts, default=0)
        L = window.input_len
        for x, y, start in zip(w.inputs, w.targets, w.starts):
            if start < lo:
                continue
            aux_w = np.array([a[start - s:start - s + L] for a, s in zip(aux, shifts)]).reshape(len(aux), L)
            out.append(ForecastSample(tid, x, aux_w, float(y)))
    return out


def stack(samples: Sequence[ForecastSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        raise InvalidInputError("no samples")
    widths = {s.features.size for s in samples}
    if len(widths) != 1:
        raise DataError("samples have different aux counts")
    X = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples])
    return X, y


# -- models -------------------------------------------------------------------

@dataclass(frozen=True)
class ForecastModelSpec:
    kind: str = "ridge"
    alpha: float = 1.0
    hidden: int = 64
    learning_rate: float = 1e-3
    max_epochs: int = 50
    batch_size: int = 32
    patience: int = 5

    def __post_init__(self):
        if self.kind not in ("ridge", "mlp"):
            raise InvalidInputError(f"unknown model kind {self.kind!r}")
        if self.alpha < 0 or self.hidden < 1:
            raise InvalidInputError("alpha must be >= 0 and hidden >= 1")


@dataclass
class RidgeModel:
    weights: np.ndarray
    bias: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias


def fit_ridge(X: np.ndarray, y: np.ndarray, alpha: float) -> RidgeModel:
    """Closed-form ridge with an unpenalized intercept (fit on centered data)."""
    x_mean, y_mean = X.mean(axis=0), y.mean()
    Xc = X - x_mean
    gram = Xc.T @ Xc
    if alpha > 0:
        gram[np.diag_indices_from(gram)] += alpha
    elif np.linalg.matrix_rank(Xc) < X.shape[1]:
        raise NumericalError("normal matrix is singular with alpha=0; use alpha > 0")
    try:
        w = np.linalg.solve(gram, Xc.T @ (y - y_mean))
    except np.linalg.LinAlgError:
        raise NumericalError("normal matrix is singular; use a larger alpha") from None
    return RidgeModel(w, float(y_mean - x_mean @ w))


@dataclass
class MLPModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(X @ self.w1 + self.b1, 0.0) @ self.w2 + self.b2


def fit_mlp(X, y, X_val, y_val, spec: ForecastModelSpec, seed: int) -> MLPModel:
    """One-hidden-layer ReLU regressor, Adam on MSE, early stopping on validation."""
    rng = np.random.default_rng(seed)
    d = X.shape[1]
    params = {
        "w1": rng.uniform(-1, 1, (d, spec.hidden)) * math.sqrt(6.0 / d),
        "b1": np.zeros(spec.hidden),
        "w2": rng.uniform(-1, 1, spec.hidden) * math.sqrt(3.0 / spec.hidden),
        "b2": np.zeros(1),
    }
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    step = 0

    def model(p):
        return MLPModel(p["w1"], p["b1"], p["w2"], float(p["b2"][0]))

    have_val = X_val is not None and len(X_val) > 0
    best, best_p, stale = math.inf, {k: a.copy() for k, a in params.items()}, 0
    for _ in range(spec.max_epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(order), spec.batch_size):
            idx = order[start:start + spec.batch_size]
            xb, yb = X[idx], y[idx]
            h_pre = xb @ params["w1"] + params["b1"]
            h = np.maximum(h_pre, 0.0)
            err = h @ params["w2"] + params["b2"][0] - yb
            g_out = 2.0 * err / len(idx)
            g_h = np.outer(g_out, params["w2"]) * (h_pre > 0)
            grads = {"w1": xb.T @ g_h, "b1": g_h.sum(0), "w2": h.T @ g_out, "b2": np.array([g_out.sum()])}
            step += 1
            for k, g in grads.items():
                m[k] = 0.9 * m[k] + 0.1 * g
                v[k] = 0.999 * v[k] + 0.001 * g * g
                params[k] -= spec.learning_rate * (m[k] / (1 - 0.9 ** step)) / (
                    np.sqrt(v[k] / (1 - 0.999 ** step)) + 1e-8)
        if not all(np.all(np.isfinite(a)) for a in params.values()):
            raise NumericalError("MLP training diverged")
        if not have_val:
            best_p = {k: a.copy() for k, a in params.items()}
            continue
        val = float(np.mean((model(params).predict(X_val) - y_val) ** 2))
        if val < best:
            best, best_p, stale = val, {k: a.copy() for k, a in params.items()}, 0
        else:
            stale += 1
            if stale >= spec.patience:
                break
    return model(best_p)


def fit(spec: ForecastModelSpec, train: Sequence[ForecastSample],
        val: Sequence[ForecastSample] = (), seed: int = 0):
    """Train the model described by ``spec``; ridge ignores ``val`` and ``seed``."""
    if not train:
        raise InvalidInputError("empty training set")
    X, y = stack(train)
    if spec.kind == "ridge":
        return fit_ridge(X, y, spec.alpha)
    Xv, yv = stack(val) if val else (None, None)
    return fit_mlp(X, y, Xv, yv, spec, seed)


def evaluate(model, test: Sequence[ForecastSample]) -> tuple[float, float]:
    """``(mse, mae)`` of one-step predictions."""
    X, y = stack(test)
    resid = model.predict(X) - y
    return float(np.mean(resid ** 2)), float(np.mean(np.abs(resid)))


# -- pipeline comparison ------------------------------------------------------

@dataclass
class Comparison:
    """Per-seed metrics keyed by ``(model_kind, method)``."""

    per_seed: dict[tuple[str, str], list[tuple[int, float, float]]] = field(default_factory=dict)

    def add(self, model: str, method: str, seed: int, mse: float, mae: float) -> None:
        self.per_seed.setdefault((model, method), []).append((seed, mse, mae))

    def mean(self, model: str, method: str) -> tuple[float, float]:
        rows = self.per_seed[(model, method)]
        return (float(np.mean([r[1] for r in rows])), float(np.mean([r[2] for r in rows])))

    def mse(self, method: str, model: str = "ridge") -> float:
        return self.mean(model, method)[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("model,method,seed,mse,mae\n")
        for (model, method), rows in self.per_seed.items():
            for seed, mse, mae in rows:
                buf.write(f"{model},{method},{seed},{float(mse)!r},{float(mae)!r}\n")
            mse, mae = self.mean(model, method)
            buf.write(f"{model},{method},mean,{mse!r},{mae!r}\n")
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'model':<8}{'method':<10}{'MSE':>14}{'MAE':>14}{'seeds':>7}"]
        for (model, method), rows in self.per_seed.items():
            mse, mae = self.mean(model, method)
            lines.append(f"{model:<8}{method:<10}{mse:>14.6g}{mae:>14.6g}{len(rows):>7}")
        return "\n".join(lines) + "\n"


def random_selection(candidates: Sequence[str], target_id: str, k: int,
                     rng: np.random.Generator) -> RetrievalResult:
    pool = [c for c in candidates if c != target_id]
    if k > len(pool):
        raise InvalidInputError(f"cannot draw {k} random series from {len(pool)}")
    picks = rng.choice(len(pool), size=k, replace=False)
    return RetrievalResult(target_id, tuple((pool[i], math.nan) for i in picks))


def _argmin_map(matrix, retrieval: Mapping[str, RetrievalResult]) -> dict[str, dict[str, int]]:
    out = {}
    for tid, res in retrieval.items():
        i = matrix.row_ids.index(tid)
        out[tid] = {c: int(matrix.argmin_shifts[i, matrix.col_position(c)]) for c in res.ids}
    return out


def compare_pipelines(
    dataset: Dataset,
    shift_set: ShiftSet,
    specs: Sequence[ForecastModelSpec] = (ForecastModelSpec(),),
    seeds: Sequence[int] = (0,),
    k_s: int = 3,
    window: WindowSpec = WindowSpec(),
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    selection_len: Optional[int] = None,
    targets: Optional[Sequence[str]] = None,
    encoder: Optional[EncoderParams] = None,
    methods: Sequence[str] = METHODS,
    dtw_cfg: DtwConfig = DEFAULT_CONFIG,
    normalize: bool = True,
    exclude: Sequence[str] = (),
    workers: int = 1,
    shift_aux_by_argmin: bool = False,
) -> Comparison:
    """Forecast error for each auxiliary-selection method, averaged over seeds.

    The first ``selection_len`` steps rank candidates (shifted DTW, plain
    DTW or encoder embeddings); later steps are windowed, split at random
    into train/val/test and used for forecasting. Every method sees the same
    windows and split for a given seed. ``cle`` runs only when an encoder
    is supplied. ``shift_aux_by_argmin`` lines shifted-DTW picks up by their
    best shift, which drops the earliest windows of that method.
    """
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown selection method {m!r}")
    if selection_len is None:
        select_ds, forecast_ds = dataset, dataset
    else:
        select_ds, forecast_ds = dataset.slice(0, selection_len), dataset.slice(selection_len)
    if normalize:
        select_ds, forecast_ds = normalize_dataset(select_ds), normalize_dataset(forecast_ds)
    targets = list(dataset.ids if targets is None else targets)
    target_ds = select_ds.subset(targets)
    pool = [c for c in select_ds.ids if c not in set(exclude)]
    cand_ds = select_ds.subset(pool)

    matrices = {}
    if "ssdtw" in methods:
        matrices["ssdtw"] = pairwise_matrix(target_ds, cand_ds, shift_set, dtw_cfg, workers)
    if "dtw" in methods:
        matrices["dtw"] = pairwise_matrix(target_ds, cand_ds, None, dtw_cfg, workers, metric="dtw")
    if "cle" in methods and encoder is not None:
        emb = embed_all(encoder, select_ds)
        if emb.errors:
            raise DataError(f"cannot embed {sorted(emb.errors)[0]!r}: {next(iter(emb.errors.values()))}")
        by_id = emb.as_dict()
        rows = EmbeddingSet(targets, np.stack([by_id[t] for t in targets]))
        cols = EmbeddingSet(pool, np.stack([by_id[c] for c in pool]))
        matrices["cle"] = embedding_matrix(rows, cols)

    result = Comparison()
    for seed in seeds:
        rng = np.random.default_rng(seed)
        retrievals: dict[str, dict[str, RetrievalResult]] = {}
        for method in methods:
            if method == "single":
                retrievals[method] = {t: RetrievalResult(t) for t in targets}
            elif method == "random":
                retrievals[method] = {t: random_selection(pool, t, k_s, rng) for t in targets}
            elif method in matrices:
                retrievals[method] = {t: top_k(matrices[method], t, k_s) for t in targets}
        splits: dict[int, tuple] = {}
        for method, retrieval in retrievals.items():
            aux_shifts = None
            if method == "ssdtw" and shift_aux_by_argmin:
                aux_shifts = _argmin_map(matrices["ssdtw"], retrieval)
            samples = build_samples(forecast_ds, retrieval, window, aux_shifts)
            if len(samples) not in splits:
                splits[len(samples)] = split_indices(len(samples), SplitSpec(split_ratios, seed))
            tr, va, te = ([samples[i] for i in part] for part in splits[len(samples)])
            for spec in specs:
                model = fit(spec, tr, va, seed)
                mse, mae = evaluate(model, te)
                result.add(spec.kind, method, seed, mse, mae)
    return result
