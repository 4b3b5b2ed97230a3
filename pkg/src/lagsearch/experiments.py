"""Repeatable trials on the planted-lag family.

Shared by ``lagsearch sweep`` and the acceptance tests. Encoder trials
train on one draw of the family, stop early against a second draw and
score retrieval on a third, so the reported recall is out of sample.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .contrastive import LossConfig, TrainConfig, train
from .dtw import DEFAULT_CONFIG, DtwConfig
from .encoder import EncoderArch, embed_all, embedding_matrix, init_params
from .forecaster import Comparison, ForecastModelSpec, compare_pipelines
from .retrieval import build_contrastive_samples, mean_recall, top_k
from .series import Dataset, WindowSpec, generate_planted_lag, normalize_dataset
from .ssdtw import PRESETS, DistanceMatrix, ShiftSet, pairwise_matrix

SYNTH_BLOCKS = ((32, 8, 4), (64, 5, 4), (128, 3, 7))
VAL_OFFSET = 500
TEST_OFFSET = 1000


@dataclass(frozen=True)
class Family:
    """Parameters of one planted-lag family."""

    n_series: int = 100
    length: int = 120
    lag: int = 5
    noise_sigma: float = 0.1
    n_correlated: int = 3
    normalize: bool = True

    def draw(self, seed: int) -> tuple[Dataset, dict[str, list[str]]]:
        ds, truth = generate_planted_lag(
            self.n_series, self.length, self.lag, self.noise_sigma, self.n_correlated, seed
        )
        return (normalize_dataset(ds) if self.normalize else ds), truth


def companion_recall(matrix: DistanceMatrix, truth: dict[str, list[str]]) -> float:
    """Mean share of planted companions found in each target's top ``len(companions)``."""
    scores = [len(set(top_k(matrix, t, len(c)).ids) & set(c)) / len(c) for t, c in truth.items()]
    return float(np.mean(scores))


@dataclass(frozen=True)
class CleTrial:
    seed: int
    target_recall: float      # held-out draw, planted targets
    all_recall: float         # held-out draw, every series as query
    companion_recall: float   # held-out draw, against the planted truth
    epochs: int


def cle_trial(
    seed: int,
    family: Family = Family(),
    shift_set: ShiftSet = PRESETS["synthetic"],
    blocks=SYNTH_BLOCKS,
    embedding_dim: int = 128,
    loss_cfg: LossConfig = LossConfig(),
    train_cfg: Optional[TrainConfig] = None,
    n_neg: Optional[int] = None,
    k: int = 5,
    dtw_cfg: DtwConfig = DEFAULT_CONFIG,
    workers: int = 1,
    log: Optional[Callable[[str], None]] = None,
) -> CleTrial:
    """Train an encoder on draw ``seed`` and score recall@k on a fresh draw."""
    train_cfg = replace(train_cfg or TrainConfig(), seed=seed)

    def exact(draw_seed):
        ds, truth = family.draw(draw_seed)
        return ds, truth, pairwise_matrix(ds, ds, shift_set, dtw_cfg, workers)

    ds, _, m = exact(seed)
    val_ds, _, val_m = exact(seed + VAL_OFFSET)
    test_ds, test_truth, test_m = exact(seed + TEST_OFFSET)
    samples = build_contrastive_samples(m, k_e=loss_cfg.k_e, n_neg=n_neg)
    val_samples = build_contrastive_samples(val_m, k_e=loss_cfg.k_e, n_neg=n_neg)
    arch = EncoderArch(family.length, tuple(blocks), embedding_dim)
    params, history = train(init_params(arch, seed), samples, ds, loss_cfg, train_cfg,
                            val_samples, log=log, val_dataset=val_ds)
    emb = embedding_matrix(embed_all(params, test_ds))
    return CleTrial(
        seed,
        mean_recall(test_m, emb, k, list(test_truth)),
        mean_recall(test_m, emb, k),
        companion_recall(emb, test_truth),
        len(history.rows),
    )


def forecast_trial(
    seeds: Sequence[int],
    family: Family = Family(length=240, normalize=False),
    selection_len: int = 120,
    shift_set: ShiftSet = PRESETS["synthetic"],
    k_s: int = 3,
    methods: Sequence[str] = ("single", "random", "dtw", "ssdtw"),
    spec: ForecastModelSpec = ForecastModelSpec(),
    window: WindowSpec = WindowSpec(),
    workers: int = 1,
) -> Comparison:
    """Forecast comparison per seed, each seed on its own draw of the family.

    Selection and forecasting periods are z-scored separately inside
    ``compare_pipelines``; only the planted targets are forecast.
    """
    merged = Comparison()
    for seed in seeds:
        ds, truth = family.draw(seed)
        res = compare_pipelines(ds, shift_set, (spec,), (seed,), k_s=k_s, window=window,
                                selection_len=selection_len, targets=list(truth),
                                methods=methods, workers=workers)
        for key, rows in res.per_seed.items():
            merged.per_seed.setdefault(key, []).extend(rows)
    return merged
