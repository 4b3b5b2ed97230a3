"""Lag-aware similarity search, contrastive embedding and forecasting for time series."""

from ._backend import BACKEND
from .contrastive import LossConfig, TrainConfig, info_nce_loss, loss_and_grads, train
from .dtw import DtwConfig, dtw, dtw_path
from .encoder import (
    EmbeddingSet, EncoderArch, EncoderParams, embed_all, embedding_matrix, forward, init_params,
)
from .errors import (
    DataError, InvalidInputError, LagSearchError, NotFoundError, NumericalError, ParseError,
    TrainingError,
)
from .forecaster import ForecastModelSpec, build_samples, compare_pipelines, evaluate, fit
from .retrieval import RetrievalResult, recall_at_k, sample_contrastive, top_k
from .series import (
    Dataset, SplitSpec, TimeSeries, WindowSpec, generate_planted_lag, ingest_csv, make_windows,
    split_dataset, zscore_normalize,
)
from .ssdtw import PRESETS, DistanceMatrix, ShiftSet, pairwise_matrix, ssdtw, time_shift

__version__ = "0.1.0"
