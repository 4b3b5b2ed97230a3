"""Series data model, CSV ingestion, normalization, windowing and splits."""

from __future__ import annotations

import csv
import datetime as _dt
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from ._io import Reader, pack_str, write_atomic
from .errors import DataError, InvalidInputError, NotFoundError, ParseError

DATASET_MAGIC = b"TLCC-DS1"
MISSING_POLICIES = ("drop-series", "forward-fill")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One identified, finite, time-ordered sequence of values."""

    id: str
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64).ravel()
        if arr.size < 1:
            raise InvalidInputError(f"series {self.id!r} is empty")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"series {self.id!r} has non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"TimeSeries(id={self.id!r}, T={len(self)})"


@dataclass(frozen=True)
class Dataset:
    """Immutable id-keyed collection of series.

    ``stats`` maps series id to the ``(mean, std)`` used to normalize it,
    when the dataset is a normalized view.
    """

    series: Mapping[str, TimeSeries]
    source: Optional[str] = None
    stats: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    allow_ragged: bool = False

    def __post_init__(self):
        if not self.allow_ragged and len({len(s) for s in self.series.values()}) > 1:
            raise DataError("series have unequal lengths (set allow_ragged to permit)")

    @classmethod
    def from_series(cls, items: Iterable[TimeSeries], **kwargs) -> "Dataset":
        out: dict[str, TimeSeries] = {}
        for ts in items:
            if ts.id in out:
                raise DataError(f"duplicate series id {ts.id!r}")
            out[ts.id] = ts
        return cls(series=out, **kwargs)

    @classmethod
    def from_arrays(cls, ids: Sequence[str], values, **kwargs) -> "Dataset":
        return cls.from_series((TimeSeries(i, v) for i, v in zip(ids, values)), **kwargs)

    @property
    def ids(self) -> list[str]:
        return list(self.series)

    def __len__(self):
        return len(self.series)

    def __iter__(self):
        return iter(self.series.values())

    def __contains__(self, series_id):
        return series_id in self.series

    def __getitem__(self, series_id: str) -> TimeSeries:
        try:
            return self.series[series_id]
        except KeyError:
            raise NotFoundError(f"unknown series id {series_id!r}") from None

    @property
    def length(self) -> int:
        """Common series length; fails on ragged datasets."""
        lengths = {len(s) for s in self.series.values()}
        if len(lengths) != 1:
            raise DataError("dataset is ragged or empty")
        return lengths.pop()

    def matrix(self, ids: Optional[Sequence[str]] = None) -> np.ndarray:
        ids = self.ids if ids is None else ids
        return np.stack([self[i].values for i in ids])

    def subset(self, ids: Sequence[str]) -> "Dataset":
        return Dataset(
            series={i: self[i] for i in ids},
            source=self.source,
            stats={i: self.stats[i] for i in ids if i in self.stats},
            allow_ragged=self.allow_ragged,
        )

    def slice(self, start: int, stop: Optional[int] = None) -> "Dataset":
        """Same series restricted to time indices ``[start, stop)``."""
        return Dataset.from_series(
            (TimeSeries(s.id, s.values[start:stop]) for s in self),
            source=self.source,
            allow_ragged=self.allow_ragged,
        )


# -- ingestion ---------------------------------------------------------------

def _parse_timestamp(raw: str, line: int):
    raw = raw.strip()
    try:
        return (0, int(raw))
    except ValueError:
        pass
    try:
        return (1, _dt.datetime.fromisoformat(raw))
    except ValueError:
        raise ParseError(f"unparseable timestamp {raw!r}", line) from None


def ingest_csv(
    path,
    schema: Optional[Mapping[str, str]] = None,
    missing: str = "drop-series",
    target_feature: str = "value",
    allow_ragged: bool = False,
) -> Dataset:
    """Read long-format ``series_id,timestamp,value`` rows into a Dataset.

    ``schema`` maps the logical names ``series_id``/``timestamp`` to the
    file's header names; ``target_feature`` names the value column (e.g.
    ``value_2`` in multi-feature files). Series with blank or non-finite
    cells are dropped, or forward-filled under ``missing="forward-fill"``.
    """
    if missing not in MISSING_POLICIES:
        raise InvalidInputError(f"missing policy must be one of {MISSING_POLICIES}")
    schema = dict(schema or {})
    id_col = schema.get("series_id", "series_id")
    ts_col = schema.get("timestamp", "timestamp")
    val_col = schema.get(target_feature, target_feature)

    rows: dict[str, dict] = {}
    kinds: set[int] = set()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (id_col, ts_col, val_col):
            if col not in header:
                raise ParseError(f"missing column {col!r} in header", 1)
        for rec in reader:
            line = reader.line_num
            if None in rec or any(rec.get(c) is None for c in (id_col, ts_col, val_col)):
                raise ParseError("wrong number of fields", line)
            sid = rec[id_col].strip()
            if not sid:
                raise ParseError("empty series_id", line)
            key = _parse_timestamp(rec[ts_col], line)
            kinds.add(key[0])
            if len(kinds) > 1:
                raise ParseError("mixed integer and date timestamps", line)
            raw = rec[val_col].strip()
            if raw == "":
                value = math.nan
            else:
                try:
                    value = float(raw)
                except ValueError:
                    raise ParseError(f"unparseable value {raw!r}", line) from None
            per = rows.setdefault(sid, {})
            if key[1] in per:
                raise DataError(f"duplicate timestamp {rec[ts_col].strip()!r} for series {sid!r} (line {line})")
            per[key[1]] = value

    out = []
    for sid in sorted(rows):
        per = rows[sid]
        values = np.array([per[k] for k in sorted(per)], dtype=np.float64)
        bad = ~np.isfinite(values)
        if bad.any():
            if missing == "drop-series" or bad.all():
                continue
            values = _forward_fill(values, bad)
        out.append(TimeSeries(sid, values))
    return Dataset.from_series(out, source=str(path), allow_ragged=allow_ragged)


def _forward_fill(values: np.ndarray, bad: np.ndarray) -> np.ndarray:
    values = values.copy()
    first = int(np.argmax(~bad))
    values[:first] = values[first]  # no history before the first valid cell
    for t in range(first + 1, values.size):
        if bad[t]:
            values[t] = values[t - 1]
    return values


# -- normalization -----------------------------------------------------------

def zscore_normalize(ts: TimeSeries) -> tuple[TimeSeries, float, float]:
    """Z-score with the population standard deviation.

    A constant series maps to zeros and reports ``std == 0``.
    """
    if len(ts) < 2:
        raise InvalidInputError("z-score needs at least two values")
    mean = float(np.mean(ts.values))
    std = float(np.std(ts.values))
    if std == 0.0:
        return TimeSeries(ts.id, np.zeros(len(ts))), mean, 0.0
    return TimeSeries(ts.id, (ts.values - mean) / std), mean, std


def zscore_denormalize(ts: TimeSeries, mean: float, std: float) -> TimeSeries:
    return TimeSeries(ts.id, ts.values * std + mean)


def normalize_dataset(ds: Dataset) -> Dataset:
    """Per-series z-scored copy; stats land in ``Dataset.stats``."""
    items, stats = [], {}
    for ts in ds:
        norm, mean, std = zscore_normalize(ts)
        items.append(norm)
        stats[ts.id] = (mean, std)
    return Dataset.from_series(items, source=ds.source, stats=stats,
                               allow_ragged=ds.allow_ragged)


# -- windows and splits ------------------------------------------------------

@dataclass(frozen=True)
class WindowSpec:
    input_len: int = 49
    horizon: int = 1
    stride: int = 1

    def __post_init__(self):
        if min(self.input_len, self.horizon, self.stride) < 1:
            raise InvalidInputError("input_len, horizon and stride must all be >= 1")

    def count(self, length: int) -> int:
        span = length - self.input_len - self.horizon
        return span // self.stride + 1 if span >= 0 else 0


@dataclass(frozen=True)
class Windows:
    """Sliding-window samples; ``starts[i]`` indexes the first input step."""

    inputs: np.ndarray
    targets: np.ndarray
    starts: np.ndarray

    @property
    def count(self) -> int:
        return int(self.targets.size)

    def __len__(self):
        return self.count

    def __iter__(self):
        return iter(zip(self.inputs, self.targets))


def make_windows(values, spec: WindowSpec = WindowSpec()) -> Windows:
    """Input ``values[i:i+input_len]`` paired with ``values[i+input_len+horizon-1]``.

    Too-short series yield zero windows rather than an error.
    """
    values = np.asarray(getattr(values, "values", values), dtype=np.float64)
    n = spec.count(values.size)
    starts = np.arange(n, dtype=np.int64) * spec.stride
    if n == 0:
        return Windows(np.empty((0, spec.input_len)), np.empty(0), starts)
    idx = starts[:, None] + np.arange(spec.input_len)[None, :]
    targets = values[starts + spec.input_len + spec.horizon - 1]
    return Windows(values[idx], targets, starts)


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or min(self.ratios) < 0:
            raise InvalidInputError("split needs three non-negative ratios")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise InvalidInputError(f"split ratios sum to {sum(self.ratios)}, not 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("split seed must be an unsigned 64-bit integer")


def split_indices(n: int, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n < 1:
        raise InvalidInputError("cannot split an empty sample list")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(round(spec.ratios[0] * n))
    n_val = min(n - n_train, int(round(spec.ratios[1] * n)))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def split_dataset(samples: Sequence, spec: SplitSpec = SplitSpec()):
    """Seeded random partition into (train, val, test) lists."""
    tr, va, te = split_indices(len(samples), spec)
    return ([samples[i] for i in tr], [samples[i] for i in va], [samples[i] for i in te])


# -- synthetic planted-lag data ----------------------------------------------

def generate_planted_lag(
    n_series: int,
    length: int,
    lag: int,
    noise_sigma: float,
    n_correlated: int,
    seed: int,
    n_targets: Optional[int] = None,
) -> tuple[Dataset, dict[str, list[str]]]:
    """Random-walk corpus where companions lead designated targets by ``lag``.

    Each group draws a base walk ``w``; its companions are ``w + noise`` and
    its target is ``w`` delayed by ``lag`` steps, holding ``w[0]`` for the
    first ``lag`` steps (the walk has no earlier history). Hence
    ``companion[t] == target[t + lag] + noise`` on the overlap. All other
    series are independent walks. ``n_targets`` defaults to enough groups to
    cover about half the corpus.

    Returns the dataset and a map from target id to its sorted companion ids.
    """
    if n_targets is None:
        n_targets = max(1, n_series // (2 * (n_correlated + 1)))
    if length < 1 or n_series < 1:
        raise InvalidInputError("n_series and length must be positive")
    if not 0 <= lag < length:
        raise InvalidInputError("lag must satisfy 0 <= lag < length")
    if not 0 <= n_correlated < n_series:
        raise InvalidInputError("n_correlated must satisfy 0 <= n_correlated < n_series")
    if n_targets < 0 or n_targets * (n_correlated + 1) > n_series:
        raise InvalidInputError("not enough series for the requested planted groups")
    if noise_sigma < 0:
        raise InvalidInputError("noise_sigma must be non-negative")

    rng = np.random.default_rng(seed)
    width = len(str(n_series - 1))
    ids = [f"s{k:0{width}d}" for k in rng.permutation(n_series)]
    values = np.empty((n_series, length))
    truth: dict[str, list[str]] = {}
    pos = 0
    for _ in range(n_targets):
        base = np.cumsum(rng.standard_normal(length))
        target = np.empty(length)
        target[:lag] = base[0]
        target[lag:] = base[:length - lag]
        values[pos] = target
        members = []
        for c in range(1, n_correlated + 1):
            values[pos + c] = base + noise_sigma * rng.standard_normal(length)
            members.append(ids[pos + c])
        truth[ids[pos]] = sorted(members)
        pos += n_correlated + 1
    for k in range(pos, n_series):
        values[k] = np.cumsum(rng.standard_normal(length))

    order = np.argsort(ids, kind="stable")
    ds = Dataset.from_arrays([ids[k] for k in order], values[order], source="synthetic")
    return ds, dict(sorted(truth.items()))


# -- dataset cache -----------------------------------------------------------

def dataset_to_bytes(ds: Dataset) -> bytes:
    parts = [DATASET_MAGIC, struct.pack("<I", len(ds))]
    for ts in ds:
        parts.append(pack_str(ts.id))
        parts.append(struct.pack("<I", len(ts)))
        parts.append(ts.values.astype("<f8").tobytes())
    return b"".join(parts)


def dataset_from_bytes(data: bytes, source: Optional[str] = None) -> Dataset:
    r = Reader(data, "dataset cache")
    r.magic(DATASET_MAGIC)
    items = []
    for _ in range(r.u32()):
        sid = r.string()
        t = r.u32()
        vals = np.frombuffer(r.take(8 * t), dtype="<f8").astype(np.float64)
        items.append(TimeSeries(sid, vals))
    if not r.at_end():
        raise DataError("trailing bytes after dataset cache payload")
    return Dataset.from_series(items, source=source, allow_ragged=True)


def save_dataset(ds: Dataset, path) -> None:
    write_atomic(path, dataset_to_bytes(ds))


def load_dataset(path, allow_ragged: bool = True) -> Dataset:
    ds = dataset_from_bytes(Path(path).read_bytes(), source=str(path))
    if not allow_ragged:
        return Dataset(series=ds.series, source=ds.source)
    return ds
