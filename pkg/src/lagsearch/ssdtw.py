"""Shift-minimized DTW and batched distance matrices.

A candidate ``s`` is truncated by each shift ``tau`` (its last ``tau``
values dropped) and compared against the full target with DTW; the
smallest distance wins. Truncations are prefixes of ``s``, so a single DP
pass of the target against the untruncated candidate yields every shift's
distance from its final row.
"""

from __future__ import annotations

import io
import math
import os
import struct
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._io import Reader, pack_str, write_atomic
from .dtw import DEFAULT_CONFIG, DtwConfig, as_sequence, check_band, dtw, prefix_distances
from .errors import DataError, InvalidInputError, LagSearchError, NotFoundError
from .series import Dataset

MATRIX_MAGIC = b"SSDTW-M1"
METRICS = ("dtw", "ssdtw", "cosine")
_FINITE_MAX = sys.float_info.max


@dataclass(frozen=True)
class ShiftSet:
    """Strictly increasing positive shifts, optionally with the unshifted term."""

    shifts: tuple[int, ...]
    include_zero: bool = False

    def __post_init__(self):
        shifts = tuple(int(t) for t in self.shifts)
        if not shifts and not self.include_zero:
            raise InvalidInputError("shift set is empty")
        if any(t < 1 for t in shifts):
            raise InvalidInputError("shifts must be positive integers")
        if any(b <= a for a, b in zip(shifts, shifts[1:])):
            raise InvalidInputError("shifts must be strictly increasing")
        object.__setattr__(self, "shifts", shifts)

    @property
    def candidates(self) -> tuple[int, ...]:
        return ((0,) if self.include_zero else ()) + self.shifts

    @property
    def max_shift(self) -> int:
        return max(self.candidates)

    def validate_for(self, length: int) -> None:
        if self.max_shift >= length:
            raise InvalidInputError(
                f"shift {self.max_shift} leaves nothing of a length-{length} series"
            )

    @classmethod
    def parse(cls, text: str, include_zero: bool = False) -> "ShiftSet":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        try:
            return cls(tuple(int(p) for p in parts), include_zero)
        except ValueError:
            raise InvalidInputError(f"bad shift list {text!r}") from None

    def __str__(self):
        return ",".join(str(t) for t in self.shifts)


PRESETS = {
    "weather": ShiftSet((1, 3, 5, 10)),
    "stock": ShiftSet((5, 10, 20, 30)),
    "realestate": ShiftSet((1, 2, 3)),
    "synthetic": ShiftSet((1, 3, 5, 10)),
}


def time_shift(s, tau: int) -> np.ndarray:
    """Drop the last ``tau`` values of ``s``."""
    s = np.asarray(s, dtype=np.float64)
    if tau < 0 or tau >= s.size:
        raise InvalidInputError(f"shift {tau} invalid for a length-{s.size} sequence")
    return s[:s.size - tau]


def ssdtw(
    a,
    s,
    shift_set: ShiftSet,
    cfg: DtwConfig = DEFAULT_CONFIG,
    align_target_head: bool = False,
) -> tuple[float, int]:
    """Minimum over shifts of ``dtw(a, time_shift(s, tau))``.

    Returns ``(distance, argmin_shift)``; equal distances resolve to the
    smallest shift. With ``align_target_head`` the first ``tau`` values of
    ``a`` are dropped as well, aligning both series on the lagged overlap.
    """
    a = as_sequence(a)
    s = as_sequence(s)
    shift_set.validate_for(s.size)
    taus = shift_set.candidates
    if align_target_head:
        shift_set.validate_for(a.size)
        dists = [dtw(a[t:], time_shift(s, t), cfg) for t in taus]
    elif cfg.normalize_by_path:
        dists = [dtw(a, time_shift(s, t), cfg) for t in taus]
    else:
        for t in taus:
            check_band(a.size, s.size - t, cfg)
        row = prefix_distances(a, s, cfg)
        dists = [float(row[s.size - t - 1]) for t in taus]
    best, arg = math.inf, taus[0]
    for t, d in zip(taus, dists):
        if d < best:
            best, arg = d, t
    return best, arg


@dataclass
class DistanceMatrix:
    """Dense target-by-candidate distances.

    Self pairs hold ``inf`` so a series never retrieves itself. For
    ``metric == "cosine"`` the values are ``1 - cosine similarity``.
    """

    row_ids: list[str]
    col_ids: list[str]
    values: np.ndarray
    metric: str = "ssdtw"
    shift_set: Optional[ShiftSet] = None
    argmin_shifts: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise InvalidInputError("matrix shape does not match its id lists")
        if self.metric not in METRICS:
            raise InvalidInputError(f"unknown metric {self.metric!r}")
        self._row_index = {r: k for k, r in enumerate(self.row_ids)}
        self._col_index = {c: k for k, c in enumerate(self.col_ids)}

    @property
    def shape(self):
        return self.values.shape

    def row(self, target_id: str) -> np.ndarray:
        try:
            return self.values[self._row_index[target_id]]
        except KeyError:
            raise NotFoundError(f"target {target_id!r} not in matrix rows") from None

    def col_position(self, col_id: str) -> int:
        return self._col_index[col_id]

    def __getitem__(self, pair: tuple[str, str]) -> float:
        r, c = pair
        return float(self.row(r)[self._col_index[c]])

    # -- serialization -------------------------------------------------------

    def to_bytes(self) -> bytes:
        vals = np.where(np.isinf(self.values), _FINITE_MAX, self.values)
        parts = [MATRIX_MAGIC, struct.pack("<II", *self.values.shape)]
        parts += [pack_str(i) for i in self.row_ids]
        parts += [pack_str(i) for i in self.col_ids]
        parts.append(vals.astype("<f8").tobytes())
        shifts = self.shift_set.shifts if self.shift_set else ()
        include_zero = bool(self.shift_set and self.shift_set.include_zero)
        parts.append(pack_str(self.metric))
        parts.append(struct.pack("<B", 1 if self.shift_set else 0))
        parts.append(struct.pack("<BI", include_zero, len(shifts)))
        parts.append(struct.pack(f"<{len(shifts)}I", *shifts))
        # flag: the maximum finite double denotes the self-pair sentinel
        parts.append(struct.pack("<B", 1))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DistanceMatrix":
        r = Reader(data, "distance matrix")
        r.magic(MATRIX_MAGIC)
        rows, cols = r.unpack("<II")
        row_ids = [r.string() for _ in range(rows)]
        col_ids = [r.string() for _ in range(cols)]
        vals = np.frombuffer(r.take(8 * rows * cols), dtype="<f8").astype(np.float64)
        vals = vals.reshape(rows, cols)
        metric = r.string()
        has_shifts = r.u8()
        include_zero, n = r.unpack("<BI")
        shifts = r.unpack(f"<{n}I")
        if r.u8():
            vals = np.where(vals == _FINITE_MAX, np.inf, vals)
        if not r.at_end():
            raise DataError("trailing bytes after distance matrix")
        shift_set = ShiftSet(shifts, bool(include_zero)) if has_shifts else None
        return cls(row_ids, col_ids, vals, metric, shift_set)

    def save(self, path) -> None:
        write_atomic(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "DistanceMatrix":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("row_id,col_id,distance\n")
        for i, rid in enumerate(self.row_ids):
            for j, cid in enumerate(self.col_ids):
                buf.write(f"{rid},{cid},{float(self.values[i, j])!r}\n")
        return buf.getvalue()


def default_workers() -> int:
    return os.cpu_count() or 1


def pairwise_matrix(
    targets: Dataset,
    candidates: Dataset,
    shift_set: Optional[ShiftSet] = None,
    cfg: DtwConfig = DEFAULT_CONFIG,
    workers: int = 1,
    metric: str = "ssdtw",
    align_target_head: bool = False,
) -> DistanceMatrix:
    """``values[i, j] = ssdtw(targets[i], candidates[j])`` (or plain DTW).

    Rows are spread over a thread pool; the compiled kernel releases the
    GIL. Every cell is computed independently, so the result does not
    depend on ``workers``.
    """
    if metric not in ("dtw", "ssdtw"):
        raise InvalidInputError("pairwise_matrix computes 'dtw' or 'ssdtw'")
    if metric == "ssdtw":
        if shift_set is None:
            raise InvalidInputError("ssdtw needs a shift set")
        for cand in candidates:
            shift_set.validate_for(len(cand))
    row_ids, col_ids = targets.ids, candidates.ids
    cand_vals = [candidates[c].values for c in col_ids]

    def one_row(i: int):
        tid = row_ids[i]
        a = targets[tid].values
        out = np.empty(len(col_ids))
        args = np.zeros(len(col_ids), dtype=np.int64)
        for j, cid in enumerate(col_ids):
            if cid == tid:
                out[j] = math.inf
                continue
            try:
                if metric == "ssdtw":
                    out[j], args[j] = ssdtw(a, cand_vals[j], shift_set, cfg, align_target_head)
                else:
                    out[j] = dtw(a, cand_vals[j], cfg)
            except LagSearchError as exc:
                raise type(exc)(f"pair ({tid}, {cid}): {exc}") from exc
        return out, args

    n = len(row_ids)
    if workers <= 1 or n <= 1:
        rows = [one_row(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one_row, range(n)))
    values = np.vstack([r[0] for r in rows]) if rows else np.empty((0, len(col_ids)))
    argmins = np.vstack([r[1] for r in rows]) if rows else None
    return DistanceMatrix(
        row_ids,
        col_ids,
        values,
        metric=metric,
        shift_set=shift_set if metric == "ssdtw" else None,
        argmin_shifts=argmins if metric == "ssdtw" else None,
    )
