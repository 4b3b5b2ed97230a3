"""Exact dynamic time warping between two real sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._backend import kernels
from .errors import InvalidInputError

COST_KINDS = {"squared_diff": 0, "abs_diff": 1}


@dataclass(frozen=True)
class DtwConfig:
    """Open choices of the DTW distance.

    Parameters
    ----------
    local_cost : {"squared_diff", "abs_diff"}
        Per-cell cost between aligned values.
    band_radius : int or None
        Sakoe-Chiba radius; cells with ``|i - j| > band_radius`` are
        forbidden. ``None`` leaves the warping unconstrained.
    normalize_by_path : bool
        Divide the distance by the length of the optimal warping path.
    """

    local_cost: str = "squared_diff"
    band_radius: Optional[int] = None
    normalize_by_path: bool = False

    def __post_init__(self):
        if self.local_cost not in COST_KINDS:
            raise InvalidInputError(f"unknown local cost {self.local_cost!r}")
        if self.band_radius is not None and self.band_radius < 0:
            raise InvalidInputError("band_radius must be non-negative")

    @property
    def cost_kind(self) -> int:
        return COST_KINDS[self.local_cost]

    @property
    def band(self) -> int:
        return -1 if self.band_radius is None else int(self.band_radius)


DEFAULT_CONFIG = DtwConfig()


def as_sequence(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"expected a 1-D sequence, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError("DTW needs non-empty sequences")
    return arr


def check_band(n: int, m: int, cfg: DtwConfig) -> None:
    if cfg.band_radius is not None and cfg.band_radius < abs(n - m):
        raise InvalidInputError(
            f"band radius {cfg.band_radius} cannot reach the corner of a "
            f"{n}x{m} alignment"
        )


def dtw(a: Sequence[float], b: Sequence[float], cfg: DtwConfig = DEFAULT_CONFIG) -> float:
    """DTW distance between ``a`` and ``b`` with steps (1,0), (0,1), (1,1).

    Distance-only evaluation keeps two DP rows sized by the shorter input.

    >>> dtw([1, 2, 3], [2, 3, 4])
    2.0
    """
    a = as_sequence(a)
    b = as_sequence(b)
    check_band(a.size, b.size, cfg)
    if cfg.normalize_by_path:
        return dtw_path(a, b, cfg)[0]
    return kernels.distance(a, b, cfg.cost_kind, cfg.band)


def prefix_distances(a: np.ndarray, b: np.ndarray, cfg: DtwConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``out[j] == dtw(a, b[:j + 1])`` for every prefix of ``b``, in one pass.

    Cells of the DP table depend only on the prefixes they cover, so the
    last row of ``a`` against the full ``b`` holds every prefix distance.
    Prefixes the band cannot reach come back as ``inf``.
    """
    a = as_sequence(a)
    b = as_sequence(b)
    return kernels.last_row(a, b, cfg.cost_kind, cfg.band)


def _traceback(D: np.ndarray) -> list[tuple[int, int]]:
    i, j = D.shape[0] - 1, D.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = D[i - 1, j - 1], D[i - 1, j], D[i, j - 1]
            # diagonal first, then the step that consumes ``a``
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return path


def dtw_path(
    a: Sequence[float], b: Sequence[float], cfg: DtwConfig = DEFAULT_CONFIG
) -> tuple[float, list[tuple[int, int]]]:
    """DTW distance together with an optimal warping path.

    The path is a list of 0-based ``(i, j)`` index pairs from ``(0, 0)`` to
    ``(len(a) - 1, len(b) - 1)``. Ties prefer the diagonal step, then the
    step advancing ``a``.
    """
    a = as_sequence(a)
    b = as_sequence(b)
    check_band(a.size, b.size, cfg)
    D = kernels.cost_matrix(a, b, cfg.cost_kind, cfg.band)
    path = _traceback(D)
    dist = float(D[-1, -1])
    if cfg.normalize_by_path:
        dist /= len(path)
    return dist, path


def path_cost(a, b, path, cfg: DtwConfig = DEFAULT_CONFIG) -> float:
    """Sum of local costs along ``path``, accumulated in path order."""
    a = as_sequence(a)
    b = as_sequence(b)
    total = 0.0
    for i, j in path:
        d = a[i] - b[j]
        total = (d * d if cfg.cost_kind == 0 else abs(d)) + total
    return float(total)
