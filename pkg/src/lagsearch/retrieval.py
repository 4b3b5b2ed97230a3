"""Ranking candidates by distance: top-k selection and contrastive sampling."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import DataError, InvalidInputError, ParseError
from .ssdtw import DistanceMatrix


@dataclass(frozen=True)
class RetrievalResult:
    """Candidates for one target, nearest first."""

    target_id: str
    items: tuple[tuple[str, float], ...] = ()

    @property
    def k(self) -> int:
        return len(self.items)

    @property
    def ids(self) -> list[str]:
        return [cid for cid, _ in self.items]


@dataclass(frozen=True)
class ContrastiveSample:
    anchor_id: str
    positive_ids: tuple[str, ...]
    negative_ids: tuple[str, ...]

    def __post_init__(self):
        pos, neg = set(self.positive_ids), set(self.negative_ids)
        if pos & neg:
            raise InvalidInputError(f"positives and negatives overlap for {self.anchor_id!r}")
        if self.anchor_id in pos or self.anchor_id in neg:
            raise InvalidInputError(f"anchor {self.anchor_id!r} sampled as its own pair")

    @property
    def ids(self) -> tuple[str, ...]:
        return (self.anchor_id,) + self.positive_ids + self.negative_ids


def ranked_candidates(
    matrix: DistanceMatrix, target_id: str, exclude: Iterable[str] = ()
) -> list[tuple[str, float]]:
    """Eligible ``(candidate_id, distance)`` pairs sorted by distance, then id."""
    row = matrix.row(target_id)
    skip = set(exclude)
    skip.add(target_id)
    pairs = [(cid, float(row[j])) for j, cid in enumerate(matrix.col_ids) if cid not in skip]
    pairs.sort(key=lambda p: (p[1], p[0]))
    return pairs


def top_k(
    matrix: DistanceMatrix, target_id: str, k: int, exclude: Iterable[str] = ()
) -> RetrievalResult:
    """The ``k`` eligible candidates with the smallest distance to ``target_id``."""
    if k < 0:
        raise InvalidInputError("k must be non-negative")
    ranked = ranked_candidates(matrix, target_id, exclude)
    if k > len(ranked):
        raise InvalidInputError(
            f"k={k} exceeds the {len(ranked)} eligible candidates for {target_id!r}"
        )
    return RetrievalResult(target_id, tuple(ranked[:k]))


def sample_contrastive(
    matrix: DistanceMatrix,
    anchor_id: str,
    k_e: int,
    n_neg: Optional[int] = None,
    exclude: Iterable[str] = (),
) -> ContrastiveSample:
    """Nearest ``k_e`` candidates as positives, farthest ``n_neg`` as negatives.

    ``n_neg`` defaults to ``k_e``; uneven counts support ratio sweeps.
    Negatives are listed farthest first. Infinite distances never count.
    """
    n_neg = k_e if n_neg is None else n_neg
    if k_e < 1 or n_neg < 1:
        raise InvalidInputError("need at least one positive and one negative")
    ranked = [p for p in ranked_candidates(matrix, anchor_id, exclude) if math.isfinite(p[1])]
    if k_e + n_neg > len(ranked):
        raise InvalidInputError(
            f"{anchor_id!r} has {len(ranked)} candidates, needs {k_e + n_neg}"
        )
    positives = tuple(cid for cid, _ in ranked[:k_e])
    negatives = tuple(cid for cid, _ in reversed(ranked[len(ranked) - n_neg:]))
    return ContrastiveSample(anchor_id, positives, negatives)


def build_contrastive_samples(
    matrix: DistanceMatrix,
    anchors: Optional[Sequence[str]] = None,
    k_e: int = 5,
    n_neg: Optional[int] = None,
) -> list[ContrastiveSample]:
    anchors = matrix.row_ids if anchors is None else anchors
    return [sample_contrastive(matrix, a, k_e, n_neg) for a in anchors]


def recall_at_k(exact: RetrievalResult, approx: RetrievalResult) -> float:
    """Share of the exact top-k ids also present in the approximate top-k."""
    if exact.target_id != approx.target_id:
        raise InvalidInputError("recall compares results for different targets")
    if exact.k != approx.k or exact.k == 0:
        raise InvalidInputError(f"recall needs equal non-zero k (got {exact.k}, {approx.k})")
    return len(set(exact.ids) & set(approx.ids)) / exact.k


def sweep_k(
    matrix: DistanceMatrix,
    targets: Sequence[str],
    k_values: Sequence[int],
    exclude: Iterable[str] = (),
) -> dict[tuple[str, int], RetrievalResult]:
    """``top_k`` for every (target, k); ``k = 0`` gives the empty single-series case."""
    skip = tuple(exclude)
    return {(t, k): top_k(matrix, t, k, skip) for t in targets for k in k_values}


def mean_recall(exact: DistanceMatrix, approx: DistanceMatrix, k: int,
                targets: Optional[Sequence[str]] = None) -> float:
    targets = exact.row_ids if targets is None else targets
    scores = [recall_at_k(top_k(exact, t, k), top_k(approx, t, k)) for t in targets]
    return sum(scores) / len(scores)


# -- CSV ----------------------------------------------------------------------

def results_to_csv(results: Iterable[RetrievalResult]) -> str:
    buf = io.StringIO()
    buf.write("target_id,rank,candidate_id,score\n")
    for res in results:
        for rank, (cid, score) in enumerate(res.items, start=1):
            buf.write(f"{res.target_id},{rank},{cid},{float(score)!r}\n")
    return buf.getvalue()


def results_from_csv(text: str) -> dict[str, RetrievalResult]:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    reader = csv.DictReader(io.StringIO(text))
    need = {"target_id", "rank", "candidate_id", "score"}
    if not need <= set(reader.fieldnames or []):
        raise ParseError(f"retrieval CSV needs columns {sorted(need)}", 1)
    for rec in reader:
        try:
            rank, score = int(rec["rank"]), float(rec["score"])
        except (TypeError, ValueError):
            raise ParseError("bad rank or score", reader.line_num) from None
        rows.setdefault(rec["target_id"], []).append((rank, rec["candidate_id"], score))
    out = {}
    for tid, items in rows.items():
        items.sort()
        if [r for r, _, _ in items] != list(range(1, len(items) + 1)):
            raise DataError(f"ranks for {tid!r} are not 1..k")
        out[tid] = RetrievalResult(tid, tuple((c, s) for _, c, s in items))
    return out
