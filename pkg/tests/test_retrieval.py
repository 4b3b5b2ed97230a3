import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lagsearch.errors import DataError, InvalidInputError, NotFoundError, ParseError
from lagsearch.retrieval import (
    ContrastiveSample, RetrievalResult, build_contrastive_samples, mean_recall, recall_at_k,
    results_from_csv, results_to_csv, sample_contrastive, sweep_k, top_k,
)
from lagsearch.ssdtw import DistanceMatrix


def one_row(dists: dict, target="A"):
    cols = [target] + list(dists)
    return DistanceMatrix([target], cols, [[math.inf] + list(dists.values())], metric="dtw")


def test_top_k_sorted():
    m = one_row({"B": 3.0, "C": 1.0, "D": 2.0})
    res = top_k(m, "A", 2)
    assert res.items == (("C", 1.0), ("D", 2.0)) and res.k == 2


def test_top_k_exclusion_and_bounds():
    m = one_row({"B": 3.0, "C": 1.0, "D": 2.0})
    with pytest.raises(InvalidInputError):
        top_k(m, "A", 3, exclude={"D"})
    assert top_k(m, "A", 2, exclude={"C"}).ids == ["D", "B"]
    with pytest.raises(NotFoundError):
        top_k(m, "Z", 1)
    assert top_k(m, "A", 0).items == ()
    with pytest.raises(InvalidInputError):
        top_k(m, "A", -1)


def test_ties_break_by_id():
    m = one_row({"D": 1.0, "B": 1.0, "C": 1.0})
    assert top_k(m, "A", 3).ids == ["B", "C", "D"]


def test_self_never_returned():
    m = DistanceMatrix(["A", "B"], ["A", "B"], [[0.0, 1.0], [1.0, 0.0]], metric="dtw")
    assert top_k(m, "A", 1).ids == ["B"]


@given(st.lists(st.integers(0, 5), min_size=2, max_size=25), st.data())
def test_prefix_stability(dists, data):
    m = one_row({f"c{i:02d}": float(d) for i, d in enumerate(dists)})
    k = data.draw(st.integers(0, len(dists) - 1))
    assert top_k(m, "A", k + 1).ids[:k] == top_k(m, "A", k).ids


def test_sample_contrastive_examples():
    m = one_row({"B": 1.0, "C": 2.0, "D": 9.0, "E": 10.0})
    s = sample_contrastive(m, "A", 1)
    assert s.positive_ids == ("B",) and s.negative_ids == ("E",)
    s2 = sample_contrastive(m, "A", 2)
    assert s2.positive_ids == ("B", "C") and set(s2.negative_ids) == {"D", "E"}
    with pytest.raises(InvalidInputError):
        sample_contrastive(m, "A", 3)
    s3 = sample_contrastive(m, "A", 1, n_neg=3)
    assert s3.negative_ids == ("E", "D", "C")


def test_sample_skips_infinite():
    m = one_row({"B": 1.0, "C": math.inf, "D": 4.0})
    assert sample_contrastive(m, "A", 1).negative_ids == ("D",)


@given(st.lists(st.floats(0, 100), min_size=4, max_size=30), st.data())
def test_sample_disjoint(dists, data):
    m = one_row({f"c{i:02d}": d for i, d in enumerate(dists)})
    k = data.draw(st.integers(1, len(dists) // 2))
    s = sample_contrastive(m, "A", k)
    assert len(s.positive_ids) == len(s.negative_ids) == k
    assert not set(s.positive_ids) & set(s.negative_ids)
    assert "A" not in s.positive_ids + s.negative_ids


def test_contrastive_sample_validation():
    with pytest.raises(InvalidInputError):
        ContrastiveSample("A", ("B",), ("B",))
    with pytest.raises(InvalidInputError):
        ContrastiveSample("A", ("A",), ("B",))


def test_recall_examples():
    a = RetrievalResult("t", tuple((c, 0.0) for c in "abcde"))
    b = RetrievalResult("t", tuple((c, 0.0) for c in "abcxy"))
    c = RetrievalResult("t", tuple((c, 0.0) for c in "vwxyz"))
    assert recall_at_k(a, a) == 1.0
    assert recall_at_k(a, c) == 0.0
    assert recall_at_k(a, b) == 0.6
    with pytest.raises(InvalidInputError):
        recall_at_k(a, RetrievalResult("u", a.items))
    with pytest.raises(InvalidInputError):
        recall_at_k(a, RetrievalResult("t", a.items[:3]))


def test_sweep_k_and_mean_recall():
    rng = np.random.default_rng(0)
    ids = [f"s{i}" for i in range(12)]
    vals = rng.random((12, 12))
    np.fill_diagonal(vals, np.inf)
    m = DistanceMatrix(ids, ids, vals, metric="dtw")
    table = sweep_k(m, ids[:2], [0, 1, 3, 5, 10])
    assert len(table) == 10
    for t in ids[:2]:
        assert table[(t, 0)].items == ()
        assert table[(t, 3)].ids[:1] == table[(t, 1)].ids
    assert mean_recall(m, m, 5) == 1.0


def test_results_csv_roundtrip():
    results = [RetrievalResult("t1", (("a", 0.5), ("b", 1.25))), RetrievalResult("t2", (("c", 2.0),))]
    text = results_to_csv(results)
    assert text.splitlines()[0] == "target_id,rank,candidate_id,score"
    assert text.splitlines()[1] == "t1,1,a,0.5"
    back = results_from_csv(text)
    assert back["t1"] == results[0] and back["t2"] == results[1]
    with pytest.raises(ParseError):
        results_from_csv("x,y\n")
    with pytest.raises(DataError):
        results_from_csv("target_id,rank,candidate_id,score\nt,2,a,1.0\n")


def test_build_contrastive_samples_all_anchors():
    ids = ["a", "b", "c", "d", "e"]
    vals = np.array([[abs(i - j) if i != j else np.inf for j in range(5)] for i in range(5)], float)
    m = DistanceMatrix(ids, ids, vals, metric="dtw")
    samples = build_contrastive_samples(m, k_e=1)
    assert [s.anchor_id for s in samples] == ids
    assert samples[0].positive_ids == ("b",) and samples[0].negative_ids == ("e",)
