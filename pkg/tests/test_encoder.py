import numpy as np
import pytest
from hypothesis import given, strategies as st

from lagsearch.encoder import (
    DEFAULT_BLOCKS, EmbeddingSet, EncoderArch, EncoderParams, cosine_sim, embed_all,
    embedding_matrix, forward, forward_batch, init_params, series_window,
)
from lagsearch.errors import DataError, InvalidInputError
from lagsearch.series import Dataset

from oracles import scalar_encoder


def test_default_arch():
    arch = EncoderArch(49)
    assert arch.blocks == DEFAULT_BLOCKS == ((32, 8, 2), (64, 5, 2), (128, 3, 2))
    assert arch.embedding_dim == 128
    assert arch.lengths() == [49, 24, 12, 6]


@given(st.integers(8, 300), st.lists(st.tuples(st.integers(1, 6), st.integers(1, 9), st.integers(1, 4)),
                                     min_size=1, max_size=3), st.integers(2, 16))
def test_shape_law(input_len, blocks, dim):
    lengths = [input_len]
    for _, _, pool in blocks:
        lengths.append(lengths[-1] // pool)
    if min(lengths) < 1:
        with pytest.raises(InvalidInputError):
            EncoderArch(input_len, tuple(blocks), dim)
        return
    arch = EncoderArch(input_len, tuple(blocks), dim)
    assert arch.lengths() == lengths
    params = init_params(arch, 0)
    in_ch = 1
    for i, (out, k, _) in enumerate(blocks):
        assert params.tensors[f"conv{i}.weight"].shape == (out, in_ch, k)
        assert params.tensors[f"conv{i}.bias"].shape == (out,)
        in_ch = out
    assert params.tensors["proj.weight"].shape == (dim, in_ch)
    assert params.flat().size == arch.n_params()
    x = np.random.default_rng(0).standard_normal((3, input_len))
    emb, _ = forward_batch(params, x)
    assert emb.shape == (3, dim)


def test_arch_validation():
    with pytest.raises(InvalidInputError):
        EncoderArch(10, ((4, 3, 2),), embedding_dim=1)
    with pytest.raises(InvalidInputError):
        EncoderArch(4, ((4, 3, 8),))


@pytest.mark.parametrize("seed", range(5))
def test_scalar_oracle_one_block(seed):
    arch = EncoderArch(8, ((3, 3, 2),), embedding_dim=4)
    params = init_params(arch, seed)
    x = np.random.default_rng(seed).standard_normal(8)
    assert np.allclose(forward(params, x), scalar_encoder(params, x), atol=1e-12, rtol=0)


def test_scalar_oracle_three_blocks():
    arch = EncoderArch(24, ((4, 4, 2), (5, 3, 2), (6, 2, 3)), embedding_dim=5)
    params = init_params(arch, 11)
    x = np.random.default_rng(4).standard_normal(24)
    assert np.allclose(forward(params, x), scalar_encoder(params, x), atol=1e-12, rtol=0)


def test_zero_input_zero_bias_falls_back_to_basis():
    arch = EncoderArch(16, ((4, 3, 2), (4, 3, 2), (4, 3, 2)), embedding_dim=6)
    params = init_params(arch, 0)
    for name, arr in params.tensors.items():
        if name.endswith("bias"):
            arr[:] = 0.0
    out = forward(params, np.zeros(16))
    assert list(out) == [1.0, 0, 0, 0, 0, 0]


def test_unit_norm_and_determinism():
    params = init_params(EncoderArch(49), 3)
    x = np.random.default_rng(1).standard_normal(49)
    a, b = forward(params, x), forward(params, x.copy())
    assert a.tobytes() == b.tobytes()
    assert abs(np.linalg.norm(a) - 1) < 1e-6


def test_shape_mismatch():
    params = init_params(EncoderArch(20, ((2, 3, 2),), 4), 0)
    with pytest.raises(InvalidInputError):
        forward(params, np.zeros(19))


def test_init_determinism():
    arch = EncoderArch(30, ((3, 3, 2),), 4)
    assert np.array_equal(init_params(arch, 5).flat(), init_params(arch, 5).flat())
    assert not np.array_equal(init_params(arch, 5).flat(), init_params(arch, 6).flat())


def test_cosine_examples():
    u = np.array([1.0, 2.0, -3.0])
    assert cosine_sim(u, u) == pytest.approx(1.0)
    assert cosine_sim([1, 0], [0, 1]) == 0.0
    assert cosine_sim(u, -u) == pytest.approx(-1.0)
    with pytest.raises(InvalidInputError):
        cosine_sim([0, 0], [1, 0])


def test_embed_all_cardinality_order_and_errors():
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((6, 40))
    ids = [f"s{i}" for i in range(6)]
    params = init_params(EncoderArch(32, ((4, 3, 2),), 8), 1)
    ds = Dataset.from_arrays(ids, vals)
    perm = [ids[i] for i in rng.permutation(6)]
    ds2 = Dataset.from_arrays(perm, [vals[ids.index(i)] for i in perm])
    e1, e2 = embed_all(params, ds).as_dict(), embed_all(params, ds2).as_dict()
    assert set(e1) == set(ids)
    assert all(e1[i].tobytes() == e2[i].tobytes() for i in ids)
    short = Dataset.from_arrays(["long", "short"], [np.ones(40), np.ones(10)], allow_ragged=True)
    res = embed_all(params, short)
    assert res.ids == ["long"] and "short" in res.errors


def test_series_window():
    v = np.arange(10.0)
    assert list(series_window(v, 3)) == [7, 8, 9]
    assert list(series_window(v, 3, "head")) == [0, 1, 2]
    with pytest.raises(DataError):
        series_window(v, 11)


def test_params_roundtrip(tmp_path):
    params = init_params(EncoderArch(30, ((3, 5, 2), (4, 3, 3)), 6), 42)
    path = tmp_path / "p.bin"
    params.save(path)
    raw = path.read_bytes()
    assert raw.startswith(b"TLCC-E1")
    back = EncoderParams.load(path)
    assert back.arch == params.arch and back.seed == 42
    assert np.array_equal(back.flat(), params.flat())
    with pytest.raises(DataError):
        EncoderParams.from_bytes(raw[:-8])


def test_embeddings_roundtrip_and_matrix(tmp_path):
    vecs = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    emb = EmbeddingSet(["a", "b", "c"], vecs)
    path = tmp_path / "e.bin"
    emb.save(path)
    back = EmbeddingSet.load(path)
    assert back.ids == emb.ids and np.array_equal(back.vectors, vecs)
    assert path.read_bytes().startswith(b"TLCC-V1")
    assert emb.to_csv().splitlines()[0] == "series_id,e0,e1"
    m = embedding_matrix(emb)
    assert m.metric == "cosine" and np.isinf(m["a", "a"])
    assert m["a", "c"] == pytest.approx(0.4) and m["a", "b"] == pytest.approx(1.0)
