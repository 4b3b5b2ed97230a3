"""End-to-end acceptance checks, each reporting one PASS/FAIL line."""

import math
import re
import time

import numpy as np
import pytest

from lagsearch.cli import main
from lagsearch.contrastive import LossConfig, info_nce_loss
from lagsearch.dtw import DtwConfig, dtw
from lagsearch.encoder import EncoderArch, init_params
from lagsearch.experiments import Family, cle_trial, companion_recall, forecast_trial
from lagsearch.retrieval import ContrastiveSample
from lagsearch.series import Dataset
from lagsearch.ssdtw import PRESETS, ShiftSet, pairwise_matrix, ssdtw

import conftest
from oracles import brute_dtw, finite_difference_check, naive_ssdtw

pytestmark = pytest.mark.slow


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_dtw_matches_path_enumeration():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        a = rng.integers(-3, 4, rng.integers(1, 7)).astype(float)
        b = rng.integers(-3, 4, rng.integers(1, 7)).astype(float)
        mismatches += dtw(a, b) != brute_dtw(a, b)
    elapsed = time.perf_counter() - start
    report(1, "DTW vs exhaustive paths", mismatches == 0 and elapsed < 10,
           f"{mismatches} mismatches / 1000, {elapsed:.2f} s")


def test_02_ssdtw_matches_naive_loop():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(500):
        a = rng.standard_normal(rng.integers(1, 31))
        s = rng.standard_normal(rng.integers(2, 31))
        pool = np.arange(1, s.size)
        n = rng.integers(1, min(4, pool.size) + 1)
        shifts = tuple(sorted(int(t) for t in rng.choice(pool, n, replace=False)))
        got = ssdtw(a, s, ShiftSet(shifts))
        want = naive_ssdtw(a, s, shifts, dtw)
        mismatches += got != want
    elapsed = time.perf_counter() - start
    report(2, "SSDTW vs truncate-then-DTW loop (bit-exact)", mismatches == 0 and elapsed < 30,
           f"{mismatches} mismatches / 500, {elapsed:.2f} s")


def test_03_gradient_check():
    arch = EncoderArch(16, ((4, 3, 2), (6, 3, 2), (8, 2, 1)), 8)
    rng = np.random.default_rng(3)
    ds = Dataset.from_arrays([f"x{i}" for i in range(8)], rng.standard_normal((8, 16)))
    batch = []
    for _ in range(3):
        order = [ds.ids[i] for i in rng.permutation(8)]
        batch.append(ContrastiveSample(order[0], tuple(order[1:3]), tuple(order[3:5])))
    params = init_params(arch, 3)
    start = time.perf_counter()
    worst = finite_difference_check(params, batch, ds, LossConfig(0.2, 2), step=1e-5)
    elapsed = time.perf_counter() - start
    n = arch.n_params()
    report(3, "analytic vs central-difference gradients",
           n <= 500 and worst < 1e-4 and elapsed < 120,
           f"{n} params, worst relative error {worst:.2e}, {elapsed:.2f} s")


def test_04_infonce_closed_forms():
    v = np.array([1.0, 0.0])
    sym = info_nce_loss(v, [v], [v], lam=0.2)
    sharp = info_nce_loss(v, [v], [-v], lam=0.2)
    e1, e2 = abs(sym - math.log(2)), abs(sharp - math.log1p(math.exp(-10)))
    report(4, "InfoNCE closed forms", e1 <= 1e-12 and e2 <= 1e-12,
           f"|ln2 err| {e1:.1e}, |log(1+e^-10) err| {e2:.1e}")


def test_05_exact_retrieval_recovers_planted_companions():
    start = time.perf_counter()
    family = Family()
    recalls = []
    for seed in range(20):
        ds, truth = family.draw(seed)
        recalls.append(companion_recall(pairwise_matrix(ds, ds, PRESETS["synthetic"]), truth))
    elapsed = time.perf_counter() - start
    mean = float(np.mean(recalls))
    report(5, "exact SSDTW companion recall", mean >= 0.95 and elapsed < 300,
           f"mean recall {mean:.4f} over 20 seeds (min {min(recalls):.3f}), {elapsed:.1f} s")


def test_06_embedding_retrieval_fidelity():
    start = time.perf_counter()
    trials = [cle_trial(seed) for seed in range(10)]
    elapsed = time.perf_counter() - start
    target = float(np.mean([t.target_recall for t in trials]))
    every = float(np.mean([t.all_recall for t in trials]))
    comp = float(np.mean([t.companion_recall for t in trials]))
    report(6, "encoder recall@5 vs exact SSDTW top-5", target >= 0.6 and elapsed < 900,
           f"planted-target queries {target:.4f} over 10 seeds "
           f"(all queries {every:.4f}, companion recall {comp:.4f}), {elapsed:.1f} s")


def test_07_forecast_ordering():
    seeds = range(20)
    res = forecast_trial(seeds)
    per = {m: {s: mse for s, mse, _ in res.per_seed[("ridge", m)]}
           for m in ("single", "random", "ssdtw")}
    single, rand, ss = (res.mean("ridge", m)[0] for m in ("single", "random", "ssdtw"))
    beats_random = sum(per["ssdtw"][s] <= per["random"][s] for s in seeds) / len(seeds)
    ok = ss < 0.9 * single and beats_random >= 0.8
    report(7, "SSDTW-selected forecasting ordering", ok,
           f"mse single {single:.5f}, random {rand:.5f}, ssdtw {ss:.5f} "
           f"({1 - ss / single:.1%} below single); ssdtw <= random on {beats_random:.0%} of seeds")


def test_08_bench_speedup(tmp_path, capsys):
    start = time.perf_counter()
    code = main(["bench", "--n", "500", "--t", "200", "--embedding-dim", "128",
                 "--output-dir", str(tmp_path)])
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    text = (tmp_path / "bench.txt").read_text()
    speedup = float(re.search(r"speedup:\s+([\d.]+)x", text).group(1))
    report(8, "embed-then-cosine vs exact pairwise SSDTW",
           code == 0 and speedup >= 50 and elapsed < 600,
           f"speedup {speedup:.1f}x at N=500 T=200 |shifts|=4 dim=128, {elapsed:.1f} s")


def _full_pipeline(d, capsys):
    d.mkdir()
    rows = ["series_id,timestamp,value"]
    rng = np.random.default_rng(9)
    for sid in ("a", "b", "c"):
        rows += [f"{sid},{t},{float(v)!r}" for t, v in enumerate(np.cumsum(rng.standard_normal(30)))]
    (d / "raw.csv").write_text("\n".join(rows) + "\n")
    small = ["--n-series", "24", "--length", "60", "--seeds", "0", "--workers", "1",
             "--output-dir", str(d)]
    enc = ["--max-epochs", "4", "--patience", "2", "--encoder-blocks", "8:5:2,8:3:2,8:3:2",
           "--embedding-dim", "16", "--k-e", "3"]
    steps = [
        ["ingest", "--input", d / "raw.csv", "--output", d / "raw.bin"],
        ["synth"],
        ["ssdtw-matrix", "--dataset", d / "synth.bin", "--csv", d / "m.csv"],
        ["train-encoder", "--dataset", d / "synth.bin", "--matrix", d / "matrix.bin", *enc],
        ["embed", "--dataset", d / "synth.bin", "--params", d / "encoder.bin", "--csv", d / "e.csv"],
        ["retrieve", "--matrix", d / "matrix.bin"],
        ["retrieve", "--embeddings", d / "embeddings.bin", "--output", d / "r_emb.csv"],
        ["synth", "--length", "120", "--output", d / "f.bin", "--truth", d / "ft.json"],
        ["forecast", "--dataset", d / "f.bin", "--truth", d / "ft.json", "--selection-len", "60",
         "--params", d / "encoder.bin", "--input-len", "20", "--seeds", "0,1"],
        ["sweep", "--param", "lambda", "--values", "0.2,0.9", *enc],
        ["sweep", "--param", "k-s", "--values", "0,2", "--input-len", "10"],
    ]
    for step in steps:
        assert main([str(x) for x in [step[0], *small, *step[1:]]]) == 0, step
    capsys.readouterr()
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_09_determinism(tmp_path, capsys):
    first = _full_pipeline(tmp_path / "a", capsys)
    second = _full_pipeline(tmp_path / "b", capsys)
    differing = [n for n in first if first[n] != second.get(n)]
    ok = not differing and first.keys() == second.keys() and len(first) >= 15
    report(9, "byte-identical reruns of every stage", ok,
           f"{len(first)} output files compared, {len(differing)} differ"
           + (f" ({', '.join(differing)})" if differing else ""))


def test_10_lambda_sweep_stability(tmp_path, capsys):
    start = time.perf_counter()
    code = main(["sweep", "--param", "lambda", "--values", "0.2,0.5,0.7,0.9",
                 "--seeds", "0,1,2,3,4", "--output-dir", str(tmp_path)])
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    summary = (tmp_path / "sweep-lambda.txt").read_text()
    spread = float(re.search(r"range of mean recall@5: ([\d.]+)", summary).group(1))
    pairs = re.findall(r"lambda=(\S+)\s+recall@5 ([\d.]+)", summary)
    means = ", ".join(f"{lam}: {rec}" for lam, rec in pairs)
    report(10, "recall@5 stability across lambda", code == 0 and spread < 0.2,
           f"spread {spread:.4f} ({means}) over 5 seeds, {elapsed:.1f} s")
