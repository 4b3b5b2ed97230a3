"""``lagsearch`` command-line interface.

Every subcommand accepts ``--config FILE`` plus one flag per config key
(``--k-s 5``, ``--shifts 1,2,3``); flags win over the file, which wins
over the preset. Progress goes to stdout, results only to files, and
failures print one JSON line to stderr and exit with 2 (usage), 3 (data)
or 4 (numerical).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _dtw_py
from ._backend import BACKEND, kernels
from ._io import write_atomic
from .config import FIELDS, RunConfig, load_config, parse_value
from .contrastive import train
from .encoder import EmbeddingSet, EncoderParams, embed_all, embedding_matrix, init_params
from .errors import DataError, InvalidInputError, LagSearchError
from .experiments import Family, cle_trial, forecast_trial
from .forecaster import compare_pipelines
from .retrieval import build_contrastive_samples, mean_recall, results_to_csv, top_k
from .series import (
    DATASET_MAGIC, Dataset, generate_planted_lag, ingest_csv, load_dataset,
    normalize_dataset, save_dataset,
)
from .ssdtw import DistanceMatrix, pairwise_matrix

SWEEP_DEFAULTS = {
    "lambda": "0.2,0.5,0.7,0.9",
    "k-s": "0,1,3,5,10",
    "k-e": "1:1,3:3,5:5,3:10,10:3",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _report_error("UsageError", 2, message)
        sys.exit(2)


def _report_error(kind: str, code: int, message: str) -> None:
    print(json.dumps({"error": kind, "exit_code": code, "message": message}), file=sys.stderr)


def say(msg: str) -> None:
    print(msg, flush=True)


# -- argument plumbing --------------------------------------------------------

def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    grp = parent.add_argument_group("run configuration")
    grp.add_argument("--config", metavar="FILE", help="key = value config file")
    grp.add_argument("--dump-config", metavar="FILE",
                     help="write the effective config ('-' for stdout) and exit")
    for key, f in FIELDS.items():
        kw = {"dest": "cfg:" + key, "default": argparse.SUPPRESS, "help": f.metadata["help"]}
        if f.type in (bool, "bool"):
            grp.add_argument(f"--{key}", nargs="?", const="true", metavar="BOOL", **kw)
        else:
            grp.add_argument(f"--{key}", metavar=key.upper().replace("-", "_"), **kw)
    grp.add_argument("--raw", dest="cfg:normalize", action="store_const", const="false",
                     default=argparse.SUPPRESS, help="same as --normalize false")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    p = _Parser(prog="lagsearch", description="Lag-aware similarity search for time series.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_text):
        return sub.add_parser(name, parents=[parent], help=help_text, description=help_text)

    c = cmd("ingest", "parse a long-format CSV into a dataset cache")
    c.add_argument("--input", required=True, help="CSV with series_id,timestamp,value")
    c.add_argument("--output", help="dataset cache path")
    c.add_argument("--schema", help="column renames as logical=actual,...")

    c = cmd("synth", "generate a planted-lag dataset and its ground truth")
    c.add_argument("--output", help="dataset cache path")
    c.add_argument("--truth", help="ground-truth JSON path")

    c = cmd("ssdtw-matrix", "pairwise shifted-DTW (or DTW) distance matrix")
    c.add_argument("--dataset", required=True)
    c.add_argument("--output", help="matrix path")
    c.add_argument("--csv", help="also export row_id,col_id,distance")
    c.add_argument("--targets", help="comma-separated row ids (default: all)")

    c = cmd("train-encoder", "contrastive training against exact distances")
    c.add_argument("--dataset", required=True)
    c.add_argument("--matrix", help="precomputed matrix (computed when omitted)")
    c.add_argument("--output", help="params path")
    c.add_argument("--history", help="training history CSV path")

    c = cmd("embed", "embed every series with a trained encoder")
    c.add_argument("--dataset", required=True)
    c.add_argument("--params", required=True)
    c.add_argument("--output", help="embeddings path")
    c.add_argument("--csv", help="also export embeddings as CSV")

    c = cmd("retrieve", "top-k auxiliary series per target")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", help="exact distance matrix")
    src.add_argument("--embeddings", help="embeddings (cosine retrieval)")
    c.add_argument("--output", help="retrieval CSV path")
    c.add_argument("--k", type=int, help="neighbours per target (default: k-s)")
    c.add_argument("--targets", help="comma-separated target ids (default: all)")
    c.add_argument("--exclude", help="comma-separated ids never retrieved")
    c.add_argument("--truth", help="ground-truth JSON; prints recovery rate")

    c = cmd("forecast", "compare auxiliary-selection methods on a forecaster")
    c.add_argument("--dataset", required=True)
    c.add_argument("--params", help="encoder params (enables the cle method)")
    c.add_argument("--output", help="metrics CSV path")
    c.add_argument("--report", help="aligned-text report path")
    c.add_argument("--targets", help="comma-separated target ids (default: all)")
    c.add_argument("--truth", help="ground-truth JSON; its targets are forecast")
    c.add_argument("--exclude", help="comma-separated ids never selected")

    c = cmd("bench", "time exact pairwise search against embedding search")
    c.add_argument("--n", type=int, default=500, help="number of series")
    c.add_argument("--t", type=int, default=200, help="series length")
    c.add_argument("--params", help="encoder params (random init when omitted)")
    c.add_argument("--output", help="timing report path")

    c = cmd("sweep", "sensitivity sweep on the planted-lag family")
    c.add_argument("--param", required=True, choices=sorted(SWEEP_DEFAULTS))
    c.add_argument("--values", help="comma-separated values (k-e takes pos:neg pairs)")
    c.add_argument("--output", help="sweep CSV path")
    c.add_argument("--report", help="aligned-text summary path")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for dest, text in vars(args).items():
        if dest.startswith("cfg:"):
            key = dest[4:]
            overrides[FIELDS[key].name] = parse_value(key, text)
    return load_config(args.config, overrides)


def _out(cfg: RunConfig, explicit: Optional[str], default_name: str) -> Path:
    return Path(explicit) if explicit else Path(cfg.output_dir) / default_name


def _ids(text: Optional[str]) -> Optional[list[str]]:
    return None if text is None else [p for p in text.replace(" ", "").split(",") if p]


def _read_dataset(path: str, cfg: RunConfig) -> Dataset:
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            head = fh.read(len(DATASET_MAGIC))
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc.strerror}") from None
    if head == DATASET_MAGIC:
        ds = load_dataset(p, allow_ragged=True)
        if not cfg.allow_ragged:
            ds = Dataset(series=ds.series, source=ds.source)
        return ds
    return ingest_csv(p, missing=cfg.missing, target_feature=cfg.target_feature,
                      allow_ragged=cfg.allow_ragged)


def _prepared(ds: Dataset, cfg: RunConfig) -> Dataset:
    """The selection period, z-scored when configured."""
    if cfg.selection_len is not None:
        ds = ds.slice(0, cfg.selection_len)
    return normalize_dataset(ds) if cfg.normalize else ds


def _read_truth(path: str) -> dict[str, list[str]]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read truth file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"truth file {path} is not JSON: {exc}") from None
    if not isinstance(data, dict):
        raise DataError("truth file must map target ids to companion lists")
    return {str(k): [str(x) for x in v] for k, v in data.items()}


def _exact_matrix(ds: Dataset, cfg: RunConfig, targets: Optional[list[str]] = None) -> DistanceMatrix:
    rows = ds if targets is None else ds.subset(targets)
    shift_set = cfg.shift_set() if cfg.metric == "ssdtw" else None
    return pairwise_matrix(rows, ds, shift_set, cfg.dtw_config(), cfg.n_workers,
                           metric=cfg.metric, align_target_head=cfg.align_target_head)


# -- commands -----------------------------------------------------------------

def cmd_ingest(args, cfg: RunConfig) -> None:
    schema = None
    if args.schema:
        schema = dict(p.split("=", 1) for p in _ids(args.schema))
    ds = ingest_csv(args.input, schema=schema, missing=cfg.missing,
                    target_feature=cfg.target_feature, allow_ragged=cfg.allow_ragged)
    out = _out(cfg, args.output, "dataset.bin")
    save_dataset(ds, out)
    say(f"ingested {len(ds)} series -> {out}")


def cmd_synth(args, cfg: RunConfig) -> None:
    ds, truth = generate_planted_lag(cfg.n_series, cfg.length, cfg.lag, cfg.noise_sigma,
                                     cfg.n_correlated, cfg.seeds[0], cfg.n_targets)
    out = _out(cfg, args.output, "synth.bin")
    truth_path = _out(cfg, args.truth, "truth.json")
    save_dataset(ds, out)
    write_atomic(truth_path, json.dumps(truth, indent=2, sort_keys=True) + "\n")
    say(f"generated {len(ds)} series ({len(truth)} planted targets) -> {out}, {truth_path}")


def cmd_ssdtw_matrix(args, cfg: RunConfig) -> None:
    ds = _prepared(_read_dataset(args.dataset, cfg), cfg)
    say(f"{cfg.metric} matrix over {len(ds)} series, shifts {cfg.shift_set()}, "
        f"{cfg.n_workers} worker(s), {BACKEND} kernel")
    m = _exact_matrix(ds, cfg, _ids(args.targets))
    out = _out(cfg, args.output, "matrix.bin")
    m.save(out)
    if args.csv:
        write_atomic(args.csv, m.to_csv())
    say(f"wrote {m.shape[0]}x{m.shape[1]} matrix -> {out}")


def cmd_train_encoder(args, cfg: RunConfig) -> None:
    ds = _prepared(_read_dataset(args.dataset, cfg), cfg)
    m = DistanceMatrix.load(args.matrix) if args.matrix else _exact_matrix(ds, cfg)
    missing = [i for i in m.row_ids + m.col_ids if i not in ds]
    if missing:
        raise DataError(f"matrix refers to series {missing[0]!r} absent from the dataset")
    seed = cfg.seeds[0]
    order = np.random.default_rng(seed).permutation(len(m.row_ids))
    n_val = max(1, int(round(cfg.val_fraction * len(order))))
    if n_val >= len(order):
        raise InvalidInputError("too few anchors to hold out a validation set")
    val_anchors = [m.row_ids[i] for i in sorted(order[:n_val])]
    train_anchors = [m.row_ids[i] for i in sorted(order[n_val:])]
    samples = build_contrastive_samples(m, train_anchors, cfg.k_e, cfg.n_neg)
    val_samples = build_contrastive_samples(m, val_anchors, cfg.k_e, cfg.n_neg)
    series_len = min(len(ts) for ts in ds)
    arch = cfg.encoder_arch(series_len)
    say(f"training encoder ({arch.n_params()} params) on {len(samples)} anchors, "
        f"{len(val_samples)} held out")
    params, history = train(init_params(arch, seed), samples, ds, cfg.loss_config(),
                            cfg.train_config(seed), val_samples, log=say)
    out = _out(cfg, args.output, "encoder.bin")
    hist = _out(cfg, args.history, "history.csv")
    params.save(out)
    write_atomic(hist, history.to_csv())
    say(f"best epoch {history.best_epoch} -> {out}, {hist}")


def cmd_embed(args, cfg: RunConfig) -> None:
    ds = _prepared(_read_dataset(args.dataset, cfg), cfg)
    params = EncoderParams.load(args.params)
    emb = embed_all(params, ds)
    for sid, msg in sorted(emb.errors.items()):
        say(f"skipped {sid}: {msg}")
    if not len(emb):
        raise DataError("no series could be embedded")
    out = _out(cfg, args.output, "embeddings.bin")
    emb.save(out)
    if args.csv:
        write_atomic(args.csv, emb.to_csv())
    say(f"embedded {len(emb)} series (dim {emb.dim}) -> {out}")


def cmd_retrieve(args, cfg: RunConfig) -> None:
    if args.matrix:
        m = DistanceMatrix.load(args.matrix)
    else:
        m = embedding_matrix(EmbeddingSet.load(args.embeddings))
    k = cfg.k_s if args.k is None else args.k
    targets = _ids(args.targets) or list(m.row_ids)
    exclude = _ids(args.exclude) or []
    results = [top_k(m, t, k, exclude) for t in targets]
    out = _out(cfg, args.output, "retrieval.csv")
    write_atomic(out, results_to_csv(results))
    say(f"retrieved top-{k} for {len(results)} targets from {m.metric} distances -> {out}")
    if args.truth:
        truth = _read_truth(args.truth)
        hits = total = 0
        for res in results:
            if res.target_id in truth:
                hits += len(set(res.ids) & set(truth[res.target_id]))
                total += len(truth[res.target_id])
        if total:
            say(f"planted companions recovered: {hits}/{total} ({hits / total:.3f})")


def cmd_forecast(args, cfg: RunConfig) -> None:
    ds = _read_dataset(args.dataset, cfg)
    encoder = EncoderParams.load(args.params) if args.params else None
    methods = [m for m in cfg.methods if m != "cle" or encoder is not None]
    if len(methods) < len(cfg.methods):
        say("no --params given; skipping cle")
    targets = _ids(args.targets)
    if args.truth:
        targets = list(_read_truth(args.truth))
    res = compare_pipelines(
        ds, cfg.shift_set(), (cfg.model_spec(),), cfg.seeds, cfg.k_s, cfg.window(),
        tuple(cfg.split), cfg.selection_len, targets, encoder, methods, cfg.dtw_config(),
        cfg.normalize, _ids(args.exclude) or (), cfg.n_workers, cfg.shift_aux_by_argmin,
    )
    out = _out(cfg, args.output, "forecast.csv")
    report = _out(cfg, args.report, "forecast.txt")
    write_atomic(out, res.to_csv())
    write_atomic(report, res.to_text())
    say(res.to_text().rstrip())
    say(f"-> {out}, {report}")


def run_bench(cfg: RunConfig, n: int, t: int, params: Optional[EncoderParams] = None) -> dict:
    """Wall-clock of exact top-k search against embed-then-cosine top-k search."""
    lag = min(cfg.lag, t - 1)
    n_corr = min(cfg.n_correlated, n - 1)
    ds, _ = generate_planted_lag(n, t, lag, cfg.noise_sigma, n_corr, cfg.seeds[0])
    ds = normalize_dataset(ds)
    shift_set = cfg.shift_set()
    k = min(5, n - 1)
    if params is None:
        params = init_params(cfg.encoder_arch(t), cfg.seeds[0])

    start = time.perf_counter()
    exact = pairwise_matrix(ds, ds, shift_set, cfg.dtw_config(), cfg.n_workers)
    exact_top = [top_k(exact, sid, k) for sid in ds.ids]
    t_exact = time.perf_counter() - start

    start = time.perf_counter()
    approx = embedding_matrix(embed_all(params, ds))
    approx_top = [top_k(approx, sid, k) for sid in ds.ids]
    t_embed = time.perf_counter() - start
    assert len(exact_top) == len(approx_top)

    a, b = ds[ds.ids[0]].values, ds[ds.ids[1]].values
    reps = 3
    start = time.perf_counter()
    for _ in range(reps):
        kernels.last_row(a, b, 0, -1)
    t_kernel = (time.perf_counter() - start) / reps
    start = time.perf_counter()
    _dtw_py.last_row(a, b, 0, -1)
    t_py = time.perf_counter() - start
    return {
        "n": n, "t": t, "shifts": len(shift_set.candidates),
        "embedding_dim": params.arch.embedding_dim, "workers": cfg.n_workers,
        "backend": BACKEND, "exact_seconds": t_exact, "embed_seconds": t_embed,
        "speedup": t_exact / t_embed, "recall_at_k": mean_recall(exact, approx, k), "k": k,
        "kernel_pair_seconds": t_kernel, "python_pair_seconds": t_py,
        "kernel_speedup": t_py / t_kernel,
    }


def format_bench(r: dict) -> str:
    return "\n".join([
        f"N={r['n']} T={r['t']} |shifts|={r['shifts']} embedding_dim={r['embedding_dim']} "
        f"workers={r['workers']} backend={r['backend']}",
        f"exact pairwise + top-{r['k']}:   {r['exact_seconds']:10.3f} s",
        f"embed + cosine top-{r['k']}:     {r['embed_seconds']:10.3f} s",
        f"speedup:                 {r['speedup']:10.1f}x",
        f"recall@{r['k']} (this encoder): {r['recall_at_k']:10.3f}",
        f"one DTW pair, {r['backend']} kernel: {r['kernel_pair_seconds'] * 1e3:9.3f} ms",
        f"one DTW pair, python kernel: {r['python_pair_seconds'] * 1e3:9.3f} ms "
        f"({r['kernel_speedup']:.0f}x slower)",
    ]) + "\n"


def cmd_bench(args, cfg: RunConfig) -> None:
    if args.n < 2 or args.t < 2:
        raise InvalidInputError("bench needs --n >= 2 and --t >= 2")
    params = EncoderParams.load(args.params) if args.params else None
    say(f"benchmarking N={args.n} T={args.t} ...")
    text = format_bench(run_bench(cfg, args.n, args.t, params))
    out = _out(cfg, args.output, "bench.txt")
    write_atomic(out, text)
    say(text.rstrip())
    say(f"-> {out}")


def _sweep_values(param: str, text: str):
    parts = [p for p in text.replace(" ", "").split(",") if p]
    try:
        if param == "lambda":
            return [float(p) for p in parts]
        if param == "k-s":
            return [int(p) for p in parts]
        return [tuple(int(x) for x in p.split(":")) for p in parts]
    except ValueError:
        raise InvalidInputError(f"bad sweep values {text!r}") from None


def _family(cfg: RunConfig, length: Optional[int] = None, normalize: Optional[bool] = None) -> Family:
    return Family(cfg.n_series, length or cfg.length, cfg.lag, cfg.noise_sigma, cfg.n_correlated,
                  cfg.normalize if normalize is None else normalize)


def run_sweep(cfg: RunConfig, param: str, values) -> tuple[str, str]:
    """``(csv, summary)`` for one sensitivity sweep."""
    rows, summary = [], []
    if param == "k-s":
        selection = cfg.selection_len or cfg.length
        family = _family(cfg, length=2 * selection, normalize=False)
        rows.append("param,value,model,method,seed,mse,mae")
        for k in values:
            res = forecast_trial(cfg.seeds, family, selection, cfg.shift_set(), k,
                                 methods=("ssdtw",), spec=cfg.model_spec(),
                                 window=cfg.window(), workers=cfg.n_workers)
            for (model, method), recs in res.per_seed.items():
                for seed, mse, mae in recs:
                    rows.append(f"k-s,{k},{model},{method},{seed},{mse!r},{mae!r}")
                mse, mae = res.mean(model, method)
                summary.append(f"k-s={k:<4} mse {mse:.6g}  mae {mae:.6g}")
                say(summary[-1])
        return "\n".join(rows) + "\n", "\n".join(summary) + "\n"

    rows.append("param,value,seed,target_recall,all_recall,companion_recall,epochs")
    means = []
    for v in values:
        if param == "lambda":
            loss, n_neg, label = replace(cfg.loss_config(), lam=v), cfg.n_neg, repr(v)
        else:
            loss, n_neg, label = replace(cfg.loss_config(), k_e=v[0]), v[1], f"{v[0]}:{v[1]}"
        recalls = []
        for seed in cfg.seeds:
            trial = cle_trial(seed, _family(cfg), cfg.shift_set(), cfg.resolved("encoder_blocks"),
                              cfg.embedding_dim, loss, cfg.train_config(seed), n_neg,
                              dtw_cfg=cfg.dtw_config(), workers=cfg.n_workers)
            recalls.append(trial.target_recall)
            rows.append(f"{param},{label},{seed},{trial.target_recall!r},{trial.all_recall!r},"
                        f"{trial.companion_recall!r},{trial.epochs}")
        means.append(float(np.mean(recalls)))
        summary.append(f"{param}={label:<6} recall@5 {means[-1]:.4f}")
        say(summary[-1])
    summary.append(f"range of mean recall@5: {max(means) - min(means):.4f}")
    return "\n".join(rows) + "\n", "\n".join(summary) + "\n"


def cmd_sweep(args, cfg: RunConfig) -> None:
    values = _sweep_values(args.param, args.values or SWEEP_DEFAULTS[args.param])
    if not values:
        raise InvalidInputError("no sweep values")
    say(f"sweeping {args.param} over {len(values)} values x {len(cfg.seeds)} seed(s)")
    table, summary = run_sweep(cfg, args.param, values)
    out = _out(cfg, args.output, f"sweep-{args.param}.csv")
    report = _out(cfg, args.report, f"sweep-{args.param}.txt")
    write_atomic(out, table)
    write_atomic(report, summary)
    say(summary.splitlines()[-1])
    say(f"-> {out}, {report}")


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "ssdtw-matrix": cmd_ssdtw_matrix,
    "train-encoder": cmd_train_encoder,
    "embed": cmd_embed,
    "retrieve": cmd_retrieve,
    "forecast": cmd_forecast,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.dump_config:
            text = cfg.dump()
            if args.dump_config == "-":
                sys.stdout.write(text)
            else:
                write_atomic(args.dump_config, text)
            return 0
        if cfg.output_dir:
            os.makedirs(cfg.output_dir, exist_ok=True)
        COMMANDS[args.command](args, cfg)
    except LagSearchError as exc:
        _report_error(type(exc).__name__, exc.exit_code, str(exc))
        return exc.exit_code
    except OSError as exc:
        _report_error("DataError", DataError.exit_code, f"{exc.filename or ''}: {exc.strerror}")
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
