import json

import numpy as np
import pytest

from lagsearch.cli import main
from lagsearch.ssdtw import DistanceMatrix


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


SMALL = ["--n-series", 24, "--length", 60, "--seeds", 0]


def test_synth_matrix_retrieve_recovers_companions(tmp_path, capsys):
    d = tmp_path
    assert run(capsys, "synth", "--output-dir", d)[0] == 0
    assert run(capsys, "ssdtw-matrix", "--dataset", d / "synth.bin", "--output-dir", d,
               "--csv", d / "m.csv")[0] == 0
    code, out, _ = run(capsys, "retrieve", "--matrix", d / "matrix.bin", "--output-dir", d,
                       "--truth", d / "truth.json")
    assert code == 0
    truth = json.loads((d / "truth.json").read_text())
    lines = (d / "retrieval.csv").read_text().splitlines()
    assert lines[0] == "target_id,rank,candidate_id,score"
    got = {}
    for line in lines[1:]:
        t, _, c, _ = line.split(",")
        got.setdefault(t, set()).add(c)
    hits = sum(len(got[t] & set(c)) for t, c in truth.items())
    assert hits / sum(len(c) for c in truth.values()) >= 0.95
    assert "planted companions recovered" in out
    assert (d / "m.csv").read_text().startswith("row_id,col_id,distance\n")


def test_usage_errors_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 2
    code, _, err = run(capsys, "synth", "--k-s", "many", "--output-dir", tmp_path)
    assert code == 2 and json.loads(err)["error"] == "InvalidInputError"
    code, _, _ = run(capsys, "synth", "--lag", 500, "--output-dir", tmp_path)
    assert code == 2


def test_data_errors_exit_3(tmp_path, capsys):
    code, _, err = run(capsys, "ssdtw-matrix", "--dataset", tmp_path / "missing.bin")
    assert code == 3 and json.loads(err)["exit_code"] == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("series_id,timestamp,value\na,0,1\na,1,x\n")
    code, _, err = run(capsys, "ingest", "--input", bad, "--output-dir", tmp_path)
    assert code == 3 and "line 3" in json.loads(err)["message"]


def test_numerical_error_exit_4(tmp_path, capsys):
    csv = tmp_path / "flat.csv"
    rows = ["series_id,timestamp,value"]
    for sid in ("a", "b", "c", "d"):
        rows += [f"{sid},{t},{1.0 if sid in 'ab' else float(t % 3)}" for t in range(20)]
    csv.write_text("\n".join(rows) + "\n")
    code, _, err = run(capsys, "forecast", "--dataset", csv, "--output-dir", tmp_path,
                       "--alpha", 0, "--input-len", 5, "--methods", "single", "--targets", "a")
    assert code == 4 and json.loads(err)["error"] == "NumericalError"


def test_ingest_and_dump_config(tmp_path, capsys):
    csv = tmp_path / "in.csv"
    csv.write_text("series_id,timestamp,value\nx,0,1\nx,1,2\ny,0,3\ny,1,\n")
    code, out, _ = run(capsys, "ingest", "--input", csv, "--output", tmp_path / "ds.bin")
    assert code == 0 and "1 series" in out
    code, out, _ = run(capsys, "synth", "--dump-config", "-", "--k-s", 7, "--raw")
    assert code == 0 and "k-s = 7" in out and "normalize = false" in out
    (tmp_path / "c.cfg").write_text(out)
    code, out2, _ = run(capsys, "bench", "--config", tmp_path / "c.cfg", "--dump-config", "-")
    assert out2 == out


def _pipeline(d, capsys):
    common = SMALL + ["--output-dir", d, "--workers", 1]
    d.mkdir()
    steps = [
        ["synth"],
        ["ssdtw-matrix", "--dataset", d / "synth.bin", "--csv", d / "m.csv"],
        ["train-encoder", "--dataset", d / "synth.bin", "--matrix", d / "matrix.bin",
         "--max-epochs", 3, "--patience", 2, "--encoder-blocks", "8:5:2,8:3:2,8:3:2", "--embedding-dim", 16,
         "--k-e", 3],
        ["embed", "--dataset", d / "synth.bin", "--params", d / "encoder.bin", "--csv", d / "e.csv"],
        ["retrieve", "--matrix", d / "matrix.bin"],
        ["retrieve", "--embeddings", d / "embeddings.bin", "--output", d / "r_emb.csv",
         "--exclude", "s00"],
        ["synth", "--length", 120, "--output", d / "f.bin", "--truth", d / "ft.json"],
        ["forecast", "--dataset", d / "f.bin", "--truth", d / "ft.json", "--selection-len", 60,
         "--params", d / "encoder.bin", "--input-len", 20, "--seeds", "0,1"],
    ]
    for step in steps:
        code, _, err = run(capsys, step[0], *common, *step[1:])
        assert code == 0, (step, err)
    return d


def test_every_stage_byte_identical_on_rerun(tmp_path, capsys):
    a = _pipeline(tmp_path / "a", capsys)
    b = _pipeline(tmp_path / "b", capsys)
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert {"synth.bin", "truth.json", "matrix.bin", "encoder.bin", "history.csv",
            "embeddings.bin", "retrieval.csv", "forecast.csv", "forecast.txt"} <= set(names)
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    m = DistanceMatrix.load(a / "matrix.bin")
    assert np.isinf(m.values.diagonal()).all()
    assert "s00" not in {line.split(",")[2] for line in (a / "r_emb.csv").read_text().splitlines()[1:]}
    assert "cle" in (a / "forecast.txt").read_text()


def test_train_encoder_without_matrix(tmp_path, capsys):
    run(capsys, "synth", *SMALL, "--output-dir", tmp_path)
    code, out, _ = run(capsys, "train-encoder", "--dataset", tmp_path / "synth.bin", *SMALL,
                       "--output-dir", tmp_path, "--max-epochs", 2, "--patience", 1, "--embedding-dim", 8,
                       "--encoder-blocks", "4:3:2", "--k-e", 2, "--patience", 1)
    assert code == 0 and "best epoch" in out
    hist = (tmp_path / "history.csv").read_text().splitlines()
    assert hist[0] == "epoch,train_loss,val_loss" and len(hist) >= 2


def test_bench_and_sweep_small(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "--n", 12, "--t", 40, "--output-dir", tmp_path,
                       "--embedding-dim", 16, "--encoder-blocks", "8:3:2")
    assert code == 0 and "speedup" in (tmp_path / "bench.txt").read_text()
    code, _, _ = run(capsys, "sweep", "--param", "k-s", "--values", "0,1", *SMALL,
                     "--input-len", 10, "--output-dir", tmp_path)
    assert code == 0
    rows = (tmp_path / "sweep-k-s.csv").read_text().splitlines()
    assert rows[0] == "param,value,model,method,seed,mse,mae" and len(rows) == 3
    code, _, _ = run(capsys, "sweep", "--param", "k-e", "--values", "1:1,2:3", *SMALL,
                     "--max-epochs", 2, "--patience", 1, "--embedding-dim", 8, "--encoder-blocks", "4:3:2",
                     "--output-dir", tmp_path)
    assert code == 0
    rows = (tmp_path / "sweep-k-e.csv").read_text().splitlines()
    assert [r.split(",")[1] for r in rows[1:]] == ["1:1", "2:3"]
    code, _, err = run(capsys, "sweep", "--param", "lambda", "--values", "x", "--output-dir", tmp_path)
    assert code == 2
