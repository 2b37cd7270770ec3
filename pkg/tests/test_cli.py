import csv
import io
import json
from pathlib import Path

import pytest

from idclrec.cli import main
from idclrec.synthetic import PlantedSpec, planted_sequences, records_from_sequences

FAST = ["--set", "d=8", "--set", "blocks=1", "--set", "heads=1", "--set", "max_epochs=2", "--set", "batch=64"]


@pytest.fixture(scope="module")
def raw(tmp_path_factory):
    seqs, _ = planted_sequences(PlantedSpec(num_users=40, items_per_cell=2, min_len=8, max_len=10), seed=0)
    path = tmp_path_factory.mktemp("raw") / "log.tsv"
    path.write_text("".join(f"{r.user}\t{r.item}\t{r.timestamp}\n" for r in records_from_sequences(seqs)))
    return path


@pytest.fixture(scope="module")
def prepared(raw, tmp_path_factory):
    out = tmp_path_factory.mktemp("prep") / "ds"
    assert main(["prep", "--input", str(raw), "--out", str(out), "--N", "8"]) == 0
    return out


def run(capsys, argv):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_prep_prints_stats_and_writes_manifest(raw, tmp_path, capsys):
    code, out, _ = run(capsys, ["prep", "--input", str(raw), "--out", str(tmp_path / "a"), "--N", "8"])
    assert code == 0
    stats = json.loads(out)
    assert stats["users"] == 40 and {"items", "interactions", "avg_length", "sparsity"} <= set(stats)
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["num_users"] == 40


def test_prep_idempotent(raw, tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, ["prep", "--input", str(raw), "--out", str(tmp_path / name), "--N", "8"])
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


def test_prep_min_len_warning(raw, tmp_path, capsys, caplog):
    code, out, _ = run(capsys, ["prep", "--input", str(raw), "--out", str(tmp_path / "a"), "--min-len", "99"])
    assert code == 0 and json.loads(out)["train_instances"] == 0
    assert "no training instances" in caplog.text


def test_prep_unreadable_input(tmp_path, capsys):
    code, _, err = run(capsys, ["prep", "--input", str(tmp_path / "nope.tsv"), "--out", str(tmp_path / "x")])
    assert code == 3 and "idclrec: error[E_INPUT]:" in err
    bad = tmp_path / "bad.tsv"
    bad.write_text("u1\ti1\n")
    code, _, err = run(capsys, ["prep", "--input", str(bad), "--out", str(tmp_path / "x")])
    assert code == 3 and "line 1" in err


def test_train_missing_data_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2
    assert "error[E_USAGE]" in capsys.readouterr().err


def test_train_eval_export_analyze(prepared, tmp_path, capsys):
    code, out, _ = run(capsys, ["train", "--data", str(prepared), "--out", str(tmp_path), "--seeds", "3",
                                "--variant", "E", *FAST])
    assert code == 0
    summary = json.loads(out)
    run_dir = Path(summary["run_dir"])
    assert run_dir.parent == tmp_path and run_dir.name.startswith("train-")
    assert (run_dir / "seed-3" / "train_log.csv").exists()
    ck = run_dir / "seed-3" / "best"

    code, out, _ = run(capsys, ["eval", "--checkpoint", str(ck), "--data", str(prepared), "--split", "valid"])
    assert code == 0 and json.loads(out)["split"] == "valid"
    code, out, _ = run(capsys, ["eval", "--checkpoint", str(ck), "--data", str(prepared)])
    test_report = json.loads(out)
    assert test_report["hr"] == summary["mean"]["hr"]

    exp = tmp_path / "exp"
    code, out, _ = run(capsys, ["export", "--checkpoint", str(ck), "--data", str(prepared), "--out", str(exp)])
    assert code == 0 and json.loads(out)["rows"] == 40
    lines = (exp / "intent.tsv").read_text().splitlines()
    assert len(lines) == 40
    interest = (exp / "interest.tsv").read_text().splitlines()
    assert all(set(l.split("\t")[1].split()) == {"0.0"} for l in interest)

    an = tmp_path / "an"
    code, out, _ = run(capsys, ["analyze", "--dump", str(exp / "intent.tsv"), "--k", "3", "--data", str(prepared),
                                "--out", str(an)])
    assert code == 0
    res = json.loads(out)
    assert res["k"] == 3 and 0 < res["centroid_sim_mean"] < 1 and "item_overlap_intra" in res
    assert (an / "centroid_similarity_hist.csv").read_text().startswith("bin_lo,bin_hi,count\n")


def test_train_idempotent(prepared, tmp_path, capsys):
    args = ["train", "--data", str(prepared), "--seeds", "5", *FAST]
    run(capsys, args + ["--out", str(tmp_path / "a")])
    run(capsys, args + ["--out", str(tmp_path / "b")])
    (ra,), (rb,) = list((tmp_path / "a").iterdir()), list((tmp_path / "b").iterdir())
    assert ra.name == rb.name
    for f in ("seed-5/best/model.bin", "seed-5/best/model.json", "seed-5/metrics.json", "metrics.json"):
        if f == "metrics.json":
            a = json.loads((ra / f).read_text())
            b = json.loads((rb / f).read_text())
            a.pop("run_dir"), b.pop("run_dir")
            assert a == b
        else:
            assert (ra / f).read_bytes() == (rb / f).read_bytes(), f
    strip = lambda p: [r[:-1] for r in csv.reader(io.StringIO(p.read_text()))]
    assert strip(ra / "seed-5/train_log.csv") == strip(rb / "seed-5/train_log.csv")


def test_run_root_env(prepared, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("IDCLREC_RUN_ROOT", str(tmp_path / "env"))
    code, out, _ = run(capsys, ["train", "--data", str(prepared), "--seeds", "1", *FAST])
    assert code == 0 and Path(json.loads(out)["run_dir"]).parent == tmp_path / "env"


def test_eval_errors(prepared, tmp_path, capsys):
    code, _, err = run(capsys, ["eval", "--checkpoint", str(tmp_path / "none"), "--data", str(prepared)])
    assert code == 4 and "error[E_CHECKPOINT]" in err
    code, _, err = run(capsys, ["eval", "--checkpoint", str(tmp_path), "--data", str(tmp_path / "nods")])
    assert code == 3


def test_config_errors(prepared, tmp_path, capsys):
    code, _, err = run(capsys, ["train", "--data", str(prepared), "--set", "bogus=1", "--out", str(tmp_path)])
    assert code == 6 and "error[E_CONFIG]" in err
    code, _, err = run(capsys, ["train", "--data", str(prepared), "--set", "N=12", "--out", str(tmp_path)])
    assert code == 6 and "N=12" in err
    code, _, err = run(capsys, ["train", "--data", str(prepared), "--variant", "Z", "--out", str(tmp_path)])
    assert code == 6


def test_ablate_emits_eight_rows(prepared, tmp_path, capsys):
    code, out, _ = run(capsys, ["ablate", "--data", str(prepared), "--seeds", "1", "--out", str(tmp_path),
                                *FAST, "--set", "max_epochs=1"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["variant", "HR@5", "HR@10", "HR@20", "NDCG@5", "NDCG@10", "NDCG@20"]
    assert [r[0] for r in rows[1:]] == ["Full", "A_NoLd", "B_NoCL1", "C_NoCL2", "D_NoAux",
                                        "E_NoDisentangle", "F_MostRecentIntent", "G_AveragePooling"]
    (run_dir,) = list(tmp_path.iterdir())
    assert (run_dir / "ablation.csv").read_text() == out


def test_grid_emits_rows(prepared, tmp_path, capsys):
    code, out, _ = run(capsys, ["grid", "--data", str(prepared), "--seeds", "1", "--out", str(tmp_path),
                                "--grid", "delta=0.5,0.9", *FAST, "--set", "max_epochs=1"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["delta", "valid_HR@20", "valid_NDCG@20"] and len(rows) == 3
    assert float(rows[1][2]) >= float(rows[2][2])
    code, _, err = run(capsys, ["grid", "--data", str(prepared), "--grid", "delta", "--out", str(tmp_path)])
    assert code == 2


def test_analyze_requires_k(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--dump", str(tmp_path / "x.tsv")])
    assert exc.value.code == 2
