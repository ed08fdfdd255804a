import csv
import random

import pytest

from hterqe.cli import main
from hterqe.dataset import load_tsv, reindex, write_tsv
from hterqe.synthetic import make_synthetic_corpus
from hterqe.ter import compute_hter, normalize

FAST = """epochs = 2
learning_rate = 0.02
buckets = 512
dim = 8
folds = 3
gbrt_estimators = 40
"""


@pytest.fixture
def run_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    c = make_synthetic_corpus(60, seed=1)
    write_tsv(c.records[:45], tmp_path / "train.tsv")
    write_tsv(reindex(c.records[45:]), tmp_path / "test.tsv")
    (tmp_path / "run.cfg").write_text(f"train = train.tsv\ntest = test.tsv\noutput = out\n{FAST}")
    return tmp_path


def lines(path):
    return path.read_text().splitlines()


class TestLabel:
    def test_identical_files(self, tmp_path, capsys):
        (tmp_path / "a").write_text("one two\nthree\n")
        assert main(["label", "--mt", str(tmp_path / "a"), "--pe", str(tmp_path / "a")]) == 0
        assert capsys.readouterr().out.splitlines() == ["0.000000", "0.000000"]

    def test_matches_oracle(self, tmp_path):
        mt = ["the cat sat", "c a b", "Hello , world", "x y z w v u t s r q"]
        pe = ["the cat sat down", "a b c", "hello world", "a b c d e"]
        (tmp_path / "mt").write_text("\n".join(mt) + "\n")
        (tmp_path / "pe").write_text("\n".join(pe) + "\n")
        assert main(["label", "--mt", str(tmp_path / "mt"), "--pe", str(tmp_path / "pe"),
                     "--out", str(tmp_path / "h"), "--report", str(tmp_path / "r")]) == 0
        got = lines(tmp_path / "h")
        assert len(got) == 4
        assert got == [f"{compute_hter(normalize(m), normalize(p)):.6f}" for m, p in zip(mt, pe)]
        assert got == ["0.250000", "0.333333", "0.500000", "1.000000"]
        assert lines(tmp_path / "r")[0] == "Sentence ID: 0"

    def test_mismatch_exit_2(self, tmp_path, capsys):
        (tmp_path / "a").write_text("x\ny\n")
        (tmp_path / "b").write_text("x\n")
        assert main(["label", "--mt", str(tmp_path / "a"), "--pe", str(tmp_path / "b")]) == 2
        assert "line counts differ" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["label", "--mt", str(tmp_path / "nope"), "--pe", str(tmp_path / "nope")]) == 2

    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as info:
            main(["label", "--mt", "x"])
        assert info.value.code == 2


def test_build_inputs(run_dir):
    assert main(["build-inputs", "--data", "train.tsv", "--setting", "MT_MT", "--epoch", "0",
                 "--out", "a.tsv"]) == 0
    rows = lines(run_dir / "a.tsv")
    assert len(rows) == 46 and all(r.split("\t")[2] != "" for r in rows[1:])
    assert main(["build-inputs", "--data", "train.tsv", "--setting", "MT_MT", "--epoch", "0",
                 "--out", "b.tsv"]) == 0
    assert (run_dir / "a.tsv").read_bytes() == (run_dir / "b.tsv").read_bytes()


class TestTrain:
    def test_one_setting(self, run_dir):
        assert main(["train", "--config", "run.cfg", "--set", "settings=MT", "--output", "mt"]) == 0
        assert sorted(p.name for p in (run_dir / "mt").iterdir()) == ["MT.ckpt", "loss_MT.tsv", "manifest.cfg"]

    def test_all_settings_and_determinism(self, run_dir):
        assert main(["train", "--config", "run.cfg", "--output", "a"]) == 0
        assert main(["train", "--config", "a/manifest.cfg", "--output", "b"]) == 0
        for name in ("SRC_MT.ckpt", "MT.ckpt", "MT_MT.ckpt", "loss_SRC_MT.tsv"):
            assert (run_dir / "a" / name).read_bytes() == (run_dir / "b" / name).read_bytes()

    def test_seed_changes_result(self, run_dir):
        assert main(["train", "--config", "run.cfg", "--set", "settings=MT", "--output", "a", "--seed", "1"]) == 0
        assert main(["train", "--config", "run.cfg", "--set", "settings=MT", "--output", "b", "--seed", "2"]) == 0
        assert (run_dir / "a/loss_MT.tsv").read_bytes() != (run_dir / "b/loss_MT.tsv").read_bytes()

    def test_unlabeled_exit_2(self, run_dir):
        (run_dir / "u.tsv").write_text("src\tmt\nx\ty\n")
        assert main(["train", "--config", "run.cfg", "--set", "train=u.tsv"]) == 2

    def test_manifest_echoes_config(self, run_dir):
        main(["train", "--config", "run.cfg", "--set", "settings=MT", "--output", "m"])
        text = (run_dir / "m/manifest.cfg").read_text()
        assert f"train = {run_dir / 'train.tsv'}" in text
        assert "batch_size = 32" in text and "meta.command = train" in text


class TestEnsembleFlow:
    def test_ensemble_predict_evaluate_plot(self, run_dir, capsys):
        assert main(["ensemble", "--config", "run.cfg"]) == 0
        out = run_dir / "out"
        assert {p.name for p in out.iterdir()} >= {"ensemble.json", "components", "oof_features.tsv",
                                                  "manifest.cfg", "predictions.tsv"}
        assert "meta.fold_seed = 42" in (out / "manifest.cfg").read_text()
        assert lines(out / "oof_features.tsv")[0] == "record_id\tfold\tpred_srcmt\tpred_mt\tpred_mtmt\tgold"
        assert main(["predict", "--ensemble", "out", "--data", "test.tsv", "--out", "p.tsv"]) == 0
        assert (run_dir / "p.tsv").read_bytes() == (out / "predictions.tsv").read_bytes()
        header = lines(run_dir / "p.tsv")[0]
        assert header == "record_id\tpred_srcmt\tpred_mt\tpred_mtmt\tpred_ensemble"
        capsys.readouterr()
        assert main(["evaluate", "--predictions", "p.tsv", "--gold", "test.tsv", "--column", "pred_mt",
                     "--out", "rep.txt", "--tsv", "rep.tsv"]) == 0
        printed = capsys.readouterr().out
        assert printed == (run_dir / "rep.txt").read_text() and "higher is better" in printed
        assert lines(run_dir / "rep.tsv")[0].startswith("label\tpearson")
        assert main(["plot-data", "--predictions", "p.tsv", "--gold", "test.tsv", "--out", "fig.csv"]) == 0
        rows = list(csv.reader(open(run_dir / "fig.csv")))
        assert rows[0] == ["index", "gold", "predicted"] and len(rows) == 16

    @pytest.mark.parametrize("kind", ["adaboost", "average"])
    def test_other_kinds(self, run_dir, kind):
        assert main(["ensemble", "--config", "run.cfg", "--set", f"ensemble={kind}", "--output", kind]) == 0

    def test_missing_artifact_exit_2(self, run_dir):
        assert main(["predict", "--ensemble", "nowhere", "--data", "test.tsv", "--out", "p.tsv"]) == 2


class TestPlotData:
    def write(self, d, ids, preds, gold):
        rows = ["record_id\tpred_ensemble"] + [f"{i}\t{p}" for i, p in zip(ids, preds)]
        (d / "p.tsv").write_text("\n".join(rows) + "\n")
        (d / "g.txt").write_text("\n".join(map(str, gold)) + "\n")

    def test_identical_columns_sorted(self, tmp_path):
        gold = [round(random.Random(i).random(), 6) for i in range(1000)]
        ids = list(range(1000))
        random.Random(0).shuffle(ids)
        self.write(tmp_path, ids, [gold[i] for i in ids], gold)
        assert main(["plot-data", "--predictions", str(tmp_path / "p.tsv"), "--gold", str(tmp_path / "g.txt"),
                     "--out", str(tmp_path / "o.csv")]) == 0
        rows = list(csv.reader(open(tmp_path / "o.csv")))[1:]
        assert len(rows) == 1000
        assert [int(r[0]) for r in rows] == list(range(1000))
        assert all(r[1] == r[2] for r in rows)

    def test_coverage_mismatch_exit_2(self, tmp_path):
        self.write(tmp_path, [0, 1], [0.1, 0.2], [0.1, 0.2, 0.3])
        assert main(["plot-data", "--predictions", str(tmp_path / "p.tsv"), "--gold", str(tmp_path / "g.txt"),
                     "--out", str(tmp_path / "o.csv")]) == 2


def test_zero_shot_command(zero_shot_config, block_network):
    root = zero_shot_config.parent
    assert main(["zero-shot", "--config", str(zero_shot_config)]) == 0
    out = root / "zs_out"
    merged = load_tsv(out / "merged.tsv")
    assert len(merged) == 300
    assert (out / "ensemble" / "ensemble.json").exists() and (out / "manifest.cfg").exists()
    assert "meta.merged_pair = et+ro+si-en" in (out / "manifest.cfg").read_text()
