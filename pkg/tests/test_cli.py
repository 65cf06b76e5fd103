"""End-to-end command-line flows, run in process via main(argv)."""

import hashlib
import os

import numpy as np
import pytest

from oblivinfer.cli import main


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture(scope="module")
def trained(tmp_path_factory, small_corpus):
    """A small model trained through the CLI, shared by the module."""
    d = tmp_path_factory.mktemp("cli")
    model = str(d / "m.json")
    rc = main(["train", "--model", "mlp", "--dataset", small_corpus,
               "--epochs", "5", "--out", model])
    assert rc == 0
    return model


@pytest.fixture(scope="module")
def leaky_traces(tmp_path_factory, trained, small_corpus):
    d = str(tmp_path_factory.mktemp("traces"))
    rc = main(["trace", "--model", trained, "--dataset", small_corpus,
               "--mode", "leaky", "--granularity", "page",
               "--count", "200", "--out", d])
    assert rc == 0
    return d


class TestTrain:
    def test_outputs_exist(self, trained):
        stem = os.path.splitext(trained)[0]
        assert os.path.exists(trained)
        assert os.path.exists(stem + ".bin")
        assert os.path.exists(stem + "-train.csv")

    def test_history_has_config_header(self, trained):
        log = os.path.splitext(trained)[0] + "-train.csv"
        first = open(log).readline()
        assert first.startswith("#")
        assert "seed=" in first and "cmd=train" in first

    def test_same_seed_same_weights(self, tmp_path, small_corpus):
        outs = []
        for name in ("a", "b"):
            p = str(tmp_path / f"{name}.json")
            assert main(["train", "--model", "mlp", "--dataset", small_corpus,
                         "--epochs", "1", "--out", p]) == 0
            outs.append(os.path.splitext(p)[0] + ".bin")
        assert sha(outs[0]) == sha(outs[1])

    def test_missing_dataset_is_usage_error(self, tmp_path):
        rc = main(["train", "--model", "mlp",
                   "--dataset", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "m.json")])
        assert rc == 2

    def test_unknown_arch_rejected(self, tmp_path, small_corpus):
        rc = main(["train", "--model", "resnet", "--dataset", small_corpus,
                   "--out", str(tmp_path / "m.json")])
        assert rc == 2


class TestTrace:
    def test_file_count_and_index(self, leaky_traces):
        files = sorted(os.listdir(leaky_traces))
        otrc = [f for f in files if f.endswith(".otrc")]
        assert len(otrc) == 200
        assert otrc[0] == "0000.otrc"
        assert "index.csv" in files
        lines = open(os.path.join(leaky_traces, "index.csv")).read().splitlines()
        assert lines[0].startswith("#") and "granularity=page" in lines[0]
        assert lines[1] == "file,label"
        assert len(lines) == 202

    def test_oblivious_traces_identical(self, tmp_path, trained, small_corpus):
        d = str(tmp_path / "obl")
        rc = main(["trace", "--model", trained, "--dataset", small_corpus,
                   "--mode", "oblivious", "--granularity", "page",
                   "--count", "8", "--out", d])
        assert rc == 0
        hashes = {sha(os.path.join(d, f)) for f in os.listdir(d)
                  if f.endswith(".otrc")}
        assert len(hashes) == 1

    def test_bad_granularity_is_argparse_error(self, trained):
        with pytest.raises(SystemExit) as e:
            main(["trace", "--model", trained, "--granularity", "word"])
        assert e.value.code == 2

    def test_count_exceeding_testset(self, trained, small_corpus, tmp_path):
        rc = main(["trace", "--model", trained, "--dataset", small_corpus,
                   "--count", "100000", "--out", str(tmp_path / "t")])
        assert rc == 2


class TestAttack:
    def test_curve_emitted(self, leaky_traces, trained, tmp_path):
        out = str(tmp_path / "curve.csv")
        rc = main(["attack", leaky_traces, "--model", trained,
                   "--sizes", "100,200", "--folds", "3", "--out", out,
                   "--plot"])
        assert rc == 0
        lines = open(out).read().splitlines()
        assert lines[0].startswith("#") and "selector=last" in lines[0]
        assert lines[1] == "size,accuracy"
        rows = [l.split(",") for l in lines[2:]]
        assert [r[0] for r in rows] == ["100", "200"]
        accs = [float(r[1]) for r in rows]
        assert all(0.0 <= a <= 1.0 for a in accs)
        assert accs[1] > 0.5, "trace features of a trained model beat chance"
        svg = str(tmp_path / "curve.svg")
        assert os.path.exists(svg)
        assert "<svg" in open(svg).read()

    def test_impossible_folds_fail_cleanly(self, leaky_traces, trained, tmp_path):
        rc = main(["attack", leaky_traces, "--model", trained,
                   "--sizes", "100", "--folds", "101",
                   "--out", str(tmp_path / "c.csv")])
        assert rc == 1

    def test_missing_trace_dir(self, trained, tmp_path):
        rc = main(["attack", str(tmp_path / "nothing"), "--model", trained,
                   "--out", str(tmp_path / "c.csv")])
        assert rc == 2


class TestVerify:
    def test_clean_model_passes(self, trained, capsys):
        rc = main(["verify", "--model", trained, "--count", "6"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "PASS" in out
        assert "L1.then" in out  # known divergence site of the leaky relu

    def test_injected_leak_detected(self, trained, capsys):
        rc = main(["verify", "--model", trained, "--count", "6",
                   "--inject-leak", "relu"])
        out = capsys.readouterr().out
        assert rc == 1
        assert "DIVERGENCE" in out

    def test_count_one_rejected(self, trained):
        assert main(["verify", "--model", trained, "--count", "1"]) == 2

    def test_unknown_inject_kernel(self, trained):
        with pytest.raises(SystemExit) as e:
            main(["verify", "--model", trained, "--inject-leak", "dense"])
        assert e.value.code == 2


class TestBench:
    def test_table_and_csv(self, trained, tmp_path, capsys):
        out = str(tmp_path / "bench.csv")
        rc = main(["bench", "--model", trained, "--iterations", "5",
                   "--out", out])
        assert rc == 0
        text = capsys.readouterr().out
        assert "obl/leaky" in text
        lines = open(out).read().splitlines()
        assert lines[0].startswith("#")
        assert lines[1] == "model,iterations,leaky_ms,oblivious_ms,traced_ms,ratio"
        cols = lines[2].split(",")
        assert cols[1] == "5"
        assert float(cols[5]) > 0


class TestManifest:
    def test_mlp_excludes_conv(self, trained, tmp_path, capsys):
        out = str(tmp_path / "man.csv")
        rc = main(["manifest", "--model", trained, "--out", out])
        assert rc == 0
        text = capsys.readouterr().out
        assert "reduction" in text
        lines = open(out).read().splitlines()
        body = [l for l in lines if not l.startswith("#")]
        assert body[0] == "model,kernel_id,required"
        rows = {l.split(",")[1]: l.split(",")[2] for l in body[1:]}
        assert rows["conv2d"] == "0"
        assert rows["maxpool2d"] == "0"
        assert rows["dense"] == "1"
        assert any(l.startswith("# reduction=") for l in lines)


def test_no_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2
