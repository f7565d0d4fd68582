import json
import re

import numpy as np
import pytest

from achords import dataio
from achords.cli import RunConfig, build_parser, main, resolve_config


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def synth_dir(tmp_path, capsys):
    out = tmp_path / "data"
    code, _, _ = run(capsys, "synth", "--out", out, "--classes", 2, "--sets-per-class", 8, "--ambient-dim", 12,
                     "--dim", 3, "--set-size", 15, "--noise", 0.05, "--seed", 1)
    assert code == 0
    return out


def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


class TestSynth:
    def test_deterministic(self, tmp_path, capsys):
        for name in ("a", "b"):
            assert run(capsys, "synth", "--out", tmp_path / name, "--seed", 9, "--sets-per-class", 3)[0] == 0
        assert _files(tmp_path / "a") == _files(tmp_path / "b")

    def test_layout(self, synth_dir):
        man = dataio.load_manifest(synth_dir / "manifest.csv")
        assert len(man.entries) == 16 and set(man.labels) == {"class0", "class1"}
        assert dataio.load_set_matrix(man.resolve(man.entries[0][0])).shape == (12, 15)

    def test_csv_format(self, tmp_path, capsys):
        assert run(capsys, "synth", "--out", tmp_path / "c", "--format", "csv", "--sets-per-class", 2)[0] == 0
        assert (tmp_path / "c" / "set_00000.csv").exists()

    def test_invalid(self, tmp_path, capsys):
        code, _, err = run(capsys, "synth", "--out", tmp_path / "x", "--classes", 1)
        assert code == 40 and err.startswith("error=ConfigError code=40")
        code, _, _ = run(capsys, "synth", "--out", tmp_path / "x", "--dim", 40, "--ambient-dim", 30)
        assert code == 40


class TestTrain:
    def test_log_rows(self, synth_dir, tmp_path, capsys):
        model = tmp_path / "m.json"
        code, _, _ = run(capsys, "train", "--manifest", synth_dir / "manifest.csv", "--model", model,
                         "--dim", 3, "--epochs", 20)
        assert code == 0
        rows = (tmp_path / "m.json.log").read_text().splitlines()
        assert len(rows) == 20
        assert re.fullmatch(r"epoch=1 mean_cost=\S+ train_accuracy=\S+", rows[0])

    def test_missing_manifest(self, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--manifest", tmp_path / "none.csv", "--model", tmp_path / "m.json")
        assert code == 30 and "ParseError" in err

    def test_missing_required_flag(self, capsys):
        code, _, err = run(capsys, "train", "--model", "m.json")
        assert code == 40

    def test_identical_model_files(self, synth_dir, tmp_path, capsys):
        for name in ("a.json", "b.json"):
            run(capsys, "train", "--manifest", synth_dir / "manifest.csv", "--model", tmp_path / name,
                "--dim", 3, "--epochs", 5, "--seed", 3)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestEval:
    def test_separable(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "s.json"
        code, stdout, _ = run(capsys, "eval", "--manifest", synth_dir / "manifest.csv", "--dim", 3,
                              "--repeats", 5, "--epochs", 10, "--out", out)
        assert code == 0
        summary = json.loads(out.read_text())
        assert summary["mean_accuracy"] == 1.0 and summary["std_accuracy"] == 0.0
        assert summary["mean_accuracy"] == pytest.approx(np.mean(summary["accuracies"]), abs=1e-12)
        assert "mean_accuracy=1.0 std_accuracy=0.0" in stdout
        assert [r["seed"] for r in summary["repeats"]] == [1, 2, 3, 4, 5]

    def test_single_repeat(self, synth_dir, capsys):
        code, stdout, _ = run(capsys, "eval", "--manifest", synth_dir / "manifest.csv", "--dim", 3,
                              "--repeats", 1, "--epochs", 3)
        assert code == 0 and "std_accuracy=0.0" in stdout

    def test_shuffled_labels_near_chance(self, tmp_path, capsys):
        data = tmp_path / "d"
        run(capsys, "synth", "--out", data, "--classes", 2, "--sets-per-class", 30, "--ambient-dim", 12,
            "--dim", 3, "--set-size", 10, "--noise", 0.1, "--seed", 2)
        man = dataio.load_manifest(data / "manifest.csv")
        labels = np.random.default_rng(0).permutation(man.labels)
        dataio.write_manifest(data / "shuffled.csv", [(p, y) for (p, _, _), y in zip(man.entries, labels)])
        out = tmp_path / "s.json"
        run(capsys, "eval", "--manifest", data / "shuffled.csv", "--dim", 3, "--repeats", 5, "--epochs", 10,
            "--out", out)
        assert abs(json.loads(out.read_text())["mean_accuracy"] - 0.5) <= 0.15

    def test_fixed_split(self, synth_dir, tmp_path, capsys):
        man = dataio.load_manifest(synth_dir / "manifest.csv")
        entries = [(p, y, "train" if i % 2 == 0 else "test") for i, (p, y, _) in enumerate(man.entries)]
        dataio.write_manifest(synth_dir / "fixed.csv", entries)
        out = tmp_path / "s.json"
        code, _, _ = run(capsys, "eval", "--manifest", synth_dir / "fixed.csv", "--dim", 3, "--epochs", 5,
                         "--out", out)
        summary = json.loads(out.read_text())
        assert code == 0 and len(summary["accuracies"]) == 1
        assert summary["repeats"][0]["n_test"] == 8


@pytest.fixture
def model_file(synth_dir, tmp_path, capsys):
    path = tmp_path / "model.json"
    run(capsys, "train", "--manifest", synth_dir / "manifest.csv", "--model", path, "--dim", 3, "--epochs", 5)
    return path


class TestPredict:
    def test_prototype_input(self, model_file, tmp_path, capsys):
        model = dataio.load_model(model_file)
        x = tmp_path / "proto.bin"
        dataio.write_set_matrix(x, model.prototypes[1].basis)
        code, out, _ = run(capsys, "predict", "--model", model_file, "--input", x)
        assert code == 0
        lines = dict(line.split("=", 1) for line in out.splitlines())
        dist = [float(v) for v in lines["distances"].split(",")]
        assert lines["label"] == model.prototypes[1].label
        assert dist[1] == pytest.approx(0.0, abs=1e-12)
        assert lines["label"] == model.labels[int(np.argmin(dist))]

    def test_dimension_mismatch(self, model_file, tmp_path, capsys):
        x = tmp_path / "bad.csv"
        dataio.write_set_matrix(x, np.random.default_rng(0).standard_normal((7, 5)))
        code, _, err = run(capsys, "predict", "--model", model_file, "--input", x)
        assert code == 11 and "DimensionMismatch" in err

    def test_self_consistency(self, model_file, synth_dir, capsys):
        man = dataio.load_manifest(synth_dir / "manifest.csv")
        model = dataio.load_model(model_file)
        for path, _, _ in man.entries[:5]:
            _, out, _ = run(capsys, "predict", "--model", model_file, "--input", man.resolve(path))
            lines = dict(line.split("=", 1) for line in out.splitlines())
            dist = [float(v) for v in lines["distances"].split(",")]
            assert lines["label"] == model.labels[int(np.argmin(dist))]


@pytest.fixture
def documents(tmp_path):
    rng = np.random.default_rng(5)
    topics = {"oil": [f"oil{i}" for i in range(15)], "earn": [f"earn{i}" for i in range(15)]}
    dim = 16
    centers = {t: np.linalg.qr(rng.standard_normal((dim, 3)))[0] for t in topics}
    vocab = {}
    for topic, words in topics.items():
        for w in words:
            vocab[w] = centers[topic] @ rng.standard_normal(3) + 0.05 * rng.standard_normal(dim)
    emb = tmp_path / "emb.txt"
    dataio.write_embeddings(emb, dataio.EmbeddingTable(dim, vocab))
    docs = tmp_path / "docs"
    docs.mkdir()
    entries = []
    for topic, words in topics.items():
        for j in range(6):
            text = "The " + " and ".join(rng.choice(words, size=12)) + " unknownword."
            (docs / f"{topic}{j}.txt").write_text(text)
            entries.append((f"{topic}{j}.txt", topic))
    dataio.write_manifest(docs / "manifest.csv", entries)
    return emb, docs


class TestExplain:
    def test_document_report(self, documents, tmp_path, capsys):
        emb, docs = documents
        model = tmp_path / "doc.json"
        assert run(capsys, "train", "--manifest", docs / "manifest.csv", "--model", model, "--dim", 3,
                   "--epochs", 5, "--embeddings", emb, "--phi", "sigmoid")[0] == 0
        out = tmp_path / "rep.json"
        code, stdout, err = run(capsys, "explain", "--model", model, "--input", docs / "oil0.txt", "--embeddings",
                                emb, "--top-k", 4, "--out", out, "--check")
        assert code == 0, err
        lines = stdout.splitlines()
        assert len(lines) == 4
        assert all(re.fullmatch(r"rank=\d+ index=\d+ name=oil\d+ score=[+-]\d\.\d{6}e[+-]\d+", l) for l in lines)
        report = json.loads(out.read_text())
        assert report["predicted_label"] == "oil"
        assert len(report["input_names"]) == 12 and "unknownword" not in report["input_names"]
        assert abs(sum(report["vector_scores"]) - report["margin_value"]) <= 1e-8
        assert "ok=0" not in err

    def test_top_k_zero_and_heatmaps(self, model_file, synth_dir, tmp_path, capsys):
        man = dataio.load_manifest(synth_dir / "manifest.csv")
        out = tmp_path / "r.json"
        code, stdout, _ = run(capsys, "explain", "--model", model_file, "--input", man.resolve(man.entries[0][0]),
                              "--top-k", 0, "--out", out, "--heatmaps", tmp_path / "hm")
        assert code == 0 and stdout == "" and out.exists()
        impacts = dataio.load_set_matrix(tmp_path / "hm" / "element_impacts_plus.bin")
        report = json.loads(out.read_text())
        assert np.array_equal(impacts, np.array(report["element_scores_plus"]["impacts"]))

    def test_document_without_embeddings(self, documents, model_file, capsys):
        _, docs = documents
        code, _, err = run(capsys, "explain", "--model", model_file, "--input", docs / "oil0.txt")
        assert code == 40


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("# comment\nepochs=7\nlr-proto=0.2\nphi=sigmoid\nmanifest=m.csv\n")
        args = build_parser().parse_args(["eval", "--config", str(cfg_file), "--epochs", "3"])
        cfg = resolve_config(args)
        assert cfg.epochs == 3 and cfg.lr_proto == 0.2 and cfg.phi == "sigmoid"
        assert cfg.lr_rel == 1e-5 and cfg.protos_per_class == 1

    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.lr_proto == 0.1 and cfg.lr_rel == 1e-5

    def test_bad_config(self, tmp_path, capsys):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("nonsense=1\n")
        code, _, err = run(capsys, "eval", "--config", cfg_file, "--manifest", "m.csv")
        assert code == 40
        cfg_file.write_text("epochs=many\n")
        assert run(capsys, "eval", "--config", cfg_file, "--manifest", "m.csv")[0] == 40
