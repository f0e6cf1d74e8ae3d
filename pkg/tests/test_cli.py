"""CLI behaviour: artifacts, determinism, exit codes, atomic writes."""
import numpy as np
import pytest

from relgraph.cli import atomic_write, main

from conftest import random_kg_lines


@pytest.fixture
def corpus(tmp_path):
    rng = np.random.default_rng(7)
    lines = random_kg_lines(rng, 10, 3, 60)
    train = tmp_path / "train.txt"
    valid = tmp_path / "valid.txt"
    test = tmp_path / "test.txt"
    train.write_text("\n".join(lines[:48]) + "\n")
    valid.write_text("\n".join(lines[48:54]) + "\n")
    test.write_text("\n".join(lines[54:]) + "\n")
    return train, valid, test


def run(*argv):
    return main(list(argv))


class TestBuildRdg:
    def test_writes_edge_and_tau_files(self, corpus, tmp_path, capsys):
        train, _, _ = corpus
        out = tmp_path / "rdg"
        assert run("build-rdg", "--train", str(train), "--out", str(out)) == 0
        assert (out / "rdg_edges.tsv").is_file()
        assert (out / "rdg_tau.tsv").is_file()
        assert "retained_edges=" in capsys.readouterr().out


class TestStats:
    def test_three_method_rows(self, corpus, tmp_path, capsys):
        train, _, _ = corpus
        out = tmp_path / "stats.csv"
        assert run("stats", "--train", str(train), "--out", str(out),
                   "--dataset", "toy") == 0
        body = out.read_text().strip().splitlines()
        assert body[0].startswith("dataset,method")
        methods = [row.split(",")[1] for row in body[1:]]
        assert methods == ["rdg", "ingram", "ultra"]
        assert all(row.startswith("toy,") for row in body[1:])

    def test_unknown_method_usage_error(self, corpus, capsys):
        train, _, _ = corpus
        assert run("stats", "--train", str(train), "--methods", "magic") == 1


class TestTrain:
    def _train(self, corpus, tmp_path, tag):
        train, valid, _ = corpus
        ckpt = tmp_path / f"{tag}.gorc"
        log = tmp_path / f"{tag}.csv"
        code = run("train", "--train", str(train), "--valid", str(valid),
                   "--set", "d=8", "--set", "heads=2", "--set", "max_epochs=2",
                   "--seed", "3", "--out", str(ckpt), "--log", str(log))
        return code, ckpt, log

    def test_artifacts_and_determinism(self, corpus, tmp_path, capsys):
        code_a, ckpt_a, log_a = self._train(corpus, tmp_path, "a")
        code_b, ckpt_b, log_b = self._train(corpus, tmp_path, "b")
        assert code_a == 0 and code_b == 0
        assert ckpt_a.read_bytes() == ckpt_b.read_bytes()
        assert log_a.read_text() == log_b.read_text()
        assert log_a.read_text().startswith("epoch,")
        out = capsys.readouterr().out
        assert "# resolved configuration" in out
        assert "best_val_mrr=" in out

    def test_missing_train_usage_error(self, tmp_path):
        assert run("train", "--out", str(tmp_path / "x.gorc")) == 1

    def test_bad_set_key(self, corpus, tmp_path):
        train, _, _ = corpus
        assert run("train", "--train", str(train), "--set", "bogus=1",
                   "--out", str(tmp_path / "x.gorc")) == 1

    def test_preset_and_config_mutually_exclusive(self, corpus, tmp_path):
        train, _, _ = corpus
        assert run("train", "--train", str(train), "--preset", "wn_v1",
                   "--config", "some.cfg", "--out", str(tmp_path / "x.gorc")) == 1


class TestEvalAndPredict:
    @pytest.fixture
    def checkpoint(self, corpus, tmp_path):
        train, valid, _ = corpus
        ckpt = tmp_path / "model.gorc"
        assert run("train", "--train", str(train), "--valid", str(valid),
                   "--set", "d=8", "--set", "heads=2", "--set", "max_epochs=2",
                   "--out", str(ckpt)) == 0
        return ckpt

    def test_eval_reports_metrics(self, corpus, tmp_path, checkpoint, capsys):
        train, _, test = corpus
        out = tmp_path / "report.csv"
        capsys.readouterr()
        assert run("eval", "--checkpoint", str(checkpoint), "--train",
                   str(train), "--test", str(test), "--out", str(out)) == 0
        assert "MRR" in capsys.readouterr().out
        assert "mrr," in out.read_text()

    def test_eval_zero_shot_different_vocabulary(self, tmp_path, checkpoint,
                                                 capsys):
        # fresh entity names unseen during training
        graph = tmp_path / "new_graph.txt"
        graph.write_text("x0\tr0\tx1\nx1\tr1\tx2\nx0\tr2\tx2\n")
        queries = tmp_path / "new_test.txt"
        queries.write_text("x0\tr2\tx2\n")
        capsys.readouterr()
        assert run("eval", "--checkpoint", str(checkpoint), "--train",
                   str(graph), "--test", str(queries)) == 0
        assert "MRR" in capsys.readouterr().out

    def test_predict_ranked_tsv(self, corpus, tmp_path, checkpoint, capsys):
        train, _, _ = corpus
        queries = tmp_path / "queries.txt"
        queries.write_text("e0\tr0\n")
        out = tmp_path / "predictions.tsv"
        capsys.readouterr()
        assert run("predict", "--checkpoint", str(checkpoint), "--context",
                   str(train), "--queries", str(queries), "--top-k", "3",
                   "--out", str(out)) == 0
        rows = [r.split("\t") for r in out.read_text().strip().splitlines()]
        assert 1 <= len(rows) <= 3
        assert all(r[0] == "e0" and r[1] == "r0" for r in rows)
        scores = [float(r[3]) for r in rows]
        assert scores == sorted(scores, reverse=True)

    def test_perturb_runs(self, corpus, checkpoint, capsys):
        train, _, test = corpus
        capsys.readouterr()
        assert run("perturb", "--checkpoint", str(checkpoint), "--train",
                   str(train), "--test", str(test), "--mode", "random",
                   "--k", "1") == 0
        assert "mode=random k=1" in capsys.readouterr().out


class TestExitCodes:
    def test_usage_error_is_1(self):
        assert run("train") == 1  # missing required --out

    def test_missing_file_is_2(self, tmp_path):
        assert run("build-rdg", "--train", str(tmp_path / "nope.txt"),
                   "--out", str(tmp_path)) == 2

    def test_malformed_triples_is_2(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("only two\tfields\n")
        assert run("build-rdg", "--train", str(bad), "--out", str(tmp_path)) == 2

    def test_corrupt_checkpoint_is_2(self, corpus, tmp_path):
        train, _, test = corpus
        fake = tmp_path / "model.gorc"
        fake.write_bytes(b"not a checkpoint")
        assert run("eval", "--checkpoint", str(fake), "--train", str(train),
                   "--test", str(test)) == 2


class TestPreprocessCommand:
    def test_canonicalize_artifacts(self, tmp_path, capsys):
        (tmp_path / "relations.txt").write_text("likes\n")
        (tmp_path / "train_int.txt").write_text("u1 i1 i2\nu2 i1\n")
        (tmp_path / "kg.txt").write_text("i1\tlikes\ti2\n")
        out = tmp_path / "canon"
        assert run("preprocess", "canonicalize",
                   "--relations", str(tmp_path / "relations.txt"),
                   "--train-interactions", str(tmp_path / "train_int.txt"),
                   "--kg", str(tmp_path / "kg.txt"), "--out", str(out)) == 0
        assert (out / "triples.tsv").is_file()
        assert "interacts_with\t1" in (out / "relations.tsv").read_text()
        assert '"skipped_lines": 0' in capsys.readouterr().out

    def test_prune_partition_artifacts(self, tmp_path, corpus):
        train, _, _ = corpus
        out = tmp_path / "pruned"
        assert run("preprocess", "prune-partition", "--kg", str(train),
                   "--rho", "0.5", "--out", str(out)) == 0
        for name in ("train.txt", "valid.txt", "test.txt", "metadata.jsonl"):
            assert (out / name).is_file()

    def test_validate_prints_classification(self, tmp_path, corpus, capsys):
        train, _, test = corpus
        assert run("preprocess", "validate", "--train", str(train),
                   "--test", str(test)) == 0
        out = capsys.readouterr().out
        assert "classification" in out


class TestAtomicWrite:
    def test_no_partial_file_on_failure(self, tmp_path):
        target = tmp_path / "out.bin"

        class Exploding:
            def __len__(self):
                return 4

        with pytest.raises(TypeError):
            atomic_write(target, Exploding())
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []

    def test_overwrites_in_place(self, tmp_path):
        target = tmp_path / "out.txt"
        atomic_write(target, "one")
        atomic_write(target, "two")
        assert target.read_text() == "two"
