import json
import os

import numpy as np
import pytest

from vocabforge.cli import main


@pytest.fixture
def world(tmp_path):
    """A tiny source/target model pair on disk, ready for the CLI."""
    rng = np.random.default_rng(0)
    paths = {}

    def dump_json(name, obj):
        p = tmp_path / name
        p.write_text(json.dumps(obj), encoding="utf-8")
        return str(p)

    source_tokens = [f"s{i}" for i in range(8)]
    target_tokens = [f"s{i}" for i in range(6)] + ["n0", "n1"]
    paths["source_vocab"] = dump_json(
        "source_vocab.json", {t: i for i, t in enumerate(source_tokens)}
    )
    paths["target_vocab"] = dump_json(
        "target_vocab.json", {t: i for i, t in enumerate(target_tokens)}
    )
    merges = tmp_path / "merges.txt"
    merges.write_text("", encoding="utf-8")
    paths["merges"] = str(merges)

    from vocabforge import EmbeddingMatrix, save_matrix

    def dump_emb(name, rows, dim=4):
        p = str(tmp_path / name)
        save_matrix(
            EmbeddingMatrix(rng.normal(size=(rows, dim)).astype(np.float32)), p
        )
        return p

    paths["source_emb"] = dump_emb("source.emb1", 8)
    paths["helper_emb"] = dump_emb("helper.emb1", 8)
    paths["tmp"] = str(tmp_path)
    return paths


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestParams:
    def test_report_on_stdout(self, capsys):
        code, out, _ = run(
            capsys, "params", "--before", "128256", "--after", "32768",
            "--dim", "4096", "--base", "6980000000",
        )
        assert code == 0
        report = json.loads(out)
        assert report["schema_version"] == "1"
        assert report["params"]["delta"] == 782_237_696
        assert report["config"]["before"] == 128256

    def test_missing_flag_is_usage_error(self, capsys):
        code, _, err = run(capsys, "params", "--after", "10")
        assert code == 1
        assert "--before" in err

    def test_no_subcommand(self, capsys):
        assert run(capsys, )[0] == 1

    def test_validation_error(self, capsys):
        code, _, err = run(
            capsys, "params", "--before", "0", "--after", "1",
            "--dim", "1", "--base", "0",
        )
        assert code == 1
        assert "error" in err


class TestStats:
    def test_human_summary(self, capsys, world):
        code, out, _ = run(capsys, "stats", "--matrix", world["source_emb"])
        assert code == 0
        assert "8 x 4" in out

    def test_json_report(self, capsys, world):
        code, out, _ = run(
            capsys, "stats", "--matrix", world["source_emb"], "--json"
        )
        assert code == 0
        report = json.loads(out)
        assert report["rows"] == 8
        assert len(report["mean"]) == 4

    def test_missing_file_is_io_error(self, capsys, world):
        code, _, err = run(
            capsys, "stats", "--matrix", world["tmp"] + "/nope.emb1"
        )
        assert code == 2
        assert "i/o" in err


class TestIntersectAndFitMap:
    def test_pipeline(self, capsys, world):
        part_path = world["tmp"] + "/part.json"
        code, _, _ = run(
            capsys, "intersect",
            "--source-vocab", world["source_vocab"],
            "--target-vocab", world["target_vocab"],
            "--source-marker", "none", "--target-marker", "none",
            "--out", part_path,
        )
        assert code == 0
        part = json.loads(open(part_path).read())
        assert part["canonicalization_mode"] == "raw"
        assert len(part["shared"]) == 6
        assert len(part["novel"]) == 2

        map_path = world["tmp"] + "/map.bin"
        code, out, _ = run(
            capsys, "fit-map",
            "--helper-emb", world["helper_emb"],
            "--source-emb", world["source_emb"],
            "--partition", part_path,
            "--out", map_path, "--steps", "5",
        )
        assert code == 0
        assert os.path.exists(map_path)
        assert os.path.exists(map_path + ".json")
        report = json.loads(out)
        assert report["fit"]["pair_count"] == 6
        assert report["fit"]["oracle_mse"] is not None


class TestAdapt:
    def adapt_args(self, world, out, report, *extra):
        return [
            "adapt", "--method", "random",
            "--source-emb", world["source_emb"],
            "--source-vocab", world["source_vocab"],
            "--source-merges", world["merges"],
            "--target-vocab", world["target_vocab"],
            "--target-merges", world["merges"],
            "--source-marker", "none", "--target-marker", "none",
            "--out", out, "--report", report, *extra,
        ]

    def test_random_adaptation(self, capsys, world):
        out = world["tmp"] + "/adapted.emb1"
        report_path = world["tmp"] + "/report.json"
        code, _, _ = run(capsys, *self.adapt_args(world, out, report_path))
        assert code == 0
        from vocabforge import load_matrix
        assert load_matrix(out).rows == 8
        report = json.loads(open(report_path).read())
        assert report["adaptation"]["copied_count"] == 6
        assert report["adaptation"]["initialized_count"] == 2

    def test_artifacts_reproducible(self, capsys, world):
        runs = []
        for tag in ("a", "b"):
            out = world["tmp"] + f"/adapted_{tag}.emb1"
            report_path = world["tmp"] + f"/report_{tag}.json"
            assert run(capsys,
                       *self.adapt_args(world, out, report_path))[0] == 0
            report = json.loads(open(report_path).read())
            # paths and wall time legitimately differ between runs
            report.pop("config")
            report["adaptation"].pop("timing_seconds")
            runs.append((open(out, "rb").read(), report))
        assert runs[0] == runs[1]

    def test_sava_needs_helper(self, capsys, world):
        code, _, err = run(
            capsys, "adapt", "--method", "sava",
            "--source-emb", world["source_emb"],
            "--source-vocab", world["source_vocab"],
            "--source-merges", world["merges"],
            "--target-vocab", world["target_vocab"],
            "--target-merges", world["merges"],
            "--source-marker", "none", "--target-marker", "none",
            "--out", world["tmp"] + "/x.emb1",
            "--report", world["tmp"] + "/x.json",
        )
        assert code == 1
        assert "--helper-emb" in err

    def test_sava_end_to_end(self, capsys, world):
        out = world["tmp"] + "/sava.emb1"
        report_path = world["tmp"] + "/sava.json"
        args = self.adapt_args(world, out, report_path,
                               "--helper-emb", world["helper_emb"],
                               "--steps", "5")
        args[2] = "sava"  # replace the method value
        assert run(capsys, *args)[0] == 0
        from vocabforge import load_matrix
        assert load_matrix(out).rows == 8


class TestFertility:
    def test_report_and_histogram(self, capsys, world, tmp_path):
        vocab = tmp_path / "fvocab.json"
        vocab.write_text(json.dumps({"a": 0, "b": 1}), encoding="utf-8")
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("a b ab\nba\n", encoding="utf-8")
        hist = str(tmp_path / "hist.csv")
        code, out, _ = run(
            capsys, "fertility",
            "--vocab", str(vocab), "--merges", world["merges"],
            "--corpus", str(corpus), "--marker", "none",
            "--hist-out", hist,
        )
        assert code == 0
        report = json.loads(out)
        # 6 tokens over 4 words
        assert report["fertility"]["fertility"] == 1.5
        assert open(hist).readline().startswith("bin_left")

    def test_per_doc(self, capsys, world, tmp_path):
        vocab = tmp_path / "fvocab.json"
        vocab.write_text(json.dumps({"a": 0}), encoding="utf-8")
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("a aa\naaa\n", encoding="utf-8")
        code, out, _ = run(
            capsys, "fertility",
            "--vocab", str(vocab), "--merges", world["merges"],
            "--corpus", str(corpus), "--marker", "none", "--per-doc",
        )
        assert code == 0
        assert json.loads(out)["fertility"]["per_document"] == [1.5, 3.0]


class TestSimilarity:
    def test_self_similarity(self, capsys, world):
        code, out, _ = run(
            capsys, "similarity",
            "--emb-a", world["source_emb"], "--emb-b", world["source_emb"],
            "--vocab", world["source_vocab"], "--marker", "none",
            "--n-prefix", "0", "--n-nonprefix", "4",
        )
        assert code == 0
        report = json.loads(out)
        assert abs(report["similarity"]["score"] - 100.0) < 1e-4
        assert report["similarity"]["anchor_count"] == 4

    def test_sampled_subset(self, capsys, world):
        code, out, _ = run(
            capsys, "similarity",
            "--emb-a", world["source_emb"], "--emb-b", world["helper_emb"],
            "--vocab", world["source_vocab"], "--marker", "none",
            "--n-prefix", "0", "--n-nonprefix", "4", "--sample", "3",
        )
        assert code == 0
        assert -100.0 <= json.loads(out)["similarity"]["score"] <= 100.0


class TestConfigFile:
    def test_config_supplies_defaults(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "before": 128256, "after": 32768, "dim": 4096,
            "base": 6980000000,
        }), encoding="utf-8")
        code, out, _ = run(capsys, "params", "--config", str(cfg))
        assert code == 0
        assert json.loads(out)["params"]["delta"] == 782_237_696

    def test_explicit_flag_wins(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "before": 100, "after": 50, "dim": 10, "base": 0,
        }), encoding="utf-8")
        code, out, _ = run(
            capsys, "params", "--config", str(cfg), "--before", "200"
        )
        assert code == 0
        assert json.loads(out)["params"]["vocab_before"] == 200

    def test_unknown_key_rejected(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"wat": 1}), encoding="utf-8")
        code, _, err = run(capsys, "params", "--config", str(cfg),
                           "--before", "1", "--after", "1", "--dim", "1",
                           "--base", "0")
        assert code == 1
        assert "wat" in err
