"""End-to-end CLI tests on miniature configurations."""

import json

import pytest

from metasyl.cli import main
from metasyl.langspace import load_dataset
from metasyl.seq2seq import load_checkpoint


@pytest.fixture
def tiny_cfg(tmp_path):
    cfg = {
        "seed": 7,
        "out": str(tmp_path / "run"),
        "model": {"embed_dim": 4, "hidden_dim": 8, "max_decode_len": 12},
        "meta": {"n_languages": 4, "n_holdout": 2, "eval_every": 2,
                 "patience": 10, "n_train": 6, "n_test": 3, "max_len": 2,
                 "eval_k": 6},
        "ease": {"n_languages": 1, "cap": 200, "n_test": 5, "max_len": 2,
                 "plateau_window": 3, "epoch_cap": 4, "check_every": 2},
        "pos": {"n_languages": 1, "k": 6, "n_train": 6, "n_test": 4,
                "max_len": 2},
        "eval": {"n_languages": 2, "k": 6, "n_train": 6, "n_test": 3,
                 "max_len": 2},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestGen:
    def test_emits_datasets_with_metadata(self, tmp_path):
        out = tmp_path / "data"
        assert main(["gen", "--seed", "1", "--n", "3", "--out", str(out)]) == 0
        stems = sorted(p.name for p in out.iterdir())
        assert stems == [
            "lang-000.meta.json", "lang-000.test.jsonl", "lang-000.train.jsonl",
            "lang-001.meta.json", "lang-001.test.jsonl", "lang-001.train.jsonl",
            "lang-002.meta.json", "lang-002.test.jsonl", "lang-002.train.jsonl",
        ]
        ds = load_dataset(out / "lang-000")
        assert len(ds.train) == 100 and len(ds.test) == 100

    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            assert main(["gen", "--seed", "5", "--n", "2",
                         "--out", str(tmp_path / name)]) == 0
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_conditions(self, tmp_path):
        assert main(["gen", "--seed", "2", "--n", "1", "--condition",
                     "length-holdout", "--holdout-length", "3",
                     "--n-train", "10", "--n-test", "5",
                     "--out", str(tmp_path / "lh")]) == 0
        ds = load_dataset(tmp_path / "lh" / "lang-000")
        assert all(len(x) <= 2 for x, _ in ds.train)
        assert all(len(x) == 3 for x, _ in ds.test)
        assert main(["gen", "--seed", "3", "--n", "1", "--condition",
                     "universal", "--n-train", "10", "--n-test", "5",
                     "--out", str(tmp_path / "u")]) == 0


class TestMetaTrain:
    def test_produces_checkpoint_and_log(self, tiny_cfg, tmp_path):
        assert main(["meta-train", "--config", str(tiny_cfg), "--quiet"]) == 0
        run = tmp_path / "run"
        params, config, extra = load_checkpoint(run / "checkpoint.npz")
        assert config.hidden_dim == 8
        assert extra["seed"] == 7
        log = (run / "train_log.csv").read_text().splitlines()
        assert log[0] == "languages_seen,holdout_accuracy"
        assert len(log) == 3  # evals at 2 and 4 languages
        assert (run / "config.json").exists()
        assert (run / "final.npz").exists()

    def test_deterministic_outputs(self, tiny_cfg, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(["meta-train", "--config", str(tiny_cfg), "--quiet",
                         "--out", str(out)]) == 0
            outs.append(out)
        for fname in ("checkpoint.npz", "final.npz", "train_log.csv"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


class TestEvalAnalyzeReport:
    def test_pipeline(self, tiny_cfg, tmp_path):
        assert main(["meta-train", "--config", str(tiny_cfg), "--quiet"]) == 0
        ckpt = tmp_path / "run" / "checkpoint.npz"

        ev = tmp_path / "ev"
        assert main(["eval", "--config", str(tiny_cfg), "--checkpoint",
                     str(ckpt), "--out", str(ev)]) == 0
        results = (ev / "results-eval-100shot.csv").read_text().splitlines()
        assert results[0].startswith("analysis,init,condition")
        assert len(results) == 1 + 2 * 2  # header + inits x languages

        assert main(["analyze", "pos-universals", "--config", str(tiny_cfg),
                     "--checkpoint", str(ckpt), "--out", str(ev)]) == 0
        assert (ev / "results-pos-universals.csv").exists()

        assert main(["analyze", "ease", "--analysis", "ranking", "--config",
                     str(tiny_cfg), "--checkpoint", str(ckpt),
                     "--out", str(ev)]) == 0
        assert (ev / "results-ease.csv").exists()

        assert main(["report", "--out", str(ev)]) == 0
        assert (ev / "summary.csv").exists()
        assert (ev / "ratios.csv").exists()
        assert (ev / "fig-eval-100shot.svg").exists()
        assert (ev / "fig-ranking-consistency.svg").exists()

    def test_eval_without_checkpoint_runs_random_only(self, tiny_cfg, tmp_path):
        ev = tmp_path / "rand"
        assert main(["eval", "--config", str(tiny_cfg), "--out", str(ev)]) == 0
        body = (ev / "results-eval-100shot.csv").read_text()
        assert ",random," in body and ",meta," not in body


class TestErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["bogus"]) != 0
        assert "usage" in capsys.readouterr().err

    def test_no_subcommand(self, capsys):
        assert main([]) != 0

    def test_report_with_no_results(self, tmp_path, capsys):
        assert main(["report", "--out", str(tmp_path / "empty")]) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_config_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"mode": "interpretive-dance"}))
        assert main(["meta-train", "--config", str(bad)]) == 1
        assert "unknown mode" in capsys.readouterr().err

    def test_missing_checkpoint(self, tiny_cfg, tmp_path, capsys):
        assert main(["eval", "--config", str(tiny_cfg), "--checkpoint",
                     str(tmp_path / "nope.npz"), "--out",
                     str(tmp_path / "x")]) == 1
        assert "error" in capsys.readouterr().err
