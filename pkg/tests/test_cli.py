"""
End-to-end smoke tests of every CLI verb on a small synthetic corpus.
"""

import json

import pytest

from app.cli.common import MANIFEST_FILE
from app.main import main

SYNTH_CONFIG = """
[synthetic]
num_reviews = 40
validation_reviews = 12
test_reviews = 20
min_segments = 4
max_segments = 5
indicative_vocab_size = 5
background_vocab_size = 20
"""

TRAIN_CONFIG = """
num_classes = 2

[architecture]
embedding_dim = 8
kernel_widths = [1, 2]
feature_maps = 4
gru_hidden = 4
attention_dim = 4

[training]
max_epochs = 2
patience = 1
batch_size = 16
learning_rate = 1.0
dropout = 0.0
"""


def _outputs(directory):
    return json.loads((directory / MANIFEST_FILE).read_text())["outputs"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "synth.toml").write_text(SYNTH_CONFIG)
    (root / "train.toml").write_text(TRAIN_CONFIG)
    code = main(
        ["synth", "--config", str(root / "synth.toml"), "--seed", "3",
         "--run-dir", str(root / "data")]
    )
    assert code == 0
    return root


def _train(root, run_dir, model="mil-sigmoid", extra=()):
    data = root / "data"
    return main(
        [
            "train",
            "--config", str(root / "train.toml"),
            "--model", model,
            "--train", str(data / "train.jsonl"),
            "--validation", str(data / "validation.jsonl"),
            "--run-dir", str(run_dir),
            *extra,
        ]
    )


class TestSynthAndStats:
    def test_synth_writes_splits_and_manifest(self, workspace):
        data = workspace / "data"
        outputs = _outputs(data)
        assert set(outputs) == {
            "train.jsonl", "validation.jsonl", "test.jsonl", "stats.json"
        }
        assert len((data / "train.jsonl").read_text().splitlines()) == 40

    def test_synth_rerun_is_byte_identical(self, workspace):
        again = workspace / "data-again"
        code = main(
            ["synth", "--config", str(workspace / "synth.toml"), "--seed", "3",
             "--run-dir", str(again)]
        )
        assert code == 0
        assert _outputs(again) == _outputs(workspace / "data")

    def test_stats(self, workspace):
        out = workspace / "stats"
        code = main(
            ["stats", "--corpus", str(workspace / "data" / "train.jsonl"), "--classes", "2",
             "--run-dir", str(out)]
        )
        assert code == 0
        stats = json.loads((out / "stats.json").read_text())
        assert stats["num_reviews"] == 40
        assert set(stats["classes"]) == {"1", "2"}

    def test_infeasible_witness_rate(self, workspace):
        code = main(
            ["synth", "--config", str(workspace / "synth.toml"), "--wr", "0.05",
             "--run-dir", str(workspace / "bad")]
        )
        assert code == 2

    def test_invalid_witness_rate(self, workspace):
        code = main(["synth", "--wr", "1.5", "--run-dir", str(workspace / "bad")])
        assert code == 2


class TestTrainEvalHighlight:
    @pytest.fixture(scope="class")
    def trained(self, workspace):
        run_dir = workspace / "train"
        assert _train(workspace, run_dir) == 0
        return run_dir

    def test_train_outputs(self, trained):
        outputs = _outputs(trained)
        assert {"model/params.ckpt", "model/spec.json", "model/vocab.json"} <= set(outputs)
        assert len((trained / "train_log.jsonl").read_text().splitlines()) >= 1
        result = json.loads((trained / "result.json").read_text())
        assert result["model"] == "mil-sigmoid"

    def test_train_rerun_is_byte_identical(self, workspace, trained):
        again = workspace / "train-again"
        assert _train(workspace, again) == 0
        assert _outputs(again) == _outputs(trained)

    def test_epochs_flag_alone_shrinks_default_patience(self, workspace):
        config = workspace / "train-no-epochs.toml"
        config.write_text(TRAIN_CONFIG.replace("max_epochs = 2\npatience = 1\n", ""))
        run_dir = workspace / "train-epochs"
        code = _train(workspace, run_dir, extra=["--config", str(config), "--epochs", "2"])
        assert code == 0
        assert len((run_dir / "train_log.jsonl").read_text().splitlines()) <= 2

    def test_patience_must_stay_below_epochs(self, workspace):
        code = _train(
            workspace, workspace / "train-patience", extra=["--epochs", "2", "--patience", "2"]
        )
        assert code == 2

    def test_unknown_model(self, workspace):
        assert _train(workspace, workspace / "nope", model="bogus") == 2

    def test_binary_eval(self, workspace, trained):
        out = workspace / "eval"
        code = main(
            [
                "eval",
                "--model-dir", str(trained / "model"),
                "--test", str(workspace / "data" / "test.jsonl"),
                "--pr-curve",
                "--run-dir", str(out),
            ]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["mode"] == "binary"
        assert 0.0 <= report["review"]["f1"] <= 1.0
        assert report["segment"] is not None
        assert (out / "pr_review.csv").read_text().startswith("threshold,precision,recall")

    def test_keyword_baseline_eval(self, workspace):
        out = workspace / "eval-kwrd2"
        code = main(
            [
                "eval",
                "--baseline", "kwrd2",
                "--test", str(workspace / "data" / "test.jsonl"),
                "--run-dir", str(out),
            ]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["model"] == "kwrd2"
        assert report["cross_validation"] is None

    def test_keyword_rules_are_not_trained(self, workspace):
        assert _train(workspace, workspace / "train-kwrd", model="kwrd1") == 2

    def test_seg_lr_cross_validation_eval(self, workspace):
        run_dir = workspace / "train-seg-lr"
        assert _train(workspace, run_dir, model="seg-lr") == 0
        out = workspace / "eval-seg-lr"
        code = main(
            [
                "eval",
                "--model-dir", str(run_dir / "model"),
                "--test", str(workspace / "data" / "test.jsonl"),
                "--cv-folds", "3",
                "--run-dir", str(out),
            ]
        )
        assert code == 0
        folds = json.loads((out / "report.json").read_text())["cross_validation"]
        assert folds["folds"] == 3
        assert len(folds["fold_macro_f1"]) == 3

    def test_cross_validation_rejects_other_models(self, workspace, trained):
        code = main(
            [
                "eval",
                "--model-dir", str(trained / "model"),
                "--test", str(workspace / "data" / "test.jsonl"),
                "--cv-folds", "3",
                "--run-dir", str(workspace / "eval-cv-mil"),
            ]
        )
        assert code == 2

    def test_highlight_ansi(self, workspace, trained, capsys):
        out = workspace / "highlight"
        code = main(
            [
                "highlight",
                "--model-dir", str(trained / "model"),
                "--reviews", str(workspace / "data" / "test.jsonl"),
                "--format", "ansi",
                "--run-dir", str(out),
            ]
        )
        assert code == 0
        assert (out / "highlight.txt").exists()
        assert "predicted" in capsys.readouterr().out

    def test_highlight_rejects_review_level_models(self, workspace):
        run_dir = workspace / "train-cnn"
        assert _train(workspace, run_dir, model="rev-cnn") == 0
        code = main(
            [
                "highlight",
                "--model-dir", str(run_dir / "model"),
                "--reviews", str(workspace / "data" / "test.jsonl"),
                "--run-dir", str(workspace / "highlight-cnn"),
            ]
        )
        assert code == 2

    def test_missing_model_directory(self, workspace):
        code = main(
            [
                "eval",
                "--model-dir", str(workspace / "absent"),
                "--test", str(workspace / "data" / "test.jsonl"),
                "--run-dir", str(workspace / "eval-missing"),
            ]
        )
        assert code == 4


class TestGlobalOptions:
    def test_unknown_log_level(self, workspace):
        code = main(
            ["--log-level", "chatty", "stats", "--corpus", str(workspace / "data" / "train.jsonl"),
             "--classes", "2", "--run-dir", str(workspace / "stats-chatty")]
        )
        assert code == 2

    def test_missing_verb_is_a_usage_error(self):
        with pytest.raises(SystemExit) as excinfo:
            main([])
        assert excinfo.value.code == 2
