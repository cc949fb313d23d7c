"""Tests for single training runs and ablation grids."""

import json
from dataclasses import replace

import numpy as np
import pytest

from moa_ffn.base import ConfigError, DataError
from moa_ffn.data import ByteCorpus
from moa_ffn.ffn import FFNConfig, FFNVariant, GateKind
from moa_ffn.optim import Schedule
from moa_ffn.train import (
    ABLATION_COLUMNS,
    AblationCell,
    TrainConfig,
    expand_lr_grid,
    run_ablation,
    run_training,
)
from moa_ffn.transformer import ModelConfig, load_model

from conftest import CORPUS_TEXT


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert config.schedule is Schedule.COS
        assert config.eval_interval == 25

    def test_schedule_from_string(self):
        assert TrainConfig(schedule="WSD").schedule is Schedule.WSD

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"schedule": "linear"},
            {"total_steps": 0},
            {"warmup_steps": 500},
            {"max_lr": 0.0},
            {"beta2": 1.0},
            {"clip_norm": -1.0},
            {"seeds": []},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


class TestRunTraining:
    def test_streams_and_eval_points(self, tiny_model_config, tiny_train_config, tmp_path):
        metrics_path = tmp_path / "metrics.jsonl"
        metrics = run_training(tiny_model_config, tiny_train_config, metrics_path=metrics_path)
        assert len(metrics.train_records) == 6
        assert [r.step for r in metrics.eval_records] == [3, 6]
        assert np.isfinite(metrics.val_loss)

        records = [json.loads(line) for line in metrics_path.read_text().splitlines()]
        assert len(records) == 8
        assert records[0] == {"step": 0, "kind": "train", "loss": records[0]["loss"], "lr": 0.0}
        assert [r["step"] for r in records if r["kind"] == "eval"] == [3, 6]

    def test_reruns_are_identical(self, tiny_model_config, tiny_train_config, tmp_path):
        run_training(tiny_model_config, tiny_train_config, metrics_path=tmp_path / "a.jsonl")
        run_training(tiny_model_config, tiny_train_config, metrics_path=tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_loss_decreases(self, tiny_model_config, corpus_file):
        config = TrainConfig(
            max_lr=1e-2,
            warmup_steps=3,
            total_steps=40,
            batch_size=4,
            corpus_path=str(corpus_file),
            eval_batches=1,
        )
        metrics = run_training(tiny_model_config, config)
        assert metrics.final_train_loss < metrics.initial_loss - 0.5

    def test_checkpoint_written(self, tiny_model_config, tiny_train_config, tmp_path):
        path = tmp_path / "final.ckpt"
        run_training(tiny_model_config, tiny_train_config, checkpoint_path=path)
        assert load_model(path).config.d_model == 16

    def test_missing_corpus(self, tiny_model_config, tiny_train_config, tmp_path):
        config = replace(tiny_train_config, corpus_path=str(tmp_path / "absent.txt"))
        with pytest.raises(DataError):
            run_training(tiny_model_config, config)

    def test_in_memory_corpus(self, tiny_model_config, tiny_train_config):
        corpus = ByteCorpus.from_bytes(b"abcdefgh" * 100)
        metrics = run_training(tiny_model_config, tiny_train_config, seed=3, corpus=corpus)
        assert metrics.seed == 3


class TestAblationCell:
    def test_baseline_drops_dictionary(self):
        cell = AblationCell("base", FFNVariant.BASELINE_II, dictionary="gs")
        assert cell.dictionary == ""

    def test_bad_dictionary(self):
        with pytest.raises(ConfigError):
            AblationCell("moa", FFNVariant.MOA_I, dictionary="gi")

    def test_bad_name(self):
        with pytest.raises(ConfigError):
            AblationCell("two words", FFNVariant.LA_I)

    def test_ffn_config(self):
        cell = AblationCell("moa", "BiMoA", gate="Softmax", dictionary="gsr")
        config = cell.ffn_config(16)
        assert config.variant is FFNVariant.BI_MOA
        assert config.gate is GateKind.SOFTMAX
        assert config.n_activations == 3

    def test_expand_lr_grid(self):
        cells = expand_lr_grid([AblationCell("la", FFNVariant.LA_I)], [1e-3, 3e-3])
        assert [c.name for c in cells] == ["la@0.001", "la@0.003"]
        assert [c.max_lr for c in cells] == [1e-3, 3e-3]


class TestRunAblation:
    def test_table(self, tiny_model_config, tiny_train_config, tmp_path):
        cells = [
            AblationCell("base", FFNVariant.BASELINE_II),
            AblationCell("bila", FFNVariant.BI_LA, dictionary="gsr"),
        ]
        result = run_ablation(
            cells, tiny_model_config, tiny_train_config, "base", seeds=[0, 1], metrics_dir=tmp_path
        )
        table = result.table
        assert list(table.columns) == ABLATION_COLUMNS
        assert list(table["status"]) == ["ok", "ok"]
        assert table.loc[0, "rel_loss"] == 0.0
        assert table.loc[0, "seeds"] == "0;1"
        assert len(result.losses["bila"]) == 2
        assert (tmp_path / "bila-seed1.jsonl").is_file()
        assert len(result.tuned) == 2

    def test_baseline_must_exist(self, tiny_model_config, tiny_train_config):
        with pytest.raises(ConfigError):
            run_ablation([AblationCell("a", FFNVariant.LA_I)], tiny_model_config, tiny_train_config, "b")

    def test_names_unique(self, tiny_model_config, tiny_train_config):
        cells = [AblationCell("a", FFNVariant.LA_I), AblationCell("a", FFNVariant.MOA_I)]
        with pytest.raises(ConfigError):
            run_ablation(cells, tiny_model_config, tiny_train_config, "a")

    def test_failed_runs_are_marked(self, tiny_model_config, tiny_train_config, tmp_path):
        config = replace(tiny_train_config, corpus_path=str(tmp_path / "absent.txt"))
        result = run_ablation(
            [AblationCell("base", FFNVariant.BASELINE_II)], tiny_model_config, config, "base"
        )
        assert list(result.table["status"]) == ["failed"]
        assert result.errors
        assert result.tuned.empty

    def test_duplicated_baseline_has_zero_relative_loss(self, tiny_model_config, tiny_train_config):
        cells = [
            AblationCell("base", FFNVariant.BASELINE_II),
            AblationCell("twin", FFNVariant.BASELINE_II),
        ]
        result = run_ablation(cells, tiny_model_config, tiny_train_config, "base", seeds=[0, 1])
        assert list(result.table["rel_loss"]) == [0.0, 0.0]
        assert len(result.tuned) == 1

    def test_tuned_summary_keeps_width_and_activation_arms_apart(
        self, tiny_model_config, tiny_train_config
    ):
        cells = [
            AblationCell("base", FFNVariant.BASELINE_II),
            AblationCell("wide", FFNVariant.BASELINE_II, hidden=64),
            AblationCell("gelu", FFNVariant.BASELINE_II, baseline_activation="g"),
        ]
        result = run_ablation(cells, tiny_model_config, tiny_train_config, "base")
        tuned = result.tuned
        assert len(tuned) == 3
        assert list(tuned["hidden"]) == ["auto", "64", "auto"]
        assert list(tuned["baseline_activation"]) == ["auto", "auto", "g"]
        assert tuned.loc[0, "rel_loss"] == 0.0
        expected = result.table.set_index("name")["rel_loss"]
        assert tuned.loc[1, "rel_loss"] == expected["wide"]
        assert tuned.loc[2, "rel_loss"] == expected["gelu"]

    def test_arm_ignores_learning_rate(self):
        slow = AblationCell("a", FFNVariant.BASELINE_II, max_lr=1e-3)
        fast = AblationCell("b", FFNVariant.BASELINE_II, max_lr=6e-3)
        wide = AblationCell("c", FFNVariant.BASELINE_II, hidden=64)
        assert slow.arm == fast.arm
        assert slow.arm != wide.arm


def test_uniform_corpus_stays_at_log_vocab(tiny_model_config, tiny_train_config):
    raw = np.random.default_rng(7).integers(0, 256, size=20000, dtype=np.uint8).tobytes()
    config = replace(tiny_train_config, eval_batches=8)
    metrics = run_training(tiny_model_config, config, corpus=ByteCorpus.from_bytes(raw))
    assert abs(metrics.val_loss - np.log(256)) <= 0.05


@pytest.mark.slow
def test_toy_language_model_learns(corpus_file):
    model = ModelConfig(
        d_model=64,
        n_head=4,
        n_layer=2,
        vocab_size=256,
        seq_len=64,
        ffn=FFNConfig(d_model=64, variant=FFNVariant.BASELINE_II),
    )
    config = TrainConfig(
        max_lr=3e-3,
        warmup_steps=100,
        total_steps=2000,
        batch_size=16,
        corpus_path=str(corpus_file),
        eval_interval=500,
        eval_batches=2,
    )
    # 2000 steps x 16 sequences x 64 bytes is about 2M training tokens
    corpus = ByteCorpus.from_bytes(CORPUS_TEXT.encode() * 5)
    metrics = run_training(model, config, corpus=corpus)
    assert metrics.final_train_loss <= np.log(256) - 1.0
