"""Shared fixtures for the moa_ffn test suite."""

from pathlib import Path

import numpy as np
import pytest

from moa_ffn.base import Flavor
from moa_ffn.ffn import FFNConfig, FFNVariant
from moa_ffn.transformer import ModelConfig
from moa_ffn.train import TrainConfig

CORPUS_TEXT = (
    "the quick brown fox jumps over the lazy dog. "
    "pack my box with five dozen liquor jugs. "
) * 40


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def corpus_file(tmp_path) -> Path:
    path = tmp_path / "corpus.txt"
    path.write_text(CORPUS_TEXT)
    return path


@pytest.fixture
def tiny_model_config():
    """One layer of width 16 over bytes; small enough for a few training steps."""
    return ModelConfig(
        d_model=16,
        n_head=2,
        n_layer=1,
        vocab_size=256,
        seq_len=8,
        ffn=FFNConfig(d_model=16, variant=FFNVariant.BASELINE_II),
    )


@pytest.fixture
def tiny_train_config(corpus_file):
    return TrainConfig(
        max_lr=3e-3,
        warmup_steps=2,
        total_steps=6,
        batch_size=2,
        seeds=[0],
        corpus_path=str(corpus_file),
        eval_interval=3,
        eval_batches=1,
    )


def ffn_config(variant: FFNVariant, d_model: int = 6, **kwargs) -> FFNConfig:
    """Small FFN config; dictionaries default to the flavor's own."""
    return FFNConfig(d_model=d_model, variant=variant, seed=kwargs.pop("seed", 0), **kwargs)


ALL_VARIANTS = list(FFNVariant)
TYPE_I_VARIANTS = [v for v in FFNVariant if v.flavor is Flavor.TYPE_I]
TYPE_II_VARIANTS = [v for v in FFNVariant if v.flavor is Flavor.TYPE_II]
