"""
Byte-level corpus handling for the toy language-model runs.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Union
import logging

import numpy as np

from .base import DataError

logger = logging.getLogger(__name__)

TOKENS_PER_PARAM = 20


@dataclass
class ByteCorpus:
    """Raw bytes split into a training prefix and a held-out suffix."""

    train: np.ndarray
    val: np.ndarray
    source: str = "<memory>"

    @classmethod
    def from_bytes(
        cls, raw: bytes, holdout_fraction: float = 0.05, source: str = "<memory>"
    ) -> "ByteCorpus":
        if not raw:
            raise DataError(f"corpus {source} is empty")
        if not 0.0 < holdout_fraction < 1.0:
            raise DataError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
        data = np.frombuffer(raw, dtype=np.uint8)
        cut = len(data) - max(1, int(len(data) * holdout_fraction))
        return cls(train=data[:cut], val=data[cut:], source=source)

    @classmethod
    def from_path(
        cls, path: Union[str, Path], holdout_fraction: float = 0.05
    ) -> "ByteCorpus":
        """
        Load any file as bytes; the final ``holdout_fraction`` is held out.

        Raises:
            DataError: The file is missing, unreadable or empty
        """
        path = Path(path)
        if not path.is_file():
            raise DataError(f"corpus_path '{path}' does not exist")
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise DataError(f"corpus_path '{path}' could not be read: {exc}") from exc
        corpus = cls.from_bytes(raw, holdout_fraction, source=str(path))
        logger.info(
            f"Loaded corpus {path}: {len(corpus.train)} train bytes, "
            f"{len(corpus.val)} held-out bytes"
        )
        return corpus

    def _split(self, split: str) -> np.ndarray:
        if split == "train":
            return self.train
        if split == "val":
            return self.val
        raise DataError(f"unknown split '{split}'")

    def sample_batch(
        self, split: str, batch_size: int, seq_len: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Random windows of ``seq_len + 1`` bytes, shape (batch_size, seq_len + 1)."""
        data = self._split(split)
        span = seq_len + 1
        if len(data) < span:
            raise DataError(
                f"{split} split of {self.source} has {len(data)} bytes, "
                f"fewer than one window of {span}"
            )
        starts = rng.integers(0, len(data) - span + 1, size=batch_size)
        return np.stack([data[s : s + span] for s in starts]).astype(np.int64)

    def eval_batches(
        self, n_batches: int, batch_size: int, seq_len: int, seed: int
    ) -> List[np.ndarray]:
        """A fixed set of held-out batches, identical for every run with ``seed``."""
        rng = np.random.default_rng([seed, 7])
        return [self.sample_batch("val", batch_size, seq_len, rng) for _ in range(n_batches)]


def tokens_for_budget(param_count: int, tokens_per_param: int = TOKENS_PER_PARAM) -> int:
    """Training tokens for a tokens-per-parameter budget."""
    return param_count * tokens_per_param
