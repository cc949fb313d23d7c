"""
A small pre-norm decoder-only Transformer with a pluggable FFN slot.

Blocks follow the Llama layout: RMSNorm, causal multi-head attention with
rotary positions, residual, RMSNorm, FFN, residual. Attention projections
carry no biases. The vocabulary is byte-level.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np

from . import checkpoint
from .activations import kind_from_name, parse_dictionary
from .base import ConfigError, DataError
from .ffn import FFNConfig, FFNLayer, GateKind, FFNVariant, init as init_ffn
from .tensor import (
    Tensor,
    cross_entropy,
    embedding,
    log_softmax_rows,
    rms_norm,
    rope,
    softmax,
)

logger = logging.getLogger(__name__)

MAX_SEQ_LEN = 512


@dataclass
class ModelConfig:
    """Shape of the toy language model."""

    d_model: int = 64
    n_head: int = 4
    n_layer: int = 2
    vocab_size: int = 256
    seq_len: int = 64
    ffn: Optional[FFNConfig] = None
    tie_embeddings: bool = True
    rope_base: float = 10000.0
    norm_eps: float = 1e-6
    init_std: float = 0.02

    def __post_init__(self) -> None:
        for key in ("d_model", "n_head", "n_layer", "vocab_size", "seq_len"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"must be positive, got {getattr(self, key)}", key=key)
        if self.d_model % self.n_head:
            raise ConfigError(
                f"d_model={self.d_model} is not divisible by n_head={self.n_head}",
                key="n_head",
            )
        if self.head_dim % 2:
            raise ConfigError(f"head dimension {self.head_dim} must be even for rotary pairing", key="n_head")
        if self.seq_len > MAX_SEQ_LEN:
            raise ConfigError(f"seq_len above {MAX_SEQ_LEN} is not supported", key="seq_len")
        if self.ffn is None:
            self.ffn = FFNConfig(self.d_model)
        if self.ffn.d_model != self.d_model:
            raise ConfigError(
                f"FFN d_model {self.ffn.d_model} differs from model d_model {self.d_model}",
                key="ffn",
            )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_head


@dataclass
class Block:
    """Parameters of one Transformer layer."""

    attn_norm: Tensor
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    ffn_norm: Tensor
    ffn: FFNLayer

    def named_parameters(self, prefix: str) -> List[Tuple[str, Tensor]]:
        params = [
            (f"{prefix}.attn_norm", self.attn_norm),
            (f"{prefix}.wq", self.wq),
            (f"{prefix}.wk", self.wk),
            (f"{prefix}.wv", self.wv),
            (f"{prefix}.wo", self.wo),
            (f"{prefix}.ffn_norm", self.ffn_norm),
        ]
        params.extend((f"{prefix}.ffn.{name}", t) for name, t in self.ffn.named_parameters())
        return params


def rope_tables(
    seq_len: int, head_dim: int, base: float = 10000.0, offset: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """cos/sin tables of shape (seq_len, head_dim) for positions offset..offset+seq_len-1."""
    inv_freq = base ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    positions = np.arange(offset, offset + seq_len, dtype=np.float64)
    angles = np.outer(positions, inv_freq)
    angles = np.concatenate([angles, angles], axis=-1)
    return np.cos(angles), np.sin(angles)


def causal_mask(seq_len: int) -> np.ndarray:
    return np.tril(np.ones((seq_len, seq_len), dtype=bool))


class TransformerModel:
    """Embedding, a stack of blocks, a final norm and an output head."""

    def __init__(
        self,
        config: ModelConfig,
        tok_emb: Tensor,
        blocks: List[Block],
        final_norm: Tensor,
        head: Optional[Tensor] = None,
    ):
        self.config = config
        self.tok_emb = tok_emb
        self.blocks = blocks
        self.final_norm = final_norm
        self.head = head
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        params = [("tok_emb", self.tok_emb)]
        for i, block in enumerate(self.blocks):
            params.extend(block.named_parameters(f"layers.{i}"))
        params.append(("final_norm", self.final_norm))
        if self.head is not None:
            params.append(("head", self.head))
        return params

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    @property
    def param_count(self) -> int:
        return sum(t.size for t in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, arrays: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(arrays)
        unexpected = set(arrays) - set(params)
        if missing or unexpected:
            raise ConfigError(
                f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}"
            )
        for name, tensor in params.items():
            if arrays[name].shape != tensor.shape:
                raise ConfigError(f"shape {arrays[name].shape} != {tensor.shape}", key=name)
            tensor.data = np.array(arrays[name], dtype=np.float64)

    def _attention(
        self, block: Block, h: Tensor, cos: np.ndarray, sin: np.ndarray, mask: np.ndarray
    ) -> Tensor:
        batch, seq, d = h.shape
        n_head, head_dim = self.config.n_head, self.config.head_dim

        def heads(t: Tensor) -> Tensor:
            return t.reshape(batch, seq, n_head, head_dim).transpose(0, 2, 1, 3)

        q = rope(heads(h @ block.wq), cos, sin)
        k = rope(heads(h @ block.wk), cos, sin)
        v = heads(h @ block.wv)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(head_dim))
        context = softmax(scores, mask=mask) @ v
        return context.transpose(0, 2, 1, 3).reshape(batch, seq, d) @ block.wo

    def logits(self, inputs: np.ndarray, position_offset: int = 0) -> Tensor:
        """Next-token logits of shape (batch, seq, vocab) for integer inputs."""
        inputs = self._check_tokens(inputs)
        batch, seq = inputs.shape
        if seq > self.config.seq_len:
            raise DataError(f"sequence length {seq} exceeds seq_len {self.config.seq_len}")
        cfg = self.config
        cos, sin = rope_tables(seq, cfg.head_dim, cfg.rope_base, position_offset)
        mask = causal_mask(seq)

        x = embedding(self.tok_emb, inputs)
        for block in self.blocks:
            x = x + self._attention(block, rms_norm(x, block.attn_norm, cfg.norm_eps), cos, sin, mask)
            h = rms_norm(x, block.ffn_norm, cfg.norm_eps).reshape(batch * seq, cfg.d_model)
            x = x + block.ffn.forward(h).reshape(batch, seq, cfg.d_model)
        x = rms_norm(x, self.final_norm, cfg.norm_eps)
        head = self.tok_emb.T if self.head is None else self.head
        return x @ head

    def _check_tokens(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens)
        if tokens.ndim != 2:
            raise DataError(f"tokens must be a (batch, seq) array, got shape {tokens.shape}")
        if not np.issubdtype(tokens.dtype, np.integer):
            raise DataError(f"tokens must be integers, got {tokens.dtype}")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.config.vocab_size):
            bad = int(tokens.max() if tokens.max() >= self.config.vocab_size else tokens.min())
            raise DataError(f"token id {bad} outside vocabulary of {self.config.vocab_size}")
        return tokens.astype(np.int64)


def build(config: ModelConfig, seed: int = 0) -> TransformerModel:
    """
    Initialise a model deterministically from ``seed``.

    Embedding and attention weights come from one stream, each layer's FFN
    from its own child stream, so swapping the FFN variant leaves the other
    weights unchanged.
    """
    children = np.random.SeedSequence(seed).spawn(config.n_layer + 1)
    rng = np.random.default_rng(children[0])
    d, std = config.d_model, config.init_std

    def param(shape: Tuple[int, ...], name: str) -> Tensor:
        return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True, name=name)

    def ones(name: str) -> Tensor:
        return Tensor(np.ones(d), requires_grad=True, name=name)

    tok_emb = param((config.vocab_size, d), "tok_emb")
    blocks = []
    for i in range(config.n_layer):
        blocks.append(
            Block(
                attn_norm=ones(f"layers.{i}.attn_norm"),
                wq=param((d, d), f"layers.{i}.wq"),
                wk=param((d, d), f"layers.{i}.wk"),
                wv=param((d, d), f"layers.{i}.wv"),
                wo=param((d, d), f"layers.{i}.wo"),
                ffn_norm=ones(f"layers.{i}.ffn_norm"),
                ffn=init_ffn(config.ffn, np.random.default_rng(children[i + 1])),
            )
        )
    head = None if config.tie_embeddings else param((d, config.vocab_size), "head")
    model = TransformerModel(config, tok_emb, blocks, ones("final_norm"), head)
    logger.info(
        f"Built model: {config.n_layer} layers, d_model={d}, "
        f"FFN {config.ffn.variant.value} (hidden {config.ffn.hidden}), "
        f"{model.param_count} parameters"
    )
    return model


def forward_loss(model: TransformerModel, tokens: np.ndarray) -> Tensor:
    """
    Mean next-token cross-entropy in nats.

    ``tokens`` has shape (batch, seq + 1); position t predicts token t + 1.
    """
    tokens = model._check_tokens(tokens)
    if tokens.shape[1] < 2:
        raise DataError("need at least two tokens per sequence")
    logits = model.logits(tokens[:, :-1])
    batch, seq, vocab = logits.shape
    return cross_entropy(logits.reshape(batch * seq, vocab), tokens[:, 1:].reshape(-1))


def sequence_losses(model: TransformerModel, tokens: np.ndarray) -> np.ndarray:
    """Per-sequence mean cross-entropy, without recording gradients."""
    tokens = model._check_tokens(tokens)
    logits = model.logits(tokens[:, :-1]).data
    logp = log_softmax_rows(logits)
    targets = tokens[:, 1:]
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    return -picked.mean(axis=1)


def generate_greedy(model: TransformerModel, prompt: Sequence[int], n_new: int) -> List[int]:
    tokens = [int(t) for t in prompt]
    if not tokens:
        raise DataError("greedy generation needs a non-empty prompt")
    for _ in range(n_new):
        window = np.array([tokens[-model.config.seq_len:]], dtype=np.int64)
        logits = model.logits(window).data
        tokens.append(int(np.argmax(logits[0, -1])))
    return tokens


def parameter_breakdown(model: TransformerModel) -> Dict[str, int]:
    counts = {"embedding": 0, "attention": 0, "norm": 0, "ffn": 0}
    for name, tensor in model.named_parameters():
        if name in ("tok_emb", "head"):
            counts["embedding"] += tensor.size
        elif ".ffn." in name:
            counts["ffn"] += tensor.size
        elif name.endswith("norm"):
            counts["norm"] += tensor.size
        else:
            counts["attention"] += tensor.size
    counts["total"] = sum(counts.values())
    return counts


def model_config_echo(config: ModelConfig) -> Dict[str, str]:
    """Flat key/value description of a ModelConfig, stored with checkpoints."""
    ffn = config.ffn
    return {
        "model.d_model": str(config.d_model),
        "model.n_head": str(config.n_head),
        "model.n_layer": str(config.n_layer),
        "model.vocab_size": str(config.vocab_size),
        "model.seq_len": str(config.seq_len),
        "model.tie_embeddings": str(config.tie_embeddings).lower(),
        "ffn.variant": ffn.variant.value,
        "ffn.gate": ffn.gate.value,
        "ffn.dictionary": ffn.dictionary.code,
        "ffn.hidden": str(ffn.hidden),
        "ffn.gate_bias": str(ffn.gate_bias).lower(),
        "ffn.baseline_activation": ffn.baseline_activation.name,
    }


def model_config_from_echo(echo: Dict[str, str]) -> ModelConfig:
    try:
        variant = FFNVariant(echo["ffn.variant"])
        ffn = FFNConfig(
            d_model=int(echo["model.d_model"]),
            variant=variant,
            dictionary=parse_dictionary(echo["ffn.dictionary"], variant.flavor),
            gate=GateKind(echo["ffn.gate"]),
            hidden=int(echo["ffn.hidden"]),
            gate_bias=echo["ffn.gate_bias"] == "true",
            baseline_activation=kind_from_name(echo["ffn.baseline_activation"]),
        )
        return ModelConfig(
            d_model=int(echo["model.d_model"]),
            n_head=int(echo["model.n_head"]),
            n_layer=int(echo["model.n_layer"]),
            vocab_size=int(echo["model.vocab_size"]),
            seq_len=int(echo["model.seq_len"]),
            ffn=ffn,
            tie_embeddings=echo["model.tie_embeddings"] == "true",
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"checkpoint config echo is incomplete: {exc}")


def save_model(model: TransformerModel, path: Union[str, Path]) -> Path:
    return checkpoint.save(path, model.state_dict(), model_config_echo(model.config))


def load_model(path: Union[str, Path]) -> TransformerModel:
    arrays, echo = checkpoint.load(path)
    model = build(model_config_from_echo(echo))
    model.load_state_dict(arrays)
    return model
