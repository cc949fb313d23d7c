"""
Training harness: single runs on a byte corpus and multi-seed ablation grids.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import json
import logging
import math
import time

import numpy as np
import pandas as pd

from .activations import kind_from_name, parse_dictionary
from .base import ConfigError, NumericError
from .data import ByteCorpus, tokens_for_budget
from .ffn import FFNConfig, FFNVariant, GateKind
from .optim import AdamWState, Schedule, adamw_step, lr_at
from .parallel import run_jobs
from .tensor import backward, zero_grads
from .transformer import (
    ModelConfig,
    TransformerModel,
    build,
    forward_loss,
    save_model,
    sequence_losses,
)

logger = logging.getLogger(__name__)

DEFAULT_LR_GRID = (6e-4, 1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3)

AUTO = "auto"

# an arm is a cell without its learning rate
ARM_COLUMNS = ("variant", "gate", "dictionary", "baseline_activation", "hidden")

ABLATION_COLUMNS = [
    "name",
    "variant",
    "gate",
    "dictionary",
    "baseline_activation",
    "hidden",
    "max_lr",
    "seeds",
    "median_val_loss",
    "rel_loss",
    "log_rel_improvement",
    "status",
]


@dataclass
class TrainConfig:
    """Optimizer, schedule and data settings for one training run."""

    max_lr: float = 3e-3
    schedule: Schedule = Schedule.COS
    warmup_steps: int = 50
    total_steps: int = 500
    batch_size: int = 16
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.1
    clip_norm: Optional[float] = 1.0
    eps: float = 1e-8
    seeds: List[int] = field(default_factory=lambda: [0])
    corpus_path: str = "data/corpus.txt"
    eval_interval: Optional[int] = None
    eval_batches: int = 4
    holdout_fraction: float = 0.05

    def __post_init__(self) -> None:
        if isinstance(self.schedule, str):
            try:
                self.schedule = Schedule(self.schedule.lower())
            except ValueError:
                raise ConfigError(f"unknown schedule '{self.schedule}'", key="schedule")
        if self.total_steps <= 0:
            raise ConfigError("total_steps must be positive", key="total_steps")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ConfigError(
                f"warmup_steps={self.warmup_steps} must lie in [0, total_steps={self.total_steps})",
                key="warmup_steps",
            )
        if self.max_lr <= 0:
            raise ConfigError("max_lr must be positive", key="max_lr")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive", key="batch_size")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)", key="beta1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative", key="weight_decay")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive (or None to disable)", key="clip_norm")
        if not self.seeds:
            raise ConfigError("at least one seed is required", key="seeds")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative", key="seeds")
        if self.eval_interval is None:
            self.eval_interval = max(1, self.total_steps // 20)
        if self.eval_interval <= 0:
            raise ConfigError("eval_interval must be positive", key="eval_interval")
        if self.eval_batches <= 0:
            raise ConfigError("eval_batches must be positive", key="eval_batches")


@dataclass
class TrainRecord:
    step: int
    lr: float
    train_loss: float


@dataclass
class EvalRecord:
    step: int
    val_loss: float


@dataclass
class RunMetrics:
    """Loss streams and terminal figures of one run."""

    seed: int
    param_count: int
    train_records: List[TrainRecord] = field(default_factory=list)
    eval_records: List[EvalRecord] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def val_loss(self) -> float:
        return self.eval_records[-1].val_loss if self.eval_records else math.nan

    @property
    def initial_loss(self) -> float:
        return self.train_records[0].train_loss if self.train_records else math.nan

    @property
    def final_train_loss(self) -> float:
        return self.train_records[-1].train_loss if self.train_records else math.nan


class MetricsWriter:
    """Appends one JSON object per line; no timestamps, so reruns are byte-identical."""

    def __init__(self, path: Optional[Union[str, Path]]):
        self.path = Path(path) if path else None
        self._fh = None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")

    def write(self, step: int, kind: str, loss: float, lr: float) -> None:
        if self._fh:
            record = {"step": step, "kind": kind, "loss": loss, "lr": lr}
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


class Trainer:
    """Runs AdamW over random corpus windows and evaluates on fixed held-out batches."""

    def __init__(
        self,
        model: TransformerModel,
        config: TrainConfig,
        corpus: ByteCorpus,
        seed: int,
    ):
        self.model = model
        self.config = config
        self.corpus = corpus
        self.seed = seed
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")
        self.state = AdamWState()
        self.rng = np.random.default_rng([seed, 1])
        self.eval_sets = corpus.eval_batches(
            config.eval_batches, config.batch_size, model.config.seq_len, seed
        )

    def evaluate(self) -> float:
        losses = [float(sequence_losses(self.model, batch).mean()) for batch in self.eval_sets]
        return float(np.mean(losses))

    def _check_budget(self) -> None:
        tokens = self.config.total_steps * self.config.batch_size * self.model.config.seq_len
        wanted = tokens_for_budget(self.model.param_count)
        if tokens < wanted:
            self.logger.warning(
                f"Token budget trimmed: {tokens} tokens against {wanted} "
                f"at 20 tokens per parameter"
            )

    def run(self, metrics_path: Optional[Union[str, Path]] = None) -> RunMetrics:
        """
        Execute ``total_steps`` optimizer steps.

        Raises:
            NumericError: The training loss became NaN or Inf (names the step)
        """
        cfg = self.config
        params = self.model.named_parameters()
        tensors = [t for _, t in params]
        metrics = RunMetrics(seed=self.seed, param_count=self.model.param_count)
        writer = MetricsWriter(metrics_path)
        self._check_budget()
        started = time.perf_counter()
        try:
            for step in range(cfg.total_steps):
                lr = lr_at(cfg, step)
                batch = self.corpus.sample_batch(
                    "train", cfg.batch_size, self.model.config.seq_len, self.rng
                )
                loss = forward_loss(self.model, batch)
                value = loss.item()
                if not math.isfinite(value):
                    self.logger.error(f"Loss became {value} at step {step}; aborting")
                    raise NumericError(f"training loss is {value}", where=f"step {step}")
                zero_grads(tensors)
                backward(loss)
                grads = {name: t.grad for name, t in params if t.grad is not None}
                adamw_step(params, grads, self.state, lr, cfg)
                metrics.train_records.append(TrainRecord(step, lr, value))
                writer.write(step, "train", value, lr)

                done = step + 1
                if done % cfg.eval_interval == 0 or done == cfg.total_steps:
                    val = self.evaluate()
                    if not math.isfinite(val):
                        raise NumericError(f"validation loss is {val}", where=f"step {done}")
                    metrics.eval_records.append(EvalRecord(done, val))
                    writer.write(done, "eval", val, lr_at(cfg, done))
                    self.logger.info(f"step {done}/{cfg.total_steps}: train {value:.4f}, val {val:.4f}")
        finally:
            writer.close()
        metrics.wall_seconds = time.perf_counter() - started
        return metrics


def run_training(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seed: Optional[int] = None,
    corpus: Optional[ByteCorpus] = None,
    metrics_path: Optional[Union[str, Path]] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
) -> RunMetrics:
    """
    Train one model and return its loss streams.

    Args:
        model_cfg: Model shape including the FFN variant
        train_cfg: Optimizer and data settings
        seed: Overrides ``train_cfg.seeds[0]``
        corpus: Pre-loaded corpus; read from ``train_cfg.corpus_path`` when omitted
        metrics_path: JSONL destination for the loss streams
        checkpoint_path: Where to save the final weights

    Raises:
        DataError: The corpus is missing or empty
        NumericError: The loss diverged
    """
    seed = train_cfg.seeds[0] if seed is None else seed
    if corpus is None:
        corpus = ByteCorpus.from_path(train_cfg.corpus_path, train_cfg.holdout_fraction)
    model = build(model_cfg, seed)
    metrics = Trainer(model, train_cfg, corpus, seed).run(metrics_path)
    if checkpoint_path:
        save_model(model, checkpoint_path)
    logger.info(
        f"Run seed={seed} finished: val loss {metrics.val_loss:.4f} "
        f"in {metrics.wall_seconds:.1f}s"
    )
    return metrics


@dataclass
class AblationCell:
    """One grid cell: an FFN arm at one peak learning rate."""

    name: str
    variant: FFNVariant
    gate: GateKind = GateKind.SIGMOID
    dictionary: str = ""
    max_lr: float = 3e-3
    baseline_activation: Optional[str] = None
    hidden: Optional[int] = None

    def __post_init__(self) -> None:
        if isinstance(self.variant, str):
            self.variant = FFNVariant(self.variant)
        if isinstance(self.gate, str):
            self.gate = GateKind(self.gate)
        if not self.name or any(ch.isspace() or ch == "," for ch in self.name):
            raise ConfigError(f"cell name '{self.name}' must be a single token", key="cell")
        if self.max_lr <= 0:
            raise ConfigError(f"cell {self.name}: max_lr must be positive", key="max_lr")
        if self.variant.is_baseline:
            self.dictionary = ""
        elif self.dictionary:
            parse_dictionary(self.dictionary, self.variant.flavor)

    @property
    def arm(self) -> tuple:
        """Everything but the learning rate; cells sharing an arm are tuned together."""
        return (
            self.variant.value,
            self.gate.value,
            self.dictionary,
            self.baseline_activation or AUTO,
            AUTO if self.hidden is None else str(self.hidden),
        )

    def ffn_config(self, d_model: int) -> FFNConfig:
        return FFNConfig(
            d_model=d_model,
            variant=self.variant,
            dictionary=(
                parse_dictionary(self.dictionary, self.variant.flavor) if self.dictionary else None
            ),
            gate=self.gate,
            hidden=self.hidden,
            baseline_activation=(
                kind_from_name(self.baseline_activation) if self.baseline_activation else None
            ),
        )


@dataclass
class CellJob:
    cell: str
    seed: int
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    metrics_path: Optional[str] = None


def _train_cell(job: CellJob) -> float:
    metrics = run_training(job.model_cfg, job.train_cfg, seed=job.seed, metrics_path=job.metrics_path)
    return metrics.val_loss


@dataclass
class AblationResult:
    """Per-cell comparison table plus the per-arm tuned summary."""

    table: pd.DataFrame
    tuned: pd.DataFrame
    losses: Dict[str, List[float]]
    errors: List[str] = field(default_factory=list)


def expand_lr_grid(cells: Sequence[AblationCell], lrs: Sequence[float]) -> List[AblationCell]:
    """One copy of each cell per learning rate, named ``<name>@<lr>``."""
    return [replace(cell, name=f"{cell.name}@{lr:g}", max_lr=lr) for cell in cells for lr in lrs]


def _tuned_summary(table: pd.DataFrame, baseline_arm: tuple) -> pd.DataFrame:
    columns = list(ARM_COLUMNS) + ["best_max_lr", "median_val_loss", "rel_loss"]
    ok = table[table["status"] == "ok"]
    if ok.empty:
        return pd.DataFrame(columns=columns)
    best = ok.loc[ok.groupby(list(ARM_COLUMNS), sort=False)["median_val_loss"].idxmin()]
    best = best.rename(columns={"max_lr": "best_max_lr"})[columns[:-1]].reset_index(drop=True)
    is_base = np.logical_and.reduce(
        [best[column] == value for column, value in zip(ARM_COLUMNS, baseline_arm)]
    )
    base = best[is_base]
    base_loss = float(base["median_val_loss"].iloc[0]) if not base.empty else math.nan
    best["rel_loss"] = best["median_val_loss"] - base_loss
    return best


def run_ablation(
    cells: Sequence[AblationCell],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    baseline: str,
    seeds: Optional[Sequence[int]] = None,
    jobs: int = 1,
    metrics_dir: Optional[Union[str, Path]] = None,
) -> AblationResult:
    """
    Train every cell under every seed and compare median held-out losses.

    Cells whose runs raise are marked ``failed``; the table is still built.

    Args:
        cells: Grid cells, names unique
        model_cfg: Shared model shape; each cell swaps in its FFN
        train_cfg: Shared optimizer settings; each cell swaps in its max_lr
        baseline: Name of the reference cell for the relative-loss column
        seeds: Seeds per cell, defaults to ``train_cfg.seeds``
        jobs: Worker processes
        metrics_dir: Optional directory for per-run JSONL streams
    """
    if not cells:
        raise ConfigError("ablation grid is empty", key="cell")
    names = [cell.name for cell in cells]
    if len(set(names)) != len(names):
        raise ConfigError("ablation cell names must be unique", key="cell")
    if baseline not in names:
        raise ConfigError(f"baseline cell '{baseline}' is not in the grid", key="baseline")
    seeds = list(train_cfg.seeds if seeds is None else seeds)

    work: List[CellJob] = []
    for cell in cells:
        cell_model = replace(model_cfg, ffn=cell.ffn_config(model_cfg.d_model))
        cell_train = replace(train_cfg, max_lr=cell.max_lr, seeds=seeds)
        for seed in seeds:
            path = str(Path(metrics_dir) / f"{cell.name}-seed{seed}.jsonl") if metrics_dir else None
            work.append(CellJob(cell.name, seed, cell_model, cell_train, path))
    logger.info(f"Ablation: {len(cells)} cells x {len(seeds)} seeds on {jobs} worker(s)")
    outcomes = run_jobs(_train_cell, work, workers=jobs)

    losses: Dict[str, List[float]] = {name: [] for name in names}
    failed: Dict[str, str] = {}
    for job, outcome in zip(work, outcomes):
        if isinstance(outcome, BaseException) or not math.isfinite(outcome):
            failed.setdefault(job.cell, f"{job.cell} seed {job.seed}: {outcome}")
        else:
            losses[job.cell].append(float(outcome))
    for message in failed.values():
        logger.warning(f"Ablation cell failed: {message}")

    medians = {
        name: (math.nan if name in failed else float(np.median(losses[name]))) for name in names
    }
    base_loss = medians[baseline]
    rows = []
    for cell in cells:
        median = medians[cell.name]
        rows.append(
            {
                "name": cell.name,
                "variant": cell.variant.value,
                "gate": cell.gate.value,
                "dictionary": cell.dictionary,
                "baseline_activation": cell.arm[3],
                "hidden": cell.arm[4],
                "max_lr": cell.max_lr,
                "seeds": ";".join(str(s) for s in seeds),
                "median_val_loss": median,
                "rel_loss": median - base_loss,
                "log_rel_improvement": math.log(base_loss / median)
                if median > 0 and base_loss > 0
                else math.nan,
                "status": "failed" if cell.name in failed else "ok",
            }
        )
    table = pd.DataFrame(rows, columns=ABLATION_COLUMNS)
    baseline_arm = next(cell.arm for cell in cells if cell.name == baseline)
    tuned = _tuned_summary(table, baseline_arm)
    return AblationResult(table=table, tuned=tuned, losses=losses, errors=list(failed.values()))
