"""
Parameter, FLOP and wall-clock accounting across FFN variants.

FLOPs are counted as multiply-accumulates; activation evaluations are a
separate unit (one evaluation each).
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import logging
import statistics
import time
import tracemalloc

import numpy as np
import pandas as pd

from .base import ContractError, Flavor
from .ffn import FFNConfig, FFNVariant, param_count
from .optim import AdamWSettings, AdamWState, adamw_step
from .tensor import backward, zero_grads
from .transformer import ModelConfig, build, forward_loss

logger = logging.getLogger(__name__)

UNITS_HEADER = "# units: flops_per_token in MACs plus activation evaluations; times in ms; memory in bytes"

MIN_TIMED_STEPS = 10
MIN_STEP_MS = 1.0
MAX_WIDENINGS = 6

BENCH_COLUMNS = [
    "variant",
    "params_total",
    "params_delta_vs_baseline",
    "flops_per_token",
    "mean_step_ms",
    "median_step_ms",
    "peak_alloc_bytes",
    "ratio_vs_baseline",
    "batch_widened",
]

VARIANTS_BY_FLAVOR = {
    Flavor.TYPE_I: [FFNVariant.BASELINE_I, FFNVariant.LA_I, FFNVariant.MOA_I],
    Flavor.TYPE_II: [
        FFNVariant.BASELINE_II,
        FFNVariant.ONE_LA,
        FFNVariant.BI_LA,
        FFNVariant.QD_LA,
        FFNVariant.ONE_MOA,
        FFNVariant.BI_MOA,
        FFNVariant.QD_MOA,
    ],
}


@dataclass
class FlopBreakdown:
    """Per-token cost of one FFN layer."""

    projection_macs: int
    gate_macs: int
    mixing_macs: int
    activation_evals: int

    @property
    def extra(self) -> int:
        """Everything beyond the projections."""
        return self.activation_evals + self.gate_macs + self.mixing_macs

    @property
    def total(self) -> int:
        return self.projection_macs + self.extra


def flop_breakdown(config: FFNConfig) -> FlopBreakdown:
    d, hidden, v = config.d_model, config.hidden, config.variant
    k, pairs = config.n_activations, config.n_pairs
    if config.flavor is Flavor.TYPE_I:
        projection = 2 * d * hidden
    else:
        projection = 3 * d * hidden

    if v.is_baseline:
        return FlopBreakdown(projection, 0, 0, hidden)

    if v in (FFNVariant.LA_I, FFNVariant.MOA_I):
        acts, mixing, gate_rows = k * hidden, k * hidden, k
    elif v in (FFNVariant.ONE_LA, FFNVariant.ONE_MOA):
        # the fixed branch keeps its single activation
        acts, mixing, gate_rows = (k + 1) * hidden, k * hidden, k
    elif v in (FFNVariant.BI_LA, FFNVariant.BI_MOA):
        acts, mixing, gate_rows = 2 * k * hidden, 2 * k * hidden, 2 * k
    else:
        # pair products plus their weighted sum
        acts, mixing, gate_rows = 2 * k * hidden, 2 * pairs * hidden, pairs
    gates = gate_rows * d if v.is_moa else 0
    return FlopBreakdown(projection, gates, mixing, acts)


def analytic_flops(config: FFNConfig) -> int:
    """Exact per-token MACs plus activation evaluations of one FFN layer."""
    return flop_breakdown(config).total


def baseline_of(config: FFNConfig) -> FFNConfig:
    """Same-flavour baseline with identical shapes."""
    if config.variant.is_baseline:
        return config
    variant = FFNVariant.BASELINE_I if config.flavor is Flavor.TYPE_I else FFNVariant.BASELINE_II
    return FFNConfig(
        d_model=config.d_model,
        variant=variant,
        hidden=config.hidden,
        seed=config.seed,
        init_std=config.init_std,
    )



def params_delta(config: FFNConfig) -> int:
    """Extra parameters over the same-flavour baseline; gate biases count when ``gate_bias`` is set."""
    return param_count(config).total - param_count(baseline_of(config)).total


@dataclass
class StepTiming:
    step_ms: List[float]
    peak_alloc_bytes: Optional[int]
    batch_size: int
    widened: bool

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(self.step_ms)

    @property
    def median_ms(self) -> float:
        return statistics.median(self.step_ms)


@dataclass
class OverheadReport:
    variant: str
    params_total: int
    params_delta_vs_baseline: int
    flops_per_token: int
    mean_step_ms: float
    median_step_ms: float
    peak_alloc_bytes: Optional[int]
    ratio_vs_baseline: float
    batch_widened: bool = False

    def as_dict(self) -> Dict[str, object]:
        return {column: getattr(self, column) for column in BENCH_COLUMNS}


def _time_steps(
    model_cfg: ModelConfig, steps: int, warmup: int, batch_size: int, seed: int
) -> List[float]:
    model = build(model_cfg, seed)
    params = model.named_parameters()
    tensors = [t for _, t in params]
    state = AdamWState()
    settings = AdamWSettings()
    rng = np.random.default_rng([seed, 3])
    timings = []
    for step in range(warmup + steps):
        batch = rng.integers(0, model_cfg.vocab_size, size=(batch_size, model_cfg.seq_len + 1))
        started = time.perf_counter()
        loss = forward_loss(model, batch)
        zero_grads(tensors)
        backward(loss)
        grads = {name: t.grad for name, t in params if t.grad is not None}
        adamw_step(params, grads, state, 1e-3, settings)
        elapsed = (time.perf_counter() - started) * 1000.0
        if step >= warmup:
            timings.append(elapsed)
    return timings


def measure_steps(
    model_cfg: ModelConfig,
    steps: int = MIN_TIMED_STEPS,
    warmup: int = 2,
    batch_size: int = 4,
    seed: int = 0,
    track_memory: bool = True,
) -> StepTiming:
    """
    Time full training steps after ``warmup`` untimed ones.

    The batch doubles while the median step stays under the timer floor.
    """
    if steps < MIN_TIMED_STEPS:
        raise ContractError(f"need at least {MIN_TIMED_STEPS} timed steps, got {steps}")
    widened = False
    for _ in range(MAX_WIDENINGS + 1):
        if track_memory:
            tracemalloc.start()
        try:
            timings = _time_steps(model_cfg, steps, warmup, batch_size, seed)
            peak = tracemalloc.get_traced_memory()[1] if track_memory else None
        finally:
            if track_memory:
                tracemalloc.stop()
        if statistics.median(timings) >= MIN_STEP_MS:
            break
        batch_size *= 2
        widened = True
        logger.warning(f"Steps under {MIN_STEP_MS} ms; widening batch to {batch_size}")
    return StepTiming(timings, peak, batch_size, widened)


def wall_clock(
    model_cfg: ModelConfig,
    steps: int = MIN_TIMED_STEPS,
    warmup: int = 2,
    batch_size: int = 4,
    seed: int = 0,
    baseline: Optional[StepTiming] = None,
) -> OverheadReport:
    """
    Step timing of ``model_cfg`` against its same-flavour baseline, run in
    this process one after the other.
    """
    base_cfg = replace(model_cfg, ffn=baseline_of(model_cfg.ffn))
    if baseline is None:
        baseline = measure_steps(base_cfg, steps, warmup, batch_size, seed)
        timing = measure_steps(model_cfg, steps, warmup, baseline.batch_size, seed)
    elif model_cfg.ffn.variant.is_baseline:
        timing = baseline
    else:
        timing = measure_steps(model_cfg, steps, warmup, baseline.batch_size, seed)
    params = param_count(model_cfg.ffn).total
    return OverheadReport(
        variant=model_cfg.ffn.variant.value,
        params_total=params,
        params_delta_vs_baseline=params_delta(model_cfg.ffn),
        flops_per_token=analytic_flops(model_cfg.ffn),
        mean_step_ms=timing.mean_ms,
        median_step_ms=timing.median_ms,
        peak_alloc_bytes=timing.peak_alloc_bytes,
        ratio_vs_baseline=timing.mean_ms / baseline.mean_ms,
        batch_widened=timing.widened or baseline.widened,
    )


def bench_variants(
    model_cfg: ModelConfig,
    flavor: Union[str, Flavor],
    steps: int = MIN_TIMED_STEPS,
    warmup: int = 2,
    batch_size: int = 4,
    seed: int = 0,
    variants: Optional[Sequence[FFNVariant]] = None,
) -> List[OverheadReport]:
    """Baseline first, then every other variant of the flavour, sequentially."""
    flavor = Flavor(flavor) if isinstance(flavor, str) else flavor
    template = model_cfg.ffn
    chosen = list(variants or VARIANTS_BY_FLAVOR[flavor])
    reports = []
    baseline: Optional[StepTiming] = None
    for variant in chosen:
        ffn = FFNConfig(
            d_model=model_cfg.d_model,
            variant=variant,
            dictionary=template.dictionary if template.flavor is flavor else None,
            gate=template.gate,
            hidden=template.hidden if template.flavor is flavor else None,
            seed=template.seed,
        )
        cfg = replace(model_cfg, ffn=ffn)
        if baseline is None:
            baseline = measure_steps(replace(cfg, ffn=baseline_of(ffn)), steps, warmup, batch_size, seed)
        report = wall_clock(cfg, steps, warmup, batch_size, seed, baseline=baseline)
        logger.info(
            f"{variant.value}: {report.mean_step_ms:.2f} ms/step, "
            f"ratio {report.ratio_vs_baseline:.3f}, params {report.params_total}"
        )
        reports.append(report)
    return reports


def bench_table(reports: Sequence[OverheadReport]) -> pd.DataFrame:
    return pd.DataFrame([r.as_dict() for r in reports], columns=BENCH_COLUMNS)


def write_bench_reports(reports: Sequence[OverheadReport], directory: Union[str, Path]) -> List[Path]:
    """``bench.csv`` plus an aligned text table carrying the units header."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table = bench_table(reports)
    csv_path = directory / "bench.csv"
    table.to_csv(csv_path, index=False, float_format="%.6f")
    text_path = directory / "bench.txt"
    text_path.write_text(
        UNITS_HEADER + "\n" + table.to_string(index=False, float_format=lambda v: f"{v:.3f}") + "\n"
    )
    return [csv_path, text_path]
