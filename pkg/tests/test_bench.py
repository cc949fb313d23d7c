"""Tests for analytic FLOP counts and step timing."""

import pandas as pd
import pytest

from moa_ffn.activations import parse_dictionary
from moa_ffn.base import ContractError, Flavor
from moa_ffn.bench import (
    BENCH_COLUMNS,
    UNITS_HEADER,
    OverheadReport,
    analytic_flops,
    baseline_of,
    bench_variants,
    flop_breakdown,
    measure_steps,
    params_delta,
    wall_clock,
    write_bench_reports,
)
from moa_ffn.ffn import FFNVariant

from conftest import ffn_config


class TestFlops:
    def test_moa_one(self):
        flops = flop_breakdown(ffn_config(FFNVariant.MOA_I, d_model=768))
        assert flops.projection_macs == 2 * 768 * 3072
        assert (flops.activation_evals, flops.mixing_macs, flops.gate_macs) == (15360, 15360, 3840)
        assert flops.extra == 34560

    def test_baseline(self):
        flops = flop_breakdown(ffn_config(FFNVariant.BASELINE_II, d_model=64))
        assert flops.projection_macs == 3 * 64 * 170
        assert flops.extra == 170

    def test_la_has_no_gates(self):
        la = flop_breakdown(ffn_config(FFNVariant.LA_I, d_model=64))
        moa = flop_breakdown(ffn_config(FFNVariant.MOA_I, d_model=64))
        assert la.gate_macs == 0
        assert moa.total - la.total == moa.gate_macs == 5 * 64

    def test_pairwise(self):
        flops = flop_breakdown(ffn_config(FFNVariant.QD_MOA, d_model=64))
        assert flops.activation_evals == 12 * 170
        assert flops.mixing_macs == 2 * 21 * 170
        assert flops.gate_macs == 21 * 64

    def test_one_variant_counts_fixed_branch(self):
        flops = flop_breakdown(ffn_config(FFNVariant.ONE_LA, d_model=64))
        assert flops.activation_evals == 7 * 170

    def test_overhead_share_shrinks_with_width(self):
        shares = []
        for d in (64, 128, 256, 512):
            flops = flop_breakdown(ffn_config(FFNVariant.MOA_I, d_model=d))
            shares.append((flops.gate_macs + flops.mixing_macs) / flops.total)
        assert shares == sorted(shares, reverse=True)
        assert len(set(shares)) == len(shares)

    def test_analytic_is_total(self):
        config = ffn_config(FFNVariant.BI_MOA, d_model=32)
        assert analytic_flops(config) == flop_breakdown(config).total

    def test_baseline_of(self):
        config = ffn_config(FFNVariant.MOA_I, d_model=16, hidden=40)
        base = baseline_of(config)
        assert base.variant is FFNVariant.BASELINE_I
        assert base.hidden == 40
        assert baseline_of(base) is base

    def test_bimoa_delta_with_and_without_gate_biases(self):
        six = parse_dictionary("gsr2ltr", Flavor.TYPE_II)
        plain = ffn_config(FFNVariant.BI_MOA, d_model=768, dictionary=six)
        biased = ffn_config(FFNVariant.BI_MOA, d_model=768, dictionary=six, gate_bias=True)
        assert params_delta(plain) == 2 * 6 * 768
        assert params_delta(biased) == 2 * 6 * 768 + 2 * 6
        assert params_delta(baseline_of(plain)) == 0


class TestTiming:
    def test_needs_ten_steps(self, tiny_model_config):
        with pytest.raises(ContractError):
            measure_steps(tiny_model_config, steps=9)

    def test_measure(self, tiny_model_config):
        timing = measure_steps(tiny_model_config, steps=10, warmup=1, batch_size=2)
        assert len(timing.step_ms) == 10
        assert timing.median_ms > 0.0
        assert timing.peak_alloc_bytes > 0

    def test_baseline_ratio_is_one(self, tiny_model_config):
        timing = measure_steps(tiny_model_config, steps=10, warmup=0, batch_size=2)
        report = wall_clock(tiny_model_config, steps=10, baseline=timing)
        assert report.ratio_vs_baseline == 1.0
        assert report.params_delta_vs_baseline == 0

    def test_bench_variants(self, tiny_model_config):
        reports = bench_variants(
            tiny_model_config,
            Flavor.TYPE_II,
            steps=10,
            warmup=0,
            batch_size=2,
            variants=[FFNVariant.BASELINE_II, FFNVariant.BI_MOA],
        )
        assert [r.variant for r in reports] == ["BaselineII", "BiMoA"]
        assert reports[0].ratio_vs_baseline == 1.0
        assert reports[1].params_delta_vs_baseline > 0
        assert reports[1].flops_per_token > reports[0].flops_per_token


def test_write_reports(tmp_path):
    report = OverheadReport("BaselineI", 100, 0, 50, 2.0, 2.0, None, 1.0)
    csv_path, text_path = write_bench_reports([report], tmp_path / "reports")
    assert text_path.read_text().splitlines()[0] == UNITS_HEADER
    table = pd.read_csv(csv_path)
    assert list(table.columns) == BENCH_COLUMNS
    assert table.loc[0, "variant"] == "BaselineI"
