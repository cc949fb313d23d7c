"""Tests for the grid estimate of the W^{1,inf} distance."""

import numpy as np
import pytest

from moa_ffn.base import ConfigError, DimensionError, NumericError
from moa_ffn.expressivity.sobolev import GridSpec, ZeroFunction, keep_mask, sobolev_distance
from moa_ffn.expressivity.targets import WitnessTag, WitnessTarget


class _NotFinite:
    dim = 2
    label = "broken"

    def evaluate(self, points):
        values = np.zeros(len(points))
        values[len(points) // 2] = np.nan
        return values, np.zeros_like(points)


class TestGridSpec:
    def test_defaults(self):
        grid = GridSpec()
        assert grid.spacing == pytest.approx(0.005)
        assert grid.kink_exclusion_radius == pytest.approx(0.0075)

    def test_points(self):
        points = GridSpec(points_per_axis=5).points()
        assert points.shape == (25, 2)
        assert points.min() == -1.0 and points.max() == 1.0
        assert GridSpec(dim=1, points_per_axis=5).points().shape == (5, 1)

    def test_with_dim(self):
        grid = GridSpec(points_per_axis=11, half_width=2.0).with_dim(1)
        assert (grid.dim, grid.points_per_axis, grid.half_width) == (1, 11, 2.0)

    def test_echo(self):
        echo = GridSpec(points_per_axis=11).echo()
        assert echo["grid.points_per_axis"] == "11"
        assert "grid.kink_exclusion_factor" in echo

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dim": 3},
            {"points_per_axis": 2},
            {"half_width": 0.0},
            {"points_per_axis": 5, "kink_exclusion_factor": 5.0},
            {"chunk_size": 0},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            GridSpec(**kwargs)


class TestDistance:
    def test_tla_one_against_zero(self):
        grid = GridSpec(dim=1, points_per_axis=401)
        est = sobolev_distance(WitnessTarget(WitnessTag.TLA_I), ZeroFunction(1), grid)
        assert est.sup_value_gap == pytest.approx(2.0)
        assert est.sup_gradient_gap == pytest.approx(3.0)
        assert est.total == pytest.approx(5.0, abs=0.02)

    def test_self_distance_is_zero(self):
        target = WitnessTarget(WitnessTag.TMOA_II, lam=2.0)
        est = sobolev_distance(target, target, GridSpec(points_per_axis=41))
        assert est.total == 0.0

    def test_excludes_axes_and_kinks(self):
        grid = GridSpec(points_per_axis=41)
        target = WitnessTarget(WitnessTag.TLA_II)
        est = sobolev_distance(target, ZeroFunction(2), grid)
        assert est.points_used == 38 * 38

    def test_chunking_does_not_change_result(self):
        target = WitnessTarget(WitnessTag.TMOA_I, lam=3.0)
        whole = sobolev_distance(target, ZeroFunction(2), GridSpec(points_per_axis=41))
        chunked = sobolev_distance(target, ZeroFunction(2), GridSpec(points_per_axis=41, chunk_size=7))
        assert whole.total == chunked.total

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            sobolev_distance(WitnessTarget(WitnessTag.TLA_I), ZeroFunction(2), GridSpec())

    def test_non_finite_values(self):
        with pytest.raises(NumericError):
            sobolev_distance(_NotFinite(), ZeroFunction(2), GridSpec(points_per_axis=11))


def test_keep_mask_uses_target_kinks():
    points = np.array([[0.5, 0.5], [0.5, 0.001], [0.001, 0.5], [-0.2, 0.3]])
    ridge = WitnessTarget(WitnessTag.ADAPTIVE_RIDGE, w=(1.0, 1.0), b=-0.1)
    np.testing.assert_array_equal(keep_mask(points, 0.01), [True, False, False, True])
    np.testing.assert_array_equal(keep_mask(points, 0.01, ridge), [True, False, False, False])
