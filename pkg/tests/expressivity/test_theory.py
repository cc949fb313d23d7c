"""Tests for theory networks and their exact constructions."""

import numpy as np
import pytest

from moa_ffn.activations import GELU, RELU, RELU2, TANH, THEORY_DICTIONARY_I, ActivationTag
from moa_ffn.base import ConfigError, DimensionError, RangeError, UnsupportedError
from moa_ffn.expressivity.sobolev import GridSpec, sobolev_distance
from moa_ffn.expressivity.targets import ProfileTag, ProfileTarget, WitnessTag, WitnessTarget
from moa_ffn.expressivity.theory import (
    TheoryFamily,
    TheoryNetwork,
    exact_construct,
    fixed_as_la,
    fixed_pair_as_qd_la,
    la_as_moa,
    param_shapes,
)
from moa_ffn.tensor import Tensor, grad_check

GRID = GridSpec(points_per_axis=101)

FAMILY_KINDS = {
    TheoryFamily.FIXED_I: (GELU,),
    TheoryFamily.LA_I: (),
    TheoryFamily.MOA_I: (),
    TheoryFamily.FIXED_II: (TANH, RELU),
    TheoryFamily.QDLA_II: (),
    TheoryFamily.QDMOA_II: (),
}


def _random(family, rng, width=2, dim=2):
    params = {name: rng.normal(0.0, 1.0, size=shape) for name, shape in param_shapes(family, dim, width).items()}
    return TheoryNetwork(family, dim, params, FAMILY_KINDS.get(family, (RELU,)))


class TestExactConstructions:
    @pytest.mark.parametrize(
        "target",
        [
            WitnessTarget(WitnessTag.TLA_I),
            WitnessTarget(WitnessTag.TMOA_I, lam=1.0),
            WitnessTarget(WitnessTag.TMOA_I, lam=3.0),
            WitnessTarget(WitnessTag.TLA_II),
            WitnessTarget(WitnessTag.TMOA_II, lam=2.0),
            WitnessTarget(WitnessTag.ADAPTIVE_RIDGE, u=(1.0, 0.5), beta=0.1, w=(0.2, 1.0), b=-0.1),
        ],
        ids=lambda t: t.label,
    )
    def test_width_one_is_exact(self, target):
        network = exact_construct(target)
        assert network.width == 1
        est = sobolev_distance(network, target, GRID.with_dim(target.dim))
        assert est.total <= 1e-12

    def test_tla_one_coefficients(self):
        alpha = exact_construct(WitnessTarget(WitnessTag.TLA_I)).params["alpha"]
        expected = np.zeros(len(THEORY_DICTIONARY_I))
        expected[THEORY_DICTIONARY_I.index(RELU)] = 1.0
        expected[THEORY_DICTIONARY_I.index(RELU2)] = 1.0
        np.testing.assert_array_equal(alpha, expected)

    def test_tmoa_one_gate_row(self):
        U = exact_construct(WitnessTarget(WitnessTag.TMOA_I, lam=3.0)).params["U"]
        np.testing.assert_array_equal(U[THEORY_DICTIONARY_I.index(RELU)], [3.0, 0.0, 0.0])
        assert np.count_nonzero(U) == 1

    def test_tmoa_two_gate_row(self):
        V = exact_construct(WitnessTarget(WitnessTag.TMOA_II, lam=1.0)).params["V"]
        assert np.count_nonzero(V) == 1
        np.testing.assert_array_equal(V[np.nonzero(V)[0][0]], [1.0, 0.0, 0.0])

    def test_tampered_activation_breaks_exactness(self):
        target = WitnessTarget(WitnessTag.TLA_I)
        network = exact_construct(target, coded_as={ActivationTag.RELU2: RELU})
        assert sobolev_distance(network, target, GRID.with_dim(1)).total > 0.5

    def test_unsupported_targets(self):
        with pytest.raises(UnsupportedError):
            exact_construct(ProfileTarget(ProfileTag.A))
        with pytest.raises(UnsupportedError):
            exact_construct(
                WitnessTarget(WitnessTag.ADAPTIVE_RIDGE, u=(1.0, 0.0, 0.0), w=(0.0, 1.0, 0.0))
            )


class TestInclusions:
    def test_fixed_as_la(self, rng):
        fixed = _random(TheoryFamily.FIXED_I, rng, width=3)
        la = fixed_as_la(fixed)
        points = rng.uniform(-1.0, 1.0, size=(100, 2))
        for a, b in zip(fixed.evaluate(points), la.evaluate(points)):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("kinds", [(RELU, TANH), (TANH, RELU)])
    def test_fixed_pair_as_qd_la(self, kinds, rng):
        params = {n: rng.normal(size=s) for n, s in param_shapes(TheoryFamily.FIXED_II, 2, 3).items()}
        fixed = TheoryNetwork(TheoryFamily.FIXED_II, 2, params, kinds)
        qd = fixed_pair_as_qd_la(fixed)
        points = rng.uniform(-1.0, 1.0, size=(100, 2))
        for a, b in zip(fixed.evaluate(points), qd.evaluate(points)):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("family", [TheoryFamily.LA_I, TheoryFamily.QDLA_II])
    def test_la_as_moa(self, family, rng):
        la = _random(family, rng, width=3)
        rho = 0.25 / float(np.max(np.abs(la.params["alpha"])))
        moa = la_as_moa(la, rho)
        points = rng.uniform(-1.0, 1.0, size=(100, 2))
        for a, b in zip(la.evaluate(points), moa.evaluate(points)):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)

    def test_la_as_moa_range(self, rng):
        la = _random(TheoryFamily.LA_I, rng)
        with pytest.raises(RangeError):
            la_as_moa(la, 2.0 / float(np.min(np.abs(la.params["alpha"]))))

    def test_zero_alpha_gives_zero_network(self, rng):
        la = _random(TheoryFamily.LA_I, rng)
        la.params["alpha"] = np.zeros_like(la.params["alpha"])
        values, grads = la_as_moa(la, 0.5).evaluate(rng.uniform(-1, 1, size=(10, 2)))
        np.testing.assert_array_equal(values, 0.0)
        np.testing.assert_array_equal(grads, 0.0)


class TestInputGradients:
    @pytest.mark.parametrize("family", list(FAMILY_KINDS))
    def test_gradient_matches_differences(self, family, rng):
        network = _random(family, rng, width=2)
        points = rng.uniform(-1.0, 1.0, size=(40, 2))
        points = points[network.singular_distance(points) > 1e-3]
        _, grads = network.evaluate(points)
        h = 1e-6
        for axis in range(2):
            shift = np.zeros(2)
            shift[axis] = h
            up, _ = network.evaluate(points + shift)
            down, _ = network.evaluate(points - shift)
            np.testing.assert_allclose(grads[:, axis], (up - down) / (2 * h), rtol=1e-6, atol=1e-5)

    def test_gradient_term_is_differentiable_in_weights(self, rng):
        network = _random(TheoryFamily.MOA_I, rng)
        points = rng.uniform(0.1, 1.0, size=(8, 2))
        weights = rng.standard_normal((8, 2))

        def objective(W):
            params = {name: Tensor(value) for name, value in network.params.items()}
            params["W"] = W
            value, grad = network.forward_tensors(params, points)
            return value.sum() + (grad * Tensor(weights)).sum()

        W = network.params["W"].copy()
        W[:, :2] = np.abs(W[:, :2])
        W[:, 2] = 0.5
        assert grad_check(objective, W) < 1e-6

    def test_dictionary_ridge(self, rng):
        params = {n: rng.normal(size=s) for n, s in param_shapes(TheoryFamily.DICT_RIDGE_1D, 1, 2).items()}
        network = TheoryNetwork(TheoryFamily.DICT_RIDGE_1D, 1, params)
        points = np.linspace(-1.0, 1.0, 23)[:, None]
        points = points[network.singular_distance(points) > 1e-3]
        values, grads = network.evaluate(points)
        assert values.shape == (len(points),)
        up, _ = network.evaluate(points + 1e-6)
        down, _ = network.evaluate(points - 1e-6)
        np.testing.assert_allclose(grads[:, 0], (up - down) / 2e-6, atol=1e-6)


class TestValidation:
    def test_missing_kind(self):
        with pytest.raises(ConfigError):
            TheoryNetwork(TheoryFamily.FIXED_I, 2, {"a": np.ones(1), "W": np.ones((1, 3))})

    def test_wrong_parameter_names(self):
        with pytest.raises(ConfigError):
            TheoryNetwork(TheoryFamily.LA_I, 2, {"a": np.ones(1), "W": np.ones((1, 3))})

    def test_wrong_shape(self):
        with pytest.raises(DimensionError):
            TheoryNetwork(TheoryFamily.FIXED_I, 2, {"a": np.ones(2), "W": np.ones((2, 2))}, (RELU,))

    def test_ridge_classes_are_one_dimensional(self):
        with pytest.raises(ConfigError):
            TheoryNetwork(TheoryFamily.RIDGE_1D, 2, {"a": np.ones(1), "W": np.ones((1, 3))}, (RELU,))
