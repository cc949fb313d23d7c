"""Tests for activation primitives and dictionary codes."""

import math

import numpy as np
import pytest

from moa_ffn.activations import (
    GELU,
    IDENTITY,
    LEAKY_RELU,
    RELU,
    RELU2,
    SILU,
    TANH,
    ActivationDictionary,
    ActivationKind,
    ActivationTag,
    deriv,
    deriv_array,
    eval as eval_activation,
    eval_array,
    has_derivative_jump,
    kind_from_name,
    kink_points,
    parse_dictionary,
    render_dictionary,
    second_deriv_array,
)
from moa_ffn.base import Flavor, FlavorError, NumericError, ParseError


class TestValues:
    def test_gelu_at_one(self):
        assert eval_activation(GELU, 1.0) == pytest.approx(0.8413447460685429, abs=1e-12)

    def test_silu_at_one(self):
        assert eval_activation(SILU, 1.0) == pytest.approx(1.0 / (1.0 + math.exp(-1.0)))

    def test_relu_family(self):
        t = np.array([-2.0, 0.0, 3.0])
        np.testing.assert_array_equal(eval_array(RELU, t), [0.0, 0.0, 3.0])
        np.testing.assert_array_equal(eval_array(RELU2, t), [0.0, 0.0, 9.0])
        np.testing.assert_allclose(eval_array(LEAKY_RELU, t), [-0.02, 0.0, 3.0])

    def test_custom_leaky_slope(self):
        kind = ActivationKind(ActivationTag.LEAKY_RELU, leaky_slope=0.2)
        assert eval_activation(kind, -1.0) == pytest.approx(-0.2)

    def test_bad_leaky_slope(self):
        with pytest.raises(FlavorError):
            ActivationKind(ActivationTag.LEAKY_RELU, leaky_slope=1.5)

    def test_non_finite_input(self):
        with pytest.raises(NumericError):
            eval_activation(TANH, float("nan"))
        with pytest.raises(NumericError):
            deriv(RELU, float("inf"))


class TestDerivatives:
    @pytest.mark.parametrize("kind", [GELU, SILU, TANH, IDENTITY])
    def test_first_derivative_matches_differences(self, kind):
        t = np.linspace(-3.0, 3.0, 31)
        h = 1e-6
        numeric = (eval_array(kind, t + h) - eval_array(kind, t - h)) / (2 * h)
        np.testing.assert_allclose(deriv_array(kind, t), numeric, atol=1e-8)

    @pytest.mark.parametrize("kind", [GELU, SILU, TANH])
    def test_second_derivative_matches_differences(self, kind):
        t = np.linspace(-3.0, 3.0, 31)
        h = 1e-5
        numeric = (deriv_array(kind, t + h) - deriv_array(kind, t - h)) / (2 * h)
        np.testing.assert_allclose(second_deriv_array(kind, t), numeric, atol=1e-7)

    def test_right_hand_value_at_kink(self):
        assert deriv(RELU, 0.0) == 1.0
        assert deriv(LEAKY_RELU, 0.0) == 1.0
        assert deriv(RELU2, 0.0) == 0.0

    def test_kinks_and_jumps(self):
        assert kink_points(RELU) == (0.0,)
        assert kink_points(RELU2) == (0.0,)
        assert kink_points(GELU) == ()
        assert has_derivative_jump(RELU)
        assert has_derivative_jump(LEAKY_RELU)
        assert not has_derivative_jump(RELU2)


class TestDictionaryCodes:
    def test_parse_default_type_one(self):
        dictionary = parse_dictionary("gsr2lr", Flavor.TYPE_I)
        assert [k.tag for k in dictionary] == [
            ActivationTag.GELU,
            ActivationTag.SILU,
            ActivationTag.RELU2,
            ActivationTag.LEAKY_RELU,
            ActivationTag.RELU,
        ]

    def test_superscript_two(self):
        assert parse_dictionary("r²g", Flavor.TYPE_I).code == "r2g"

    def test_render_inverts_parse(self):
        for code in ("g", "gs", "gsr2ltr", "ir2"):
            assert render_dictionary(parse_dictionary(code, Flavor.TYPE_II)) == code

    def test_unknown_token_position(self):
        with pytest.raises(ParseError) as info:
            parse_dictionary("gx", Flavor.TYPE_I)
        assert info.value.position == 2

    def test_duplicate_token(self):
        with pytest.raises(ParseError) as info:
            parse_dictionary("gsg", Flavor.TYPE_I)
        assert info.value.position == 3

    def test_empty_code(self):
        with pytest.raises(ParseError) as info:
            parse_dictionary("", Flavor.TYPE_I)
        assert info.value.position == 1

    def test_identity_only_in_type_two(self):
        with pytest.raises(FlavorError):
            parse_dictionary("gi", Flavor.TYPE_I)
        assert len(parse_dictionary("gi", Flavor.TYPE_II)) == 2

    def test_duplicate_kinds_rejected_directly(self):
        with pytest.raises(FlavorError):
            ActivationDictionary((GELU, GELU), Flavor.TYPE_I)

    def test_pairs_are_lexicographic(self):
        dictionary = parse_dictionary("gsr", Flavor.TYPE_II)
        assert dictionary.pairs() == [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]

    def test_index_of_missing_kind(self):
        with pytest.raises(FlavorError):
            parse_dictionary("gs", Flavor.TYPE_I).index(RELU)

    def test_kind_from_name(self):
        assert kind_from_name("s") == SILU
        assert kind_from_name("relu2") == RELU2
        with pytest.raises(FlavorError):
            kind_from_name("swish")
