import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shieldsim.field import FieldConfig, mat_mul_mod
from shieldsim.quant import (
    QuantConfig,
    RangeBudget,
    RangeOverflow,
    check_budget,
    dequantize,
    dequantize_matrix,
    quantize,
    quantize_matrix,
    round_half_away,
    to_lattice,
)

Q = QuantConfig()


class TestRounding:
    @pytest.mark.parametrize("x, want", [(0.5, 1.0), (-0.5, -1.0), (1.5, 2.0), (-2.5, -3.0), (0.49, 0.0)])
    def test_half_away_from_zero(self, x, want):
        assert round_half_away(x) == want

    def test_lattice_is_idempotent(self):
        x = np.linspace(-3, 3, 101)
        assert np.array_equal(to_lattice(to_lattice(x)), to_lattice(x))


class TestQuantize:
    def test_examples(self):
        assert quantize(1.0) == 256
        assert quantize(-1.0) == Q.cfg.p - 256
        assert quantize(1 / 512) == 1
        assert dequantize(quantize(-0.75)) == -0.75

    @given(st.integers(-(2**20), 2**20))
    def test_lattice_round_trip_exact(self, k):
        x = k / 256
        assert dequantize(quantize(x)) == x

    @given(st.floats(-100, 100, allow_nan=False))
    def test_error_at_most_half_step(self, x):
        assert abs(dequantize(quantize(x)) - x) <= 2 ** -(Q.l + 1) + 1e-15

    def test_overflow(self):
        with pytest.raises(RangeOverflow):
            quantize(Q.cfg.p / Q.scale)

    def test_product_decodes_at_double_scale(self):
        a = np.array([[0.5, -1.25], [2.0, 0.75]])
        b = np.array([[1.5, 0.25], [-0.5, 1.0]])
        z = mat_mul_mod(quantize_matrix(a), quantize_matrix(b))
        assert np.array_equal(dequantize_matrix(z, 2 * Q.l), a @ b)

    def test_requires_headroom(self):
        with pytest.raises(ValueError):
            QuantConfig(12, FieldConfig())


class TestRangeBudget:
    def test_at_limit(self):
        # 8 * 2^8 * 2^12 sits just above (p-1)/2 ~ 2^23
        check_budget(RangeBudget(8, 1.0, 16.0 - 1 / 256))
        with pytest.raises(RangeOverflow) as err:
            check_budget(RangeBudget(8, 1.0, 16.0))
        assert err.value.magnitude >= err.value.limit

    def test_budget_implies_no_wraparound(self):
        rng = np.random.default_rng(0)
        a = to_lattice(rng.uniform(-1, 1, (6, 32)))
        b = to_lattice(rng.uniform(-2, 2, (32, 5)))
        check_budget(RangeBudget.for_product(a, b))
        z = mat_mul_mod(quantize_matrix(a), quantize_matrix(b))
        assert np.array_equal(dequantize_matrix(z, 2 * Q.l), a @ b)
