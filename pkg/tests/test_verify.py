import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shieldsim.attnmult import oam_run
from shieldsim.field import FieldMatrix, SeededRng, mat_mul_mod, sample_matrix
from shieldsim.runtime import (
    IntegrityViolation,
    MatmulTamper,
    Session,
    SoftmaxSwap,
    SoftmaxTamperA,
    SoftmaxTamperB,
)
from shieldsim.softmax import osm_exp, osm_offline
from shieldsim.verify import (
    ExtendedProduct,
    default_tol_log,
    freivalds_check,
    split_hashed,
    uv_matmul_check,
    uv_matmul_prepare,
    uv_softmax_check,
    uv_softmax_prepare,
    verified_additive,
    verified_attn_matmul,
)


def run_softmax_check(s, x):
    x_hat, tag = uv_softmax_prepare(s, x, hash_limit=s.exp_cap - 30)
    e = osm_exp(s, x_hat, osm_offline(s, x_hat.size))
    return uv_softmax_check(s, e, tag), tag


class TestSoftmaxHash:
    def test_coefficients_nonzero_and_bounded(self, session):
        _, tag = uv_softmax_prepare(session, np.zeros(200))
        assert np.all(tag.a != 0) and np.all(np.abs(tag.a) <= 2)
        assert set(np.unique(tag.a)) == {-2, -1, 1, 2}

    def test_hash_inserted_at_secret_slot(self, session):
        x = np.array([1.0, -2.0, 0.5])
        x_hat, tag = uv_softmax_prepare(session, x)
        assert x_hat[tag.pos] == pytest.approx(float(np.dot(tag.a, x)))
        assert np.array_equal(np.delete(x_hat, tag.pos), x)
        assert tag.coefficient_at(tag.pos) is None

    def test_coefficient_lookup_skips_hash(self, session):
        x_hat, tag = uv_softmax_prepare(session, np.arange(5.0))
        slots = [i for i in range(6) if i != tag.pos]
        assert [tag.coefficient_at(i) for i in slots] == tag.a.tolist()

    def test_fixed_coefficients(self, session):
        _, tag = uv_softmax_prepare(session, [1.0, 2.0], coefficients=[1, -1])
        assert tag.hashX == -1.0

    @given(st.integers(0, 2**31), st.integers(1, 64))
    def test_honest_passes(self, seed, n):
        s = Session(seed=seed)
        res, _ = run_softmax_check(s, SeededRng(seed).uniform(-10, 10, n))
        assert res.passed

    def test_default_tolerance(self):
        assert default_tol_log(100) == pytest.approx(1e-7 + 1e-7)

    @pytest.mark.parametrize("adv", [SoftmaxTamperA(delta=1e-5), SoftmaxTamperB(delta=1e-5, relative=True)])
    def test_small_relative_tamper_detected(self, adv):
        s = Session(seed=7, adversary=adv)
        res, _ = run_softmax_check(s, SeededRng(7).uniform(-10, 10, 16))
        assert not res.passed

    def test_swap_with_distinct_coefficients_detected(self):
        s = Session(seed=11)
        x = SeededRng(11).uniform(-3, 3, 8)
        x_hat, tag = uv_softmax_prepare(s, x)
        pair = next((i, j) for i in range(9) for j in range(i + 1, 9)
                    if None not in (tag.coefficient_at(i), tag.coefficient_at(j))
                    and tag.coefficient_at(i) != tag.coefficient_at(j))
        s.adversary = SoftmaxSwap(i=pair[0], j=pair[1])
        e = osm_exp(s, x_hat, osm_offline(s, 9))
        assert not uv_softmax_check(s, e, tag).passed

    def test_swap_with_equal_coefficients_is_invisible(self):
        s = Session(seed=12)
        x = np.array([0.3, -1.2, 2.0])
        x_hat, tag = uv_softmax_prepare(s, x, coefficients=[1, 1, 2])
        slots = [i for i in range(4) if tag.coefficient_at(i) == 1]
        s.adversary = SoftmaxSwap(i=slots[0], j=slots[1])
        e = osm_exp(s, x_hat, osm_offline(s, 4))
        assert uv_softmax_check(s, e, tag).passed

    def test_degenerate_reply_fails(self, session):
        _, tag = uv_softmax_prepare(session, [1.0, 2.0])
        assert not uv_softmax_check(session, [1.0, 0.0, 2.0], tag).passed

    def test_extended_product_beyond_double_range(self):
        acc = ExtendedProduct()
        for _ in range(40):
            acc.mul_split(*ExtendedProduct.split(math.exp(600)))
        assert acc.log2() == pytest.approx(40 * 600 / math.log(2), rel=1e-12)


class TestMatmulHash:
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
    def test_honest_passes_and_result_exact(self, m, n, k, seed):
        rng = SeededRng(seed)
        q, kt = sample_matrix(m, n, rng), sample_matrix(n, k, rng)
        assert verified_attn_matmul(Session(seed=seed), q, kt) == mat_mul_mod(q, kt)
        assert verified_additive(Session(seed=seed), q, kt) == mat_mul_mod(q, kt)

    def test_hash_row_appended(self, session, rng):
        q = sample_matrix(3, 2, rng)
        q_aug, tag = uv_matmul_prepare(session, q, h_q=[1, 2, 3])
        assert tag.pos == 3
        assert q_aug.data[3].tolist() == ((q.data[0] + 2 * q.data[1] + 3 * q.data[2]) % q.p).tolist()

    @pytest.mark.parametrize("mode", ["single-entry", "row-swap", "scale-all"])
    def test_tampering_named_by_stage(self, mode, rng):
        q, kt = sample_matrix(4, 4, rng), sample_matrix(4, 4, rng)
        s = Session(seed=3, adversary=MatmulTamper(mode=mode, magnitude=3))
        with pytest.raises(IntegrityViolation) as err:
            verified_attn_matmul(s, q, kt, tag="attn-matmul")
        assert err.value.stage == "attn-matmul"

    def test_additive_tampering_detected(self, rng):
        x, w = sample_matrix(4, 4, rng), sample_matrix(4, 4, rng)
        for mode in ("single-entry", "row-swap", "scale-all"):
            with pytest.raises(IntegrityViolation):
                verified_additive(Session(seed=5, adversary=MatmulTamper(mode=mode, magnitude=3)), x, w, "proj-q")

    def test_check_and_split(self, session, rng):
        q, kt = sample_matrix(3, 3, rng), sample_matrix(3, 3, rng)
        q_aug, tag = uv_matmul_prepare(session, q)
        z = oam_run(session, q_aug, kt)
        assert uv_matmul_check(session, z, tag).passed
        assert split_hashed(z, tag) == mat_mul_mod(q, kt)


class TestCostComparison:
    @pytest.mark.parametrize("m, n, k", [(8, 8, 8), (5, 7, 3), (32, 16, 64)])
    def test_two_versus_three_vector_matrix_products(self, m, n, k, rng):
        q, kt = sample_matrix(m, n, rng), sample_matrix(n, k, rng)
        uv = Session(seed=1)
        q_aug, tag = uv_matmul_prepare(uv, q)
        res = uv_matmul_check(uv, mat_mul_mod(q_aug, kt), tag)
        fr = Session(seed=1)
        res_f = freivalds_check(fr, q, kt, mat_mul_mod(q, kt))
        assert res.passed and res_f.passed
        assert uv.counters["online"].trusted_vecmats == 2
        assert fr.counters["online"].trusted_vecmats == 3
        assert res.trusted_mults == m * k
        assert res_f.trusted_mults == m * k + m * n + n * k

    def test_freivalds_detects_tamper(self, rng):
        q, kt = sample_matrix(6, 6, rng), sample_matrix(6, 6, rng)
        z = mat_mul_mod(q, kt).data.copy()
        z[2, 3] = (z[2, 3] + 1) % q.p
        assert not freivalds_check(Session(seed=2), q, kt, FieldMatrix(z, q.cfg)).passed

    def test_check_result_dict(self, session, rng):
        q, kt = sample_matrix(2, 2, rng), sample_matrix(2, 2, rng)
        d = freivalds_check(session, q, kt, mat_mul_mod(q, kt)).as_dict()
        assert d == {"check": "freivalds", "pass": True, "trusted_mults": 12}
