import json

import numpy as np
import pytest

from shieldsim.additive import ao_offline, ao_run, outsource_constant_product
from shieldsim.attnmult import oam_run
from shieldsim.field import FieldMatrix, SeededRng, sample_matrix
from shieldsim.runtime import (
    ExponentRange,
    Honest,
    MatmulTamper,
    OpCounts,
    Session,
    SoftmaxSwap,
    SoftmaxTamperA,
    SoftmaxTamperB,
    find_leaks,
    transcript_json,
    worker_exp,
    worker_matmul,
)
from shieldsim.softmax import osm_run
from shieldsim.verify import verified_additive, verified_attn_matmul


class TestCounters:
    def test_worker_matmul_counts(self, session, rng):
        a, b = sample_matrix(3, 4, rng), sample_matrix(4, 5, rng)
        worker_matmul(session, a, b)
        on = session.counters["online"]
        assert on.worker_mults == 60
        assert on.elements_sent == 12 + 20 and on.elements_received == 15
        assert session.counters["offline"] == OpCounts()

    def test_offline_phase(self, session):
        with session.offline():
            session.count("trusted_mults", 7)
        session.count("trusted_mults", 2)
        assert session.counters["offline"].trusted_mults == 7
        assert session.counters["online"].trusted_mults == 2

    def test_rejects_unknown_or_negative(self, session):
        with pytest.raises(KeyError):
            session.count("flops", 1)
        with pytest.raises(ValueError):
            session.count("trusted_mults", -1)

    def test_opcounts_arithmetic(self):
        a = OpCounts(trusted_mults=3, worker_exps=1)
        assert (a + a - a) == a
        assert a.as_dict()["trusted_mults"] == 3


class TestTranscript:
    def test_records_both_directions(self, session, rng):
        worker_matmul(session, sample_matrix(2, 2, rng), sample_matrix(2, 2, rng), tag="t")
        worker_exp(session, [0.0, 1.0], tag="e")
        dirs = [m.direction for m in session.transcript]
        assert dirs == ["to-worker", "to-worker", "from-worker", "to-worker", "from-worker"]
        rows = json.loads(transcript_json(session))
        assert all("sha256" in r for r in rows)

    def test_exponent_cap(self, session):
        with pytest.raises(ExponentRange):
            worker_exp(session, [701.0])


class TestAdversaries:
    def test_honest_is_identity(self):
        r = np.arange(6).reshape(2, 3)
        assert np.array_equal(Honest().tamper_matmul(r, 7, SeededRng(0)), r)

    @pytest.mark.parametrize("adv", [MatmulTamper(), MatmulTamper(mode="row-swap"), MatmulTamper(mode="scale-all", magnitude=3)])
    def test_deterministic(self, adv, rng):
        a, b = sample_matrix(4, 4, rng), sample_matrix(4, 4, rng)
        out = [worker_matmul(Session(seed=5, adversary=adv), a, b).data for _ in range(2)]
        assert np.array_equal(out[0], out[1])
        assert not np.array_equal(out[0], worker_matmul(Session(seed=5), a, b).data)

    def test_target_restricts(self, rng):
        adv = MatmulTamper(target="only-this")
        a, b = sample_matrix(3, 3, rng), sample_matrix(3, 3, rng)
        honest = worker_matmul(Session(seed=1), a, b, "other").data
        assert np.array_equal(worker_matmul(Session(seed=1, adversary=adv), a, b, "other").data, honest)
        assert not np.array_equal(worker_matmul(Session(seed=1, adversary=adv), a, b, "only-this").data, honest)

    def test_exp_strategies_ignored_by_matmul(self, rng):
        a, b = sample_matrix(3, 3, rng), sample_matrix(3, 3, rng)
        for adv in (SoftmaxTamperA(), SoftmaxTamperB(), SoftmaxSwap()):
            assert np.array_equal(worker_matmul(Session(seed=2, adversary=adv), a, b).data,
                                  worker_matmul(Session(seed=2), a, b).data)

    def test_softmax_strategies_change_reply(self):
        v = np.array([0.1, 0.2, 0.3, 0.4])
        for adv in (SoftmaxTamperA(), SoftmaxTamperB(), SoftmaxSwap()):
            assert not np.array_equal(worker_exp(Session(seed=3, adversary=adv), v), np.exp(v))

    def test_invalid_mode(self):
        with pytest.raises(ValueError):
            MatmulTamper(mode="flip")


class TestLeakScan:
    def test_protocols_leak_nothing(self, rng):
        s = Session(seed=8)
        x, w = sample_matrix(4, 5, rng), sample_matrix(5, 3, rng)
        outsource_constant_product(s, x, w)
        verified_additive(s, x, w)
        oam_run(s, x, w.T.T)
        verified_attn_matmul(s, x, sample_matrix(5, 4, rng))
        osm_run(s, rng.uniform(-5, 5, 6), verify=True)
        assert s.secrets
        assert find_leaks(s) == []

    def test_detects_planted_leak(self, rng):
        s = Session(seed=9)
        secret = sample_matrix(3, 3, rng)
        s.register_secret("planted", secret)
        worker_matmul(s, secret, FieldMatrix.identity(3))
        assert find_leaks(s) == ["planted"]

    def test_zero_plaintext_columns_not_flagged(self, rng):
        s = Session(seed=10)
        w = sample_matrix(4, 3, rng)
        x = sample_matrix(2, 4, rng).data.copy()
        x[:, 1] = 0
        outsource_constant_product(s, FieldMatrix(x, w.cfg), w)
        assert find_leaks(s) == []

    def test_pad_sent_without_plaintext_flagged(self, rng):
        s = Session(seed=11)
        w = sample_matrix(3, 3, rng)
        mask = ao_offline(s, w, 3)
        worker_matmul(s, mask.R, w)
        assert find_leaks(s) == ["additive.R"]
