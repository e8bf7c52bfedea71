import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import surveykit as sk
from surveykit.core import NonProbabilityDesignError, SupportTooLargeError

from conftest import example_design_distribution


def support_probs_sum_to_one(dist):
    return abs(math.fsum(p for _, p in dist) - 1.0) < 1e-12


class TestEnumeration:
    def test_farm_srs_support(self, farm_frame):
        dist = sk.enumerate_design(sk.SRS(2), farm_frame)
        assert len(dist) == 6
        assert all(abs(p - 1 / 6) < 1e-15 for _, p in dist)
        assert [s for s, _ in dist] == sorted(s for s, _ in dist)

    def test_census_single_set(self, farm_frame):
        dist = sk.enumerate_design(sk.SRS(4), farm_frame)
        assert len(dist) == 1
        assert dist.support[0] == (("1", "2", "3", "4"), 1.0)

    def test_brewer_support_equals_order_enumeration(self, mos_frame):
        # oracle: sum the two draw orders for every pair by hand
        p = mos_frame.mos / mos_frame.mos.sum()
        theta = p * (1 - p) / (1 - 2 * p)
        theta = theta / theta.sum()
        expected = {}
        for i, j in itertools.permutations(range(4), 2):
            key = tuple(sorted((mos_frame.ids[i], mos_frame.ids[j])))
            expected[key] = expected.get(key, 0.0) + theta[i] * p[j] / (1 - p[i])
        dist = sk.enumerate_design(sk.Brewer2(), mos_frame)
        assert len(dist) == 6
        for ids, prob in dist:
            assert prob == pytest.approx(expected[ids], abs=1e-15)

    def test_bernoulli_support(self):
        frame = sk.Frame(ids=("a", "b", "c"))
        dist = sk.enumerate_design(sk.Bernoulli(0.5), frame)
        assert len(dist) == 8
        assert support_probs_sum_to_one(dist)

    def test_support_cap(self, farm_frame):
        with pytest.raises(SupportTooLargeError):
            sk.enumerate_design(sk.SRS(2), farm_frame, cap=3)

    def test_streaming_designs_not_enumerable(self, mos_frame):
        with pytest.raises(Exception):
            sk.enumerate_design(sk.Chao(2), mos_frame)

    def test_every_enumerable_design_is_a_distribution(self, mos_frame, farm_frame):
        designs = [
            (sk.SRS(2), farm_frame),
            (sk.Bernoulli(0.3), farm_frame),
            (sk.Poisson((0.2, 0.4, 0.6, 0.8)), farm_frame),
            (sk.Systematic(2), farm_frame),
            (sk.SystematicPPS(2), mos_frame),
            (sk.Brewer2(), mos_frame),
            (sk.Durbin2(), mos_frame),
            (sk.RejectivePoisson(2, (0.2, 0.4, 0.6, 0.8)), mos_frame),
        ]
        for design, frame in designs:
            dist = sk.enumerate_design(design, frame)
            assert support_probs_sum_to_one(dist), design
            for ids, _ in dist:
                assert set(ids) <= set(frame.ids)


class TestFirstOrder:
    def test_paper_example_design(self):
        frame = sk.Frame(ids=("1", "2", "3"))
        dist = example_design_distribution(frame, {
            ("1", "2"): 0.5, ("1", "3"): 0.25, ("2", "3"): 0.25,
        })
        assert dist.first_order() == pytest.approx([0.75, 0.75, 0.5])

    def test_srs_closed_form(self, farm_frame):
        pips = sk.first_order_pips(sk.SRS(2), farm_frame)
        assert pips.first_order == pytest.approx([0.5] * 4)

    def test_poisson_identity(self, farm_frame):
        given_pi = (0.2, 0.4, 0.6, 0.8)
        pips = sk.first_order_pips(sk.Poisson(given_pi), farm_frame)
        assert pips.first_order == pytest.approx(given_pi)

    def test_enumeration_matches_closed_forms(self, farm_frame, mos_frame):
        cases = [
            (sk.SRS(2), farm_frame),
            (sk.SRS(3), farm_frame),
            (sk.Bernoulli(0.4), farm_frame),
            (sk.Poisson((0.2, 0.4, 0.6, 0.8)), farm_frame),
            (sk.Systematic(2), farm_frame),
            (sk.SystematicPPS(2), mos_frame),
            (sk.Brewer2(), mos_frame),
            (sk.Durbin2(), mos_frame),
        ]
        for design, frame in cases:
            closed = sk.first_order_pips(design, frame).first_order
            enum = sk.enumerate_design(design, frame).first_order()
            assert np.max(np.abs(closed - enum)) < 1e-12, design

    def test_zero_mos_unit_is_named(self):
        frame = sk.Frame(ids=("u", "v", "w"), mos=np.array([0.0, 1.0, 1.0]))
        with pytest.raises(NonProbabilityDesignError, match="'u'"):
            sk.first_order_pips(sk.SystematicPPS(1), frame)

    def test_chao_endpoint_probabilities(self):
        frame = sk.Frame(ids=tuple("abcdef"),
                         mos=np.array([3.0, 1.0, 2.0, 4.0, 1.0, 1.0]))
        pi = sk.first_order_pips(sk.Chao(2), frame).first_order
        total = frame.mos.sum()
        assert pi[2:] == pytest.approx(2 * frame.mos[2:] / total)
        assert pi[:2] == pytest.approx([frame.mos[:2].sum() / total] * 2)
        assert pi.sum() == pytest.approx(2.0)


class TestJoint:
    def test_srs_joint_closed_form(self, farm_frame):
        jp = sk.joint_pips(sk.SRS(2), farm_frame)
        off = jp.joint[~np.eye(4, dtype=bool)]
        assert off == pytest.approx([1 / 6] * 12)
        assert np.diag(jp.joint) == pytest.approx(jp.first_order)

    def test_poisson_joint_independence(self, farm_frame):
        pi = (0.2, 0.4, 0.6, 0.8)
        jp = sk.joint_pips(sk.Poisson(pi), farm_frame)
        expected = np.outer(pi, pi)
        np.fill_diagonal(expected, pi)
        assert np.allclose(jp.joint, expected)

    def test_brewer_joint_matches_enumeration(self, mos_frame):
        jp = sk.joint_pips(sk.Brewer2(), mos_frame)
        enum = sk.enumerate_design(sk.Brewer2(), mos_frame).joint()
        assert np.max(np.abs(jp.joint - enum)) < 1e-12

    def test_systematic_flagged_not_measurable(self, farm_frame):
        jp = sk.joint_pips(sk.Systematic(2), farm_frame)
        assert not jp.measurable
        assert np.any(jp.joint == 0.0)

    def test_fixed_size_lemma(self, mos_frame, farm_frame):
        # sum_i pi_i = n and sum_j pi_ij = n pi_i for fixed-size designs
        for design, frame, n in [
            (sk.SRS(2), farm_frame, 2),
            (sk.Brewer2(), mos_frame, 2),
            (sk.Durbin2(), mos_frame, 2),
            (sk.SystematicPPS(2), mos_frame, 2),
            (sk.RejectivePoisson(2, (0.2, 0.4, 0.6, 0.8)), mos_frame, 2),
        ]:
            jp = sk.joint_pips(design, frame)
            assert jp.first_order.sum() == pytest.approx(n, abs=1e-10)
            assert jp.joint.sum(axis=1) == pytest.approx(n * jp.first_order, abs=1e-10)

    def test_joint_bounded_by_marginals(self, mos_frame):
        jp = sk.joint_pips(sk.Brewer2(), mos_frame)
        bound = np.minimum.outer(jp.first_order, jp.first_order)
        assert np.all(jp.joint <= bound + 1e-12)


class TestComputePips:
    def test_equal_mos(self):
        assert sk.compute_pips([1, 1, 1, 1], 2) == pytest.approx([0.5] * 4)

    def test_paper_mos_frame(self):
        assert sk.compute_pips([10, 20, 30, 40], 2) == pytest.approx([0.2, 0.4, 0.6, 0.8])

    def test_one_capping_round(self):
        assert sk.compute_pips([1, 1, 8], 2) == pytest.approx([0.5, 0.5, 1.0])

    def test_too_few_positive(self):
        with pytest.raises(ValueError):
            sk.compute_pips([0.0, 0.0, 1.0], 2)

    @given(st.lists(st.floats(0.1, 50), min_size=3, max_size=10),
           st.integers(1, 3))
    @settings(max_examples=50, deadline=None)
    def test_sums_to_n_and_bounded(self, mos, n):
        pi = sk.compute_pips(mos, n)
        assert pi.sum() == pytest.approx(n, abs=1e-9)
        assert np.all(pi <= 1 + 1e-12) and np.all(pi > 0)


class TestRejective:
    def test_conditional_marginals_via_enumeration(self):
        work = np.array([0.15, 0.3, 0.55, 0.7, 0.2])
        dp = sk.conditional_poisson_pips(work, 3)
        frame = sk.Frame(ids=tuple("abcde"))
        dist = sk.enumerate_design(sk.RejectivePoisson(3, tuple(work)), frame)
        assert np.max(np.abs(dp - dist.first_order())) < 1e-12

    def test_working_prob_calibration(self):
        target = sk.compute_pips([5, 10, 15, 20, 25], 2)
        work = sk.calibrate_rejective_working_probs(target, 2, tol=1e-8)
        achieved = sk.conditional_poisson_pips(work, 2)
        assert np.max(np.abs(achieved - target)) < 1e-8


class TestFrameCSV:
    def test_round_trip(self, tmp_path):
        text = "id,mos,stratum,y,x1,x2\nu1,2.5,a,1.0,0.1,0.2\nu2,3.5,b,2.0,0.3,0.4\n"
        path = tmp_path / "frame.csv"
        path.write_text(text, encoding="utf-8")
        frame = sk.read_frame_csv(str(path))
        assert frame.ids == ("u1", "u2")
        assert frame.mos == pytest.approx([2.5, 3.5])
        assert frame.stratum == ("a", "b")
        assert frame.aux.shape == (2, 2)

    def test_bad_row_reports_line(self):
        with pytest.raises(Exception, match="row 3"):
            sk.read_frame_csv("id,y\nu1,1.0\nu2,oops\n")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(Exception, match="unique"):
            sk.Frame(ids=("a", "a"))

    def test_cluster_must_nest_in_stratum(self):
        with pytest.raises(Exception, match="spans"):
            sk.Frame(ids=("1", "2"), stratum=("s1", "s2"), cluster=("c", "c"))
