import itertools
import math
from collections import Counter

import numpy as np
import pytest

import surveykit as sk
from surveykit.design import RngStream

R_SMALL = 20_000


def empirical_first_order(design, frame, R, seed=11):
    counts = np.zeros(frame.n_units)
    base = RngStream(seed)
    for r in range(R):
        s = sk.select(design, frame, base.substream(r))
        counts[np.unique(s.idx)] += 1
    return counts / R


def mc_band(p, R, k=3):
    return k * math.sqrt(max(p * (1 - p), 1e-12) / R)


class TestDeterminism:
    @pytest.mark.parametrize("design", [
        sk.SRS(2, "draw_by_draw"), sk.SRS(2, "selection_rejection"),
        sk.SRS(2, "reservoir"), sk.SRS(2, "random_sort"), sk.SRSWR(3),
        sk.Bernoulli(0.5), sk.Systematic(2), sk.SystematicPPS(2),
        sk.PPSWR(3, "cumulative"), sk.PPSWR(3, "lahiri"), sk.Brewer2(),
        sk.Durbin2(), sk.Chao(2), sk.RejectivePoisson(2, (0.2, 0.4, 0.6, 0.8)),
    ])
    def test_same_seed_same_sample(self, design, mos_frame):
        a = sk.select(design, mos_frame, RngStream(99, 5))
        b = sk.select(design, mos_frame, RngStream(99, 5))
        assert np.array_equal(a.idx, b.idx)
        assert np.array_equal(a.multiplicity, b.multiplicity)

    def test_distinct_streams_differ(self, mos_frame):
        draws = {tuple(sk.select(sk.SRS(2), mos_frame, RngStream(7, s)).idx)
                 for s in range(40)}
        assert len(draws) > 1


class TestSRS:
    def test_census_returns_frame_order(self, farm_frame):
        for method in ("draw_by_draw", "selection_rejection", "reservoir",
                       "random_sort"):
            s = sk.select_srs(farm_frame, 4, method, RngStream(3))
            assert s.ids == farm_frame.ids
            assert np.all(s.pi == 1.0)

    def test_size_errors(self, farm_frame):
        with pytest.raises(ValueError):
            sk.select_srs(farm_frame, 5, rng=RngStream(0))
        with pytest.raises(ValueError):
            sk.select_srs(farm_frame, 0, rng=RngStream(0))

    @pytest.mark.parametrize("method", ["draw_by_draw", "selection_rejection",
                                        "reservoir", "random_sort"])
    def test_empirical_inclusion_and_set_frequencies(self, method, farm_frame):
        base = RngStream(17)
        sets = Counter()
        for r in range(R_SMALL):
            s = sk.select_srs(farm_frame, 2, method, base.substream(r))
            sets[s.ids] += 1
        # set frequencies uniform at 1/6
        band = mc_band(1 / 6, R_SMALL)
        for combo in itertools.combinations(farm_frame.ids, 2):
            assert abs(sets[combo] / R_SMALL - 1 / 6) < band
        # inclusion frequencies at n/N = 1/2
        incl = np.zeros(4)
        for ids, cnt in sets.items():
            for u in ids:
                incl[farm_frame.index_of(u)] += cnt
        band = mc_band(0.5, R_SMALL)
        assert np.all(np.abs(incl / R_SMALL - 0.5) < band)

    def test_reservoir_stream_prefix_property(self):
        # stopping early still yields an SRS of the prefix
        base = RngStream(23)
        hits = Counter()
        for r in range(R_SMALL):
            rng = base.substream(r)
            got = sk.reservoir_stream(iter(range(10)), 3, rng)
            hits.update(got)
        band = mc_band(0.3, R_SMALL)
        for v in range(10):
            assert abs(hits[v] / R_SMALL - 0.3) < band


class TestSRSWR:
    def test_single_unit_frame(self):
        frame = sk.Frame(ids=("only",))
        s = sk.select_srswr(frame, 5, RngStream(1))
        assert s.n == 5 and s.ids == ("only",)

    def test_appearance_probability(self, farm_frame):
        # P(unit appears at least once) = 1 - (1 - 1/N)^n
        base = RngStream(29)
        hits = np.zeros(4)
        n = 2
        for r in range(R_SMALL):
            s = sk.select_srswr(farm_frame, n, base.substream(r))
            hits[s.idx] += 1
        target = 1 - (1 - 1 / 4) ** n
        band = mc_band(target, R_SMALL)
        assert np.all(np.abs(hits / R_SMALL - target) < band)

    def test_mean_of_draws_unbiased(self, farm_frame):
        base = RngStream(31)
        acc = 0.0
        for r in range(R_SMALL):
            s = sk.select_srswr(farm_frame, 2, base.substream(r))
            acc += np.sum(s.multiplicity * s.y_values()) / s.n
        se = math.sqrt(np.var(farm_frame.y) / 2 / R_SMALL)
        assert abs(acc / R_SMALL - 6.0) < 4 * se


class TestPoissonBernoulli:
    def test_pi_one_census(self, farm_frame):
        s = sk.select_bernoulli(farm_frame, 1.0, RngStream(5))
        assert s.ids == farm_frame.ids

    def test_bad_pi(self, farm_frame):
        with pytest.raises(ValueError):
            sk.select_bernoulli(farm_frame, 0.0, RngStream(5))
        with pytest.raises(ValueError):
            sk.select_poisson(farm_frame, np.array([0.5, 0.5, 1.2, 0.5]), RngStream(5))

    def test_bernoulli_realized_size_binomial(self):
        frame = sk.Frame(ids=tuple(str(i) for i in range(600)))
        base = RngStream(37)
        R = 2000
        sizes = [sk.select_bernoulli(frame, 1 / 6, base.substream(r)).n
                 for r in range(R)]
        se = math.sqrt(600 * (1 / 6) * (5 / 6) / R)
        assert abs(np.mean(sizes) - 100) < 3 * se

    def test_poisson_empirical_pi(self):
        frame = sk.Frame(ids=("a", "b", "c"))
        pi = np.array([0.2, 0.4, 0.8])
        freq = empirical_first_order(sk.Poisson(tuple(pi)), frame, R_SMALL)
        for j in range(3):
            assert abs(freq[j] - pi[j]) < mc_band(pi[j], R_SMALL)


class TestSystematic:
    def test_known_start_pattern(self):
        # N=20000, interval 100: the sample walks r, r+100, ...
        frame = sk.Frame(ids=tuple(str(i) for i in range(1, 20001)))
        s = sk.select_systematic(frame, 200, RngStream(2))
        idx = s.idx
        assert np.all(np.diff(idx) == 100)
        assert idx.size == 200

    def test_interval_one_census(self, farm_frame):
        s = sk.select_systematic(farm_frame, 3, RngStream(4))
        # G = floor(4/3) = 1: census
        assert s.ids == farm_frame.ids

    def test_enumerated_sizes_and_expected_n(self):
        # N=10, n=3: G=3, sizes are 4,3,3 and E(size) = N/G
        frame = sk.Frame(ids=tuple(str(i) for i in range(10)))
        dist = sk.enumerate_design(sk.Systematic(3), frame)
        sizes = sorted(len(ids) for ids, _ in dist)
        assert sizes == [3, 3, 4]
        expected = sum(len(ids) * p for ids, p in dist)
        assert expected == pytest.approx(10 / 3)


class TestPPSWR:
    def test_single_positive_mos(self):
        frame = sk.Frame(ids=("a", "b"), mos=np.array([0.0, 3.0]))
        s = sk.select_pps_wr(frame, frame.mos, 3, "cumulative", RngStream(8))
        assert s.ids == ("b",) and s.n == 3

    def test_business_draw_probabilities(self, business_frame):
        base = RngStream(41)
        hits = np.zeros(4)
        for r in range(R_SMALL):
            s = sk.select_pps_wr(business_frame, business_frame.mos, 1,
                                 "cumulative", base.substream(r))
            hits[s.idx] += 1
        target = np.array([1, 2, 3, 10]) / 16
        for j in range(4):
            assert abs(hits[j] / R_SMALL - target[j]) < mc_band(target[j], R_SMALL)

    def test_lahiri_matches_cumulative(self, business_frame):
        base = RngStream(43)
        hits = np.zeros(4)
        for r in range(R_SMALL):
            s = sk.select_pps_wr(business_frame, business_frame.mos, 1,
                                 "lahiri", base.substream(r), bound=1001.0)
            hits[s.idx] += 1
        target = np.array([1, 2, 3, 10]) / 16
        for j in range(4):
            assert abs(hits[j] / R_SMALL - target[j]) < mc_band(target[j], R_SMALL)

    def test_lahiri_bound_check(self, business_frame):
        with pytest.raises(ValueError):
            sk.select_pps_wr(business_frame, business_frame.mos, 1, "lahiri",
                             RngStream(1), bound=1000.0)


class TestPips:
    def test_brewer_empirical_marginals_and_joint(self, mos_frame):
        base = RngStream(47)
        pair_counts = Counter()
        for r in range(R_SMALL):
            s = sk.select(sk.Brewer2(), mos_frame, base.substream(r))
            pair_counts[s.ids] += 1
        jp = sk.joint_pips(sk.Brewer2(), mos_frame)
        for (i, j) in itertools.combinations(range(4), 2):
            key = (mos_frame.ids[i], mos_frame.ids[j])
            target = jp.joint[i, j]
            assert abs(pair_counts[key] / R_SMALL - target) < mc_band(target, R_SMALL)

    def test_p_above_half_rejected(self):
        frame = sk.Frame(ids=("a", "b", "c"), mos=np.array([6.0, 1.0, 1.0]))
        with pytest.raises(ValueError, match="1/2"):
            sk.select(sk.Brewer2(), frame, RngStream(1))

    def test_systematic_pips_support_frequencies(self, mos_frame):
        base = RngStream(53)
        sets = Counter()
        for r in range(R_SMALL):
            s = sk.select(sk.SystematicPPS(2), mos_frame, base.substream(r))
            sets[s.ids] += 1
        expect = {("1", "3"): 0.2, ("2", "4"): 0.4, ("3", "4"): 0.4}
        assert set(sets) == set(expect)
        for ids, p in expect.items():
            assert abs(sets[ids] / R_SMALL - p) < mc_band(p, R_SMALL)

    def test_chao_reduces_to_reservoir_marginals(self):
        frame = sk.Frame(ids=tuple(str(i) for i in range(8)))
        freq = empirical_first_order(sk.Chao(2), frame, R_SMALL, seed=59)
        band = mc_band(0.25, R_SMALL)
        assert np.all(np.abs(freq - 2 / 8) < band)

    def test_chao_invariant_by_decision_tree(self):
        # oracle: exhaust the (keep | replace j) decision tree to get exact
        # P(j in A_k) after every arrival, and check n x_j / sum_{i<=k} x_i
        x = np.array([3.0, 1.0, 2.0, 4.0, 1.5, 2.5, 1.0, 3.0])
        n = 2
        for k in range(n + 1, 9):
            probs = np.zeros(k)

            def walk(pos, members, weight):
                if weight <= 0:
                    return
                if pos == k:
                    for m in members:
                        probs[m] += weight
                    return
                total = x[:pos + 1].sum()
                p_take = n * x[pos] / total
                for slot in range(n):
                    nxt = list(members)
                    nxt[slot] = pos
                    walk(pos + 1, nxt, weight * p_take / n)
                walk(pos + 1, members, weight * (1 - p_take))

            walk(n, [0, 1], 1.0)
            total_k = x[:k].sum()
            for j in range(n, k):
                assert probs[j] == pytest.approx(n * x[j] / total_k, abs=1e-12)

    def test_chao_certainty_stream_rejected(self):
        frame = sk.Frame(ids=("a", "b", "c"), mos=np.array([1.0, 1.0, 50.0]))
        with pytest.raises(ValueError, match="certainty"):
            sk.select(sk.Chao(2), frame, RngStream(3))

    def test_chao_stream_matches_array_kernel(self):
        frame = sk.Frame(ids=tuple("abcdefgh"),
                         mos=np.array([3.0, 1.0, 2.0, 4.0, 1.5, 2.5, 1.0, 3.0]))
        for seed in range(25):
            s = sk.select(sk.Chao(2), frame, RngStream(seed))
            streamed = sk.chao_stream(zip(frame.ids, frame.mos), 2,
                                      RngStream(seed))
            assert sorted(streamed) == list(s.ids)

    def test_chao_stream_stop_anytime(self):
        # stopping after k arrivals leaves a valid unequal-probability
        # sample of the prefix: check marginals at k = 5
        x = np.array([1.0, 2.0, 1.5, 3.0, 2.5])
        base = RngStream(61)
        hits = np.zeros(5)
        R = 20_000
        for r in range(R):
            got = sk.chao_stream(zip(range(5), x), 2, base.substream(r))
            for item in got:
                hits[item] += 1
        total = x.sum()
        expect = 2 * x / total
        expect[:2] = x[:2].sum() / total
        band = 3 * np.sqrt(expect * (1 - expect) / R)
        assert np.all(np.abs(hits / R - expect) < band)

    def test_rejective_marginal_flagged_and_correct(self, mos_frame):
        work = (0.2, 0.4, 0.6, 0.8)
        s = sk.select(sk.RejectivePoisson(2, work), mos_frame, RngStream(61))
        assert "pi_is_conditional_marginal" in s.flags
        freq = empirical_first_order(sk.RejectivePoisson(2, work), mos_frame,
                                     R_SMALL, seed=67)
        exact = sk.conditional_poisson_pips(np.array(work), 2)
        for j in range(4):
            assert abs(freq[j] - exact[j]) < mc_band(exact[j], R_SMALL)


class TestStratified:
    @pytest.fixture
    def stratified_frame(self):
        return sk.Frame(ids=tuple("abcd"), stratum=("s1", "s1", "s2", "s2"))

    def test_single_stratum_equals_child(self, farm_frame):
        frame = sk.Frame(ids=farm_frame.ids, mos=farm_frame.mos,
                         stratum=("s",) * 4, y=farm_frame.y)
        a = sk.select_stratified(frame, {"s": sk.SRS(2)}, RngStream(5, 1))
        assert a.n == 2 and np.all(a.pi == 0.5)

    def test_product_support(self, stratified_frame):
        dist = sk.enumerate_design(
            sk.Stratified((("s1", sk.SRS(1)), ("s2", sk.SRS(1)))),
            stratified_frame)
        assert len(dist) == 4
        assert all(p == pytest.approx(0.25) for _, p in dist)

    def test_proportional_is_self_weighting(self):
        frame = sk.Frame(ids=tuple(str(i) for i in range(12)),
                         stratum=tuple("aaabbbcccddd"))
        designs = {s: sk.SRS(1) for s in "abcd"}
        s = sk.select_stratified(frame, designs, RngStream(71))
        assert np.allclose(s.weights, 12 / 4)

    def test_missing_stratum_design(self, stratified_frame):
        with pytest.raises(Exception, match="no design"):
            sk.select_stratified(stratified_frame, {"s1": sk.SRS(1)}, RngStream(1))

    def test_oversized_child(self, stratified_frame):
        with pytest.raises(ValueError):
            sk.select_stratified(stratified_frame,
                                 {"s1": sk.SRS(3), "s2": sk.SRS(1)}, RngStream(1))


class TestClusterAndTwoStage:
    @pytest.fixture
    def clustered_frame(self):
        ids = tuple(f"u{i}" for i in range(9))
        clusters = ("c1",) * 3 + ("c2",) * 3 + ("c3",) * 3
        y = np.arange(9, dtype=float)
        return sk.Frame(ids=ids, cluster=clusters, y=y)

    def test_full_enumeration_equals_one_stage(self, clustered_frame):
        two = sk.select_two_stage(clustered_frame, sk.SRS(2), sk.SRS(3),
                                  RngStream(73))
        one = sk.select_one_stage_cluster(clustered_frame, sk.SRS(2),
                                          RngStream(73))
        assert two.n == 6 and one.n == 6
        assert np.allclose(two.weights, 3 / 2)

    def test_pps_srs_self_weighting(self):
        ids = tuple(f"u{i}" for i in range(10))
        clusters = ("c1",) * 2 + ("c2",) * 3 + ("c3",) * 5
        frame = sk.Frame(ids=ids, cluster=clusters)
        s = sk.select_two_stage(frame, sk.SystematicPPS(2), sk.SRS(2),
                                RngStream(79))
        # pi_ik = (n_I M_i / N)(m / M_i) = n_I m / N -> weights N/(n_I m)
        assert np.allclose(s.weights, 10 / (2 * 2))

    def test_ssu_size_exceeds_cluster(self, clustered_frame):
        with pytest.raises(ValueError):
            sk.select_two_stage(clustered_frame, sk.SRS(2), sk.SRS(4),
                                RngStream(83))

    def test_missing_cluster_labels(self, farm_frame):
        with pytest.raises(ValueError):
            sk.select_two_stage(farm_frame, sk.SRS(1), sk.SRS(1), RngStream(1))


class TestTwoPhase:
    @pytest.fixture
    def aux_frame(self):
        rng = np.random.default_rng(5)
        N = 40
        x = rng.uniform(1, 3, N)
        y = 2 * x + rng.normal(0, 0.2, N)
        return sk.Frame(ids=tuple(str(i) for i in range(N)),
                        aux=x[:, None], y=y)

    def test_keep_all_collapses_to_phase1(self, aux_frame):
        s = sk.select_two_phase(aux_frame, sk.SRS(10), sk.KeepAll(),
                                RngStream(89))
        assert s.n == 10
        assert np.allclose(s.pi, s.phase1.pi)
        assert np.allclose(s.conditional_pi, 1.0)

    def test_stratify_rule_expected_sizes(self):
        frame = sk.Frame(ids=tuple(str(i) for i in range(30)),
                         stratum=("a",) * 15 + ("b",) * 15)
        base = RngStream(97)
        counts = Counter()
        R = 4000
        for r in range(R):
            s = sk.select_two_phase(
                frame, sk.SRS(10),
                sk.StratifyOnAux(column="stratum", rate=0.5),
                base.substream(r))
            counts["n2"] += s.n
        # nu = 1/2 of a phase-1 sample of 10 gives about 5 on average
        assert abs(counts["n2"] / R - 5) < 0.5

    def test_rule_outside_phase1_rejected(self, aux_frame):
        def bad_rule(s1, frame, rng):
            return (np.array([s1.idx.size + 3]), np.array([0.5]), None, None)

        with pytest.raises(ValueError, match="outside"):
            sk.select_two_phase(aux_frame, sk.SRS(5), bad_rule, RngStream(3))

    def test_poisson_phase2_dee_unbiased(self, aux_frame):
        base = RngStream(101)
        total = float(np.sum(aux_frame.y))
        R = 4000
        acc = np.empty(R)
        for r in range(R):
            s = sk.select_two_phase(aux_frame, sk.SRS(20),
                                    sk.PoissonOnAux(r=8, column=0),
                                    base.substream(r))
            acc[r] = float(np.sum(s.weights * s.y_values()))
        se = acc.std(ddof=1) / math.sqrt(R)
        assert abs(acc.mean() - total) < 4 * se
