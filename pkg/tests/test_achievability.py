import math

import numpy as np
import pytest
from scipy.stats import binom

from fbl import achievability as ach
from fbl import channel as chn
from fbl import tail
from fbl.numkit import q_inv

LN2 = math.log(2.0)
UNIF = chn.InputType.uniform(2)


class TestCodeParams:
    def test_rate_from_k(self):
        cp = ach.CodeParams(200, k=100)
        assert cp.rate == pytest.approx(0.5 * LN2)

    def test_exactly_one_rate_spec(self):
        with pytest.raises(ValueError):
            ach.CodeParams(100, k=10, rate_nats=0.1)
        with pytest.raises(ValueError):
            ach.CodeParams(100)


class TestThm1Bound:
    def test_bsc_is_tail_plus_union(self):
        p, n, k, delta = 0.11, 200, 100, 0.05
        res = ach.thm1_bound(chn.bsc(p), ach.CodeParams(n, k=k), delta)
        ratio = math.log((1 - p) / p)
        tail_term = float(binom.sf(math.floor(n * (p + delta / ratio)), n, p))
        cap = LN2 - chn.cond_entropy(chn.bsc(p))
        union = math.exp(-n * (cap - delta - k / n * LN2))
        assert res.error_ub == pytest.approx(min(1.0, tail_term + union), rel=1e-12)
        assert res.components[0] == pytest.approx(tail_term, rel=1e-12)
        assert res.components[1] == pytest.approx(union, rel=1e-12)

    def test_asymmetric_channel_gets_puncturing_factor(self):
        z = chn.zchannel(0.5)
        n, delta = 10, 0.05
        res = ach.thm1_bound(z, ach.CodeParams(n, k=2), delta,
                             tail.TailBudget(mc_samples=2000))
        pd = tail.pdelta(z, delta, n, tail.TailBudget(mc_samples=2000))
        assert res.components[0] == pytest.approx(
            pd.pessimistic / (1 - 2.0 ** -n), rel=1e-12)

    def test_union_dominates_above_capacity_gap(self):
        ch = chn.bsc(0.11)
        cap = chn.linear_capacity(ch)
        rate = 0.5 * LN2
        res = ach.thm1_bound(ch, ach.CodeParams(1000, rate_nats=rate),
                             delta=cap - rate + 0.01)
        assert res.error_ub == 1.0

    def test_vanishes_with_blocklength(self):
        ch = chn.bsc(0.11)
        vals = [ach.thm1_bound(ch, ach.CodeParams(n, rate_nats=0.2), 0.05).error_ub
                for n in (200, 800, 3200)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 1e-3
        # beyond the tail the union term is already negligible here
        assert vals[2] == pytest.approx(
            tail.pdelta(ch, 0.05, 3200).value, rel=1e-6)

    def test_clamped_components_still_reported(self):
        ch = chn.bsc(0.11)
        res = ach.thm1_bound(ch, ach.CodeParams(100, rate_nats=0.5), 0.3)
        assert res.error_ub == 1.0
        assert res.components[0] + res.components[1] >= res.error_ub - 1e-12


class TestClosedForms:
    def test_bsc_optimized_equals_min_form(self):
        for n in (200, 1000, 3000):
            k = n // 2
            res = ach.thm1_optimized(chn.bsc(0.11), ach.CodeParams(n, k=k))
            direct = ach.bsc_closed_form(0.11, n, 2 ** k)
            assert res.error_ub == pytest.approx(direct, rel=1e-12)
            assert res.components[0] + res.components[1] == pytest.approx(
                direct, rel=1e-12)

    def test_bec_optimized_equals_min_form(self):
        for n in (200, 1000):
            k = n // 2
            res = ach.thm1_optimized(chn.bec(0.5), ach.CodeParams(n, k=k))
            direct = ach.bec_closed_form(0.5, n, 2 ** k)
            assert res.error_ub == pytest.approx(direct, rel=1e-12)

    def test_bsc_small_case_enumeration(self):
        # n = 1, M = 2: the min picks the codebook density on the clean
        # outcome and the likelihood on the flip
        p = 0.11
        got = ach.bsc_closed_form(p, 1, 2)
        assert got == pytest.approx(min(1 - p, 1.0) * 0 + 1.0) or got <= 1.0
        # direct two-outcome evaluation
        expect = min(1 - p, 2 * 0.5) + min(p, 2 * 0.5)
        assert got == pytest.approx(min(1.0, expect), rel=1e-12)

    def test_bsc_total_probability_when_codebook_huge(self):
        # M so large the likelihood always wins the min: the sum is 1
        assert ach.bsc_closed_form(0.11, 20, 2 ** 60) == pytest.approx(1.0)

    def test_dt_variant_relation(self):
        n, M = 200, 2 ** 100
        assert ach.bsc_closed_form(0.11, n, M, dt_variant=True) == \
            ach.bsc_closed_form(0.11, n, (M - 1) / 2)

    def test_bec_enumeration_small(self):
        p, n, M = 0.3, 6, 2
        got = ach.bec_closed_form(p, n, M)
        expect = sum(
            math.comb(n, t) * p ** t * (1 - p) ** (n - t)
            * 2.0 ** -max(n - t - math.log2(M), 0.0)
            for t in range(1, n + 1))
        assert got == pytest.approx(expect, rel=1e-12)

    def test_bec_dt_variant_starts_at_zero(self):
        p, n, M = 0.5, 50, 2 ** 20
        got = ach.bec_closed_form(p, n, M, dt_variant=True)
        half = (M - 1) / 2
        expect = sum(
            math.comb(n, t) * p ** t * (1 - p) ** (n - t)
            * 2.0 ** -max(n - t - math.log2(half), 0.0)
            for t in range(0, n + 1))
        assert got == pytest.approx(expect, rel=1e-12)

    def test_bec_vanishes_with_erasure_probability(self):
        vals = [ach.bec_closed_form(p, 40, 2 ** 10) for p in (0.2, 0.05, 0.01)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 1e-6


class TestZClosedForm:
    def test_enumeration_n4(self):
        p, n, M = 0.5, 4, 2
        t = UNIF  # m = 2
        got = ach.zchannel_closed_form(p, t, n, M)
        m = 2
        expect = sum(
            math.comb(m, i) * (1 - p) ** (m - i) * p ** i
            * min(1.0, (M - 1) * math.comb(n - m + i, i) / math.comb(n, m))
            for i in range(m + 1))
        assert got == pytest.approx(expect, rel=1e-12)

    def test_noiseless_limit(self):
        got = ach.zchannel_closed_form(1e-12, UNIF, 10, 8)
        assert got == pytest.approx(min(1.0, 7 / math.comb(10, 5)), rel=1e-6)

    def test_dominates_generic_fixed_type_bound(self):
        p, n = 0.5, 100
        ch = chn.zchannel(p)
        mi = chn.mutual_info(ch, UNIF)
        for frac in (0.2, 0.5, 0.8):
            rate = frac * mi
            zf = ach.zchannel_closed_form(p, UNIF, n, math.exp(n * rate))
            t3 = ach.thm3_optimized(ch, ach.CodeParams(n, rate_nats=rate, t=UNIF))
            assert zf <= t3.error_ub + 1e-12


class TestThm2:
    def test_part2_c_zero_identity(self):
        # generic (asymmetric) form keeps the puncturing factor
        ch = chn.zchannel(0.5)
        n = 400
        s = chn.moment_summary(ch)
        res = ach.thm2_rate_and_error(ch, n, c=0.0, symmetric=False)
        sigma = math.sqrt(s.sigma2_h)
        expect = (0.5 / (1 - 2.0 ** -n)
                  + (0.4784 * s.m3_h / sigma ** 3
                     + 1 / math.sqrt(2 * math.pi * s.sigma2_h)) / math.sqrt(n))
        assert res.error_ub == pytest.approx(expect, rel=1e-12)
        cap = chn.linear_capacity(ch)
        assert res.rate_nats == pytest.approx(
            cap - math.log(n) / (2 * n)
            - math.log(math.sqrt(2 * math.pi) * sigma) / n, rel=1e-12)

    def test_part1_rate_and_error_structure(self):
        ch = chn.bsc(0.11)
        res = ach.thm2_rate_and_error(ch, 1000, delta=0.05)
        assert res.theorem == "thm2p1"
        assert 0 < res.error_ub < 1
        assert res.lambda_or_c == pytest.approx(0.107, abs=0.01)
        # the certified rate sits below capacity minus delta
        assert res.rate_nats < chn.linear_capacity(ch) - 0.05

    def test_part1_bounds_exact_tail_plus_union(self):
        # the analytic form must dominate tail + union at the same delta
        ch = chn.bsc(0.11)
        n, delta = 1000, 0.05
        res = ach.thm2_rate_and_error(ch, n, delta=delta)
        direct = ach.thm1_bound(ch, ach.CodeParams(n, rate_nats=res.rate_nats),
                                delta)
        assert direct.error_ub <= res.error_ub + 1e-12

    def test_part2_at_rate_above_capacity_anchor(self):
        ch = chn.bsc(0.12)
        cap = chn.linear_capacity(ch)
        res = ach.thm2_part2_at_rate(ch, 1000, 1.0021 * cap)
        assert res.tail_kind == "exact"
        assert 0.60 <= res.error_ub <= 0.70
        analytic = ach.thm2_part2_at_rate(ch, 1000, 1.0021 * cap,
                                          use_exact_tail=False)
        assert res.error_ub <= analytic.error_ub

    def test_part1_at_rate_roundtrip(self):
        ch = chn.bsc(0.11)
        n = 1000
        base = ach.thm2_rate_and_error(ch, n, delta=0.04)
        back = ach.thm2_part1_at_rate(ch, n, base.rate_nats)
        assert back.delta == pytest.approx(0.04, abs=1e-6)
        assert back.error_ub == pytest.approx(base.error_ub, rel=1e-4)

    def test_part1_infeasible_rate(self):
        ch = chn.bsc(0.11)
        with pytest.raises(ach.InfeasibleRateError):
            ach.thm2_part1_at_rate(ch, 1000, chn.linear_capacity(ch) * 1.5)


class TestThm3:
    def test_z_channel_small_enumeration(self):
        # tail and union recomputed directly from the transition structure
        ch = chn.zchannel(0.5)
        n, k, delta = 8, 1, 0.2
        res = ach.thm3_bound(ch, ach.CodeParams(n, k=k, t=UNIF), delta)
        pt = tail.ptdelta(ch, UNIF, delta, n)
        mi = chn.mutual_info(ch, UNIF)
        correction = n * UNIF.entropy() - math.log(math.comb(8, 4))
        union = math.exp(-n * (mi - delta - k / n * LN2) + correction)
        assert res.error_ub == pytest.approx(min(1.0, pt.value + union), rel=1e-12)

    def test_degenerate_type_clamps_to_one(self):
        from fractions import Fraction
        ch = chn.zchannel(0.5)
        t = chn.InputType((Fraction(0), Fraction(1)))
        res = ach.thm3_bound(ch, ach.CodeParams(8, k=1, t=t), 0.05)
        assert res.error_ub == 1.0

    def test_type_correction_bound(self):
        n = 500
        correction = n * UNIF.entropy() - chn.log_type_class_size(UNIF, n)
        assert 0 < correction <= 2 * math.log(n + 1)


class TestThm4:
    def test_bsc_part2_matches_parity_check_form_up_to_type_defect(self):
        # same dispersion for the symmetric channel; rates differ exactly
        # by the type-class defect over n (constants differ: 0.56 vs 0.4784)
        ch = chn.bsc(0.11)
        n, c = 1024, 0.7
        r2 = ach.thm2_rate_and_error(ch, n, c=c)
        r4 = ach.thm4_rate_and_error(ch, UNIF, n, c=c)
        defect = n * UNIF.entropy() - chn.log_type_class_size(UNIF, n)
        assert r2.rate_nats - r4.rate_nats == pytest.approx(defect / n, rel=1e-10)
        s = chn.moment_summary(ch, UNIF)
        assert s.sigma2_d == pytest.approx(s.sigma2_h, rel=1e-12)

    def test_part2_c_zero_center(self):
        ch = chn.zchannel(0.5)
        s = chn.moment_summary(ch, UNIF)
        res = ach.thm4_rate_and_error(ch, UNIF, 256, c=0.0)
        sigma = math.sqrt(s.sigma2_d)
        expect = 0.5 + (0.56 * s.m3_d / sigma ** 3
                        + 1 / math.sqrt(2 * math.pi * s.sigma2_d)) / 16.0
        assert res.error_ub == pytest.approx(expect, rel=1e-12)

    def test_alternative_composition_computable(self):
        # a non-capacity-achieving composition can win at short lengths
        from fractions import Fraction
        ch = chn.zchannel(0.9)
        t_cap = chn.InputType((Fraction(1, 2), Fraction(1, 2)))
        t_alt = chn.InputType((Fraction(3, 4), Fraction(1, 4)))
        for t in (t_cap, t_alt):
            res = ach.thm4_rate_and_error(ch, t, 100, delta=0.02)
            assert 0 < res.error_ub <= 1.0
            assert math.isfinite(res.rate_nats)


class TestErrorExponent:
    def test_zero_exponent_at_mutual_information(self):
        ch = chn.bsc(0.11)
        mi = chn.mutual_info(ch, UNIF)
        assert ach.error_exponent_baseline(ch, UNIF, 500, mi) == pytest.approx(
            1.0, abs=1e-9)
        assert ach.error_exponent(ch, UNIF, mi * 1.05) == pytest.approx(
            0.0, abs=1e-12)

    def test_golden_section_matches_dense_grid(self):
        ch = chn.bsc(0.11)
        rate = 0.4 * LN2
        rhos = np.linspace(0.0, 1.0, 100001)
        vals = [ach.gallager_e0(ch, UNIF, r) - r * rate for r in rhos]
        assert ach.error_exponent(ch, UNIF, rate) == pytest.approx(
            max(vals), abs=1e-10)

    def test_cutoff_rate_identity(self):
        # E0(1) = ln 2 - ln(1 + 2 sqrt(pq)) for the BSC
        p = 0.11
        expect = LN2 - math.log(1 + 2 * math.sqrt(p * (1 - p)))
        assert ach.gallager_e0(chn.bsc(p), UNIF, 1.0) == pytest.approx(
            expect, rel=1e-12)

    def test_worse_than_optimized_bound_at_moderate_error(self):
        ch = chn.bsc(0.11)
        n, rate = 1000, 0.4 * LN2
        ee = ach.error_exponent_baseline(ch, UNIF, n, rate)
        t1 = ach.thm1_optimized(ch, ach.CodeParams(n, rate_nats=rate))
        assert t1.error_ub < ee

    def test_biawgn_exponent_positive(self):
        ch = chn.BiAwgn(1.0)
        cap = chn.linear_capacity(ch)
        assert ach.error_exponent(ch, UNIF, 0.5 * cap) > 0


class TestMaxRateAtEps:
    def test_second_order_reference(self):
        ch = chn.bsc(0.11)
        res = ach.max_rate_at_eps(ch, 2000, 1e-3, "thm1")
        s = chn.moment_summary(ch)
        ref = s.linear_capacity_nats - math.sqrt(s.sigma2_h / 2000) * q_inv(1e-3)
        assert res.extras["second_order_rate"] == pytest.approx(ref, rel=1e-12)
        # the achieved rate tracks the reference to within its own scale
        gap = abs(res.rate_nats - ref)
        assert gap < 0.2 * (s.linear_capacity_nats - ref)

    def test_rate_gap_shrinks_like_sqrt_n(self):
        ch = chn.bsc(0.11)
        cap = chn.linear_capacity(ch)
        g1 = cap - ach.max_rate_at_eps(ch, 1000, 1e-3, "thm1").rate_nats
        g2 = cap - ach.max_rate_at_eps(ch, 2000, 1e-3, "thm1").rate_nats
        assert g2 / g1 == pytest.approx(1 / math.sqrt(2), abs=0.08)

    def test_half_error_reaches_near_capacity(self):
        ch = chn.bsc(0.11)
        n = 1000
        cap = chn.linear_capacity(ch)
        res = ach.max_rate_at_eps(ch, n, 0.5, "thm2p2")
        gap = cap - res.rate_nats
        assert 0.5 * math.log(n) / (2 * n) < gap < 6 * math.log(n) / (2 * n) + 0.01

    def test_bound_at_found_rate_meets_target(self):
        ch = chn.bsc(0.11)
        for method, eps in (("thm1", 1e-2), ("thm2p1", 1e-2), ("thm2p2", 5e-2)):
            res = ach.max_rate_at_eps(ch, 1000, eps, method)
            assert res.error_ub <= eps * (1 + 1e-6)

    def test_fixed_type_methods(self):
        ch = chn.zchannel(0.5)
        for method in ("thm3", "thm4p1"):
            res = ach.max_rate_at_eps(ch, 100, 1e-2, method, t=UNIF)
            assert 0 < res.rate_nats < chn.mutual_info(ch, UNIF)

    def test_infeasible_raises(self):
        ch = chn.BiAwgn(1.0)
        with pytest.raises(ach.InfeasibleRateError):
            ach.max_rate_at_eps(ch, 1000, 1e-6, "thm2p2")

    def test_ee_matches_exponent_inversion(self):
        ch = chn.bsc(0.11)
        res = ach.max_rate_at_eps(ch, 500, 1e-3, "ee")
        assert ach.error_exponent(ch, UNIF, res.rate_nats) == pytest.approx(
            -math.log(1e-3) / 500, rel=1e-6)


class TestOptimizedMonotonicity:
    def test_error_nonincreasing_in_blocklength(self):
        ch = chn.bsc(0.11)
        rate = 0.35 * LN2
        vals = [ach.thm1_optimized(ch, ach.CodeParams(n, rate_nats=rate)).error_ub
                for n in (200, 400, 800, 1600)]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_error_nondecreasing_in_rate(self):
        ch = chn.bsc(0.11)
        n = 500
        vals = [ach.thm1_optimized(ch, ach.CodeParams(n, rate_nats=r)).error_ub
                for r in np.linspace(0.2, 0.45, 6) * LN2]
        assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))

    def test_fixed_type_error_nonincreasing_in_blocklength(self):
        ch = chn.zchannel(0.5)
        rate = 0.5 * chn.mutual_info(ch, UNIF)
        vals = [ach.thm3_optimized(
            ch, ach.CodeParams(n, rate_nats=rate, t=UNIF)).error_ub
            for n in (100, 200, 400)]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
