import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cognoise.design import altruism_grid, number_grid
from cognoise.model import (DeterministicLimitError, IndividualParams, NumberParams,
                            RandomUtilityParams, evidence_weight, indifference_ratio,
                            mean_choice_over_grid, norm_cdf, prior_threshold, prob_A, prob_self,
                            prob_self_linear, prob_self_random_utility)

mpmath.mp.dps = 40


def ref_phi(z):
    return float(mpmath.ncdf(z))


def ref_prob_self(beta, nu_so, nu_b, mu_r, ratio):
    a = mpmath.mpf(1) / (1 + mpmath.mpf(nu_so) ** 2)
    b = mpmath.mpf(beta) / (1 - mpmath.mpf(beta))
    delta = mpmath.mpf(mu_r) ** (-(1 - a))
    z = (a * mpmath.log(ratio) - mpmath.log(b) - mpmath.log(delta)) / mpmath.sqrt(
        (a * nu_so) ** 2 + mpmath.mpf(nu_b) ** 2)
    return float(mpmath.ncdf(z))


params = st.builds(
    IndividualParams,
    beta=st.floats(0.02, 0.98),
    nu_so=st.floats(0.01, 2.0),
    nu_b=st.floats(0.01, 2.0),
    mu_r=st.floats(0.2, 3.0),
)


class TestNormalCdf:
    def test_zero(self):
        assert norm_cdf(0.0) == 0.5

    def test_reference_value(self):
        assert abs(norm_cdf(1.96) - 0.9750021) < 1e-7

    @pytest.mark.parametrize("z", [0.1, 0.5, 1.0, 2.5, 4.0, 7.9])
    def test_symmetry(self, z):
        assert abs(norm_cdf(z) + norm_cdf(-z) - 1.0) < 1e-14

    def test_matches_high_precision(self):
        zs = np.linspace(-8, 8, 161)
        got = norm_cdf(zs)
        ref = np.array([ref_phi(z) for z in zs])
        assert np.max(np.abs(got - ref)) < 1e-12

    def test_clamped_tails(self):
        assert norm_cdf(-60.0) == 1e-300
        assert norm_cdf(60.0) == 1.0 - 1e-16


class TestEvidenceWeight:
    @pytest.mark.parametrize("nu,expected", [(0.313, 0.911), (0.399, 0.862), (0.198, 0.962),
                                             (0.286, 0.924), (0.172, 0.971), (0.255, 0.939)])
    def test_published(self, nu, expected):
        assert abs(evidence_weight(nu, 1.0) - expected) < 1.5e-3

    def test_zero_noise(self):
        assert evidence_weight(0.0, 1.0) == 1.0

    def test_strictly_decreasing(self):
        w = evidence_weight(np.linspace(0.0, 3.0, 100), 1.0)
        assert np.all(np.diff(w) < 0)

    @pytest.mark.parametrize("nu", [-0.1, float("nan"), float("inf")])
    def test_rejects(self, nu):
        with pytest.raises(ValueError):
            evidence_weight(nu, 1.0)


class TestPriorThreshold:
    @pytest.mark.parametrize("mu,a,expected", [(0.515, 0.962, 1.026), (0.515, 0.924, 1.052),
                                               (0.474, 0.971, 1.022), (0.474, 0.939, 1.047)])
    def test_published(self, mu, a, expected):
        assert abs(prior_threshold(mu, a) - expected) < 1.5e-3

    def test_unit_cases(self):
        for a in (0.1, 0.5, 0.7, 1.0):
            assert prior_threshold(1.0, a) == 1.0
        for mu in (0.2, 0.5, 1.7, 9.0):
            assert prior_threshold(mu, 1.0) == 1.0

    def test_above_one_iff_intermediate_prior(self):
        assert prior_threshold(0.5, 0.8) > 1
        assert prior_threshold(1.5, 0.8) < 1

    def test_rejects_nonpositive_mean(self):
        with pytest.raises(ValueError):
            prior_threshold(0.0, 0.5)


class TestProbSelf:
    def test_symmetric_indifference(self):
        p = IndividualParams(0.5, 0.25, 0.25, 1.0)
        assert prob_self(p, 500, 500) == 0.5

    def test_derived_example(self):
        p = IndividualParams(0.3, 0.25, 0.25, 1.0)
        got = prob_self(p, 474, 1000)
        assert abs(got - ref_prob_self(0.3, 0.25, 0.25, 1.0, 0.474)) < 1e-12
        assert abs(got - 0.6633) < 5e-4

    @pytest.mark.parametrize("r", [1.1, 1.3, 1.5, 2.0, 3.0])
    def test_log_symmetry(self, r):
        p = IndividualParams(0.5, 0.4, 0.3, 1.0)
        assert abs(prob_self(p, r * 1000, 1000) + prob_self(p, 1000 / r, 1000) - 1) < 1e-12

    def test_self_zero_is_zero(self):
        assert prob_self(IndividualParams(0.3, 0.2, 0.2, 1.0), 0, 655) == 0.0

    def test_both_noises_zero(self):
        with pytest.raises(DeterministicLimitError):
            prob_self(IndividualParams(0.3, 0.0, 0.0, 1.0), 300, 655)

    def test_other_must_be_positive(self):
        with pytest.raises(ValueError):
            prob_self(IndividualParams(0.3, 0.2, 0.2, 1.0), 300, 0)

    @settings(max_examples=60, deadline=None)
    @given(params)
    def test_monotone(self, p):
        s = np.linspace(10, 3000, 50)
        inc = prob_self(p, s, 1000)
        dec = prob_self(p, 1000, s)
        assert np.all(np.diff(inc) >= 0) and np.all(np.diff(dec) <= 0)
        # strict check across the indifference ratio; a one-sided range can saturate in float64
        r = indifference_ratio(p)
        lo, hi = prob_self(p, np.array([r / 4, 4 * r]) * 1000, 1000)
        assert hi > lo
        lo, hi = prob_self(p, 1000, np.array([4 / r, 1 / (4 * r)]) * 1000)
        assert hi > lo

    @settings(max_examples=60, deadline=None)
    @given(params, st.floats(0.05, 5.0))
    def test_matches_reference(self, p, r):
        ref = ref_prob_self(p.beta, p.nu_so, p.nu_b, p.mu_r, r)
        if 1e-280 < ref < 1 - 1e-15:
            assert abs(prob_self(p, r * 1000, 1000) - ref) < 1e-12


class TestIndifferenceRatio:
    @settings(max_examples=100, deadline=None)
    @given(params)
    def test_half_at_ratio(self, p):
        r = indifference_ratio(p)
        assert abs(prob_self(p, r * 1000.0, 1000.0) - 0.5) < 1e-12

    def test_closed_form(self):
        p = IndividualParams(0.3, 0.25, 0.25, 1.0)
        expected = (0.3 / 0.7) ** (1 / (1 / (1 + 0.25 ** 2)))
        assert abs(indifference_ratio(p) - expected) < 1e-14
        assert abs(prob_self(p, expected, 1.0) - 0.5) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(params)
    def test_invariant_to_preference_noise(self, p):
        vals = {indifference_ratio(IndividualParams(p.beta, p.nu_so, nb, p.mu_r))
                for nb in (0.01, 0.25, 1.0, 4.0)}
        assert len(vals) == 1

    def test_trivial(self):
        assert indifference_ratio(IndividualParams(0.5, 0.3, 0.3, 1.0)) == 1.0


class TestNumberRule:
    def test_half_at_half(self):
        for nu in (0.05, 0.3, 1.0):
            assert abs(prob_A(NumberParams(nu, 1.0), 500, 1000) - 0.5) < 1e-15

    def test_derived_example(self):
        a, d, nu = 0.962, 1.026, 0.198
        z = (a * math.log(0.6) - math.log(0.5) - math.log(d)) / (a * nu)
        assert abs(ref_phi(z) - 0.8223) < 1e-4
        assert abs(prob_A(NumberParams(nu, 0.515), 600, 1000) - ref_phi(z)) < 1e-3

    def test_exact_against_reference(self):
        nu, mu = 0.198, 0.515
        a = 1 / (1 + nu ** 2)
        d = mu ** (-(1 - a))
        z = (a * math.log(0.6) - math.log(0.5) - math.log(d)) / (a * nu)
        assert abs(prob_A(NumberParams(nu, mu), 600, 1000) - ref_phi(z)) < 1e-12

    def test_step_limit(self):
        p = NumberParams(1e-4, 1.0)
        assert prob_A(p, 600, 1000) > 1 - 1e-12
        assert prob_A(p, 400, 1000) < 1e-12

    def test_rejects(self):
        with pytest.raises(ValueError):
            prob_A(NumberParams(0.2, 1.0), 0, 1000)
        with pytest.raises(ValueError):
            prob_A(NumberParams(0.2, 1.0), 100, 0)
        with pytest.raises(ValueError):
            NumberParams(0.2, 1.0, threshold=0.4)

    def test_increasing(self):
        a = np.linspace(50, 2000, 40)
        assert np.all(np.diff(prob_A(NumberParams(0.3, 0.7), a, 1000)) > 0)


class TestRandomUtility:
    def test_equal(self):
        assert prob_self_random_utility(RandomUtilityParams(0.5, 2.0), 3.0, 3.0) == 0.5

    def test_derived(self):
        got = prob_self_random_utility(RandomUtilityParams(0.3, 1.0), 2.0, 3.0)
        assert abs(got - 1 / (1 + math.exp(-(0.7 * 2 - 0.3 * 3)))) < 1e-15
        assert abs(got - 0.6225) < 1e-4

    def test_pure_noise_limit(self):
        assert abs(prob_self_random_utility(RandomUtilityParams(0.3, 1e-12), 5.0, 1.0) - 0.5) < 1e-9

    def test_no_overflow(self):
        p = prob_self_random_utility(RandomUtilityParams(0.3, 1e4), np.array([1e3, 0.0]), np.array([0.0, 1e3]))
        assert np.all(np.isfinite(p)) and p[0] == 1.0 and p[1] == 0.0

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            prob_self_random_utility(RandomUtilityParams(0.3, 1.0), float("nan"), 1.0)


class TestLinear:
    def test_delta_zero(self):
        p = IndividualParams(0.375, 0.0, 0.3, 1.0)
        # alpha = 1, mu_r = 1: delta = 0, indifference at self/other = b = 0.6
        assert abs(prob_self_linear(p, 600, 1000) - 0.5) < 1e-15

    def test_delta_substitution(self):
        # alpha = 0.9, mu_r = 1: delta = 0.1
        nu = math.sqrt(1 / 0.9 - 1)
        p = IndividualParams(0.3, nu, 0.25, 1.0)
        a = 0.9
        z = (a * 0.6 - 0.3 / 0.7 - 0.1) / math.sqrt((nu * a) ** 2 + 0.25 ** 2)
        assert abs(prob_self_linear(p, 600, 1000) - ref_phi(z)) < 1e-12

    def test_derived(self):
        p = IndividualParams(0.3, 0.25, 0.25, 1.0)
        a = mpmath.mpf(1) / (1 + mpmath.mpf(0.25) ** 2)
        z = (a * mpmath.mpf(0.6) - mpmath.mpf(0.3) / mpmath.mpf(0.7) - (1 - a)) / mpmath.sqrt(
            (a * mpmath.mpf(0.25)) ** 2 + mpmath.mpf(0.25) ** 2)
        assert abs(prob_self_linear(p, 600, 1000) - float(mpmath.ncdf(z))) < 1e-12


class TestGridAverage:
    def test_single_trial(self):
        p = IndividualParams(0.3, 0.25, 0.25, 1.0)
        assert mean_choice_over_grid(p, [(300, 655)]) == prob_self(p, 300, 655)

    def test_empty(self):
        with pytest.raises(ValueError):
            mean_choice_over_grid(IndividualParams(0.3, 0.25, 0.25, 1.0), [])

    def test_payment_noise_raises_average(self):
        avgs = [mean_choice_over_grid(IndividualParams(0.3, nu, 0.25, 1.0), altruism_grid())
                for nu in (0.25, 0.5, 1.0)]
        assert avgs[0] < avgs[1] < avgs[2]

    def test_preference_noise_lowers_average(self):
        avgs = [mean_choice_over_grid(IndividualParams(0.3, 0.25, nu, 1.0), altruism_grid())
                for nu in (0.25, 0.5, 1.0)]
        assert avgs[0] > avgs[1] > avgs[2]

    def test_number_and_random_utility_rules(self):
        g = number_grid()
        assert 0 < mean_choice_over_grid(NumberParams(0.3, 1.0), g, "number") < 1
        ru = mean_choice_over_grid(RandomUtilityParams(0.3, 1.0), [(200, 300)], "random-utility")
        assert abs(ru - prob_self_random_utility(RandomUtilityParams(0.3, 1.0), 2.0, 3.0)) < 1e-15


class TestParamValidation:
    @pytest.mark.parametrize("kw", [dict(beta=0.0), dict(beta=1.0), dict(nu_so=-0.1),
                                    dict(mu_r=0.0), dict(sigma_r=2.0), dict(nu_b=float("nan"))])
    def test_invalid(self, kw):
        base = dict(beta=0.3, nu_so=0.2, nu_b=0.2, mu_r=1.0)
        base.update(kw)
        with pytest.raises(ValueError):
            IndividualParams(**base)

    def test_derived_fields(self):
        p = IndividualParams(0.3, 0.313, 0.2, 0.515)
        assert abs(p.b - 0.3 / 0.7) < 1e-15
        assert abs(p.alpha - 1 / (1 + 0.313 ** 2)) < 1e-15
        assert abs(p.delta - 0.515 ** (-(1 - p.alpha))) < 1e-15
