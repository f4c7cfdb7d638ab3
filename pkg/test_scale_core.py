"""
Tests for exponents, schedules and the closed-form sums
"""

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from app.processors.errors import RejectedInputError
from app.processors.scale_core import (
    EllSpec,
    ExponentInterval,
    block_delta_sum,
    closed_form_t,
    delta,
    delta_closed_form,
    derive_constants,
    format_ells,
    format_rational,
    mildly_wild_checks,
    parse_ells,
    parse_rational,
    periodic_series_sum,
    prop41_hypotheses,
    r0_exponent,
    r_exponent,
    rho_exponent,
    rho_limit_exponent,
    rho_step_identity,
    schedule,
    t0_partial_sum,
    t0_sum,
    t_s,
    tail_sum,
    tau,
    tau_bounds,
    tau_ceiling,
    tau_definition,
)

PROPERTY_SETTINGS = settings(max_examples=100, derandomize=True, deadline=None)

increments = st.integers(min_value=1, max_value=3)
ell_specs = st.builds(
    EllSpec,
    st.lists(increments, max_size=3).map(tuple),
    st.lists(increments, min_size=1, max_size=3).map(tuple),
)


@pytest.fixture
def sched2():
    return schedule(derive_constants(2), EllSpec.identity())


class TestConstants:
    def test_p2(self):
        params = derive_constants(2)
        assert params.q == 3
        assert params.kappa == Fraction(4, 7)

    def test_p3(self):
        params = derive_constants(3)
        assert params.q == 22
        assert params.kappa == Fraction(81, 241)

    @pytest.mark.parametrize('p', [4, 6, 1, 0, -3])
    def test_rejects_non_primes(self, p):
        with pytest.raises(RejectedInputError):
            derive_constants(p)

    @pytest.mark.parametrize('p', [2, 3, 5, 7])
    def test_kappa_in_unit_interval(self, p):
        assert 0 < derive_constants(p).kappa <= 1


class TestRho:
    def test_values(self):
        params = derive_constants(2)
        assert rho_exponent(params, 0) == 0
        assert rho_exponent(params, 1) == Fraction(-1, 2)
        assert rho_exponent(params, 5) == Fraction(-31, 32)

    def test_negative_index(self):
        with pytest.raises(RejectedInputError):
            rho_exponent(derive_constants(2), -1)

    @pytest.mark.parametrize('p', [2, 3, 5])
    def test_strictly_decreasing_above_limit(self, p):
        params = derive_constants(p)
        values = [rho_exponent(params, m) for m in range(12)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert all(v > rho_limit_exponent(params) for v in values)

    @pytest.mark.parametrize('p', [2, 3, 5])
    def test_step_identity(self, p):
        params = derive_constants(p)
        assert all(rho_step_identity(params, m) for m in range(1, 10))


class TestSchedule:
    def test_identity_p2(self, sched2):
        assert [sched2.M(k) for k in range(3)] == [3, 6, 9]
        assert [sched2.m(k) for k in range(3)] == [5, 8, 11]
        assert [sched2.N(i) for i in range(4)] == [0, 8, 22, 42]

    def test_locate_against_definition(self):
        sched = schedule(derive_constants(3), parse_ells('prefix=2;cycle=1,3'))
        for k in range(60):
            s = sched.locate(k)
            assert sched.special_block(s) - 1 <= k < sched.special_block(s + 1) - 1

    @PROPERTY_SETTINGS
    @given(p=st.sampled_from([2, 3, 5]), ells=ell_specs)
    def test_special_block_m_value(self, p, ells):
        sched = schedule(derive_constants(p), ells)
        for s in range(21):
            assert sched.m(sched.special_block(s)) == sched.params.q * sched.ell(s) + 2 * p + 1

    @PROPERTY_SETTINGS
    @given(p=st.sampled_from([2, 3, 5]), ells=ell_specs)
    def test_realization_hypotheses(self, p, ells):
        report = prop41_hypotheses(schedule(derive_constants(p), ells), 50)
        assert report['passed'], report['failures']

    def test_ell_from_prefix_and_cycle(self):
        ells = parse_ells('prefix=1;cycle=2,1')
        assert [ells.ell(s) for s in range(6)] == [0, 1, 3, 4, 6, 7]

    def test_bad_ellspec(self):
        with pytest.raises(RejectedInputError):
            EllSpec((1,), ())
        with pytest.raises(RejectedInputError):
            EllSpec((0,), (1,))
        with pytest.raises(RejectedInputError):
            parse_ells('prefix=1')


class TestDeltaTau:
    def test_identity_p2_values(self, sched2):
        for k in range(6):
            assert delta(sched2, k) == -Fraction(1, 2 ** (3 * k + 4))
        for s in range(6):
            assert tau(sched2, s) == Fraction(1, 2 ** (3 * s + 7))

    @PROPERTY_SETTINGS
    @given(p=st.sampled_from([2, 3, 5]), ells=ell_specs)
    def test_tau_definition_matches_closed_form(self, p, ells):
        sched = schedule(derive_constants(p), ells)
        for s in range(21):
            assert tau_definition(sched, s) == tau(sched, s)

    @PROPERTY_SETTINGS
    @given(p=st.sampled_from([2, 3, 5]), ells=ell_specs)
    def test_delta_closed_forms(self, p, ells):
        sched = schedule(derive_constants(p), ells)
        for k in range(21):
            assert delta_closed_form(sched, k) == delta(sched, k)

    @PROPERTY_SETTINGS
    @given(p=st.sampled_from([2, 3, 5]), ells=ell_specs)
    def test_block_sum(self, p, ells):
        sched = schedule(derive_constants(p), ells)
        for s in range(21):
            lo, hi = sched.special_block(s), sched.special_block(s + 1)
            assert block_delta_sum(sched, s) == sum((delta(sched, k) for k in range(lo, hi)), Fraction(0))

    @PROPERTY_SETTINGS
    @given(p=st.sampled_from([2, 3, 5]), ells=ell_specs)
    def test_tau_bounds(self, p, ells):
        sched = schedule(derive_constants(p), ells)
        for s in range(21):
            lower, upper = tau_bounds(sched, s)
            assert lower <= tau(sched, s) < upper <= tau_ceiling(sched.params)


class TestTails:
    def test_exact_values(self, sched2):
        assert tail_sum(sched2, 0) == Fraction(1, 240)
        assert tail_sum(sched2, 1) == Fraction(1, 1920)

    def test_interval_encloses_exact(self, sched2):
        enclosure = tail_sum(sched2, 0, mode='interval', truncation_terms=10)
        assert isinstance(enclosure, ExponentInterval)
        assert enclosure.contains(Fraction(1, 240))
        assert enclosure.width < Fraction(1, 2 ** 40)

    def test_unknown_mode(self, sched2):
        with pytest.raises(RejectedInputError):
            tail_sum(sched2, 0, mode='float')

    def test_r_values(self, sched2):
        assert r_exponent(sched2, 0) == r0_exponent(sched2.params) == Fraction(-31, 16)
        assert r_exponent(sched2, 1) == Fraction(-255, 128)

    @PROPERTY_SETTINGS
    @given(p=st.sampled_from([2, 3]), ells=ell_specs)
    def test_interval_mode_contains_exact(self, p, ells):
        sched = schedule(derive_constants(p), ells)
        for s in range(3):
            assert tail_sum(sched, s, mode='interval', truncation_terms=6).contains(tail_sum(sched, s))


class TestClosedFormT:
    def test_identity_p2(self, sched2):
        assert closed_form_t(sched2) == Fraction(-29, 15)

    def test_two_routes_agree(self, sched2):
        assert t_s(sched2, 0) == closed_form_t(sched2)

    @PROPERTY_SETTINGS
    @given(p=st.sampled_from([2, 3, 5]), ells=ell_specs)
    def test_two_routes_agree_everywhere(self, p, ells):
        sched = schedule(derive_constants(p), ells)
        assert t_s(sched, 0) == closed_form_t(sched)

    @PROPERTY_SETTINGS
    @given(ells=ell_specs)
    def test_partial_sums_approach_from_below(self, ells):
        sched = schedule(derive_constants(2), ells)
        total = t0_sum(sched)
        partials = [t0_partial_sum(sched, n) for n in (1, 4, 8)]
        assert all(a < b for a, b in zip(partials, partials[1:]))
        assert partials[-1] < total
        assert total - partials[-1] < Fraction(1, 2 ** 20)

    @pytest.mark.parametrize('p', [2, 3])
    @pytest.mark.parametrize('text', ['id', 'prefix=;cycle=2', 'prefix=1;cycle=2,1'])
    def test_mildly_wild(self, p, text):
        sched = schedule(derive_constants(p), parse_ells(text))
        for s in range(4):
            checks = mildly_wild_checks(sched, s)
            assert all(v is not False for v in checks.values()), checks

    def test_first_block_needs_an_intermediate_block(self, sched2):
        # p=2 with unit increments: the special block closes its range
        for s in range(4):
            assert mildly_wild_checks(sched2, s)['first_block_below_threshold'] is None
        assert r_exponent(sched2, 0) + delta(sched2, 0) + 2 * tail_sum(sched2, 0) == Fraction(-239, 120)

        spaced = schedule(derive_constants(2), parse_ells('prefix=;cycle=2'))
        assert all(mildly_wild_checks(spaced, s)['first_block_below_threshold'] for s in range(4))

    def test_first_block_always_applies_for_p3(self):
        sched = schedule(derive_constants(3), EllSpec.identity())
        assert all(mildly_wild_checks(sched, s)['first_block_below_threshold'] for s in range(4))


class TestHelpers:
    def test_periodic_series_geometric(self):
        assert periodic_series_sum(lambda u: Fraction(1, 2 ** u), 0, 1, Fraction(1, 2)) == 2

    def test_periodic_series_rejects_divergent(self):
        with pytest.raises(RejectedInputError):
            periodic_series_sum(lambda u: Fraction(1), 0, 1, Fraction(1))

    def test_rational_text(self):
        assert parse_rational('-29/15') == Fraction(-29, 15)
        assert parse_rational('3') == 3
        assert format_rational(Fraction(3)) == '3/1'
        with pytest.raises(RejectedInputError):
            parse_rational('1.5')

    def test_ells_text(self):
        assert format_ells(parse_ells('id')) == 'id'
        assert format_ells(parse_ells('prefix=;cycle=2')) == 'prefix=;cycle=2'
