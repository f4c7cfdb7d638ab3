"""
Tests for the ball simulator, the diameter replay and component certification
"""

import csv
import io
from fractions import Fraction

import pytest

from app.processors.ball_flow import (
    AFFINE,
    ONE_BLOCK,
    TAME,
    TRACE_COLUMNS,
    WILD,
    ZERO_BLOCK,
    BallState,
    certify_component,
    propagate,
    step,
    trace_to_csv,
    trace_to_json,
    verify_diameter_theorem,
)
from app.processors.errors import BallTooLargeError, BoundaryCaseError, RejectedInputError
from app.processors.scale_core import (
    EllSpec,
    closed_form_t,
    derive_constants,
    parse_ells,
    schedule,
    wild_threshold,
)

T = Fraction(-29, 15)


@pytest.fixture
def sched2():
    return schedule(derive_constants(2), EllSpec.identity())


class TestStep:
    def test_wild_then_tame(self, sched2):
        state = BallState.initial(sched2, T)
        assert state.level == 5
        state, event = step(sched2, state)
        assert event.rule == WILD
        assert event.diam_after == Fraction(-43, 15)
        state, event = step(sched2, state)
        assert event.rule == TAME
        assert event.level == 4
        assert event.diam_after == Fraction(-449, 120)

    def test_one_block_is_affine(self, sched2):
        state = BallState(block_index=0, phase=ONE_BLOCK, position=0, level=0, diam=Fraction(-5, 2))
        state, event = step(sched2, state)
        assert event.rule == AFFINE
        assert state.diam == Fraction(-3, 2)

    def test_rollover_to_next_block(self, sched2):
        state = BallState(block_index=0, phase=ONE_BLOCK, position=2, level=0, diam=Fraction(-3))
        state, _ = step(sched2, state)
        assert (state.block_index, state.phase, state.level) == (1, ZERO_BLOCK, 8)

    def test_boundary_case(self, sched2):
        threshold = wild_threshold(sched2.params, 5)
        with pytest.raises(BoundaryCaseError):
            step(sched2, BallState.initial(sched2, threshold))

    def test_ball_too_large(self, sched2):
        with pytest.raises(BallTooLargeError):
            step(sched2, BallState.initial(sched2, Fraction(-1, 2)))
        one = BallState(block_index=0, phase=ONE_BLOCK, position=0, level=0, diam=Fraction(0))
        with pytest.raises(BallTooLargeError):
            step(sched2, one)


class TestPropagate:
    def test_first_block(self, sched2):
        trace = propagate(sched2, T, 8)
        assert [e.rule for e in trace.events] == [WILD, TAME, TAME, TAME, TAME, AFFINE, AFFINE, AFFINE]
        assert trace.events[-1].diam_after == Fraction(-239, 120)
        assert [e.step for e in trace.events] == list(range(8))

    def test_second_checkpoint(self, sched2):
        trace = propagate(sched2, T, 22)
        assert trace.final_state.diam == Fraction(-1919, 960)
        assert trace.final_state.block_index == 2

    def test_zero_steps(self, sched2):
        trace = propagate(sched2, T, 0)
        assert trace.events == []
        assert trace.final_state.diam == T

    def test_negative_steps(self, sched2):
        with pytest.raises(RejectedInputError):
            propagate(sched2, T, -1)

    def test_step_error_carries_step(self, sched2):
        with pytest.raises(BallTooLargeError) as info:
            propagate(sched2, Fraction(-1, 10), 5)
        assert info.value.step == 0
        assert 'step 0' in str(info.value)

    def test_trace_cap_keeps_wild_events(self, sched2):
        trace = propagate(sched2, T, 42, trace_cap=3)
        assert trace.truncated
        wild = [e.step for e in trace.events if e.rule == WILD]
        assert wild == [0, 8, 22]

    def test_csv_export(self, sched2):
        text = trace_to_csv(propagate(sched2, T, 8))
        rows = list(csv.DictReader(io.StringIO(text)))
        assert tuple(rows[0].keys()) == TRACE_COLUMNS
        assert rows[-1]['diam'] == '-239/120'
        assert len(rows) == 8

    def test_json_export(self, sched2):
        payload = trace_to_json(propagate(sched2, T, 8))
        assert payload['final_diam'] == '-239/120'
        assert payload['events'][0]['rule'] == WILD


class TestVerifyDiameter:
    def test_identity_p2(self, sched2):
        report = verify_diameter_theorem(sched2, 5)
        assert report.passed, report.failure
        assert report.t == T
        assert report.t_routes_agree
        assert [c.actual for c in report.checkpoints[:3]] == [T, Fraction(-239, 120), Fraction(-1919, 960)]

    def test_wild_steps_are_special_block_starts(self, sched2):
        report = verify_diameter_theorem(sched2, 4)
        assert report.wild_steps == [sched2.N(sched2.special_block(s)) for s in range(4)]
        assert report.wild_steps == [0, 8, 22, 42]

    @pytest.mark.parametrize('p,text,s_max', [
        (2, 'prefix=;cycle=2', 4),
        (2, 'prefix=1;cycle=2,1', 4),
        (3, 'id', 4),
    ])
    def test_other_sequences(self, p, text, s_max):
        sched = schedule(derive_constants(p), parse_ells(text))
        report = verify_diameter_theorem(sched, s_max)
        assert report.passed, report.failure
        assert report.wild_locus_ok
        assert len(report.checkpoints) == s_max + 1

    def test_intermediate_blocks_checked(self):
        sched = schedule(derive_constants(2), parse_ells('prefix=;cycle=2'))
        report = verify_diameter_theorem(sched, 3)
        assert len(report.intermediates) == 3
        assert report.delta_blocks_checked == 3

    def test_rejects_s_max_zero(self, sched2):
        with pytest.raises(RejectedInputError):
            verify_diameter_theorem(sched2, 0)

    def test_perturbed_start_fails(self, sched2):
        report = verify_diameter_theorem(sched2, 3, d0=T + Fraction(1, 1000))
        assert not report.passed
        assert report.failure['location'].startswith('block 0')

    def test_report_serializes_rationals(self, sched2):
        payload = verify_diameter_theorem(sched2, 2).to_dict()
        assert payload['t'] == '-29/15'
        assert payload['checkpoints'][1]['expected'] == '-239/120'


class TestCertify:
    def test_escapes_within_budget(self, sched2):
        certificate = certify_component(sched2, T + Fraction(1, 100), budget=500)
        assert certificate.verdict == 'escapes'
        assert certificate.escape_step <= 500
        assert certificate.difference_trace[:3] == [Fraction(1, 100), Fraction(2, 100), Fraction(4, 100)]
        assert all(certificate.exact_multiplication[:2])
        assert certificate.growth_ok

    def test_escape_step_monotone_in_gap(self, sched2):
        wide = certify_component(sched2, T + Fraction(1, 100), budget=5000)
        narrow = certify_component(sched2, T + Fraction(1, 10 ** 6), budget=5000)
        assert wide.verdict == narrow.verdict == 'escapes'
        assert wide.escape_step < narrow.escape_step

    def test_control_run_is_inconclusive(self, sched2):
        certificate = certify_component(sched2, T, budget=60)
        assert certificate.verdict == 'inconclusive'
        assert set(certificate.difference_trace) == {0}

    def test_rejects_smaller_disk(self, sched2):
        with pytest.raises(RejectedInputError):
            certify_component(sched2, T - Fraction(1, 100))

    def test_t_is_closed_form(self, sched2):
        assert closed_form_t(sched2) == T
