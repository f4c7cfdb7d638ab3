"""
Ball propagation along the itinerary 0^{m_0} 1^{M_0} 0^{m_1} 1^{M_1} ...

The simulator only tracks the diameter exponent of a ball around the
orbit point. In a zero block the orbit point sits on the sphere of
exponent c_m and the contraction lemma decides between the tame rule
(diam + c_{m-1}) and the wild rule (1 + p*diam). In a one block the map
is affine on B(1) and the exponent grows by exactly 1.
"""

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from app.processors.errors import (
    BallTooLargeError,
    BoundaryCaseError,
    RejectedInputError,
    StepError,
    VerificationFailure,
)
from app.processors.scale_core import (
    Exponent,
    PrimeParams,
    Schedule,
    closed_form_t,
    delta,
    format_rational,
    r_exponent,
    rho_exponent,
    t_s,
    tail_sum,
    wild_threshold,
)

logger = logging.getLogger(__name__)

ZERO_BLOCK = 'zero_block'
ONE_BLOCK = 'one_block'

TAME = 'tame'
WILD = 'wild'
AFFINE = 'affine'

DEFAULT_TRACE_CAP = 10000
DEFAULT_CERTIFY_BUDGET = 500

TRACE_COLUMNS = ('step', 'rule', 'diam', 'block_index', 'phase', 'level')


@dataclass(frozen=True)
class BallState:
    """
    Where the ball is in the itinerary and how large it is

    position counts steps already taken inside the current phase. level is
    the sphere index m of the orbit point (m_i - position in a zero block)
    and is 0 in a one block.
    """

    block_index: int
    phase: str
    position: int
    level: int
    diam: Exponent

    @classmethod
    def initial(cls, sched: Schedule, d0: Exponent) -> 'BallState':
        return cls(block_index=0, phase=ZERO_BLOCK, position=0, level=sched.m(0), diam=Fraction(d0))


@dataclass(frozen=True)
class TraceEvent:
    """
    One applied step

    step is the time index the rule was applied at, so diam_after is the
    exponent at time step + 1. block_index, phase and level describe the
    state before the step.
    """

    step: int
    rule: str
    diam_after: Exponent
    block_index: int
    phase: str
    level: int

    def to_row(self) -> Dict[str, object]:
        return {
            'step': self.step,
            'rule': self.rule,
            'diam': format_rational(self.diam_after),
            'block_index': self.block_index,
            'phase': self.phase,
            'level': self.level,
        }


@dataclass
class BallTrace:
    """Result of propagate: recorded events and the state after the last step"""

    events: List[TraceEvent]
    final_state: BallState
    steps: int
    truncated: bool = False

    def to_rows(self) -> List[Dict[str, object]]:
        return [event.to_row() for event in self.events]


def _zero_block_rule(params: PrimeParams, level: int, diam: Exponent) -> Tuple[str, Exponent]:
    c_m = rho_exponent(params, level)
    threshold = wild_threshold(params, level)
    if diam >= c_m:
        raise BallTooLargeError(
            f"diam {format_rational(diam)} >= c_{level} = {format_rational(c_m)} in zero block")
    if diam == threshold:
        raise BoundaryCaseError(
            f"diam {format_rational(diam)} equals the wild threshold at level {level}")
    if diam < threshold:
        return TAME, diam + rho_exponent(params, level - 1)
    return WILD, 1 + params.p * diam


def step(sched: Schedule, state: BallState) -> Tuple[BallState, TraceEvent]:
    """
    Apply one iterate of P_a to the ball

    Args:
        sched: Schedule providing m_i and M_i for the block counters
        state: Current state

    Returns:
        (next state, event describing the applied rule)
    """
    params = sched.params
    if state.phase == ZERO_BLOCK:
        if state.level != sched.m(state.block_index) - state.position or state.level < 1:
            raise RejectedInputError(f"inconsistent zero-block state {state}")
        rule, diam = _zero_block_rule(params, state.level, state.diam)
        position = state.position + 1
        if position == sched.m(state.block_index):
            nxt = replace(state, phase=ONE_BLOCK, position=0, level=0, diam=diam)
        else:
            nxt = replace(state, position=position, level=state.level - 1, diam=diam)
    elif state.phase == ONE_BLOCK:
        if state.diam >= 0:
            raise BallTooLargeError(f"diam {format_rational(state.diam)} >= 0 in one block")
        rule, diam = AFFINE, state.diam + 1
        position = state.position + 1
        if position == sched.M(state.block_index):
            block = state.block_index + 1
            nxt = BallState(block_index=block, phase=ZERO_BLOCK, position=0,
                            level=sched.m(block), diam=diam)
        else:
            nxt = replace(state, position=position, diam=diam)
    else:
        raise RejectedInputError(f"unknown phase {state.phase!r}")

    event = TraceEvent(step=-1, rule=rule, diam_after=diam, block_index=state.block_index,
                       phase=state.phase, level=state.level)
    return nxt, event


def _is_block_boundary(state: BallState) -> bool:
    return state.phase == ZERO_BLOCK and state.position == 0


def propagate(sched: Schedule, d0: Exponent, steps: int,
              trace_cap: int = DEFAULT_TRACE_CAP) -> BallTrace:
    """
    Iterate step from the initial ball of exponent d0

    Every event is kept up to trace_cap; after that only wild events and
    events that land on a block start are kept.

    Args:
        sched: Schedule
        d0: Initial diameter exponent at block 0, level m_0
        steps: Number of iterations
        trace_cap: Number of events stored in full

    Returns:
        BallTrace
    """
    if steps < 0:
        raise RejectedInputError(f"steps must be >= 0, got {steps}")
    state = BallState.initial(sched, d0)
    events: List[TraceEvent] = []
    truncated = False
    for n in range(steps):
        try:
            state, event = step(sched, state)
        except StepError as e:
            e.step = n
            raise
        event = replace(event, step=n)
        if len(events) < trace_cap:
            events.append(event)
        else:
            truncated = True
            if event.rule == WILD or _is_block_boundary(state):
                events.append(event)
    return BallTrace(events=events, final_state=state, steps=steps, truncated=truncated)


def trace_to_csv(trace: BallTrace) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(TRACE_COLUMNS), lineterminator='\n')
    writer.writeheader()
    for row in trace.to_rows():
        writer.writerow(row)
    return buffer.getvalue()


def trace_to_json(trace: BallTrace) -> Dict[str, object]:
    return {
        'steps': trace.steps,
        'truncated': trace.truncated,
        'final_diam': format_rational(trace.final_state.diam),
        'events': trace.to_rows(),
    }


@dataclass
class CheckpointResult:
    kind: str
    s: int
    block_index: int
    step: int
    expected: Exponent
    actual: Exponent

    @property
    def passed(self) -> bool:
        return self.expected == self.actual

    def to_dict(self) -> Dict[str, object]:
        return {
            'kind': self.kind,
            's': self.s,
            'block_index': self.block_index,
            'step': self.step,
            'expected': format_rational(self.expected),
            'actual': format_rational(self.actual),
            'passed': self.passed,
        }


@dataclass
class DiameterReport:
    """Outcome of verify_diameter_theorem"""

    t: Exponent
    d0: Exponent
    s_max: int
    t_routes_agree: bool = True
    checkpoints: List[CheckpointResult] = field(default_factory=list)
    intermediates: List[CheckpointResult] = field(default_factory=list)
    wild_steps: List[int] = field(default_factory=list)
    wild_locus_ok: bool = True
    delta_blocks_checked: int = 0
    delta_consistent: bool = True
    failure: Optional[Dict[str, object]] = None

    @property
    def passed(self) -> bool:
        return (self.failure is None and self.t_routes_agree and self.wild_locus_ok and self.delta_consistent
                and all(c.passed for c in self.checkpoints)
                and all(c.passed for c in self.intermediates))

    def to_dict(self) -> Dict[str, object]:
        return {
            't': format_rational(self.t),
            'd0': format_rational(self.d0),
            's_max': self.s_max,
            't_routes_agree': self.t_routes_agree,
            'passed': self.passed,
            'checkpoints': [c.to_dict() for c in self.checkpoints],
            'intermediates': [c.to_dict() for c in self.intermediates],
            'wild_steps': self.wild_steps,
            'wild_locus_ok': self.wild_locus_ok,
            'delta_blocks_checked': self.delta_blocks_checked,
            'delta_consistent': self.delta_consistent,
            'failure': self.failure,
        }


def verify_diameter_theorem(sched: Schedule, s_max: int, d0: Optional[Exponent] = None) -> DiameterReport:
    """
    Replay the ball from d0 = t and check the diameter identities exactly

    At every special block l_s (p-1)^2 the exponent must equal
    r_s + tail_sum(s); at every other block start N_i it must equal
    r_s + sum of delta_j over the completed blocks + p * tail_sum(s).
    The wild rule must fire exactly at the special block starts.

    Args:
        sched: Schedule
        s_max: Last checkpoint index, >= 1
        d0: Override for the starting exponent (defaults to closed_form_t)

    Returns:
        DiameterReport; the first failure stops the replay and is recorded
    """
    if s_max < 1:
        raise RejectedInputError(f"s_max must be >= 1, got {s_max}")
    p = sched.p
    t = closed_form_t(sched)
    report = DiameterReport(t=t, d0=t if d0 is None else Fraction(d0), s_max=s_max,
                            t_routes_agree=t == t_s(sched, 0))
    last_block = sched.special_block(s_max)
    special = {sched.special_block(s): s for s in range(s_max + 1)}
    special_steps = {sched.N(i) for i in special}
    logger.info(f"Verifying diameters p={p} up to s={s_max} (block {last_block}, step {sched.N(last_block)})")

    def fail(location: str, message: str) -> DiameterReport:
        report.failure = {'location': location, 'message': message}
        logger.warning(f"Diameter verification failed at {location}: {message}")
        return report

    state = BallState.initial(sched, report.d0)
    n = 0
    s = 0
    block_sum = Fraction(0)
    for i in range(last_block + 1):
        if i in special:
            s = special[i]
            block_sum = Fraction(0)
            check = CheckpointResult('checkpoint', s, i, n, t_checkpoint(sched, s), state.diam)
            report.checkpoints.append(check)
        else:
            expected = r_exponent(sched, s) + block_sum + p * tail_sum(sched, s)
            check = CheckpointResult('intermediate', s, i, n, expected, state.diam)
            report.intermediates.append(check)
        if not check.passed:
            return fail(f"block {i} (step {n})",
                        f"expected {format_rational(check.expected)}, got {format_rational(check.actual)}")
        if i == last_block:
            break

        start = state.diam
        tame_only = True
        for _ in range(sched.m(i) + sched.M(i)):
            try:
                state, event = step(sched, state)
            except StepError as e:
                e.step = n
                return fail(f"step {n}", str(e))
            if event.rule == WILD:
                report.wild_steps.append(n)
                tame_only = False
            n += 1
        if tame_only:
            report.delta_blocks_checked += 1
            if state.diam - start != delta(sched, i):
                report.delta_consistent = False
                return fail(f"block {i}", "net change of an all-tame block differs from delta")
        block_sum += delta(sched, i)

    report.wild_locus_ok = set(report.wild_steps) == special_steps - {sched.N(last_block)}
    if not report.wild_locus_ok:
        fail('wild locus', f"wild steps {report.wild_steps} differ from special block starts")
    logger.info(f"Diameter verification {'passed' if report.passed else 'failed'} "
                f"({len(report.checkpoints)} checkpoints, {len(report.intermediates)} intermediate)")
    return report


def t_checkpoint(sched: Schedule, s: int) -> Exponent:
    return r_exponent(sched, s) + tail_sum(sched, s)


@dataclass
class ComponentCertificate:
    """
    Evidence that any larger disk around the orbit point leaves K(P_a)

    verdict is 'escapes' (escape_step holds the failing step of the larger
    ball) or 'inconclusive' (the budget ran out, or the larger ball hit a
    threshold exactly).
    """

    verdict: str
    budget: int
    escape_step: Optional[int] = None
    escape_reason: Optional[str] = None
    difference_trace: List[Exponent] = field(default_factory=list)
    exact_multiplication: List[bool] = field(default_factory=list)
    growth_ok: bool = True

    def to_dict(self) -> Dict[str, object]:
        return {
            'verdict': self.verdict,
            'budget': self.budget,
            'escape_step': self.escape_step,
            'escape_reason': self.escape_reason,
            'difference_trace': [format_rational(d) for d in self.difference_trace],
            'exact_multiplication': self.exact_multiplication,
            'growth_ok': self.growth_ok,
        }


def certify_component(sched: Schedule, t_prime: Exponent,
                      budget: int = DEFAULT_CERTIFY_BUDGET) -> ComponentCertificate:
    """
    Run the balls of exponents t and t_prime in lockstep

    Between two special checkpoints the gap t'_s - t_s is multiplied by
    exactly p while both balls follow the same rules, and never shrinks.
    t_prime == t is accepted as a control run.

    Args:
        sched: Schedule
        t_prime: Exponent of the larger disk
        budget: Maximum number of steps

    Returns:
        ComponentCertificate
    """
    t = closed_form_t(sched)
    t_prime = Fraction(t_prime)
    if t_prime < t:
        raise RejectedInputError(f"t_prime {format_rational(t_prime)} must be >= t {format_rational(t)}")
    if budget < 1:
        raise RejectedInputError(f"budget must be >= 1, got {budget}")
    p = sched.p

    certificate = ComponentCertificate(verdict='inconclusive', budget=budget)
    inner = BallState.initial(sched, t)
    outer = BallState.initial(sched, t_prime)
    checkpoint_steps = {}
    s = 0
    while sched.N(sched.special_block(s)) <= budget:
        checkpoint_steps[sched.N(sched.special_block(s))] = s
        s += 1

    same_rules = True
    for n in range(budget + 1):
        if n in checkpoint_steps:
            gap = outer.diam - inner.diam
            trace = certificate.difference_trace
            if trace:
                previous = trace[-1]
                exact = gap == p * previous
                certificate.exact_multiplication.append(exact)
                if gap < p * previous:
                    certificate.growth_ok = False
                if same_rules and not exact:
                    raise VerificationFailure(f"checkpoint {checkpoint_steps[n]}", p * previous, gap,
                                              "gap did not multiply by p although both balls followed the same rules")
            trace.append(gap)
            same_rules = True
        if n == budget:
            break
        try:
            inner, inner_event = step(sched, inner)
        except StepError as e:
            e.step = n
            raise VerificationFailure(f"step {n}", message=f"the ball of exponent t left the lemma's range: {e}") from e
        try:
            outer, outer_event = step(sched, outer)
        except BallTooLargeError as e:
            certificate.verdict = 'escapes'
            certificate.escape_step = n
            certificate.escape_reason = str(e)
            logger.info(f"Larger disk escapes at step {n}: {e}")
            return certificate
        except BoundaryCaseError as e:
            certificate.escape_reason = f"boundary case at step {n}: {e}"
            logger.info(f"Certification stopped on a boundary case at step {n}")
            return certificate
        if outer_event.rule != inner_event.rule:
            same_rules = False

    logger.info(f"Certification inconclusive after {budget} steps")
    return certificate
