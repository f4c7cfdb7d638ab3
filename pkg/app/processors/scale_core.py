"""
Exact norm-exponent arithmetic for the family P_a(z) = a z^p + (1 - a) z^(p+1)

Every norm is stored as the exponent t of |a|^t with |a| > 1, so larger
exponents mean larger norms. All values are Fractions; nothing is rounded.
This module owns the prime constants, the block schedule (M_k, m_k, N_i),
the per-block quantities delta_k, tau_s, r_s and the closed-form sums built
from them.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple, Union

from sympy import isprime

from app.processors.errors import RejectedInputError

logger = logging.getLogger(__name__)

Exponent = Fraction

DEFAULT_TRUNCATION_TERMS = 10


def parse_rational(text: str) -> Fraction:
    """
    Parse "n" or "n/d" (optional leading minus) into a Fraction

    Args:
        text: Rational string

    Returns:
        Fraction in lowest terms
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    raw = str(text).strip()
    num, sep, den = raw.partition('/')
    try:
        if sep:
            return Fraction(int(num), int(den))
        return Fraction(int(num))
    except (ValueError, ZeroDivisionError) as e:
        raise RejectedInputError(f"not a rational of the form n/d: {text!r}") from e


def format_rational(value: Fraction) -> str:
    """Serialize a rational as "num/den" in lowest terms"""
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class PrimeParams:
    """Constants attached to a prime p"""

    p: int
    q: int
    kappa: Fraction

    def to_dict(self) -> Dict[str, object]:
        return {'p': self.p, 'q': self.q, 'kappa': format_rational(self.kappa)}


@dataclass(frozen=True)
class ExponentInterval:
    """Certified enclosure [lo, hi] of an exponent"""

    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if self.lo > self.hi:
            raise RejectedInputError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def contains(self, value: Fraction) -> bool:
        return self.lo <= value <= self.hi

    def to_dict(self) -> Dict[str, str]:
        return {'lo': format_rational(self.lo), 'hi': format_rational(self.hi)}


@dataclass(frozen=True)
class EllSpec:
    """
    Strictly increasing sequence with l_0 = 0, given by its increments

    The increments are prefix_increments followed by cycle_increments
    repeated forever.
    """

    prefix_increments: Tuple[int, ...] = ()
    cycle_increments: Tuple[int, ...] = (1,)

    def __post_init__(self):
        object.__setattr__(self, 'prefix_increments', tuple(int(d) for d in self.prefix_increments))
        object.__setattr__(self, 'cycle_increments', tuple(int(d) for d in self.cycle_increments))
        if not self.cycle_increments:
            raise RejectedInputError("cycle_increments must be nonempty")
        if any(d < 1 for d in self.prefix_increments + self.cycle_increments):
            raise RejectedInputError("all increments must be >= 1")

    @classmethod
    def identity(cls) -> 'EllSpec':
        return cls((), (1,))

    @property
    def cycle_sum(self) -> int:
        return sum(self.cycle_increments)

    def increment(self, s: int) -> int:
        """l_{s+1} - l_s"""
        n = len(self.prefix_increments)
        if s < n:
            return self.prefix_increments[s]
        return self.cycle_increments[(s - n) % len(self.cycle_increments)]

    def ell(self, s: int) -> int:
        if s < 0:
            raise RejectedInputError(f"ell index must be >= 0, got {s}")
        n = len(self.prefix_increments)
        if s <= n:
            return sum(self.prefix_increments[:s])
        full, rest = divmod(s - n, len(self.cycle_increments))
        return sum(self.prefix_increments) + full * self.cycle_sum + sum(self.cycle_increments[:rest])


def parse_ells(text: str) -> EllSpec:
    """
    Parse "id" or "prefix=a,b;cycle=d,e" (prefix may be empty)

    Args:
        text: EllSpec textual form

    Returns:
        EllSpec
    """
    raw = str(text).strip()
    if raw == 'id':
        return EllSpec.identity()

    parts = {}
    for chunk in raw.split(';'):
        key, sep, value = chunk.partition('=')
        key = key.strip()
        if not sep or key not in ('prefix', 'cycle') or key in parts:
            raise RejectedInputError(f"bad EllSpec {text!r}; expected 'id' or 'prefix=a,b;cycle=c,d'")
        parts[key] = value.strip()
    if 'cycle' not in parts:
        raise RejectedInputError(f"EllSpec {text!r} has no cycle")

    def _ints(value: str) -> Tuple[int, ...]:
        if not value:
            return ()
        try:
            return tuple(int(v) for v in value.split(','))
        except ValueError as e:
            raise RejectedInputError(f"bad increment list {value!r}") from e

    return EllSpec(_ints(parts.get('prefix', '')), _ints(parts['cycle']))


def format_ells(ells: EllSpec) -> str:
    if not ells.prefix_increments and ells.cycle_increments == (1,):
        return 'id'
    prefix = ','.join(str(d) for d in ells.prefix_increments)
    cycle = ','.join(str(d) for d in ells.cycle_increments)
    return f"prefix={prefix};cycle={cycle}"


def derive_constants(p: int) -> PrimeParams:
    """
    Compute q and kappa for a prime p

    Args:
        p: Prime >= 2

    Returns:
        PrimeParams with q = (p-1)(2p^2-2p-1) and kappa = p^(2p-2)/(p^(2p-1)-p+1)
    """
    if isinstance(p, bool) or not isinstance(p, int):
        raise RejectedInputError(f"p must be an integer, got {p!r}")
    if p < 2 or not isprime(p):
        raise RejectedInputError(f"p must be a prime >= 2, got {p}")
    q = (p - 1) * (2 * p * p - 2 * p - 1)
    kappa = Fraction(p ** (2 * p - 2), p ** (2 * p - 1) - p + 1)
    return PrimeParams(p=p, q=q, kappa=kappa)


def rho_exponent(params: PrimeParams, m: int) -> Exponent:
    """c_m = -(1/(p-1))(1 - p^-m), the exponent of rho_m(a)"""
    if m < 0:
        raise RejectedInputError(f"m must be >= 0, got {m}")
    p = params.p
    return -Fraction(1, p - 1) * (1 - Fraction(1, p ** m))


def rho_limit_exponent(params: PrimeParams) -> Exponent:
    """Exponent of rho(a) = lim rho_m(a)"""
    return Fraction(-1, params.p - 1)


def wild_threshold(params: PrimeParams, m: int) -> Exponent:
    """Exponent of rho_m(a)^(p/(p-1)); tame below, wild above"""
    return Fraction(params.p, params.p - 1) * rho_exponent(params, m)


def rho_step_identity(params: PrimeParams, m: int) -> bool:
    """|a| rho_m^p = rho_{m-1} for m >= 1, and |a| rho^p = rho"""
    if m < 1:
        raise RejectedInputError(f"m must be >= 1, got {m}")
    p = params.p
    limit = rho_limit_exponent(params)
    return (1 + p * rho_exponent(params, m) == rho_exponent(params, m - 1)
            and 1 + p * limit == limit)


def periodic_series_sum(term: Callable[[int], Fraction], pre: int, period: int, ratio: Fraction) -> Fraction:
    """
    Sum an eventually geometric series exactly

    The series is sum_{u >= 0} term(u) where term(u + period) = ratio * term(u)
    for every u >= pre.

    Args:
        term: Summand as a function of the index
        pre: Length of the non-periodic head
        period: Cycle length
        ratio: Factor gained by each full cycle, |ratio| < 1

    Returns:
        Exact sum
    """
    if period < 1 or not (-1 < ratio < 1):
        raise RejectedInputError(f"series does not converge: period={period}, ratio={ratio}")
    head = sum((term(u) for u in range(pre)), Fraction(0))
    cycle = sum((term(u) for u in range(pre, pre + period)), Fraction(0))
    return head + cycle / (1 - ratio)


@dataclass
class Schedule:
    """
    Block schedule for a prime and an EllSpec

    Accessors are memoized and total for every non-negative index.
    Memo tables are plain dicts; a Schedule should stay on one thread.
    """

    params: PrimeParams
    ells: EllSpec
    _M: Dict[int, int] = field(default_factory=dict, repr=False)
    _m: Dict[int, int] = field(default_factory=dict, repr=False)
    _N: List[int] = field(default_factory=lambda: [0], repr=False)

    @property
    def p(self) -> int:
        return self.params.p

    @property
    def square(self) -> int:
        """(p-1)^2"""
        return (self.params.p - 1) ** 2

    def ell(self, s: int) -> int:
        return self.ells.ell(s)

    def special_block(self, s: int) -> int:
        """Block index l_s (p-1)^2 where the wild step happens"""
        return self.ell(s) * self.square

    def locate(self, k: int) -> int:
        """s with l_s (p-1)^2 - 1 <= k < l_{s+1} (p-1)^2 - 1"""
        if k < 0:
            raise RejectedInputError(f"block index must be >= 0, got {k}")
        lo, hi = 0, k + 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.special_block(mid) - 1 <= k:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def block_position(self, k: int) -> Tuple[str, int]:
        """
        Classify k against the delta sums

        Returns:
            ('final', s) when k = l_{s+1}(p-1)^2 - 1, else ('intermediate', s)
            with l_s (p-1)^2 - 1 < k < l_{s+1} (p-1)^2 - 1
        """
        s = self.locate(k)
        if s >= 1 and k == self.special_block(s) - 1:
            return 'final', s - 1
        return 'intermediate', s

    def M(self, k: int) -> int:
        if k not in self._M:
            s = self.locate(k)
            self._M[k] = 2 * k + 2 + (2 * self.p - 3) * self.ell(s)
        return self._M[k]

    def m(self, k: int) -> int:
        if k < 0:
            raise RejectedInputError(f"block index must be >= 0, got {k}")
        if k not in self._m:
            p = self.p
            self._m[k] = 2 * p + 1 if k == 0 else (p - 1) * self.M(k - 1) + 2 * p + 1
        return self._m[k]

    def N(self, i: int) -> int:
        """Time at which block i starts"""
        if i < 0:
            raise RejectedInputError(f"block index must be >= 0, got {i}")
        while len(self._N) <= i:
            j = len(self._N) - 1
            self._N.append(self._N[j] + self.m(j) + self.M(j))
        return self._N[i]

    def describe(self) -> Dict[str, object]:
        return {'p': self.p, 'ells': format_ells(self.ells)}


def schedule(params: PrimeParams, ells: EllSpec) -> Schedule:
    """Build the (lazy) schedule for params and ells"""
    if not isinstance(ells, EllSpec):
        raise RejectedInputError(f"expected an EllSpec, got {type(ells).__name__}")
    logger.debug(f"Schedule for p={params.p}, ells={format_ells(ells)}")
    return Schedule(params=params, ells=ells)


def _pow(p: int, n: int) -> Fraction:
    """p^n as a Fraction for any integer n"""
    return Fraction(p) ** n


def delta(sched: Schedule, k: int) -> Exponent:
    """delta_k = -m_k/(p-1) + p/(p-1)^2 (1 - p^-m_k) + M_k"""
    if k < 0:
        raise RejectedInputError(f"k must be >= 0, got {k}")
    p = sched.p
    mk = sched.m(k)
    return (-Fraction(mk, p - 1)
            + Fraction(p, (p - 1) ** 2) * (1 - _pow(p, -mk))
            + sched.M(k))


def delta_closed_form(sched: Schedule, k: int) -> Exponent:
    """delta_k from the block-final or intermediate closed form"""
    p = sched.p
    position, s = sched.block_position(k)
    core = -Fraction(1, (p - 1) ** 2) * (2 * p - 3 + _pow(p, -(sched.m(k) - 1)))
    if position == 'final':
        return core + (2 * p - 3) * (sched.ell(s + 1) - sched.ell(s))
    return core


def _tau_bracket(params: PrimeParams, gap: int) -> Fraction:
    """tau_s * p^(q l_s) as a function of gap = l_{s+1} - l_s"""
    p, q = params.p, params.q
    w = p ** (2 * (p - 1))
    inner = (Fraction(1, w - 1)
             + _pow(p, -q * gap)
             - Fraction(w, w - 1) * _pow(p, -2 * gap * (p - 1) ** 3))
    return inner / ((p - 1) ** 2 * p ** (2 * p))


def tau(sched: Schedule, s: int) -> Exponent:
    """tau_s from its finite closed form"""
    if s < 0:
        raise RejectedInputError(f"s must be >= 0, got {s}")
    gap = sched.ell(s + 1) - sched.ell(s)
    return _pow(sched.p, -sched.params.q * sched.ell(s)) * _tau_bracket(sched.params, gap)


def tau_definition(sched: Schedule, s: int) -> Exponent:
    """tau_s from the m-values at both special blocks minus the delta block sum"""
    p = sched.p
    lo, hi = sched.special_block(s), sched.special_block(s + 1)
    edge = -Fraction(p, (p - 1) ** 2) * (_pow(p, -sched.m(lo)) - _pow(p, -sched.m(hi)))
    return edge - sum((delta(sched, k) for k in range(lo, hi)), Fraction(0))


def block_delta_sum(sched: Schedule, s: int) -> Exponent:
    """Closed form of delta_{l_s(p-1)^2} + ... + delta_{l_{s+1}(p-1)^2 - 1}"""
    p, q = sched.p, sched.params.q
    w = p ** (2 * (p - 1))
    gap = sched.ell(s + 1) - sched.ell(s)
    return (-Fraction(p, (p - 1) ** 2) * Fraction(w, w - 1)
            * _pow(p, -(q * sched.ell(s) + 2 * p + 1))
            * (1 - _pow(p, -2 * gap * (p - 1) ** 3)))


def tau_bounds(sched: Schedule, s: int) -> Tuple[Fraction, Fraction]:
    """
    Two-sided bound on tau_s

    Returns:
        (lower, upper) with lower <= tau_s < upper <= 1/((p-1)^2 p^(2p))
    """
    p, q = sched.p, sched.params.q
    scale = Fraction(1, (p - 1) ** 2 * p ** (2 * p))
    lower = scale * _pow(p, -q * sched.ell(s + 1))
    upper = scale * _pow(p, -q * sched.ell(s)) * (Fraction(1, p ** (2 * (p - 1)) - 1) + _pow(p, -q))
    return lower, upper


def tau_ceiling(params: PrimeParams) -> Fraction:
    """1/((p-1)^2 p^(2p)), the uniform bound on tau"""
    p = params.p
    return Fraction(1, (p - 1) ** 2 * p ** (2 * p))


def r_exponent(sched: Schedule, s: int) -> Exponent:
    """Exponent of r_s(a) = rho_{m_{l_s(p-1)^2}}(a)^(p/(p-1))"""
    if s < 0:
        raise RejectedInputError(f"s must be >= 0, got {s}")
    return wild_threshold(sched.params, sched.m(sched.special_block(s)))


def r0_exponent(params: PrimeParams) -> Exponent:
    """-p/(p-1)^2 (1 - p^-(2p+1))"""
    p = params.p
    return -Fraction(p, (p - 1) ** 2) * (1 - _pow(p, -(2 * p + 1)))


def _tail_ratio(sched: Schedule) -> Fraction:
    ells = sched.ells
    return _pow(sched.p, -(sched.params.q * ells.cycle_sum + len(ells.cycle_increments)))


def tail_sum(sched: Schedule, s: int, mode: str = 'exact',
             truncation_terms: int = DEFAULT_TRUNCATION_TERMS) -> Union[Exponent, ExponentInterval]:
    """
    sum_{u >= 0} tau_{s+u} / p^(u+1)

    Args:
        sched: Schedule
        s: Starting index
        mode: 'exact' for the closed form, 'interval' for a certified enclosure
        truncation_terms: Terms summed before the tail bound in interval mode

    Returns:
        Fraction in exact mode, ExponentInterval in interval mode
    """
    if s < 0:
        raise RejectedInputError(f"s must be >= 0, got {s}")
    p = sched.p

    def term(u: int) -> Fraction:
        return tau(sched, s + u) / p ** (u + 1)

    if mode == 'exact':
        pre = max(0, len(sched.ells.prefix_increments) - s)
        return periodic_series_sum(term, pre, len(sched.ells.cycle_increments), _tail_ratio(sched))

    if mode == 'interval':
        if truncation_terms < 1:
            raise RejectedInputError(f"truncation_terms must be >= 1, got {truncation_terms}")
        n = truncation_terms
        lo = sum((term(u) for u in range(n)), Fraction(0))
        q = sched.params.q
        bound = (Fraction(1, (p - 1) ** 2) * _pow(p, -(q * sched.ell(s + n) + 2 * p))
                 * _pow(p, -(n + 1)) / (1 - _pow(p, -(q + 1))))
        return ExponentInterval(lo, lo + bound)

    raise RejectedInputError(f"unknown tail_sum mode {mode!r}")


def t_s(sched: Schedule, s: int) -> Exponent:
    """Exponent of diam at the s-th special checkpoint: r_s + tail_sum(s)"""
    return r_exponent(sched, s) + tail_sum(sched, s)


def t0_sum(sched: Schedule) -> Fraction:
    """sum_{s >= 0} p^-(q l_s + s) (1 - kappa p^(-2(p-1)^3 (l_{s+1} - l_s)))"""
    p, q, kappa = sched.p, sched.params.q, sched.params.kappa
    cube = 2 * (p - 1) ** 3

    def term(s: int) -> Fraction:
        gap = sched.ell(s + 1) - sched.ell(s)
        return _pow(p, -(q * sched.ell(s) + s)) * (1 - kappa * _pow(p, -cube * gap))

    return periodic_series_sum(term, len(sched.ells.prefix_increments),
                               len(sched.ells.cycle_increments), _tail_ratio(sched))


def t0_partial_sum(sched: Schedule, terms: int) -> Fraction:
    """First `terms` summands of t0_sum, added one by one"""
    p, q, kappa = sched.p, sched.params.q, sched.params.kappa
    cube = 2 * (p - 1) ** 3
    total = Fraction(0)
    for s in range(terms):
        gap = sched.ell(s + 1) - sched.ell(s)
        total += _pow(p, -(q * sched.ell(s) + s)) * (1 - kappa * _pow(p, -cube * gap))
    return total


def closed_form_t(sched: Schedule) -> Exponent:
    """
    The diameter exponent t of the wandering ball

    Returns:
        -p/(p-1)^2 + (p^(2p-1)-p+1)/((p-1)^2 p^(2p+1) (p^(2p-2)-1)) * t0_sum
    """
    p = sched.p
    coefficient = Fraction(p ** (2 * p - 1) - p + 1,
                           (p - 1) ** 2 * p ** (2 * p + 1) * (p ** (2 * p - 2) - 1))
    t = -Fraction(p, (p - 1) ** 2) + coefficient * t0_sum(sched)
    logger.debug(f"closed_form_t p={p} ells={format_ells(sched.ells)}: {format_rational(t)}")
    return t


def prop41_hypotheses(sched: Schedule, i_max: int) -> Dict[str, object]:
    """
    Check the realization hypotheses on (m_i, M_i) for i <= i_max

    Returns:
        Report with per-check booleans and the first failing index, if any
    """
    p = sched.p
    failures = []
    if sched.M(0) < 2:
        failures.append({'i': 0, 'check': 'M_0 >= 2'})
    for i in range(i_max + 1):
        if sched.M(i + 1) < sched.M(i) + 2:
            failures.append({'i': i, 'check': 'M_{i+1} >= M_i + 2'})
        m_next = sched.m(i + 1)
        lhs = sched.M(i) - Fraction(m_next, p - 1) + Fraction(p, (p - 1) ** 2) * (1 - _pow(p, -m_next))
        closed = -Fraction(1, (p - 1) ** 2) * (2 * p * p - 2 * p - 1 + _pow(p, -(m_next - 1)))
        if lhs != closed:
            failures.append({'i': i, 'check': 'closed form'})
        if not lhs < 0:
            failures.append({'i': i, 'check': 'negativity'})
    return {'i_max': i_max, 'passed': not failures, 'failures': failures}


def mildly_wild_checks(sched: Schedule, s: int) -> Dict[str, Optional[bool]]:
    """
    The inequalities that keep the wild step mild at checkpoint s

    The first-block bound only constrains the intermediate blocks strictly
    between l_s (p-1)^2 and l_{s+1} (p-1)^2; when there are none it is
    reported as None (not applicable).

    Returns:
        Mapping of check name to outcome
    """
    p = sched.p
    r = r_exponent(sched, s)
    tail = tail_sum(sched, s)
    ts = r + tail
    rho = rho_limit_exponent(sched.params)
    wild_rho = Fraction(p, p - 1) * rho
    first_block = None
    if sched.special_block(s + 1) - sched.special_block(s) >= 2:
        first_block = r + delta(sched, sched.special_block(s)) + p * tail < wild_rho
    return {
        'r_below_t_s': r < ts,
        't_s_below_rho': ts < rho,
        'wild_image_below_threshold': 1 + p * ts < wild_rho,
        'first_block_below_threshold': first_block,
        'bracket': wild_rho < r < ts < rho,
    }
