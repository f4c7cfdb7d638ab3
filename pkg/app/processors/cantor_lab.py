"""
Cantor-set diameters and base-B digit decomposition

A 0/1 sequence beta is turned into an increasing sequence (l_s) whose
series value is the affine image R + R' * sum beta(m)/B^m with
B = p^(2q(q+1)). Every beta handled here is eventually constant, so both
sides are exact rationals.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Tuple

from app.processors.errors import RejectedInputError, VerificationFailure
from app.processors.scale_core import (
    EllSpec,
    PrimeParams,
    format_ells,
    format_rational,
    periodic_series_sum,
    schedule,
    t0_partial_sum,
    t0_sum,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BetaSeq:
    """beta(m) = prefix[m] for m < len(prefix), tail afterwards"""

    prefix: Tuple[int, ...] = ()
    tail: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'prefix', tuple(int(b) for b in self.prefix))
        if any(b not in (0, 1) for b in self.prefix) or self.tail not in (0, 1):
            raise RejectedInputError("beta bits must be 0 or 1")

    def __call__(self, m: int) -> int:
        return self.prefix[m] if m < len(self.prefix) else self.tail


def parse_beta(text: str) -> BetaSeq:
    """Parse "bits;tail=b", e.g. "101;tail=0" (bits may be empty)"""
    raw = str(text).strip()
    bits, sep, tail = raw.partition(';')
    key, eq, value = tail.partition('=')
    if not sep or key.strip() != 'tail' or not eq or value.strip() not in ('0', '1'):
        raise RejectedInputError(f"bad beta {text!r}; expected 'bits;tail=b'")
    bits = bits.strip()
    if any(ch not in '01' for ch in bits):
        raise RejectedInputError(f"beta bits must be 0/1, got {bits!r}")
    return BetaSeq(tuple(int(ch) for ch in bits), int(value))


def format_beta(beta: BetaSeq) -> str:
    return ''.join(str(b) for b in beta.prefix) + f";tail={beta.tail}"


def _next_u(beta: BetaSeq, u: int) -> int:
    if u % 2 == 1 or beta(u // 2) == 1:
        return u + 1
    return u + 2


def u_sequence(beta: BetaSeq, count: int) -> List[int]:
    """First `count` terms of u_0 = 0, u_{v+1} = u_v + 1 or + 2"""
    if count < 1:
        raise RejectedInputError(f"count must be >= 1, got {count}")
    values = [0]
    while len(values) < count:
        values.append(_next_u(beta, values[-1]))
    return values


def _settled_index(beta: BetaSeq) -> int:
    """First v with u_v even and past the prefix; the gaps are constant from there"""
    v, u = 0, 0
    while u % 2 == 1 or u // 2 < len(beta.prefix):
        u = _next_u(beta, u)
        v += 1
    return v


def ells_from_beta(params: PrimeParams, beta: BetaSeq) -> EllSpec:
    """
    l_{vq+r} = (q+1) u_v - v + r as an EllSpec

    Inside a group of q indices the increment is 1; across a group
    boundary it is (q+1)(u_{v+1} - u_v) - q.
    """
    q = params.q
    settled = _settled_index(beta)
    u = u_sequence(beta, settled + 1)
    prefix: List[int] = []
    for v in range(settled):
        prefix.extend([1] * (q - 1))
        prefix.append((q + 1) * (u[v + 1] - u[v]) - q)
    gap = 1 if beta.tail == 1 else 2
    cycle = [1] * (q - 1) + [(q + 1) * gap - q]
    return EllSpec(tuple(prefix), tuple(cycle))


def ell_values_from_beta(params: PrimeParams, beta: BetaSeq, count: int) -> List[int]:
    """l_0 .. l_{count-1} straight from the group formula"""
    q = params.q
    u = u_sequence(beta, count // q + 2)
    return [(q + 1) * u[s // q] - s // q + s % q for s in range(count)]


@dataclass(frozen=True)
class CantorConstants:
    """
    Constants of the affine identity

    F is the value that makes the E-F rewriting of the series hold for
    l_{vq+r} = (q+1) u_v - v + r. F_printed is the variant whose
    inequality chain certifies R' != 0 with a positive sign; both chains
    are checked.
    """

    params: PrimeParams
    P: int
    Q: int
    B: int
    E: Fraction
    F: Fraction
    F_printed: Fraction
    R: Fraction
    R_prime: Fraction
    chain: Dict[str, bool]

    @property
    def chain_holds(self) -> bool:
        return all(self.chain.values())

    def to_dict(self) -> Dict[str, object]:
        return {
            'P': self.P,
            'Q': self.Q,
            'B': self.B,
            'E': format_rational(self.E),
            'F': format_rational(self.F),
            'F_printed': format_rational(self.F_printed),
            'R': format_rational(self.R),
            'R_prime': format_rational(self.R_prime),
            'chain': dict(self.chain),
            'chain_holds': self.chain_holds,
        }


def cantor_constants(params: PrimeParams) -> CantorConstants:
    """
    Compute P, Q, E, F, R, R' and check the chain proving R' != 0

    Raises:
        VerificationFailure: if some inequality of the chain fails
    """
    p, q, kappa = params.p, params.q, params.kappa
    cube = 2 * (p - 1) ** 3
    P = p ** (q * (q + 1))
    Q = p ** (cube * (q + 1))
    B = P * P
    E = ((1 - kappa / p ** cube) * sum((Fraction(1, p ** ((q + 1) * r)) for r in range(q - 1)), Fraction(0))
         + Fraction(1, p ** (q * q - 1)))
    F = kappa * p ** (cube * q) / (E * p ** (q * q - 1))
    F_printed = kappa / (E * p ** (q * q - 1) * p ** (cube * q))

    R = E * (1 - F / Q ** 2) * Fraction(P ** 2, P ** 2 - 1)
    R_prime = E * ((1 - F / Q) * (1 + Fraction(1, P)) - (1 - F / Q ** 2))
    R_prime_printed = E * ((1 - F_printed / Q) * (1 + Fraction(1, P)) - (1 - F_printed / Q ** 2))

    FP = F_printed * P
    lifted = (1 - Fraction(1, Q * P)) * (1 + Fraction(1, P))
    chain = {
        'E_positive': E > 0,
        'kappa_at_most_one': kappa <= 1,
        'scaled_E_lower_bound': p ** cube * E >= p ** cube - kappa >= 1,
        'FP_identity': FP == kappa * p ** (q + 1) / (p ** (cube * q) * E),
        'FP_bound': FP <= Fraction(p ** (q + 1), p ** (cube * (q - 1))) <= Fraction(1, p ** (q - 3)) <= 1,
        'upper_product_bound': (1 - F_printed / Q) * (1 + Fraction(1, P)) >= lifted > 1 > 1 - F_printed / Q ** 2,
        'printed_R_prime_positive': R_prime_printed > 0,
        'F_over_Q_exceeds_inverse_P': F / Q > Fraction(1, P),
        'R_prime_negative': R_prime < 0,
    }
    constants = CantorConstants(params=params, P=P, Q=Q, B=B, E=E, F=F, F_printed=F_printed,
                                R=R, R_prime=R_prime, chain=chain)
    failed = [name for name, ok in chain.items() if not ok]
    if failed or R_prime == 0:
        raise VerificationFailure(f"cantor constants p={p}", message=f"inequality chain failed: {failed}")
    logger.info(f"Cantor constants for p={p}: R'={format_rational(R_prime)}")
    return constants


def beta_sum(beta: BetaSeq, base: int) -> Fraction:
    """sum_m beta(m) / base^m, exact"""
    head = sum((Fraction(b, base ** m) for m, b in enumerate(beta.prefix)), Fraction(0))
    if beta.tail == 0:
        return head
    return head + Fraction(1, base ** len(beta.prefix)) * Fraction(base, base - 1)


def ef_series(constants: CantorConstants, beta: BetaSeq) -> Fraction:
    """E * sum_v P^-u_v (1 - F / Q^(u_{v+1} - u_v))"""
    P, Q, F = constants.P, constants.Q, constants.F
    settled = _settled_index(beta)
    u = u_sequence(beta, settled + 2)
    gap = 1 if beta.tail == 1 else 2

    def term(v: int) -> Fraction:
        if v <= settled:
            u_v, step = u[v], u[v + 1] - u[v]
        else:
            u_v, step = u[settled] + gap * (v - settled), gap
        return Fraction(1, P ** u_v) * (1 - F / Q ** step)

    return constants.E * periodic_series_sum(term, settled, 1, Fraction(1, P ** gap))


def verify_affine_identity(params: PrimeParams, beta: BetaSeq) -> Dict[str, object]:
    """
    Check R + R' * sum beta(m)/B^m against the series of ells_from_beta(beta)

    Returns:
        Report with both sides verbatim, the E-F form and the verdict
    """
    constants = cantor_constants(params)
    ells = ells_from_beta(params, beta)
    lhs = constants.R + constants.R_prime * beta_sum(beta, constants.B)
    rhs = t0_sum(schedule(params, ells))
    ef = ef_series(constants, beta)
    passed = lhs == rhs and ef == rhs
    if not passed:
        logger.warning(f"Affine identity failed for beta={format_beta(beta)}")
    return {
        'beta': format_beta(beta),
        'ells': format_ells(ells),
        'lhs': format_rational(lhs),
        'rhs': format_rational(rhs),
        'ef_form': format_rational(ef),
        'affine_matches_series': lhs == rhs,
        'ef_matches_series': ef == rhs,
        'passed': passed,
    }


def validate_r_truncated(params: PrimeParams, terms: int) -> Dict[str, object]:
    """
    Compare R with a truncated direct sum of the series for beta = 0

    For beta = 0 the series equals R, so the partial sums must approach R
    from below within the geometric tail bound.
    """
    if terms < 1:
        raise RejectedInputError(f"terms must be >= 1, got {terms}")
    p, q = params.p, params.q
    constants = cantor_constants(params)
    sched = schedule(params, ells_from_beta(params, BetaSeq((), 0)))
    partial = t0_partial_sum(sched, terms)
    bound = Fraction(1, p ** (q * sched.ell(terms) + terms)) / (1 - Fraction(1, p ** (q + 1)))
    gap = constants.R - partial
    return {
        'terms': terms,
        'partial': format_rational(partial),
        'R': format_rational(constants.R),
        'bound': format_rational(bound),
        'passed': 0 <= gap <= bound,
    }


@dataclass(frozen=True)
class DigitExpansion:
    """Finite base-B expansion: value = sum_m digits[m] / base^m"""

    base: int
    digits: Tuple[int, ...]

    def value(self) -> Fraction:
        return sum((Fraction(d, self.base ** m) for m, d in enumerate(self.digits)), Fraction(0))


@dataclass(frozen=True)
class Decomposition:
    """
    tau split into B-1 sequences beta^(j), beta^(j)(m) = 1 iff j <= d(m)

    The family is implicit; beta(j) and tau_part(j) build one member on
    demand.
    """

    tau: Fraction
    expansion: DigitExpansion
    counts: Tuple[int, ...]

    def beta(self, j: int) -> BetaSeq:
        if not 1 <= j <= self.expansion.base - 1:
            raise RejectedInputError(f"j must lie in 1..B-1, got {j}")
        return BetaSeq(tuple(1 if j <= d else 0 for d in self.expansion.digits), 0)

    def tau_part(self, j: int) -> Fraction:
        return beta_sum(self.beta(j), self.expansion.base)

    def reconstruction(self) -> Fraction:
        base = self.expansion.base
        return sum((Fraction(c, base ** m) for m, c in enumerate(self.counts)), Fraction(0))

    def to_dict(self) -> Dict[str, object]:
        return {
            'tau': format_rational(self.tau),
            'base': self.expansion.base,
            'digits': list(self.expansion.digits),
            'counts': list(self.counts),
            'counts_match_digits': list(self.counts) == list(self.expansion.digits),
            'reconstruction': format_rational(self.reconstruction()),
            'passed': self.reconstruction() == self.tau and list(self.counts) == list(self.expansion.digits),
        }


def digit_decompose(tau: Fraction, params: PrimeParams) -> Decomposition:
    """
    Split tau in [0, 1) with a finite base-B expansion into its digit family

    The number of j in 1..B-1 with j <= d(m) is counted with a range
    length, never by enumerating the family.

    Raises:
        RejectedInputError: tau outside [0, 1) or without a finite expansion
    """
    tau = Fraction(tau)
    if not 0 <= tau < 1:
        raise RejectedInputError(f"tau must lie in [0, 1), got {format_rational(tau)}")
    p, q = params.p, params.q
    base = p ** (2 * q * (q + 1))
    den = tau.denominator
    power = 0
    while den % p == 0:
        den //= p
        power += 1
    if den != 1:
        raise RejectedInputError(f"tau {format_rational(tau)} has no finite base-{p}^{2 * q * (q + 1)} expansion")
    length = -(-power // (2 * q * (q + 1)))

    scaled = tau * base ** length
    digits = []
    numerator = scaled.numerator
    for _ in range(length):
        numerator, digit = divmod(numerator, base)
        digits.append(digit)
    digits.append(0)
    digits.reverse()

    counts = tuple(len(range(1, min(d, base - 1) + 1)) for d in digits)
    decomposition = Decomposition(tau=tau, expansion=DigitExpansion(base, tuple(digits)), counts=counts)
    if decomposition.reconstruction() != tau or decomposition.expansion.value() != tau:
        raise VerificationFailure(f"decomposition of {format_rational(tau)}", tau, decomposition.reconstruction())
    return decomposition
