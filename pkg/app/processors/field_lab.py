"""
Truncated arithmetic in Q_p(pi), pi^e = p, and valuation checks of the
contraction and perturbation lemmas

An element is stored as p^-shift * sum_{j<e} A_j pi^j with integer A_j,
known modulo pi^precision (absolute, in pi-units). Valuations are
normalized so that v(p) = 1 and therefore live in (1/e)Z. Whenever an
element cancels below its precision the valuation is reported as
unknown (PrecisionExhaustedError) instead of guessed.
"""

import logging
import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

from app.processors.errors import (
    InfeasibleConfigurationError,
    PrecisionExhaustedError,
    RejectedInputError,
)
from app.processors.scale_core import derive_constants, format_rational, rho_exponent

logger = logging.getLogger(__name__)

DEFAULT_PRECISION_PER_RAMIFICATION = 64

# valuations drawn "above a threshold" are taken from (threshold, threshold + window]
VALUATION_WINDOW = 2

MAX_LEMMA42_M = 4
MAX_LEMMA43_M = 3


def _vp(n: int, p: int) -> int:
    count = 0
    while n % p == 0:
        n //= p
        count += 1
    return count


@dataclass(frozen=True)
class PadicElement:
    """
    Element of the totally ramified extension with uniformizer pi, pi^e = p

    Args:
        p: Residue characteristic
        e: Ramification index
        shift: Power of p divided out (>= 0)
        coeffs: e integers A_j
        precision: Absolute pi-adic precision N
    """

    p: int
    e: int
    shift: int
    coeffs: Tuple[int, ...]
    precision: int

    # construction

    @staticmethod
    def _exponent_bound(p: int, e: int, shift: int, precision: int, j: int) -> int:
        """T_j with A_j known modulo p^T_j"""
        return max(0, -(-(precision - j) // e) + shift)

    @classmethod
    def build(cls, p: int, e: int, shift: int, coeffs, precision: int) -> 'PadicElement':
        """Reduce coefficients modulo their precision and strip common factors of p"""
        coeffs = [c % p ** cls._exponent_bound(p, e, shift, precision, j) for j, c in enumerate(coeffs)]
        while shift > 0 and all(c % p == 0 for c in coeffs):
            coeffs = [c // p for c in coeffs]
            shift -= 1
        return cls(p=p, e=e, shift=shift, coeffs=tuple(coeffs), precision=precision)

    @classmethod
    def zero(cls, p: int, e: int, precision: int) -> 'PadicElement':
        return cls(p=p, e=e, shift=0, coeffs=(0,) * e, precision=precision)

    @classmethod
    def from_fraction(cls, value, p: int, e: int, precision: int) -> 'PadicElement':
        """Embed a rational number"""
        value = Fraction(value)
        if value == 0:
            return cls.zero(p, e, precision)
        num, den = value.numerator, value.denominator
        v = _vp(num, p) - _vp(den, p)
        unit_num = num // p ** _vp(num, p)
        unit_den = den // p ** _vp(den, p)
        shift = max(0, -v)
        bound = cls._exponent_bound(p, e, shift, precision, 0)
        modulus = p ** bound
        unit = unit_num * pow(unit_den, -1, modulus) if modulus > 1 else 0
        coeffs = [unit * p ** max(0, v)] + [0] * (e - 1)
        return cls.build(p, e, shift, coeffs, precision)

    @classmethod
    def uniformizer_power(cls, k: int, p: int, e: int, precision: int) -> 'PadicElement':
        """pi^k for any integer k"""
        t, j = divmod(k, e)
        coeffs = [0] * e
        if t >= 0:
            coeffs[j] = p ** t
            return cls.build(p, e, 0, coeffs, precision)
        coeffs[j] = 1
        return cls.build(p, e, -t, coeffs, precision)

    @classmethod
    def random_unit(cls, rng: random.Random, p: int, e: int, precision: int) -> 'PadicElement':
        """Random unit: nonzero constant digit, every other digit uniform"""
        coeffs = []
        for j in range(e):
            bound = cls._exponent_bound(p, e, 0, precision, j)
            if j == 0:
                if bound < 1:
                    raise PrecisionExhaustedError(f"precision {precision} leaves no room for a unit")
                coeffs.append(rng.randrange(1, p) + p * rng.randrange(p ** (bound - 1)))
            else:
                coeffs.append(rng.randrange(p ** bound) if bound else 0)
        return cls.build(p, e, 0, coeffs, precision)

    @classmethod
    def random_at_valuation(cls, rng: random.Random, valuation: Fraction, p: int, e: int,
                            precision: int) -> 'PadicElement':
        """pi^(e*valuation) times a random unit"""
        k = Fraction(valuation) * e
        if k.denominator != 1:
            raise InfeasibleConfigurationError(f"valuation {format_rational(valuation)} is not in (1/{e})Z")
        return cls.uniformizer_power(int(k), p, e, precision) * cls.random_unit(rng, p, e, precision)

    # inspection

    def _check_compatible(self, other: 'PadicElement'):
        if (self.p, self.e) != (other.p, other.e):
            raise RejectedInputError(f"mismatched fields: p={self.p}, e={self.e} vs p={other.p}, e={other.e}")

    def _pi_valuation(self) -> Optional[int]:
        best = None
        for j, c in enumerate(self.coeffs):
            if c:
                v = j + self.e * (_vp(c, self.p) - self.shift)
                best = v if best is None else min(best, v)
        return best

    def is_zero(self) -> bool:
        return self._pi_valuation() is None

    def valuation(self) -> Fraction:
        """v(x) normalized with v(p) = 1"""
        v = self._pi_valuation()
        if v is None:
            raise PrecisionExhaustedError(f"element is zero modulo pi^{self.precision}")
        return Fraction(v, self.e)

    def _valuation_floor(self) -> int:
        v = self._pi_valuation()
        return self.precision if v is None else v

    def digits(self) -> Dict[int, int]:
        """Nonzero pi-adic digits c_i of sum c_i pi^i, i < precision"""
        out = {}
        for j, c in enumerate(self.coeffs):
            t = 0
            while c:
                c, digit = divmod(c, self.p)
                i = j + self.e * (t - self.shift)
                if digit and i < self.precision:
                    out[i] = digit
                t += 1
        return dict(sorted(out.items()))

    def to_dict(self) -> Dict[str, object]:
        return {
            'p': self.p,
            'e': self.e,
            'precision': self.precision,
            'digits': {str(i): d for i, d in self.digits().items()},
        }

    # arithmetic

    def _aligned(self, other: 'PadicElement') -> Tuple[int, List[int], List[int]]:
        shift = max(self.shift, other.shift)
        a = [c * self.p ** (shift - self.shift) for c in self.coeffs]
        b = [c * other.p ** (shift - other.shift) for c in other.coeffs]
        return shift, a, b

    def __add__(self, other: 'PadicElement') -> 'PadicElement':
        self._check_compatible(other)
        shift, a, b = self._aligned(other)
        return self.build(self.p, self.e, shift, [x + y for x, y in zip(a, b)],
                          min(self.precision, other.precision))

    def __neg__(self) -> 'PadicElement':
        return self.build(self.p, self.e, self.shift, [-c for c in self.coeffs], self.precision)

    def __sub__(self, other: 'PadicElement') -> 'PadicElement':
        return self + (-other)

    def __mul__(self, other: 'PadicElement') -> 'PadicElement':
        self._check_compatible(other)
        p, e = self.p, self.e
        raw = [0] * e
        for i, x in enumerate(self.coeffs):
            if not x:
                continue
            for k, y in enumerate(other.coeffs):
                idx = i + k
                if idx >= e:
                    raw[idx - e] += x * y * p
                else:
                    raw[idx] += x * y
        precision = min(self.precision + other._valuation_floor(), other.precision + self._valuation_floor())
        return self.build(p, e, self.shift + other.shift, raw, precision)

    def __pow__(self, n: int) -> 'PadicElement':
        if n < 0:
            raise RejectedInputError("negative powers are not supported")
        result = PadicElement.from_fraction(1, self.p, self.e, self.precision)
        for _ in range(n):
            result = result * self
        return result

    def agrees_with(self, other: 'PadicElement') -> bool:
        """Equal modulo the smaller of the two precisions"""
        return (self - other).is_zero()


def arith(op: str, x: PadicElement, y) -> PadicElement:
    """
    add, sub, mul of two elements, or pow with an integer exponent

    Raises:
        PrecisionExhaustedError: the result is zero at its tracked precision
    """
    if op == 'add':
        result = x + y
    elif op == 'sub':
        result = x - y
    elif op == 'mul':
        result = x * y
    elif op == 'pow':
        result = x ** int(y)
    else:
        raise RejectedInputError(f"unknown operation {op!r}")
    if result.is_zero():
        raise PrecisionExhaustedError(f"{op} result is zero modulo pi^{result.precision}")
    return result


@dataclass(frozen=True)
class LabConfig:
    """
    Field and parameter configuration

    Args:
        p: Prime
        e: Ramification index
        v_a: Valuation of the parameter a, -(p-1) <= v_a < 0, in (1/e)Z
        seed: Seed of the trial generator
        precision: Absolute pi-adic precision (defaults to 64 e)
    """

    p: int
    e: int
    v_a: Fraction
    seed: int
    precision: Optional[int] = None

    def __post_init__(self):
        derive_constants(self.p)
        if self.e < 1:
            raise RejectedInputError(f"e must be >= 1, got {self.e}")
        object.__setattr__(self, 'v_a', Fraction(self.v_a))
        if self.precision is None:
            object.__setattr__(self, 'precision', DEFAULT_PRECISION_PER_RAMIFICATION * self.e)
        if self.precision < 1:
            raise RejectedInputError(f"precision must be >= 1, got {self.precision}")
        if not -(self.p - 1) <= self.v_a < 0:
            raise RejectedInputError(f"v_a must satisfy -(p-1) <= v_a < 0, got {format_rational(self.v_a)}")
        if (self.v_a * self.e).denominator != 1:
            raise InfeasibleConfigurationError(f"v_a {format_rational(self.v_a)} is not in (1/{self.e})Z")

    def to_dict(self) -> Dict[str, object]:
        return {'p': self.p, 'e': self.e, 'v_a': format_rational(self.v_a),
                'seed': self.seed, 'precision': self.precision}

    def element(self, value) -> PadicElement:
        return PadicElement.from_fraction(value, self.p, self.e, self.precision)

    def random_at(self, rng: random.Random, valuation: Fraction) -> PadicElement:
        return PadicElement.random_at_valuation(rng, valuation, self.p, self.e, self.precision)


def eval_P(config: LabConfig, a: PadicElement, z: PadicElement) -> PadicElement:
    """a z^p + (1 - a) z^(p+1) in truncated arithmetic"""
    if z.is_zero():
        return PadicElement.zero(config.p, config.e, z.precision)
    one = config.element(1)
    zp = z ** config.p
    result = a * zp + (one - a) * (zp * z)
    if result.is_zero():
        raise PrecisionExhaustedError(f"P(z) is zero modulo pi^{result.precision}")
    return result


def iterate_P(config: LabConfig, a: PadicElement, z: PadicElement, n: int) -> PadicElement:
    for _ in range(n):
        z = eval_P(config, a, z)
    return z


def _grid(e: int, lo: Fraction, hi: Fraction, include_hi: bool = False) -> List[Fraction]:
    """Points of (1/e)Z in (lo, hi), or (lo, hi] with include_hi"""
    start = math.floor(lo * e) + 1
    points = []
    k = start
    while Fraction(k, e) < hi or (include_hi and Fraction(k, e) == hi):
        points.append(Fraction(k, e))
        k += 1
    return points


def _sphere_valuation(config: LabConfig, m: int) -> Tuple[Fraction, Fraction]:
    """(v(x) for |x| = rho_m, valuation of rho_m^(p/(p-1)))"""
    params = derive_constants(config.p)
    vx = rho_exponent(params, m) * config.v_a
    if (vx * config.e).denominator != 1:
        raise InfeasibleConfigurationError(
            f"|x| = rho_{m}(a) needs valuation {format_rational(vx)}, not in (1/{config.e})Z")
    threshold = Fraction(config.p, config.p - 1) * vx
    return vx, threshold


def _trial_rng(config: LabConfig, label: str, trial: int) -> random.Random:
    return random.Random(f"{config.seed}:{label}:{trial}")


def _run_trials(config: LabConfig, label: str, trials: int,
                trial: Callable[[random.Random], Dict[str, object]]) -> Dict[str, object]:
    if trials < 1:
        raise RejectedInputError(f"trials must be >= 1, got {trials}")
    started = time.perf_counter()
    failures = []
    passed = 0
    for index in range(trials):
        outcome = trial(_trial_rng(config, label, index))
        if outcome['passed']:
            passed += 1
        else:
            outcome['trial'] = index
            failures.append(outcome)
    if failures:
        logger.warning(f"{label}: {len(failures)}/{trials} trials failed")
    else:
        logger.info(f"{label}: {trials}/{trials} trials passed")
    return {
        'config': config.to_dict(),
        'check': label,
        'trials': trials,
        'passed_trials': passed,
        'failed_trials': len(failures),
        'failures': failures,
        'passed': not failures,
        'wall_time_ms': int((time.perf_counter() - started) * 1000),
    }


def _outcome(observed: Fraction, predicted: Fraction, operands: Dict[str, PadicElement]) -> Dict[str, object]:
    passed = observed == predicted
    outcome = {
        'observed': format_rational(observed),
        'predicted': format_rational(predicted),
        'passed': passed,
    }
    if not passed:
        outcome['operands'] = {name: element.to_dict() for name, element in operands.items()}
    return outcome


def contraction_witness(config: LabConfig, item: int, m: int, a: PadicElement,
                        x: PadicElement, x_prime: PadicElement) -> Dict[str, object]:
    """
    Compare v(P(x') - P(x)) with the contraction lemma for given points

    Item 1 predicts c_{m-1} v_a + v(x - x'), item 2 predicts
    v_a + p v(x - x'), item 3 predicts v_a + v(x - x').
    """
    params = derive_constants(config.p)
    gap = (x_prime - x).valuation()
    if item == 1:
        predicted = rho_exponent(params, m - 1) * config.v_a + gap
    elif item == 2:
        predicted = config.v_a + config.p * gap
    elif item == 3:
        predicted = config.v_a + gap
    else:
        raise RejectedInputError(f"item must be 1, 2 or 3, got {item}")
    observed = (eval_P(config, a, x_prime) - eval_P(config, a, x)).valuation()
    return _outcome(observed, predicted, {'a': a, 'x': x, 'x_prime': x_prime})


def check_contraction_lemma(config: LabConfig, item: int, m: int, trials: int) -> Dict[str, object]:
    """
    Random trials of the three cases of the contraction lemma

    Args:
        config: Field configuration
        item: 1 (tame), 2 (wild) or 3 (near the fixed point 1)
        m: Sphere index of x for items 1 and 2
        trials: Number of trials

    Returns:
        Report with pass/fail counts and operand dumps for failures
    """
    if item not in (1, 2, 3):
        raise RejectedInputError(f"item must be 1, 2 or 3, got {item}")
    if item in (1, 2) and m < 1:
        raise RejectedInputError(f"m must be >= 1, got {m}")
    e = config.e

    if item == 3:
        near_one = _grid(e, Fraction(0), Fraction(VALUATION_WINDOW), include_hi=True)

        def trial(rng: random.Random) -> Dict[str, object]:
            a = config.random_at(rng, config.v_a)
            y = config.element(1) + config.random_at(rng, rng.choice(near_one))
            y_prime = y + config.random_at(rng, rng.choice(near_one))
            return contraction_witness(config, 3, m, a, y, y_prime)
    else:
        vx, threshold = _sphere_valuation(config, m)
        if item == 1:
            allowed = _grid(e, threshold, threshold + VALUATION_WINDOW, include_hi=True)
        else:
            allowed = _grid(e, vx, threshold)
        if not allowed:
            raise InfeasibleConfigurationError(
                f"no valuation in (1/{e})Z for item {item} at m={m}; try a larger e")

        def trial(rng: random.Random) -> Dict[str, object]:
            a = config.random_at(rng, config.v_a)
            x = config.random_at(rng, vx)
            x_prime = x + config.random_at(rng, rng.choice(allowed))
            return contraction_witness(config, item, m, a, x, x_prime)

    report = _run_trials(config, f"contraction_item{item}", trials, trial)
    report.update({'item': item, 'm': m})
    return report


def _lemma42_trial(config: LabConfig, M: int, rng: random.Random) -> Dict[str, object]:
    depth = -M * config.v_a
    allowed = _grid(config.e, depth - Fraction(1, config.e), depth + VALUATION_WINDOW, include_hi=True)
    a = config.random_at(rng, config.v_a)
    y = config.element(1) + config.random_at(rng, rng.choice(allowed))
    y_prime = y + config.random_at(rng, rng.choice(allowed))
    gap = (y - y_prime).valuation()
    a_prime = a + config.random_at(rng, gap + config.v_a)
    shift = (a - a_prime).valuation()
    observed = (iterate_P(config, a, y, M) - iterate_P(config, a_prime, y_prime, M)).valuation()
    predicted = (M - 1) * config.v_a + shift
    return _outcome(observed, predicted, {'a': a, 'a_prime': a_prime, 'y': y, 'y_prime': y_prime})


def _lemma43_pairs(config: LabConfig, m: int) -> Tuple[Fraction, List[Tuple[Fraction, Fraction]]]:
    params = derive_constants(config.p)
    vx, threshold = _sphere_valuation(config, m)
    contraction = sum((rho_exponent(params, j) * config.v_a for j in range(1, m)), Fraction(0))
    pairs = []
    for v_eps in _grid(config.e, threshold, threshold + VALUATION_WINDOW, include_hi=True):
        for w in _grid(config.e, threshold, min(contraction + v_eps, threshold + VALUATION_WINDOW)):
            pairs.append((v_eps, w))
    return vx, pairs


def _lemma43_trial(config: LabConfig, m: int, vx: Fraction, pairs, rng: random.Random) -> Dict[str, object]:
    v_eps, w = rng.choice(pairs)
    a = config.random_at(rng, config.v_a)
    a_prime = a + config.random_at(rng, w + config.v_a)
    x = config.random_at(rng, vx)
    x_prime = x + config.random_at(rng, v_eps)
    observed = (iterate_P(config, a, x, m) - iterate_P(config, a_prime, x_prime, m)).valuation()
    predicted = (a - a_prime).valuation() - config.v_a
    return _outcome(observed, predicted, {'a': a, 'a_prime': a_prime, 'x': x, 'x_prime': x_prime})


def degenerate_control(config: LabConfig, steps: int) -> bool:
    """Identical parameters and points must leave no measurable difference"""
    rng = _trial_rng(config, 'control', 0)
    a = config.random_at(rng, config.v_a)
    # deep inside B(1) so the orbit stays bounded
    x = config.element(1) + config.random_at(rng, steps * -config.v_a + VALUATION_WINDOW)
    try:
        (iterate_P(config, a, x, steps) - iterate_P(config, a, x, steps)).valuation()
    except PrecisionExhaustedError:
        return True
    return False


def check_perturbation_lemmas(config: LabConfig, which: str, size: int, trials: int) -> Dict[str, object]:
    """
    Random trials of the parameter-perturbation lemmas

    Args:
        config: Field configuration
        which: 'lemma42' (orbits near the fixed point 1, size = M <= 4)
            or 'lemma43' (orbits through the spheres, size = m <= 3)
        size: M or m
        trials: Number of trials

    Returns:
        Report with pass/fail counts and the degenerate control outcome
    """
    if which == 'lemma42':
        if not 1 <= size <= MAX_LEMMA42_M:
            raise RejectedInputError(f"M must lie in 1..{MAX_LEMMA42_M}, got {size}")
        report = _run_trials(config, 'lemma42', trials, lambda rng: _lemma42_trial(config, size, rng))
        report['M'] = size
    elif which == 'lemma43':
        if not 1 <= size <= MAX_LEMMA43_M:
            raise RejectedInputError(f"m must lie in 1..{MAX_LEMMA43_M}, got {size}")
        vx, pairs = _lemma43_pairs(config, size)
        if not pairs:
            raise InfeasibleConfigurationError(f"no admissible |a - a'| in (1/{config.e})Z at m={size}")
        report = _run_trials(config, 'lemma43', trials, lambda rng: _lemma43_trial(config, size, vx, pairs, rng))
        report['m'] = size
    else:
        raise RejectedInputError(f"which must be 'lemma42' or 'lemma43', got {which!r}")
    report['degenerate_control_passed'] = degenerate_control(config, size)
    return report


def check_escape(config: LabConfig, trials: int) -> Dict[str, object]:
    """v(P(z)) = v_a + (p+1) v(z) whenever v(z) < 0"""
    outside = [v for v in _grid(config.e, Fraction(-VALUATION_WINDOW) - 1, Fraction(0))]

    def trial(rng: random.Random) -> Dict[str, object]:
        a = config.random_at(rng, config.v_a)
        z = config.random_at(rng, rng.choice(outside))
        predicted = config.v_a + (config.p + 1) * z.valuation()
        return _outcome(eval_P(config, a, z).valuation(), predicted, {'a': a, 'z': z})

    return _run_trials(config, 'escape', trials, trial)


def check_field_axioms(config: LabConfig, trials: int) -> Dict[str, object]:
    """Ultrametric law and distributivity on random elements"""
    window = _grid(config.e, Fraction(-2), Fraction(VALUATION_WINDOW), include_hi=True)

    def trial(rng: random.Random) -> Dict[str, object]:
        x, y, z = (config.random_at(rng, rng.choice(window)) for _ in range(3))
        vx, vy = x.valuation(), y.valuation()
        total = x + y
        if total.is_zero():
            ultrametric = vx == vy
        else:
            vs = total.valuation()
            ultrametric = vs >= min(vx, vy) and (vx == vy or vs == min(vx, vy))
        distributive = (total * z).agrees_with(x * z + y * z)
        outcome = {'ultrametric': ultrametric, 'distributive': distributive,
                   'passed': ultrametric and distributive}
        if not outcome['passed']:
            outcome['operands'] = {'x': x.to_dict(), 'y': y.to_dict(), 'z': z.to_dict()}
        return outcome

    return _run_trials(config, 'field_axioms', trials, trial)
