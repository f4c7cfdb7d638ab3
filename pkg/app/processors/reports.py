"""
Report builders shared by the CLI, the Flask API and the MCP server

Each builder takes plain parameters (strings or numbers, as they arrive
from flags or JSON), runs one operation and returns (report, passed).
The report always carries the resolved RunConfig under 'config'.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

from app.processors.ball_flow import (
    DEFAULT_CERTIFY_BUDGET,
    DEFAULT_TRACE_CAP,
    certify_component,
    propagate,
    trace_to_json,
    verify_diameter_theorem,
)
from app.processors.cantor_lab import (
    cantor_constants,
    digit_decompose,
    ell_values_from_beta,
    ells_from_beta,
    format_beta,
    parse_beta,
    u_sequence,
    verify_affine_identity,
)
from app.processors.errors import RejectedInputError, StepError
from app.processors.field_lab import (
    LabConfig,
    check_contraction_lemma,
    check_escape,
    check_field_axioms,
    check_perturbation_lemmas,
)
from app.processors.scale_core import (
    closed_form_t,
    derive_constants,
    format_ells,
    format_rational,
    parse_ells,
    parse_rational,
    schedule,
)

logger = logging.getLogger(__name__)

Report = Tuple[Dict[str, Any], bool]

DEFAULT_TRIALS = 100


@dataclass(frozen=True)
class RunConfig:
    """Resolved command and options; enough to reproduce a report"""

    command: str
    p: int
    options: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {'command': self.command, 'p': self.p, **dict(sorted(self.options.items()))}


def _required(params: Dict[str, Any], key: str) -> Any:
    value = params.get(key)
    if value is None or value == '':
        raise RejectedInputError(f"missing parameter '{key}'")
    return value


def _int(params: Dict[str, Any], key: str, default: Optional[int] = None) -> int:
    value = params.get(key, default)
    if value is None:
        raise RejectedInputError(f"missing parameter '{key}'")
    if isinstance(value, bool):
        raise RejectedInputError(f"parameter '{key}' must be an integer")
    try:
        return int(value)
    except (TypeError, ValueError) as e:
        raise RejectedInputError(f"parameter '{key}' must be an integer, got {value!r}") from e


def _schedule(params: Dict[str, Any]):
    prime = derive_constants(_int(params, 'p'))
    ells = parse_ells(params.get('ells') or 'id')
    return prime, ells, schedule(prime, ells)


def constants_report(params: Dict[str, Any]) -> Report:
    prime = derive_constants(_int(params, 'p'))
    constants = cantor_constants(prime)
    config = RunConfig('constants', prime.p)
    report = {
        'config': config.to_dict(),
        'params': prime.to_dict(),
        'cantor': constants.to_dict(),
    }
    return report, constants.chain_holds


def verify_report(params: Dict[str, Any]) -> Report:
    prime, ells, sched = _schedule(params)
    s_max = _int(params, 's_max')
    d0 = params.get('d0')
    result = verify_diameter_theorem(sched, s_max, None if d0 is None else parse_rational(d0))
    options = {'ells': format_ells(ells), 's_max': s_max}
    if d0 is not None:
        options['d0'] = format_rational(parse_rational(d0))
    report = {'config': RunConfig('verify', prime.p, options).to_dict(), **result.to_dict()}
    return report, result.passed


def trace_report(params: Dict[str, Any]) -> Tuple[Dict[str, Any], bool, Optional[Any]]:
    """Like the other builders, plus the BallTrace for CSV emission (None on a step error)"""
    prime, ells, sched = _schedule(params)
    steps = _int(params, 'steps')
    trace_cap = _int(params, 'trace_cap', DEFAULT_TRACE_CAP)
    d0 = parse_rational(params['d0']) if params.get('d0') is not None else closed_form_t(sched)
    config = RunConfig('trace', prime.p, {
        'ells': format_ells(ells), 'steps': steps, 'd0': format_rational(d0), 'trace_cap': trace_cap,
    })
    try:
        trace = propagate(sched, d0, steps, trace_cap)
    except StepError as e:
        logger.warning(f"Trace stopped: {e}")
        report = {'config': config.to_dict(), 'error': {'kind': e.kind, 'step': e.step, 'message': str(e)}}
        return report, False, None
    return {'config': config.to_dict(), **trace_to_json(trace)}, True, trace


def certify_report(params: Dict[str, Any]) -> Report:
    prime, ells, sched = _schedule(params)
    budget = _int(params, 'budget', DEFAULT_CERTIFY_BUDGET)
    t = closed_form_t(sched)
    if params.get('tprime') is not None:
        t_prime = parse_rational(params['tprime'])
    elif params.get('gap') is not None:
        t_prime = t + parse_rational(params['gap'])
    else:
        raise RejectedInputError("one of 'tprime' or 'gap' is required")
    certificate = certify_component(sched, t_prime, budget)
    config = RunConfig('certify', prime.p, {
        'ells': format_ells(ells), 'tprime': format_rational(t_prime), 'budget': budget,
    })
    report = {'config': config.to_dict(), 't': format_rational(t), **certificate.to_dict()}
    return report, certificate.growth_ok


def cantor_identity_report(params: Dict[str, Any]) -> Report:
    prime = derive_constants(_int(params, 'p'))
    beta = parse_beta(_required(params, 'beta'))
    result = verify_affine_identity(prime, beta)
    config = RunConfig('cantor identity', prime.p, {'beta': format_beta(beta)})
    return {'config': config.to_dict(), **result}, bool(result['passed'])


def cantor_constants_report(params: Dict[str, Any]) -> Report:
    prime = derive_constants(_int(params, 'p'))
    constants = cantor_constants(prime)
    config = RunConfig('cantor constants', prime.p)
    return {'config': config.to_dict(), **constants.to_dict()}, constants.chain_holds


def cantor_ells_report(params: Dict[str, Any]) -> Report:
    prime = derive_constants(_int(params, 'p'))
    beta = parse_beta(_required(params, 'beta'))
    count = _int(params, 'count', 12)
    ells = ells_from_beta(prime, beta)
    direct = ell_values_from_beta(prime, beta, count)
    listed = [ells.ell(s) for s in range(count)]
    config = RunConfig('cantor ells', prime.p, {'beta': format_beta(beta), 'count': count})
    report = {
        'config': config.to_dict(),
        'u': u_sequence(beta, count),
        'ells': format_ells(ells),
        'values': listed,
        'matches_direct': listed == direct,
    }
    return report, listed == direct


def decompose_report(params: Dict[str, Any]) -> Report:
    prime = derive_constants(_int(params, 'p'))
    tau = parse_rational(_required(params, 'tau'))
    decomposition = digit_decompose(tau, prime)
    result = decomposition.to_dict()
    config = RunConfig('decompose', prime.p, {'tau': format_rational(tau)})
    return {'config': config.to_dict(), **result}, bool(result['passed'])


def _lab_config(params: Dict[str, Any]) -> LabConfig:
    precision = params.get('precision')
    return LabConfig(
        p=_int(params, 'p'),
        e=_int(params, 'e'),
        v_a=parse_rational(params.get('va', -1)),
        seed=_int(params, 'seed'),
        precision=None if precision is None else _int(params, 'precision'),
    )


def _fieldlab(command: str, params: Dict[str, Any], run: Callable[[LabConfig, int], Dict[str, Any]],
              options: Dict[str, Any]) -> Report:
    config = _lab_config(params)
    trials = _int(params, 'trials', DEFAULT_TRIALS)
    result = run(config, trials)
    echo = RunConfig(command, config.p, {**config.to_dict(), **options, 'trials': trials})
    passed = bool(result['passed']) and result.get('degenerate_control_passed', True)
    return {**result, 'config': echo.to_dict()}, passed


def lemma32_report(params: Dict[str, Any]) -> Report:
    item = _int(params, 'item')
    m = _int(params, 'm', 1)
    return _fieldlab('fieldlab lemma32', params,
                     lambda config, trials: check_contraction_lemma(config, item, m, trials),
                     {'item': item, 'm': m})


def perturbation_report(params: Dict[str, Any]) -> Report:
    which = str(_required(params, 'which'))
    size = _int(params, 'size')
    return _fieldlab('fieldlab perturbation', params,
                     lambda config, trials: check_perturbation_lemmas(config, which, size, trials),
                     {'which': which, 'size': size})


def escape_report(params: Dict[str, Any]) -> Report:
    return _fieldlab('fieldlab escape', params, check_escape, {})


def axioms_report(params: Dict[str, Any]) -> Report:
    return _fieldlab('fieldlab axioms', params, check_field_axioms, {})


BUILDERS: Dict[str, Callable[[Dict[str, Any]], Report]] = {
    'constants': constants_report,
    'verify': verify_report,
    'certify': certify_report,
    'cantor_identity': cantor_identity_report,
    'cantor_constants': cantor_constants_report,
    'cantor_ells': cantor_ells_report,
    'decompose': decompose_report,
    'fieldlab_lemma32': lemma32_report,
    'fieldlab_perturbation': perturbation_report,
    'fieldlab_escape': escape_report,
    'fieldlab_axioms': axioms_report,
}


def build_report(command: str, params: Dict[str, Any]) -> Report:
    """
    Run a command by name

    Args:
        command: Key of BUILDERS, or 'trace'
        params: Command parameters

    Returns:
        (report, passed)
    """
    if command == 'trace':
        report, passed, _ = trace_report(params)
        return report, passed
    builder = BUILDERS.get(command)
    if builder is None:
        raise RejectedInputError(f"unknown command {command!r}")
    logger.info(f"Running {command}")
    return builder(params)
