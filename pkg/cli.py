#!/usr/bin/env python3
"""
Command line for the diameter lab

Usage:
    python cli.py constants --p 2
    python cli.py verify --p 2 --ells id --s-max 5
    python cli.py trace --p 2 --ells id --steps 8 --format csv
    python cli.py certify --p 2 --ells id --gap 1/100
    python cli.py cantor identity --p 2 --beta "101;tail=0"
    python cli.py decompose --p 2 --tau 1/16777216
    python cli.py fieldlab lemma32 --p 2 --e 4 --m 1 --item 2 --trials 100 --seed 7

Exit codes: 0 every check passed, 1 a mathematical check failed,
2 usage or configuration error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.processors.errors import (
    InfeasibleConfigurationError,
    LabError,
    PrecisionExhaustedError,
    RejectedInputError,
)
from app.processors.report_store import ReportStore
from app.processors.reports import build_report, trace_report
from app.processors.ball_flow import DEFAULT_CERTIFY_BUDGET, DEFAULT_TRACE_CAP, trace_to_csv

logger = logging.getLogger('cli')

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

# argparse bookkeeping that is not a command parameter
_NON_PARAMS = {'func', 'command', 'cantor_command', 'fieldlab_command', 'out', 'archive', 'verbose', 'format'}


def _params(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in _NON_PARAMS and v is not None}


def _write(args: argparse.Namespace, text: str):
    if args.out:
        Path(args.out).write_text(text, encoding='utf-8')
        logger.info(f"Report written to {args.out}")
    else:
        sys.stdout.write(text)


def _finish(args: argparse.Namespace, command: str, report: Dict[str, Any], passed: bool,
            text: Optional[str] = None) -> int:
    if text is None:
        text = json.dumps(report, indent=2, sort_keys=True) + '\n'
    _write(args, text)
    if args.archive:
        store = ReportStore(Path(args.archive))
        store.store_report(command, report, passed)
        store.close()
    return EXIT_PASS if passed else EXIT_CHECK_FAILED


def _runner(command: str):
    def run(args: argparse.Namespace) -> int:
        report, passed = build_report(command, _params(args))
        return _finish(args, command, report, passed)
    return run


def _cmd_trace(args: argparse.Namespace) -> int:
    report, passed, trace = trace_report(_params(args))
    report['config']['format'] = args.format
    text = trace_to_csv(trace) if args.format == 'csv' and trace is not None else None
    return _finish(args, 'trace', report, passed, text)


def _cmd_perturbation(args: argparse.Namespace) -> int:
    params = _params(args)
    size = params.pop('M', None) if args.which == 'lemma42' else params.pop('m', None)
    params.pop('M', None)
    params.pop('m', None)
    if size is None:
        raise RejectedInputError(f"{args.which} needs {'--M' if args.which == 'lemma42' else '--m'}")
    params['size'] = size
    report, passed = build_report('fieldlab_perturbation', params)
    return _finish(args, 'fieldlab_perturbation', report, passed)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', type=str, default='', help='Write the report to this path instead of stdout')
    common.add_argument('--archive', type=str, default='', help='Also store the report in this TinyDB file')
    common.add_argument('--verbose', action='store_true', help='Debug logging on stderr')

    parser = argparse.ArgumentParser(description='Exact diameters of wandering components of a z^p + (1-a) z^(p+1)')
    sub = parser.add_subparsers(dest='command', required=True)

    p_const = sub.add_parser('constants', parents=[common], help='q, kappa and the Cantor constants')
    p_const.add_argument('--p', type=int, required=True)
    p_const.set_defaults(func=_runner('constants'))

    p_verify = sub.add_parser('verify', parents=[common], help='Replay the ball and check every checkpoint')
    p_verify.add_argument('--p', type=int, required=True)
    p_verify.add_argument('--ells', type=str, default='id')
    p_verify.add_argument('--s-max', type=int, required=True)
    p_verify.add_argument('--d0', type=str, default=None, help='Starting exponent (defaults to t)')
    p_verify.set_defaults(func=_runner('verify'))

    p_trace = sub.add_parser('trace', parents=[common], help='Emit the step-by-step ball trace')
    p_trace.add_argument('--p', type=int, required=True)
    p_trace.add_argument('--ells', type=str, default='id')
    p_trace.add_argument('--steps', type=int, required=True)
    p_trace.add_argument('--d0', type=str, default=None)
    p_trace.add_argument('--trace-cap', type=int, default=DEFAULT_TRACE_CAP)
    p_trace.add_argument('--format', type=str, default='json', choices=['json', 'csv'])
    p_trace.set_defaults(func=_cmd_trace)

    p_cert = sub.add_parser('certify', parents=[common], help='Show that a larger disk escapes')
    p_cert.add_argument('--p', type=int, required=True)
    p_cert.add_argument('--ells', type=str, default='id')
    group = p_cert.add_mutually_exclusive_group(required=True)
    group.add_argument('--tprime', type=str, help='Exponent of the larger disk')
    group.add_argument('--gap', type=str, help='tprime - t')
    p_cert.add_argument('--budget', type=int, default=DEFAULT_CERTIFY_BUDGET)
    p_cert.set_defaults(func=_runner('certify'))

    p_cantor = sub.add_parser('cantor', help='Cantor-set identities')
    cantor_sub = p_cantor.add_subparsers(dest='cantor_command', required=True)
    c_id = cantor_sub.add_parser('identity', parents=[common], help='Check the affine identity for one beta')
    c_id.add_argument('--p', type=int, required=True)
    c_id.add_argument('--beta', type=str, required=True, help='"bits;tail=b"')
    c_id.set_defaults(func=_runner('cantor_identity'))
    c_const = cantor_sub.add_parser('constants', parents=[common], help='P, Q, B, E, F, R, R\' and the sign chain')
    c_const.add_argument('--p', type=int, required=True)
    c_const.set_defaults(func=_runner('cantor_constants'))
    c_ells = cantor_sub.add_parser('ells', parents=[common], help='The index sequence attached to beta')
    c_ells.add_argument('--p', type=int, required=True)
    c_ells.add_argument('--beta', type=str, required=True)
    c_ells.add_argument('--count', type=int, default=12)
    c_ells.set_defaults(func=_runner('cantor_ells'))

    p_dec = sub.add_parser('decompose', parents=[common], help='Split tau into its base-B digit family')
    p_dec.add_argument('--p', type=int, required=True)
    p_dec.add_argument('--tau', type=str, required=True)
    p_dec.set_defaults(func=_runner('decompose'))

    lab = argparse.ArgumentParser(add_help=False, parents=[common])
    lab.add_argument('--p', type=int, required=True)
    lab.add_argument('--e', type=int, required=True)
    lab.add_argument('--va', type=str, default='-1', help='Valuation of a, in (1/e)Z')
    lab.add_argument('--precision', type=int, default=None, help='Absolute pi-adic precision (default 64 e)')
    lab.add_argument('--trials', type=int, default=100)
    lab.add_argument('--seed', type=int, required=True)

    p_lab = sub.add_parser('fieldlab', help='Checks in truncated ramified arithmetic')
    lab_sub = p_lab.add_subparsers(dest='fieldlab_command', required=True)
    f_32 = lab_sub.add_parser('lemma32', parents=[lab], help='Contraction lemma, items 1-3')
    f_32.add_argument('--item', type=int, required=True, choices=[1, 2, 3])
    f_32.add_argument('--m', type=int, default=1)
    f_32.set_defaults(func=_runner('fieldlab_lemma32'))
    f_pert = lab_sub.add_parser('perturbation', parents=[lab], help='Parameter perturbation lemmas')
    f_pert.add_argument('--which', type=str, required=True, choices=['lemma42', 'lemma43'])
    f_pert.add_argument('--M', type=int, default=None)
    f_pert.add_argument('--m', type=int, default=None)
    f_pert.set_defaults(func=_cmd_perturbation)
    f_esc = lab_sub.add_parser('escape', parents=[lab], help='v(P(z)) for v(z) < 0')
    f_esc.set_defaults(func=_runner('fieldlab_escape'))
    f_ax = lab_sub.add_parser('axioms', parents=[lab], help='Ultrametric law and distributivity')
    f_ax.set_defaults(func=_runner('fieldlab_axioms'))
    return parser


def _error(kind: str, message: str) -> None:
    print(json.dumps({'status': 'error', 'error_type': kind, 'message': message}, indent=2, sort_keys=True))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        return int(args.func(args))
    except (RejectedInputError, InfeasibleConfigurationError, PrecisionExhaustedError) as e:
        logger.error(f"{args.command}: {e}")
        _error(type(e).__name__, str(e))
        return EXIT_USAGE
    except LabError as e:
        logger.error(f"{args.command}: check failed: {e}")
        _error(type(e).__name__, str(e))
        return EXIT_CHECK_FAILED
    except OSError as e:
        logger.error(f"{args.command}: cannot write output: {e}")
        _error(type(e).__name__, str(e))
        return EXIT_USAGE


if __name__ == '__main__':
    raise SystemExit(main())
