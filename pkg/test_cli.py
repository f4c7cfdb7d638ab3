"""
Tests for the command line entry point
"""

import csv
import io
import json

import pytest

from cli import EXIT_CHECK_FAILED, EXIT_PASS, EXIT_USAGE, main
from app.processors.report_store import ReportStore


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_constants(capsys):
    assert main(['constants', '--p', '2']) == EXIT_PASS
    report = _json(capsys)
    assert report['params']['q'] == 3
    assert report['cantor']['B'] == 2 ** 24
    assert report['config'] == {'command': 'constants', 'p': 2}


def test_constants_rejects_non_prime(capsys):
    assert main(['constants', '--p', '6']) == EXIT_USAGE
    error = _json(capsys)
    assert error['status'] == 'error'
    assert error['error_type'] == 'RejectedInputError'


def test_verify(capsys):
    assert main(['verify', '--p', '2', '--ells', 'id', '--s-max', '3']) == EXIT_PASS
    report = _json(capsys)
    assert report['passed']
    assert report['t'] == '-29/15'
    assert report['config']['s_max'] == 3


def test_verify_rejects_s_max_zero(capsys):
    assert main(['verify', '--p', '2', '--s-max', '0']) == EXIT_USAGE


def test_verify_wrong_start_fails(capsys):
    assert main(['verify', '--p', '2', '--s-max', '2', '--d0', '-2/1']) == EXIT_CHECK_FAILED


def test_trace_csv(capsys):
    assert main(['trace', '--p', '2', '--steps', '8', '--format', 'csv']) == EXIT_PASS
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [row['rule'] for row in rows[:2]] == ['wild', 'tame']
    assert rows[-1]['diam'] == '-239/120'


def test_trace_too_large(capsys):
    assert main(['trace', '--p', '2', '--steps', '3', '--d0', '-1/10']) == EXIT_CHECK_FAILED
    report = _json(capsys)
    assert report['error']['kind'] == 'ball_too_large'
    assert report['config']['format'] == 'json'


def test_certify(capsys):
    assert main(['certify', '--p', '2', '--gap', '1/100']) == EXIT_PASS
    report = _json(capsys)
    assert report['verdict'] == 'escapes'
    assert report['config']['tprime'] == '-577/300'


def test_certify_needs_a_target():
    with pytest.raises(SystemExit) as info:
        main(['certify', '--p', '2'])
    assert info.value.code == 2


def test_cantor_identity(capsys):
    assert main(['cantor', 'identity', '--p', '2', '--beta', '101;tail=0']) == EXIT_PASS
    report = _json(capsys)
    assert report['lhs'] == report['rhs']


def test_cantor_ells(capsys):
    assert main(['cantor', 'ells', '--p', '2', '--beta', ';tail=0', '--count', '7']) == EXIT_PASS
    assert _json(capsys)['values'] == [0, 1, 2, 7, 8, 9, 14]


def test_cantor_bad_beta(capsys):
    assert main(['cantor', 'identity', '--p', '2', '--beta', '12;tail=0']) == EXIT_USAGE


def test_decompose(capsys):
    assert main(['decompose', '--p', '2', '--tau', '1/16777216']) == EXIT_PASS
    assert _json(capsys)['digits'] == [0, 1]


def test_fieldlab_lemma32(capsys):
    argv = ['fieldlab', 'lemma32', '--p', '2', '--e', '4', '--m', '1', '--item', '2',
            '--trials', '10', '--seed', '7']
    assert main(argv) == EXIT_PASS
    report = _json(capsys)
    assert report['passed_trials'] == 10
    assert report['config']['seed'] == 7


def test_fieldlab_infeasible(capsys):
    argv = ['fieldlab', 'lemma32', '--p', '2', '--e', '1', '--item', '1', '--seed', '7']
    assert main(argv) == EXIT_USAGE
    assert _json(capsys)['error_type'] == 'InfeasibleConfigurationError'


def test_fieldlab_perturbation(capsys):
    argv = ['fieldlab', 'perturbation', '--which', 'lemma42', '--M', '2', '--p', '2', '--e', '4',
            '--trials', '5', '--seed', '1']
    assert main(argv) == EXIT_PASS
    report = _json(capsys)
    assert report['M'] == 2
    assert report['degenerate_control_passed']


def test_fieldlab_perturbation_needs_size(capsys):
    argv = ['fieldlab', 'perturbation', '--which', 'lemma43', '--p', '2', '--e', '4', '--seed', '1']
    assert main(argv) == EXIT_USAGE


def test_out_and_archive(tmp_path, capsys):
    out = tmp_path / 'report.json'
    archive = tmp_path / 'archive.json'
    argv = ['constants', '--p', '3', '--out', str(out), '--archive', str(archive)]
    assert main(argv) == EXIT_PASS
    assert capsys.readouterr().out == ''
    assert json.loads(out.read_text())['params']['q'] == 22
    store = ReportStore(archive)
    summaries = store.list_reports()
    store.close()
    assert [(s['command'], s['p'], s['passed']) for s in summaries] == [('constants', 3, True)]


@pytest.mark.parametrize('flag', ['--out', '--archive'])
def test_unwritable_destination(tmp_path, capsys, flag):
    blocker = tmp_path / 'blocker'
    blocker.write_text('not a directory')
    argv = ['constants', '--p', '2', flag, str(blocker / 'report.json')]
    assert main(argv) == EXIT_USAGE
    out = capsys.readouterr().out
    # the error payload is the last object printed
    error = json.loads(out[out.rindex("{\n"):])
    assert error['status'] == 'error'
    assert error['error_type'] in {'NotADirectoryError', 'FileExistsError'}
