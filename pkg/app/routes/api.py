"""
API Routes for the diameter lab

Every computation is a POST endpoint taking the CLI's parameters as JSON.
These endpoints are called by the MCP server and can also be used directly.
Successful runs are archived in the report store.
"""

import logging
from flask import Blueprint, current_app, jsonify, request

from app.processors.errors import (
    InfeasibleConfigurationError,
    LabError,
    PrecisionExhaustedError,
    RejectedInputError,
)
from app.processors.reports import build_report

api_bp = Blueprint('api', __name__)

logger = logging.getLogger(__name__)

# URL path -> report builder name
ROUTES = {
    'constants': 'constants',
    'verify': 'verify',
    'trace': 'trace',
    'certify': 'certify',
    'cantor/identity': 'cantor_identity',
    'cantor/constants': 'cantor_constants',
    'cantor/ells': 'cantor_ells',
    'decompose': 'decompose',
    'fieldlab/lemma32': 'fieldlab_lemma32',
    'fieldlab/perturbation': 'fieldlab_perturbation',
    'fieldlab/escape': 'fieldlab_escape',
    'fieldlab/axioms': 'fieldlab_axioms',
}


def _store():
    return current_app.extensions['report_store']


def _run(command: str):
    """
    Run one report builder on the request's JSON body

    Returns:
    {
        "success": true,
        "passed": bool,
        "report_id": "hex id",
        "report": {...}
    }
    """
    if not request.is_json:
        return jsonify({'success': False, 'error': 'Content-Type must be application/json'}), 400
    params = request.get_json() or {}
    try:
        report, passed = build_report(command, params)
    except (RejectedInputError, InfeasibleConfigurationError, PrecisionExhaustedError) as e:
        logger.warning(f"Rejected {command}: {e}")
        return jsonify({'success': False, 'error': str(e), 'error_type': type(e).__name__}), 400
    except LabError as e:
        logger.error(f"Check failed in {command}: {e}")
        return jsonify({'success': False, 'error': str(e), 'error_type': type(e).__name__}), 500
    except Exception as e:
        logger.error(f"Error in {command}: {e}")
        return jsonify({'success': False, 'error': str(e)}), 500

    report_id = _store().store_report(command, report, passed)
    return jsonify({
        'success': True,
        'passed': passed,
        'report_id': report_id,
        'report': report,
    }), 200


def _register(path: str, command: str):
    def endpoint():
        return _run(command)
    endpoint.__name__ = f"run_{command}"
    api_bp.add_url_rule(f"/{path}", endpoint=endpoint.__name__, view_func=endpoint, methods=['POST'])


for _path, _command in ROUTES.items():
    _register(_path, _command)


@api_bp.route('/reports', methods=['GET'])
def list_reports():
    """
    List archived reports

    Query parameters:
        limit: Maximum number of reports
        command: Only reports of this command
        passed: 'true' or 'false'
    """
    try:
        limit = request.args.get('limit', type=int)
        command = request.args.get('command')
        passed = request.args.get('passed')
        if command or passed is not None:
            verdict = None if passed is None else passed.lower() == 'true'
            reports = _store().search_reports(command=command, passed=verdict)
            summaries = [{k: r.get(k) for k in ('report_id', 'command', 'passed', 'stored_at')} for r in reports]
            if limit:
                summaries = summaries[:limit]
        else:
            summaries = _store().list_reports(limit)
        return jsonify({'success': True, 'reports': summaries, 'count': len(summaries)}), 200
    except Exception as e:
        logger.error(f"Error listing reports: {e}")
        return jsonify({'success': False, 'error': str(e)}), 500


@api_bp.route('/reports/<report_id>', methods=['GET'])
def get_report(report_id):
    record = _store().get_report(report_id)
    if record is None:
        return jsonify({'success': False, 'error': 'Report not found'}), 404
    return jsonify({'success': True, 'record': record}), 200


@api_bp.route('/reports/<report_id>', methods=['DELETE'])
def delete_report(report_id):
    if not _store().delete_report(report_id):
        return jsonify({'success': False, 'error': 'Report not found'}), 404
    return jsonify({'success': True, 'message': f'Report {report_id} deleted'}), 200


@api_bp.route('/status', methods=['GET'])
def get_status():
    """Service status and archive statistics"""
    try:
        return jsonify({
            'success': True,
            'status': 'running',
            'commands': sorted(ROUTES),
            'statistics': _store().get_statistics(),
        }), 200
    except Exception as e:
        logger.error(f"Error getting status: {e}")
        return jsonify({'success': False, 'error': str(e)}), 500
