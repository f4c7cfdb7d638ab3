"""
Tests for the MCP tool layer, with the Flask client replaced by the app's test client
"""

import asyncio
import json

import pytest

import server
from app import create_app


@pytest.fixture
def routed(tmp_path, monkeypatch):
    """Route FlaskAPIClient.request through a Flask test client"""
    app = create_app(tmp_path / 'reports.json')
    client = app.test_client()

    async def request(method, endpoint, data=None):
        response = client.open(endpoint, method=method, json=data)
        body = response.get_json()
        if response.status_code >= 400:
            raise Exception(f"API error: {body.get('error', 'Unknown error')}")
        return body

    monkeypatch.setattr(server.flask_client, 'request', request)
    yield
    app.extensions['report_store'].close()


def _call(name, arguments):
    contents = asyncio.run(server.handle_call_tool(name, arguments))
    return contents[0].text


def test_tool_list():
    tools = asyncio.run(server.handle_list_tools())
    names = {tool.name for tool in tools}
    assert set(server.TOOLS) <= names
    assert {'list_reports', 'get_report', 'delete_report', 'health_check'} <= names
    verify = next(tool for tool in tools if tool.name == 'verify_diameter')
    assert verify.inputSchema['required'] == ['p', 's_max']


def test_every_tool_has_a_route():
    from app.routes.api import ROUTES
    paths = {f"/api/{path}" for path in ROUTES}
    assert {endpoint for endpoint, *_ in server.TOOLS.values()} <= paths


def test_verify_then_fetch(routed):
    result = json.loads(_call('verify_diameter', {'p': 2, 's_max': 2}))
    assert result['passed']
    assert result['report']['t'] == '-29/15'

    record = json.loads(_call('get_report', {'report_id': result['report_id']}))
    assert record['command'] == 'verify'
    listed = json.loads(_call('list_reports', {'limit': 5}))
    assert [r['report_id'] for r in listed] == [result['report_id']]


def test_errors_are_returned_as_text(routed):
    text = _call('compute_constants', {'p': 9})
    assert text.startswith('Error in compute_constants:')


def test_unknown_tool(routed):
    assert _call('no_such_tool', {}) == 'Error in no_such_tool: Unknown tool: no_such_tool'
