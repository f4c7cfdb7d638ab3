"""
Tests for the TinyDB report archive
"""

import pytest

from app.processors.report_store import STORAGE_ENV, ReportStore, default_storage_path


@pytest.fixture
def store(tmp_path):
    store = ReportStore(tmp_path / 'reports.json')
    yield store
    store.close()


def _report(p):
    return {'config': {'command': 'constants', 'p': p}, 'params': {'p': p}}


def test_store_and_get(store):
    report_id = store.store_report('constants', _report(2), True)
    record = store.get_report(report_id)
    assert record['command'] == 'constants'
    assert record['passed'] is True
    assert record['report'] == _report(2)


def test_store_replaces_same_id(store):
    store.store_report('verify', _report(2), False, report_id='fixed')
    store.store_report('verify', _report(3), True, report_id='fixed')
    assert len(store.list_reports()) == 1
    assert store.get_report('fixed')['report']['params']['p'] == 3


def test_missing_report(store):
    assert store.get_report('nope') is None
    assert store.delete_report('nope') is False


def test_list_and_delete(store):
    first = store.store_report('constants', _report(2), True)
    store.store_report('constants', _report(3), True)
    summaries = store.list_reports()
    assert {s['p'] for s in summaries} == {2, 3}
    assert len(store.list_reports(limit=1)) == 1
    assert store.delete_report(first)
    assert [s['p'] for s in store.list_reports()] == [3]


def test_search_and_statistics(store):
    store.store_report('constants', _report(2), True)
    store.store_report('verify', _report(2), False)
    store.store_report('verify', _report(3), True)
    assert len(store.search_reports(command='verify')) == 2
    assert len(store.search_reports(command='verify', passed=True)) == 1
    assert len(store.search_reports()) == 3
    stats = store.get_statistics()
    assert stats['total_reports'] == 3
    assert stats['commands'] == {'constants': 1, 'verify': 2}
    assert stats['verdicts'] == {'passed': 2, 'failed': 1}


def test_storage_path_from_environment(tmp_path, monkeypatch):
    target = tmp_path / 'elsewhere' / 'db.json'
    monkeypatch.setenv(STORAGE_ENV, str(target))
    assert default_storage_path() == target
    store = ReportStore()
    store.close()
    assert target.parent.is_dir()
