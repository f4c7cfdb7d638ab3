"""
Report Store

Archives emitted reports in a TinyDB JSON file so runs started from the
API, the MCP tools or `cli.py --archive` can be listed and fetched later.
"""

import logging
import os
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from tinydb import Query, TinyDB

logger = logging.getLogger(__name__)

STORAGE_ENV = 'FATOU_LAB_STORAGE'
DEFAULT_STORAGE = Path(__file__).parent.parent.parent / 'storage' / 'reports.json'


def default_storage_path() -> Path:
    return Path(os.getenv(STORAGE_ENV, str(DEFAULT_STORAGE)))


class ReportStore:
    """
    TinyDB archive of verification reports keyed by report_id
    """

    def __init__(self, db_path: Optional[Path] = None):
        """
        Open (or create) the archive

        Args:
            db_path: Path to the JSON file (defaults to $FATOU_LAB_STORAGE
                or storage/reports.json)
        """
        db_path = Path(db_path) if db_path is not None else default_storage_path()
        db_path.parent.mkdir(parents=True, exist_ok=True)
        self.db_path = db_path
        self.db = TinyDB(db_path)
        logger.info(f"ReportStore opened at {db_path}")

    def store_report(self, command: str, report: Dict[str, Any], passed: bool,
                     report_id: Optional[str] = None) -> Optional[str]:
        """
        Store a report, replacing any earlier one with the same id

        Args:
            command: Command that produced the report
            report: JSON-ready report
            passed: Verdict of the run
            report_id: Identifier to reuse (a new uuid otherwise)

        Returns:
            The report_id, or None if storing failed
        """
        report_id = report_id or uuid.uuid4().hex
        record = {
            'report_id': report_id,
            'command': command,
            'passed': bool(passed),
            'stored_at': datetime.now().isoformat(),
            'report': report,
        }
        try:
            Record = Query()
            if self.db.search(Record.report_id == report_id):
                self.db.update(record, Record.report_id == report_id)
                logger.info(f"Updated report {report_id}")
            else:
                self.db.insert(record)
                logger.info(f"Stored report {report_id} ({command})")
            return report_id
        except Exception as e:
            logger.error(f"Error storing report {report_id}: {e}")
            return None

    def get_report(self, report_id: str) -> Optional[Dict[str, Any]]:
        try:
            Record = Query()
            found = self.db.search(Record.report_id == report_id)
            if found:
                return found[0]
            logger.warning(f"Report not found: {report_id}")
            return None
        except Exception as e:
            logger.error(f"Error retrieving report {report_id}: {e}")
            return None

    def list_reports(self, limit: Optional[int] = None) -> List[Dict[str, Any]]:
        """Summaries of stored reports, newest first"""
        try:
            records = sorted(self.db.all(), key=lambda r: r.get('stored_at', ''), reverse=True)
            if limit:
                records = records[:limit]
            return [
                {
                    'report_id': r.get('report_id'),
                    'command': r.get('command'),
                    'passed': r.get('passed'),
                    'stored_at': r.get('stored_at'),
                    'p': r.get('report', {}).get('config', {}).get('p'),
                }
                for r in records
            ]
        except Exception as e:
            logger.error(f"Error listing reports: {e}")
            return []

    def delete_report(self, report_id: str) -> bool:
        try:
            Record = Query()
            if self.db.remove(Record.report_id == report_id):
                logger.info(f"Deleted report {report_id}")
                return True
            logger.warning(f"Report not found for deletion: {report_id}")
            return False
        except Exception as e:
            logger.error(f"Error deleting report {report_id}: {e}")
            return False

    def search_reports(self, command: Optional[str] = None, passed: Optional[bool] = None) -> List[Dict[str, Any]]:
        """Reports matching every given criterion"""
        try:
            Record = Query()
            conditions = []
            if command is not None:
                conditions.append(Record.command == command)
            if passed is not None:
                conditions.append(Record.passed == passed)
            if not conditions:
                return self.db.all()
            combined = conditions[0]
            for condition in conditions[1:]:
                combined = combined & condition
            return self.db.search(combined)
        except Exception as e:
            logger.error(f"Error searching reports: {e}")
            return []

    def get_statistics(self) -> Dict[str, Any]:
        """Report counts per command and per verdict"""
        try:
            stats = {'total_reports': 0, 'commands': {}, 'verdicts': {'passed': 0, 'failed': 0}}
            for record in self.db.all():
                stats['total_reports'] += 1
                command = record.get('command', 'unknown')
                stats['commands'][command] = stats['commands'].get(command, 0) + 1
                stats['verdicts']['passed' if record.get('passed') else 'failed'] += 1
            return stats
        except Exception as e:
            logger.error(f"Error generating statistics: {e}")
            return {}

    def close(self):
        self.db.close()
