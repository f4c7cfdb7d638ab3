"""
Flask Application Factory

Creates the Flask application serving the diameter lab over HTTP.
"""

import os
import logging
from pathlib import Path
from typing import Optional

from flask import Flask
from flask_cors import CORS

from app.processors.report_store import ReportStore

SERVICE_NAME = 'fatou-diameter-lab'


def create_app(storage_path: Optional[Path] = None):
    """
    Create and configure Flask application

    Args:
        storage_path: TinyDB file for archived reports (defaults to
            $FATOU_LAB_STORAGE or storage/reports.json)

    Returns:
        Flask application instance
    """
    app = Flask(__name__)

    CORS(app, origins=['http://localhost:3000', 'http://127.0.0.1:3000'])

    app.config.update(
        SECRET_KEY=os.getenv('SECRET_KEY', 'fatou-lab-dev-key'),
        JSON_SORT_KEYS=False,
    )

    if not app.debug:
        logging.basicConfig(level=logging.INFO)

    app.extensions['report_store'] = ReportStore(storage_path)

    from app.routes.api import api_bp, ROUTES
    app.register_blueprint(api_bp, url_prefix='/api')

    register_error_handlers(app)

    @app.route('/health')
    def health_check():
        return {'status': 'healthy', 'service': SERVICE_NAME}, 200

    @app.route('/')
    def index():
        """Root endpoint with API information"""
        endpoints = {path: f'/api/{path}' for path in ROUTES}
        endpoints.update({'health': '/health', 'reports': '/api/reports', 'status': '/api/status'})
        return {
            'service': 'Fatou diameter lab',
            'version': '1.0.0',
            'endpoints': endpoints,
        }, 200

    return app


def register_error_handlers(app):
    """Register global error handlers"""

    @app.errorhandler(400)
    def bad_request(error):
        return {'success': False, 'error': 'Bad request', 'message': str(error)}, 400

    @app.errorhandler(404)
    def not_found(error):
        return {'success': False, 'error': 'Not found', 'message': 'Resource not found'}, 404

    @app.errorhandler(500)
    def internal_error(error):
        return {'success': False, 'error': 'Internal server error', 'message': 'Something went wrong'}, 500
