import logging
import os

from flask import Flask, jsonify
from flask_cors import CORS
from flask_limiter import Limiter
from flask_limiter.util import get_remote_address
from rich.console import Console
from rich.logging import RichHandler

from config import config_by_name

__version__ = "1.0.0"

logger = logging.getLogger(__name__)

limiter = Limiter(
    key_func=get_remote_address,
    # only the expensive endpoints are decorated with a limit
)


def configure_logging(level="INFO"):
    """Send package logs to stderr through rich; stdout stays reserved for reports."""
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    package_logger = logging.getLogger(__name__)
    package_logger.handlers[:] = [handler]
    package_logger.setLevel(level)
    package_logger.propagate = False


def resolve_config(config_name=None):
    """Config class for a name (dev|prod|test), falling back to dev."""
    if config_name is None:
        config_name = os.getenv('FLASK_CONFIG', 'dev')
    try:
        return config_by_name[config_name]
    except KeyError:
        logger.error("Invalid configuration name '%s'. Using default 'dev'.", config_name)
        return config_by_name['dev']


def create_app(config_name=None):
    """
    Application factory function.
    Creates and configures the Flask app exposing the checker over HTTP.
    """
    app = Flask(__name__)
    app.config.from_object(resolve_config(config_name))
    app.logger.setLevel(app.config['LOG_LEVEL'])

    allowed_origins = app.config['CORS_ALLOWED_ORIGINS']
    if allowed_origins == '*':
        origins = "*"
    else:
        origins = [origin.strip() for origin in allowed_origins.split(',')]
    CORS(app, resources={r"/api/*": {"origins": origins}})

    limiter.init_app(app)

    from .routes import api as api_blueprint
    app.register_blueprint(api_blueprint, url_prefix='/api')

    @app.route('/')
    def index():
        return jsonify({
            "message": "Hamiltonian integrability checker is running",
            "version": __version__,
            "commands": ["check", "invariant", "simulate", "verify"],
        })

    return app
