from flask import Blueprint, Response, request, jsonify, abort, current_app
from werkzeug.exceptions import HTTPException

from . import limiter
from .cli import RunConfig, emit_report, run
from .errors import IntegrabilityError
from .verify import METHODS

api = Blueprint('api', __name__)


def expensive_limit():
    return current_app.config['KK_RATE_LIMIT']


def standard_limit():
    return current_app.config['KK_CHECK_RATE_LIMIT']


# --- Centralized Error Handlers ---

@api.errorhandler(400)  # Handles werkzeug.exceptions.BadRequest
def handle_bad_request(error):
    """Handles 400 Bad Request errors."""
    message = getattr(error, 'description', "Invalid input or request format.")
    current_app.logger.warning(f"Bad Request: {error}")
    return jsonify({"error": message}), 400


@api.errorhandler(404)
def handle_not_found(error):
    message = getattr(error, 'description', "Resource not found.")
    current_app.logger.warning(f"Not Found: {error}")
    return jsonify({"error": message}), 404


@api.errorhandler(429)  # Rate limit exceeded from Flask-Limiter
def handle_rate_limit_exceeded(error):
    message = f"Rate limit exceeded: {error.description}"
    current_app.logger.warning(f"Rate Limit Exceeded: {error}")
    return jsonify({"error": message}), 429


@api.errorhandler(IntegrabilityError)
def handle_integrability_error(error):
    """Checker errors raised outside a run, e.g. while building the run configuration."""
    current_app.logger.warning(f"{type(error).__name__}: {error}")
    return jsonify({"error": str(error), "kind": error.kind}), error.http_status


@api.errorhandler(Exception)  # Catch-all for any other exceptions
def handle_generic_exception(error):
    if isinstance(error, HTTPException):
        current_app.logger.error(f"HTTP Exception {error.code}: {error}")
        return jsonify({"error": getattr(error, 'description', "An unexpected error occurred.")}), error.code

    current_app.logger.exception("Unhandled Exception:")
    return jsonify({"error": "An internal server error occurred."}), 500

# --- End Error Handlers ---


# --- Validation Helper ---

INT_FIELDS = ('samples', 'seed', 'segments')
FLOAT_FIELDS = ('tol', 'T', 'h')
TEXT_FIELDS = ('domain', 'base', 'start')
MODES = ('absolute', 'relative')


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _point_text(value):
    """Accept "a,b,c,d" or [a, b, c, d]."""
    if isinstance(value, str):
        return value
    if isinstance(value, list) and len(value) == 4 and all(_is_number(v) for v in value):
        return ",".join(repr(float(v)) for v in value)
    return None


def validate_run_data(data):
    """Validates a run request body. Returns the RunConfig overrides and a list of errors."""
    errors = []
    validated = {}

    hamiltonian = data.get('hamiltonian')
    if not isinstance(hamiltonian, str) or not hamiltonian.strip():
        errors.append("'hamiltonian' is required and must be a non-empty string.")
    else:
        validated['hamiltonian'] = hamiltonian

    for name in INT_FIELDS:
        if name in data:
            value = data[name]
            if not isinstance(value, int) or isinstance(value, bool):
                errors.append(f"'{name}' must be an integer.")
            else:
                validated[name] = value

    for name in FLOAT_FIELDS:
        if name in data:
            value = data[name]
            if not _is_number(value):
                errors.append(f"'{name}' must be a number.")
            else:
                validated[name] = float(value)

    for name in TEXT_FIELDS:
        if name in data:
            text = data[name] if name == 'domain' else _point_text(data[name])
            if not isinstance(text, str):
                errors.append(f"'{name}' must be a string" + ("." if name == 'domain' else " or a list of 4 numbers."))
            else:
                validated[name] = text

    if 'points' in data:
        points = data['points']
        if isinstance(points, str):
            validated['points'] = points
        elif isinstance(points, list) and all(_point_text(pt) is not None for pt in points):
            validated['points'] = points
        else:
            errors.append("'points' must be a string \"a,b,c,d;...\" or a list of 4-number lists.")

    if 'method' in data:
        if data['method'] not in METHODS:
            errors.append(f"'method' must be one of: {', '.join(METHODS)}.")
        else:
            validated['method'] = data['method']

    if 'mode' in data:
        if data['mode'] not in MODES:
            errors.append(f"'mode' must be one of: {', '.join(MODES)}.")
        else:
            validated['mode'] = data['mode']

    unknown = sorted(set(data) - set(INT_FIELDS + FLOAT_FIELDS + TEXT_FIELDS) - {'hamiltonian', 'points', 'method', 'mode'})
    if unknown:
        errors.append(f"Unknown field(s): {', '.join(unknown)}.")

    return validated, errors


def _run_from_request(command):
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        abort(400, description="Request body must be a JSON object.")

    validated, errors = validate_run_data(data)
    if errors:
        abort(400, description="; ".join(errors))

    hamiltonian = validated.pop('hamiltonian')
    config = RunConfig.from_config(current_app.config, command, hamiltonian, **validated)
    report, _ = run(config)
    current_app.logger.info(f"{command}: {report.verdict}")
    return Response(emit_report(report, 'json'), status=report.http_status, mimetype='application/json')


# --- API Routes ---

@api.route('/check', methods=['POST'])
@limiter.limit(standard_limit)
def check():
    return _run_from_request('check')


@api.route('/invariant', methods=['POST'])
@limiter.limit(standard_limit)
def invariant():
    return _run_from_request('invariant')


@api.route('/simulate', methods=['POST'])
@limiter.limit(expensive_limit)
def simulate():
    return _run_from_request('simulate')


@api.route('/verify', methods=['POST'])
@limiter.limit(expensive_limit)
def verify():
    return _run_from_request('verify')
