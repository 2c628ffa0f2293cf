import pytest
from click.testing import CliRunner

from . import create_app
from .deriv import _cache
from .expr import parse

# Hamiltonians satisfying the four conditions, plus a forced counterexample.
SADDLE = "(1/2)*(p1^2 - p2^2 - x1^2 + x2^2)"
EXPONENTIAL = "exp(p1)*cos(p2) + exp(-x1)*sin(x2)"
QUARTIC = (
    "(1/4)*(x1^4 - 6*x1^2*x2^2 + x2^4)*(p1^4 - 6*p1^2*p2^2 + p2^4)"
    " + 4*x1*x2*(x1^2 - x2^2)*p1*p2*(p1^2 - p2^2)"
)
OSCILLATOR = "(1/2)*(p1^2 + p2^2 + x1^2 + x2^2)"

# Closed-form second integrals, each zero at the origin.
SADDLE_INVARIANT = "-(x1*x2 + p1*p2)"
EXPONENTIAL_INVARIANT = "exp(-x1)*cos(x2) - exp(p1)*sin(p2) - 1"
QUARTIC_INVARIANT = (
    "(x1*p1 + x2*p2)*(x2*p1 - x1*p2)"
    "*((x1 + x2)*p1 - (x1 - x2)*p2)*((x1 - x2)*p1 + (x1 + x2)*p2)"
)


@pytest.fixture(autouse=True)
def fresh_derivative_cache():
    """Each test starts with an empty derivative cache."""
    _cache.clear()
    yield
    _cache.clear()


@pytest.fixture
def saddle():
    return parse(SADDLE)


@pytest.fixture
def exponential():
    return parse(EXPONENTIAL)


@pytest.fixture
def quartic():
    return parse(QUARTIC)


@pytest.fixture
def oscillator():
    return parse(OSCILLATOR)


@pytest.fixture
def saddle_invariant():
    return parse(SADDLE_INVARIANT)


@pytest.fixture
def exponential_invariant():
    return parse(EXPONENTIAL_INVARIANT)


@pytest.fixture
def quartic_invariant():
    return parse(QUARTIC_INVARIANT)


@pytest.fixture(scope='module')
def app():
    """Flask app built with the test configuration."""
    flask_app = create_app('test')
    with flask_app.app_context():
        yield flask_app


@pytest.fixture(scope='module')
def client(app):
    """A test client for the app."""
    return app.test_client()


@pytest.fixture
def runner():
    # logs go to stderr; keep them out of the report on stdout
    return CliRunner(mix_stderr=False)
