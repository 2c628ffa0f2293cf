import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    """Base configuration."""
    # Condition sampling
    KK_DOMAIN = os.environ.get('KK_DOMAIN', '-1:1,-1:1,-1:1,-1:1')
    KK_SAMPLES = int(os.environ.get('KK_SAMPLES', 200))
    KK_SEED = int(os.environ.get('KK_SEED', 0))
    KK_TOLERANCE = float(os.environ.get('KK_TOLERANCE', 1e-9))
    KK_TOLERANCE_MODE = os.environ.get('KK_TOLERANCE_MODE', 'absolute')

    # Invariant construction
    KK_BASE = os.environ.get('KK_BASE', '0,0,0,0')
    KK_SEGMENTS = int(os.environ.get('KK_SEGMENTS', 16))
    KK_GAUSS_ORDER = int(os.environ.get('KK_GAUSS_ORDER', 8))
    KK_QUAD_TOL = float(os.environ.get('KK_QUAD_TOL', 1e-10))

    # Flow verification
    KK_START = os.environ.get('KK_START', '1,0,0,1')
    KK_T = float(os.environ.get('KK_T', 10.0))
    KK_H = float(os.environ.get('KK_H', 1e-3))
    KK_METHOD = os.environ.get('KK_METHOD', 'rk4')
    KK_FD_STEP = float(os.environ.get('KK_FD_STEP', 1e-5))
    KK_INDEPENDENCE_TOL = float(os.environ.get('KK_INDEPENDENCE_TOL', 1e-8))

    # Size caps for a single run
    KK_MAX_EXPRESSION_LENGTH = int(os.environ.get('KK_MAX_EXPRESSION_LENGTH', 10000))
    KK_MAX_SAMPLES = int(os.environ.get('KK_MAX_SAMPLES', 100000))
    KK_MAX_SEGMENTS = int(os.environ.get('KK_MAX_SEGMENTS', 1024))
    KK_MAX_POINTS = int(os.environ.get('KK_MAX_POINTS', 1000))
    KK_MAX_STEPS = int(os.environ.get('KK_MAX_STEPS', 1000000))

    # HTTP surface
    CORS_ALLOWED_ORIGINS = os.environ.get('CORS_ALLOWED_ORIGINS', 'http://localhost:5173')
    KK_RATE_LIMIT = os.environ.get('KK_RATE_LIMIT', '30 per minute')
    KK_CHECK_RATE_LIMIT = os.environ.get('KK_CHECK_RATE_LIMIT', '120 per minute')
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'WARNING')


class TestingConfig(Config):
    """Test configuration: fixed defaults regardless of the environment."""
    TESTING = True
    RATELIMIT_ENABLED = False
    KK_DOMAIN = '-1:1,-1:1,-1:1,-1:1'
    KK_SAMPLES = 200
    KK_SEED = 0
    KK_TOLERANCE = 1e-9
    KK_TOLERANCE_MODE = 'absolute'
    KK_BASE = '0,0,0,0'
    KK_SEGMENTS = 16
    KK_GAUSS_ORDER = 8
    KK_QUAD_TOL = 1e-10
    KK_START = '1,0,0,1'
    KK_T = 5.0
    KK_H = 1e-3
    KK_METHOD = 'rk4'
    KK_FD_STEP = 1e-5
    KK_INDEPENDENCE_TOL = 1e-8
    KK_MAX_EXPRESSION_LENGTH = 10000
    KK_MAX_SAMPLES = 100000
    KK_MAX_SEGMENTS = 1024
    KK_MAX_POINTS = 1000
    KK_MAX_STEPS = 1000000


config_by_name = dict(
    dev=DevelopmentConfig,
    prod=ProductionConfig,
    test=TestingConfig
)
