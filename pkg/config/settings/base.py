# config/settings/base.py
import os
import environ
from pathlib import Path

# Build paths
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Environment variables
env = environ.Env(
    DEBUG=(bool, False),
    SECRET_KEY=(str, 'whdspot-local-key'),
    LOG_LEVEL=(str, 'INFO'),
    WHDSPOT_DTYPE=(str, 'float64'),
    WHDSPOT_LOG_DIR=(str, str(BASE_DIR / 'logs')),
)

# Read .env file if it exists
env_file = os.path.join(BASE_DIR, '.env')
if os.path.exists(env_file):
    environ.Env.read_env(env_file)

SECRET_KEY = env('SECRET_KEY')
DEBUG = env('DEBUG')
ALLOWED_HOSTS = []

# Application definition
LOCAL_APPS = [
    'apps.common',
    'apps.diffcore',
    'apps.losses',
    'apps.networks',
    'apps.synthdata',
    'apps.proposals',
    'apps.postprocess',
    'apps.metrics',
    'apps.trainer',
    'apps.cli',
]

INSTALLED_APPS = LOCAL_APPS

# No database: the project uses Django for settings, logging and commands
DATABASES = {}

USE_TZ = True
TIME_ZONE = 'UTC'
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Ensure logs directory exists
LOG_DIR = Path(env('WHDSPOT_LOG_DIR'))
LOG_DIR.mkdir(parents=True, exist_ok=True)

# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {'format': '{levelname} {message}', 'style': '{'},
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
        'file': {
            'class': 'logging.FileHandler',
            'filename': LOG_DIR / 'whdspot.log',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': env('LOG_LEVEL'),
    },
    'loggers': {
        'apps': {
            'handlers': ['console', 'file'],
            'level': env('LOG_LEVEL'),
            'propagate': False,
        },
    },
}

# WHDSpot Specific Settings
WHDSPOT_SETTINGS = {
    'DEFAULT_DTYPE': env('WHDSPOT_DTYPE'),
    'BATCHNORM_MOMENTUM': 0.1,
    'BATCHNORM_EPS': 1e-5,
    'OVERLAY_SCALE': 4,
    'INFERENCE_BATCH_SIZE': 8,
    'DETECTOR_PATCH_BATCH_SIZE': 32,
    'PLACEMENT_RETRIES': 200,
    'RESOLVED_CONFIG_NAME': 'resolved_config.cfg',
    'ATOMIC_WRITE_SUFFIX': '.tmp',
}
