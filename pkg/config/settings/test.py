# config/settings/test.py
from .base import *

DEBUG = False

# Keep test runs quiet and off the log files
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {'format': '{levelname} {module} {message}', 'style': '{'},
    },
    'handlers': {
        'console': {'class': 'logging.StreamHandler', 'formatter': 'simple'},
    },
    'root': {'handlers': ['console'], 'level': 'WARNING'},
    'loggers': {
        'apps': {'handlers': ['console'], 'level': 'WARNING', 'propagate': False},
    },
}

WHDSPOT_SETTINGS = {**WHDSPOT_SETTINGS, 'DEFAULT_DTYPE': 'float64'}
