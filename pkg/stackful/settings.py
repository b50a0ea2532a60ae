"""
Django settings for the stackful project.

The project has no web surface; settings exist for logging, system checks,
management commands and the test runner.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / '.env')

SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-stackful-local-only')

DEBUG = os.environ.get('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'core',
]

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
}

# Campaign defaults; empty values fall back to core.constants
STACKFUL = {
    'seed': os.environ.get('STACKFUL_SEED', ''),
    'intra_budget': os.environ.get('STACKFUL_INTRA_BUDGET', ''),
    'inter_budget': os.environ.get('STACKFUL_INTER_BUDGET', ''),
    'bound': os.environ.get('STACKFUL_BOUND', ''),
    'max_assignments': os.environ.get('STACKFUL_MAX_ASSIGNMENTS', ''),
    'input_bound': os.environ.get('STACKFUL_INPUT_BOUND', ''),
    'max_events': os.environ.get('STACKFUL_MAX_EVENTS', ''),
    'strategy': os.environ.get('STACKFUL_STRATEGY', ''),
    'step_limit': os.environ.get('STACKFUL_STEP_LIMIT', ''),
    'jobs': os.environ.get('STACKFUL_JOBS', ''),
}

# Logging configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'core': {
            'handlers': ['console'],
            'level': os.environ.get('STACKFUL_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}

if os.environ.get('STACKFUL_LOG_FILE'):
    LOGGING['handlers']['file'] = {
        'class': 'logging.FileHandler',
        'filename': os.environ['STACKFUL_LOG_FILE'],
        'formatter': 'verbose',
    }
    LOGGING['loggers']['core']['handlers'].append('file')
