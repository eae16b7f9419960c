"""
Django settings for the killed-diffusion laboratory.

Every tunable is read through python-decouple, so values can come from the
environment or from a `.env` file next to manage.py.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# No web surface is served; the key only satisfies Django's startup checks.
SECRET_KEY = config('SECRET_KEY', default='django-insecure-killed-diffusion-lab-local-only')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=lambda v: [s.strip() for s in v.split(',')])


# Application definition

INSTALLED_APPS = [
    # Django core apps
    'django.contrib.contenttypes',
    'django.contrib.auth',

    # Third party apps
    'rest_framework',

    # Project apps
    'utils',
    'geometry',
    'diffusions',
    'measures',
    'killed_path',
    'fleming_viot',
    'coupling_lab',
    'scenarios',
]


# Database
# The simulation apps define no tables; sqlite only keeps Django's checks quiet.

DATABASES = {
    'default': {
        'ENGINE': config('DB_ENGINE', default='django.db.backends.sqlite3'),
        'NAME': config('DB_NAME', default=BASE_DIR / 'db.sqlite3'),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

SIMULATION_LOGGERS = [
    'geometry',
    'diffusions',
    'measures',
    'killed_path',
    'fleming_viot',
    'coupling_lab',
    'scenarios',
]

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': LOG_LEVEL,
            'class': 'logging.FileHandler',
            'filename': BASE_DIR / 'logs/simulation.log',
            'formatter': 'verbose',
        },
        'console': {
            'level': LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'WARNING',
            'propagate': False,
        },
        **{
            name: {
                'handlers': ['console', 'file'],
                'level': LOG_LEVEL,
                'propagate': False,
            }
            for name in SIMULATION_LOGGERS
        },
    },
}

# Create logs directory
os.makedirs(BASE_DIR / 'logs', exist_ok=True)

# Simulation specific settings
SIMULATION_SETTINGS = {
    'DEFAULT_DT': config('DEFAULT_DT', default=1e-3, cast=float),
    'BLOCK_SIZE': config('BLOCK_SIZE', default=4096, cast=int),  # replicas per substream block
    'DEFAULT_WORKERS': config('DEFAULT_WORKERS', default=1, cast=int),
    'OUTPUT_DIR': config('OUTPUT_DIR', default=str(BASE_DIR / 'runs')),
    'VALIDATOR_SAMPLES': config('VALIDATOR_SAMPLES', default=10000, cast=int),
    'ELLIPSOID_TOL': config('ELLIPSOID_TOL', default=1e-12, cast=float),
    'ELLIPSOID_MAX_ITER': config('ELLIPSOID_MAX_ITER', default=100, cast=int),
    'FV_MIN_DT': config('FV_MIN_DT', default=1e-12, cast=float),
    'PSD_TOL': config('PSD_TOL', default=1e-10, cast=float),
    'COLLAR_FRACTION': config('COLLAR_FRACTION', default=0.1, cast=float),  # of the inradius
}
