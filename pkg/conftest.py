"""Configure Django so the apps' SimpleTestCase suites run under pytest."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')
django.setup()
