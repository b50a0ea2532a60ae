import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'stackful.settings')
django.setup()
