"""Shared argument handling and error translation for the tester's commands."""

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from core import config
from core.lang import read_program
from core.report import parse_handler_ref
from core.selector import TreeConflict


def parse_value_list(text):
    """``3,-5,true`` -> (3, -5, True)."""
    values = []
    for item in (text or '').split(','):
        item = item.strip()
        if not item:
            continue
        if item in ('true', 'false'):
            values.append(item == 'true')
            continue
        try:
            values.append(int(item))
        except ValueError as exc:
            raise ValueError(f'Invalid input value {item!r}: expected an integer, true or false') from exc
    return tuple(values)


def parse_handler_list(text):
    """``click,click#1`` -> handler references; ``#n`` pins a registration ordinal."""
    return tuple(parse_handler_ref(item.strip()) for item in (text or '').split(',') if item.strip())


def parse_prefix(text):
    return tuple(item.strip() for item in text.split(',') if item.strip())


def describe_error(exc):
    if isinstance(exc, ValidationError):
        return f'Invalid document: {exc.detail}'
    return str(exc)


class TesterCommand(BaseCommand):
    """Base class: maps domain errors to exit code 2 and internal ones to 1."""

    def add_config_argument(self, parser):
        parser.add_argument(
            '--config',
            help='Path to a key = value config file (default: ./stackful.conf when present).',
        )

    def add_campaign_arguments(self, parser):
        parser.add_argument('--seed', type=int, help='Campaign seed.')
        parser.add_argument('--max-events', type=int, help='Longest handler sequence explored.')
        parser.add_argument('--bound', type=int, help='Solver search bound per input.')
        parser.add_argument('--strategy', help='brute-force or rw-conflict.')
        parser.add_argument('--step-limit', type=int, help='Machine steps allowed per run.')
        parser.add_argument('--jobs', type=int, help='Concurrent runs per round.')
        self.add_config_argument(parser)

    def campaign_config(self, options, prefixes=(), **flags):
        for key in ('seed', 'max_events', 'bound', 'strategy', 'step_limit', 'jobs'):
            flags.setdefault(key, options.get(key))
        cfg = config.campaign_config(flags, options.get('config'), prefixes)
        if cfg.jobs > 1:
            self.stderr.write(self.style.WARNING(
                f'Running {cfg.jobs} jobs: run ordering may differ between invocations.'))
        return cfg

    def load_program(self, path, role=None):
        path = Path(path)
        if not path.is_file():
            raise CommandError(f'File not found: {path}', returncode=2)
        return read_program(path, role)

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except CommandError:
            raise
        except (TreeConflict, AssertionError) as exc:
            raise CommandError(f'Internal error: {exc}', returncode=1) from exc
        except (ValueError, ValidationError, OSError) as exc:
            raise CommandError(describe_error(exc), returncode=2) from exc
