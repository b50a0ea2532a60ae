"""
Campaign configuration.

Values are resolved per key: command-line flag, then ``stackful.conf``,
then ``settings.STACKFUL`` (environment), then the constants in
core.constants.
"""

import logging
from pathlib import Path

from django.conf import settings

from core import constants
from core.selector import StrategyKind
from core.services import CampaignConfig
from core.solver import SolverConfig

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


def _positive(name):
    def convert(text):
        value = int(text)
        if value < 1:
            raise ValueError(f'{name} must be at least 1')
        return value
    return convert


def _non_negative(name):
    def convert(text):
        value = int(text)
        if value < 0:
            raise ValueError(f'{name} must not be negative')
        return value
    return convert


def _strategy(text):
    return StrategyKind(str(text).strip()).value


CONFIG_KEYS = {
    'seed': int,
    'intra_budget': _positive('intra_budget'),
    'inter_budget': _positive('inter_budget'),
    'bound': _positive('bound'),
    'max_assignments': _positive('max_assignments'),
    'input_bound': _non_negative('input_bound'),
    'max_events': _non_negative('max_events'),
    'strategy': _strategy,
    'step_limit': _positive('step_limit'),
    'jobs': _positive('jobs'),
}

DEFAULTS = {
    'seed': constants.DEFAULT_SEED,
    'intra_budget': constants.DEFAULT_INTRA_BUDGET,
    'inter_budget': constants.DEFAULT_INTER_BUDGET,
    'bound': constants.DEFAULT_SOLVER_BOUND,
    'max_assignments': constants.DEFAULT_MAX_ASSIGNMENTS,
    'input_bound': constants.DEFAULT_INPUT_BOUND,
    'max_events': constants.DEFAULT_MAX_EVENTS,
    'strategy': constants.DEFAULT_STRATEGY,
    'step_limit': constants.DEFAULT_STEP_LIMIT,
    'jobs': constants.DEFAULT_JOBS,
}


def convert_value(key, raw, source='<value>'):
    if key not in CONFIG_KEYS:
        raise ConfigError(f'{source}: unknown key {key!r}')
    try:
        return CONFIG_KEYS[key](raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'{source}: invalid value for {key}: {raw!r} ({exc})') from exc


def parse_config_text(text, source=constants.CONFIG_FILENAME):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition('=')
        if not sep:
            raise ConfigError(f'{source}:{number}: expected "key = value"')
        key = key.strip()
        values[key] = convert_value(key, raw.strip(), f'{source}:{number}')
    return values


def read_config_file(path=None):
    """
    Load a config file. An explicit ``path`` must exist; without one,
    ``./stackful.conf`` is used when present.
    """
    if path is None:
        candidate = Path(constants.CONFIG_FILENAME)
        if not candidate.is_file():
            return {}
        path = candidate
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'Config file not found: {path}')
    logger.debug(f'Reading configuration from {path}')
    return parse_config_text(path.read_text(encoding='utf-8'), str(path))


def settings_defaults():
    values = dict(DEFAULTS)
    for key, raw in getattr(settings, 'STACKFUL', {}).items():
        if raw is None or raw == '':
            continue
        values[key] = convert_value(key, raw, 'settings.STACKFUL')
    return values


def resolve(flags=None, config_path=None):
    """Merge every configuration layer into a plain dict."""
    values = settings_defaults()
    values.update(read_config_file(config_path))
    for key, value in (flags or {}).items():
        if value is not None:
            values[key] = convert_value(key, value, f'--{key.replace("_", "-")}')
    return values


def campaign_config(flags=None, config_path=None, prefixes=()):
    values = resolve(flags, config_path)
    try:
        return CampaignConfig(
            intra_budget=values['intra_budget'],
            inter_budget=values['inter_budget'],
            seed=values['seed'],
            solver=SolverConfig(bound=values['bound'], max_assignments=values['max_assignments']),
            max_events=values['max_events'],
            step_limit=values['step_limit'],
            strategy=StrategyKind(values['strategy']),
            input_bound=values['input_bound'],
            prefixes=tuple(tuple(prefix) for prefix in prefixes),
            jobs=values['jobs'],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
