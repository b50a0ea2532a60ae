"""
Bundled benchmark programs and their expected classifications.

Pair entries run a full campaign (client against server). Single-program
entries only run the exploration phase; an error it reaches counts as
high since the exploring run itself reproduces it.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from core.constants import CLASSIFICATION_HIGH, CLASSIFICATION_LOW
from core.lang import ErrorExpr, Role, iter_nodes, read_program
from core.selector import StrategyKind
from core.services import CampaignService, IntraProcessService

logger = logging.getLogger(__name__)

PROGRAMS_DIR = Path(__file__).resolve().parent / 'programs'


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    server: str
    client: str | None = None
    expected: dict = field(default_factory=dict, hash=False)
    notes: str = ''
    seed: int = 0
    strategy: StrategyKind = StrategyKind.BRUTE_FORCE

    @property
    def server_path(self):
        return PROGRAMS_DIR / self.server

    @property
    def client_path(self):
        return PROGRAMS_DIR / self.client if self.client else None

    @property
    def is_pair(self):
        return self.client is not None


CORPUS = (
    CorpusEntry(
        name='twice',
        server='twice.sfl',
        expected={'Reached the error': CLASSIFICATION_HIGH},
        notes='Single program; the error needs 2y = x and x > y + 10.',
    ),
    CorpusEntry(
        name='counter',
        client='counter.sfl',
        server='counter-server.sfl',
        expected={'Negative counter': CLASSIFICATION_LOW},
        notes='Two handlers sharing counter; explored with the read/write conflict strategy.',
        strategy=StrategyKind.READ_WRITE_CONFLICT,
    ),
    CorpusEntry(
        name='message',
        client='message-client.sfl',
        server='message-server.sfl',
        expected={'Invalid message': CLASSIFICATION_HIGH},
    ),
    CorpusEntry(
        name='calculator',
        client='calculator-client.sfl',
        server='calculator-server.sfl',
        expected={
            'Dividing by zero': CLASSIFICATION_HIGH,
            'Unknown operator': CLASSIFICATION_LOW,
        },
        notes='The client validates operator codes, so the unknown-operator branch is dead.',
    ),
    CorpusEntry(
        name='subsumed-a',
        client='subsumed-a-client.sfl',
        server='subsumed-a-server.sfl',
        expected={
            'Negative value': CLASSIFICATION_HIGH,
            'Value out of range': CLASSIFICATION_LOW,
        },
    ),
    CorpusEntry(
        name='subsumed-b',
        client='subsumed-b-client.sfl',
        server='subsumed-b-server.sfl',
        expected={
            'Point below the board': CLASSIFICATION_HIGH,
            'Point above the board': CLASSIFICATION_HIGH,
            'Point far outside': CLASSIFICATION_LOW,
            'Point out of bounds': CLASSIFICATION_LOW,
        },
    ),
)


def get_entry(name):
    for entry in CORPUS:
        if entry.name == name:
            return entry
    raise ValueError(f'Unknown corpus entry {name!r}; choose from {", ".join(e.name for e in CORPUS)}')


def program_paths():
    return sorted(PROGRAMS_DIR.glob('*.sfl'))


def error_labels(program):
    return {node.label for node in iter_nodes(program) if isinstance(node, ErrorExpr)}


@dataclass
class CorpusRun:
    entry: CorpusEntry
    observed: dict
    elapsed: float
    result: object = None

    @property
    def matches(self):
        return self.observed == self.entry.expected


def run_entry(entry, cfg):
    """Run one entry under its pinned seed and strategy."""
    cfg = cfg.with_changes(seed=entry.seed, strategy=entry.strategy)
    started = time.perf_counter()
    if entry.is_pair:
        client = read_program(entry.client_path, Role.CLIENT)
        server = read_program(entry.server_path, Role.SERVER)
        result = CampaignService.run_campaign(client, server, cfg)
        observed = result.by_label()
    else:
        program = read_program(entry.server_path, Role.CLIENT)
        result = IntraProcessService.explore(program, cfg)
        observed = {record.error.label: CLASSIFICATION_HIGH for record in result.catalog}
    elapsed = time.perf_counter() - started
    logger.info(f'Corpus entry {entry.name} finished in {elapsed:.2f}s')
    return CorpusRun(entry, observed, elapsed, result)
