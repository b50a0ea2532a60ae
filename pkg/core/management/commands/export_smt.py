from pathlib import Path

from core.management.base import TesterCommand
from core.report import load_catalog
from core.solver import to_smtlib
from core.symbolic import branch_formula


class Command(TesterCommand):
    help = "Print a catalog record's server path constraint as an SMT-LIB script."

    def add_arguments(self, parser):
        parser.add_argument('catalog', help='Catalog written by test_server.')
        parser.add_argument('record_id', type=int)

    def handle(self, *args, **options):
        catalog = load_catalog(Path(options['catalog']).read_text(encoding='utf-8'))
        record = catalog.get(options['record_id'])
        if record is None:
            raise ValueError(f'No record #{options["record_id"]} in {options["catalog"]}')
        self.stdout.write(to_smtlib(branch_formula(record.pc)), ending='')
