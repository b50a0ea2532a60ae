from django.core.management.base import CommandError

from core.corpus import CORPUS, get_entry, run_entry
from core.management.base import TesterCommand


class Command(TesterCommand):
    help = 'Run the bundled corpus under pinned seeds and compare with the expected classifications.'

    def add_arguments(self, parser):
        parser.add_argument('--entry', action='append', default=[], help='Only run this entry (repeatable).')
        parser.add_argument('--intra-budget', type=int, default=50)
        parser.add_argument('--inter-budget', type=int, default=200)
        parser.add_argument('--jobs', type=int)
        self.add_config_argument(parser)

    def handle(self, *args, **options):
        entries = [get_entry(name) for name in options['entry']] or list(CORPUS)
        cfg = self.campaign_config(
            options,
            intra_budget=options['intra_budget'],
            inter_budget=options['inter_budget'],
        )
        mismatches = []
        total = 0.0
        for entry in entries:
            outcome = run_entry(entry, cfg)
            total += outcome.elapsed
            if outcome.matches:
                self.stdout.write(self.style.SUCCESS(f'{entry.name}: ok ({outcome.elapsed:.2f}s)'))
                continue
            mismatches.append(entry.name)
            self.stdout.write(self.style.ERROR(
                f'{entry.name}: MISMATCH expected {entry.expected} observed {outcome.observed}'))
        self.stdout.write(f'{len(entries)} entr{"y" if len(entries) == 1 else "ies"} in {total:.2f}s')
        if mismatches:
            raise CommandError(f'Unexpected classifications: {", ".join(mismatches)}', returncode=1)
