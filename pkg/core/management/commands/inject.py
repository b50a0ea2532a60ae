from fractions import Fraction
from pathlib import Path

from core.lang import Role, inject_faults, render, validate
from core.management.base import TesterCommand
from core.report import dump_fault_manifest


class Command(TesterCommand):
    help = 'Inject synthetic errors into the branch arms of a server program.'

    def add_arguments(self, parser):
        parser.add_argument('server', help='Server program (.sfl).')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--prob', default='0.5', help='Injection probability per arm, e.g. 0.5 or 1/3.')
        parser.add_argument('--out', required=True, help='Path of the injected program.')

    def handle(self, *args, **options):
        path = Path(options['server'])
        server = self.load_program(path, Role.SERVER)
        violations = validate(server)
        if violations:
            raise ValueError('\n'.join(str(v) for v in violations))
        try:
            probability = Fraction(options['prob'])
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f'Invalid probability {options["prob"]!r}') from exc

        injected, faults = inject_faults(server, options['seed'], probability)
        out = Path(options['out'])
        if faults:
            out.write_text(render(injected, pretty=True) + '\n', encoding='utf-8')
        else:
            out.write_text(path.read_text(encoding='utf-8'), encoding='utf-8')
        manifest = out.with_name(out.name + '.faults.json')
        manifest.write_text(
            dump_fault_manifest(server.name, options['seed'], probability, faults), encoding='utf-8')
        self.stdout.write(self.style.SUCCESS(f'Injected {len(faults)} fault(s) -> {out} ({manifest.name})'))
