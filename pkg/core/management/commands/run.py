from django.core.management.base import CommandError

from core.constants import DEFAULT_INPUT_BOUND, DEFAULT_SEED, DEFAULT_STEP_LIMIT
from core.lang import Role, validate
from core.machine import render_trace, run
from core.management.base import TesterCommand, parse_handler_list, parse_value_list


class Command(TesterCommand):
    help = 'Execute one program run and print its canonical trace.'

    def add_arguments(self, parser):
        parser.add_argument('file', help='Program source (.sfl).')
        parser.add_argument('--inputs', default='', help='Comma-separated input values, e.g. 3,5.')
        parser.add_argument('--handlers', default='', help='Comma-separated handler types to fire, e.g. click,click#1.')
        parser.add_argument('--seed', type=int, default=DEFAULT_SEED, help='Seed for inputs beyond --inputs.')
        parser.add_argument('--role', choices=[role.value for role in Role], help='Override the file-name role.')
        parser.add_argument('--step-limit', type=int, default=DEFAULT_STEP_LIMIT)
        parser.add_argument('--input-bound', type=int, default=DEFAULT_INPUT_BOUND)

    def handle(self, *args, **options):
        program = self.load_program(options['file'], options.get('role'))
        violations = validate(program)
        if violations:
            raise CommandError('\n'.join(str(v) for v in violations), returncode=2)

        outcome = run(
            program,
            parse_value_list(options['inputs']),
            parse_handler_list(options['handlers']),
            seed=options['seed'],
            step_limit=options['step_limit'],
            input_bound=options['input_bound'],
        )
        self.stdout.write(render_trace(outcome), ending='')
        if outcome.failed:
            raise CommandError(f'Run failed: {outcome.error.label}', returncode=1)
