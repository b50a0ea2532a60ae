from django.core.checks import Error, register

from core.corpus import CORPUS, error_labels, program_paths
from core.lang import ParseError, read_program, validate


@register()
def check_bundled_programs(app_configs, **kwargs):
    """Every bundled program parses and validates; corpus expectations name real labels."""
    errors = []
    programs = {}
    for path in program_paths():
        try:
            program = read_program(path)
        except (OSError, ParseError) as exc:
            errors.append(Error(
                f'Bundled program {path.name} cannot be read: {exc}',
                id='core.E001',
            ))
            continue
        programs[path.name] = program
        for violation in validate(program):
            errors.append(Error(
                f'Bundled program {path.name} is invalid: {violation}',
                id='core.E001',
            ))

    for entry in CORPUS:
        program = programs.get(entry.server)
        if program is None:
            continue
        missing = set(entry.expected) - error_labels(program)
        if missing:
            errors.append(Error(
                f'Corpus entry {entry.name} expects unknown label(s): {", ".join(sorted(missing))}',
                id='core.E002',
            ))
    return errors
