from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from powersim.exceptions import ContractViolation, SimulationError
from powersim.scenario import parse_scenario

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ExperimentCommand(BaseCommand):
    """Maps simulation errors onto the command's exit status.

    Validation problems exit with 1, stalls and I/O failures with 2.
    """

    def add_output_argument(self, parser):
        parser.add_argument('-o', '--out', dest='out', required=True,
                            help='Output directory (created if missing)')

    def load(self, path):
        return parse_scenario(path)

    def handle(self, *args, **options):
        try:
            return self.run_experiment(*args, **options)
        except ValidationError as exc:
            raise CommandError('\n'.join(exc.messages), returncode=EXIT_VALIDATION) from exc
        except ContractViolation as exc:
            raise CommandError(str(exc), returncode=EXIT_VALIDATION) from exc
        except SimulationError as exc:
            raise CommandError(str(exc), returncode=EXIT_RUNTIME) from exc
        except OSError as exc:
            target = exc.filename or ''
            raise CommandError(f'{target}: {exc.strerror or exc}', returncode=EXIT_RUNTIME) from exc

    def run_experiment(self, *args, **options):
        raise NotImplementedError

    def report_warnings(self, warnings):
        for message in warnings:
            self.stderr.write(self.style.WARNING(f'warning: {message}'))
