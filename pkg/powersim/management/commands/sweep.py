from django.conf import settings

from powersim.experiments import cmd_sweep
from powersim.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Sweep one actuator knob against the unswept scenario and write sweep.csv'

    def add_arguments(self, parser):
        parser.add_argument('scenario', help='Scenario JSON file')
        parser.add_argument('--knob', required=True,
                            help='power_cap, freq_cap or cu_alloc:<kernel-id>')
        parser.add_argument('--values', required=True,
                            help='Comma-separated values; an x suffix is relative (0.8x)')
        parser.add_argument('--jobs', type=int, default=None,
                            help='Worker processes (default COMPPOW_SWEEP_JOBS)')
        self.add_output_argument(parser)

    def run_experiment(self, *args, **options):
        scenario = self.load(options['scenario'])
        jobs = options['jobs'] or settings.COMPPOW_SWEEP_JOBS
        rows, warnings = cmd_sweep(scenario, options['knob'], options['values'], options['out'], jobs=jobs)
        self.report_warnings(warnings)
        for value, savings, loss in rows:
            self.stdout.write(f'{value:>10.6g}  savings {savings:7.2f}%  loss {loss:7.2f}%')
        self.stdout.write(self.style.SUCCESS(f'{len(rows)} point(s) written to sweep.csv'))
