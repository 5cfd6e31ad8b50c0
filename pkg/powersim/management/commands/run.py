from powersim.experiments import cmd_run
from powersim.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Simulate one scenario and write trace.csv, metrics.json and effective_config.json'

    def add_arguments(self, parser):
        parser.add_argument('scenario', help='Scenario JSON file')
        self.add_output_argument(parser)
        parser.add_argument('--record', action='store_true',
                            help='Store the run in the run registry')

    def run_experiment(self, *args, **options):
        scenario = self.load(options['scenario'])
        result = cmd_run(scenario, options['out'])
        self.report_warnings(result.trace.warnings)

        if options['record']:
            from powersim.models import SimulationRun
            run = SimulationRun.record(result, options['out'])
            self.stdout.write(f'Recorded run #{run.pk}')

        energy = result.metrics.energy_j
        self.stdout.write(self.style.SUCCESS(
            f'{scenario.name}: makespan {result.metrics.makespan_s:.6g} s, '
            f'energy {energy["total"]:.6g} J '
            f'(xcd {energy["xcd"]:.6g}, iod {energy["iod"]:.6g}, hbm {energy["hbm"]:.6g})'
        ))
