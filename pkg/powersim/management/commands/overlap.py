from powersim.analysis import OVERLAP_CATEGORIES
from powersim.experiments import cmd_overlap
from powersim.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Exposed and overlapped time of a stream,category,start_s,end_s interval CSV'

    def add_arguments(self, parser):
        parser.add_argument('intervals', help='Interval CSV file')
        parser.add_argument('--makespan', type=float, default=None,
                            help='Window length in seconds (default: last interval end)')
        self.add_output_argument(parser)

    def run_experiment(self, *args, **options):
        report = cmd_overlap(options['intervals'], options['out'], options['makespan'])
        fractions = report.fractions
        for name in OVERLAP_CATEGORIES:
            self.stdout.write(f'{name:<11} {report.seconds[name]:.6g} s ({fractions[name] * 100:.1f}%)')
