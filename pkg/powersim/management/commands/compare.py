from powersim.experiments import cmd_compare
from powersim.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Run a baseline and a variant scenario and write comparison.json'

    def add_arguments(self, parser):
        parser.add_argument('base', help='Baseline scenario JSON file')
        parser.add_argument('variant', help='Variant scenario JSON file')
        self.add_output_argument(parser)

    def run_experiment(self, *args, **options):
        base = self.load(options['base'])
        variant = self.load(options['variant'])
        data = cmd_compare(base, variant, options['out'])
        self.report_warnings(data['variant_metrics']['warnings'])
        self.stdout.write(self.style.SUCCESS(
            f'{variant.name} vs {base.name}: energy savings {data["savings_pct"]:.2f}%, '
            f'performance loss {data["loss_pct"]:.2f}%'
        ))
        for kernel_id, change in data['kernel_duration_change_pct'].items():
            if change:
                self.stdout.write(f'  {kernel_id}: duration {change:+.2f}%')
