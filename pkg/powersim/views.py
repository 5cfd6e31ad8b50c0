"""Read-only views over the run registry."""
import csv
import json
from pathlib import Path

from django.http import Http404, HttpResponse, JsonResponse
from django.shortcuts import get_object_or_404
from django.utils import timezone

from .models import SimulationRun


def export_runs(request):
    """Every recorded run as CSV, newest first; ?variant= filters by policy."""
    runs = SimulationRun.objects.all()
    variant = request.GET.get('variant')
    if variant:
        runs = runs.filter(policy_variant=variant)

    filename = f"comppow_runs_{timezone.now().strftime('%Y%m%d_%H%M')}.csv"
    response = HttpResponse(content_type='text/csv; charset=utf-8')
    response['Content-Disposition'] = f'attachment; filename="{filename}"'

    writer = csv.writer(response)
    writer.writerow([
        'id', 'name', 'policy_variant', 'spec_name', 'scenario_path', 'output_dir',
        'makespan_s', 'energy_xcd_j', 'energy_iod_j', 'energy_hbm_j', 'energy_total_j',
        'avg_power_w', 'created_at',
    ])
    for run in runs:
        writer.writerow([
            run.pk, run.name, run.policy_variant, run.spec_name, run.scenario_path, run.output_dir,
            run.makespan_s, run.energy_xcd_j, run.energy_iod_j, run.energy_hbm_j, run.energy_total_j,
            run.avg_power_w, run.created_at.isoformat(),
        ])
    return response


def run_metrics(request, run_id):
    run = get_object_or_404(SimulationRun, pk=run_id)
    path = Path(run.output_dir) / 'metrics.json'
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise Http404(f'metrics.json of run {run_id} is gone')
    return JsonResponse(data)
