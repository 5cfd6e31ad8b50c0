"""Experiment orchestration behind the management commands.

Each entry point takes parsed inputs, runs the engine and writes its
artifacts into an output directory. Nothing here prints; the commands
decide what to report.
"""
import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from django.core.exceptions import ValidationError

from . import analysis, engine
from .exceptions import ScenarioMismatch
from .gpu_model import spec_to_dict
from .policy import PolicyVariant
from .scenario import dumps, scenario_to_dict

logger = logging.getLogger(__name__)

TRACE_HEADER = ['t_s', 'f_mhz', 'p_xcd_w', 'p_iod_w', 'p_hbm_w', 'p_total_w',
                'active_kernels', 'u_xcd', 'u_iod', 'u_hbm']
SWEEP_HEADER = ['value', 'savings_pct', 'loss_pct', 'max_savings_flag']


def _num(value):
    return '%.9g' % value


@dataclass(frozen=True)
class RunResult:
    scenario: object
    trace: object
    metrics: analysis.Metrics
    overlap: analysis.OverlapReport
    report: dict

    @property
    def metrics_dict(self):
        affinity = self.trace.history.as_dict(self.scenario.policy.warmup_iters)
        return analysis.metrics_to_dict(self.metrics, self.overlap, self.trace.warnings,
                                        self.report, affinity)


def simulate(scenario):
    trace = engine.run(scenario)
    metrics = analysis.energy(trace)
    overlap = analysis.overlap_accounting(analysis.trace_intervals(trace), trace.makespan)
    return RunResult(scenario, trace, metrics, overlap, analysis.run_report(trace))


def write_trace_csv(trace, path):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(TRACE_HEADER)
        for s in trace.samples:
            p = s.power
            writer.writerow([
                _num(s.t), _num(s.f), _num(p.xcd), _num(p.iod), _num(p.hbm), _num(p.total),
                ';'.join(s.active), *(_num(u) for u in s.utilizations),
            ])


def write_json(data, path):
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(dumps(data))


def _out_dir(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(scenario, out_dir):
    """Run one scenario and write trace.csv, metrics.json and effective_config.json."""
    result = simulate(scenario)
    out = _out_dir(out_dir)
    write_trace_csv(result.trace, out / 'trace.csv')
    write_json(result.metrics_dict, out / 'metrics.json')
    write_json(scenario_to_dict(scenario), out / 'effective_config.json')
    return result


def _comparable_spec(spec):
    data = spec_to_dict(spec)
    data.pop('name', None)
    return data


def comparison(base, variant):
    savings, loss = analysis.savings_and_loss(base.metrics, variant.metrics)
    b, v = base.metrics.energy_j, variant.metrics.energy_j
    return {
        'base': base.scenario.name,
        'variant': variant.scenario.name,
        'savings_pct': savings,
        'loss_pct': loss,
        'energy_delta_j': {key: v[key] - b[key] for key in analysis.ENERGY_KEYS},
        'energy_delta_pct': {key: (v[key] - b[key]) / b[key] * 100.0 if b[key] else 0.0
                             for key in analysis.ENERGY_KEYS},
        'kernel_duration_change_pct': dict(sorted(
            analysis.duration_changes(base.metrics, variant.metrics).items())),
        'normalized_to_base': analysis.relative_report(
            {'base': base.report, 'variant': variant.report}, 'base')['variant'],
        'base_metrics': base.metrics_dict,
        'variant_metrics': variant.metrics_dict,
    }


def cmd_compare(base_scenario, variant_scenario, out_dir):
    if _comparable_spec(base_scenario.spec) != _comparable_spec(variant_scenario.spec):
        raise ScenarioMismatch(
            f'{base_scenario.name} and {variant_scenario.name} use different GPU specs')
    base = simulate(base_scenario)
    variant = simulate(variant_scenario)
    data = comparison(base, variant)
    write_json(data, _out_dir(out_dir) / 'comparison.json')
    logger.info('%s vs %s: savings %.3f%%, loss %.3f%%', base_scenario.name,
                variant_scenario.name, data['savings_pct'], data['loss_pct'])
    return data


# sweeps

def parse_sweep_values(raw):
    """Split ``"0.9x,0.8x,1500"`` into (token, relative, number) triples."""
    tokens = [t.strip() for t in (raw.split(',') if isinstance(raw, str) else raw)]
    tokens = [t for t in tokens if t]
    if not tokens:
        raise ValidationError('values: empty value list', code='empty_values')
    values = []
    for token in tokens:
        relative = token.lower().endswith('x')
        try:
            number = float(token[:-1] if relative else token)
        except ValueError:
            raise ValidationError(f'values: "{token}" is not a number', code='invalid_value') from None
        values.append((token, relative, number))
    return values


def _check_knob(scenario, knob):
    if knob in ('power_cap', 'freq_cap'):
        if knob == 'power_cap' and scenario.policy.variant is PolicyVariant.COMPPOW_AUTO:
            raise ValidationError('knob: power_cap does not apply to comppow_auto', code='invalid_knob')
        return
    if knob.startswith('cu_alloc:'):
        kernel_id = knob.split(':', 1)[1]
        if kernel_id not in {k.id for k in scenario.kernels}:
            raise ValidationError(f'knob: unknown kernel "{kernel_id}"', code='invalid_knob')
        return
    raise ValidationError(f'knob: "{knob}" is not one of power_cap, freq_cap, cu_alloc:<kernel-id>',
                          code='invalid_knob')


def _resolve(spec, knob, relative, number):
    if knob == 'power_cap':
        value = number * spec.tdp if relative else number
        return value, spec.idle_total < value <= spec.tdp
    if knob == 'freq_cap':
        value = number * spec.f_max if relative else number
        return value, spec.f_min <= value <= spec.f_max
    value = round(number * spec.cu_total) if relative else number
    return value, value == int(value) and 1 <= value <= spec.cu_total


def apply_knob(scenario, knob, value):
    """Copy of ``scenario`` with one actuator knob set to ``value``."""
    policy = scenario.policy
    if knob == 'power_cap':
        variant = {PolicyVariant.BASELINE: PolicyVariant.POWER_CAP,
                   PolicyVariant.FREQ_CAP: PolicyVariant.COMBINED}.get(policy.variant, policy.variant)
        return replace(scenario, policy=replace(policy, variant=variant, power_cap=value))
    if knob == 'freq_cap':
        if policy.variant is PolicyVariant.COMPPOW_AUTO:
            return replace(scenario, policy=replace(policy, cap_ratio=value / scenario.spec.f_max))
        variant = {PolicyVariant.BASELINE: PolicyVariant.FREQ_CAP,
                   PolicyVariant.POWER_CAP: PolicyVariant.COMBINED}.get(policy.variant, policy.variant)
        return replace(scenario, policy=replace(policy, variant=variant, freq_cap=value))
    kernel_id = knob.split(':', 1)[1]
    streams = tuple(
        tuple(replace(k, cus=int(value)) if k.id == kernel_id else k for k in stream)
        for stream in scenario.streams
    )
    return replace(scenario, streams=streams)


def _sweep_point(scenario):
    return analysis.energy(engine.run(scenario))


def cmd_sweep(scenario, knob, raw_values, out_dir, jobs=1):
    """One row per in-bounds value against the unswept scenario; writes sweep.csv."""
    _check_knob(scenario, knob)
    points, warnings = [], []
    for token, relative, number in parse_sweep_values(raw_values):
        value, in_bounds = _resolve(scenario.spec, knob, relative, number)
        if not in_bounds:
            message = f'{knob}={token} is outside the actuator bounds; skipped'
            logger.warning(message)
            warnings.append(message)
            continue
        points.append((value, apply_knob(scenario, knob, value)))

    runs = [scenario] + [variant for _, variant in points]
    if jobs > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, runs))
    else:
        results = [_sweep_point(s) for s in runs]
    base, variants = results[0], results[1:]

    rows = []
    for (value, _), metrics in zip(points, variants):
        savings, loss = analysis.savings_and_loss(base, metrics)
        rows.append([value, savings, loss])
    best = max(range(len(rows)), key=lambda i: rows[i][1]) if rows else None

    out = _out_dir(out_dir)
    with open(out / 'sweep.csv', 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(SWEEP_HEADER)
        for i, (value, savings, loss) in enumerate(rows):
            writer.writerow([_num(value), _num(savings), _num(loss), 1 if i == best else 0])
    logger.info('sweep %s on %s: %d point(s), %d skipped', knob, scenario.name, len(rows), len(warnings))
    return rows, warnings


def cmd_overlap(intervals_csv, out_dir, makespan=None):
    report = analysis.overlap_accounting(analysis.read_intervals_csv(intervals_csv), makespan)
    data = {
        'makespan_s': report.makespan,
        'overlap': {f'{name}_s': report.seconds[name] for name in analysis.OVERLAP_CATEGORIES},
        'fractions': {name: report.fractions[name] for name in analysis.OVERLAP_CATEGORIES},
    }
    write_json(data, _out_dir(out_dir) / 'overlap.json')
    return report

