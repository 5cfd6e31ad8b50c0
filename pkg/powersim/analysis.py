"""Post-run analytics: energy, savings and loss, normalization, correlation
and exposed/overlapped execution accounting."""
import bisect
import csv
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict

import numpy as np

from .exceptions import ContractViolation, OverlappingIntervals, UndefinedCorrelation
from .gpu_model import COMPONENTS

OVERLAP_CATEGORIES = ('gemm_only', 'comm_only', 'other', 'overlapped', 'idle')
EXPOSED_CATEGORY = {'gemm': 'gemm_only', 'comm': 'comm_only', 'other': 'other'}
ENERGY_KEYS = ('xcd', 'iod', 'hbm', 'total')
THROUGHPUT_KEYS = ('flops_per_s', 'hbm_bytes_per_s', 'iod_bytes_per_s')


@dataclass(frozen=True)
class Metrics:
    energy_j: Dict[str, float]
    makespan_s: float
    avg_power_w: Dict[str, float]
    kernel_durations_s: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Interval:
    stream: str
    category: str
    start: float
    end: float


@dataclass(frozen=True)
class OverlapReport:
    seconds: Dict[str, float]
    makespan: float

    @property
    def fractions(self):
        if self.makespan <= 0:
            return {name: 0.0 for name in OVERLAP_CATEGORIES}
        return {name: value / self.makespan for name, value in self.seconds.items()}


def energy(trace):
    """Integrate the trace: each sample's power holds for its width."""
    per_component = {kind.value: 0.0 for kind in COMPONENTS}
    for sample in trace.samples:
        for kind in COMPONENTS:
            per_component[kind.value] += sample.power[kind] * sample.width
    total = per_component['xcd'] + per_component['iod'] + per_component['hbm']
    energy_j = dict(per_component, total=total)
    makespan = trace.makespan
    if makespan > 0:
        avg = {name: value / makespan for name, value in energy_j.items()}
    else:
        avg = {name: 0.0 for name in energy_j}
    durations = defaultdict(float)
    for span in trace.spans:
        durations[span.kernel_id] += span.duration
    return Metrics(energy_j=energy_j, makespan_s=makespan, avg_power_w=avg,
                   kernel_durations_s=dict(durations))


def savings_and_loss(base, variant):
    if base.energy_j['total'] <= 0 or base.makespan_s <= 0:
        raise ContractViolation('baseline must have positive energy and makespan')
    savings = (base.energy_j['total'] - variant.energy_j['total']) / base.energy_j['total'] * 100.0
    loss = (variant.makespan_s - base.makespan_s) / base.makespan_s * 100.0
    return savings, loss


def duration_changes(base, variant):
    """Per-kernel duration change in percent (positive means slower)."""
    return {
        kid: (variant.kernel_durations_s[kid] - before) / before * 100.0
        for kid, before in base.kernel_durations_s.items()
        if kid in variant.kernel_durations_s and before > 0
    }


def normalize(series, reference):
    if reference == 0:
        raise ContractViolation('cannot normalize to a zero reference')
    return [value / reference for value in series]


def pearson(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ContractViolation('pearson needs two series of equal length >= 2')
    if np.all(xs == xs[0]) or np.all(ys == ys[0]):
        raise UndefinedCorrelation('correlation is undefined for a constant series')
    r = np.corrcoef(xs, ys)[0, 1]
    return float(np.clip(r, -1.0, 1.0))


def _by_stream(intervals):
    streams = defaultdict(list)
    for interval in intervals:
        if interval.end < interval.start:
            raise ContractViolation(f'interval ends before it starts: {interval}')
        streams[interval.stream].append(interval)
    for name, items in streams.items():
        items.sort(key=lambda i: (i.start, i.end))
        for prev, cur in zip(items, items[1:]):
            if cur.start < prev.end:
                raise OverlappingIntervals(
                    f'stream {name!r}: [{prev.start}, {prev.end}] overlaps [{cur.start}, {cur.end}]')
    return streams


def overlap_accounting(intervals, makespan=None):
    """Split [0, makespan] into exposed, overlapped and idle time.

    An instant covered by two or more streams counts as overlapped, one
    stream as that interval's exposed category, none as idle.
    """
    streams = _by_stream(intervals)
    if makespan is None:
        makespan = max((i.end for i in intervals), default=0.0)
    seconds = {name: 0.0 for name in OVERLAP_CATEGORIES}
    cuts = sorted({0.0, makespan, *(i.start for i in intervals), *(i.end for i in intervals)})
    cuts = [c for c in cuts if 0.0 <= c <= makespan]
    starts = {name: [i.start for i in items] for name, items in streams.items()}

    for a, b in zip(cuts, cuts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        covering = []
        for name, items in streams.items():
            idx = bisect.bisect_right(starts[name], mid) - 1
            if idx >= 0 and items[idx].end > mid:
                covering.append(items[idx])
        if len(covering) >= 2:
            seconds['overlapped'] += b - a
        elif covering:
            seconds[EXPOSED_CATEGORY.get(covering[0].category, 'other')] += b - a
        else:
            seconds['idle'] += b - a
    return OverlapReport(seconds=seconds, makespan=makespan)


def trace_intervals(trace):
    return [Interval(str(span.stream), span.kind, span.start, span.end)
            for span in trace.spans if span.end > span.start]


def read_intervals_csv(path):
    with open(path, newline='', encoding='utf-8') as handle:
        reader = csv.DictReader(handle)
        missing = {'stream', 'category', 'start_s', 'end_s'} - set(reader.fieldnames or ())
        if missing:
            raise ContractViolation(f'{path}: missing column(s) {", ".join(sorted(missing))}')
        rows = []
        for line, row in enumerate(reader, start=2):
            try:
                rows.append(Interval(row['stream'].strip(), row['category'].strip().lower(),
                                     float(row['start_s']), float(row['end_s'])))
            except ValueError as exc:
                raise ContractViolation(f'{path}:{line}: {exc}') from exc
        return rows


def _window_average(samples):
    width = sum(s.width for s in samples)
    if width <= 0:
        return None
    out = {kind.value: sum(s.power[kind] * s.width for s in samples) / width for kind in COMPONENTS}
    out['total'] = sum(s.power.total * s.width for s in samples) / width
    out['f_mhz'] = sum(s.f * s.width for s in samples) / width
    return out


def steady_state_averages(trace, kernel_id=None):
    """Width-weighted averages over samples where ``kernel_id`` (or anything) runs."""
    samples = [s for s in trace.samples if s.width > 0 and s.active
               and (kernel_id is None or kernel_id in s.active)]
    return _window_average(samples)


def overlap_window_averages(trace):
    return _window_average([s for s in trace.samples if s.width > 0 and len(s.active) >= 2])


def throughput(trace, kernel_id=None):
    """Achieved flop/s and bytes/s over the time ``kernel_id`` (or anything) is running."""
    busy = sum(s.width for s in trace.samples if s.width > 0 and s.active
               and (kernel_id is None or kernel_id in s.active))
    spans = [s for s in trace.spans if kernel_id is None or s.kernel_id == kernel_id]
    if busy <= 0:
        return {key: 0.0 for key in THROUGHPUT_KEYS}
    return {
        'flops_per_s': sum(s.delivered.flops for s in spans) / busy,
        'hbm_bytes_per_s': sum(s.delivered.hbm_bytes for s in spans) / busy,
        'iod_bytes_per_s': sum(s.delivered.iod_bytes for s in spans) / busy,
    }


def _correlation_or_none(xs, ys):
    try:
        return pearson(xs, ys)
    except ContractViolation:
        return None


def run_report(trace, kernel_id=None):
    """Component view of a run while ``kernel_id`` (or anything) is running.

    ``power_share`` is the normalized breakdown (each component over the
    total); ``utilization_power_r`` correlates each component's utilization
    with its power sample by sample, ``None`` where either series is flat.
    """
    samples = [s for s in trace.samples if s.width > 0 and s.active
               and (kernel_id is None or kernel_id in s.active)]
    averages = _window_average(samples)
    names = [kind.value for kind in COMPONENTS]
    if averages is None:
        zeros = dict.fromkeys(names, 0.0)
        return {'throughput': throughput(trace, kernel_id), 'avg_power_w': dict(zeros, total=0.0),
                'power_share': dict(zeros), 'avg_utilization': dict(zeros),
                'utilization_power_r': dict.fromkeys(names)}
    width = sum(s.width for s in samples)
    return {
        'throughput': throughput(trace, kernel_id),
        'avg_power_w': {name: averages[name] for name in ENERGY_KEYS},
        'power_share': dict(zip(names, normalize([averages[n] for n in names], averages['total']))),
        'avg_utilization': {
            name: sum(s.utilizations[i] * s.width for s in samples) / width
            for i, name in enumerate(names)
        },
        'utilization_power_r': {
            kind.value: _correlation_or_none([s.utilizations[i] for s in samples],
                                             [s.power[kind] for s in samples])
            for i, kind in enumerate(COMPONENTS)
        },
    }


def relative_report(reports, reference):
    """Throughput and average component power of each report, normalized to ``reference``.

    Quantities the reference does not exercise (an all-gather's flop/s) come
    out as ``None``.
    """
    base = reports[reference]
    out = {}
    for name, report in reports.items():
        row = {}
        for key in THROUGHPUT_KEYS:
            ref = base['throughput'][key]
            row[key] = normalize([report['throughput'][key]], ref)[0] if ref else None
        for key in ENERGY_KEYS:
            ref = base['avg_power_w'][key]
            row[f'{key}_w'] = normalize([report['avg_power_w'][key]], ref)[0] if ref else None
        out[name] = row
    return out


def utilization_power_correlation(reports):
    """Across runs: achieved flop/s against XCD power and IOD traffic against IOD power."""
    rows = list(reports.values())
    return {
        'compute_vs_xcd': pearson([r['throughput']['flops_per_s'] for r in rows],
                                  [r['avg_power_w']['xcd'] for r in rows]),
        'iod_traffic_vs_iod': pearson([r['throughput']['iod_bytes_per_s'] for r in rows],
                                      [r['avg_power_w']['iod'] for r in rows]),
    }


def concatenate(first, second):
    """Append ``second`` after ``first`` on one time axis."""
    shift = first.makespan
    samples = [s for s in first.samples if s.width > 0]
    samples += [replace(s, t=s.t + shift) for s in second.samples]
    spans = list(first.spans) + [replace(s, start=s.start + shift, end=s.end + shift)
                                 for s in second.spans]
    return replace(first, samples=samples, spans=spans,
                   warnings=list(first.warnings) + list(second.warnings))


def metrics_to_dict(metrics, overlap=None, warnings=(), report=None, affinity=None):
    data = {
        'energy_j': {name: metrics.energy_j[name] for name in ENERGY_KEYS},
        'makespan_s': metrics.makespan_s,
        'avg_power_w': {name: metrics.avg_power_w[name] for name in ENERGY_KEYS},
        'kernel_durations_s': dict(sorted(metrics.kernel_durations_s.items())),
    }
    if overlap is not None:
        data['overlap'] = {f'{name}_s': overlap.seconds[name] for name in OVERLAP_CATEGORIES}
    if report is not None:
        data['report'] = report
    if affinity:
        data['affinity'] = affinity
    data['warnings'] = list(warnings)
    return data
