"""Scenario files: parsing, validation, spec lookup and canonical serialization."""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from django.conf import settings
from django.core.exceptions import ValidationError

from .engine import DEFAULT_DT
from .forms import (ComponentForm, GpuSpecForm, KernelForm, PhaseForm, PolicyForm, ScenarioForm,
                    clean_or_raise)
from .gpu_model import COMPONENTS, ComponentKind, ComponentSpec, GpuSpec, spec_to_dict, validate_spec
from .policy import PHASE_FRACTION_TOLERANCE, PolicyConfig, PolicyVariant
from .workload import AllGather, Criticality, Gemm, KernelDesc, PhaseHint

logger = logging.getLogger(__name__)

MAX_STREAMS = 2


@dataclass(frozen=True)
class Scenario:
    spec: object
    streams: Tuple[Tuple[KernelDesc, ...], ...]
    policy: PolicyConfig = PolicyConfig()
    dt: float = DEFAULT_DT
    iterations: int = 1
    name: str = ''
    description: str = ''
    spec_ref: Optional[str] = field(default=None, compare=False)
    source: Optional[str] = field(default=None, compare=False)

    @property
    def kernels(self):
        return [k for stream in self.streams for k in stream]


def _messages(error, prefix):
    out = []
    for message in error.messages:
        out.append(message if message.startswith(prefix) else f'{prefix}: {message}')
    return out


def spec_search_path(base_dir=None):
    dirs = [Path(base_dir)] if base_dir else []
    dirs += [Path(d) for d in getattr(settings, 'COMPPOW_SPEC_DIRS', [])]
    return dirs


def resolve_spec_path(ref, base_dir=None):
    ref_path = Path(ref)
    if ref_path.is_absolute():
        return ref_path
    names = [ref_path] if ref_path.suffix else [ref_path, ref_path.with_suffix('.json')]
    for directory in spec_search_path(base_dir):
        for name in names:
            candidate = directory / name
            if candidate.is_file():
                return candidate
    raise ValidationError(f'spec: "{ref}" not found in {", ".join(map(str, spec_search_path(base_dir)))}',
                          code='spec_not_found')


def spec_from_dict(data, prefix='spec'):
    if not isinstance(data, dict):
        raise ValidationError(f'{prefix}: must be an object')
    cleaned = clean_or_raise(GpuSpecForm(data), prefix)
    components = {}
    errors = []
    for kind in COMPONENTS:
        raw = cleaned['components'].get(kind.value)
        path = f'{prefix}.components.{kind.value}'
        if not isinstance(raw, dict):
            errors.append(f'{path}: This field is required.')
            continue
        try:
            c = clean_or_raise(ComponentForm(raw), path)
        except ValidationError as exc:
            errors.extend(exc.messages)
            continue
        components[kind] = ComponentSpec(
            idle_power=c['idle_power'],
            dyn_power_max=c['dyn_power_max'],
            freq_exponent=c['freq_exponent'] if c['freq_exponent'] is not None
            else (3.0 if kind is ComponentKind.XCD else 0.0),
            clock_power=c['clock_power'] or 0.0,
        )
    if errors:
        raise ValidationError(errors)
    spec = GpuSpec(
        components=components,
        f_min=cleaned['f_min'], f_max=cleaned['f_max'],
        f_ref=cleaned['f_ref'] if cleaned['f_ref'] is not None else cleaned['f_max'],
        tdp=cleaned['tdp'], cu_total=cleaned['cu_total'], peak_flops=cleaned['peak_flops'],
        hbm_bw=cleaned['hbm_bw'], iod_bw=cleaned['iod_bw'], link_bw=cleaned['link_bw'],
        copy_rate_per_cu=cleaned['copy_rate_per_cu'],
        copy_freq_exponent=cleaned['copy_freq_exponent'] if cleaned['copy_freq_exponent'] is not None else 1.0,
        name=cleaned['name'] or '',
    )
    try:
        return validate_spec(spec)
    except ValidationError as exc:
        raise ValidationError(_messages(exc, prefix)) from exc


def _read_json(path):
    try:
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    except OSError as exc:
        raise ValidationError(f'{path}: {exc.strerror}', code='unreadable') from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f'{path}: invalid JSON ({exc})', code='invalid_json') from exc


def load_spec(path, prefix='spec'):
    spec = spec_from_dict(_read_json(path), prefix)
    if not spec.name:
        spec = type(spec)(**{**spec.__dict__, 'name': Path(path).stem})
    return spec


def kernel_from_dict(data, prefix):
    if not isinstance(data, dict):
        raise ValidationError(f'{prefix}: must be an object')
    cleaned = clean_or_raise(KernelForm(data), prefix)
    if cleaned['op'] == 'gemm':
        op = Gemm(cleaned['m'], cleaned['n'], cleaned['k'], cleaned['dtype_bytes'],
                  cleaned['traffic_multiplier'] or 1.0)
    else:
        op = AllGather(cleaned['total_bytes'], cleaned['world_size'])

    phases = ()
    if cleaned['phases']:
        raw_phases = cleaned['phases']
        if not isinstance(raw_phases, list):
            raise ValidationError(f'{prefix}.phases: must be a list')
        hints = []
        for i, raw in enumerate(raw_phases):
            p = clean_or_raise(PhaseForm(raw if isinstance(raw, dict) else {}), f'{prefix}.phases[{i}]')
            hints.append(PhaseHint(p['fraction'], p['u']))
        total = sum(h.fraction for h in hints)
        if abs(total - 1.0) > PHASE_FRACTION_TOLERANCE:
            raise ValidationError(f'{prefix}.phases: fractions sum to {total:g}, expected 1')
        phases = tuple(hints)

    return KernelDesc(
        id=cleaned['id'],
        op=op,
        criticality=Criticality(cleaned['criticality'] or Criticality.UNSPECIFIED.value),
        affinity_hint=ComponentKind(cleaned['affinity']) if cleaned['affinity'] else None,
        cus=cleaned['cus'],
        phases=phases,
    )


def policy_from_dict(data, spec, prefix='policy'):
    if data is None:
        return PolicyConfig()
    if not isinstance(data, dict):
        raise ValidationError(f'{prefix}: must be an object')
    cleaned = clean_or_raise(PolicyForm(data), prefix)
    errors = []
    power_cap, freq_cap = cleaned['power_cap_w'], cleaned['freq_cap_mhz']
    if power_cap is not None and not spec.idle_total < power_cap <= spec.tdp:
        errors.append(f'{prefix}.power_cap_w: {power_cap:g} W outside ({spec.idle_total:g}, {spec.tdp:g}]')
    if freq_cap is not None and not spec.f_min <= freq_cap <= spec.f_max:
        errors.append(f'{prefix}.freq_cap_mhz: {freq_cap:g} MHz outside [{spec.f_min:g}, {spec.f_max:g}]')
    if errors:
        raise ValidationError(errors)
    options = {name: cleaned[name] for name in
               ('cap_ratio', 'ewma_lambda', 'warmup_iters', 'reallocation_floor_cus')
               if cleaned[name] is not None}
    try:
        return PolicyConfig(variant=PolicyVariant(cleaned['variant']), power_cap=power_cap,
                            freq_cap=freq_cap, **options)
    except ValidationError as exc:
        raise ValidationError(_messages(exc, prefix)) from exc


def scenario_from_dict(data, base_dir=None, source=None):
    if not isinstance(data, dict):
        raise ValidationError('scenario: must be an object')
    cleaned = clean_or_raise(ScenarioForm(data), '')

    spec_ref = data.get('spec')
    if spec_ref is None:
        raise ValidationError('spec: This field is required.')
    if isinstance(spec_ref, str):
        spec = load_spec(resolve_spec_path(spec_ref, base_dir))
    else:
        spec, spec_ref = spec_from_dict(spec_ref), None

    raw_streams = data.get('streams')
    if not isinstance(raw_streams, list):
        raise ValidationError('streams: must be a list of kernel lists')
    if len(raw_streams) > MAX_STREAMS:
        raise ValidationError(f'streams: at most {MAX_STREAMS} streams are supported')
    errors, streams, seen = [], [], set()
    for s, raw_stream in enumerate(raw_streams):
        if not isinstance(raw_stream, list):
            errors.append(f'streams[{s}]: must be a list of kernels')
            continue
        kernels = []
        for i, raw in enumerate(raw_stream):
            try:
                kernel = kernel_from_dict(raw, f'streams[{s}][{i}]')
            except ValidationError as exc:
                errors.extend(exc.messages)
                continue
            if kernel.id in seen:
                errors.append(f'streams[{s}][{i}].id: duplicate kernel id "{kernel.id}"')
            seen.add(kernel.id)
            kernels.append(kernel)
        streams.append(tuple(kernels))
    if not errors and not any(streams):
        errors.append('streams: no kernels')
    if errors:
        raise ValidationError(errors)

    policy = policy_from_dict(data.get('policy'), spec)
    return Scenario(
        spec=spec,
        streams=tuple(s for s in streams if s),
        policy=policy,
        dt=cleaned['dt'] or getattr(settings, 'COMPPOW_DEFAULT_DT', DEFAULT_DT),
        iterations=cleaned['iterations'] or 1,
        name=cleaned['name'] or (Path(source).stem if source else ''),
        description=cleaned['description'] or '',
        spec_ref=spec_ref,
        source=str(source) if source else None,
    )


def parse_scenario(path):
    path = Path(path)
    scenario = scenario_from_dict(_read_json(path), base_dir=path.parent, source=path)
    logger.debug('parsed %s: %d kernel(s)', path, len(scenario.kernels))
    return scenario


def kernel_to_dict(kernel):
    data = {'id': kernel.id}
    if isinstance(kernel.op, Gemm):
        data.update(op='gemm', m=kernel.op.m, n=kernel.op.n, k=kernel.op.k,
                    dtype_bytes=kernel.op.dtype_bytes, traffic_multiplier=kernel.op.traffic_multiplier)
    else:
        data.update(op='all_gather', total_bytes=kernel.op.total_bytes, world_size=kernel.op.world_size)
    data['criticality'] = kernel.criticality.value
    if kernel.affinity_hint is not None:
        data['affinity'] = kernel.affinity_hint.value
    if kernel.cus is not None:
        data['cus'] = kernel.cus
    if kernel.phases:
        data['phases'] = [{'fraction': p.fraction, 'u': list(p.utilization)} for p in kernel.phases]
    return data


def policy_to_dict(policy):
    data = {'variant': policy.variant.value}
    if policy.power_cap is not None:
        data['power_cap_w'] = policy.power_cap
    if policy.freq_cap is not None:
        data['freq_cap_mhz'] = policy.freq_cap
    data.update(cap_ratio=policy.cap_ratio, ewma_lambda=policy.ewma_lambda,
                warmup_iters=policy.warmup_iters, reallocation_floor_cus=policy.reallocation_floor_cus)
    return data


def scenario_to_dict(scenario):
    """Effective configuration: every default applied, spec inlined."""
    return {
        'name': scenario.name,
        'description': scenario.description,
        'spec': spec_to_dict(scenario.spec),
        'dt': scenario.dt,
        'iterations': scenario.iterations,
        'policy': policy_to_dict(scenario.policy),
        'streams': [[kernel_to_dict(k) for k in stream] for stream in scenario.streams],
    }


def dumps(data):
    return json.dumps(data, indent=2, sort_keys=False) + '\n'
