"""Simulated GPU: components, frequency domain, TDP and the component power model.

Dynamic power of a component follows

    P = idle_power + utilization * dyn_power_max * (f / f_ref) ** freq_exponent

plus ``clock_power * (f / f_ref) ** freq_exponent`` while at least one kernel
is resident. Only the XCD clock is governed; IOD and HBM use an exponent of 0.
All watt values are synthetic calibration units.
"""
import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Mapping

from django.core.exceptions import ValidationError

from .exceptions import ContractViolation


class ComponentKind(str, enum.Enum):
    XCD = 'xcd'
    IOD = 'iod'
    HBM = 'hbm'

    def __str__(self):
        return self.value


# Evaluation and summation order used everywhere.
COMPONENTS = (ComponentKind.XCD, ComponentKind.IOD, ComponentKind.HBM)


@dataclass(frozen=True)
class ComponentSpec:
    idle_power: float
    dyn_power_max: float
    freq_exponent: float = 0.0
    clock_power: float = 0.0


@dataclass(frozen=True)
class GpuSpec:
    components: Mapping[ComponentKind, ComponentSpec]
    f_min: float
    f_max: float
    f_ref: float
    tdp: float
    cu_total: int
    peak_flops: float
    hbm_bw: float
    iod_bw: float
    link_bw: float
    copy_rate_per_cu: float
    copy_freq_exponent: float = 1.0
    name: str = ''

    @property
    def idle_total(self):
        return sum(self.components[kind].idle_power for kind in COMPONENTS)

    @property
    def machine_balance(self):
        """Flops per HBM byte at which a kernel stops being memory bound."""
        return self.peak_flops / self.hbm_bw


@dataclass(frozen=True)
class ValidatedSpec(GpuSpec):
    """A GpuSpec whose invariants were checked by validate_spec."""


@dataclass(frozen=True)
class PowerBreakdown:
    xcd: float
    iod: float
    hbm: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'total', self.xcd + self.iod + self.hbm)

    def __getitem__(self, kind):
        return getattr(self, ComponentKind(kind).value)

    def as_dict(self):
        return {'xcd': self.xcd, 'iod': self.iod, 'hbm': self.hbm, 'total': self.total}


_THROUGHPUTS = ('peak_flops', 'hbm_bw', 'iod_bw', 'link_bw', 'copy_rate_per_cu')


def validate_spec(spec):
    """Check every GpuSpec invariant and return a ValidatedSpec.

    All violations are collected and raised together as one ValidationError.
    """
    errors = []
    components = dict(spec.components or {})
    if set(components) != set(COMPONENTS):
        errors.append(ValidationError(
            'components must cover xcd, iod and hbm exactly once',
            code='components_incomplete'))
    for kind, cspec in components.items():
        for attr in ('idle_power', 'dyn_power_max', 'freq_exponent', 'clock_power'):
            if getattr(cspec, attr) < 0:
                errors.append(ValidationError(
                    '%(component)s.%(attr)s must be >= 0', code='negative_component_value',
                    params={'component': kind, 'attr': attr}))
        if cspec.idle_power + cspec.dyn_power_max <= 0:
            errors.append(ValidationError(
                '%(component)s draws no power at all', code='component_without_power',
                params={'component': kind}))

    if spec.f_min <= 0:
        errors.append(ValidationError('f_min must be positive', code='nonpositive_frequency'))
    if spec.f_min > spec.f_max:
        errors.append(ValidationError('frequency domain inverted', code='frequency_domain_inverted'))
    elif not spec.f_min <= spec.f_ref <= spec.f_max:
        errors.append(ValidationError(
            'reference frequency outside [f_min, f_max]', code='reference_frequency_outside_domain'))

    idle = sum(c.idle_power for c in components.values())
    if spec.tdp <= idle:
        errors.append(ValidationError('no dynamic headroom', code='no_dynamic_headroom'))
    if spec.cu_total < 1:
        errors.append(ValidationError('cu_total must be at least 1', code='no_compute_units'))
    for attr in _THROUGHPUTS:
        if getattr(spec, attr) <= 0:
            errors.append(ValidationError(
                'non-positive throughput: %(attr)s', code='nonpositive_throughput',
                params={'attr': attr}))
    if not 0.0 <= spec.copy_freq_exponent <= 1.0:
        errors.append(ValidationError(
            'copy_freq_exponent must lie in [0, 1]', code='copy_exponent_out_of_range'))

    if errors:
        raise ValidationError(errors)
    values = {f.name: getattr(spec, f.name) for f in dataclasses.fields(GpuSpec)}
    values['components'] = {kind: components[kind] for kind in COMPONENTS}
    return ValidatedSpec(**values)


def require_validated(spec):
    if not isinstance(spec, ValidatedSpec):
        raise TypeError('the engine only accepts specs returned by validate_spec()')
    return spec


def component_power(cspec, utilization, f, f_ref, busy=False):
    if not 0.0 <= utilization <= 1.0:
        raise ContractViolation(f'utilization {utilization!r} outside [0, 1]')
    scale = (f / f_ref) ** cspec.freq_exponent
    power = cspec.idle_power + utilization * cspec.dyn_power_max * scale
    if busy:
        power += cspec.clock_power * scale
    return power


def power_breakdown(spec, utilizations, f, busy=False):
    """Evaluate all components at ``f``; ``utilizations`` is (u_xcd, u_iod, u_hbm)."""
    watts = [
        component_power(spec.components[kind], u, f, spec.f_ref, busy)
        for kind, u in zip(COMPONENTS, utilizations)
    ]
    return PowerBreakdown(*watts)


def peak_compute_tp(spec, f, cu_frac):
    if not 0.0 < cu_frac <= 1.0:
        raise ContractViolation(f'cu_frac {cu_frac!r} outside (0, 1]')
    return spec.peak_flops * (f / spec.f_max) * cu_frac


def governor_tolerance(spec):
    """Upper bound on the power change caused by one 1 MHz frequency step."""
    eps = 0.0
    for kind in COMPONENTS:
        cspec = spec.components[kind]
        swing = cspec.dyn_power_max + cspec.clock_power
        if cspec.freq_exponent == 0:
            # utilization of ungoverned components still follows the clock
            eps += cspec.dyn_power_max / spec.f_min
            continue
        steps = (
            (spec.f_max / spec.f_ref) ** cspec.freq_exponent
            - ((spec.f_max - 1.0) / spec.f_ref) ** cspec.freq_exponent,
            ((spec.f_min + 1.0) / spec.f_ref) ** cspec.freq_exponent
            - (spec.f_min / spec.f_ref) ** cspec.freq_exponent,
        )
        eps += swing * max(steps)
    return eps


def spec_to_dict(spec):
    data = {
        'name': spec.name,
        'components': {
            kind.value: dataclasses.asdict(spec.components[kind]) for kind in COMPONENTS
        },
    }
    for f in dataclasses.fields(GpuSpec):
        if f.name not in ('components', 'name'):
            data[f.name] = getattr(spec, f.name)
    return data
