"""Power-management policies.

Component-agnostic baselines (no-op, GPU power cap), plain frequency caps and
the component-aware ``comppow_auto`` policy, which caps the XCD clock when the
added-up utilization hints of the running kernels lean away from the XCD and
moves CUs from a non-critical data-movement kernel to the critical one under
concurrency.
"""
import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Tuple

from django.core.exceptions import ValidationError

from .actuators import ActuatorSettings, default_cu_alloc, reallocate
from .exceptions import ContractViolation
from .gpu_model import COMPONENTS, ComponentKind
from .workload import Criticality, PhaseHint, infer_affinity

logger = logging.getLogger(__name__)

PHASE_FRACTION_TOLERANCE = 1e-9


class PolicyVariant(str, enum.Enum):
    BASELINE = 'baseline'
    POWER_CAP = 'power_cap'
    FREQ_CAP = 'freq_cap'
    COMBINED = 'combined'
    COMPPOW_AUTO = 'comppow_auto'


@dataclass(frozen=True)
class PolicyConfig:
    variant: PolicyVariant = PolicyVariant.BASELINE
    power_cap: Optional[float] = None
    freq_cap: Optional[float] = None
    cap_ratio: float = 0.78
    ewma_lambda: float = 0.5
    warmup_iters: int = 2
    reallocation_floor_cus: int = 16

    def __post_init__(self):
        errors = []
        if self.variant in (PolicyVariant.POWER_CAP, PolicyVariant.COMBINED) and self.power_cap is None:
            errors.append(ValidationError('power_cap is required', code='missing_power_cap'))
        if self.variant in (PolicyVariant.FREQ_CAP, PolicyVariant.COMBINED) and self.freq_cap is None:
            errors.append(ValidationError('freq_cap is required', code='missing_freq_cap'))
        if not 0 < self.cap_ratio <= 1:
            errors.append(ValidationError('cap_ratio must lie in (0, 1]', code='cap_ratio_out_of_range'))
        if not 0 < self.ewma_lambda <= 1:
            errors.append(ValidationError('ewma_lambda must lie in (0, 1]', code='lambda_out_of_range'))
        if self.warmup_iters < 1:
            errors.append(ValidationError('warmup_iters must be >= 1', code='warmup_too_small'))
        if self.reallocation_floor_cus < 1:
            errors.append(ValidationError('reallocation_floor_cus must be >= 1', code='floor_too_small'))
        if errors:
            raise ValidationError(errors)


@dataclass(frozen=True)
class KernelView:
    """What a power manager can observe about a running kernel."""
    desc: object
    demand: object
    progress: float

    @property
    def id(self):
        return self.desc.id


@dataclass(frozen=True)
class PolicySnapshot:
    t: float
    active: Tuple[KernelView, ...]


@dataclass(frozen=True)
class AffinityRecord:
    ewma: Tuple[float, float, float]
    count: int


@dataclass(frozen=True)
class AffinityHistory:
    records: Mapping[str, AffinityRecord] = field(default_factory=dict)

    def get(self, kernel_id):
        return self.records.get(kernel_id)

    def learned(self, kernel_id, warmup_iters):
        record = self.records.get(kernel_id)
        if record is None or record.count < warmup_iters:
            return None
        return argmax_component(record.ewma)

    def as_dict(self, warmup_iters):
        """Per-kernel EWMA, observation count and the affinity learned so far."""
        out = {}
        for kernel_id, record in sorted(self.records.items()):
            learned = self.learned(kernel_id, warmup_iters)
            out[kernel_id] = {
                'ewma': list(record.ewma),
                'observations': record.count,
                'learned': learned.value if learned is not None else None,
            }
        return out


def argmax_component(vector):
    """Dominant component of a (xcd, iod, hbm) vector; ties go Xcd, then Iod."""
    best = 0
    for i in (1, 2):
        if vector[i] > vector[best]:
            best = i
    return COMPONENTS[best]


def learn_affinity_online(history, kernel_id, observed, ewma_lambda=0.5):
    if any(not 0.0 <= u <= 1.0 for u in observed):
        raise ContractViolation(f'observed utilizations {observed!r} outside [0, 1]')
    record = history.get(kernel_id)
    if record is None:
        ewma = tuple(float(u) for u in observed)
        count = 1
    else:
        ewma = tuple(
            ewma_lambda * new + (1.0 - ewma_lambda) * old
            for new, old in zip(observed, record.ewma)
        )
        count = record.count + 1
    records = dict(history.records)
    records[kernel_id] = AffinityRecord(ewma, count)
    return AffinityHistory(records)


def phase_thresholds(phases):
    """Cumulative progress at which each phase ends."""
    ends = []
    total = 0.0
    for phase in phases:
        total += phase.fraction
        ends.append(total)
    return ends


def current_phase(phases, progress):
    for index, end in enumerate(phase_thresholds(phases)):
        if progress < end:
            return index
    return len(phases) - 1


def phase_budgets(phases, spec, cap_ratio=0.78):
    """Per-phase settings: full clock while the XCD leads the hinted utilization.

    Ties go to the XCD, so a phase with ``u_xcd >= u_iod`` (and ``u_xcd >= u_hbm``)
    keeps f_max; any other phase is capped to ``cap_ratio * f_max``.
    """
    total = sum(p.fraction for p in phases)
    if abs(total - 1.0) > PHASE_FRACTION_TOLERANCE:
        raise ContractViolation(f'phase fractions sum to {total}, expected 1')
    budgets = []
    for phase in phases:
        if argmax_component(phase.utilization) is ComponentKind.XCD:
            freq_cap = spec.f_max
        else:
            freq_cap = _capped_frequency(spec, cap_ratio)
        budgets.append(ActuatorSettings(freq_cap=freq_cap, power_cap=spec.tdp))
    return budgets


def _capped_frequency(spec, cap_ratio):
    return max(spec.f_min, cap_ratio * spec.f_max)


def _active_phase(view):
    phases = view.desc.phases
    return phases[current_phase(phases, view.progress)] if phases else None


def _one_hot(kind):
    return tuple(1.0 if k is kind else 0.0 for k in COMPONENTS)


def kernel_affinity(view, history, cfg, spec):
    """Current phase hint, else affinity hint, else learned after warm-up, else inferred."""
    desc = view.desc
    phase = _active_phase(view)
    if phase is not None:
        return argmax_component(phase.utilization)
    if desc.affinity_hint is not None:
        return desc.affinity_hint
    learned = history.learned(desc.id, cfg.warmup_iters)
    if learned is not None:
        return learned
    return infer_affinity(view.demand, spec)


def hinted_utilization(view, history, cfg, spec):
    """(xcd, iod, hbm) vector a kernel adds to the combined capping decision."""
    phase = _active_phase(view)
    if phase is not None:
        return tuple(phase.utilization)
    return _one_hot(kernel_affinity(view, history, cfg, spec))


def combined_utilization(views, history, cfg, spec):
    """Mean of the kernels' hinted vectors; the argmax equals that of their sum."""
    vectors = [hinted_utilization(v, history, cfg, spec) for v in views]
    return tuple(sum(column) / len(vectors) for column in zip(*vectors))


def baseline_settings(spec, snapshot):
    return ActuatorSettings(
        freq_cap=spec.f_max,
        power_cap=spec.tdp,
        cu_alloc=default_cu_alloc(spec, [v.desc for v in snapshot.active]),
    )


def apply_policy(cfg, snapshot, history, spec, warnings=None):
    """Actuator settings for the kernels in ``snapshot``.

    Conflicting criticality hints make ``comppow_auto`` fall back to the
    baseline; the conflict is appended to ``warnings`` when given.
    """
    settings = baseline_settings(spec, snapshot)
    variant = cfg.variant
    if variant is PolicyVariant.BASELINE:
        return settings
    if variant is PolicyVariant.POWER_CAP:
        return replace(settings, power_cap=_bounded_power(spec, cfg.power_cap))
    if variant is PolicyVariant.FREQ_CAP:
        return replace(settings, freq_cap=_bounded_freq(spec, cfg.freq_cap))
    if variant is PolicyVariant.COMBINED:
        return replace(settings, power_cap=_bounded_power(spec, cfg.power_cap),
                       freq_cap=_bounded_freq(spec, cfg.freq_cap))
    return _comppow_auto(cfg, snapshot, history, spec, settings, warnings)


def _comppow_auto(cfg, snapshot, history, spec, settings, warnings):
    active = snapshot.active
    if not active:
        return settings
    affinities = {v.id: kernel_affinity(v, history, cfg, spec) for v in active}

    critical = [v for v in active if v.desc.criticality is Criticality.CRITICAL]
    if len(active) > 1 and len(critical) > 1:
        message = (f'conflicting criticality hints ({", ".join(v.id for v in critical)}); '
                   'using baseline settings')
        if warnings is None or message not in warnings:
            logger.warning('t=%.6gs: %s', snapshot.t, message)
        if warnings is not None and message not in warnings:
            warnings.append(message)
        return settings

    cu_alloc = settings.cu_alloc
    if len(active) > 1 and len(critical) == 1:
        target = critical[0].id
        for view in active:
            if view.id != target and affinities[view.id] is not ComponentKind.XCD:
                cu_alloc = reallocate(cu_alloc, view.id, cfg.reallocation_floor_cus, target)

    # the critical kernel alone sets the clock; otherwise the hinted vectors are added up
    deciding = critical if len(active) > 1 and critical else list(active)
    if len(deciding) == 1 and deciding[0].desc.phases:
        view = deciding[0]
        phases = view.desc.phases
        budget = phase_budgets(phases, spec, cfg.cap_ratio)[current_phase(phases, view.progress)]
    else:
        combined = combined_utilization(deciding, history, cfg, spec)
        (budget,) = phase_budgets([PhaseHint(1.0, combined)], spec, cfg.cap_ratio)
    return replace(settings, freq_cap=budget.freq_cap, cu_alloc=cu_alloc)


def _bounded_freq(spec, cap):
    return min(spec.f_max, max(spec.f_min, cap))


def _bounded_power(spec, cap):
    return min(spec.tdp, cap)
