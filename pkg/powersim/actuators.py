"""The control surface a policy can set: frequency cap, power cap, CU partition."""
from dataclasses import dataclass, field
from typing import Mapping

from .exceptions import ContractViolation


@dataclass(frozen=True)
class ActuatorSettings:
    freq_cap: float
    power_cap: float
    cu_alloc: Mapping[str, int] = field(default_factory=dict)


def default_cu_alloc(spec, kernels):
    """Partition CUs among ``kernels`` (KernelDesc objects, in launch order).

    Kernels that request a count (collectives always do) are served first;
    the remaining CUs are split evenly among the others. The partition never
    exceeds ``cu_total``. Requesting kernels keep at least one CU each; on a
    GPU with fewer CUs than kernels the others may get none, and the engine
    reports that kernel as stalled.
    """
    kernels = list(kernels)
    if not kernels:
        return {}
    requested = [k for k in kernels if k.requested_cus() is not None]
    flexible = [k for k in kernels if k.requested_cus() is None]

    budget = spec.cu_total - len(flexible)
    asked = sum(k.requested_cus() for k in requested)
    alloc = {}
    if requested:
        if asked <= budget:
            alloc = {k.id: k.requested_cus() for k in requested}
        else:
            # oversubscribed: scale requests down, one CU minimum each
            for k in requested:
                alloc[k.id] = max(1, (k.requested_cus() * budget) // asked)
    if flexible:
        remaining = spec.cu_total - sum(alloc.values())
        share, extra = divmod(remaining, len(flexible))
        for i, k in enumerate(flexible):
            alloc[k.id] = share + (1 if i < extra else 0)
    return alloc


def reallocate(alloc, kernel_id, cus, beneficiary):
    """Shrink ``kernel_id`` to ``cus`` CUs and hand the freed CUs to ``beneficiary``."""
    alloc = dict(alloc)
    current = alloc[kernel_id]
    target = max(1, min(current, cus))
    alloc[kernel_id] = target
    alloc[beneficiary] += current - target
    return alloc


def settings_problems(spec, settings, active_ids):
    """List every ActuatorSettings invariant the settings violate."""
    problems = []
    if not spec.f_min <= settings.freq_cap <= spec.f_max:
        problems.append(f'freq_cap {settings.freq_cap} outside [{spec.f_min}, {spec.f_max}]')
    if not spec.idle_total < settings.power_cap <= spec.tdp:
        problems.append(f'power_cap {settings.power_cap} outside ({spec.idle_total}, {spec.tdp}]')
    total = sum(settings.cu_alloc.get(kid, 0) for kid in active_ids)
    if total > spec.cu_total:
        problems.append(f'{total} CUs allocated, only {spec.cu_total} exist')
    for kid in active_ids:
        if settings.cu_alloc.get(kid, 0) < 1:
            problems.append(f'kernel "{kid}" has no CU')
    return problems


def check_settings(spec, settings, active_ids):
    problems = settings_problems(spec, settings, active_ids)
    if problems:
        raise ContractViolation('; '.join(problems))
    return settings
