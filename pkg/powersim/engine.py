"""Discrete-time simulation core.

Each step asks the policy for actuator settings, splits contended bandwidth,
lets the governor pick the highest clock that fits the power cap and then
advances every resident kernel along its roofline. Steps are ``dt`` wide
unless a kernel completion or a phase boundary falls inside, in which case
the step is shortened to land on it exactly.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Tuple

from .actuators import ActuatorSettings, check_settings
from .exceptions import SimulationStall
from .gpu_model import PowerBreakdown, power_breakdown, peak_compute_tp, require_validated
from .policy import AffinityHistory, KernelView, PolicySnapshot, apply_policy, learn_affinity_online
from .policy import phase_thresholds
from .workload import DemandVector, kernel_demand

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-4
FREQ_RESOLUTION_MHZ = 1.0
BYTE_RESOURCES = ('hbm', 'iod')

# relative slack when deciding that an event lands at the end of a step
_EVENT_SLACK = 1e-9


@dataclass
class KernelState:
    desc: object
    demand: DemandVector
    stream: int = 0
    iteration: int = 0
    progress: float = 0.0
    start_time: Optional[float] = None
    end_time: Optional[float] = None
    delivered: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    util_seconds: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    busy_seconds: float = 0.0

    @property
    def id(self):
        return self.desc.id

    def view(self):
        return KernelView(self.desc, self.demand, self.progress)


@dataclass(frozen=True)
class ResourceRates:
    compute: float
    hbm: float
    iod: float


@dataclass(frozen=True)
class PowerSample:
    t: float
    width: float
    f: float
    power: PowerBreakdown
    active: Tuple[str, ...]
    utilizations: Tuple[float, float, float]
    freq_cap: float
    power_cap: float
    cu_alloc: Tuple[Tuple[str, int], ...] = ()


@dataclass(frozen=True)
class KernelSpan:
    kernel_id: str
    stream: int
    iteration: int
    kind: str
    start: float
    end: float
    demand: DemandVector
    delivered: DemandVector

    @property
    def duration(self):
        return self.end - self.start


@dataclass
class SimTrace:
    dt: float
    samples: list = field(default_factory=list)
    spans: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    history: AffinityHistory = field(default_factory=AffinityHistory)

    @property
    def makespan(self):
        return self.samples[-1].t if self.samples else 0.0


def kernel_rates(state, spec, f, cu_frac, bw_share=None):
    """Roofline rates a kernel may use at clock ``f``.

    ``bw_share`` maps ``hbm``/``iod`` to the fraction of peak bandwidth the
    kernel was granted (1 when uncontended). Collectives are further limited
    by the inter-GPU links and by their CUs' copy issue rate.
    """
    bw_share = bw_share or {}
    compute = peak_compute_tp(spec, f, cu_frac)
    hbm = spec.hbm_bw * bw_share.get('hbm', 1.0)
    iod = spec.iod_bw * bw_share.get('iod', 1.0)
    if state.desc.is_collective:
        cus = cu_frac * spec.cu_total
        copy = cus * spec.copy_rate_per_cu * (f / spec.f_ref) ** spec.copy_freq_exponent
        cap = min(spec.link_bw, copy)
        hbm = min(hbm, cap)
        iod = min(iod, cap)
    return ResourceRates(compute, hbm, iod)


def _terms(demand, rates):
    terms = []
    for amount, rate in ((demand.flops, rates.compute),
                         (demand.hbm_bytes, rates.hbm),
                         (demand.iod_bytes, rates.iod)):
        if amount <= 0:
            terms.append(0.0)
        elif rate <= 0:
            terms.append(float('inf'))
        else:
            terms.append(amount / rate)
    return terms


def full_duration(demand, rates):
    """Bottleneck time for the whole demand; 0 when nothing is demanded."""
    return max(_terms(demand, rates))


def kernel_duration(state, rates):
    return (1.0 - state.progress) * full_duration(state.demand, rates)


def utilizations(state, rates, duration_bottleneck):
    """Per-kernel (xcd, iod, hbm) utilization relative to the granted rates."""
    t_compute, t_hbm, t_iod = _terms(state.demand, rates)
    return (t_compute / duration_bottleneck,
            t_iod / duration_bottleneck,
            t_hbm / duration_bottleneck)


def _alloc_frac(spec, settings, state):
    return settings.cu_alloc[state.id] / spec.cu_total


def contention_shares(states, spec, f=None, settings=None):
    """Scale factor per byte resource: 1 under capacity, else peak / total demand."""
    f = spec.f_max if f is None else f
    demand_rates = _demand_rates(states, spec, f, settings)
    shares = {}
    for resource in BYTE_RESOURCES:
        peak = getattr(spec, f'{resource}_bw')
        total = sum(rates[resource] for rates in demand_rates)
        shares[resource] = 1.0 if total <= peak else peak / total
    return shares


def _demand_rates(states, spec, f, settings):
    out = []
    for state in states:
        cu_frac = _alloc_frac(spec, settings, state) if settings else 1.0
        t_full = full_duration(state.demand, kernel_rates(state, spec, f, cu_frac))
        if t_full <= 0 or t_full == float('inf'):
            out.append({'hbm': 0.0, 'iod': 0.0})
        else:
            out.append({'hbm': state.demand.hbm_bytes / t_full, 'iod': state.demand.iod_bytes / t_full})
    return out


def granted_fractions(states, spec, f, settings):
    """Per-kernel fraction of peak bandwidth, after proportional scaling."""
    shares = contention_shares(states, spec, f, settings)
    demand_rates = _demand_rates(states, spec, f, settings)
    granted = {}
    for state, rates in zip(states, demand_rates):
        granted[state.id] = {
            resource: 1.0 if shares[resource] >= 1.0
            else rates[resource] * shares[resource] / getattr(spec, f'{resource}_bw')
            for resource in BYTE_RESOURCES
        }
    return granted


@dataclass(frozen=True)
class _Operating:
    power: PowerBreakdown
    utilizations: Tuple[float, float, float]
    rates: dict
    durations: dict


def _operating_point(spec, states, settings, granted, f):
    u_xcd = u_iod = u_hbm = 0.0
    rates_by_id, durations = {}, {}
    full_tp = peak_compute_tp(spec, f, 1.0)
    for state in states:
        cu_frac = _alloc_frac(spec, settings, state)
        rates = kernel_rates(state, spec, f, cu_frac, granted.get(state.id))
        t_full = full_duration(state.demand, rates)
        rates_by_id[state.id] = rates
        durations[state.id] = t_full
        if t_full <= 0 or t_full == float('inf'):
            continue
        u_xcd += state.demand.flops / t_full / full_tp
        u_iod += state.demand.iod_bytes / t_full / spec.iod_bw
        u_hbm += state.demand.hbm_bytes / t_full / spec.hbm_bw
    util = (min(1.0, u_xcd), min(1.0, u_iod), min(1.0, u_hbm))
    power = power_breakdown(spec, util, f, busy=bool(states))
    return _Operating(power, util, rates_by_id, durations)


def solve_frequency(spec, states, settings, granted=None):
    """Highest clock in [f_min, min(f_max, freq_cap)] whose power fits the cap.

    Bisection over whole-MHz steps above f_min; the grid does not move
    with the ceiling. The governor cannot go below f_min, so f_min is
    returned when even that exceeds the cap.
    """
    spec = require_validated(spec)
    ceiling = max(spec.f_min, min(spec.f_max, settings.freq_cap))
    if not states:
        return ceiling
    if granted is None:
        granted = granted_fractions(states, spec, ceiling, settings)

    def fits(f):
        return _operating_point(spec, states, settings, granted, f).power.total <= settings.power_cap

    if fits(ceiling):
        return ceiling
    if not fits(spec.f_min):
        return spec.f_min
    lo, hi = 0, math.ceil((ceiling - spec.f_min) / FREQ_RESOLUTION_MHZ)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(spec.f_min + mid * FREQ_RESOLUTION_MHZ):
            lo = mid
        else:
            hi = mid
    return spec.f_min + lo * FREQ_RESOLUTION_MHZ


class SimState:
    """Mutable state of one simulation, owned by the run loop."""

    def __init__(self, spec, policy, dt=DEFAULT_DT, history=None):
        self.spec = require_validated(spec)
        self.policy = policy
        self.dt = dt
        self.t = 0.0
        self.queues = []
        self.active = []
        self.history = history or AffinityHistory()
        self.trace = SimTrace(dt=dt)
        self._clamped = False

    def enqueue(self, streams, iteration=0):
        self.queues = [
            deque(KernelState(desc, kernel_demand(desc), stream=s, iteration=iteration) for desc in kernels)
            for s, kernels in enumerate(streams)
        ]

    @property
    def done(self):
        return not self.active and not any(self.queues)

    def _launch(self):
        busy = {k.stream for k in self.active}
        for stream, queue in enumerate(self.queues):
            while queue and stream not in busy:
                state = queue.popleft()
                state.start_time = self.t
                if not state.demand.runnable:
                    state.progress = 1.0
                    self._complete(state)
                    continue
                self.active.append(state)
                busy.add(stream)

    def _complete(self, state):
        state.end_time = self.t
        self.trace.spans.append(KernelSpan(
            kernel_id=state.id, stream=state.stream, iteration=state.iteration,
            kind=state.desc.kind, start=state.start_time, end=state.end_time,
            demand=state.demand, delivered=DemandVector(*state.delivered),
        ))
        if state.busy_seconds > 0:
            observed = tuple(min(1.0, u / state.busy_seconds) for u in state.util_seconds)
            self.history = learn_affinity_online(
                self.history, state.id, observed, self.policy.ewma_lambda)

    def settings(self):
        snapshot = PolicySnapshot(self.t, tuple(k.view() for k in self.active))
        return apply_policy(self.policy, snapshot, self.history, self.spec, self.trace.warnings)

    def step(self, dt=None):
        dt = self.dt if dt is None else dt
        self._launch()
        if not self.active:
            return self
        spec = self.spec
        settings = self.settings()
        for state in self.active:
            if settings.cu_alloc.get(state.id, 0) < 1:
                raise SimulationStall(state.id)
        check_settings(spec, settings, [k.id for k in self.active])

        ceiling = max(spec.f_min, min(spec.f_max, settings.freq_cap))
        granted = granted_fractions(self.active, spec, ceiling, settings)
        f = solve_frequency(spec, self.active, settings, granted)
        self._log_clamp(f, ceiling)
        op = _operating_point(spec, self.active, settings, granted, f)

        events = {}
        width = dt
        for state in self.active:
            t_full = op.durations[state.id]
            if t_full == float('inf'):
                raise SimulationStall(state.id)
            targets = [b for b in phase_thresholds(state.desc.phases)[:-1] if b > state.progress]
            targets.append(1.0)
            target = min(targets)
            events[state.id] = (target, (target - state.progress) * t_full)
            width = min(width, events[state.id][1])

        self.trace.samples.append(PowerSample(
            t=self.t, width=width, f=f, power=op.power, active=tuple(k.id for k in self.active),
            utilizations=op.utilizations, freq_cap=settings.freq_cap, power_cap=settings.power_cap,
            cu_alloc=tuple(sorted(settings.cu_alloc.items())),
        ))

        finished = []
        for state in self.active:
            t_full = op.durations[state.id]
            target, time_to_target = events[state.id]
            if time_to_target <= width * (1.0 + _EVENT_SLACK):
                new_progress = target
            else:
                new_progress = state.progress + width / t_full
            # integrated at the step's rates; progress may have been snapped to the event
            share = width / t_full
            demand = state.demand
            state.delivered[0] += demand.flops * share
            state.delivered[1] += demand.hbm_bytes * share
            state.delivered[2] += demand.iod_bytes * share
            for i, u in enumerate(utilizations(state, op.rates[state.id], t_full)):
                state.util_seconds[i] += u * width
            state.busy_seconds += width
            state.progress = new_progress
            if new_progress >= 1.0:
                finished.append(state)

        self.t += width
        for state in finished:
            self.active.remove(state)
            self._complete(state)
        return self

    def _log_clamp(self, f, ceiling):
        clamped = f < ceiling
        if clamped != self._clamped:
            logger.debug('t=%.6gs: governor %s at %.0f MHz', self.t,
                         'clamps' if clamped else 'releases', f)
            self._clamped = clamped

    def finish(self):
        settings = self.settings()
        f = solve_frequency(self.spec, [], settings)
        self.trace.samples.append(PowerSample(
            t=self.t, width=0.0, f=f, power=power_breakdown(self.spec, (0.0, 0.0, 0.0), f),
            active=(), utilizations=(0.0, 0.0, 0.0),
            freq_cap=settings.freq_cap, power_cap=settings.power_cap,
        ))
        self.trace.history = self.history
        return self.trace


def run(scenario):
    """Simulate ``scenario`` to completion and return its trace.

    The result depends only on the scenario: identical inputs give
    bit-identical traces.
    """
    sim = SimState(scenario.spec, scenario.policy, scenario.dt)
    logger.info('running %s: %d stream(s), %d iteration(s), policy %s',
                scenario.name or 'scenario', len(scenario.streams), scenario.iterations,
                scenario.policy.variant.value)
    for iteration in range(scenario.iterations):
        sim.enqueue(scenario.streams, iteration)
        while not sim.done:
            sim.step()
    trace = sim.finish()
    logger.info('finished %s: makespan %.6g s, %d samples',
                scenario.name or 'scenario', trace.makespan, len(trace.samples))
    return trace
