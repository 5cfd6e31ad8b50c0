"""GEMM and all-gather kernels, their demand vectors and component affinity."""
import enum
import re
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

from .exceptions import FlopOverflow, UndefinedIntensity
from .gpu_model import ComponentKind

# CUs a collective claims when the scenario does not request a count.
DEFAULT_COLLECTIVE_CUS = 64

# Fully connected 8-GPU node.
DEFAULT_WORLD_SIZE = 8

_INT64_MAX = 2 ** 63 - 1


class Criticality(str, enum.Enum):
    CRITICAL = 'critical'
    DEFERRABLE = 'deferrable'
    UNSPECIFIED = 'unspecified'


@dataclass(frozen=True)
class Gemm:
    m: int
    n: int
    k: int
    dtype_bytes: int = 2
    traffic_multiplier: float = 1.0


@dataclass(frozen=True)
class AllGather:
    total_bytes: int
    world_size: int = DEFAULT_WORLD_SIZE


@dataclass(frozen=True)
class PhaseHint:
    fraction: float
    utilization: Tuple[float, float, float]


@dataclass(frozen=True)
class KernelDesc:
    id: str
    op: Union[Gemm, AllGather]
    criticality: Criticality = Criticality.UNSPECIFIED
    affinity_hint: Optional[ComponentKind] = None
    cus: Optional[int] = None
    phases: Tuple[PhaseHint, ...] = field(default_factory=tuple)

    @property
    def kind(self):
        """Overlap-accounting category."""
        return 'gemm' if isinstance(self.op, Gemm) else 'comm'

    @property
    def is_collective(self):
        return isinstance(self.op, AllGather)

    def requested_cus(self):
        if self.cus is not None:
            return self.cus
        return DEFAULT_COLLECTIVE_CUS if self.is_collective else None


@dataclass(frozen=True)
class DemandVector:
    flops: int = 0
    hbm_bytes: float = 0
    iod_bytes: float = 0

    @property
    def runnable(self):
        return self.flops > 0 or self.hbm_bytes > 0 or self.iod_bytes > 0


def gemm_demand(desc):
    flops = 2 * desc.m * desc.n * desc.k
    if flops > _INT64_MAX:
        raise FlopOverflow(f'GEMM ({desc.m},{desc.n},{desc.k}) overflows a 64-bit flop counter')
    ideal_bytes = desc.dtype_bytes * (desc.m * desc.k + desc.k * desc.n + desc.m * desc.n)
    traffic = ideal_bytes if desc.traffic_multiplier == 1 else ideal_bytes * desc.traffic_multiplier
    return DemandVector(flops=flops, hbm_bytes=traffic, iod_bytes=traffic)


def allgather_demand(desc):
    # each peer sends its shard to, and receives one from, every other peer
    shard = desc.total_bytes // desc.world_size
    sent = received = (desc.world_size - 1) * shard
    moved = sent + received
    return DemandVector(flops=0, hbm_bytes=moved, iod_bytes=moved)


def kernel_demand(desc):
    if isinstance(desc.op, Gemm):
        return gemm_demand(desc.op)
    return allgather_demand(desc.op)


def arithmetic_intensity(demand):
    if demand.hbm_bytes <= 0:
        raise UndefinedIntensity('arithmetic intensity is undefined without HBM traffic')
    return demand.flops / demand.hbm_bytes


def infer_affinity(demand, spec):
    if demand.flops == 0:
        return ComponentKind.IOD
    try:
        intensity = arithmetic_intensity(demand)
    except UndefinedIntensity:
        return ComponentKind.XCD
    if intensity >= spec.machine_balance:
        return ComponentKind.XCD
    return ComponentKind.IOD


_SIZE_RE = re.compile(r'^\s*([0-9]*\.?[0-9]+)\s*([KMG]i?B|B)?\s*$', re.IGNORECASE)
_UNITS = {'b': 1, 'kb': 2 ** 10, 'kib': 2 ** 10, 'mb': 2 ** 20, 'mib': 2 ** 20,
          'gb': 2 ** 30, 'gib': 2 ** 30}


def parse_size(value):
    """Byte count from an int or a string such as ``"160MB"`` or ``"26.5GiB"``.

    Decimal spellings map to binary units, so ``"4GB"`` is 4 GiB.
    """
    if isinstance(value, int):
        return value
    match = _SIZE_RE.match(str(value))
    if not match:
        raise ValueError(f'unrecognised size {value!r}')
    number, unit = match.groups()
    return int(round(float(number) * _UNITS[(unit or 'B').lower()]))
