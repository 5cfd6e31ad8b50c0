import json
from pathlib import Path

from django.conf import settings

from powersim.gpu_model import ComponentKind, ComponentSpec, GpuSpec, validate_spec
from powersim.policy import PolicyConfig
from powersim.scenario import Scenario, load_spec, parse_scenario

SCENARIO_DIR = Path(settings.BASE_DIR) / 'scenarios' / 'paper'
CALIBRATION_SPEC = Path(settings.BASE_DIR) / 'specs' / 'mi300x-like.json'


def toy_spec(components=None, **overrides):
    """Small round-number GPU: 100 CUs, 1 Pflop/s, 1 TB/s everywhere."""
    if components is None:
        components = {
            ComponentKind.XCD: ComponentSpec(idle_power=10, dyn_power_max=90, freq_exponent=3),
            ComponentKind.IOD: ComponentSpec(idle_power=10, dyn_power_max=90),
            ComponentKind.HBM: ComponentSpec(idle_power=10, dyn_power_max=90),
        }
    values = dict(
        components=components, f_min=100.0, f_max=1000.0, f_ref=1000.0, tdp=300.0,
        cu_total=100, peak_flops=1e15, hbm_bw=1e12, iod_bw=1e12, link_bw=1e12,
        copy_rate_per_cu=1e11, copy_freq_exponent=1.0, name='toy',
    )
    values.update(overrides)
    return GpuSpec(**values)


def validated_toy_spec(**overrides):
    return validate_spec(toy_spec(**overrides))


def calibration_spec():
    return load_spec(CALIBRATION_SPEC)


def scenario(spec, *streams, policy=None, dt=1e-4, iterations=1, name='test'):
    return Scenario(spec=spec, streams=tuple(tuple(s) for s in streams),
                    policy=policy or PolicyConfig(), dt=dt, iterations=iterations, name=name)


def shipped(name):
    return parse_scenario(SCENARIO_DIR / name)


def expected(name):
    sidecar = SCENARIO_DIR / name.replace('.json', '.expected.json')
    with open(sidecar, encoding='utf-8') as handle:
        return json.load(handle)
