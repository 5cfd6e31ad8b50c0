from django import forms
from django.core.exceptions import ValidationError

from .gpu_model import ComponentKind
from .policy import PolicyVariant
from .workload import DEFAULT_WORLD_SIZE, Criticality, parse_size


def _choices(enum_cls):
    return [(member.value, member.value) for member in enum_cls]


def form_errors(form, prefix):
    """Flatten a bound form's errors into messages carrying dotted field paths."""
    messages = []
    for name, errors in form.errors.items():
        path = prefix if name == '__all__' else (f'{prefix}.{name}' if prefix else name)
        for error in errors:
            messages.append(f'{path}: {error}')
    return messages


def clean_or_raise(form, prefix):
    if not form.is_valid():
        raise ValidationError(form_errors(form, prefix))
    return form.cleaned_data


class ComponentForm(forms.Form):
    idle_power = forms.FloatField()
    dyn_power_max = forms.FloatField()
    freq_exponent = forms.FloatField(required=False)
    clock_power = forms.FloatField(required=False)


class GpuSpecForm(forms.Form):
    name = forms.CharField(required=False)
    f_min = forms.FloatField()
    f_max = forms.FloatField()
    f_ref = forms.FloatField(required=False, help_text="Defaults to f_max")
    tdp = forms.FloatField()
    cu_total = forms.IntegerField()
    peak_flops = forms.FloatField()
    hbm_bw = forms.FloatField()
    iod_bw = forms.FloatField()
    link_bw = forms.FloatField()
    copy_rate_per_cu = forms.FloatField()
    copy_freq_exponent = forms.FloatField(required=False)
    components = forms.JSONField()

    def clean_components(self):
        components = self.cleaned_data['components']
        if not isinstance(components, dict):
            raise ValidationError('must be an object keyed by xcd, iod and hbm')
        unknown = set(components) - {kind.value for kind in ComponentKind}
        if unknown:
            raise ValidationError('unknown component(s): %s' % ', '.join(sorted(unknown)))
        return components


class PhaseForm(forms.Form):
    fraction = forms.FloatField(min_value=0.0, max_value=1.0)
    u = forms.JSONField()

    def clean_u(self):
        u = self.cleaned_data['u']
        if (not isinstance(u, (list, tuple)) or len(u) != 3
                or not all(isinstance(x, (int, float)) and 0.0 <= x <= 1.0 for x in u)):
            raise ValidationError('must be three utilizations in [0, 1] (xcd, iod, hbm)')
        return tuple(float(x) for x in u)


class KernelForm(forms.Form):
    OP_CHOICES = [('gemm', 'gemm'), ('all_gather', 'all_gather')]

    id = forms.CharField(max_length=100)
    op = forms.ChoiceField(choices=OP_CHOICES)
    m = forms.IntegerField(required=False, min_value=1)
    n = forms.IntegerField(required=False, min_value=1)
    k = forms.IntegerField(required=False, min_value=1)
    dtype_bytes = forms.TypedChoiceField(
        required=False, coerce=int, empty_value=2,
        choices=[('1', '1'), ('2', '2'), ('4', '4'), ('8', '8')])
    traffic_multiplier = forms.FloatField(required=False, min_value=1.0)
    size = forms.CharField(required=False, help_text="e.g. 160MiB, 4GB (binary units)")
    total_bytes = forms.IntegerField(required=False, min_value=0)
    world_size = forms.IntegerField(required=False, min_value=1)
    criticality = forms.ChoiceField(required=False, choices=_choices(Criticality))
    affinity = forms.ChoiceField(required=False, choices=_choices(ComponentKind))
    cus = forms.IntegerField(required=False, min_value=1)
    phases = forms.JSONField(required=False)

    def clean(self):
        data = super().clean()
        op = data.get('op')
        if op == 'gemm':
            for name in ('m', 'n', 'k'):
                if data.get(name) is None and name not in self.errors:
                    self.add_error(name, 'This field is required for a GEMM.')
        elif op == 'all_gather':
            size = data.get('size')
            if size:
                try:
                    data['total_bytes'] = parse_size(size)
                except ValueError as exc:
                    self.add_error('size', str(exc))
                    return data
            if data.get('total_bytes') is None:
                if 'total_bytes' not in self.errors:
                    self.add_error('total_bytes', 'An all-gather needs total_bytes or size.')
                return data
            world = data.get('world_size') or DEFAULT_WORLD_SIZE
            data['world_size'] = world
            if data['total_bytes'] % world:
                self.add_error('total_bytes', f'{data["total_bytes"]} bytes do not split evenly over {world} GPUs')
        return data


class PolicyForm(forms.Form):
    variant = forms.ChoiceField(choices=_choices(PolicyVariant))
    power_cap_w = forms.FloatField(required=False)
    freq_cap_mhz = forms.FloatField(required=False)
    cap_w = forms.FloatField(required=False)
    cap_mhz = forms.FloatField(required=False)
    cap_ratio = forms.FloatField(required=False)
    ewma_lambda = forms.FloatField(required=False)
    warmup_iters = forms.IntegerField(required=False)
    reallocation_floor_cus = forms.IntegerField(required=False)

    def clean(self):
        data = super().clean()
        # cap_w / cap_mhz are shorthands for the single-cap variants
        if data.get('power_cap_w') is None:
            data['power_cap_w'] = data.get('cap_w')
        if data.get('freq_cap_mhz') is None:
            data['freq_cap_mhz'] = data.get('cap_mhz')
        variant = data.get('variant')
        if variant in ('power_cap', 'combined') and data['power_cap_w'] is None:
            self.add_error('power_cap_w', 'This field is required for the %s variant.' % variant)
        if variant in ('freq_cap', 'combined') and data['freq_cap_mhz'] is None:
            self.add_error('freq_cap_mhz', 'This field is required for the %s variant.' % variant)
        return data


class ScenarioForm(forms.Form):
    name = forms.CharField(required=False)
    description = forms.CharField(required=False)
    dt = forms.FloatField(required=False)
    iterations = forms.IntegerField(required=False, min_value=1)

    def clean_dt(self):
        dt = self.cleaned_data['dt']
        if dt is not None and dt <= 0:
            raise ValidationError('dt must be positive')
        return dt
