from django.db import models

from .policy import PolicyVariant


class SimulationRun(models.Model):
    VARIANT_CHOICES = [(v.value, v.value.replace('_', ' ').title()) for v in PolicyVariant]

    name = models.CharField(max_length=200)
    scenario_path = models.CharField(max_length=500, blank=True, default="")
    policy_variant = models.CharField(max_length=20, choices=VARIANT_CHOICES, db_index=True)
    spec_name = models.CharField(max_length=100, blank=True, default="")
    output_dir = models.CharField(max_length=500, help_text="Directory holding trace.csv and metrics.json")
    makespan_s = models.FloatField()
    energy_xcd_j = models.FloatField()
    energy_iod_j = models.FloatField()
    energy_hbm_j = models.FloatField()
    energy_total_j = models.FloatField()
    created_at = models.DateTimeField(auto_now_add=True, db_index=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = "Simulation run"
        verbose_name_plural = "Simulation runs"

    def __str__(self):
        return f"{self.name} ({self.policy_variant}) - {self.created_at:%Y-%m-%d %H:%M}"

    @property
    def avg_power_w(self):
        return self.energy_total_j / self.makespan_s if self.makespan_s > 0 else 0.0

    @classmethod
    def record(cls, result, output_dir):
        scenario = result.scenario
        energy = result.metrics.energy_j
        return cls.objects.create(
            name=scenario.name,
            scenario_path=scenario.source or "",
            policy_variant=scenario.policy.variant.value,
            spec_name=scenario.spec.name,
            output_dir=str(output_dir),
            makespan_s=result.metrics.makespan_s,
            energy_xcd_j=energy['xcd'],
            energy_iod_j=energy['iod'],
            energy_hbm_j=energy['hbm'],
            energy_total_j=energy['total'],
        )
