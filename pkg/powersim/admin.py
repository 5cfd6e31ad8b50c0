from django.contrib import admin
from django.contrib.admin import AdminSite

from .models import SimulationRun


class RegistryAdminSite(AdminSite):
    site_header = "CompPow Run Registry"
    site_title = "CompPow Admin"
    index_title = "Recorded runs"


registry_admin_site = RegistryAdminSite()


@admin.register(SimulationRun, site=registry_admin_site)
class SimulationRunAdmin(admin.ModelAdmin):
    list_display = ('name', 'policy_variant', 'spec_name', 'makespan_s', 'energy_total_j', 'created_at')
    list_filter = ('policy_variant', 'spec_name', 'created_at')
    search_fields = ('name', 'scenario_path')
    readonly_fields = ('created_at',)
    ordering = ('-created_at',)
