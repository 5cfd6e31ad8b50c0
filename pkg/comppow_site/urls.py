from django.urls import path

from powersim import views
from powersim.admin import registry_admin_site

urlpatterns = [
    path('admin/', registry_admin_site.urls),
    path('runs/export/', views.export_runs, name='export_runs'),
    path('runs/<int:run_id>/metrics/', views.run_metrics, name='run_metrics'),
]
