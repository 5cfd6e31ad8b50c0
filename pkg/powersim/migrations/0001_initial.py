# Generated by Django 4.2 on 2026-10-18 10:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=200)),
                ('scenario_path', models.CharField(blank=True, default='', max_length=500)),
                ('policy_variant', models.CharField(choices=[('baseline', 'Baseline'), ('power_cap', 'Power Cap'), ('freq_cap', 'Freq Cap'), ('combined', 'Combined'), ('comppow_auto', 'Comppow Auto')], db_index=True, max_length=20)),
                ('spec_name', models.CharField(blank=True, default='', max_length=100)),
                ('output_dir', models.CharField(help_text='Directory holding trace.csv and metrics.json', max_length=500)),
                ('makespan_s', models.FloatField()),
                ('energy_xcd_j', models.FloatField()),
                ('energy_iod_j', models.FloatField()),
                ('energy_hbm_j', models.FloatField()),
                ('energy_total_j', models.FloatField()),
                ('created_at', models.DateTimeField(auto_now_add=True, db_index=True)),
            ],
            options={
                'verbose_name': 'Simulation run',
                'verbose_name_plural': 'Simulation runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
