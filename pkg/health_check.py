#!/usr/bin/env python
"""
CompPow Health Check
Run this to verify the simulator, its calibration and the run registry
"""

import os
import sys
import django
from pathlib import Path

project_dir = Path(__file__).parent
sys.path.insert(0, str(project_dir))

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'comppow_site.settings')
django.setup()

from django.conf import settings
from django.core.exceptions import ValidationError
from django.db import connection
from powersim.models import SimulationRun


def check_dependencies():
    print("🔍 Checking dependencies...")
    required_packages = {
        'django': 'Django',
        'whitenoise': 'Static file serving',
        'numpy': 'Numerics',
    }

    all_ok = True
    for package, description in required_packages.items():
        try:
            __import__(package)
            print(f"✅ {description}: OK")
        except ImportError:
            print(f"❌ {description}: Missing ({package})")
            all_ok = False

    return all_ok


def check_database():
    print("\n🔍 Checking run registry...")
    try:
        with connection.cursor() as cursor:
            cursor.execute("SELECT 1")
            print("✅ Database connection: OK")
        count = SimulationRun.objects.count()
        print(f"✅ Run registry table: OK ({count} recorded run(s))")
        return True
    except Exception as e:
        print(f"❌ Database error: {e}")
        print("💡 Tip: python manage.py migrate")
        return False


def check_specs():
    """Every GPU spec on the search path must validate"""
    print("\n🔍 Checking GPU specs...")
    from powersim.gpu_model import governor_tolerance
    from powersim.scenario import load_spec

    all_ok = True
    found = False
    for directory in settings.COMPPOW_SPEC_DIRS:
        for path in sorted(Path(directory).glob('*.json')):
            found = True
            try:
                spec = load_spec(path)
                print(f"✅ {spec.name}: OK (TDP {spec.tdp:g} W, governor tolerance {governor_tolerance(spec):.2f} W)")
            except ValidationError as e:
                print(f"❌ {path.name}: {'; '.join(e.messages)}")
                all_ok = False
    if not found:
        print("❌ No spec files found in COMPPOW_SPEC_DIRS")
    return all_ok and found


def check_scenarios():
    """Shipped scenarios must parse"""
    print("\n🔍 Checking scenarios...")
    from powersim.scenario import parse_scenario

    all_ok = True
    for path in sorted((project_dir / 'scenarios').rglob('*.json')):
        if path.name.endswith('.expected.json'):
            continue
        try:
            scenario = parse_scenario(path)
            print(f"✅ {path.relative_to(project_dir)}: OK ({len(scenario.kernels)} kernel(s))")
        except ValidationError as e:
            print(f"❌ {path.relative_to(project_dir)}: {'; '.join(e.messages)}")
            all_ok = False

    return all_ok


def simulate_test():
    """Run one tiny scenario end to end"""
    print("\n🔍 Testing a simulation...")
    try:
        from powersim.experiments import simulate
        from powersim.scenario import scenario_from_dict

        scenario = scenario_from_dict({
            'name': 'health-check',
            'spec': 'mi300x-like',
            'streams': [[{'id': 'gemm', 'op': 'gemm', 'm': 1024, 'n': 1024, 'k': 1024}]],
        })
        result = simulate(scenario)
        print(f"✅ Simulation: OK ({result.metrics.energy_j['total']:.4g} J)")
        return True

    except Exception as e:
        print(f"❌ Simulation error: {e}")
        return False


def main():
    """Run all health checks"""
    print("🏥 CompPow Health Check")
    print("=" * 50)

    checks = [
        check_dependencies,
        check_database,
        check_specs,
        check_scenarios,
        simulate_test,
    ]

    results = []
    for check in checks:
        results.append(check())

    print("\n" + "=" * 50)
    passed = sum(results)
    total = len(results)

    if passed == total:
        print(f"🎉 All checks passed! ({passed}/{total})")
        print("\n💡 Quick start:")
        print("   ./comppow run scenarios/paper/allgather_baseline.json -o out/baseline")
        print("   ./comppow compare scenarios/paper/allgather_baseline.json "
              "scenarios/paper/allgather_comppow.json -o out/cmp")
    else:
        print(f"⚠️  Some checks failed ({passed}/{total})")
        print("Please fix the issues above before running experiments.")

    return passed == total


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
