import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from powersim.actuators import settings_problems
from powersim.exceptions import ContractViolation
from powersim.gpu_model import ComponentKind
from powersim.policy import (AffinityHistory, KernelView, PolicyConfig, PolicySnapshot, PolicyVariant,
                             apply_policy, argmax_component, learn_affinity_online, phase_budgets)
from powersim.workload import AllGather, Criticality, Gemm, KernelDesc, PhaseHint, kernel_demand

from .helpers import calibration_spec

GEMM = KernelDesc('gemm', Gemm(16384, 106496, 8192), criticality=Criticality.CRITICAL)
AG = KernelDesc('ag', AllGather(4 * 2 ** 30))


def snapshot(*descs, t=0.0):
    return PolicySnapshot(t, tuple(KernelView(d, kernel_demand(d), 0.0) for d in descs))


class PolicyConfigTests(SimpleTestCase):
    def test_caps_required_by_variant(self):
        with self.assertRaises(ValidationError):
            PolicyConfig(PolicyVariant.POWER_CAP)
        with self.assertRaises(ValidationError):
            PolicyConfig(PolicyVariant.COMBINED, power_cap=300)

    def test_parameter_ranges(self):
        for bad in ({'cap_ratio': 0}, {'cap_ratio': 1.2}, {'ewma_lambda': 0},
                    {'warmup_iters': 0}, {'reallocation_floor_cus': 0}):
            with self.subTest(**bad), self.assertRaises(ValidationError):
                PolicyConfig(PolicyVariant.COMPPOW_AUTO, **bad)


class ApplyPolicyTests(SimpleTestCase):
    def setUp(self):
        self.spec = calibration_spec()
        self.history = AffinityHistory()

    def settings(self, cfg, *descs, warnings=None):
        return apply_policy(cfg, snapshot(*descs), self.history, self.spec, warnings)

    def test_baseline(self):
        s = self.settings(PolicyConfig(), AG)
        self.assertEqual((s.freq_cap, s.power_cap), (self.spec.f_max, self.spec.tdp))
        self.assertEqual(s.cu_alloc, {'ag': 64})

    def test_freq_cap_passthrough(self):
        s = self.settings(PolicyConfig(PolicyVariant.FREQ_CAP, freq_cap=0.78 * 2100), AG)
        self.assertAlmostEqual(s.freq_cap, 1638)
        self.assertEqual(s.power_cap, self.spec.tdp)

    def test_power_cap_and_combined(self):
        s = self.settings(PolicyConfig(PolicyVariant.POWER_CAP, power_cap=366.5), AG)
        self.assertEqual((s.freq_cap, s.power_cap), (2100, 366.5))
        s = self.settings(PolicyConfig(PolicyVariant.COMBINED, power_cap=302.5, freq_cap=1638), AG)
        self.assertEqual((s.freq_cap, s.power_cap), (1638, 302.5))

    def test_comppow_caps_standalone_allgather(self):
        s = self.settings(PolicyConfig(PolicyVariant.COMPPOW_AUTO), AG)
        self.assertAlmostEqual(s.freq_cap, 0.78 * self.spec.f_max)

    def test_comppow_leaves_compute_kernels_alone(self):
        s = self.settings(PolicyConfig(PolicyVariant.COMPPOW_AUTO), GEMM)
        baseline = self.settings(PolicyConfig(), GEMM)
        self.assertEqual(s, baseline)

    def test_comppow_reallocates_cus_to_the_critical_kernel(self):
        s = self.settings(PolicyConfig(PolicyVariant.COMPPOW_AUTO, reallocation_floor_cus=16), GEMM, AG)
        self.assertEqual(s.cu_alloc, {'gemm': 288, 'ag': 16})
        self.assertEqual(s.freq_cap, self.spec.f_max)
        self.assertEqual(settings_problems(self.spec, s, ['gemm', 'ag']), [])

    def test_affinity_hint_wins_over_inference(self):
        hinted = KernelDesc('ag', AllGather(4 * 2 ** 30), affinity_hint=ComponentKind.XCD)
        s = self.settings(PolicyConfig(PolicyVariant.COMPPOW_AUTO), hinted)
        self.assertEqual(s.freq_cap, self.spec.f_max)

    def test_conflicting_criticality_falls_back_to_baseline(self):
        other = KernelDesc('ag', AllGather(4 * 2 ** 30), criticality=Criticality.CRITICAL)
        warnings = []
        with self.assertLogs('powersim.policy', 'WARNING'):
            s = self.settings(PolicyConfig(PolicyVariant.COMPPOW_AUTO), GEMM, other, warnings=warnings)
        self.assertEqual(s, self.settings(PolicyConfig(), GEMM, other))
        self.assertEqual(len(warnings), 1)
        self.assertIn('conflicting criticality', warnings[0])
        # the same conflict is reported once
        self.settings(PolicyConfig(PolicyVariant.COMPPOW_AUTO), GEMM, other, warnings=warnings)
        self.assertEqual(len(warnings), 1)

    def test_hinted_vectors_are_added_before_deciding(self):
        # one vote each would tie Xcd against Iod; the summed vector (0.4, 1.2, 1.1) leans to the IOD
        gemm = KernelDesc('gemm', Gemm(8192, 8192, 10240), phases=(PhaseHint(1.0, (0.4, 0.3, 0.3)),))
        ag = KernelDesc('ag', AllGather(4 * 2 ** 30), phases=(PhaseHint(1.0, (0.0, 0.9, 0.8)),))
        s = self.settings(PolicyConfig(PolicyVariant.COMPPOW_AUTO), gemm, ag)
        self.assertAlmostEqual(s.freq_cap, 0.78 * self.spec.f_max)

    def test_summed_vector_can_keep_the_clock(self):
        gemm = KernelDesc('gemm', Gemm(8192, 8192, 10240), phases=(PhaseHint(1.0, (1.0, 0.2, 0.2)),))
        ag = KernelDesc('ag', AllGather(4 * 2 ** 30), phases=(PhaseHint(1.0, (0.1, 0.6, 0.5)),))
        s = self.settings(PolicyConfig(PolicyVariant.COMPPOW_AUTO), gemm, ag)
        self.assertEqual(s.freq_cap, self.spec.f_max)

    def test_phase_hint_overrides_affinity_hint(self):
        desc = KernelDesc('ag', AllGather(4 * 2 ** 30), affinity_hint=ComponentKind.IOD,
                          phases=(PhaseHint(1.0, (0.9, 0.2, 0.1)),))
        s = self.settings(PolicyConfig(PolicyVariant.COMPPOW_AUTO), desc)
        self.assertEqual(s.freq_cap, self.spec.f_max)

    def test_phased_kernel_follows_its_phase_budgets(self):
        cfg = PolicyConfig(PolicyVariant.COMPPOW_AUTO, cap_ratio=0.6)
        phases = (PhaseHint(0.5, (1.0, 0.2, 0.2)), PhaseHint(0.5, (0.1, 0.9, 0.8)))
        desc = KernelDesc('gemm', Gemm(8192, 8192, 10240), phases=phases)
        budgets = phase_budgets(phases, self.spec, cfg.cap_ratio)
        for progress, index in ((0.0, 0), (0.49, 0), (0.5, 1), (0.9, 1)):
            view = KernelView(desc, kernel_demand(desc), progress)
            s = apply_policy(cfg, PolicySnapshot(0.0, (view,)), self.history, self.spec)
            with self.subTest(progress=progress):
                self.assertEqual(s.freq_cap, budgets[index].freq_cap)

    def test_learned_affinity_after_warmup(self):
        cfg = PolicyConfig(PolicyVariant.COMPPOW_AUTO, warmup_iters=2)
        for _ in range(2):
            self.history = learn_affinity_online(self.history, 'gemm', (0.1, 0.9, 0.5))
        s = self.settings(cfg, KernelDesc('gemm', Gemm(8192, 8192, 10240)))
        self.assertAlmostEqual(s.freq_cap, 0.78 * self.spec.f_max)

    def test_never_violates_actuator_invariants(self):
        rng = np.random.default_rng(11)
        variants = [PolicyConfig(), PolicyConfig(PolicyVariant.POWER_CAP, power_cap=400),
                    PolicyConfig(PolicyVariant.FREQ_CAP, freq_cap=1200),
                    PolicyConfig(PolicyVariant.COMBINED, power_cap=500, freq_cap=1500),
                    PolicyConfig(PolicyVariant.COMPPOW_AUTO, reallocation_floor_cus=8)]
        for _ in range(40):
            gemm = KernelDesc('g', Gemm(*(int(x) for x in rng.integers(64, 8192, size=3))),
                              criticality=Criticality.CRITICAL)
            ag = KernelDesc('a', AllGather(8 * int(rng.integers(1, 2 ** 27))), cus=int(rng.integers(1, 400)))
            for cfg in variants:
                s = self.settings(cfg, gemm, ag)
                self.assertEqual(settings_problems(self.spec, s, ['g', 'a']), [])


class AffinityLearningTests(SimpleTestCase):
    def test_first_observation_initializes(self):
        h = learn_affinity_online(AffinityHistory(), 'k', (0.2, 0.9, 0.8))
        self.assertEqual(h.get('k').ewma, (0.2, 0.9, 0.8))
        self.assertIs(argmax_component(h.get('k').ewma), ComponentKind.IOD)

    def test_ewma_update_and_tie_rule(self):
        h = learn_affinity_online(AffinityHistory(), 'k', (0.2, 0.9, 0.8))
        h = learn_affinity_online(h, 'k', (0.4, 0.7, 0.8), ewma_lambda=0.5)
        for got, want in zip(h.get('k').ewma, (0.3, 0.8, 0.8)):
            self.assertAlmostEqual(got, want)
        self.assertEqual(h.get('k').count, 2)
        self.assertIs(argmax_component((0.3, 0.8, 0.8)), ComponentKind.IOD)
        self.assertIs(argmax_component((0.5, 0.5, 0.5)), ComponentKind.XCD)

    def test_constant_stream_is_a_fixed_point(self):
        h = AffinityHistory()
        for _ in range(25):
            h = learn_affinity_online(h, 'k', (0.25, 0.5, 0.75), ewma_lambda=0.3)
        for got, want in zip(h.get('k').ewma, (0.25, 0.5, 0.75)):
            self.assertAlmostEqual(got, want)
        self.assertIs(h.learned('k', warmup_iters=3), ComponentKind.HBM)

    def test_not_learned_before_warmup(self):
        h = learn_affinity_online(AffinityHistory(), 'k', (0.1, 0.2, 0.3))
        self.assertIsNone(h.learned('k', warmup_iters=2))

    def test_history_is_not_mutated(self):
        empty = AffinityHistory()
        learn_affinity_online(empty, 'k', (0.1, 0.2, 0.3))
        self.assertIsNone(empty.get('k'))

    def test_rejects_out_of_range_observation(self):
        with self.assertRaises(ContractViolation):
            learn_affinity_online(AffinityHistory(), 'k', (0.1, 1.2, 0.3))

    def test_argmax_scale_invariant(self):
        rng = np.random.default_rng(5)
        for vector in rng.uniform(0, 1, size=(50, 3)):
            self.assertIs(argmax_component(tuple(vector * 0.37)), argmax_component(tuple(vector)))


class PhaseBudgetTests(SimpleTestCase):
    def setUp(self):
        self.spec = calibration_spec()

    def test_compute_phase(self):
        (s,) = phase_budgets([PhaseHint(1.0, (1.0, 0.3, 0.3))], self.spec)
        self.assertEqual(s.freq_cap, self.spec.f_max)

    def test_movement_phase(self):
        (s,) = phase_budgets([PhaseHint(1.0, (0.1, 0.9, 0.8))], self.spec, cap_ratio=0.78)
        self.assertAlmostEqual(s.freq_cap, 0.78 * self.spec.f_max)

    def test_fractions_must_sum_to_one(self):
        with self.assertRaises(ContractViolation):
            phase_budgets([PhaseHint(0.5, (1, 0, 0)), PhaseHint(0.4, (0, 1, 0))], self.spec)

    def test_hbm_led_phase_is_capped(self):
        (s,) = phase_budgets([PhaseHint(1.0, (0.3, 0.2, 0.9))], self.spec, cap_ratio=0.78)
        self.assertAlmostEqual(s.freq_cap, 0.78 * self.spec.f_max)

    def test_switches_exactly_at_the_boundary(self):
        budgets = phase_budgets([PhaseHint(0.5, (1.0, 0.2, 0.2)), PhaseHint(0.5, (0.1, 0.9, 0.8))], self.spec)
        self.assertEqual([b.freq_cap for b in budgets], [self.spec.f_max, 0.78 * self.spec.f_max])

    def test_history_as_dict(self):
        h = learn_affinity_online(AffinityHistory(), 'b', (0.1, 0.2, 0.9))
        h = learn_affinity_online(h, 'a', (0.6, 0.2, 0.1))
        h = learn_affinity_online(h, 'b', (0.1, 0.8, 0.5))
        data = h.as_dict(warmup_iters=2)
        self.assertEqual(list(data), ['a', 'b'])
        self.assertEqual(data['a'], {'ewma': [0.6, 0.2, 0.1], 'observations': 1, 'learned': None})
        self.assertEqual(data['b']['observations'], 2)
        self.assertEqual(data['b']['learned'], 'hbm')
