from django.test import SimpleTestCase

from powersim.exceptions import FlopOverflow, UndefinedIntensity
from powersim.gpu_model import ComponentKind
from powersim.workload import (DEFAULT_COLLECTIVE_CUS, AllGather, DemandVector, Gemm, KernelDesc,
                               allgather_demand, arithmetic_intensity, gemm_demand, infer_affinity,
                               parse_size)

from .helpers import calibration_spec

TABLE_GEMMS = [(18432, 16384, 16384), (16384, 106496, 8192), (8192, 57344, 8192), (8192, 8192, 10240)]


class GemmDemandTests(SimpleTestCase):
    def test_synthetic_gemm(self):
        d = gemm_demand(Gemm(8192, 8192, 10240))
        self.assertEqual(d.flops, 1_374_389_534_720)
        self.assertEqual(d.hbm_bytes, 469_762_048)
        self.assertEqual(d.iod_bytes, 469_762_048)

    def test_unit_case(self):
        d = gemm_demand(Gemm(1, 1, 1))
        self.assertEqual((d.flops, d.hbm_bytes), (2, 6))

    def test_405b_gemm(self):
        self.assertEqual(gemm_demand(Gemm(16384, 106496, 8192)).flops, 2 * 16384 * 106496 * 8192)

    def test_traffic_multiplier(self):
        d = gemm_demand(Gemm(1, 1, 1, traffic_multiplier=2.5))
        self.assertEqual(d.hbm_bytes, 15)

    def test_flop_counter_overflow(self):
        with self.assertRaises(FlopOverflow):
            gemm_demand(Gemm(2 ** 21, 2 ** 21, 2 ** 21))

    def test_transpose_equivalence(self):
        a = gemm_demand(Gemm(128, 256, 512))
        b = gemm_demand(Gemm(256, 128, 512))
        self.assertEqual((a.flops, a.hbm_bytes), (b.flops, b.hbm_bytes))


class AllGatherDemandTests(SimpleTestCase):
    def test_single_gpu_moves_nothing(self):
        d = allgather_demand(AllGather(4096, world_size=1))
        self.assertEqual(d, DemandVector(0, 0, 0))
        self.assertFalse(d.runnable)

    def test_160mib(self):
        d = allgather_demand(AllGather(167_772_160))
        self.assertEqual(d.hbm_bytes, 293_601_280)
        self.assertEqual(d.iod_bytes, 293_601_280)
        self.assertEqual(d.flops, 0)

    def test_4gib(self):
        self.assertEqual(allgather_demand(AllGather(4 * 2 ** 30)).hbm_bytes, 7_516_192_768)

    def test_linear_in_size(self):
        small = allgather_demand(AllGather(8 * 2 ** 20))
        large = allgather_demand(AllGather(16 * 2 ** 20))
        self.assertEqual(large.hbm_bytes, 2 * small.hbm_bytes)
        self.assertEqual(large.iod_bytes, 2 * small.iod_bytes)


class IntensityTests(SimpleTestCase):
    def test_synthetic_gemm_intensity(self):
        self.assertAlmostEqual(arithmetic_intensity(gemm_demand(Gemm(8192, 8192, 10240))), 2925.714, places=2)

    def test_allgather_is_zero(self):
        self.assertEqual(arithmetic_intensity(allgather_demand(AllGather(2 ** 20))), 0)

    def test_ratio(self):
        self.assertEqual(arithmetic_intensity(DemandVector(100, 100, 100)), 1.0)

    def test_undefined_without_traffic(self):
        with self.assertRaises(UndefinedIntensity):
            arithmetic_intensity(DemandVector(100, 0, 0))

    def test_table_gemms_strictly_ordered(self):
        intensities = [arithmetic_intensity(gemm_demand(Gemm(*mnk))) for mnk in TABLE_GEMMS]
        self.assertEqual(intensities, sorted(intensities, reverse=True))
        self.assertEqual(len(set(intensities)), 4)


class AffinityTests(SimpleTestCase):
    def setUp(self):
        self.spec = calibration_spec()

    def test_allgather_is_iod(self):
        self.assertIs(infer_affinity(allgather_demand(AllGather(2 ** 30)), self.spec), ComponentKind.IOD)

    def test_table_gemm_is_xcd(self):
        self.assertAlmostEqual(self.spec.machine_balance, 188.68, places=1)
        self.assertIs(infer_affinity(gemm_demand(Gemm(8192, 8192, 10240)), self.spec), ComponentKind.XCD)

    def test_balance_tie_goes_to_compute(self):
        at_balance = DemandVector(self.spec.peak_flops, self.spec.hbm_bw, self.spec.hbm_bw)
        self.assertIs(infer_affinity(at_balance, self.spec), ComponentKind.XCD)

    def test_low_intensity_is_iod(self):
        self.assertIs(infer_affinity(DemandVector(1000, 1000, 1000), self.spec), ComponentKind.IOD)

    def test_scale_invariant(self):
        d = gemm_demand(Gemm(512, 512, 64))
        for factor in (0.5, 3, 1000):
            scaled = DemandVector(d.flops * factor, d.hbm_bytes * factor, d.iod_bytes * factor)
            self.assertIs(infer_affinity(scaled, self.spec), infer_affinity(d, self.spec))


class KernelDescTests(SimpleTestCase):
    def test_collective_defaults(self):
        ag = KernelDesc('ag', AllGather(2 ** 20))
        self.assertEqual(ag.kind, 'comm')
        self.assertEqual(ag.requested_cus(), DEFAULT_COLLECTIVE_CUS)
        gemm = KernelDesc('g', Gemm(8, 8, 8))
        self.assertEqual(gemm.kind, 'gemm')
        self.assertIsNone(gemm.requested_cus())


class ParseSizeTests(SimpleTestCase):
    def test_units(self):
        self.assertEqual(parse_size('160MiB'), 160 * 2 ** 20)
        self.assertEqual(parse_size('26.5GiB'), 28_454_158_336)
        self.assertEqual(parse_size('4GB'), 4 * 2 ** 30)
        self.assertEqual(parse_size('512'), 512)
        self.assertEqual(parse_size(1024), 1024)

    def test_garbage(self):
        with self.assertRaises(ValueError):
            parse_size('four gigs')
