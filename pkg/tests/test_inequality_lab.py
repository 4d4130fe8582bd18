import math
import unittest

import numpy as np

from inequality_lab import (
    FamilyKind,
    HardyCase,
    TestFunction,
    TestFunctionFamily,
    check_hardy,
    check_interpolation,
    concentration_ratios,
    constant_witness,
    hardy_constant,
    hardy_ratio,
    hardy_report,
    hardy_side_condition,
    interpolation_ratio,
    linear_witness,
    make_case,
    make_family,
)
from lab_errors import InequalityViolation


def power_of_one_minus_x(k):
    return TestFunction(
        f"(1-x)^{k}",
        lambda x: (1.0 - x) ** k,
        lambda x: -k * (1.0 - x) ** (k - 1),
        lambda x: k * (k - 1) * (1.0 - x) ** (k - 2),
    )


class TestHardyConstant(unittest.TestCase):

    def test_closed_form_values(self):
        expected = {
            (0.0, 0.0): 0.25,
            (0.0, 1.0): 2.0 / 27.0,
            (1.0, 0.0): 1.0 / math.e,
            (2.0, 0.0): 1.0,
            (2.5, 0.5): 1.0 / 2.25,
        }
        for (alpha, beta), K in expected.items():
            value = hardy_constant(HardyCase(alpha, beta))
            self.assertAlmostEqual(value / K, 1.0, delta=1e-8, msg=f"alpha={alpha}, beta={beta}")

    def test_divergent_pairs(self):
        self.assertEqual(hardy_constant(HardyCase(3.0, 0.0)), math.inf)
        self.assertEqual(hardy_constant(HardyCase(0.5, -1.0)), math.inf)
        self.assertIn("alpha - 2", hardy_side_condition(3.0, 0.0))
        self.assertIsNone(hardy_side_condition(0.5, -0.5))

    def test_scaling_in_length(self):
        # K scales like L**(beta + 2 - alpha)
        K1 = hardy_constant(HardyCase(0.0, 0.0, L=1.0))
        K2 = hardy_constant(HardyCase(0.0, 0.0, L=2.0))
        self.assertAlmostEqual(K2 / K1, 4.0, delta=1e-8)

    def test_make_case(self):
        case = make_case(1.0, 0.0)
        self.assertTrue(case.admissible)
        self.assertAlmostEqual(case.K, 1.0 / math.e, delta=1e-9)


class TestHardyRatio(unittest.TestCase):

    def test_linear_profile(self):
        num, den, ratio = hardy_ratio(power_of_one_minus_x(1), 0.0, 0.0)
        self.assertAlmostEqual(num, 1.0 / 3.0, places=12)
        self.assertAlmostEqual(den, 1.0, places=12)
        self.assertAlmostEqual(ratio, 1.0 / 3.0, places=12)
        self.assertLessEqual(ratio, 2 * hardy_constant(HardyCase(0.0, 0.0)))

    def test_zero_function_is_skipped(self):
        _, _, ratio = hardy_ratio(constant_witness(0.0), 0.0, 0.0)
        self.assertTrue(math.isnan(ratio))

        family = TestFunctionFamily(FamilyKind.POLYNOMIAL, 2, 0, [constant_witness(0.0), power_of_one_minus_x(1)])
        report = check_hardy(family, 0.0, 0.0)
        self.assertEqual(report["skipped"], 1)
        self.assertEqual(report["sample_count"], 1)

    def test_squared_quotient_can_exceed_two_k(self):
        # (1-x)^4 at alpha=2.5, beta=0.5 gives 3.5/3.75 while 2K = 8/9
        _, _, ratio = hardy_ratio(power_of_one_minus_x(4), 2.5, 0.5)
        self.assertAlmostEqual(ratio, 3.5 / 3.75, places=9)

        family = TestFunctionFamily(FamilyKind.POLYNOMIAL, 1, 0, [power_of_one_minus_x(4)])
        report = check_hardy(family, 2.5, 0.5)
        self.assertFalse(report["within_two_K"])
        self.assertLessEqual(report["max_ratio"], report["four_K"])

        with self.assertRaises(InequalityViolation):
            check_hardy(family, 2.5, 0.5, bracket=2.0)


class TestCheckHardy(unittest.TestCase):

    def test_splines_within_two_k(self):
        family = make_family("spline", 200, seed=7)
        report = check_hardy(family, 1.0, 0.0, jobs=2)
        self.assertTrue(report["within_two_K"], report)
        self.assertLessEqual(report["max_ratio"], report["two_K"] + 1e-9)
        self.assertEqual(report["sample_count"], 200)
        self.assertEqual(report["seed"], 7)

    def test_report_over_cases(self):
        reports = hardy_report([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.5, 0.5)], "polynomial", 30, seed=1)
        self.assertEqual(len(reports), 4)
        for report in reports:
            self.assertLessEqual(report["max_ratio"], report["bound"] + 1e-9)
            self.assertGreater(report["max_ratio"], 0.0)

    def test_inadmissible_pair(self):
        with self.assertRaises(ValueError):
            check_hardy(make_family("polynomial", 3, seed=0), 3.0, 0.0)

    def test_concentration_breaks_divergent_pair(self):
        results = concentration_ratios(3.0, 0.0)
        ratios = [ratio for _, ratio in results]
        self.assertGreater(max(ratios), 1e3)
        self.assertTrue(all(b > a for a, b in zip(ratios[:-1], ratios[1:])), ratios)


class TestFamilies(unittest.TestCase):

    def test_boundary_condition(self):
        for kind in FamilyKind:
            family = make_family(kind.value, 10, seed=4)
            self.assertEqual(len(family), 10)
            for fn in family.members:
                self.assertEqual(float(fn.value(np.array([1.0]))[0]), 0.0, fn.name)

    def test_seeded(self):
        x = np.linspace(0.0, 1.0, 7)
        a = make_family("random_fourier", 3, seed=9)
        b = make_family("random_fourier", 3, seed=9)
        for fa, fb in zip(a.members, b.members):
            np.testing.assert_array_equal(fa.value(x), fb.value(x))

    def test_bad_arguments(self):
        with self.assertRaises(ValueError):
            make_family("wavelet", 3, seed=0)
        with self.assertRaises(ValueError):
            make_family("spline", 0, seed=0)


class TestInterpolation(unittest.TestCase):

    def test_linear_witness(self):
        self.assertAlmostEqual(interpolation_ratio(linear_witness(), 0.0, 1.0), 3.0, places=12)
        self.assertAlmostEqual(interpolation_ratio(linear_witness(), 0.0, 10.0), 3.0, places=12)

    def test_constant(self):
        self.assertEqual(interpolation_ratio(constant_witness(2.0)), 0.0)

    def test_homogeneous(self):
        fn = make_family("random_fourier", 1, seed=2).members[0]
        base = interpolation_ratio(fn)
        self.assertAlmostEqual(interpolation_ratio(fn.scaled(7.5)) / base, 1.0, delta=1e-12)

    def test_degenerate_interval(self):
        with self.assertRaises(ValueError):
            interpolation_ratio(linear_witness(), 1.0, 1.0)

    def test_dilation_invariance(self):
        family = make_family("random_fourier", 100, seed=12)
        unit = check_interpolation(family, 0.0, 1.0)
        dilated = check_interpolation(family, 0.0, 10.0, extra=[linear_witness()])

        np.testing.assert_allclose(dilated["ratios"][:-1], unit["ratios"], rtol=0.0, atol=1e-9)
        self.assertLessEqual(dilated["dilation_max_deviation"], 1e-9)
        self.assertGreaterEqual(dilated["empirical_K"], 3.0 - 1e-12)
        self.assertTrue(np.all(np.isfinite(unit["ratios"])))


if __name__ == "__main__":
    unittest.main()
