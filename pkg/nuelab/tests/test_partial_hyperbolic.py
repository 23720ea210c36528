import math
import unittest

import numpy as np

from nuelab.diagnostics import HyperbolicTimeParams
from nuelab.model import ConeViolation, SystemConfigError
from nuelab.observables import Observable
from nuelab.partial_hyperbolic import (
    ConeField,
    check_conditions_ABCD,
    f_jacobian_sum,
    fit_cone_contraction,
    ph_hyperbolic_times,
    ph_nue_statistic,
    ph_summarize_orbit,
    track_f_direction,
)
from nuelab.systems import build_system

LAMBDA_U = (3.0 + math.sqrt(5.0)) / 2.0


class TestConeField(unittest.TestCase):
    def setUp(self):
        self.cone = ConeField((0.0, 1.0), (1.0, 0.0), 0.15, 0.2)

    def test_aperture_and_membership(self):
        self.assertAlmostEqual(float(self.cone.aperture(np.array([1.0, 0.1]))), 0.1)
        self.assertTrue(self.cone.contains(np.array([1.0, 0.2])))
        self.assertFalse(self.cone.contains(np.array([1.0, 0.3])))

    def test_project_tilts_into_half_cone(self):
        v = self.cone.project([1.0, 1.0])
        self.assertAlmostEqual(float(self.cone.aperture(v)), 0.1)
        self.assertAlmostEqual(float(np.linalg.norm(v)), 1.0)
        with self.assertRaises(ConeViolation):
            self.cone.project([0.0, 1.0])

    def test_rays_span_the_cone(self):
        apertures = self.cone.aperture(self.cone.f_rays())
        self.assertAlmostEqual(float(np.max(apertures)), 0.2)
        self.assertAlmostEqual(float(np.min(apertures)), 0.0)

    def test_invalid_widths(self):
        with self.assertRaises(SystemConfigError):
            ConeField((0.0, 1.0), (1.0, 0.0), 1.5, 0.2)
        with self.assertRaises(SystemConfigError):
            ConeField((1.0, 0.0), (1.0, 0.0), 0.1, 0.2)

    def test_one_dimensional_systems_have_no_splitting(self):
        with self.assertRaises(SystemConfigError):
            ConeField.for_system(build_system("doubling"))


class TestTrackingAlongF(unittest.TestCase):
    def test_cat_map_converges_to_unstable_direction(self):
        system = build_system("cat_map")
        cone = ConeField.for_system(system)
        v = track_f_direction(system, (0.3, 0.4), 50, cone.project([1.0, 0.0]))
        np.testing.assert_allclose(v, system.metadata["unstable_direction"], atol=1e-10)

    def test_cat_map_f_jacobian(self):
        system = build_system("cat_map")
        self.assertAlmostEqual(f_jacobian_sum(system, (0.3, 0.4), 100), 100 * math.log(LAMBDA_U), places=9)
        self.assertAlmostEqual(ph_nue_statistic(system, (0.3, 0.4), 100), -math.log(LAMBDA_U), places=9)

    def test_cat_map_hyperbolic_times(self):
        system = build_system("cat_map")
        self.assertEqual(ph_hyperbolic_times(system, (0.3, 0.4), 20, 0.5), list(range(1, 21)))
        self.assertEqual(ph_hyperbolic_times(system, (0.3, 0.4), 20, 0.3), [])

    def test_cat_map_summary_along_f(self):
        summary = ph_summarize_orbit(build_system("cat_map"), (0.3, 0.4), 50, [Observable.coordinate()], HyperbolicTimeParams(sigma=0.5))
        self.assertAlmostEqual(summary.sum_psi, -50 * math.log(LAMBDA_U), places=9)
        self.assertEqual(summary.sum_jacobian, -summary.sum_psi)
        self.assertEqual(summary.hyperbolic_times, list(range(1, 51)))
        self.assertEqual(list(summary.birkhoff_sums), ["coordinate"])

    def test_shear_has_no_expansion_along_f(self):
        system = build_system("shear")
        self.assertAlmostEqual(ph_nue_statistic(system, (0.3, 0.4), 100), 0.0, places=12)
        self.assertEqual(ph_hyperbolic_times(system, (0.3, 0.4), 30, 0.9), [])

    def test_vector_outside_cone_is_rejected(self):
        system = build_system("cat_map")
        with self.assertRaises(ConeViolation):
            track_f_direction(system, (0.3, 0.4), 5, system.metadata["stable_direction"])

    def test_da_map_still_expands_on_average(self):
        system = build_system("da_map")
        self.assertLess(ph_nue_statistic(system, (0.3, 0.4), 5000), 0.0)

    def test_slowed_fixed_point_contracts_along_f(self):
        self.assertGreater(build_system("da_map").metadata["centre_stretch"], 1.0)
        system = build_system("da_map", {"amplitude": 0.7, "strict": False})
        stretch = system.metadata["centre_stretch"]
        self.assertAlmostEqual(stretch, 0.3 * LAMBDA_U, places=12)
        self.assertLess(stretch, 1.0)
        # close to the fixed point on the unstable line, the orbit is pulled into 0
        start = np.mod(0.003 * np.asarray(system.metadata["unstable_direction"]), 1.0)
        self.assertAlmostEqual(ph_nue_statistic(system, start, 200), -math.log(stretch), delta=1e-5)
        self.assertEqual(ph_hyperbolic_times(system, start, 100, 0.9), [])


class TestConditions(unittest.TestCase):
    def test_cat_map_passes_with_reference_margin(self):
        report = check_conditions_ABCD(build_system("cat_map"), samples=2000)
        self.assertTrue(report.passed, report.failures)
        self.assertAlmostEqual(report.delta0_margin, 1.1 - 1.0 / LAMBDA_U, places=10)
        self.assertLess(report.lam, 1.0)

    def test_zero_amplitude_matches_cat_map(self):
        cat = check_conditions_ABCD(build_system("cat_map"), samples=2000, seed=4)
        flat = check_conditions_ABCD(build_system("da_map", {"amplitude": 0.0}), samples=2000, seed=4)
        for key in "ABCD":
            self.assertAlmostEqual(flat.margins[key], cat.margins[key], places=12)
        self.assertAlmostEqual(flat.delta0_margin, cat.delta0_margin, places=12)

    def test_default_da_map_passes(self):
        report = check_conditions_ABCD(build_system("da_map"), samples=4000)
        self.assertTrue(report.passed, report.failures)
        self.assertGreater(report.sigma1, 1.0)
        self.assertLess(report.sigma2, 1.0)
        self.assertEqual(report.region["radius_u"], 0.02)

    def test_strong_slow_down_violates_d(self):
        report = check_conditions_ABCD(build_system("da_map", {"amplitude": 0.95, "strict": False}), samples=4000)
        self.assertFalse(report.passed)
        self.assertTrue(any(f.startswith("(D)") for f in report.failures))
        self.assertLess(report.margins["D"], 0.0)

    def test_conditions_need_a_torus_map(self):
        with self.assertRaises(SystemConfigError):
            check_conditions_ABCD(build_system("doubling"))

    def test_cone_contraction_fit(self):
        fit = fit_cone_contraction(build_system("cat_map"), samples=2000)
        self.assertLess(fit.lam, 1.0)
        self.assertLessEqual(fit.max_aperture, 0.2)


if __name__ == "__main__":
    unittest.main()
