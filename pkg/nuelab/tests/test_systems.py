import math
import pickle
import unittest

import numpy as np

from nuelab.model import DomainSpec, HitSingularSet, LeftDomain, Region, SystemConfigError
from nuelab.systems import available_families, build_system, check_nonflat, get_family


class TestFamilyLibrary(unittest.TestCase):
    def test_every_family_builds_with_defaults(self):
        for family in available_families():
            system = build_system(family.key)
            self.assertEqual(system.name, family.key)
            self.assertIn(system.dimension, (1, 2))

    def test_unknown_family(self):
        self.assertIsNone(get_family("tent"))
        with self.assertRaises(SystemConfigError):
            build_system("tent")

    def test_unknown_parameter_is_rejected(self):
        with self.assertRaises(SystemConfigError):
            build_system("quadratic", {"b": 1.0})

    def test_params_hold_merged_defaults(self):
        system = build_system("quadratic", {"a": 1.9})
        self.assertEqual(system.params["a"], 1.9)
        self.assertTrue(system.params["strict"])

    def test_quadratic_parameter_range(self):
        with self.assertRaises(SystemConfigError):
            build_system("quadratic", {"a": 2.5})
        system = build_system("quadratic", {"a": 2.5, "strict": False})
        self.assertEqual(system.domain.lower, (-2.0,))

    def test_systems_pickle_by_family_and_params(self):
        system = build_system("expanding_circle_k", {"k": 5})
        clone = pickle.loads(pickle.dumps(system))
        self.assertEqual(clone.name, "expanding_circle_k")
        self.assertEqual(clone.params["k"], 5)
        x = np.array([0.1, 0.3])
        np.testing.assert_array_equal(clone.apply(x), system.apply(x))

    def test_doubling_pickles_without_extra_params(self):
        clone = pickle.loads(pickle.dumps(build_system("doubling")))
        self.assertEqual(dict(clone.params), {})
        self.assertEqual(clone.metadata["markov_branches"], 2)


class TestMaps(unittest.TestCase):
    def test_doubling_step_and_derivative(self):
        system = build_system("doubling")
        np.testing.assert_allclose(system.apply(np.array([0.2, 0.7])), [0.4, 0.4])
        np.testing.assert_array_equal(system.derivative(np.array([0.2, 0.7])), [2.0, 2.0])
        self.assertFalse(system.has_singular_set)

    def test_quadratic_orbit_of_fixed_point(self):
        system = build_system("quadratic")
        orbit = system.orbit(-1.0, 5)
        np.testing.assert_array_equal(orbit, [-1.0, 1.0, 1.0, 1.0, 1.0])

    def test_quadratic_orbit_hits_critical_point(self):
        system = build_system("quadratic")
        with self.assertRaises(HitSingularSet) as ctx:
            system.orbit(0.0, 3)
        self.assertEqual(ctx.exception.index, 0)

    def test_gauss_rational_start_hits_singular_set(self):
        system = build_system("gauss")
        with self.assertRaises(HitSingularSet):
            system.orbit(0.5, 4)

    def test_start_outside_domain(self):
        system = build_system("quadratic")
        with self.assertRaises(LeftDomain):
            system.orbit(3.0, 2)

    def test_cat_map_eigenframe(self):
        system = build_system("cat_map")
        lam_u, lam_s = system.metadata["eigenvalues"]
        self.assertAlmostEqual(lam_u, (3.0 + math.sqrt(5.0)) / 2.0, places=12)
        self.assertAlmostEqual(lam_u * lam_s, 1.0, places=12)
        e_u = np.array(system.metadata["unstable_direction"])
        np.testing.assert_allclose(np.array([[2.0, 1.0], [1.0, 1.0]]) @ e_u, lam_u * e_u, atol=1e-12)
        self.assertGreater(e_u[0], 0.0)

    def test_cat_map_log_jacobian_is_zero(self):
        system = build_system("cat_map")
        points = np.array([[0.1, 0.2], [0.7, 0.4]])
        np.testing.assert_allclose(system.log_jacobian(points), 0.0, atol=1e-12)

    def test_da_map_slows_down_at_fixed_point(self):
        system = build_system("da_map")
        lam_u = system.metadata["eigenvalues"][0]
        jac = system.derivative(np.array([[0.0, 0.0]]))[0]
        e_u = np.array(system.metadata["unstable_direction"])
        self.assertAlmostEqual(float(np.linalg.norm(jac @ e_u)), lam_u * 0.45, places=10)
        self.assertAlmostEqual(system.metadata["centre_stretch"], lam_u * 0.45, places=12)

    def test_da_map_equals_cat_map_outside_region(self):
        da = build_system("da_map")
        cat = build_system("cat_map")
        p = np.array([[0.5, 0.5], [0.3, 0.8]])
        np.testing.assert_allclose(da.apply(p), cat.apply(p), atol=1e-15)
        np.testing.assert_allclose(da.derivative(p), cat.derivative(p), atol=1e-15)

    def test_strict_da_map_rejects_strong_slow_down(self):
        with self.assertRaises(SystemConfigError):
            build_system("da_map", {"amplitude": 0.95})
        system = build_system("da_map", {"amplitude": 0.95, "strict": False})
        self.assertEqual(system.name, "da_map")

    def test_bistable_circle_attractors_are_fixed(self):
        system = build_system("bistable_circle")
        np.testing.assert_allclose(system.apply(np.array([0.25, 0.75])), [0.25, 0.75], atol=1e-15)

    def test_pretty_print(self):
        text = build_system("gauss").pretty_print()
        self.assertIn("System: gauss", text)
        self.assertIn("Singular set: nonempty", text)


class TestNonflat(unittest.TestCase):
    def test_quadratic_is_nonflat(self):
        system = build_system("quadratic")
        report = check_nonflat(system, *system.nonflat, samples=2000, seed=3)
        self.assertTrue(report.passed)
        self.assertGreater(report.checked, 0)

    def test_tight_constants_fail(self):
        system = build_system("gauss")
        report = check_nonflat(system, 1.01, 0.1, samples=2000, seed=3)
        self.assertFalse(report.passed)

    def test_empty_singular_set_is_rejected(self):
        with self.assertRaises(SystemConfigError):
            check_nonflat(build_system("doubling"), 2.0, 1.0)


class TestDomainAndRegion(unittest.TestCase):
    def test_circle_distance_wraps(self):
        circle = DomainSpec.circle()
        self.assertAlmostEqual(float(circle.distance(np.array([0.95]), np.array([0.05]))[0]), 0.1, places=12)

    def test_region_volume_and_membership(self):
        region = Region.from_intervals([[0.0, 0.25], [0.5, 0.75]])
        self.assertAlmostEqual(region.volume, 0.5)
        np.testing.assert_array_equal(region.contains(np.array([0.1, 0.3, 0.6])), [True, False, True])

    def test_region_samples_stay_inside(self):
        region = Region.from_intervals([[0.0, 0.25], [0.5, 0.75]])
        points = region.sample(np.random.default_rng(0), 500)
        self.assertEqual(points.shape, (500,))
        self.assertTrue(np.all(region.contains(points)))


if __name__ == "__main__":
    unittest.main()
