import math
import unittest

import numpy as np
from scipy.integrate import quad

from nuelab.measures import (
    EmpiricalMeasure,
    basin_count,
    empirical_measure,
    local_entropy,
    physical_integrals,
    ruelle_check,
    sample_orbit_set,
    shadowing_counts,
)
from nuelab.model import DomainSpec, EstimationError, ModelError
from nuelab.observables import Observable
from nuelab.systems import build_system


class TestEmpiricalMeasure(unittest.TestCase):
    def test_uniform_measure(self):
        measure = EmpiricalMeasure.uniform(DomainSpec.circle(), 10)
        self.assertAlmostEqual(measure.integrate(Observable.coordinate()), 0.5, places=12)
        self.assertEqual(measure.l1_distance(measure), 0.0)
        self.assertEqual(measure.support(), [[0.0, 1.0]])
        rows = measure.to_rows()
        self.assertEqual(len(rows), 10)
        self.assertEqual(set(rows[0]), {"lower_0", "upper_0", "weight"})

    def test_two_dimensional_moments(self):
        measure = EmpiricalMeasure.uniform(DomainSpec.torus(), 4)
        mean, var = measure.moments()
        np.testing.assert_allclose(mean, [0.5, 0.5])
        self.assertEqual(measure.midpoints().shape, (4, 4, 2))

    def test_weights_must_be_a_probability(self):
        with self.assertRaises(ModelError):
            EmpiricalMeasure((0.0,), (1.0,), (2,), np.array([0.5, 0.6]))

    def test_too_few_bins(self):
        with self.assertRaises(EstimationError):
            EmpiricalMeasure.uniform(DomainSpec.circle(), 1)


class TestEnsembleMeasures(unittest.TestCase):
    def test_doubling_histogram_is_close_to_lebesgue(self):
        system = build_system("doubling")
        measure = empirical_measure(system, m=2000, burn_in=10, n=40, bins=10, seed=1)
        self.assertLess(measure.l1_distance(EmpiricalMeasure.uniform(system.domain, 10)), 0.1)
        self.assertEqual(measure.diagnostics["orbits"], 2000)
        self.assertEqual(measure.diagnostics["points"], 2000 * 40)

    def test_gauss_histogram_matches_gauss_density(self):
        system = build_system("gauss")
        measure = empirical_measure(system, m=2000, burn_in=10, n=50, bins=10, seed=6)
        edges = measure.edges()
        density = lambda x: 1.0 / (math.log(2.0) * (1.0 + x))
        exact = np.array([quad(density, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
        self.assertAlmostEqual(float(exact.sum()), 1.0, places=10)
        self.assertLess(measure.l1_distance(exact), 0.05)

    def test_histogram_is_independent_of_worker_count(self):
        system = build_system("quadratic")
        one = empirical_measure(system, m=5000, burn_in=5, n=20, bins=16, seed=9, workers=1)
        two = empirical_measure(system, m=5000, burn_in=5, n=20, bins=16, seed=9, workers=2)
        np.testing.assert_array_equal(one.weights, two.weights)

    def test_bistable_circle_has_two_physical_measures(self):
        system = build_system("bistable_circle")
        report = basin_count(system, m=200, n=400, bins=10, tol=0.2, seed=0, burn_in=50)
        self.assertEqual(report.count, 2)
        self.assertEqual(report.non_convergent, 0)
        integrals = sorted(physical_integrals(report.representatives, Observable.coordinate()))
        np.testing.assert_allclose(integrals, [0.25, 0.75])
        self.assertEqual(sum(report.summary()["members"]), 200)

    def test_doubling_has_one_physical_measure(self):
        report = basin_count(build_system("doubling"), m=100, n=20_000, bins=4, tol=0.1, seed=2)
        self.assertEqual(report.count, 1)


class TestLocalEntropy(unittest.TestCase):
    def test_shadowing_counts_decrease(self):
        system = build_system("doubling")
        ensemble = sample_orbit_set(system, 20_000, 10, seed=3)
        counts = shadowing_counts(system, ensemble.points, 0.3, 6, 0.05)
        self.assertTrue(np.all(np.diff(counts) <= 0))
        self.assertGreater(counts[0], 0)

    def test_plain_rate_is_the_default(self):
        system = build_system("doubling")
        ensemble = sample_orbit_set(system, 100_000, 10, seed=3)
        estimate = local_entropy(system, ensemble, 0.3, 6, 0.05)
        # B(0.3, 6, 0.05) is an interval of length 0.1 / 2^5
        self.assertAlmostEqual(estimate.value, -math.log(0.1 / 32) / 6, delta=0.03)
        self.assertEqual(estimate.reference_count, len(ensemble))

    def test_doubling_local_entropy(self):
        system = build_system("doubling")
        ensemble = sample_orbit_set(system, 100_000, 10, seed=3)
        estimate = local_entropy(system, ensemble, 0.3, 6, 0.05, reference_length=1)
        self.assertAlmostEqual(estimate.value, math.log(2.0), delta=0.1)
        self.assertFalse(estimate.censored)

    def test_reference_length_must_be_shorter(self):
        system = build_system("doubling")
        ensemble = sample_orbit_set(system, 2000, 0, seed=3)
        with self.assertRaises(EstimationError):
            local_entropy(system, ensemble, 0.3, 4, 0.05, reference_length=4)

    def test_ruelle_inequality_on_cat_map(self):
        system = build_system("cat_map")
        report = ruelle_check(system, seed=5, m=50_000, burn_in=20, n=4, eps=0.05, references=5, lyapunov_length=2000)
        self.assertAlmostEqual(report.sigma_plus, math.log((3.0 + math.sqrt(5.0)) / 2.0), places=6)
        self.assertTrue(report.passed)
        self.assertEqual(len(report.local_entropies), 5)


if __name__ == "__main__":
    unittest.main()
