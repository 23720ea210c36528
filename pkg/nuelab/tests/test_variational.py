import math
import unittest

import numpy as np

from nuelab.model import ModelError
from nuelab.observables import Observable
from nuelab.systems import build_system
from nuelab.variational import (
    MarkovMeasure,
    MarkovModel,
    doubling_model,
    full_shift_model,
    golden_mean_model,
    markov_entropy,
    markov_integral,
    markov_model_for,
    parry_measure,
    perron_root,
    pressure,
    pressure_curve,
    rate_bound,
    rate_bound_bruteforce,
    solve_rate_bound,
    tilted_equilibrium,
)

LOG_GOLDEN = math.log((1.0 + math.sqrt(5.0)) / 2.0)


def binary_entropy(p):
    return -p * math.log(p) - (1.0 - p) * math.log(1.0 - p)


class TestMarkovModel(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ModelError):
            MarkovModel(np.eye(2), np.zeros(2), np.zeros(2))
        with self.assertRaises(ModelError):
            MarkovModel(np.array([[2.0, 1.0], [1.0, 1.0]]), np.zeros(2), np.zeros(2))
        with self.assertRaises(ModelError):
            MarkovModel(np.ones((1, 1)), np.zeros(1), np.zeros(1))
        with self.assertRaises(ModelError):
            MarkovModel(np.ones((2, 2)), np.zeros(3), np.zeros(2))
        with self.assertRaises(ModelError):
            MarkovModel(np.ones((2, 2)), np.array([0.0, math.inf]), np.zeros(2))

    def test_json_description(self):
        model = golden_mean_model(phi=(0.0, 1.0))
        again = MarkovModel.from_json(model.to_json())
        np.testing.assert_array_equal(again.transitions, model.transitions)
        np.testing.assert_array_equal(again.phi, model.phi)
        self.assertEqual(again.name, "golden_mean")

    def test_json_errors(self):
        with self.assertRaises(ModelError):
            MarkovModel.from_json({"transitions": [[1, 1], [1, 1]], "phi": [0, 1]})
        with self.assertRaises(ModelError):
            MarkovModel.from_json({"alphabet": 3, "transitions": [[1, 1], [1, 1]], "phi": [0, 1], "jacobian": [0, 0]})

    def test_model_from_circle_map(self):
        model = markov_model_for(build_system("doubling"), Observable.digit())
        np.testing.assert_array_equal(model.phi, [0.0, 1.0])
        np.testing.assert_allclose(model.jacobian, [math.log(2.0)] * 2)
        k3 = markov_model_for(build_system("expanding_circle_k"), Observable.table([0.0, 1.0 / 3.0, 1.0 / 3.0 + 1e-12, 1.0], [0.0, 0.0, 1.0, 1.0]))
        self.assertEqual(k3.size, 3)

    def test_model_needs_cylinder_constant_observable(self):
        with self.assertRaises(ModelError):
            markov_model_for(build_system("doubling"), Observable.coordinate())
        with self.assertRaises(ModelError):
            markov_model_for(build_system("quadratic"), Observable.digit())


class TestPressure(unittest.TestCase):
    def test_perron_root(self):
        self.assertAlmostEqual(perron_root(np.array([[2.0, 1.0], [1.0, 1.0]])), (3.0 + math.sqrt(5.0)) / 2.0, places=10)
        with self.assertRaises(ModelError):
            perron_root(np.array([[1.0, -1.0], [1.0, 1.0]]))
        with self.assertRaises(ModelError):
            perron_root(np.eye(2))

    def test_doubling_pressure(self):
        model = doubling_model()
        self.assertAlmostEqual(pressure(model, 0.0), 0.0, places=12)
        self.assertAlmostEqual(pressure(model, 1.0), math.log((math.e + 1.0) / 2.0), places=10)

    def test_pressure_handles_large_tilts(self):
        model = doubling_model()
        self.assertAlmostEqual(pressure(model, 800.0), 800.0 - math.log(2.0) + math.log1p(math.exp(-800.0)), places=8)

    def test_golden_mean_entropy(self):
        model = golden_mean_model()
        self.assertAlmostEqual(pressure(model, 0.0), LOG_GOLDEN, places=10)
        measure = parry_measure(model)
        self.assertAlmostEqual(markov_entropy(model, measure), LOG_GOLDEN, places=10)
        self.assertEqual(measure.kernel[1, 1], 0.0)

    def test_full_shift_is_normalised(self):
        self.assertAlmostEqual(pressure(full_shift_model(3), 0.0), 0.0, places=12)

    def test_pressure_curve_is_increasing_and_convex(self):
        values = pressure_curve(doubling_model(), np.linspace(0.0, 4.0, 9))
        self.assertTrue(np.all(np.diff(values) > 0.0))
        self.assertTrue(np.all(np.diff(values, 2) >= -1e-12))


class TestEquilibria(unittest.TestCase):
    def test_tilted_equilibrium_of_doubling(self):
        model = doubling_model()
        measure = tilted_equilibrium(model, 1.0)
        expected = math.e / (1.0 + math.e)
        self.assertAlmostEqual(markov_integral(model, model.phi, measure), expected, places=10)
        self.assertAlmostEqual(markov_entropy(model, measure), binary_entropy(expected), places=10)

    def test_bernoulli_entropy(self):
        model = doubling_model()
        measure = MarkovMeasure(np.array([[0.8, 0.2], [0.8, 0.2]]), np.array([0.8, 0.2]))
        self.assertAlmostEqual(markov_entropy(model, measure), 0.500402, places=6)

    def test_measure_checks(self):
        model = golden_mean_model()
        forbidden = MarkovMeasure(np.array([[0.5, 0.5], [0.5, 0.5]]), np.array([0.5, 0.5]))
        with self.assertRaises(ModelError):
            markov_entropy(model, forbidden)
        not_stationary = MarkovMeasure(np.array([[0.5, 0.5], [1.0, 0.0]]), np.array([0.5, 0.5]))
        with self.assertRaises(ModelError):
            markov_entropy(model, not_stationary)


class TestRateBound(unittest.TestCase):
    def test_doubling_bound_is_binary_entropy(self):
        model = doubling_model()
        for c in (0.6, 0.8, 0.95):
            bound = solve_rate_bound(model, c)
            self.assertEqual(bound.regime, "tilted")
            self.assertAlmostEqual(bound.value, binary_entropy(c) - math.log(2.0), delta=1e-9)
            self.assertAlmostEqual(bound.t_star, math.log(c / (1.0 - c)), delta=1e-6)

    def test_regimes(self):
        model = doubling_model()
        below = solve_rate_bound(model, 0.3)
        self.assertEqual(below.regime, "equilibrium")
        self.assertAlmostEqual(below.value, 0.0, places=12)
        self.assertAlmostEqual(rate_bound(model, 0.5), 0.0, places=9)
        top = solve_rate_bound(model, 1.0)
        self.assertEqual(top.regime, "boundary")
        self.assertAlmostEqual(top.value, -math.log(2.0), places=12)
        with self.assertRaises(ModelError):
            rate_bound(model, 1.01)

    def test_forbidden_maximiser_gives_minus_infinity(self):
        model = golden_mean_model(phi=(0.0, 1.0))
        self.assertEqual(rate_bound(model, 1.0), -math.inf)

    def test_bound_decreases_with_threshold(self):
        model = golden_mean_model(phi=(0.0, 1.0))
        values = [rate_bound(model, c) for c in (0.2, 0.3, 0.4, 0.45)]
        self.assertTrue(all(b < a for a, b in zip(values, values[1:])))

    def test_bruteforce_agrees_with_duality(self):
        model = doubling_model()
        for c in (0.6, 0.8):
            self.assertAlmostEqual(rate_bound_bruteforce(model, c, 200), rate_bound(model, c), delta=1e-3)

    def test_bruteforce_on_restricted_shift(self):
        model = golden_mean_model(phi=(0.0, 1.0))
        self.assertAlmostEqual(rate_bound_bruteforce(model, 1.0 / 3.0, 200), math.log(2.0) / 1.5, delta=1e-3)
        self.assertAlmostEqual(rate_bound(model, 1.0 / 3.0), math.log(2.0) / 1.5, delta=1e-9)

    def test_bruteforce_limits(self):
        with self.assertRaises(ModelError):
            rate_bound_bruteforce(doubling_model(), 0.6, 0)
        with self.assertRaises(ModelError):
            rate_bound_bruteforce(full_shift_model(4), 0.6, 10)


if __name__ == "__main__":
    unittest.main()
