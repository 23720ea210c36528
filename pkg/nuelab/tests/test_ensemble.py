import unittest

import numpy as np

from nuelab.ensemble import (
    BLOCK_SIZE,
    BinomialEstimate,
    KahanSum,
    block_generator,
    block_layout,
    clopper_pearson,
    draw_starts,
)
from nuelab.model import EstimationError, Region, SystemConfigError
from nuelab.observables import Observable
from nuelab.systems import build_system


class TestBlocks(unittest.TestCase):
    def test_block_layout(self):
        self.assertEqual(block_layout(10_000), [(0, BLOCK_SIZE), (1, BLOCK_SIZE), (2, 10_000 - 2 * BLOCK_SIZE)])
        self.assertEqual(block_layout(1), [(0, 1)])
        with self.assertRaises(EstimationError):
            block_layout(0)

    def test_block_streams_depend_only_on_seed_and_block(self):
        a = block_generator(7, 3).random(5)
        b = block_generator(7, 3).random(5)
        c = block_generator(7, 4).random(5)
        d = block_generator(8, 3).random(5)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))
        self.assertFalse(np.array_equal(a, d))

    def test_draw_starts_avoids_singular_set(self):
        system = build_system("gauss")
        starts = draw_starts(system, block_generator(0, 0), 5000)
        self.assertEqual(starts.shape, (5000,))
        self.assertFalse(system.failure_mask(starts).any())

    def test_draw_starts_in_region(self):
        region = Region.from_intervals([[0.1, 0.2]])
        starts = draw_starts(build_system("doubling"), block_generator(0, 0), 1000, region)
        self.assertTrue(np.all((starts >= 0.1) & (starts <= 0.2)))


class TestKahanSum(unittest.TestCase):
    def test_compensation_recovers_small_terms(self):
        acc = KahanSum(1)
        for value in (1e16, 1.0, -1e16):
            acc.add(np.array([value]))
        self.assertEqual(float(acc.value[0]), 1.0)


class TestBinomialEstimate(unittest.TestCase):
    def test_clopper_pearson_zero_count(self):
        low, high = clopper_pearson(0, 100)
        self.assertEqual(low, 0.0)
        self.assertAlmostEqual(high, 1.0 - 0.025 ** (1.0 / 100), places=10)

    def test_clopper_pearson_full_count(self):
        low, high = clopper_pearson(100, 100)
        self.assertEqual(high, 1.0)
        self.assertAlmostEqual(low, 0.025 ** (1.0 / 100), places=10)

    def test_interval_contains_estimate(self):
        estimate = BinomialEstimate.from_counts(37, 1000)
        self.assertAlmostEqual(estimate.fraction, 0.037)
        self.assertLess(estimate.ci_low, 0.037)
        self.assertGreater(estimate.ci_high, 0.037)
        self.assertFalse(estimate.censored)

    def test_zero_count_is_censored(self):
        self.assertTrue(BinomialEstimate.from_counts(0, 5000).censored)

    def test_exact_value(self):
        estimate = BinomialEstimate.exact_value(0.25)
        self.assertTrue(estimate.exact)
        self.assertEqual((estimate.ci_low, estimate.ci_high), (0.25, 0.25))
        self.assertEqual(estimate.scaled(2.0), (0.5, 0.5, 0.5))


class TestObservables(unittest.TestCase):
    def test_digit(self):
        phi = Observable.digit()
        np.testing.assert_array_equal(phi(np.array([0.2, 0.5, 0.9])), [0.0, 1.0, 1.0])
        self.assertEqual(phi.value_range(build_system("doubling").domain), (0.0, 1.0))

    def test_coordinate_on_torus(self):
        phi = Observable.coordinate(axis=1)
        np.testing.assert_array_equal(phi(np.array([[0.1, 0.2], [0.3, 0.4]])), [0.2, 0.4])

    def test_power_range_spans_zero(self):
        phi = Observable.power(2.0)
        self.assertEqual(phi.value_range(build_system("quadratic").domain), (0.0, 4.0))

    def test_table_interpolates_and_clamps(self):
        phi = Observable.table([0.0, 1.0], [0.0, 2.0])
        np.testing.assert_allclose(phi(np.array([-1.0, 0.25, 3.0])), [0.0, 0.5, 2.0])

    def test_table_needs_increasing_nodes(self):
        with self.assertRaises(SystemConfigError):
            Observable.table([1.0, 0.0], [0.0, 1.0])

    def test_plateau(self):
        phi = Observable.plateau(Region.from_intervals([[0.4, 0.6]]), 0.1)
        np.testing.assert_allclose(phi(np.array([0.5, 0.65, 0.8])), [1.0, 0.5, 0.0])

    def test_from_payload(self):
        self.assertEqual(Observable.from_payload("digit").kind, "digit")
        phi = Observable.from_payload({"kind": "power", "exponent": 3})
        self.assertEqual(phi.params["exponent"], 3.0)
        with self.assertRaises(SystemConfigError):
            Observable.from_payload("nonsense")

    def test_check_bounded(self):
        self.assertEqual(Observable.constant(2.0).check_bounded(build_system("doubling").domain), 2.0)


if __name__ == "__main__":
    unittest.main()
