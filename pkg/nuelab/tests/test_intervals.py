import unittest

from nuelab import intervals
from nuelab.diagnostics import dynamical_ball_volume
from nuelab.model import EstimationError, Region
from nuelab.systems import build_system


class TestSurvivorIntervals(unittest.TestCase):
    def test_doubling_left_half(self):
        system = build_system("doubling")
        region = Region.from_intervals([[0.0, 0.5]])
        for n in (1, 3, 8):
            self.assertAlmostEqual(intervals.survivor_measure_exact(system, region, n), 2.0**-n, places=12)

    def test_survivor_pieces_are_disjoint(self):
        system = build_system("expanding_circle_k")
        region = Region.from_intervals([[0.0, 0.3], [0.6, 0.9]])
        pieces = sorted(intervals.survivor_intervals(system, region, 4))
        for (_, hi), (lo, _) in zip(pieces, pieces[1:]):
            self.assertLessEqual(hi, lo + 1e-15)

    def test_two_dimensional_region_is_rejected(self):
        with self.assertRaises(EstimationError):
            intervals.survivor_intervals(build_system("doubling"), Region.from_boxes([[[0, 1], [0, 1]]]), 2)


class TestBallIntervals(unittest.TestCase):
    def test_doubling_ball_shrinks_geometrically(self):
        system = build_system("doubling")
        self.assertAlmostEqual(intervals.ball_measure_exact(system, 0.3, 3, 0.01), 0.005, places=12)

    def test_ball_wraps_around_the_circle(self):
        system = build_system("doubling")
        self.assertAlmostEqual(intervals.ball_measure_exact(system, 0.0, 1, 0.05), 0.1, places=12)

    def test_monte_carlo_agrees_with_enumeration(self):
        system = build_system("doubling")
        exact = dynamical_ball_volume(system, 0.3, 3, 0.01, exact=True)
        estimate = dynamical_ball_volume(system, 0.3, 3, 0.01, m=100_000, seed=4)
        self.assertTrue(exact.exact)
        self.assertLess(abs(estimate.value - exact.value), 0.0012)
        self.assertLessEqual(estimate.ci_low, estimate.value)

    def test_torus_maps_are_not_enumerable(self):
        with self.assertRaises(EstimationError):
            intervals.ball_measure_exact(build_system("cat_map"), 0.3, 2, 0.1)


if __name__ == "__main__":
    unittest.main()
