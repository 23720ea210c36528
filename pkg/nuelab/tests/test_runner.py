import math
import unittest

from nuelab.artifacts import render_csv
from nuelab.config import parse_text
from nuelab.diagnostics import CSV_COLUMNS
from nuelab.model import ConfigError
from nuelab.runner import run_experiment

LOG_LAMBDA_U = math.log((3.0 + math.sqrt(5.0)) / 2.0)


def config_for(family, kind, experiment="", numeric="", params=""):
    text = f"""
[system]
family = "{family}"
{params}

[experiment]
kind = "{kind}"
{experiment}

[numeric]
seed = 21
{numeric}
"""
    return parse_text(text)


class TestOrbitExperiments(unittest.TestCase):
    def test_simulate_rows(self):
        config = config_for("doubling", "simulate", 'orbits = 3\nobservables = ["digit"]', "n_grid = [50]")
        result = run_experiment(config)
        self.assertEqual(len(result.rows), 3)
        self.assertEqual([name for name, _ in result.columns], list(CSV_COLUMNS))
        self.assertEqual(result.results["failures"], [])

    def test_hyptimes_agrees_with_reference_scan(self):
        config = config_for("quadratic", "hyptimes", "sigma = 0.9\norbits = 20\nverify_reference = true", "n_grid = [200, 400]")
        result = run_experiment(config)
        self.assertEqual(result.results["along"], "full")
        self.assertEqual(result.results["reference_mismatches"], 0)
        self.assertEqual([row["N"] for row in result.rows], [200, 400])
        self.assertIn("cauchy_gap", result.results)

    def test_hyptimes_along_f_needs_a_splitting(self):
        with self.assertRaises(ConfigError):
            config_for("quadratic", "hyptimes", 'sigma = 0.9\nalong = "F"', "n_grid = [100]")

    def test_unknown_recurrence_indexing(self):
        with self.assertRaises(ConfigError):
            config_for("quadratic", "simulate", 'recurrence_indexing = "forward"', "n_grid = [100]")

    def test_hyptimes_on_cat_map_tracks_f(self):
        config = config_for("cat_map", "hyptimes", "sigma = 0.9\norbits = 5", "n_grid = [100, 200]")
        result = run_experiment(config)
        self.assertEqual(result.results["along"], "F")
        self.assertEqual(result.rows[-1]["mean_density"], "1")
        self.assertLess(result.results["cone_fit"]["lambda"], 1.0)

    def test_slowed_da_map_has_gaps_in_hyperbolic_times(self):
        config = config_for(
            "da_map",
            "hyptimes",
            "sigma = 0.9\norbits = 20",
            "n_grid = [1000, 2000]",
            "params = { amplitude = 0.7, strict = false }",
        )
        result = run_experiment(config)
        self.assertEqual(result.results["along"], "F")
        self.assertLess(float(result.rows[-1]["min_density"]), 1.0)
        self.assertIn("cone_fit", result.results)

    def test_simulate_on_cat_map_reads_psi_along_f(self):
        config = config_for("cat_map", "simulate", 'orbits = 2\nobservables = ["coordinate"]', "n_grid = [200]")
        result = run_experiment(config)
        self.assertEqual(result.results["along"], "F")
        for row in result.rows:
            self.assertAlmostEqual(float(row["S_n_psi"]) / 200, -LOG_LAMBDA_U, delta=1e-9)
            self.assertAlmostEqual(float(row["S_n_J"]) / 200, LOG_LAMBDA_U, delta=1e-9)
            self.assertEqual(row["hyperbolic_times"], " ".join(str(t) for t in range(1, 201)))

    def test_simulate_on_cat_map_with_the_full_derivative(self):
        config = config_for("cat_map", "simulate", 'orbits = 1\nalong = "full"', "n_grid = [100]")
        result = run_experiment(config)
        self.assertEqual(result.results["along"], "full")
        # -log of the smallest singular value is +log lambda_u: no expansion seen without the splitting
        self.assertAlmostEqual(float(result.rows[0]["S_n_psi"]) / 100, LOG_LAMBDA_U, delta=1e-9)



class TestWorkerIndependence(unittest.TestCase):
    def csv_bytes(self, kind, experiment, workers):
        config = config_for("doubling", kind, experiment, f"n_grid = [5, 10, 15]\nm = 9000\nworkers = {workers}")
        result = run_experiment(config)
        return render_csv(result.columns, result.rows)

    def test_deviate_csv_is_independent_of_workers(self):
        experiment = "c = 0.7\nbound = false"
        self.assertEqual(self.csv_bytes("deviate", experiment, 1), self.csv_bytes("deviate", experiment, 2))

    def test_escape_csv_is_independent_of_workers(self):
        experiment = "region = [[0.0, 0.5]]"
        self.assertEqual(self.csv_bytes("escape", experiment, 1), self.csv_bytes("escape", experiment, 2))


class TestEnsembleExperiments(unittest.TestCase):
    def test_measure_with_two_basins(self):
        config = config_for(
            "bistable_circle",
            "measure",
            'tol = 0.2\nobservables = ["coordinate"]',
            "n_grid = [400]\nm = 2000\nbins = 10\nburn_in = 50",
        )
        result = run_experiment(config)
        self.assertEqual(result.results["basins"]["basins"], 2)
        self.assertEqual(len(result.rows), 10)

    def test_exact_escape_rate(self):
        config = config_for("doubling", "escape", "region = [[0.0, 0.5]]\nexact = true", "n_grid = [2, 4, 6, 8]")
        result = run_experiment(config)
        self.assertEqual(result.results["fit"]["status"], "ok")
        self.assertAlmostEqual(result.results["fit"]["xi"], math.log(2.0), places=6)
        self.assertAlmostEqual(float(result.rows[0]["absolute"]), 0.25, places=9)

    def test_tail_rows(self):
        config = config_for("gauss", "tail", "delta = 0.05\nepsilon = 0.1", "n_grid = [10, 20]\nm = 2000")
        result = run_experiment(config)
        self.assertEqual([row["n"] for row in result.rows], [10, 20])
        self.assertEqual(result.kind, "tail")

    def test_bound_rows_and_pressure_curve(self):
        config = config_for("doubling", "bound", "c_values = [0.6, 1.5]\nbruteforce_grid = 50")
        result = run_experiment(config)
        self.assertEqual([row["regime"] for row in result.rows], ["tilted", "infeasible"])
        self.assertAlmostEqual(result.results["pressure"]["P"][0], 0.0, places=12)
        self.assertAlmostEqual(result.results["equilibrium_average"], 0.5, places=12)


if __name__ == "__main__":
    unittest.main()
