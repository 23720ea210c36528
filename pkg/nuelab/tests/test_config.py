import tempfile
import unittest
from pathlib import Path

from nuelab.config import load_config, parse_n_grid, parse_region, parse_text
from nuelab.model import ConfigError

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"

DEVIATE = """
[system]
family = "doubling"

[experiment]
kind = "deviate"
c = 0.8

[numeric]
n_grid = {n_grid}
m = {m}
seed = 3
"""


class TestParsing(unittest.TestCase):
    def test_minimal_deviate_config(self):
        config = parse_text(DEVIATE.format(n_grid="{ start = 10, stop = 30, step = 10 }", m=5000))
        self.assertEqual(config.kind, "deviate")
        self.assertEqual(config.n_grid, (10, 20, 30))
        self.assertEqual(config.settings["observable"], "digit")
        self.assertEqual(config.settings["mode"], "threshold")
        self.assertEqual(config.output_directory, "results/deviate")
        self.assertEqual(config.formats, ("csv", "json", "svg"))

    def test_empty_n_grid(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_text(DEVIATE.format(n_grid="[]", m=5000))
        self.assertEqual(ctx.exception.key, "numeric.n_grid")

    def test_decreasing_n_grid(self):
        with self.assertRaises(ConfigError):
            parse_text(DEVIATE.format(n_grid="[20, 10]", m=5000))

    def test_too_few_samples(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_text(DEVIATE.format(n_grid="[10]", m=999))
        self.assertEqual(ctx.exception.key, "numeric.m")

    def test_syntax_error_reports_location(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_text('[system]\nfamily = "doubling"\nparams = {\n')
        self.assertIsNotNone(ctx.exception.line)
        self.assertIn("line", str(ctx.exception))

    def test_seed_is_mandatory(self):
        text = DEVIATE.format(n_grid="[10]", m=5000).replace("seed = 3\n", "")
        with self.assertRaises(ConfigError) as ctx:
            parse_text(text)
        self.assertEqual(ctx.exception.key, "numeric.seed")

    def test_unknown_family_and_parameter(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_text(DEVIATE.format(n_grid="[10]", m=5000).replace('"doubling"', '"tent"'))
        self.assertEqual(ctx.exception.key, "system.family")
        text = '[system]\nfamily = "quadratic"\nparams = { a = 3.0 }\n[experiment]\nkind = "simulate"\n[numeric]\nn_grid = [10]\nseed = 1\n'
        with self.assertRaises(ConfigError) as ctx:
            parse_text(text)
        self.assertEqual(ctx.exception.key, "system.params")

    def test_params_are_completed_with_defaults(self):
        text = '[system]\nfamily = "da_map"\nparams = { amplitude = 0.5 }\n[experiment]\nkind = "hyptimes"\nsigma = 0.9\n[numeric]\nn_grid = [10]\nseed = 1\n'
        config = parse_text(text)
        self.assertEqual(config.params["amplitude"], 0.5)
        self.assertEqual(config.params["radius_u"], 0.02)

    def test_unknown_experiment_key(self):
        with self.assertRaises(ConfigError):
            parse_text(DEVIATE.format(n_grid="[10]", m=5000).replace("c = 0.8", "c = 0.8\nthreshold = 1"))

    def test_required_kind_keys(self):
        text = '[system]\nfamily = "gauss"\n[experiment]\nkind = "tail"\ndelta = 0.1\n[numeric]\nn_grid = [10]\nseed = 1\n'
        with self.assertRaises(ConfigError) as ctx:
            parse_text(text)
        self.assertEqual(ctx.exception.key, "experiment.epsilon")

    def test_hyphenated_kind(self):
        text = '[system]\nfamily = "cat_map"\n[experiment]\nkind = "ruelle-check"\n[numeric]\nseed = 1\n'
        config = parse_text(text)
        self.assertEqual(config.kind, "ruelle_check")
        self.assertEqual(config.n_grid, ())

    def test_simulate_direction_is_validated(self):
        base = '[system]\nfamily = "{family}"\n[experiment]\nkind = "simulate"\nalong = "{along}"\n[numeric]\nn_grid = [10]\nseed = 1\n'
        self.assertEqual(parse_text(base.format(family="cat_map", along="F")).settings["warmup"], 50)
        with self.assertRaises(ConfigError) as ctx:
            parse_text(base.format(family="gauss", along="F"))
        self.assertEqual(ctx.exception.key, "experiment.along")
        with self.assertRaises(ConfigError):
            parse_text(base.format(family="cat_map", along="sideways"))

    def test_unknown_output_format(self):
        text = DEVIATE.format(n_grid="[10]", m=5000) + '[output]\nformats = ["csv", "pdf"]\n'
        with self.assertRaises(ConfigError):
            parse_text(text)

    def test_overrides(self):
        config = parse_text(DEVIATE.format(n_grid="[10]", m=5000))
        updated = config.with_overrides(seed=99, workers=2, out="elsewhere")
        self.assertEqual((updated.seed, updated.workers, updated.output_directory), (99, 2, "elsewhere"))
        with self.assertRaises(ConfigError):
            config.with_overrides(seed=2**64)
        with self.assertRaises(ConfigError):
            config.with_overrides(workers=0)


class TestHelpers(unittest.TestCase):
    def test_n_grid_forms(self):
        self.assertEqual(parse_n_grid([5, 10]), (5, 10))
        self.assertEqual(parse_n_grid({"start": 5, "stop": 15}), tuple(range(5, 16)))
        with self.assertRaises(ConfigError):
            parse_n_grid([0, 5])
        with self.assertRaises(ConfigError):
            parse_n_grid("10")

    def test_regions(self):
        self.assertEqual(parse_region([[0.0, 0.5]], "r").volume, 0.5)
        self.assertEqual(parse_region([[[0.0, 0.5], [0.0, 0.5]]], "r").dimension, 2)
        with self.assertRaises(ConfigError):
            parse_region([[0.5, 0.5]], "r")
        with self.assertRaises(ConfigError):
            parse_region([], "r")


class TestFiles(unittest.TestCase):
    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/experiment.toml")

    def test_shipped_configs_validate(self):
        paths = sorted(CONFIG_DIR.glob("*.toml"))
        self.assertGreater(len(paths), 0)
        for path in paths:
            config = load_config(path)
            self.assertEqual(config.source, str(path))

    def test_load_from_disk(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "exp.toml"
            path.write_text(DEVIATE.format(n_grid="[10, 20]", m=2000), encoding="utf-8")
            self.assertEqual(load_config(path).m, 2000)


if __name__ == "__main__":
    unittest.main()
