"""Experiment config files: TOML parsing, validation and default materialisation.

A config has four tables::

    [system]      family = "doubling"         ([system.params] optional)
    [experiment]  kind = "deviate" plus kind-specific keys
    [numeric]     n_grid, m, seed, workers, burn_in, bins
    [output]      directory, formats

Every default is written into the loaded ExperimentConfig so ``to_payload`` describes
the run completely.
"""

from __future__ import annotations

import copy
import re
import tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .model import ConfigError, DynamicalSystem, Region, SystemConfigError
from .observables import Observable
from .systems import build_system, get_family

EXPERIMENT_KINDS = ("simulate", "hyptimes", "measure", "deviate", "escape", "tail", "bound", "ruelle_check")
MONTE_CARLO_KINDS = {"measure", "deviate", "escape", "tail", "ruelle_check"}
GRID_OPTIONAL_KINDS = {"bound", "ruelle_check"}
OUTPUT_FORMATS = ("csv", "json", "svg")
MIN_SAMPLES = 1000
MAX_SEED = 2**64

# None marks a key without a default; kinds that need it check for it below.
EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {
        "observables": ["coordinate"],
        "orbits": 10,
        "starts": None,
        "sigma": 0.9,
        "delta": 0.1,
        "b": 0.5,
        "recurrence_indexing": "paper_literal",
        "along": "auto",
        "warmup": 50,
    },
    "hyptimes": {
        "sigma": None,
        "delta": 0.1,
        "b": 0.5,
        "recurrence_indexing": "paper_literal",
        "orbits": 1000,
        "along": "auto",
        "warmup": 50,
        "verify_reference": False,
    },
    "measure": {
        "tol": 0.05,
        "basins": True,
        "basin_starts": 64,
        "observables": [],
    },
    "deviate": {
        "observable": "digit",
        "mode": "threshold",
        "c": None,
        "targets": None,
        "omega": None,
        "gate": None,
        "exact": False,
        "window": None,
        "bound": True,
    },
    "escape": {
        "region": None,
        "exact": False,
        "window": None,
    },
    "tail": {
        "delta": None,
        "epsilon": None,
        "window": None,
    },
    "bound": {
        "observable": "digit",
        "model": "auto",
        "c_values": None,
        "bruteforce_grid": 0,
        "t_grid": [0.0, 0.5, 1.0, 2.0, 4.0],
    },
    "ruelle_check": {
        "n": 8,
        "eps": 0.05,
        "references": 20,
        "lyapunov_length": 100000,
        "reference_length": 2,
    },
}

REQUIRED_KEYS = {
    "hyptimes": ("sigma",),
    "escape": ("region",),
    "tail": ("delta", "epsilon"),
    "bound": ("c_values",),
}

_LOCATION = re.compile(r"\(at line (\d+), column (\d+)\)")


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    params: dict[str, Any]
    kind: str
    settings: dict[str, Any]
    n_grid: tuple[int, ...]
    m: int
    seed: int
    workers: int = 1
    burn_in: int = 100
    bins: int | tuple[int, ...] = 100
    output_directory: str = "results"
    formats: tuple[str, ...] = OUTPUT_FORMATS
    source: str | None = field(default=None, compare=False)

    def build_system(self) -> DynamicalSystem:
        return build_system(self.family, self.params)

    def observable(self, key: str = "observable") -> Observable:
        return Observable.from_payload(self.settings[key])

    def region(self) -> Region:
        return parse_region(self.settings["region"], "experiment.region")

    def with_overrides(self, seed: int | None = None, workers: int | None = None, out: str | None = None) -> ExperimentConfig:
        updated = self
        if seed is not None:
            _check_seed(seed)
            updated = replace(updated, seed=int(seed))
        if workers is not None:
            if workers < 1:
                raise ConfigError("must be at least 1", key="workers")
            updated = replace(updated, workers=int(workers))
        if out is not None:
            updated = replace(updated, output_directory=str(out))
        return updated

    def to_payload(self) -> dict[str, Any]:
        return {
            "system": {"family": self.family, "params": copy.deepcopy(self.params)},
            "experiment": {"kind": self.kind, **copy.deepcopy(self.settings)},
            "numeric": {
                "n_grid": list(self.n_grid),
                "m": self.m,
                "seed": self.seed,
                "workers": self.workers,
                "burn_in": self.burn_in,
                "bins": list(self.bins) if isinstance(self.bins, tuple) else self.bins,
            },
            "output": {"directory": self.output_directory, "formats": list(self.formats)},
        }


# ---------------------------------------------------------------- parsing
def parse_text(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        message = str(exc)
        match = _LOCATION.search(message)
        line = getattr(exc, "lineno", None) or (int(match.group(1)) if match else None)
        column = getattr(exc, "colno", None) or (int(match.group(2)) if match else None)
        raise ConfigError(_LOCATION.sub("", message).strip(), line=line, column=column) from exc
    return validate(document, source)


def load_config(path: str | Path) -> ExperimentConfig:
    source = Path(path)
    if not source.exists():
        raise ConfigError(f"config file '{source}' not found")
    return parse_text(source.read_text(encoding="utf-8"), str(source))


def _table(document: Mapping[str, Any], key: str, required: bool = True) -> dict[str, Any]:
    value = document.get(key)
    if value is None:
        if required:
            raise ConfigError("missing table", key=key)
        return {}
    if not isinstance(value, dict):
        raise ConfigError("must be a table", key=key)
    return dict(value)


def _int(value: Any, key: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", key=key)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be at least {minimum}, got {value}", key=key)
    return value


def _check_seed(seed: Any) -> int:
    seed = _int(seed, "numeric.seed", 0)
    if seed >= MAX_SEED:
        raise ConfigError("must fit in 64 bits", key="numeric.seed")
    return seed


def parse_n_grid(value: Any, key: str = "numeric.n_grid") -> tuple[int, ...]:
    """A list of integers or a table {start, stop, step} (stop inclusive)."""

    if isinstance(value, dict):
        start = _int(value.get("start"), f"{key}.start", 1)
        stop = _int(value.get("stop"), f"{key}.stop", start)
        step = _int(value.get("step", 1), f"{key}.step", 1)
        grid = tuple(range(start, stop + 1, step))
    elif isinstance(value, list):
        grid = tuple(_int(v, key, 1) for v in value)
    else:
        raise ConfigError("must be a list of integers or a {start, stop, step} table", key=key)
    if not grid:
        raise ConfigError("must not be empty", key=key)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("must be strictly increasing", key=key)
    return grid


def parse_region(value: Any, key: str) -> Region:
    """[[lo, hi], ...] for intervals or [[[lo, hi], [lo, hi]], ...] for boxes."""

    if not isinstance(value, list) or not value:
        raise ConfigError("must be a nonempty list of intervals or boxes", key=key)
    try:
        if all(isinstance(v, (int, float)) for v in value[0]):
            region = Region.from_intervals(value)
        else:
            region = Region.from_boxes(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed region: {exc}", key=key) from exc
    for box in region.boxes:
        for lo, hi in box:
            if not hi > lo:
                raise ConfigError(f"empty edge [{lo}, {hi}]", key=key)
    return region


def _experiment_settings(experiment: dict[str, Any]) -> tuple[str, dict[str, Any]]:
    kind = experiment.pop("kind", None)
    if kind is None:
        raise ConfigError("missing 'kind'", key="experiment")
    if isinstance(kind, list):
        raise ConfigError("exactly one experiment kind is allowed", key="experiment.kind")
    kind = str(kind).replace("-", "_")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown kind '{kind}'; choose from {', '.join(EXPERIMENT_KINDS)}", key="experiment.kind")
    defaults = EXPERIMENT_DEFAULTS[kind]
    unknown = sorted(set(experiment) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)} for kind '{kind}'", key="experiment")
    settings = {**copy.deepcopy(defaults), **experiment}
    for name in REQUIRED_KEYS.get(kind, ()):
        if settings.get(name) is None:
            raise ConfigError(f"required for kind '{kind}'", key=f"experiment.{name}")
    return kind, settings


def _validate_kind(kind: str, settings: dict[str, Any]) -> None:
    if kind == "deviate":
        mode = settings["mode"]
        if mode == "threshold" and settings["c"] is None:
            raise ConfigError("threshold mode needs c", key="experiment.c")
        if mode == "equilibrium_distance" and (settings["omega"] is None or settings["omega"] <= 0):
            raise ConfigError("equilibrium mode needs omega > 0", key="experiment.omega")
        if mode not in ("threshold", "equilibrium_distance"):
            raise ConfigError(f"unknown mode '{mode}'", key="experiment.mode")
        gate = settings["gate"]
        if gate is not None:
            if not isinstance(gate, dict) or "delta" not in gate or "epsilon" not in gate:
                raise ConfigError("gate must be a table with delta and epsilon", key="experiment.gate")
    if kind == "escape":
        parse_region(settings["region"], "experiment.region")
    if kind == "tail" and not settings["delta"] > 0:
        raise ConfigError("must be positive", key="experiment.delta")
    if kind == "hyptimes" and not 0 < settings["sigma"] < 1:
        raise ConfigError("must lie in (0, 1)", key="experiment.sigma")
    if kind in ("simulate", "hyptimes") and settings["along"] not in ("auto", "F", "full"):
        raise ConfigError(f"unknown direction '{settings['along']}'; choose auto, F or full", key="experiment.along")
    if settings.get("recurrence_indexing", "paper_literal") not in ("paper_literal", "reversed"):
        raise ConfigError("must be paper_literal or reversed", key="experiment.recurrence_indexing")
    if kind == "bound":
        if not isinstance(settings["c_values"], list) or not settings["c_values"]:
            raise ConfigError("must be a nonempty list", key="experiment.c_values")
    for name in ("observable",):
        if name in settings:
            try:
                Observable.from_payload(settings[name])
            except SystemConfigError as exc:
                raise ConfigError(str(exc), key=f"experiment.{name}") from exc
    window = settings.get("window")
    if window is not None and (not isinstance(window, list) or len(window) != 2):
        raise ConfigError("must be [n_low, n_high]", key="experiment.window")


def validate(document: Mapping[str, Any], source: str | None = None) -> ExperimentConfig:
    system = _table(document, "system")
    experiment = _table(document, "experiment")
    numeric = _table(document, "numeric")
    output = _table(document, "output", required=False)
    unknown = sorted(set(document) - {"system", "experiment", "numeric", "output"})
    if unknown:
        raise ConfigError(f"unknown table(s) {', '.join(unknown)}", key="config")

    family = system.get("family")
    if not isinstance(family, str):
        raise ConfigError("missing family name", key="system.family")
    if get_family(family) is None:
        raise ConfigError(f"unknown family '{family}'", key="system.family")
    params = system.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("must be a table", key="system.params")

    kind, settings = _experiment_settings(experiment)
    _validate_kind(kind, settings)

    if "seed" not in numeric:
        raise ConfigError("seed is mandatory", key="numeric.seed")
    seed = _check_seed(numeric["seed"])
    if "n_grid" in numeric:
        n_grid = parse_n_grid(numeric["n_grid"])
    elif kind in GRID_OPTIONAL_KINDS:
        n_grid = ()
    else:
        raise ConfigError(f"required for kind '{kind}'", key="numeric.n_grid")
    m = _int(numeric.get("m", 100_000), "numeric.m", 1)
    exact = bool(settings.get("exact", False))
    if kind in MONTE_CARLO_KINDS and not exact and m < MIN_SAMPLES:
        raise ConfigError(f"must be at least {MIN_SAMPLES} for Monte-Carlo experiments", key="numeric.m")
    workers = _int(numeric.get("workers", 1), "numeric.workers", 1)
    burn_in = _int(numeric.get("burn_in", 100), "numeric.burn_in", 0)
    bins_raw = numeric.get("bins", 100)
    bins = tuple(_int(b, "numeric.bins", 1) for b in bins_raw) if isinstance(bins_raw, list) else _int(bins_raw, "numeric.bins", 1)

    formats = tuple(output.get("formats", OUTPUT_FORMATS))
    bad = [f for f in formats if f not in OUTPUT_FORMATS]
    if bad:
        raise ConfigError(f"unsupported format(s) {', '.join(bad)}", key="output.formats")
    directory = str(output.get("directory", f"results/{kind}"))

    config = ExperimentConfig(
        family=family,
        params=dict(params),
        kind=kind,
        settings=settings,
        n_grid=n_grid,
        m=m,
        seed=seed,
        workers=workers,
        burn_in=burn_in,
        bins=bins,
        output_directory=directory,
        formats=formats,
        source=source,
    )
    try:
        system_obj = config.build_system()
    except SystemConfigError as exc:
        raise ConfigError(str(exc), key="system.params") from exc
    if kind in ("simulate", "hyptimes") and settings["along"] == "F" and "unstable_direction" not in system_obj.metadata:
        raise ConfigError(f"{family} has no centre-unstable direction to track", key="experiment.along")
    return replace(config, params=dict(system_obj.params))
