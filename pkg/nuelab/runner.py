"""Experiment execution: one handler per experiment kind, dispatched from the config."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy.stats import binom

from . import deviations, measures, partial_hyperbolic, variational
from .config import ExperimentConfig
from .diagnostics import (
    CSV_COLUMNS,
    HyperbolicTimeParams,
    hyperbolic_time_density,
    hyperbolic_times,
    hyperbolic_times_reference,
    summarize_orbit,
)
from .ensemble import block_generator, draw_starts
from .model import DynamicalSystem, DynamicsError, EstimationError, ModelError
from .observables import Observable
from .partial_hyperbolic import has_splitting

logger = logging.getLogger(__name__)

ORACLE_BAND = 0.999
NUE_ORBITS = 8

Column = tuple[str, str]


@dataclass
class ChartSeries:
    """-(1/n) log p_n against n, with the variational prediction when one exists."""

    title: str
    n_values: list[int]
    rates: list[float]
    bound: float | None = None
    fitted: float | None = None


@dataclass
class ExperimentResult:
    kind: str
    columns: list[Column]
    rows: list[dict[str, Any]]
    results: dict[str, Any] = field(default_factory=dict)
    chart: ChartSeries | None = None


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _starts(system: DynamicalSystem, config: ExperimentConfig, count: int) -> np.ndarray:
    explicit = config.settings.get("starts")
    if explicit:
        return np.asarray(explicit, dtype=float)
    return draw_starts(system, block_generator(config.seed, 0), count)


def _orbit_stream(system: DynamicalSystem, seed: int, index: int) -> np.random.Generator | None:
    # single orbits of refreshed systems get their own stream, disjoint from the start stream
    return block_generator(seed, index + 1) if system.refresh is not None else None


def _resolve_along(settings: dict[str, Any], system: DynamicalSystem) -> str:
    along = settings.get("along", "auto")
    if along == "auto":
        return "F" if has_splitting(system) else "full"
    return along


def _hyperbolic_params(settings: dict[str, Any]) -> HyperbolicTimeParams:
    return HyperbolicTimeParams(
        sigma=float(settings["sigma"]),
        delta=float(settings["delta"]),
        b=float(settings["b"]),
        recurrence_indexing=settings["recurrence_indexing"],
    )


def _rate_curve(title: str, series: deviations.FractionSeries, bound: float | None, fitted: float | None) -> ChartSeries:
    ns, rates = [], []
    for n, est in zip(series.n_values, series.estimates):
        if est.fraction > 0.0 and not est.censored:
            ns.append(n)
            rates.append(-math.log(est.fraction) / n)
    return ChartSeries(title, ns, rates, bound, fitted)


def _fit(series: deviations.FractionSeries, window: list[int] | None) -> dict[str, Any]:
    try:
        estimate = deviations.fit_exponential_rate(series.as_fit_input(), tuple(window) if window else None)
    except EstimationError as exc:
        logger.warning("rate fit skipped: %s", exc)
        return {"status": "unavailable", "reason": str(exc)}
    logger.info("[fit] complete")
    return {"status": "ok", **estimate.to_payload()}


FRACTION_COLUMNS: list[Column] = [
    ("n", "iterations"),
    ("count", "starts"),
    ("m", "starts"),
    ("p_hat", "fraction"),
    ("ci_low", "fraction"),
    ("ci_high", "fraction"),
    ("censored", "flag"),
    ("rate", "1/iteration"),
]


def _fraction_rows(series: deviations.FractionSeries) -> list[dict[str, Any]]:
    rows = series.to_rows()
    for row, est in zip(rows, series.estimates):
        row["rate"] = _fmt(-math.log(est.fraction) / row["n"]) if est.fraction > 0.0 else "inf"
    return rows


# ---------------------------------------------------------------- handlers
def run_simulate(config: ExperimentConfig, system: DynamicalSystem) -> ExperimentResult:
    settings = config.settings
    observables = [Observable.from_payload(o) for o in settings["observables"]]
    params = _hyperbolic_params(settings)
    n = config.n_grid[-1]
    along = _resolve_along(settings, system)
    rows, failures = [], []
    for i, x in enumerate(_starts(system, config, int(settings["orbits"]))):
        try:
            if along == "F":
                summary = partial_hyperbolic.ph_summarize_orbit(system, x, n, observables, params, int(settings["warmup"]))
            else:
                summary = summarize_orbit(system, x, n, observables, params, _orbit_stream(system, config.seed, i))
        except DynamicsError as exc:
            failures.append({"start": i, "error": str(exc), "index": exc.index})
            continue
        rows.append(summary.to_row())
    units = dict(zip(CSV_COLUMNS, ("point", "iterations", "sum", "log", "log", "log", "distance", "iterations")))
    return ExperimentResult(
        "simulate",
        [(c, units[c]) for c in CSV_COLUMNS],
        rows,
        {"orbits": len(rows), "along": along, "failures": failures, "hyperbolic_time_params": params.to_payload()},
    )


def run_hyptimes(config: ExperimentConfig, system: DynamicalSystem) -> ExperimentResult:
    settings = config.settings
    n_max = config.n_grid[-1]
    along = _resolve_along(settings, system)
    params = _hyperbolic_params(settings)
    densities = []
    mismatches = 0
    failures = 0
    for i, x in enumerate(_starts(system, config, int(settings["orbits"]))):
        rng = _orbit_stream(system, config.seed, i)
        try:
            if along == "F":
                times = partial_hyperbolic.ph_hyperbolic_times(system, x, n_max, params.sigma, warmup=int(settings["warmup"]))
            else:
                times = hyperbolic_times(system, x, n_max, params, rng)
                if settings["verify_reference"]:
                    again = _orbit_stream(system, config.seed, i)
                    if hyperbolic_times_reference(system, x, n_max, params, again) != times:
                        mismatches += 1
        except DynamicsError:
            failures += 1
            continue
        densities.append([hyperbolic_time_density(times, N) for N in config.n_grid])
    if not densities:
        raise EstimationError(f"{system.name}: every orbit failed")
    table = np.asarray(densities)
    rows = [
        {
            "N": N,
            "mean_density": _fmt(float(np.mean(table[:, j]))),
            "min_density": _fmt(float(np.min(table[:, j]))),
            "positive_fraction": _fmt(float(np.mean(table[:, j] > 0.0))),
        }
        for j, N in enumerate(config.n_grid)
    ]
    results: dict[str, Any] = {
        "along": along,
        "orbits": len(densities),
        "failures": failures,
        "positive_fraction": float(np.mean(table[:, -1] > 0.0)),
        "params": params.to_payload(),
    }
    if len(config.n_grid) > 1:
        results["cauchy_gap"] = float(np.max(np.abs(table[:, -1] - table[:, -2])))
    if settings["verify_reference"] and along == "full":
        results["reference_mismatches"] = mismatches
    if along == "F":
        fit = partial_hyperbolic.fit_cone_contraction(system, seed=config.seed)
        results["cone_fit"] = {"lambda": fit.lam, "max_aperture": fit.max_aperture, "samples": fit.samples}
    columns = [("N", "iterations"), ("mean_density", "fraction"), ("min_density", "fraction"), ("positive_fraction", "fraction")]
    return ExperimentResult("hyptimes", columns, rows, results)


def run_measure(config: ExperimentConfig, system: DynamicalSystem) -> ExperimentResult:
    settings = config.settings
    n = config.n_grid[-1]
    measure = measures.empirical_measure(system, config.m, config.burn_in, n, config.bins, config.seed, config.workers)
    logger.info("[ensemble] complete")
    results: dict[str, Any] = {"measure": measure.summary()}
    observables = [Observable.from_payload(o) for o in settings["observables"]]
    results["integrals"] = {phi.name: measure.integrate(phi) for phi in observables}
    if settings["basins"]:
        report = measures.basin_count(
            system, int(settings["basin_starts"]), n, config.bins, float(settings["tol"]), config.seed, config.burn_in, config.workers
        )
        results["basins"] = report.summary()
    rows = measure.to_rows()
    columns = [(key, "fraction" if key == "weight" else "coordinate") for key in rows[0]]
    return ExperimentResult("measure", columns, rows, results)


def _doubling_oracle(series: deviations.FractionSeries, c: float) -> list[dict[str, Any]]:
    out = []
    for n, est in zip(series.n_values, series.estimates):
        exact = deviations.exact_doubling_oracle(n, c)
        entry: dict[str, Any] = {"n": n, "exact": f"{exact.numerator}/{exact.denominator}", "exact_value": float(exact)}
        if not est.exact:
            low, high = binom.interval(ORACLE_BAND, est.m, float(exact))
            entry["inside_band"] = bool(low <= est.count <= high)
        out.append(entry)
    return out


def run_deviate(config: ExperimentConfig, system: DynamicalSystem) -> ExperimentResult:
    settings = config.settings
    phi = config.observable()
    targets = settings["targets"]
    if settings["mode"] == "equilibrium_distance" and not targets:
        report = measures.basin_count(system, 64, config.n_grid[-1], config.bins, 0.05, config.seed, config.burn_in, config.workers)
        targets = measures.physical_integrals(report.representatives, phi)
        logger.info("%s: equilibrium targets from %d physical measure(s): %s", system.name, report.count, targets)
    gate = settings["gate"]
    experiment = deviations.DeviationExperiment(
        system=system,
        observable=phi,
        n_grid=config.n_grid,
        m=config.m,
        seed=config.seed,
        mode=settings["mode"],
        c=settings["c"],
        targets=tuple(float(t) for t in targets or ()),
        omega=settings["omega"],
        gate=(float(gate["delta"]), float(gate["epsilon"])) if gate else None,
        workers=config.workers,
        exact=bool(settings["exact"]),
    )
    series = deviations.deviation_series(experiment)
    logger.info("[ensemble] complete")
    results: dict[str, Any] = {
        "experiment": experiment.to_payload(),
        "fractions": [e.to_payload() for e in series.estimates],
        "failures": series.failures,
        "dropped": series.dropped,
        "fit": _fit(series, settings["window"]),
    }
    bound = None
    if has_splitting(system):
        starts = draw_starts(system, block_generator(config.seed, 0), NUE_ORBITS)
        values = [partial_hyperbolic.ph_nue_statistic(system, x, config.n_grid[-1]) for x in starts]
        results["nue_along_F"] = {"mean": float(np.mean(values)), "max": float(np.max(values)), "orbits": NUE_ORBITS}
    if settings["bound"] and settings["mode"] == "threshold":
        try:
            model = variational.markov_model_for(system, phi)
            bound = variational.rate_bound(model, float(settings["c"]))
            results["rate_bound"] = {"value": bound, "model": model.to_payload(), "exact_model": True}
        except ModelError as exc:
            results["rate_bound"] = {"value": None, "reason": str(exc)}
    if settings["mode"] == "threshold" and deviations.supports_exact_oracle(experiment) and config.n_grid[-1] <= 1000:
        results["oracle"] = _doubling_oracle(series, float(settings["c"]))
    fitted = results["fit"].get("xi")
    chart = _rate_curve(f"{system.name}: deviation rate", series, -bound if bound is not None else None, fitted)
    return ExperimentResult("deviate", FRACTION_COLUMNS, _fraction_rows(series), results, chart)


def run_escape(config: ExperimentConfig, system: DynamicalSystem) -> ExperimentResult:
    settings = config.settings
    region = config.region()
    series, absolute = deviations.escape_series(
        system, region, config.n_grid, config.m, config.seed, config.workers, bool(settings["exact"])
    )
    logger.info("[ensemble] complete")
    rows = _fraction_rows(series)
    for row, est in zip(rows, absolute):
        row["absolute"] = _fmt(est.absolute)
        row["absolute_ci_low"] = _fmt(est.absolute_ci[0])
        row["absolute_ci_high"] = _fmt(est.absolute_ci[1])
    columns = FRACTION_COLUMNS + [("absolute", "lebesgue"), ("absolute_ci_low", "lebesgue"), ("absolute_ci_high", "lebesgue")]
    results = {
        "region": region.to_payload(),
        "region_volume": region.volume,
        "exact": bool(settings["exact"]),
        "failures": series.failures,
        "dropped": series.dropped,
        "fit": _fit(series, settings["window"]),
    }
    chart = _rate_curve(f"{system.name}: escape rate", series, None, results["fit"].get("xi"))
    return ExperimentResult("escape", columns, rows, results, chart)


def run_tail(config: ExperimentConfig, system: DynamicalSystem) -> ExperimentResult:
    settings = config.settings
    series = deviations.tail_series(
        system, float(settings["delta"]), float(settings["epsilon"]), config.n_grid, config.m, config.seed, config.workers
    )
    logger.info("[ensemble] complete")
    results = {
        "delta": settings["delta"],
        "epsilon": settings["epsilon"],
        "failures": series.failures,
        "dropped": series.dropped,
        "fit": _fit(series, settings["window"]),
    }
    chart = _rate_curve(f"{system.name}: recurrence tail", series, None, results["fit"].get("xi"))
    return ExperimentResult("tail", FRACTION_COLUMNS, _fraction_rows(series), results, chart)


def _load_model(config: ExperimentConfig, system: DynamicalSystem) -> variational.MarkovModel:
    source = config.settings["model"]
    if source == "auto":
        return variational.markov_model_for(system, config.observable())
    if isinstance(source, dict):
        return variational.MarkovModel.from_json(source)
    path = Path(str(source))
    if config.source and not path.is_absolute():
        path = Path(config.source).parent / path
    return variational.MarkovModel.from_json(path.read_text(encoding="utf-8"))


def run_bound(config: ExperimentConfig, system: DynamicalSystem) -> ExperimentResult:
    settings = config.settings
    model = _load_model(config, system)
    grid = int(settings["bruteforce_grid"])
    rows = []
    for c in settings["c_values"]:
        row: dict[str, Any] = {"c": _fmt(float(c))}
        try:
            bound = variational.solve_rate_bound(model, float(c))
            row.update(rate_bound=_fmt(bound.value), t_star=_fmt(bound.t_star), regime=bound.regime)
        except ModelError as exc:
            logger.warning("c=%s: %s", c, exc)
            row.update(rate_bound="nan", t_star="nan", regime="infeasible")
        if grid > 0 and row["regime"] != "infeasible":
            row["bruteforce"] = _fmt(variational.rate_bound_bruteforce(model, float(c), grid))
        rows.append(row)
    columns: list[Column] = [("c", "average"), ("rate_bound", "1/iteration"), ("t_star", "tilt"), ("regime", "label")]
    if grid > 0:
        columns.append(("bruteforce", "1/iteration"))
    t_grid = [float(t) for t in settings["t_grid"]]
    results = {
        "model": model.to_payload(),
        # False when the model was supplied by hand: the bound is then a comparator only
        "exact_model": settings["model"] == "auto",
        "pressure": {"t": t_grid, "P": variational.pressure_curve(model, t_grid).tolist()},
        "equilibrium_average": float(variational.tilted_equilibrium(model, 0.0).stationary @ model.phi),
        "bounds": [{k: row[k] for k in ("c", "rate_bound", "regime")} for row in rows],
    }
    return ExperimentResult("bound", columns, rows, results)


def run_ruelle_check(config: ExperimentConfig, system: DynamicalSystem) -> ExperimentResult:
    settings = config.settings
    report = measures.ruelle_check(
        system,
        config.seed,
        m=config.m,
        burn_in=config.burn_in,
        n=int(settings["n"]),
        eps=float(settings["eps"]),
        references=int(settings["references"]),
        lyapunov_length=int(settings["lyapunov_length"]),
        reference_length=int(settings["reference_length"]),
        workers=config.workers,
    )
    logger.info("[ensemble] complete")
    rows = [
        {
            "reference": i,
            "local_entropy": _fmt(e.value),
            "count": e.count,
            "reference_count": e.reference_count,
            "censored": int(e.censored),
        }
        for i, e in enumerate(report.local_entropies)
    ]
    columns = [("reference", "index"), ("local_entropy", "nats/iteration"), ("count", "points"), ("reference_count", "points"), ("censored", "flag")]
    return ExperimentResult("ruelle_check", columns, rows, report.summary())


HANDLERS: dict[str, Callable[[ExperimentConfig, DynamicalSystem], ExperimentResult]] = {
    "simulate": run_simulate,
    "hyptimes": run_hyptimes,
    "measure": run_measure,
    "deviate": run_deviate,
    "escape": run_escape,
    "tail": run_tail,
    "bound": run_bound,
    "ruelle_check": run_ruelle_check,
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    system = config.build_system()
    logger.info("%s", system.pretty_print().replace("\n", "; "))
    result = HANDLERS[config.kind](config, system)
    logger.debug("%s result: %s", config.kind, json.dumps(result.results, default=str)[:500])
    return result
