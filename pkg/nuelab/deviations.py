"""Monte-Carlo estimates of the Lebesgue measure of deviation, tail and survivor sets,
exponential-rate fitting and the exact doubling-map oracle."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Literal, Sequence

import numpy as np
from scipy.stats import t as student_t

from . import intervals
from .diagnostics import recurrence_integrand
from .ensemble import BinomialEstimate, BirkhoffAccumulator, BlockOutcome, EnsembleTask, run_blocks, simulate_block
from .model import DynamicalSystem, EstimationError, Region, SystemConfigError
from .observables import Observable

logger = logging.getLogger(__name__)

DeviationMode = Literal["threshold", "equilibrium_distance"]

MIN_SAMPLES = 1000
CONFIDENCE = 0.95


# ---------------------------------------------------------------- experiment records
@dataclass(frozen=True, eq=False)
class DeviationExperiment:
    """B_n = {x : (1/n) S_n phi(x) >= c} in threshold mode, or
    {x : min_target |(1/n) S_n phi(x) - target| > omega} in equilibrium-distance mode,
    optionally intersected with the tail gate A_n = {x : (1/n) S_n Delta_delta(x) <= epsilon}."""

    system: DynamicalSystem
    observable: Observable
    n_grid: tuple[int, ...]
    m: int
    seed: int
    mode: DeviationMode = "threshold"
    c: float | None = None
    targets: tuple[float, ...] = ()
    omega: float | None = None
    gate: tuple[float, float] | None = None
    workers: int = 1
    exact: bool = False

    def __post_init__(self) -> None:
        if not self.n_grid:
            raise SystemConfigError("n_grid must not be empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or self.n_grid[0] < 1:
            raise SystemConfigError("n_grid must be strictly increasing positive integers")
        if self.m < MIN_SAMPLES and not self.exact:
            raise SystemConfigError(f"m must be at least {MIN_SAMPLES}")
        if self.mode == "threshold":
            if self.c is None:
                raise SystemConfigError("threshold mode needs c")
        elif self.mode == "equilibrium_distance":
            if self.omega is None or self.omega <= 0.0:
                raise SystemConfigError("equilibrium mode needs omega > 0")
            if not self.targets:
                raise SystemConfigError("equilibrium mode needs at least one target")
        else:
            raise SystemConfigError(f"unknown deviation mode '{self.mode}'")
        if self.gate is not None and (self.gate[0] <= 0.0 or self.gate[1] < 0.0):
            raise SystemConfigError("gate needs delta > 0 and epsilon >= 0")

    def to_payload(self) -> dict[str, Any]:
        return {
            "family": self.system.name,
            "params": dict(self.system.params),
            "observable": self.observable.to_payload(),
            "n_grid": list(self.n_grid),
            "m": self.m,
            "seed": self.seed,
            "mode": self.mode,
            "c": self.c,
            "targets": list(self.targets),
            "omega": self.omega,
            "gate": list(self.gate) if self.gate else None,
            "exact": self.exact,
        }


@dataclass
class RateEstimate:
    """Per-n fractions with confidence intervals and the fitted rate xi of p_n ~ C exp(-xi n)."""

    n_values: list[int]
    p_hat: list[float]
    ci_low: list[float]
    ci_high: list[float]
    censored: list[bool]
    xi: float
    xi_stderr: float
    xi_ci: tuple[float, float]
    log_c: float
    window: tuple[int, int]
    fitted_points: int

    @property
    def decay_detected(self) -> bool:
        return self.xi > 0.0 and self.xi_ci[0] > 0.0

    def to_payload(self) -> dict[str, Any]:
        return {
            "xi": self.xi,
            "xi_stderr": self.xi_stderr,
            "xi_ci": list(self.xi_ci),
            "log_C": self.log_c,
            "window": list(self.window),
            "fitted_points": self.fitted_points,
            "decay_detected": self.decay_detected,
            "censored_n": [n for n, c in zip(self.n_values, self.censored) if c],
        }


@dataclass
class FractionSeries:
    n_values: list[int]
    estimates: list[BinomialEstimate]
    failures: int = 0
    dropped: int = 0
    extras: dict[str, Any] = field(default_factory=dict)

    def as_fit_input(self) -> list[tuple[int, float, int | None]]:
        return [(n, e.fraction, None if e.exact else e.m) for n, e in zip(self.n_values, self.estimates)]

    def to_rows(self) -> list[dict[str, Any]]:
        return [
            {
                "n": n,
                "count": e.count,
                "m": e.m,
                "p_hat": f"{e.fraction:.17g}",
                "ci_low": f"{e.ci_low:.17g}",
                "ci_high": f"{e.ci_high:.17g}",
                "censored": int(e.censored),
            }
            for n, e in zip(self.n_values, self.estimates)
        ]


# ---------------------------------------------------------------- ensemble tasks
@dataclass(frozen=True, eq=False)
class BirkhoffTask(EnsembleTask):
    """Per-orbit Birkhoff sums of phi, Delta_delta and the exit indicator of K at every n in the grid."""

    system: DynamicalSystem
    checkpoints: tuple[int, ...]
    observable: Observable | None = None
    delta: float | None = None
    region: Region | None = None
    start_in_region: bool = False

    def integrands(self) -> list:
        out = []
        if self.observable is not None:
            out.append(self.observable)
        if self.delta is not None:
            out.append(recurrence_integrand(self.system, self.delta))
        if self.region is not None:
            region = self.region
            out.append(lambda p: (~region.contains(p)).astype(float))
        return out

    def simulate(self, rng: np.random.Generator, count: int) -> BlockOutcome:
        integrands = self.integrands()
        return simulate_block(
            self.system,
            rng,
            count,
            self.checkpoints[-1],
            lambda k: [BirkhoffAccumulator(integrands, self.checkpoints, k)],
            region=self.region if self.start_in_region else None,
        )


def _sums(task: BirkhoffTask, m: int, seed: int, workers: int) -> tuple[np.ndarray, BlockOutcome]:
    outcome = run_blocks(task, m, seed, workers)
    sums = outcome.results[0]
    if not len(sums):
        raise EstimationError(f"{task.system.name}: every start failed")
    if outcome.failures:
        logger.info("%s: %d failed starts resampled, %d dropped", task.system.name, outcome.failures, outcome.dropped)
    return sums, outcome


def _in_deviation_set(exp: DeviationExperiment, averages: np.ndarray) -> np.ndarray:
    if exp.mode == "threshold":
        return averages >= exp.c
    targets = np.asarray(exp.targets, dtype=float)
    return np.min(np.abs(averages[..., None] - targets), axis=-1) > exp.omega


def _shortcut(exp: DeviationExperiment) -> float | None:
    """Exact 0 or 1 when the threshold lies outside the range of phi."""

    if exp.mode != "threshold":
        return None
    low, high = exp.observable.value_range(exp.system.domain)
    if exp.c > high:
        return 0.0
    if exp.c <= low and exp.gate is None:
        return 1.0
    return None


def supports_exact_oracle(exp: DeviationExperiment) -> bool:
    return (
        exp.system.name == "doubling"
        and exp.observable.kind == "digit"
        and exp.mode == "threshold"
        and exp.gate is None
    )


def deviation_series(exp: DeviationExperiment) -> FractionSeries:
    """Fractions of uniform starts in B_n (and in A_n when gated) for every n in the grid."""

    shortcut = _shortcut(exp)
    if shortcut is not None:
        return FractionSeries(list(exp.n_grid), [BinomialEstimate.exact_value(shortcut) for _ in exp.n_grid], extras={"shortcut": True})
    if exp.exact:
        if not supports_exact_oracle(exp):
            raise EstimationError("exact deviation fractions are available for the doubling digit experiment only")
        values = [exact_doubling_oracle(n, exp.c) for n in exp.n_grid]
        return FractionSeries(list(exp.n_grid), [BinomialEstimate.exact_value(float(v)) for v in values], extras={"exact": [str(v) for v in values]})
    task = BirkhoffTask(exp.system, tuple(exp.n_grid), exp.observable, exp.gate[0] if exp.gate else None)
    sums, outcome = _sums(task, exp.m, exp.seed, exp.workers)
    n = np.asarray(exp.n_grid, dtype=float)
    hits = _in_deviation_set(exp, sums[:, :, 0] / n)
    if exp.gate is not None:
        hits &= sums[:, :, 1] / n <= exp.gate[1]
    counts = hits.sum(axis=0)
    kept = len(sums)
    estimates = [BinomialEstimate.from_counts(int(k), kept, CONFIDENCE) for k in counts]
    return FractionSeries(list(exp.n_grid), estimates, outcome.failures, outcome.dropped)


def deviation_fraction(exp: DeviationExperiment, n: int) -> BinomialEstimate:
    if n not in exp.n_grid:
        raise SystemConfigError(f"n={n} is not in the experiment's n_grid")
    series = deviation_series(exp)
    return series.estimates[series.n_values.index(n)]


def tail_series(system: DynamicalSystem, delta: float, epsilon: float, n_grid: Sequence[int], m: int, seed: int, workers: int = 1) -> FractionSeries:
    """Fractions of starts outside A_n, i.e. with (1/n) S_n Delta_delta > epsilon."""

    grid = tuple(n_grid)
    if not system.has_singular_set:
        return FractionSeries(list(grid), [BinomialEstimate.exact_value(0.0) for _ in grid], extras={"shortcut": True})
    sums, outcome = _sums(BirkhoffTask(system, grid, delta=delta), m, seed, workers)
    averages = sums[:, :, 0] / np.asarray(grid, dtype=float)
    counts = (averages > epsilon).sum(axis=0)
    estimates = [BinomialEstimate.from_counts(int(k), len(sums), CONFIDENCE) for k in counts]
    return FractionSeries(list(grid), estimates, outcome.failures, outcome.dropped)


def tail_fraction(system: DynamicalSystem, delta: float, epsilon: float, n: int, m: int, seed: int, workers: int = 1) -> BinomialEstimate:
    return tail_series(system, delta, epsilon, [n], m, seed, workers).estimates[0]


@dataclass(frozen=True)
class EscapeEstimate:
    relative: BinomialEstimate
    absolute: float
    absolute_ci: tuple[float, float]


def _covers_domain(system: DynamicalSystem, region: Region) -> bool:
    return region.dimension == system.dimension and any(
        all(lo <= dlo and hi >= dhi for (lo, hi), dlo, dhi in zip(box, system.domain.lower, system.domain.upper))
        for box in region.boxes
    )


def escape_series(
    system: DynamicalSystem,
    region: Region,
    n_grid: Sequence[int],
    m: int,
    seed: int,
    workers: int = 1,
    exact: bool = False,
) -> tuple[FractionSeries, list[EscapeEstimate]]:
    """Survivor fractions Leb{x in K : f^j x in K, j < n} / Leb(K) for every n in the grid."""

    grid = tuple(n_grid)
    leb_k = region.volume / system.domain.volume
    if leb_k <= 0.0:
        raise EstimationError("region K is empty")
    if _covers_domain(system, region):
        estimates = [BinomialEstimate.exact_value(1.0) for _ in grid]
        series = FractionSeries(list(grid), estimates, extras={"shortcut": True})
    elif exact:
        values = [intervals.survivor_measure_exact(system, region, n) / system.domain.volume for n in grid]
        series = FractionSeries(list(grid), [BinomialEstimate.exact_value(v / leb_k) for v in values], extras={"exact": True})
    else:
        task = BirkhoffTask(system, grid, region=region, start_in_region=True)
        sums, outcome = _sums(task, m, seed, workers)
        counts = (sums[:, :, 0] == 0.0).sum(axis=0)
        estimates = [BinomialEstimate.from_counts(int(k), len(sums), CONFIDENCE) for k in counts]
        series = FractionSeries(list(grid), estimates, outcome.failures, outcome.dropped)
    absolute = [EscapeEstimate(e, e.fraction * leb_k, (e.ci_low * leb_k, e.ci_high * leb_k)) for e in series.estimates]
    return series, absolute


def escape_survivor_fraction(system: DynamicalSystem, region: Region, n: int, m: int, seed: int, workers: int = 1, exact: bool = False) -> EscapeEstimate:
    return escape_series(system, region, [n], m, seed, workers, exact)[1][0]


def survivor_points(system: DynamicalSystem, region: Region, n: int, m: int, seed: int) -> np.ndarray:
    """Starts in K whose first n iterates all stay in K (single block, for inspection)."""

    rng = np.random.default_rng(seed)
    starts = region.sample(rng, m)
    current = starts.copy()
    alive = region.contains(current)
    for _ in range(1, n):
        current = system.step(current)
        alive &= region.contains(current) & ~system.failure_mask(current)
    return starts[alive]


# ---------------------------------------------------------------- rate fitting
def fit_exponential_rate(
    series: Sequence[tuple[int, float, int | None]],
    window: tuple[int, int] | None = None,
    level: float = CONFIDENCE,
) -> RateEstimate:
    """Weighted least squares of -log p_n on n.

    Each entry is (n, p_hat, m); m=None marks an exact value (unit weight, no CI).
    Zero fractions are replaced by the rule-of-three bound 3/m, flagged censored and
    left out of the fit. Weights are the inverse binomial variances of log p_hat.
    """

    rows = sorted(series)
    if window is not None:
        rows = [r for r in rows if window[0] <= r[0] <= window[1]]
    n_values, p_hat, ci_low, ci_high, censored = [], [], [], [], []
    xs, ys, ws = [], [], []
    for n, p, m in rows:
        if m is None:
            low = high = p
            flag = p <= 0.0
            value = p
        else:
            count = int(round(p * m))
            estimate = BinomialEstimate.from_counts(count, m, level)
            low, high, flag = estimate.ci_low, estimate.ci_high, estimate.censored
            value = 3.0 / m if flag else p
        n_values.append(int(n))
        p_hat.append(value)
        ci_low.append(low)
        ci_high.append(high)
        censored.append(bool(flag))
        if flag:
            continue
        xs.append(float(n))
        ys.append(-math.log(value))
        ws.append(1.0 if m is None else m * value / max(1.0 - value, 1.0 / m))
    if len(xs) < 3:
        raise EstimationError(f"need at least 3 uncensored points to fit a rate, got {len(xs)}")
    x = np.asarray(xs)
    y = np.asarray(ys)
    w = np.asarray(ws)
    x_bar = np.sum(w * x) / np.sum(w)
    y_bar = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - x_bar) ** 2)
    if sxx <= 0.0:
        raise EstimationError("rate fit needs at least two distinct n")
    xi = float(np.sum(w * (x - x_bar) * (y - y_bar)) / sxx)
    intercept = float(y_bar - xi * x_bar)
    residual = y - (intercept + xi * x)
    dof = len(x) - 2
    scale = float(np.sum(w * residual**2) / dof) if dof > 0 else 0.0
    if all(m is not None for _, _, m in rows):
        scale = max(scale, 1.0)
    stderr = math.sqrt(scale / sxx)
    half = float(student_t.ppf(0.5 + level / 2.0, max(dof, 1))) * stderr
    return RateEstimate(
        n_values=n_values,
        p_hat=p_hat,
        ci_low=ci_low,
        ci_high=ci_high,
        censored=censored,
        xi=xi,
        xi_stderr=stderr,
        xi_ci=(xi - half, xi + half),
        log_c=-intercept,
        window=(n_values[0], n_values[-1]),
        fitted_points=len(x),
    )


# ---------------------------------------------------------------- exact oracle
def exact_doubling_oracle(n: int, c: float) -> Fraction:
    """2^-n sum_{k >= ceil(c n)} C(n, k): the measure of {x : (1/n) S_n digit(x) >= c} for x -> 2x mod 1."""

    if n < 1 or n > 1000:
        raise ValueError("the exact oracle supports 1 <= n <= 1000")
    threshold = max(0, math.ceil(Fraction(repr(float(c))) * n))
    if threshold > n:
        return Fraction(0)
    return Fraction(sum(math.comb(n, k) for k in range(threshold, n + 1)), 2**n)
