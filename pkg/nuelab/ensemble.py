"""Deterministic orbit ensembles: counter-based streams, block sharding and accumulators.

Starts are split into fixed blocks of ``BLOCK_SIZE`` independent of the worker count.
Block ``b`` draws every random number it needs (starts, resampled starts, precision
refresh) from its own Philox stream keyed by the seed with counter ``[0, 0, 0, b]``, so
a block's outcome depends only on ``(seed, b)`` and merged results are bit-identical for
any number of workers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Callable, Sequence

import numpy as np
from scipy.stats import beta

from .model import DynamicalSystem, EstimationError, Region

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096
MAX_RETRIES = 8
HISTOGRAM_FLUSH = 256

Integrand = Callable[[np.ndarray], np.ndarray]


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(block)]))


def block_layout(m: int) -> list[tuple[int, int]]:
    if m < 1:
        raise EstimationError("ensemble size must be positive")
    return [(b, min(BLOCK_SIZE, m - b * BLOCK_SIZE)) for b in range((m + BLOCK_SIZE - 1) // BLOCK_SIZE)]


class KahanSum:
    """Element-wise compensated (Neumaier) accumulator."""

    def __init__(self, shape: tuple[int, ...] | int) -> None:
        self.total = np.zeros(shape)
        self.compensation = np.zeros(shape)

    def add(self, values: np.ndarray) -> None:
        t = self.total + values
        big = np.abs(self.total) >= np.abs(values)
        self.compensation += np.where(big, (self.total - t) + values, (values - t) + self.total)
        self.total = t

    @property
    def value(self) -> np.ndarray:
        return self.total + self.compensation


# ---------------------------------------------------------------- accumulators
class BirkhoffAccumulator:
    """Per-orbit sums sum_{j<n} g(f^j x) of several integrands, recorded at checkpoints n."""

    def __init__(self, integrands: Sequence[Integrand], checkpoints: Sequence[int], count: int) -> None:
        self.integrands = list(integrands)
        self.index = {n: i for i, n in enumerate(checkpoints)}
        self.sums = KahanSum((len(self.integrands), count))
        self.recorded = np.zeros((count, len(self.index), len(self.integrands)))

    def visit(self, step: int, points: np.ndarray, failed: np.ndarray) -> None:
        with np.errstate(all="ignore"):
            values = np.stack([np.asarray(g(points), dtype=float) for g in self.integrands])
            self.sums.add(np.where(failed, 0.0, values))
        slot = self.index.get(step + 1)
        if slot is not None:
            self.recorded[:, slot, :] = self.sums.value.T

    def result(self) -> np.ndarray:
        return self.recorded


class HistogramAccumulator:
    """Per-orbit visit counts of a uniform bin grid over the steps burn_in <= j < stop."""

    def __init__(
        self,
        lower: Sequence[float],
        upper: Sequence[float],
        bins: Sequence[int],
        burn_in: int,
        count: int,
        stop: int | None = None,
    ) -> None:
        self.lower = np.asarray(lower, dtype=float)
        self.span = np.asarray(upper, dtype=float) - self.lower
        self.bins = np.asarray(bins, dtype=int)
        self.total_bins = int(np.prod(self.bins))
        self.burn_in = burn_in
        self.stop = stop
        self.count = count
        self.counts = np.zeros(count * self.total_bins, dtype=np.int64)
        self.pending: list[np.ndarray] = []

    def bin_index(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        coords = pts[:, None] if pts.ndim == 1 else pts
        cells = np.floor((coords - self.lower) / self.span * self.bins).astype(np.int64)
        cells = np.clip(cells, 0, self.bins - 1)
        return np.ravel_multi_index(tuple(cells.T), tuple(self.bins))

    def visit(self, step: int, points: np.ndarray, failed: np.ndarray) -> None:
        if step < self.burn_in or (self.stop is not None and step >= self.stop):
            return
        flat = np.arange(self.count) * self.total_bins + self.bin_index(points)
        self.pending.append(flat[~failed])
        if len(self.pending) >= HISTOGRAM_FLUSH:
            self._flush()

    def _flush(self) -> None:
        if self.pending:
            self.counts += np.bincount(np.concatenate(self.pending), minlength=self.counts.size)
            self.pending = []

    def result(self) -> np.ndarray:
        self._flush()
        return self.counts.reshape(self.count, self.total_bins)


class EndpointAccumulator:
    """The point reached at a given step."""

    def __init__(self, step: int, count: int, dimension: int) -> None:
        self.step = step
        self.points = np.zeros(count if dimension == 1 else (count, dimension))

    def visit(self, step: int, points: np.ndarray, failed: np.ndarray) -> None:
        if step == self.step:
            self.points = np.array(points, copy=True)

    def result(self) -> np.ndarray:
        return self.points


# ---------------------------------------------------------------- iteration
def draw_starts(system: DynamicalSystem, rng: np.random.Generator, count: int, region: Region | None = None) -> np.ndarray:
    """Uniform starts on the domain (or on ``region``), redrawing points that are not valid."""

    def sample(k: int) -> np.ndarray:
        return region.sample(rng, k) if region is not None else system.domain.sample(rng, k)

    starts = sample(count)
    for _ in range(MAX_RETRIES):
        bad = system.failure_mask(starts)
        if not bad.any():
            break
        starts[bad] = sample(int(bad.sum()))
    return starts


def iterate_orbits(system: DynamicalSystem, starts: np.ndarray, steps: int, rng: np.random.Generator | None, accumulators) -> np.ndarray:
    """Advance every start ``steps - 1`` times, showing x_0, ..., x_{steps-1} to the accumulators.

    Returns the mask of orbits that hit the singular set or left the domain; their
    contributions are masked out from the failing step onwards.
    """

    points = np.array(starts, dtype=float, copy=True)
    failed = system.failure_mask(points)
    anchor = system.domain.wrap(np.asarray(system.domain.lower) + 0.5 * np.subtract(system.domain.upper, system.domain.lower))
    if system.dimension == 1:
        anchor = float(anchor[0])
    for step in range(steps):
        if step > 0:
            points = system.step(points, rng)
            failed |= system.failure_mask(points)
        if failed.any():
            points[failed] = anchor
        for acc in accumulators:
            acc.visit(step, points, failed)
    return failed


@dataclass
class BlockOutcome:
    results: list[np.ndarray]
    failures: int
    dropped: int


def simulate_block(
    system: DynamicalSystem,
    rng: np.random.Generator,
    count: int,
    steps: int,
    make_accumulators: Callable[[int], list],
    region: Region | None = None,
    refresh: bool = True,
) -> BlockOutcome:
    """Run one block; failed orbits are replaced by fresh starts from the same stream."""

    stream = rng if refresh else None
    starts = draw_starts(system, rng, count, region)
    accumulators = make_accumulators(count)
    failed = iterate_orbits(system, starts, steps, stream, accumulators)
    results = [acc.result() for acc in accumulators]
    pending = np.flatnonzero(failed)
    failures = len(pending)
    for _ in range(MAX_RETRIES):
        if not pending.size:
            break
        fresh = draw_starts(system, rng, pending.size, region)
        retry = make_accumulators(pending.size)
        again = iterate_orbits(system, fresh, steps, stream, retry)
        for merged, acc in zip(results, retry):
            merged[pending[~again]] = acc.result()[~again]
        pending = pending[again]
        failures += int(again.sum())
    keep = np.ones(count, dtype=bool)
    keep[pending] = False
    return BlockOutcome([res[keep] for res in results], failures, int(pending.size))


class EnsembleTask:
    """Picklable unit of work: ``simulate(rng, count)`` for one block of starts."""

    def simulate(self, rng: np.random.Generator, count: int) -> BlockOutcome:  # pragma: no cover - interface
        raise NotImplementedError

    def __call__(self, job: tuple[int, int, int]) -> BlockOutcome:
        seed, block, count = job
        outcome = self.simulate(block_generator(seed, block), count)
        logger.debug("block %d: %d starts, %d failures, %d dropped", block, count, outcome.failures, outcome.dropped)
        return outcome


def run_blocks(task: EnsembleTask, m: int, seed: int, workers: int = 1) -> BlockOutcome:
    """Evaluate ``task`` on every block of ``m`` starts and merge the outcomes in block order."""

    jobs = [(seed, block, count) for block, count in block_layout(m)]
    if workers > 1 and len(jobs) > 1:
        with Pool(processes=min(workers, len(jobs))) as pool:
            outcomes = pool.map(task, jobs)
    else:
        outcomes = [task(job) for job in jobs]
    merged = [np.concatenate([out.results[i] for out in outcomes]) for i in range(len(outcomes[0].results))]
    return BlockOutcome(
        merged,
        failures=sum(out.failures for out in outcomes),
        dropped=sum(out.dropped for out in outcomes),
    )


# ---------------------------------------------------------------- binomial summaries
def clopper_pearson(count: int, m: int, level: float = 0.95) -> tuple[float, float]:
    alpha = 1.0 - level
    low = 0.0 if count == 0 else float(beta.ppf(alpha / 2.0, count, m - count + 1))
    high = 1.0 if count == m else float(beta.ppf(1.0 - alpha / 2.0, count + 1, m - count))
    return low, high


@dataclass(frozen=True)
class BinomialEstimate:
    count: int
    m: int
    fraction: float
    ci_low: float
    ci_high: float
    censored: bool = False
    exact: bool = False

    @classmethod
    def from_counts(cls, count: int, m: int, level: float = 0.95) -> BinomialEstimate:
        if m < 1:
            raise EstimationError("no valid samples to estimate a fraction from")
        low, high = clopper_pearson(count, m, level)
        return cls(int(count), int(m), count / m, low, high, censored=count == 0)

    @classmethod
    def exact_value(cls, value: float) -> BinomialEstimate:
        return cls(0, 0, float(value), float(value), float(value), censored=False, exact=True)

    def scaled(self, factor: float) -> tuple[float, float, float]:
        return self.fraction * factor, self.ci_low * factor, self.ci_high * factor

    def to_payload(self) -> dict:
        return {
            "count": self.count,
            "m": self.m,
            "p_hat": self.fraction,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "censored": self.censored,
            "exact": self.exact,
        }
