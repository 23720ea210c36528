"""Empirical physical measures, basin counting and Brin-Katok local entropy."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .diagnostics import lyapunov_spectrum, positive_exponent_sum
from .ensemble import (
    BlockOutcome,
    EndpointAccumulator,
    EnsembleTask,
    HistogramAccumulator,
    run_blocks,
    simulate_block,
    block_generator,
)
from .model import DomainSpec, DynamicalSystem, EstimationError, ModelError
from .observables import Observable

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-12
CENSORED_COUNT = 3
RUELLE_SLACK = 0.1


def _bin_shape(domain: DomainSpec, bins: int | Sequence[int]) -> tuple[int, ...]:
    shape = (int(bins),) * domain.dimension if np.isscalar(bins) else tuple(int(b) for b in bins)
    if len(shape) != domain.dimension or min(shape) < 2:
        raise EstimationError(f"need at least two bins per axis, got {shape}")
    return shape


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Histogram approximation of an invariant probability on a uniform bin grid."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    bins: tuple[int, ...]
    weights: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if min(self.bins) < 2:
            raise ModelError("an empirical measure needs at least two bins")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != self.bins:
            raise ModelError(f"weights have shape {w.shape}, expected {self.bins}")
        if np.any(w < 0.0) or abs(math.fsum(w.ravel()) - 1.0) > MASS_TOLERANCE:
            raise ModelError("weights must be nonnegative with total mass 1")

    @classmethod
    def from_counts(cls, domain: DomainSpec, bins: tuple[int, ...], counts: np.ndarray, diagnostics: dict | None = None) -> EmpiricalMeasure:
        counts = np.asarray(counts, dtype=float).reshape(bins)
        total = counts.sum()
        if total <= 0:
            raise EstimationError("no orbit points to build a measure from")
        return cls(domain.lower, domain.upper, bins, counts / total, dict(diagnostics or {}))

    @classmethod
    def uniform(cls, domain: DomainSpec, bins: int | Sequence[int]) -> EmpiricalMeasure:
        shape = _bin_shape(domain, bins)
        return cls(domain.lower, domain.upper, shape, np.full(shape, 1.0 / int(np.prod(shape))))

    @property
    def dimension(self) -> int:
        return len(self.bins)

    def edges(self, axis: int = 0) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.bins[axis] + 1)

    def midpoints(self) -> np.ndarray:
        """Bin centres, shape ``bins`` in 1-D and ``bins + (dim,)`` otherwise."""

        centres = [0.5 * (e[:-1] + e[1:]) for e in (self.edges(a) for a in range(self.dimension))]
        if self.dimension == 1:
            return centres[0]
        return np.stack(np.meshgrid(*centres, indexing="ij"), axis=-1)

    def integrate(self, phi: Observable) -> float:
        """Bin-midpoint quadrature of phi; exact when phi is constant on bins."""

        values = np.asarray(phi(self.midpoints().reshape(-1, self.dimension) if self.dimension > 1 else self.midpoints()))
        return math.fsum((self.weights.ravel() * values.ravel()).tolist())

    def l1_distance(self, other: EmpiricalMeasure | np.ndarray) -> float:
        w = other.weights if isinstance(other, EmpiricalMeasure) else np.asarray(other)
        return float(np.abs(self.weights - w).sum())

    def moments(self) -> tuple[list[float], list[float]]:
        mids = self.midpoints()
        if self.dimension == 1:
            mids = mids[:, None]
        flat = mids.reshape(-1, self.dimension)
        w = self.weights.ravel()
        mean = (w[:, None] * flat).sum(axis=0)
        var = (w[:, None] * (flat - mean) ** 2).sum(axis=0)
        return mean.tolist(), var.tolist()

    def support(self) -> list[list[float]]:
        occupied = np.argwhere(self.weights > 0.0)
        out = []
        for axis in range(self.dimension):
            e = self.edges(axis)
            out.append([float(e[occupied[:, axis].min()]), float(e[occupied[:, axis].max() + 1])])
        return out

    def to_rows(self) -> list[dict[str, Any]]:
        rows = []
        edges = [self.edges(a) for a in range(self.dimension)]
        for index in np.ndindex(*self.bins):
            row: dict[str, Any] = {}
            for axis, i in enumerate(index):
                row[f"lower_{axis}"] = f"{edges[axis][i]:.17g}"
                row[f"upper_{axis}"] = f"{edges[axis][i + 1]:.17g}"
            row["weight"] = f"{self.weights[index]:.17g}"
            rows.append(row)
        return rows

    def summary(self) -> dict[str, Any]:
        mean, var = self.moments()
        return {
            "bins": list(self.bins),
            "mean": mean,
            "variance": var,
            "support": self.support(),
            "diagnostics": dict(self.diagnostics),
        }


# ---------------------------------------------------------------- construction
@dataclass(frozen=True, eq=False)
class HistogramTask(EnsembleTask):
    system: DynamicalSystem
    burn_in: int
    n: int
    bins: tuple[int, ...]
    per_orbit: bool = False

    def simulate(self, rng: np.random.Generator, count: int) -> BlockOutcome:
        domain = self.system.domain
        steps = self.burn_in + self.n

        def accumulators(k: int) -> list:
            first = HistogramAccumulator(domain.lower, domain.upper, self.bins, self.burn_in, k)
            if not self.per_orbit:
                return [first]
            half = self.burn_in + self.n // 2
            return [
                first,
                HistogramAccumulator(domain.lower, domain.upper, self.bins, self.burn_in, k, stop=half),
                HistogramAccumulator(domain.lower, domain.upper, self.bins, half, k),
            ]

        outcome = simulate_block(self.system, rng, count, steps, accumulators)
        if not self.per_orbit:
            outcome.results = [outcome.results[0].sum(axis=0, keepdims=True)]
        return outcome


def empirical_measure(
    system: DynamicalSystem,
    m: int,
    burn_in: int,
    n: int,
    bins: int | Sequence[int],
    seed: int,
    workers: int = 1,
) -> EmpiricalMeasure:
    """Histogram of the pooled post-burn-in segments of m orbits of length n."""

    if burn_in < 0 or n < 1:
        raise EstimationError("burn_in must be >= 0 and n >= 1")
    shape = _bin_shape(system.domain, bins)
    outcome = run_blocks(HistogramTask(system, burn_in, n, shape), m, seed, workers)
    kept = m - outcome.dropped
    if kept <= 0:
        raise EstimationError(f"{system.name}: every start failed")
    counts = outcome.results[0].sum(axis=0)
    logger.info("%s: histogram from %d orbits (%d failures resampled)", system.name, kept, outcome.failures)
    return EmpiricalMeasure.from_counts(
        system.domain,
        shape,
        counts,
        {"orbits": kept, "points": int(counts.sum()), "failures": outcome.failures, "dropped": outcome.dropped},
    )


@dataclass
class BasinReport:
    count: int
    representatives: list[EmpiricalMeasure]
    labels: list[int]
    non_convergent: int
    failures: int

    def summary(self) -> dict[str, Any]:
        return {
            "basins": self.count,
            "members": [self.labels.count(k) for k in range(self.count)],
            "non_convergent": self.non_convergent,
            "failures": self.failures,
            "representatives": [rep.summary() for rep in self.representatives],
        }


def basin_count(
    system: DynamicalSystem,
    m: int,
    n: int,
    bins: int | Sequence[int],
    tol: float,
    seed: int,
    burn_in: int = 0,
    workers: int = 1,
) -> BasinReport:
    """Cluster per-start histograms by L1 distance; the cluster count estimates the number of physical measures.

    A start whose histograms over the two halves of its orbit differ by more than ``tol``
    is reported as non-convergent and left out of the clustering.
    """

    shape = _bin_shape(system.domain, bins)
    outcome = run_blocks(HistogramTask(system, burn_in, n, shape, per_orbit=True), m, seed, workers)
    whole, first, second = (np.asarray(r, dtype=float) for r in outcome.results)
    if not len(whole):
        raise EstimationError(f"{system.name}: every start failed")
    whole /= whole.sum(axis=1, keepdims=True)
    first /= np.maximum(first.sum(axis=1, keepdims=True), 1.0)
    second /= np.maximum(second.sum(axis=1, keepdims=True), 1.0)
    drift = np.abs(first - second).sum(axis=1)
    leaders: list[np.ndarray] = []
    members: list[list[int]] = []
    labels: list[int] = []
    non_convergent = 0
    for i, hist in enumerate(whole):
        if drift[i] > tol:
            non_convergent += 1
            labels.append(-1)
            continue
        for k, leader in enumerate(leaders):
            if np.abs(hist - leader).sum() <= tol:
                members[k].append(i)
                labels.append(k)
                break
        else:
            leaders.append(hist)
            members.append([i])
            labels.append(len(leaders) - 1)
    representatives = [
        EmpiricalMeasure.from_counts(system.domain, shape, whole[idx].mean(axis=0), {"starts": len(idx)}) for idx in members
    ]
    logger.info("%s: %d basin(s), %d non-convergent start(s)", system.name, len(leaders), non_convergent)
    return BasinReport(len(leaders), representatives, labels, non_convergent, outcome.failures)


def physical_integrals(measures: Sequence[EmpiricalMeasure], phi: Observable) -> list[float]:
    """phi-integrals of the empirical physical measures, used as stand-ins for equilibrium averages."""

    return [m.integrate(phi) for m in measures]


# ---------------------------------------------------------------- local entropy
@dataclass(frozen=True, eq=False)
class EndpointTask(EnsembleTask):
    system: DynamicalSystem
    burn_in: int

    def simulate(self, rng: np.random.Generator, count: int) -> BlockOutcome:
        dim = self.system.dimension
        return simulate_block(
            self.system, rng, count, self.burn_in + 1, lambda k: [EndpointAccumulator(self.burn_in, k, dim)]
        )


@dataclass(frozen=True, eq=False)
class EmpiricalOrbitSet:
    """Points distributed like the empirical physical measure: uniform starts pushed ``burn_in`` steps."""

    points: np.ndarray
    burn_in: int

    def __len__(self) -> int:
        return len(self.points)


def sample_orbit_set(system: DynamicalSystem, m: int, burn_in: int, seed: int, workers: int = 1) -> EmpiricalOrbitSet:
    outcome = run_blocks(EndpointTask(system, burn_in), m, seed, workers)
    if not len(outcome.results[0]):
        raise EstimationError(f"{system.name}: every start failed")
    return EmpiricalOrbitSet(outcome.results[0], burn_in)


def shadowing_counts(system: DynamicalSystem, points: np.ndarray, x: Any, n: int, eps: float) -> np.ndarray:
    """counts[i] = number of points whose first i+1 iterates stay eps-close to those of x."""

    centres = system.orbit(x, n)
    current = np.array(points, dtype=float, copy=True)
    inside = np.ones(len(current), dtype=bool)
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if i > 0:
            current = system.step(current)
            inside &= ~system.failure_mask(current)
        with np.errstate(invalid="ignore"):
            inside &= system.domain.distance(current, centres[i]) < eps
        counts[i] = int(inside.sum())
    return counts


@dataclass(frozen=True)
class LocalEntropyEstimate:
    value: float
    count: int
    reference_count: int
    n: int
    censored: bool


def local_entropy(
    system: DynamicalSystem,
    ensemble: EmpiricalOrbitSet,
    x: Any,
    n: int,
    eps: float,
    reference_length: int = 0,
) -> LocalEntropyEstimate:
    """Brin-Katok rate -(1/n) log m(B(x, n, eps)) from the fraction of ensemble points in the ball.

    A positive ``reference_length`` l takes the rate between the lengths l and n instead,
    -(log m(B(x, n, eps)) - log m(B(x, l, eps))) / (n - l), which removes the eps-dependent prefactor.
    An empty ball is replaced by a count of 3 and flagged censored (the value is then a lower bound).
    """

    if not 0 <= reference_length < n:
        raise EstimationError("reference length must lie in [0, n)")
    counts = shadowing_counts(system, ensemble.points, x, n, eps)
    m = len(ensemble)
    count = int(counts[-1])
    censored = count == 0
    if count < 10:
        logger.warning("%s: only %d ensemble points in the dynamical ball; the estimate is noisy", system.name, count)
    effective = CENSORED_COUNT if censored else count
    if reference_length == 0:
        reference, log_reference = m, 0.0
    else:
        reference = int(counts[reference_length - 1])
        if reference == 0:
            raise EstimationError(f"{system.name}: no ensemble point within eps of the reference point")
        log_reference = math.log(reference / m)
    value = -(math.log(effective / m) - log_reference) / (n - reference_length)
    return LocalEntropyEstimate(value, count, reference, n, censored)


@dataclass
class RuelleReport:
    local_entropies: list[LocalEntropyEstimate]
    mean_entropy: float
    exponents: list[float]
    sigma_plus: float
    passed: bool

    @property
    def gap(self) -> float:
        return self.sigma_plus - self.mean_entropy

    def summary(self) -> dict[str, Any]:
        return {
            "mean_local_entropy": self.mean_entropy,
            "lyapunov_exponents": self.exponents,
            "sigma_plus": self.sigma_plus,
            "gap": self.gap,
            "passed": self.passed,
            "censored": sum(1 for e in self.local_entropies if e.censored),
        }


def ruelle_check(
    system: DynamicalSystem,
    seed: int,
    m: int = 200_000,
    burn_in: int = 100,
    n: int = 8,
    eps: float = 0.05,
    references: int = 20,
    lyapunov_length: int = 100_000,
    reference_length: int = 2,
    workers: int = 1,
) -> RuelleReport:
    """Averaged local entropy at SRB-typical points against the sum of positive Lyapunov exponents."""

    ensemble = sample_orbit_set(system, m, burn_in, seed, workers)
    if len(ensemble) <= references:
        raise EstimationError("ensemble too small for the requested number of reference points")
    length = min(reference_length, n - 1)
    estimates = [local_entropy(system, ensemble, ensemble.points[i], n, eps, length) for i in range(references)]
    mean = math.fsum(e.value for e in estimates) / references
    rng = block_generator(seed, 1 << 40)
    exponents = lyapunov_spectrum(system, ensemble.points[0], lyapunov_length, rng)
    sigma_plus = positive_exponent_sum(exponents)
    passed = mean <= sigma_plus + RUELLE_SLACK
    logger.info("%s: local entropy %.4f vs sum of positive exponents %.4f", system.name, mean, sigma_plus)
    return RuelleReport(estimates, mean, exponents, sigma_plus, passed)
