"""Orbit-level statistics: Birkhoff sums, NUE and slow-recurrence averages, hyperbolic times,
Lyapunov exponents, Jacobian sums and dynamical-ball volumes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Literal, Sequence

import numpy as np

from . import intervals
from .ensemble import BinomialEstimate, block_generator, draw_starts
from .model import DynamicalSystem, EstimationError, HitSingularSet, SystemConfigError
from .observables import Observable

logger = logging.getLogger(__name__)

ORBIT_CHUNK = 1_000_000
REORTHONORMALIZATION_PERIOD = 10
TANGENT_WARMUP = 50
TIE_TOLERANCE = 1e-9

RecurrenceIndexing = Literal["paper_literal", "reversed"]


# ---------------------------------------------------------------- orbit helpers
def orbit_chunks(system: DynamicalSystem, x: Any, n: int, rng: np.random.Generator | None = None) -> Iterator[np.ndarray]:
    """Yield f^0 x, ..., f^{n-1} x in consecutive chunks."""

    if n < 1:
        raise ValueError("orbit length must be at least 1")
    start = np.asarray(x, dtype=float)
    if rng is None:
        rng = system.refresh_stream(start)
    produced = 0
    while produced < n:
        size = min(ORBIT_CHUNK, n - produced)
        try:
            chunk = system.orbit(start, size, rng)
        except HitSingularSet as exc:
            raise type(exc)(f"{system.name}: iterate {produced + (exc.index or 0)} hit the singular set", index=produced + (exc.index or 0), point=exc.point) from exc
        yield chunk
        produced += size
        start = system.step(chunk[-1], rng)
        if produced < n:
            system.check_point(start, produced)


def orbit_sum(system: DynamicalSystem, fn, x: Any, n: int, rng: np.random.Generator | None = None) -> float:
    """S_n g(x) for a vectorised g, accumulated chunk by chunk with correctly rounded partials."""

    partials = []
    for chunk in orbit_chunks(system, x, n, rng):
        with np.errstate(all="ignore"):
            partials.append(math.fsum(np.asarray(fn(chunk), dtype=float)))
    return math.fsum(partials)


# ---------------------------------------------------------------- averages
def birkhoff_average(system: DynamicalSystem, phi: Observable, x: Any, n: int, rng: np.random.Generator | None = None) -> float:
    return orbit_sum(system, phi, x, n, rng) / n


def nue_statistic(system: DynamicalSystem, x: Any, n: int, rng: np.random.Generator | None = None) -> float:
    """(1/n) S_n psi with psi = log ||Df^{-1}||; NUE shows up as a value bounded away below 0."""

    return orbit_sum(system, system.log_inverse_norm, x, n, rng) / n


def sum_log_jacobian(system: DynamicalSystem, x: Any, n: int, rng: np.random.Generator | None = None) -> float:
    return orbit_sum(system, system.log_jacobian, x, n, rng)


# ---------------------------------------------------------------- truncated distance
def smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def truncate_distance(d: np.ndarray, delta: float) -> np.ndarray:
    """d_delta = xi d + 1 - xi with xi = 1 below delta, 0 above 2 delta and a quintic bridge between."""

    if delta <= 0.0:
        raise SystemConfigError("delta must be positive")
    d = np.asarray(d, dtype=float)
    xi = 1.0 - smoothstep((d - delta) / delta)
    with np.errstate(invalid="ignore"):
        return np.where(d >= 2.0 * delta, 1.0, xi * d + 1.0 - xi)


def delta_log_from_distance(d: np.ndarray, delta: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.abs(np.log(truncate_distance(d, delta)))


def recurrence_integrand(system: DynamicalSystem, delta: float):
    """Delta_delta as a vectorised function of points."""

    def integrand(points: np.ndarray) -> np.ndarray:
        return delta_log_from_distance(system.singular_distance(points), delta)

    return integrand


def truncated_distance(system: DynamicalSystem, x: Any, delta: float) -> float:
    d = float(system.singular_distance(np.asarray(x, dtype=float)))
    if not d > 0.0:
        raise HitSingularSet(f"{system.name}: point lies on the singular set", index=0, point=x)
    return float(truncate_distance(d, delta))


def delta_log(system: DynamicalSystem, x: Any, delta: float) -> float:
    return abs(math.log(truncated_distance(system, x, delta)))


def slow_recurrence_statistic(system: DynamicalSystem, x: Any, n: int, delta: float, rng: np.random.Generator | None = None) -> float:
    if not system.has_singular_set:
        return 0.0
    return orbit_sum(system, recurrence_integrand(system, delta), x, n, rng) / n


# ---------------------------------------------------------------- hyperbolic times
@dataclass(frozen=True)
class HyperbolicTimeParams:
    sigma: float
    delta: float = 0.1
    b: float = 0.5
    recurrence_indexing: RecurrenceIndexing = "paper_literal"

    def __post_init__(self) -> None:
        if not 0.0 < self.sigma < 1.0:
            raise SystemConfigError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.delta <= 0.0 or self.b <= 0.0:
            raise SystemConfigError("delta and b must be positive")
        if self.recurrence_indexing not in ("paper_literal", "reversed"):
            raise SystemConfigError(f"unknown recurrence indexing '{self.recurrence_indexing}'")

    def to_payload(self) -> dict[str, Any]:
        return {"sigma": self.sigma, "delta": self.delta, "b": self.b, "recurrence_indexing": self.recurrence_indexing}


def backward_contraction_times(psi: np.ndarray, log_sigma: float) -> np.ndarray:
    """Boolean array ok[n-1] for n = 1..len(psi): sum_{j=n-k}^{n-1} psi_j <= k log sigma for all 1 <= k <= n.

    With Q_m = sum_{j<m} psi_j - m log sigma the condition reads Q_n <= min_{m<n} Q_m.
    """

    q = np.concatenate(([0.0], np.cumsum(psi))) - log_sigma * np.arange(len(psi) + 1)
    running_min = np.minimum.accumulate(q[:-1])
    return q[1:] <= running_min + TIE_TOLERANCE


def recurrence_ok(delta_values: np.ndarray, b: float, indexing: RecurrenceIndexing) -> np.ndarray:
    """Boolean array ok[n-1] for the recurrence part of the hyperbolic-time condition."""

    idx = np.arange(len(delta_values))
    if indexing == "paper_literal":
        # Delta_delta(f^k x) <= b k for k = 0..n-1: a prefix property
        good = delta_values <= b * idx + TIE_TOLERANCE
        return np.logical_and.accumulate(good)
    # Delta_delta(f^j x) <= b (n - j) for j = 0..n-1
    worst = np.maximum.accumulate(delta_values + b * idx)
    return worst <= b * (idx + 1) + TIE_TOLERANCE


def _hyperbolic_inputs(system: DynamicalSystem, x: Any, n_max: int, params: HyperbolicTimeParams, rng) -> tuple[np.ndarray, np.ndarray | None]:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    points = system.orbit(x, n_max, rng)
    psi = system.log_inverse_norm(points)
    if not system.has_singular_set:
        return psi, None
    return psi, delta_log_from_distance(system.singular_distance(points), params.delta)


def hyperbolic_times(system: DynamicalSystem, x: Any, n_max: int, params: HyperbolicTimeParams, rng: np.random.Generator | None = None) -> list[int]:
    psi, delta_values = _hyperbolic_inputs(system, x, n_max, params, rng)
    ok = backward_contraction_times(psi, math.log(params.sigma))
    if delta_values is not None:
        ok &= recurrence_ok(delta_values, params.b, params.recurrence_indexing)
    return [int(n) for n in np.flatnonzero(ok) + 1]


def hyperbolic_times_reference(system: DynamicalSystem, x: Any, n_max: int, params: HyperbolicTimeParams, rng: np.random.Generator | None = None) -> list[int]:
    """Direct double loop over (n, k); quadratic in n_max."""

    psi, delta_values = _hyperbolic_inputs(system, x, n_max, params, rng)
    log_sigma = math.log(params.sigma)
    times = []
    for n in range(1, n_max + 1):
        good = True
        for k in range(1, n + 1):
            if float(np.sum(psi[n - k : n])) > k * log_sigma + TIE_TOLERANCE:
                good = False
                break
        if good and delta_values is not None:
            for k in range(n):
                if params.recurrence_indexing == "paper_literal":
                    value, bound = delta_values[k], params.b * k
                else:
                    value, bound = delta_values[n - 1 - k], params.b * (k + 1)
                if value > bound + TIE_TOLERANCE:
                    good = False
                    break
        if good:
            times.append(n)
    return times


def hyperbolic_time_density(times: Sequence[int], N: int) -> float:
    if N < 1:
        raise ValueError("N must be at least 1")
    return sum(1 for t in times if 1 <= t <= N) / N


# ---------------------------------------------------------------- Lyapunov exponents
def lyapunov_spectrum(
    system: DynamicalSystem,
    x: Any,
    n: int,
    rng: np.random.Generator | None = None,
    warmup: int = TANGENT_WARMUP,
    period: int = REORTHONORMALIZATION_PERIOD,
) -> list[float]:
    """Exponents in descending order.

    1-D: (1/n) sum log|f'|. 2-D: the derivative cocycle is applied to an orthonormal frame
    which is re-orthonormalised by QR every ``period`` steps; the first ``warmup`` steps only
    align the frame and the average runs over f^warmup x, ..., f^{warmup+n-1} x.
    """

    if n < 1:
        raise ValueError("orbit length must be at least 1")
    if system.dimension == 1:
        return [sum_log_jacobian(system, x, n, rng) / n]
    frame = np.eye(system.dimension)
    logs = np.zeros(system.dimension)
    applied = 0
    total = warmup + n
    for chunk_index, chunk in enumerate(orbit_chunks(system, x, total, rng)):
        jac = system.derivative(chunk)
        for j in range(len(jac)):
            frame = jac[j] @ frame
            applied += 1
            if applied % period == 0 or applied == total or applied == warmup:
                frame, r = np.linalg.qr(frame)
                if applied > warmup:
                    logs += np.log(np.abs(np.diag(r)))
    return sorted((logs / n).tolist(), reverse=True)


def positive_exponent_sum(exponents: Sequence[float]) -> float:
    return math.fsum(e for e in exponents if e > 0.0)


# ---------------------------------------------------------------- dynamical balls
@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    ci_low: float
    ci_high: float
    count: int = 0
    m: int = 0
    exact: bool = False


def dynamical_ball_volume(
    system: DynamicalSystem,
    x: Any,
    n: int,
    r: float,
    m: int = 100_000,
    seed: int = 0,
    exact: bool = False,
) -> VolumeEstimate:
    """Lebesgue measure of B(x, n, r) = {y : d(f^i x, f^i y) < r, i < n}."""

    if r <= 0.0:
        raise SystemConfigError("ball radius must be positive")
    if exact:
        value = intervals.ball_measure_exact(system, float(x), n, r)
        return VolumeEstimate(value, value, value, exact=True)
    if m < 1000:
        raise EstimationError("Monte-Carlo ball volumes need at least 1000 samples")
    centres = system.orbit(x, n)
    rng = block_generator(seed, 0)
    points = draw_starts(system, rng, m)
    inside = np.ones(m, dtype=bool)
    for i in range(n):
        if i > 0:
            points = system.step(points, rng)
            inside &= ~system.failure_mask(points)
        with np.errstate(invalid="ignore"):
            inside &= system.domain.distance(points, centres[i]) < r
    estimate = BinomialEstimate.from_counts(int(inside.sum()), m)
    value, low, high = estimate.scaled(system.domain.volume)
    return VolumeEstimate(value, low, high, estimate.count, m)


# ---------------------------------------------------------------- summaries
CSV_COLUMNS = (
    "start",
    "n",
    "birkhoff",
    "S_n_psi",
    "S_n_delta",
    "S_n_J",
    "min_singular_distance",
    "hyperbolic_times",
)


@dataclass
class OrbitSummary:
    start: tuple[float, ...]
    n: int
    birkhoff_sums: dict[str, float]
    sum_psi: float
    sum_delta: float
    sum_jacobian: float
    min_singular_distance: float
    hyperbolic_times: list[int] = field(default_factory=list)

    def to_row(self) -> dict[str, Any]:
        """One CSV row; Birkhoff sums are joined as name=value pairs in observable order."""

        return {
            "start": " ".join(f"{c:.17g}" for c in self.start),
            "n": self.n,
            "birkhoff": ";".join(f"{k}={v:.17g}" for k, v in self.birkhoff_sums.items()),
            "S_n_psi": f"{self.sum_psi:.17g}",
            "S_n_delta": f"{self.sum_delta:.17g}",
            "S_n_J": f"{self.sum_jacobian:.17g}",
            "min_singular_distance": f"{self.min_singular_distance:.17g}",
            "hyperbolic_times": " ".join(str(t) for t in self.hyperbolic_times),
        }


def summarize_orbit(
    system: DynamicalSystem,
    x: Any,
    n: int,
    observables: Sequence[Observable],
    params: HyperbolicTimeParams | None = None,
    rng: np.random.Generator | None = None,
) -> OrbitSummary:
    points = system.orbit(x, n, rng)
    with np.errstate(all="ignore"):
        psi = system.log_inverse_norm(points)
        jac = system.log_jacobian(points)
        distances = system.singular_distance(points)
    delta = params.delta if params else 0.1
    deltas = delta_log_from_distance(distances, delta) if system.has_singular_set else np.zeros(n)
    times: list[int] = []
    if params is not None:
        ok = backward_contraction_times(psi, math.log(params.sigma))
        if system.has_singular_set:
            ok &= recurrence_ok(deltas, params.b, params.recurrence_indexing)
        times = [int(t) for t in np.flatnonzero(ok) + 1]
    return OrbitSummary(
        start=tuple(np.atleast_1d(np.asarray(x, dtype=float)).tolist()),
        n=n,
        birkhoff_sums={phi.name: math.fsum(phi(points)) for phi in observables},
        sum_psi=math.fsum(psi),
        sum_delta=math.fsum(deltas),
        sum_jacobian=math.fsum(jac),
        min_singular_distance=float(np.min(distances)),
        hyperbolic_times=times,
    )
