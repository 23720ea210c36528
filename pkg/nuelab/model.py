"""State spaces, dynamical systems and the error hierarchy shared by every estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Literal, Mapping

import numpy as np

DomainKind = Literal["interval", "circle", "cylinder", "torus"]

PointMap = Callable[[np.ndarray], np.ndarray]

# Philox key of the default refresh streams; ensemble streams are keyed by the run seed
REFRESH_KEY = 0x6E75656C6162


class NuelabError(RuntimeError):
    """Root of every error raised by the laboratory."""


class DynamicsError(NuelabError):
    """Raised when an orbit cannot be continued."""

    def __init__(self, message: str, *, index: int | None = None, point: Any = None) -> None:
        super().__init__(message)
        self.index = index
        self.point = point


class HitSingularSet(DynamicsError):
    """An iterate landed exactly on the singular set."""


class LeftDomain(DynamicsError):
    """An iterate left the declared state space."""


class ConeViolation(DynamicsError):
    """A tracked tangent vector left the unstable cone."""


class SystemConfigError(NuelabError, ValueError):
    """Raised for unknown families, out-of-range parameters or rejected constructions."""


class EstimationError(NuelabError):
    """Raised when an estimator cannot produce a value from its inputs."""


class ModelError(NuelabError, ValueError):
    """Raised for invalid Markov models and measures."""


class ConfigError(NuelabError):
    """Raised when an experiment config cannot be parsed or validated."""

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None, key: str | None = None) -> None:
        location = f" (line {line}, column {column})" if line is not None else ""
        prefix = f"{key}: " if key else ""
        super().__init__(f"{prefix}{message}{location}")
        self.line = line
        self.column = column
        self.key = key


class SchemaError(NuelabError):
    """Raised when a result summary does not match the shipped schema."""


@dataclass(frozen=True)
class DomainSpec:
    kind: DomainKind
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    periodic: tuple[bool, ...]

    def __post_init__(self) -> None:
        if not (len(self.lower) == len(self.upper) == len(self.periodic)):
            raise SystemConfigError("domain bounds and wrap flags must share a dimension")
        for lo, hi in zip(self.lower, self.upper):
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise SystemConfigError(f"invalid domain bounds [{lo}, {hi}]")

    @classmethod
    def interval(cls, lower: float, upper: float) -> DomainSpec:
        return cls("interval", (float(lower),), (float(upper),), (False,))

    @classmethod
    def circle(cls) -> DomainSpec:
        return cls("circle", (0.0,), (1.0,), (True,))

    @classmethod
    def cylinder(cls, lower: float, upper: float) -> DomainSpec:
        return cls("cylinder", (0.0, float(lower)), (1.0, float(upper)), (True, False))

    @classmethod
    def torus(cls) -> DomainSpec:
        return cls("torus", (0.0, 0.0), (1.0, 1.0), (True, True))

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Apply the mod-1 identification on periodic axes; idempotent."""

        pts = np.asarray(points, dtype=float)
        if self.dimension == 1:
            if self.periodic[0]:
                pts = np.mod(pts - self.lower[0], self.upper[0] - self.lower[0]) + self.lower[0]
            return pts
        pts = pts.copy()
        for axis, periodic in enumerate(self.periodic):
            if periodic:
                span = self.upper[axis] - self.lower[axis]
                pts[..., axis] = np.mod(pts[..., axis] - self.lower[axis], span) + self.lower[axis]
        return pts

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.dimension == 1:
            return np.isfinite(pts) & (pts >= self.lower[0]) & (pts <= self.upper[0])
        inside = np.all(np.isfinite(pts), axis=-1)
        for axis in range(self.dimension):
            inside &= (pts[..., axis] >= self.lower[axis]) & (pts[..., axis] <= self.upper[axis])
        return inside

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform (normalised Lebesgue) samples."""

        if self.dimension == 1:
            return rng.uniform(self.lower[0], self.upper[0], size=count)
        return rng.uniform(self.lower, self.upper, size=(count, self.dimension))

    def displacement(self, points: np.ndarray, reference: np.ndarray) -> np.ndarray:
        """Shortest signed displacement from reference to points under the wrap rule."""

        delta = np.asarray(points, dtype=float) - np.asarray(reference, dtype=float)
        if self.dimension == 1:
            if self.periodic[0]:
                span = self.upper[0] - self.lower[0]
                delta = delta - span * np.round(delta / span)
            return delta
        delta = np.array(delta, dtype=float, copy=True)
        for axis, periodic in enumerate(self.periodic):
            if periodic:
                span = self.upper[axis] - self.lower[axis]
                delta[..., axis] -= span * np.round(delta[..., axis] / span)
        return delta

    def distance(self, points: np.ndarray, reference: np.ndarray) -> np.ndarray:
        delta = self.displacement(points, reference)
        if self.dimension == 1:
            return np.abs(delta)
        return np.linalg.norm(delta, axis=-1)

    def describe(self) -> str:
        bounds = " x ".join(f"[{lo:g}, {hi:g}]" for lo, hi in zip(self.lower, self.upper))
        return f"{self.kind} {bounds}"


@dataclass(frozen=True)
class Region:
    """Axis-aligned union of boxes inside a domain, used as an escape set K."""

    boxes: tuple[tuple[tuple[float, float], ...], ...]

    @classmethod
    def from_intervals(cls, intervals: list[tuple[float, float]] | list[list[float]]) -> Region:
        return cls(tuple(((float(lo), float(hi)),) for lo, hi in intervals))

    @classmethod
    def from_boxes(cls, boxes: list) -> Region:
        return cls(tuple(tuple((float(lo), float(hi)) for lo, hi in box) for box in boxes))

    @property
    def dimension(self) -> int:
        return len(self.boxes[0]) if self.boxes else 0

    @property
    def volume(self) -> float:
        return float(sum(np.prod([hi - lo for lo, hi in box]) for box in self.boxes))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        coords = pts[..., None] if self.dimension == 1 else pts
        inside = np.zeros(coords.shape[:-1], dtype=bool)
        for box in self.boxes:
            hit = np.ones(coords.shape[:-1], dtype=bool)
            for axis, (lo, hi) in enumerate(box):
                hit &= (coords[..., axis] >= lo) & (coords[..., axis] <= hi)
            inside |= hit
        return inside

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform samples on the union, boxes chosen proportionally to volume."""

        volumes = np.array([np.prod([hi - lo for lo, hi in box]) for box in self.boxes])
        if volumes.sum() <= 0.0:
            raise EstimationError("region K is empty")
        choice = rng.choice(len(self.boxes), size=count, p=volumes / volumes.sum())
        dim = self.dimension
        out = np.empty((count, dim))
        unit = rng.random((count, dim))
        for idx, box in enumerate(self.boxes):
            rows = choice == idx
            for axis, (lo, hi) in enumerate(box):
                out[rows, axis] = lo + (hi - lo) * unit[rows, axis]
        return out[:, 0] if dim == 1 else out

    def to_payload(self) -> list:
        return [[list(edge) for edge in box] for box in self.boxes]


@dataclass(frozen=True, eq=False)
class DynamicalSystem:
    """A map of a state space together with its derivative and distance to the singular set.

    Map, derivative and singular distance are vectorised: 1-D systems take arrays of shape
    ``(m,)``, 2-D systems arrays of shape ``(m, 2)``; derivatives come back as ``(m,)`` or
    ``(m, 2, 2)``. Values are pure functions of the point.
    """

    name: str
    domain: DomainSpec
    map_fn: PointMap
    derivative_fn: PointMap
    singular_distance_fn: PointMap
    params: Mapping[str, Any] = field(default_factory=dict)
    metadata: Mapping[str, Any] = field(default_factory=dict)
    nonflat: tuple[float, float] | None = None
    refresh: tuple[float, ...] | None = None
    scalar_map: Callable[[float], float] | None = None

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def has_singular_set(self) -> bool:
        return bool(self.metadata.get("singular", False))

    def __reduce__(self):
        from nuelab.systems import build_system

        return (build_system, (self.name, dict(self.params)))

    # ---------------------------------------------------------------- pointwise
    def apply(self, points: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return self.map_fn(np.asarray(points, dtype=float))

    def derivative(self, points: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return self.derivative_fn(np.asarray(points, dtype=float))

    def singular_distance(self, points: np.ndarray) -> np.ndarray:
        return self.singular_distance_fn(np.asarray(points, dtype=float))

    def log_inverse_norm(self, points: np.ndarray) -> np.ndarray:
        """psi = log ||Df^{-1}||: -log|f'| in 1-D, -log of the smallest singular value in 2-D."""

        jac = self.derivative(points)
        with np.errstate(divide="ignore"):
            if self.dimension == 1:
                return -np.log(np.abs(jac))
            return -np.log(np.linalg.svd(jac, compute_uv=False)[..., -1])

    def log_jacobian(self, points: np.ndarray) -> np.ndarray:
        """J = log|det Df|."""

        jac = self.derivative(points)
        with np.errstate(divide="ignore"):
            if self.dimension == 1:
                return np.log(np.abs(jac))
            return np.log(np.abs(np.linalg.det(jac)))

    # ---------------------------------------------------------------- orbits
    def failure_mask(self, points: np.ndarray) -> np.ndarray:
        """True where a point is outside the domain or exactly on the singular set."""

        pts = np.asarray(points, dtype=float)
        bad = ~self.domain.contains(pts)
        if self.has_singular_set:
            with np.errstate(invalid="ignore"):
                bad |= ~(self.singular_distance(pts) > 0)
        return bad

    def refresh_stream(self, x: Any) -> np.random.Generator | None:
        """Deterministic refresh stream for a single orbit started at x; None when no refresh applies.

        The Philox counter is the bit pattern of the start point, so every start has its own stream
        and repeated calls from the same start reproduce the same orbit.
        """

        if self.refresh is None:
            return None
        bits = np.ascontiguousarray(np.asarray(x, dtype=np.float64).ravel()[:3]).view(np.uint64)
        counter = np.zeros(4, dtype=np.uint64)
        counter[: len(bits)] = bits
        counter[3] = 1
        return np.random.Generator(np.random.Philox(key=REFRESH_KEY, counter=counter))

    def step(self, points: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """One application of the map with the wrap rule and optional precision refresh."""

        image = self.apply(points)
        if rng is not None and self.refresh is not None:
            scale = self.refresh[0] if self.dimension == 1 else np.asarray(self.refresh)
            image = image + rng.random(np.shape(image)) * scale
        return self.domain.wrap(image)

    def check_point(self, point: Any, index: int = 0) -> None:
        pts = np.asarray(point, dtype=float)
        if not bool(np.all(self.domain.contains(pts))):
            raise LeftDomain(f"{self.name}: iterate {index} left {self.domain.describe()}", index=index, point=point)
        if self.has_singular_set and not bool(np.all(self.singular_distance(pts) > 0)):
            raise HitSingularSet(f"{self.name}: iterate {index} hit the singular set", index=index, point=point)

    def orbit(self, x: Any, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Return the points x, f(x), ..., f^{n-1}(x).

        Raises HitSingularSet / LeftDomain at the first offending iterate.
        """

        if n < 1:
            raise ValueError("orbit length must be at least 1")
        start = np.asarray(x, dtype=float)
        self.check_point(start, 0)
        if rng is None:
            rng = self.refresh_stream(start)
        shape = (n,) if self.dimension == 1 else (n, self.dimension)
        points = np.empty(shape)
        points[0] = start
        if self.scalar_map is not None and rng is None:
            fn = self.scalar_map
            current = float(start)
            i = 1
            try:
                while i < n:
                    current = fn(current)
                    points[i] = current
                    i += 1
            except ZeroDivisionError as exc:
                raise HitSingularSet(f"{self.name}: iterate {i} hit the singular set", index=i) from exc
            except OverflowError as exc:
                raise LeftDomain(f"{self.name}: iterate {i} overflowed", index=i) from exc
        else:
            current = start
            for i in range(1, n):
                current = self.step(current, rng)
                points[i] = current
        bad = self.failure_mask(points)
        if bad.any():
            first = int(np.argmax(bad))
            self.check_point(points[first], first)
            raise LeftDomain(f"{self.name}: iterate {first} is not a valid point", index=first, point=points[first])
        return points

    def advance(self, x: Any, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """f^n(x) for a single point."""

        if n == 0:
            return np.asarray(x, dtype=float)
        current = np.asarray(x, dtype=float)
        if rng is None:
            rng = self.refresh_stream(current)
        for i in range(1, n + 1):
            current = self.step(current, rng)
            self.check_point(current, i)
        return current

    def pretty_print(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items())) or "defaults"
        singular = "nonempty" if self.has_singular_set else "empty"
        return (
            f"System: {self.name} ({params})\n"
            f"Domain: {self.domain.describe()}\n"
            f"Singular set: {singular}\n"
            f"Non-flat constants: {self.nonflat if self.nonflat else 'n/a'}"
        )
