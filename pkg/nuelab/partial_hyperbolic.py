"""Cone fields and centre-unstable expansion for partially hyperbolic torus maps.

The F direction is never computed as a bundle: a tangent vector started inside the
unstable cone is pushed forward with Df and renormalised, and domination aligns it with
F exponentially fast. All orbit quantities are read from f^warmup(x) onward.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .diagnostics import TANGENT_WARMUP, HyperbolicTimeParams, OrbitSummary, backward_contraction_times, summarize_orbit
from .ensemble import block_generator
from .model import ConeViolation, DynamicalSystem, SystemConfigError
from .observables import Observable

logger = logging.getLogger(__name__)

CONE_TOLERANCE = 1e-9
CONE_RAYS = 9
DEFAULT_DELTA0 = 0.1


@dataclass(frozen=True)
class ConeField:
    """Constant splitting E + F with cones E^a = {|v_F| <= a |v_E|} and F^b = {|v_E| <= b |v_F|}."""

    e: tuple[float, float]
    f: tuple[float, float]
    a: float
    b: float

    def __post_init__(self) -> None:
        if not (0.0 < self.a < 1.0 and 0.0 < self.b < 1.0):
            raise SystemConfigError("cone widths must lie in (0, 1)")
        if abs(np.linalg.det(self.basis)) < 1e-12:
            raise SystemConfigError("cone directions E and F are parallel")

    @classmethod
    def for_system(cls, system: DynamicalSystem, a: float | None = None, b: float | None = None) -> ConeField:
        meta = system.metadata
        if "unstable_direction" not in meta or "stable_direction" not in meta:
            raise SystemConfigError(f"{system.name} has no dominated splitting")
        widths = meta.get("cone", {})
        return cls(
            tuple(meta["stable_direction"]),
            tuple(meta["unstable_direction"]),
            float(a if a is not None else widths.get("a", 0.15)),
            float(b if b is not None else widths.get("b", 0.2)),
        )

    @property
    def basis(self) -> np.ndarray:
        return np.column_stack([self.e, self.f])

    def components(self, v: np.ndarray) -> np.ndarray:
        """Coordinates (v_E, v_F) of vectors in the splitting; shape (..., 2)."""

        return np.asarray(v, dtype=float) @ np.linalg.inv(self.basis).T

    def aperture(self, v: np.ndarray) -> np.ndarray:
        """|v_E| / |v_F|: the smallest b with v in F^b."""

        c = self.components(v)
        with np.errstate(divide="ignore"):
            return np.abs(c[..., 0]) / np.abs(c[..., 1])

    def e_aperture(self, v: np.ndarray) -> np.ndarray:
        c = self.components(v)
        with np.errstate(divide="ignore"):
            return np.abs(c[..., 1]) / np.abs(c[..., 0])

    def contains(self, v: np.ndarray, width: float | None = None) -> np.ndarray:
        return self.aperture(v) <= (self.b if width is None else width) + CONE_TOLERANCE

    def project(self, v: Sequence[float]) -> np.ndarray:
        """Tilt v into the cone F^{b/2} by shrinking its E component; the F component is kept."""

        c = self.components(np.asarray(v, dtype=float))
        if c[1] == 0.0:
            raise ConeViolation("vector is parallel to E and cannot be tilted into the unstable cone")
        limit = 0.5 * self.b * abs(c[1])
        c_e = float(np.clip(c[0], -limit, limit))
        out = c_e * np.asarray(self.e) + c[1] * np.asarray(self.f)
        return out / np.linalg.norm(out)

    def f_rays(self, count: int = CONE_RAYS) -> np.ndarray:
        """Unit vectors spanning F^b from one boundary ray to the other."""

        t = np.linspace(-self.b, self.b, count)
        rays = np.asarray(self.f)[None, :] + t[:, None] * np.asarray(self.e)[None, :]
        return rays / np.linalg.norm(rays, axis=1, keepdims=True)

    def e_rays(self, count: int = CONE_RAYS) -> np.ndarray:
        t = np.linspace(-self.a, self.a, count)
        rays = np.asarray(self.e)[None, :] + t[:, None] * np.asarray(self.f)[None, :]
        return rays / np.linalg.norm(rays, axis=1, keepdims=True)

    def to_payload(self) -> dict[str, Any]:
        return {"E": list(self.e), "F": list(self.f), "a": self.a, "b": self.b}


def has_splitting(system: DynamicalSystem) -> bool:
    return system.dimension == 2 and "unstable_direction" in system.metadata and "stable_direction" in system.metadata


# ---------------------------------------------------------------- tracking along F
def _initial_vector(cone: ConeField, v0: Sequence[float] | None) -> np.ndarray:
    v = np.asarray(cone.f if v0 is None else v0, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ConeViolation("initial tangent vector is zero", index=0)
    return v / norm


def _f_log_stretches(
    system: DynamicalSystem,
    x: Any,
    n: int,
    v0: Sequence[float] | None,
    warmup: int,
    cone: ConeField,
) -> tuple[np.ndarray, np.ndarray]:
    """log ||Df v_j|| for j = warmup .. warmup + n - 1 and the final unit vector."""

    point = np.asarray(x, dtype=float)
    v = _initial_vector(cone, v0)
    if not bool(cone.contains(v)):
        raise ConeViolation(f"{system.name}: initial vector is outside the unstable cone", index=0, point=point)
    logs = np.empty(n)
    for j in range(warmup + n):
        image = system.derivative(point) @ v
        stretch = float(np.linalg.norm(image))
        if j >= warmup:
            logs[j - warmup] = math.log(stretch)
        v = image / stretch
        point = system.step(point)
        if not bool(cone.contains(v)):
            raise ConeViolation(
                f"{system.name}: tracked vector left the unstable cone at iterate {j + 1} (aperture {float(cone.aperture(v)):.3g})",
                index=j + 1,
                point=point,
            )
    return logs, v


def track_f_direction(
    system: DynamicalSystem,
    x: Any,
    n: int,
    v0: Sequence[float] | None = None,
    cone: ConeField | None = None,
) -> np.ndarray:
    """Df^n(x) v0 normalised; raises ConeViolation if the vector leaves F^b on the way."""

    cone = cone or ConeField.for_system(system)
    if n == 0:
        return _initial_vector(cone, v0)
    _, v = _f_log_stretches(system, x, n, v0, 0, cone)
    return v


def f_jacobian_sum(
    system: DynamicalSystem,
    x: Any,
    n: int,
    v0: Sequence[float] | None = None,
    warmup: int = TANGENT_WARMUP,
    cone: ConeField | None = None,
) -> float:
    """S_n J along F: sum of log ||Df | F|| over n iterates after the warm-up."""

    cone = cone or ConeField.for_system(system)
    logs, _ = _f_log_stretches(system, x, n, v0, warmup, cone)
    return math.fsum(logs)


def ph_nue_statistic(
    system: DynamicalSystem,
    x: Any,
    n: int,
    v0: Sequence[float] | None = None,
    warmup: int = TANGENT_WARMUP,
    cone: ConeField | None = None,
) -> float:
    """(1/n) sum log ||(Df | F)^{-1}||; negative for maps expanding along F."""

    if n < 1:
        raise ValueError("n must be at least 1")
    return -f_jacobian_sum(system, x, n, v0, warmup, cone) / n


def ph_hyperbolic_times(
    system: DynamicalSystem,
    x: Any,
    n_max: int,
    sigma: float,
    v0: Sequence[float] | None = None,
    warmup: int = TANGENT_WARMUP,
    cone: ConeField | None = None,
) -> list[int]:
    """n <= n_max with prod_{j=n-k+1}^{n} ||(Df | F_{f^j x})^{-1}|| <= sigma^k for all 1 <= k <= n."""

    if not 0.0 < sigma < 1.0:
        raise SystemConfigError(f"sigma must lie in (0, 1), got {sigma}")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    cone = cone or ConeField.for_system(system)
    logs, _ = _f_log_stretches(system, x, n_max + 1, v0, warmup, cone)
    ok = backward_contraction_times(-logs[1:], math.log(sigma))
    return [int(n) for n in np.flatnonzero(ok) + 1]


def ph_summarize_orbit(
    system: DynamicalSystem,
    x: Any,
    n: int,
    observables: Sequence[Observable],
    params: HyperbolicTimeParams | None = None,
    warmup: int = TANGENT_WARMUP,
    cone: ConeField | None = None,
) -> OrbitSummary:
    """Orbit summary with psi and J taken along F.

    Birkhoff sums run over x, ..., f^{n-1} x; S_n psi, S_n J and the hyperbolic times
    are read from f^warmup x onward, as in ph_hyperbolic_times.
    """

    summary = summarize_orbit(system, x, n, observables)
    cone = cone or ConeField.for_system(system)
    total = f_jacobian_sum(system, x, n, warmup=warmup, cone=cone)
    times = ph_hyperbolic_times(system, x, n, params.sigma, warmup=warmup, cone=cone) if params is not None else []
    return replace(summary, sum_psi=-total, sum_jacobian=total, hyperbolic_times=times)


# ---------------------------------------------------------------- conditions (A)-(D)
@dataclass
class ConditionReport:
    passed: bool
    failures: list[str]
    margins: dict[str, float]
    sigma1: float
    sigma2: float
    delta0: float
    delta0_margin: float
    lam: float
    samples: int
    region: dict[str, Any] = field(default_factory=dict)

    def summary(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "failures": list(self.failures),
            "margins": dict(self.margins),
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "delta0": self.delta0,
            "delta0_margin": self.delta0_margin,
            "lambda": self.lam,
            "samples": self.samples,
            "region": self.region,
        }


def _region_frame(system: DynamicalSystem) -> dict[str, Any] | None:
    region = system.metadata.get("region")
    if not region:
        return None
    return {
        "center": tuple(region["center"]),
        "radius_u": float(region["radius_u"]),
        "radius_s": float(region["radius_s"]),
    }


def _in_region(system: DynamicalSystem, region: dict[str, Any], points: np.ndarray) -> np.ndarray:
    e_u = np.asarray(system.metadata["unstable_direction"])
    e_s = np.asarray(system.metadata["stable_direction"])
    disp = points - np.asarray(region["center"])
    disp = disp - np.round(disp)
    return (np.abs(disp @ e_u) < region["radius_u"]) & (np.abs(disp @ e_s) < region["radius_s"])


def _sample_points(system: DynamicalSystem, samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Half the samples uniform on the torus, half inside the region V when it exists."""

    rng = block_generator(seed, 0)
    region = _region_frame(system)
    if region is None:
        points = system.domain.sample(rng, samples)
        return points, np.zeros(samples, dtype=bool)
    inner = samples // 2
    u = rng.uniform(-region["radius_u"], region["radius_u"], inner)
    s = rng.uniform(-region["radius_s"], region["radius_s"], inner)
    e_u = np.asarray(system.metadata["unstable_direction"])
    e_s = np.asarray(system.metadata["stable_direction"])
    local = np.asarray(region["center"]) + u[:, None] * e_u + s[:, None] * e_s
    points = np.vstack([system.domain.wrap(local), system.domain.sample(rng, samples - inner)])
    return points, _in_region(system, region, points)


def _ray_images(derivatives: np.ndarray, rays: np.ndarray) -> np.ndarray:
    """Images D_x r for every sample x and ray r; shape (samples, rays, 2)."""

    return np.einsum("nij,rj->nri", derivatives, rays)


def check_conditions_ABCD(
    system: DynamicalSystem,
    samples: int = 4000,
    seed: int = 0,
    cone: ConeField | None = None,
) -> ConditionReport:
    """Numeric check of the cone, volume expansion, closeness and slow-down conditions.

    (A) Df maps F^b into F^{lam b} and Df^{-1} maps E^a into E^{lam a} with lam < 1.
    (B) every F-cone vector is stretched by more than sigma1 > 1 and every E-cone vector
        is contracted below 1/sigma1.
    (C) outside V, ||(Df | F)^{-1}|| and ||Df | E|| stay below sigma2 < 1.
    (D) inside V, ||(Df | F)^{-1}|| < 1 + delta0.
    ``delta0_margin`` evaluates (D) on the reference F direction of the linear map.
    """

    if system.dimension != 2:
        raise SystemConfigError("conditions (A)-(D) are defined for torus maps")
    cone = cone or ConeField.for_system(system)
    delta0 = float(system.metadata.get("delta0", DEFAULT_DELTA0))
    points, inside = _sample_points(system, samples, seed)
    derivatives = system.derivative(points)

    f_images = _ray_images(derivatives, cone.f_rays())
    f_stretch = np.linalg.norm(f_images, axis=-1)
    f_aperture = cone.aperture(f_images)

    inverses = np.linalg.inv(derivatives)
    e_back = _ray_images(inverses, cone.e_rays())
    e_aperture = cone.e_aperture(e_back)
    e_norm = np.linalg.norm(_ray_images(derivatives, cone.e_rays()), axis=-1)

    lam_f = float(np.max(f_aperture)) / cone.b
    lam_e = float(np.max(e_aperture)) / cone.a
    lam = max(lam_f, lam_e)

    min_f = np.min(f_stretch, axis=1)
    max_e = np.max(e_norm, axis=1)
    sigma1 = float(min(np.min(min_f), 1.0 / np.max(max_e)))

    outside = ~inside
    if outside.any():
        sigma2 = float(max(np.max(1.0 / min_f[outside]), np.max(max_e[outside])))
    else:
        sigma2 = math.nan
    slow = inside if inside.any() else np.ones(len(points), dtype=bool)
    worst_inverse = float(np.max(1.0 / min_f[slow]))

    axis_images = np.einsum("nij,j->ni", derivatives[slow], np.asarray(cone.f))
    axis_inverse = float(np.max(1.0 / np.linalg.norm(axis_images, axis=-1)))

    margins = {
        "A": 1.0 - lam,
        "B": sigma1 - 1.0,
        "C": 1.0 - sigma2 if not math.isnan(sigma2) else math.inf,
        "D": 1.0 + delta0 - worst_inverse,
    }
    descriptions = {
        "A": f"(A) cones not invariant: lambda={lam:.4g}",
        "B": f"(B) no uniform volume expansion: sigma1={sigma1:.4g}",
        "C": f"(C) not hyperbolic outside V: sigma2={sigma2:.4g}",
        "D": f"(D) too much contraction in V: ||(Df|F)^-1||={worst_inverse:.4g} >= 1+delta0={1.0 + delta0:.4g}",
    }
    failures = [descriptions[key] for key, margin in margins.items() if not margin > 0.0]
    report = ConditionReport(
        passed=not failures,
        failures=failures,
        margins=margins,
        sigma1=sigma1,
        sigma2=sigma2,
        delta0=delta0,
        delta0_margin=1.0 + delta0 - axis_inverse,
        lam=lam,
        samples=len(points),
        region=_region_frame(system) or {},
    )
    logger.debug("%s: conditions %s, margins %s", system.name, "passed" if report.passed else "failed", margins)
    return report


@dataclass(frozen=True)
class ConeFit:
    lam: float
    max_aperture: float
    samples: int


def fit_cone_contraction(system: DynamicalSystem, samples: int = 10_000, seed: int = 0, cone: ConeField | None = None) -> ConeFit:
    """Smallest lam with Df(x) v in F^{lam b} over random points x and random v in F^b."""

    cone = cone or ConeField.for_system(system)
    rng = block_generator(seed, 1)
    points = system.domain.sample(rng, samples)
    t = rng.uniform(-cone.b, cone.b, samples)
    vectors = np.asarray(cone.f)[None, :] + t[:, None] * np.asarray(cone.e)[None, :]
    images = np.einsum("nij,nj->ni", system.derivative(points), vectors)
    worst = float(np.max(cone.aperture(images)))
    return ConeFit(worst / cone.b, worst, samples)
