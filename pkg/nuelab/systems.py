"""Built-in families of maps and the family library addressed by config files."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping

import numpy as np
from scipy.optimize import brentq

from .model import DomainSpec, DynamicalSystem, SystemConfigError

logger = logging.getLogger(__name__)

# Critical orbit 0 -> a -> a - a^2 lands on the repelling fixed point of Q_a.
MISIUREWICZ_PARAMETER = 1.5436890126920764

CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])
SHEAR_MATRIX = np.array([[1.0, 1.0], [0.0, 1.0]])

ULP = 2.0**-53


def _merge(family: str, params: Mapping[str, Any] | None, defaults: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(defaults)
    for key, value in (params or {}).items():
        if key not in defaults:
            raise SystemConfigError(f"unknown parameter '{key}' for family '{family}'")
        merged[key] = value
    return merged


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise SystemConfigError(message)


def _no_singular(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    shape = pts.shape if pts.ndim <= 1 else pts.shape[:-1]
    return np.full(shape, np.inf)


def _point_sampler(singular_points: tuple[float, ...], domain: DomainSpec) -> Callable:
    """Sampler of points at prescribed distances from a finite 1-D singular set."""

    anchors = np.asarray(singular_points, dtype=float)

    def sample(rng: np.random.Generator, distances: np.ndarray) -> np.ndarray:
        base = anchors[rng.integers(0, len(anchors), size=len(distances))]
        sign = np.where(rng.random(len(distances)) < 0.5, -1.0, 1.0)
        pts = base + sign * distances
        flipped = base - sign * distances
        pts = np.where(domain.contains(pts), pts, flipped)
        return pts[domain.contains(pts)]

    return sample


# ---------------------------------------------------------------- expanding maps
def _expanding_circle(name: str, k: Any, params: dict[str, Any]) -> DynamicalSystem:
    _require(isinstance(k, int) and k >= 2, f"{name}: k must be an integer >= 2, got {k!r}")
    factor = float(k)

    def map_fn(x: np.ndarray) -> np.ndarray:
        return np.mod(factor * x, 1.0)

    def derivative_fn(x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x), factor)

    return DynamicalSystem(
        name=name,
        domain=DomainSpec.circle(),
        map_fn=map_fn,
        derivative_fn=derivative_fn,
        singular_distance_fn=_no_singular,
        params=params,
        metadata={
            "singular": False,
            "breakpoints": tuple(j / k for j in range(1, k)),
            "markov_branches": k,
        },
        refresh=(factor * ULP,) if k % 2 == 0 else None,
        scalar_map=lambda x: (factor * x) % 1.0,
    )


def build_doubling(params: dict[str, Any]) -> DynamicalSystem:
    return _expanding_circle("doubling", 2, params)


def build_expanding_circle_k(params: dict[str, Any]) -> DynamicalSystem:
    return _expanding_circle("expanding_circle_k", params["k"], params)


def build_rotation(params: dict[str, Any]) -> DynamicalSystem:
    alpha = float(params["alpha"])
    _require(0.0 < alpha < 1.0, f"rotation: alpha must lie in (0, 1), got {alpha}")

    return DynamicalSystem(
        name="rotation",
        domain=DomainSpec.circle(),
        map_fn=lambda x: np.mod(x + alpha, 1.0),
        derivative_fn=lambda x: np.ones(np.shape(x)),
        singular_distance_fn=_no_singular,
        params=params,
        metadata={"singular": False, "breakpoints": (1.0 - alpha,)},
        scalar_map=lambda x: (x + alpha) % 1.0,
    )


def build_manneville_pomeau(params: dict[str, Any]) -> DynamicalSystem:
    gamma = float(params["gamma"])
    _require(0.0 < gamma < 1.0, f"manneville_pomeau: gamma must lie in (0, 1), got {gamma}")
    turning = brentq(lambda x: x + x ** (1.0 + gamma) - 1.0, 0.0, 1.0, xtol=1e-15)

    def map_fn(x: np.ndarray) -> np.ndarray:
        return np.mod(x + np.abs(x) ** (1.0 + gamma), 1.0)

    def derivative_fn(x: np.ndarray) -> np.ndarray:
        return 1.0 + (1.0 + gamma) * np.abs(x) ** gamma

    return DynamicalSystem(
        name="manneville_pomeau",
        domain=DomainSpec.circle(),
        map_fn=map_fn,
        derivative_fn=derivative_fn,
        singular_distance_fn=_no_singular,
        params=params,
        metadata={"singular": False, "breakpoints": (turning,), "neutral_points": (0.0,)},
        scalar_map=lambda x: (x + abs(x) ** (1.0 + gamma)) % 1.0,
    )


# ---------------------------------------------------------------- maps with critical/singular sets
def build_quadratic(params: dict[str, Any]) -> DynamicalSystem:
    a = float(params["a"])
    strict = bool(params["strict"])
    if strict:
        _require(1.0 < a <= 2.0, f"quadratic: a must lie in (1, 2], got {a}")
    else:
        _require(a > 1.0, f"quadratic: a must exceed 1, got {a}")
    domain = DomainSpec.interval(a - a * a, a) if a <= 2.0 else DomainSpec.interval(-2.0, 2.0)

    return DynamicalSystem(
        name="quadratic",
        domain=domain,
        map_fn=lambda x: a - x * x,
        derivative_fn=lambda x: -2.0 * x,
        singular_distance_fn=lambda x: np.abs(x),
        params=params,
        metadata={
            "singular": True,
            "singular_points": (0.0,),
            "breakpoints": (0.0,),
            "singular_sampler": _point_sampler((0.0,), domain),
        },
        nonflat=(3.0, 1.0),
        scalar_map=lambda x: a - x * x,
    )


def build_infinite_modal(params: dict[str, Any]) -> DynamicalSystem:
    a = float(params["a"])
    alpha = float(params["alpha"])
    beta = float(params["beta"])
    eps = float(params["epsilon"])
    mu = float(params["mu"])
    slope = float(params["outer_slope"])
    _require(a > 0.0, f"infinite_modal: a must be positive, got {a}")
    _require(0.0 < alpha < 1.0, f"infinite_modal: alpha must lie in (0, 1), got {alpha}")
    _require(beta > 0.0, f"infinite_modal: beta must be positive, got {beta}")
    _require(0.0 < eps < 1.0, f"infinite_modal: epsilon must lie in (0, 1), got {eps}")
    _require(abs(mu) < eps, f"infinite_modal: |mu| must be below epsilon, got {mu}")
    _require(a * eps**alpha + abs(mu) <= 1.0, "infinite_modal: a*epsilon^alpha + |mu| must not exceed 1")
    _require(slope > 1.0, f"infinite_modal: outer_slope must exceed 1, got {slope}")

    theta = math.atan2(beta, alpha)
    first_index = max(0, math.ceil((beta * math.log(1.0 / eps) - theta) / math.pi))
    edge_value = a * eps**alpha * math.sin(beta * math.log(1.0 / eps)) + mu

    def critical(j: np.ndarray) -> np.ndarray:
        return np.exp(-(theta + j * math.pi) / beta)

    def map_fn(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r = np.abs(z)
        sign = np.sign(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = sign * (a * r**alpha * np.sin(beta * np.log(1.0 / r)) + mu)
        outer = sign * edge_value + slope * (z - sign * eps)
        outer = np.mod(outer + 1.0, 2.0) - 1.0
        return np.where(r == 0.0, 0.0, np.where(r <= eps, inner, outer))

    def derivative_fn(z: np.ndarray) -> np.ndarray:
        r = np.abs(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_inv = np.log(1.0 / r)
            inner = a * r ** (alpha - 1.0) * (alpha * np.sin(beta * log_inv) - beta * np.cos(beta * log_inv))
        return np.where(r <= eps, inner, slope)

    def singular_distance_fn(z: np.ndarray) -> np.ndarray:
        r = np.abs(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            position = (beta * np.log(1.0 / r) - theta) / math.pi
            lower = np.maximum(np.floor(position), first_index)
            upper = np.maximum(np.ceil(position), first_index)
            nearest = np.minimum(np.abs(r - critical(lower)), np.abs(r - critical(upper)))
        return np.where(r == 0.0, 0.0, np.minimum(r, nearest))

    domain = DomainSpec.interval(-1.0, 1.0)
    crit = tuple(float(c) for c in critical(np.arange(first_index, first_index + 6)))
    anchors = (0.0,) + crit + tuple(-c for c in crit)
    return DynamicalSystem(
        name="infinite_modal",
        domain=domain,
        map_fn=map_fn,
        derivative_fn=derivative_fn,
        singular_distance_fn=singular_distance_fn,
        params=params,
        metadata={
            "singular": True,
            "singular_points": anchors,
            "largest_critical_point": crit[0],
            "extension": f"affine slope {slope} outside [-{eps}, {eps}], wrapped mod 2 into [-1, 1)",
            "singular_sampler": _point_sampler(anchors, domain),
        },
    )


def build_gauss(params: dict[str, Any]) -> DynamicalSystem:
    domain = DomainSpec.interval(0.0, 1.0)

    def map_fn(x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.mod(1.0 / x, 1.0)

    def derivative_fn(x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return -1.0 / (x * x)

    return DynamicalSystem(
        name="gauss",
        domain=domain,
        map_fn=map_fn,
        derivative_fn=derivative_fn,
        singular_distance_fn=lambda x: np.abs(x),
        params=params,
        metadata={
            "singular": True,
            "singular_points": (0.0,),
            "singular_sampler": _point_sampler((0.0,), domain),
        },
        nonflat=(2.0, 2.0),
        scalar_map=lambda x: (1.0 / x) % 1.0,
    )


def build_lorenz1d(params: dict[str, Any]) -> DynamicalSystem:
    """Two symmetric increasing branches x -> sign(x)(c0|x|^b0 - 1) on [-1, 1]."""

    b0 = float(params["beta0"])
    c0 = float(params["c0"])
    _require(0.5 < b0 < 1.0, f"lorenz1d: beta0 must lie in (1/2, 1), got {b0}")
    _require(1.0 < c0 <= 2.0, f"lorenz1d: c0 must lie in (1, 2], got {c0}")
    _require(c0 * b0 > 1.0, "lorenz1d: c0*beta0 must exceed 1 for expansion")
    domain = DomainSpec.interval(-1.0, 1.0)

    def scalar(x: float) -> float:
        return math.copysign(c0 * abs(x) ** b0 - 1.0, x)

    return DynamicalSystem(
        name="lorenz1d",
        domain=domain,
        map_fn=lambda x: np.sign(x) * (c0 * np.abs(x) ** b0 - 1.0),
        derivative_fn=lambda x: c0 * b0 * np.abs(x) ** (b0 - 1.0),
        singular_distance_fn=lambda x: np.abs(x),
        params=params,
        metadata={
            "singular": True,
            "singular_points": (0.0,),
            "breakpoints": (0.0,),
            "singular_sampler": _point_sampler((0.0,), domain),
        },
        nonflat=(2.0, 1.0 - b0),
        scalar_map=scalar,
    )


def locate_viana_interval(a0: float, alpha: float, resolution: int = 2048) -> tuple[float, float]:
    """Find r such that the image of S^1 x [-r, r] lies strictly inside it.

    The images of the boundary curves S^1 x {+-r} and of the fold S^1 x {0} are
    evaluated on an s-grid; r is taken in the middle of the admissible range.
    """

    s = np.arange(resolution) / resolution
    fold = a0 + alpha * np.sin(2.0 * np.pi * s)
    radii = np.linspace(0.05, 2.0, 3901)
    top = fold.max()
    admissible = [r for r in radii if top < r and (fold - r * r).min() > -r]
    if not admissible:
        raise SystemConfigError(f"viana: no forward-invariant interval for a0={a0}, alpha={alpha}")
    r = 0.5 * (admissible[0] + admissible[-1])
    return -r, r


def build_viana(params: dict[str, Any]) -> DynamicalSystem:
    d = params["d"]
    alpha = float(params["alpha"])
    a0 = float(params["a0"])
    _require(isinstance(d, int) and d >= 16, f"viana: d must be an integer >= 16, got {d!r}")
    _require(0.0 < alpha <= 0.1, f"viana: alpha must be small and positive, got {alpha}")
    _require(1.0 < a0 < 2.0, f"viana: a0 must lie in (1, 2), got {a0}")
    lower, upper = locate_viana_interval(a0, alpha)
    logger.debug("viana invariant interval [%.6f, %.6f]", lower, upper)
    domain = DomainSpec.cylinder(lower, upper)
    factor = float(d)

    def map_fn(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        s, x = p[..., 0], p[..., 1]
        return np.stack([np.mod(factor * s, 1.0), a0 + alpha * np.sin(2.0 * np.pi * s) - x * x], axis=-1)

    def derivative_fn(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        s, x = p[..., 0], p[..., 1]
        jac = np.zeros(p.shape[:-1] + (2, 2))
        jac[..., 0, 0] = factor
        jac[..., 1, 0] = 2.0 * np.pi * alpha * np.cos(2.0 * np.pi * s)
        jac[..., 1, 1] = -2.0 * x
        return jac

    def sampler(rng: np.random.Generator, distances: np.ndarray) -> np.ndarray:
        s = rng.random(len(distances))
        x = np.where(rng.random(len(distances)) < 0.5, -1.0, 1.0) * distances
        pts = np.stack([s, x], axis=-1)
        return pts[domain.contains(pts)]

    return DynamicalSystem(
        name="viana",
        domain=domain,
        map_fn=map_fn,
        derivative_fn=derivative_fn,
        singular_distance_fn=lambda p: np.abs(np.asarray(p, dtype=float)[..., 1]),
        params=params,
        metadata={"singular": True, "invariant_interval": (lower, upper), "singular_sampler": sampler},
        refresh=(factor * ULP, 0.0) if d % 2 == 0 else None,
    )


# ---------------------------------------------------------------- torus maps
def _eigenframe(matrix: np.ndarray) -> dict[str, Any]:
    values, vectors = np.linalg.eig(matrix)
    order = np.argsort(-np.abs(values))
    values, vectors = values[order].real, vectors[:, order].real
    unstable = vectors[:, 0] / np.linalg.norm(vectors[:, 0])
    stable = vectors[:, 1] / np.linalg.norm(vectors[:, 1])
    if unstable[0] < 0:
        unstable = -unstable
    if stable[1] < 0:
        stable = -stable
    return {
        "eigenvalues": (float(values[0]), float(values[1])),
        "unstable_direction": tuple(unstable),
        "stable_direction": tuple(stable),
    }


def _linear_torus(name: str, matrix: np.ndarray, params: dict[str, Any], metadata: dict[str, Any]) -> DynamicalSystem:
    mat = np.array(matrix, dtype=float)

    def map_fn(p: np.ndarray) -> np.ndarray:
        return np.mod(np.asarray(p, dtype=float) @ mat.T, 1.0)

    def derivative_fn(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(mat, p.shape[:-1] + (2, 2)).copy()

    return DynamicalSystem(
        name=name,
        domain=DomainSpec.torus(),
        map_fn=map_fn,
        derivative_fn=derivative_fn,
        singular_distance_fn=_no_singular,
        params=params,
        metadata={"singular": False, **metadata},
    )


DEFAULT_DA_REGION = {"center": (0.0, 0.0), "radius_u": 0.02, "radius_s": 0.25}
DEFAULT_CONE = {"a": 0.15, "b": 0.2}


def build_cat_map(params: dict[str, Any]) -> DynamicalSystem:
    frame = _eigenframe(CAT_MATRIX)
    return _linear_torus(
        "cat_map",
        CAT_MATRIX,
        params,
        {**frame, "region": dict(DEFAULT_DA_REGION), "cone": dict(DEFAULT_CONE), "delta0": 0.1},
    )


def build_shear(params: dict[str, Any]) -> DynamicalSystem:
    return _linear_torus(
        "shear",
        SHEAR_MATRIX,
        params,
        {
            "eigenvalues": (1.0, 1.0),
            "unstable_direction": (1.0, 0.0),
            "stable_direction": (0.0, 1.0),
            "cone": dict(DEFAULT_CONE),
        },
    )


def _bump(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """C^2 bump (1 - y^2)^3 on |y| < 1 and its derivative."""

    inside = np.abs(y) < 1.0
    base = np.where(inside, 1.0 - y * y, 0.0)
    return base**3, np.where(inside, -6.0 * y * base**2, 0.0)


def build_da_map(params: dict[str, Any]) -> DynamicalSystem:
    """Cat map slowed down along the unstable direction inside a box V around the fixed point 0.

    In eigen-coordinates (u, s) centred at 0 the map reads
    u' = lambda_u u - kappa lambda_u psi(u, s), s' = lambda_s s, with
    psi(u, s) = u beta(u / R_u) beta(s / R_s); the unstable stretch at 0 becomes
    lambda_u (1 - kappa).
    """

    kappa = float(params["amplitude"])
    r_u = float(params["radius_u"])
    r_s = float(params["radius_s"])
    delta0 = float(params["delta0"])
    cone_a = float(params["cone_a"])
    cone_b = float(params["cone_b"])
    _require(0.0 <= kappa < 1.0, f"da_map: amplitude must lie in [0, 1), got {kappa}")
    _require(0.0 < r_u < 0.5 and 0.0 < r_s < 0.5, "da_map: bump radii must lie in (0, 1/2)")
    _require(delta0 > 0.0, f"da_map: delta0 must be positive, got {delta0}")
    _require(0.0 < cone_a < 1.0 and 0.0 < cone_b < 1.0, "da_map: cone widths must lie in (0, 1)")

    frame = _eigenframe(CAT_MATRIX)
    lam_u = frame["eigenvalues"][0]
    e_u = np.array(frame["unstable_direction"])
    e_s = np.array(frame["stable_direction"])
    strength = kappa * lam_u

    def local(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        disp = p - np.round(p)
        return disp @ e_u, disp @ e_s

    def map_fn(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        u, s = local(p)
        bu, _ = _bump(u / r_u)
        bs, _ = _bump(s / r_s)
        psi = u * bu * bs
        return np.mod(p @ CAT_MATRIX.T - strength * psi[..., None] * e_u, 1.0)

    def derivative_fn(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        u, s = local(p)
        y, z = u / r_u, s / r_s
        bu, dbu = _bump(y)
        bs, dbs = _bump(z)
        psi_u = (bu + y * dbu) * bs
        psi_s = u * bu * dbs / r_s
        grad = psi_u[..., None] * e_u + psi_s[..., None] * e_s
        return CAT_MATRIX - strength * e_u[:, None] * grad[..., None, :]

    system = DynamicalSystem(
        name="da_map",
        domain=DomainSpec.torus(),
        map_fn=map_fn,
        derivative_fn=derivative_fn,
        singular_distance_fn=_no_singular,
        params=params,
        metadata={
            "singular": False,
            **frame,
            "region": {"center": (0.0, 0.0), "radius_u": r_u, "radius_s": r_s},
            "cone": {"a": cone_a, "b": cone_b},
            "delta0": delta0,
            "centre_stretch": lam_u * (1.0 - kappa),
        },
    )
    if params["strict"]:
        from .partial_hyperbolic import check_conditions_ABCD

        report = check_conditions_ABCD(system, samples=4000, seed=0)
        if not report.passed:
            raise SystemConfigError(f"da_map rejected: {', '.join(report.failures)}")
    return system


# ---------------------------------------------------------------- controls
def build_bistable_circle(params: dict[str, Any]) -> DynamicalSystem:
    """Circle homeomorphism with attracting fixed points 1/4 and 3/4."""

    kappa = float(params["kappa"])
    _require(0.0 < kappa < 1.0, f"bistable_circle: kappa must lie in (0, 1), got {kappa}")
    width = kappa / (4.0 * math.pi)

    return DynamicalSystem(
        name="bistable_circle",
        domain=DomainSpec.circle(),
        map_fn=lambda x: np.mod(x - width * np.sin(4.0 * np.pi * (x - 0.25)), 1.0),
        derivative_fn=lambda x: 1.0 - kappa * np.cos(4.0 * np.pi * (x - 0.25)),
        singular_distance_fn=_no_singular,
        params=params,
        metadata={"singular": False, "breakpoints": (), "attractors": (0.25, 0.75)},
        scalar_map=lambda x: (x - width * math.sin(4.0 * math.pi * (x - 0.25))) % 1.0,
    )


@dataclass(frozen=True)
class FamilyDefinition:
    key: str
    title: str
    description: str
    builder: Callable[[dict[str, Any]], DynamicalSystem]
    defaults: Mapping[str, Any] = field(default_factory=dict)


FAMILY_LIBRARY: Dict[str, FamilyDefinition] = {
    "doubling": FamilyDefinition(
        key="doubling",
        title="Doubling map",
        description="x -> 2x mod 1; Lebesgue is the SRB measure, empty singular set.",
        builder=build_doubling,
    ),
    "expanding_circle_k": FamilyDefinition(
        key="expanding_circle_k",
        title="Linear k-fold circle map",
        description="x -> kx mod 1, uniformly expanding.",
        builder=build_expanding_circle_k,
        defaults={"k": 3},
    ),
    "rotation": FamilyDefinition(
        key="rotation",
        title="Irrational rotation",
        description="Zero-entropy isometry; no hyperbolic times.",
        builder=build_rotation,
        defaults={"alpha": (math.sqrt(5.0) - 1.0) / 2.0},
    ),
    "manneville_pomeau": FamilyDefinition(
        key="manneville_pomeau",
        title="Manneville-Pomeau map",
        description="x -> x + x^(1+gamma) mod 1 with a neutral fixed point at 0.",
        builder=build_manneville_pomeau,
        defaults={"gamma": 0.5},
    ),
    "quadratic": FamilyDefinition(
        key="quadratic",
        title="Quadratic family",
        description="Q_a(x) = a - x^2 on its invariant core; critical point 0.",
        builder=build_quadratic,
        defaults={"a": 2.0, "strict": True},
    ),
    "infinite_modal": FamilyDefinition(
        key="infinite_modal",
        title="Infinite-modal map",
        description="a z^alpha sin(beta log 1/z) near 0 with an expanding affine extension.",
        builder=build_infinite_modal,
        defaults={"a": 1.0, "alpha": 0.5, "beta": 1.0, "epsilon": 0.2, "mu": 0.0, "outer_slope": 6.0},
    ),
    "gauss": FamilyDefinition(
        key="gauss",
        title="Gauss map",
        description="x -> 1/x mod 1; singular at 0.",
        builder=build_gauss,
    ),
    "lorenz1d": FamilyDefinition(
        key="lorenz1d",
        title="Lorenz-like map",
        description="Two increasing branches with derivative ~ |x|^(beta0 - 1) at the discontinuity 0.",
        builder=build_lorenz1d,
        defaults={"beta0": 0.8, "c0": 2.0},
    ),
    "viana": FamilyDefinition(
        key="viana",
        title="Viana map",
        description="(s, x) -> (d s mod 1, a0 + alpha sin(2 pi s) - x^2) on S^1 x I.",
        builder=build_viana,
        defaults={"d": 16, "alpha": 0.01, "a0": MISIUREWICZ_PARAMETER},
    ),
    "cat_map": FamilyDefinition(
        key="cat_map",
        title="Cat map",
        description="Linear Anosov automorphism [[2, 1], [1, 1]] of the 2-torus.",
        builder=build_cat_map,
    ),
    "da_map": FamilyDefinition(
        key="da_map",
        title="Derived-from-Anosov map",
        description="Cat map deformed inside a small box V; partially hyperbolic, NUE along F.",
        builder=build_da_map,
        defaults={
            "amplitude": 0.55,
            "radius_u": 0.02,
            "radius_s": 0.25,
            "delta0": 0.1,
            "cone_a": DEFAULT_CONE["a"],
            "cone_b": DEFAULT_CONE["b"],
            "strict": True,
        },
    ),
    "shear": FamilyDefinition(
        key="shear",
        title="Shear control",
        description="Torus automorphism [[1, 1], [0, 1]]; Df|F = 1.",
        builder=build_shear,
    ),
    "bistable_circle": FamilyDefinition(
        key="bistable_circle",
        title="Bistable circle control",
        description="Two attracting fixed points; exactly two physical measures.",
        builder=build_bistable_circle,
        defaults={"kappa": 0.5},
    ),
}


def available_families() -> List[FamilyDefinition]:
    return list(FAMILY_LIBRARY.values())


def get_family(key: str) -> FamilyDefinition | None:
    return FAMILY_LIBRARY.get(key)


def build_system(family: str, params: Mapping[str, Any] | None = None) -> DynamicalSystem:
    definition = get_family(family)
    if definition is None:
        raise SystemConfigError(f"unknown family '{family}'")
    return definition.builder(_merge(family, params, definition.defaults))


# ---------------------------------------------------------------- non-flatness
@dataclass(frozen=True)
class NonflatViolation:
    point: tuple[float, ...]
    distance: float
    ratio: float
    bound: float
    side: str


@dataclass
class NonflatReport:
    checked: int
    violations: list[NonflatViolation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def check_nonflat(
    system: DynamicalSystem,
    B: float,
    beta: float,
    samples: int = 10_000,
    seed: int = 0,
    radius: float = 0.5,
    decades: float = 12.0,
) -> NonflatReport:
    """Sample points at log-uniformly shrinking distances from the singular set and test (S1)."""

    if not system.has_singular_set or "singular_sampler" not in system.metadata:
        raise SystemConfigError(f"{system.name}: the singular set is empty, nothing to check")
    if B <= 1.0 or beta <= 0.0:
        raise SystemConfigError("non-flatness constants need B > 1 and beta > 0")
    rng = np.random.default_rng(seed)
    distances = radius * 10.0 ** (-decades * rng.random(samples))
    points = system.metadata["singular_sampler"](rng, distances)
    d = system.singular_distance(points)
    keep = d > 0
    points, d = points[keep], d[keep]
    jac = system.derivative(points)
    if system.dimension == 1:
        low = high = np.abs(jac)
    else:
        singular_values = np.linalg.svd(jac, compute_uv=False)
        high, low = singular_values[..., 0], singular_values[..., -1]
    lower_bound = d**beta / B
    upper_bound = B * d ** (-beta)
    report = NonflatReport(checked=len(d))
    slack = 1e-12
    for idx in np.flatnonzero(low < lower_bound * (1 - slack)):
        report.violations.append(
            NonflatViolation(tuple(np.atleast_1d(points[idx]).tolist()), float(d[idx]), float(low[idx]), float(lower_bound[idx]), "lower")
        )
    for idx in np.flatnonzero(high > upper_bound * (1 + slack)):
        report.violations.append(
            NonflatViolation(tuple(np.atleast_1d(points[idx]).tolist()), float(d[idx]), float(high[idx]), float(upper_bound[idx]), "upper")
        )
    logger.debug("%s: (S1) checked on %d points, %d violations", system.name, report.checked, len(report.violations))
    return report


__all__ = [
    "FAMILY_LIBRARY",
    "FamilyDefinition",
    "MISIUREWICZ_PARAMETER",
    "NonflatReport",
    "NonflatViolation",
    "available_families",
    "build_system",
    "check_nonflat",
    "get_family",
    "locate_viana_interval",
]
