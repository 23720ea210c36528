"""Topological pressure, equilibrium states and large-deviation rate bounds for finite Markov models.

For a model with 0/1 transition matrix A, per-symbol observable phi and per-symbol
Jacobian J, the pressure of t phi - J is the log Perron root of
M_ij = A_ij exp(t phi_j - J_j). The rate bound sup{h - nu(J) : nu(phi) >= c} is
evaluated through its Legendre dual inf_{t >= 0} [P(t phi - J) - t c]; a brute-force
search over Markov kernels provides an independent check.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import DynamicalSystem, ModelError
from .observables import Observable

logger = logging.getLogger(__name__)

PERRON_TOLERANCE = 1e-12
PERRON_MAX_ITERATIONS = 200_000
STOCHASTIC_TOLERANCE = 1e-9
BRUTEFORCE_MAX_POINTS = 5_000_000
BRUTEFORCE_MAX_GRID = 200
BRUTEFORCE_CHUNK = 1 << 16
T_BRACKET_LIMIT = 1e4


def _strongly_connected(adjacency: np.ndarray) -> tuple[int, np.ndarray]:
    return connected_components(csr_matrix(adjacency), directed=True, connection="strong")


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """A subshift of finite type with per-symbol observable and Jacobian values."""

    transitions: np.ndarray
    phi: np.ndarray
    jacobian: np.ndarray
    name: str = "markov"

    def __post_init__(self) -> None:
        a = np.asarray(self.transitions, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        jac = np.asarray(self.jacobian, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ModelError("transition matrix must be square")
        k = a.shape[0]
        if k < 2:
            raise ModelError("alphabet must have at least two symbols")
        if not np.all((a == 0.0) | (a == 1.0)):
            raise ModelError("transition matrix entries must be 0 or 1")
        if phi.shape != (k,) or jac.shape != (k,):
            raise ModelError(f"phi and jacobian need one value per symbol ({k})")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(jac))):
            raise ModelError("phi and jacobian values must be finite")
        components, _ = _strongly_connected(a)
        if components != 1:
            raise ModelError(f"transition matrix is reducible ({components} strongly connected classes)")
        object.__setattr__(self, "transitions", a)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "jacobian", jac)

    @property
    def size(self) -> int:
        return self.transitions.shape[0]

    def tilted(self, t: float) -> tuple[np.ndarray, float]:
        """The matrix A_ij exp(t phi_j - J_j - shift) and the shift, chosen so the largest weight is 1."""

        exponent = t * self.phi - self.jacobian
        shift = float(np.max(exponent))
        return self.transitions * np.exp(exponent - shift)[None, :], shift

    def with_phi(self, phi: Sequence[float]) -> MarkovModel:
        return MarkovModel(self.transitions, np.asarray(phi, dtype=float), self.jacobian, self.name)

    # ---------------------------------------------------------------- serialization
    def to_payload(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "alphabet": self.size,
            "transitions": self.transitions.astype(int).tolist(),
            "phi": self.phi.tolist(),
            "jacobian": self.jacobian.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), indent=2)

    @classmethod
    def from_json(cls, source: str | Mapping[str, Any]) -> MarkovModel:
        data = json.loads(source) if isinstance(source, str) else dict(source)
        try:
            model = cls(
                np.asarray(data["transitions"], dtype=float),
                np.asarray(data["phi"], dtype=float),
                np.asarray(data["jacobian"], dtype=float),
                str(data.get("name", "markov")),
            )
        except KeyError as exc:
            raise ModelError(f"Markov model description is missing '{exc.args[0]}'") from exc
        if "alphabet" in data and int(data["alphabet"]) != model.size:
            raise ModelError(f"alphabet {data['alphabet']} does not match the {model.size}x{model.size} matrix")
        return model


@dataclass(frozen=True)
class MarkovMeasure:
    """Stationary Markov chain: transition kernel P and stationary vector pi with pi P = pi."""

    kernel: np.ndarray
    stationary: np.ndarray

    def to_payload(self) -> dict[str, Any]:
        return {"kernel": self.kernel.tolist(), "stationary": self.stationary.tolist()}


# ---------------------------------------------------------------- Perron root
@dataclass(frozen=True)
class PerronResult:
    root: float
    right: np.ndarray
    iterations: int


def _power_iteration(matrix: np.ndarray, tol: float) -> PerronResult:
    """Perron root and vector of an irreducible nonnegative matrix.

    Iterates on M + I, which is primitive, from the all-ones vector and stops when the
    Collatz-Wielandt bounds min_i (Mv)_i / v_i <= rho <= max_i (Mv)_i / v_i agree to ``tol``.
    """

    k = matrix.shape[0]
    shifted = matrix + np.eye(k)
    v = np.ones(k) / k
    for iteration in range(1, PERRON_MAX_ITERATIONS + 1):
        w = shifted @ v
        ratios = w / v
        low, high = float(ratios.min()), float(ratios.max())
        v = w / w.sum()
        if high - low <= tol * high:
            return PerronResult(0.5 * (low + high) - 1.0, v, iteration)
    raise ModelError(f"power iteration did not converge in {PERRON_MAX_ITERATIONS} steps")


def perron_root(matrix: np.ndarray, tol: float = PERRON_TOLERANCE) -> float:
    m = np.asarray(matrix, dtype=float)
    if np.any(m < 0.0):
        raise ModelError("Perron root needs a nonnegative matrix")
    components, _ = _strongly_connected(m > 0.0)
    if components != 1:
        raise ModelError("Perron root needs an irreducible matrix")
    return _power_iteration(m, tol).root


def _spectral_radius(matrix: np.ndarray) -> float:
    """Largest Perron root over the irreducible blocks of a possibly reducible nonnegative matrix."""

    if matrix.size == 0:
        return 0.0
    components, labels = _strongly_connected(matrix > 0.0)
    best = 0.0
    for label in range(components):
        idx = np.flatnonzero(labels == label)
        block = matrix[np.ix_(idx, idx)]
        if len(idx) == 1:
            best = max(best, float(block[0, 0]))
        else:
            best = max(best, _power_iteration(block, PERRON_TOLERANCE).root)
    return best


# ---------------------------------------------------------------- pressure and equilibria
def pressure(model: MarkovModel, t: float) -> float:
    """P(t phi - J) = log of the Perron root of A_ij exp(t phi_j - J_j)."""

    if not math.isfinite(t):
        raise ModelError("pressure needs a finite t")
    matrix, shift = model.tilted(t)
    return shift + math.log(_power_iteration(matrix, PERRON_TOLERANCE).root)


def tilted_equilibrium(model: MarkovModel, t: float) -> MarkovMeasure:
    """Equilibrium state of t phi - J as a Markov measure.

    With M r = rho r and l M = rho l, the kernel is P_ij = M_ij r_j / (rho r_i) and the
    stationary vector is proportional to l_i r_i.
    """

    matrix, _ = model.tilted(t)
    right = _power_iteration(matrix, PERRON_TOLERANCE)
    left = _power_iteration(matrix.T, PERRON_TOLERANCE)
    rho = right.root
    kernel = matrix * right.right[None, :] / (rho * right.right[:, None])
    kernel /= kernel.sum(axis=1, keepdims=True)
    stationary = left.right * right.right
    return MarkovMeasure(kernel, stationary / stationary.sum())


def parry_measure(model: MarkovModel) -> MarkovMeasure:
    """Measure of maximal entropy of the subshift (the equilibrium state of the zero potential)."""

    return tilted_equilibrium(MarkovModel(model.transitions, np.zeros(model.size), np.zeros(model.size), model.name), 0.0)


def _check_measure(model: MarkovModel, measure: MarkovMeasure) -> None:
    kernel = np.asarray(measure.kernel, dtype=float)
    pi = np.asarray(measure.stationary, dtype=float)
    k = model.size
    if kernel.shape != (k, k) or pi.shape != (k,):
        raise ModelError("measure does not match the model's alphabet")
    if np.any(kernel < -STOCHASTIC_TOLERANCE) or np.any(pi < -STOCHASTIC_TOLERANCE):
        raise ModelError("measure has negative entries")
    if np.any((kernel > STOCHASTIC_TOLERANCE) & (model.transitions == 0.0)):
        raise ModelError("kernel uses a forbidden transition")
    if not np.allclose(kernel.sum(axis=1), 1.0, atol=STOCHASTIC_TOLERANCE):
        raise ModelError("kernel rows must sum to 1")
    if abs(pi.sum() - 1.0) > STOCHASTIC_TOLERANCE or not np.allclose(pi @ kernel, pi, atol=STOCHASTIC_TOLERANCE):
        raise ModelError("distribution is not stationary for the kernel")


def markov_entropy(model: MarkovModel, measure: MarkovMeasure) -> float:
    """Entropy rate -sum_i pi_i sum_j P_ij log P_ij."""

    _check_measure(model, measure)
    p = np.asarray(measure.kernel, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return float(-np.sum(measure.stationary[:, None] * terms))


def markov_integral(model: MarkovModel, g: Sequence[float] | np.ndarray, measure: MarkovMeasure) -> float:
    _check_measure(model, measure)
    values = np.asarray(g, dtype=float)
    if values.shape != (model.size,):
        raise ModelError("integrand needs one value per symbol")
    return float(measure.stationary @ values)


# ---------------------------------------------------------------- rate bounds
def _phi_average(model: MarkovModel, t: float) -> float:
    return float(tilted_equilibrium(model, t).stationary @ model.phi)


def _max_phi_limit(model: MarkovModel) -> float:
    """lim_{t -> inf} P(t phi - J) - t max(phi): the pressure of -J on the symbols where phi is maximal."""

    top = float(np.max(model.phi))
    idx = np.flatnonzero(model.phi >= top - 1e-12)
    block = model.transitions[np.ix_(idx, idx)] * np.exp(-model.jacobian[idx])[None, :]
    rho = _spectral_radius(block)
    return math.log(rho) if rho > 0.0 else -math.inf


@dataclass(frozen=True)
class RateBound:
    c: float
    value: float
    t_star: float
    regime: str

    def to_payload(self) -> dict[str, Any]:
        return {"c": self.c, "rate_bound": self.value, "t_star": self.t_star, "regime": self.regime}


def solve_rate_bound(model: MarkovModel, c: float) -> RateBound:
    """inf_{t >= 0} [P(t phi - J) - t c] with the minimising t."""

    top = float(np.max(model.phi))
    if c > top + 1e-12:
        raise ModelError(f"constraint nu(phi) >= {c} is infeasible: max phi = {top}")
    mean0 = _phi_average(model, 0.0)
    if c <= mean0:
        return RateBound(c, pressure(model, 0.0), 0.0, "equilibrium")
    if c >= top - 1e-12:
        return RateBound(c, _max_phi_limit(model), math.inf, "boundary")

    def gap(t: float) -> float:
        return _phi_average(model, t) - c

    hi = 1.0
    while gap(hi) < 0.0:
        hi *= 2.0
        if hi > T_BRACKET_LIMIT:
            raise ModelError(f"constraint nu(phi) >= {c} exceeds every invariant average of phi")
    t_star = brentq(gap, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return RateBound(c, pressure(model, t_star) - t_star * c, float(t_star), "tilted")


def rate_bound(model: MarkovModel, c: float) -> float:
    """sup{h_nu - nu(J) : nu(phi) >= c} over invariant measures of the model."""

    return solve_rate_bound(model, c).value


def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""

    if parts == 1:
        return np.array([[total]])
    rows = []
    for first in range(total + 1):
        tail = _compositions(total - first, parts - 1)
        rows.append(np.column_stack([np.full(len(tail), first), tail]))
    return np.vstack(rows)


def rate_bound_bruteforce(model: MarkovModel, c: float, grid: int) -> float:
    """Grid search over Markov kernels compatible with A for the largest h - nu(J) with nu(phi) >= c.

    Each row of the kernel ranges over the compositions of ``grid`` on its allowed
    transitions. Kernels with more than one stationary distribution are skipped; their
    ergodic components appear elsewhere in the grid.
    """

    k = model.size
    if k > 3:
        raise ModelError("brute-force bound supports alphabets of at most 3 symbols")
    if not 1 <= grid <= BRUTEFORCE_MAX_GRID:
        raise ModelError(f"grid must lie in [1, {BRUTEFORCE_MAX_GRID}]")
    row_choices = []
    for i in range(k):
        allowed = np.flatnonzero(model.transitions[i] > 0.0)
        comps = _compositions(grid, len(allowed)) / grid
        rows = np.zeros((len(comps), k))
        rows[:, allowed] = comps
        row_choices.append(rows)
    total = math.prod(len(r) for r in row_choices)
    if total > BRUTEFORCE_MAX_POINTS:
        raise ModelError(f"brute-force grid has {total} kernels, more than {BRUTEFORCE_MAX_POINTS}")

    best = -math.inf
    index_grid = np.indices([len(r) for r in row_choices]).reshape(k, -1).T
    for start in range(0, total, BRUTEFORCE_CHUNK):
        idx = index_grid[start : start + BRUTEFORCE_CHUNK]
        kernels = np.stack([row_choices[i][idx[:, i]] for i in range(k)], axis=1)
        equations = np.transpose(kernels, (0, 2, 1)) - np.eye(k)
        equations[:, -1, :] = 1.0
        ok = np.abs(np.linalg.det(equations)) > 1e-12
        if not ok.any():
            continue
        kernels = kernels[ok]
        rhs = np.zeros((len(kernels), k, 1))
        rhs[:, -1, 0] = 1.0
        pi = np.linalg.solve(equations[ok], rhs)[..., 0]
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum(axis=1, keepdims=True)
        feasible = pi @ model.phi >= c - 1e-12
        if not feasible.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(kernels > 0.0, kernels * np.log(kernels), 0.0)
        entropy = -np.einsum("ni,nij->n", pi, terms)
        values = entropy - pi @ model.jacobian
        best = max(best, float(np.max(values[feasible])))
    if best == -math.inf:
        logger.info("%s: no grid kernel satisfies nu(phi) >= %g", model.name, c)
    return best


def pressure_curve(model: MarkovModel, ts: Sequence[float]) -> np.ndarray:
    return np.array([pressure(model, float(t)) for t in ts])


# ---------------------------------------------------------------- built-in models
def full_shift_model(k: int, phi: Sequence[float] | None = None) -> MarkovModel:
    """The coding of x -> k x mod 1: full shift on k symbols with J = log k."""

    if k < 2:
        raise ModelError("full shift needs at least two symbols")
    values = np.asarray(phi, dtype=float) if phi is not None else np.arange(k) / (k - 1)
    return MarkovModel(np.ones((k, k)), values, np.full(k, math.log(k)), f"full_shift_{k}")


def doubling_model() -> MarkovModel:
    return MarkovModel(np.ones((2, 2)), np.array([0.0, 1.0]), np.full(2, math.log(2.0)), "doubling")


def golden_mean_model(phi: Sequence[float] = (0.0, 0.0), jacobian: Sequence[float] = (0.0, 0.0)) -> MarkovModel:
    return MarkovModel(np.array([[1.0, 1.0], [1.0, 0.0]]), np.asarray(phi, dtype=float), np.asarray(jacobian, dtype=float), "golden_mean")


def markov_model_for(system: DynamicalSystem, observable: Observable, samples: int = 33) -> MarkovModel:
    """Exact Markov model of a full-branch linear circle map for an observable constant on its cylinders."""

    branches = system.metadata.get("markov_branches")
    if branches is None:
        raise ModelError(f"{system.name} has no finite Markov coding")
    k = int(branches)
    phi = []
    for i in range(k):
        offsets = (np.arange(samples) + 0.5) / samples
        values = observable((i + offsets) / k)
        if np.ptp(values) > 1e-12:
            raise ModelError(f"observable '{observable.name}' is not constant on cylinder {i} of {system.name}")
        phi.append(float(values[0]))
    model = MarkovModel(np.ones((k, k)), np.asarray(phi), np.full(k, math.log(k)), system.name)
    return model
