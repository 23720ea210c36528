"""Exact enumeration of 1-D dynamical balls and survivor sets as unions of intervals.

The current set is kept as a list of intervals J on which f^i is continuous and
monotone. At each step the part of J whose image falls in the step's window is pulled
back by bisection on f^i, and the pieces are cut where f^i crosses a breakpoint of f
(a discontinuity or turning point), so monotonicity carries over to f^{i+1}.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

from .model import DynamicalSystem, EstimationError, Region

Window = tuple[float, float]

BISECTION_STEPS = 200


def _require_exact(system: DynamicalSystem) -> Callable[[float], float]:
    if system.dimension != 1 or system.scalar_map is None or "breakpoints" not in system.metadata:
        raise EstimationError(f"{system.name}: exact interval enumeration needs a 1-D map with known breakpoints")
    return system.scalar_map


def _iterate(fn: Callable[[float], float], y: float, i: int) -> float:
    for _ in range(i):
        y = fn(y)
    return y


def _solve(fn, i: int, lo: float, hi: float, g_lo: float, g_hi: float, target: float) -> float:
    """The y in [lo, hi] with f^i(y) = target, f^i monotone on [lo, hi] with end values g_lo, g_hi."""

    increasing = g_hi >= g_lo
    if (target <= g_lo) == increasing and target != g_lo:
        return lo
    if (target >= g_hi) == increasing and target != g_hi:
        return hi
    a, b = lo, hi
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        value = _iterate(fn, mid, i)
        if (value < target) == increasing:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def _clip_windows(windows: Sequence[Window], lower: float, upper: float) -> list[Window]:
    out = []
    for a, b in windows:
        a, b = max(a, lower), min(b, upper)
        if b > a:
            out.append((a, b))
    return out


def refine(system: DynamicalSystem, n: int, windows_at: Callable[[int], Sequence[Window]]) -> list[Window]:
    """Intervals of points y with f^i(y) in windows_at(i) for every i < n."""

    fn = _require_exact(system)
    lower, upper = system.domain.lower[0], system.domain.upper[0]
    breakpoints = tuple(sorted(system.metadata["breakpoints"]))
    pieces: list[Window] = [(lower, upper)]
    for i in range(n):
        windows = _clip_windows(windows_at(i), lower, upper)
        refined: list[Window] = []
        for lo, hi in pieces:
            inner_lo = math.nextafter(lo, hi)
            inner_hi = math.nextafter(hi, lo)
            g_lo, g_hi = _iterate(fn, inner_lo, i), _iterate(fn, inner_hi, i)
            img_lo, img_hi = min(g_lo, g_hi), max(g_lo, g_hi)
            for wlo, whi in windows:
                a, b = max(wlo, img_lo), min(whi, img_hi)
                if b <= a:
                    continue
                cuts = [a]
                if i < n - 1:
                    cuts += [p for p in breakpoints if a < p < b]
                cuts.append(b)
                for t0, t1 in zip(cuts, cuts[1:]):
                    y0 = _solve(fn, i, lo, hi, g_lo, g_hi, t0)
                    y1 = _solve(fn, i, lo, hi, g_lo, g_hi, t1)
                    if y0 > y1:
                        y0, y1 = y1, y0
                    if y1 > y0:
                        refined.append((y0, y1))
        pieces = refined
        if not pieces:
            break
    return pieces


def measure(pieces: Sequence[Window]) -> float:
    return math.fsum(hi - lo for lo, hi in pieces)


def _ball_window(system: DynamicalSystem, centre: float, r: float) -> list[Window]:
    lower, upper = system.domain.lower[0], system.domain.upper[0]
    lo, hi = centre - r, centre + r
    if not system.domain.periodic[0]:
        return [(lo, hi)]
    span = upper - lower
    windows = [(lo, hi)]
    if lo < lower:
        windows.append((lo + span, hi + span))
    if hi > upper:
        windows.append((lo - span, hi - span))
    return windows


def ball_intervals(system: DynamicalSystem, x: float, n: int, r: float) -> list[Window]:
    """B(x, n, r) = {y : d(f^i y, f^i x) < r, i < n} as a union of intervals."""

    if r <= 0.0:
        raise EstimationError("ball radius must be positive")
    _require_exact(system)
    centres = system.orbit(float(x), n)
    return refine(system, n, lambda i: _ball_window(system, float(centres[i]), r))


def ball_measure_exact(system: DynamicalSystem, x: float, n: int, r: float) -> float:
    return measure(ball_intervals(system, x, n, r))


def survivor_intervals(system: DynamicalSystem, region: Region, n: int) -> list[Window]:
    """{x : x, f(x), ..., f^{n-1}(x) in K}."""

    if region.dimension != 1:
        raise EstimationError("exact survivor enumeration needs a 1-D region")
    windows = [box[0] for box in region.boxes]
    return refine(system, n, lambda i: windows)


def survivor_measure_exact(system: DynamicalSystem, region: Region, n: int) -> float:
    return measure(survivor_intervals(system, region, n))
