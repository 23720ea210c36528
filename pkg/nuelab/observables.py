"""Observables phi: M -> R evaluated on batches of points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .model import DomainSpec, Region, SystemConfigError

KINDS = ("constant", "coordinate", "digit", "power", "table", "plateau")


@dataclass(frozen=True)
class Observable:
    """A named, picklable observable.

    ``kind`` selects the formula, ``params`` holds its constants:

    * ``constant``   value
    * ``coordinate`` axis
    * ``digit``      axis; the indicator of [1/2, 1) after reduction mod 1
    * ``power``      axis, exponent
    * ``table``      xs, ys; linear interpolation, clamped at the ends
    * ``plateau``    boxes, width; 1 on the region, falling linearly to 0 within ``width``
    """

    name: str
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SystemConfigError(f"unknown observable kind '{self.kind}'")
        if self.kind == "table":
            xs = self.params.get("xs", ())
            ys = self.params.get("ys", ())
            if len(xs) < 2 or len(xs) != len(ys):
                raise SystemConfigError("table observable needs matching xs/ys with at least two nodes")
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise SystemConfigError("table observable nodes must be strictly increasing")
            if not all(math.isfinite(v) for v in ys):
                raise SystemConfigError("table observable values must be finite")
        if self.kind == "plateau" and float(self.params.get("width", 0.0)) <= 0.0:
            raise SystemConfigError("plateau observable needs a positive width")

    # ---------------------------------------------------------------- constructors
    @classmethod
    def constant(cls, value: float) -> Observable:
        return cls(f"const({value:g})", "constant", {"value": float(value)})

    @classmethod
    def coordinate(cls, axis: int = 0) -> Observable:
        return cls("x" if axis == 0 else f"x{axis}", "coordinate", {"axis": axis})

    @classmethod
    def digit(cls, axis: int = 0) -> Observable:
        return cls("digit", "digit", {"axis": axis})

    @classmethod
    def power(cls, exponent: float, axis: int = 0) -> Observable:
        return cls(f"x^{exponent:g}", "power", {"axis": axis, "exponent": float(exponent)})

    @classmethod
    def table(cls, xs, ys, name: str = "table") -> Observable:
        return cls(name, "table", {"xs": tuple(float(v) for v in xs), "ys": tuple(float(v) for v in ys)})

    @classmethod
    def plateau(cls, region: Region, width: float) -> Observable:
        return cls("plateau", "plateau", {"boxes": region.boxes, "width": float(width)})

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any] | str) -> Observable:
        """Build from a config entry: a bare kind name or a table with ``kind`` and params."""

        if isinstance(payload, str):
            payload = {"kind": payload}
        data = dict(payload)
        kind = data.pop("kind", None)
        if kind == "constant":
            return cls.constant(data.get("value", 0.0))
        if kind == "coordinate":
            return cls.coordinate(int(data.get("axis", 0)))
        if kind == "digit":
            return cls.digit(int(data.get("axis", 0)))
        if kind == "power":
            return cls.power(float(data.get("exponent", 2.0)), int(data.get("axis", 0)))
        if kind == "table":
            return cls.table(data.get("xs", ()), data.get("ys", ()), data.get("name", "table"))
        if kind == "plateau":
            region = Region.from_boxes(data.get("boxes", ())) if "boxes" in data else Region.from_intervals(data.get("intervals", ()))
            return cls.plateau(region, float(data.get("width", 0.05)))
        raise SystemConfigError(f"unknown observable kind '{kind}'")

    def to_payload(self) -> dict[str, Any]:
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}
        return {"name": self.name, "kind": self.kind, **params}

    # ---------------------------------------------------------------- evaluation
    def _axis(self, points: np.ndarray) -> np.ndarray:
        if points.ndim <= 1:
            return points
        return points[..., int(self.params.get("axis", 0))]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        kind = self.kind
        if kind == "constant":
            shape = pts.shape if pts.ndim <= 1 else pts.shape[:-1]
            return np.full(shape, self.params["value"])
        if kind == "coordinate":
            return np.array(self._axis(pts), dtype=float)
        if kind == "digit":
            return (np.mod(self._axis(pts), 1.0) >= 0.5).astype(float)
        if kind == "power":
            return self._axis(pts) ** self.params["exponent"]
        if kind == "table":
            return np.interp(self._axis(pts), self.params["xs"], self.params["ys"])
        return self._plateau(pts)

    def _plateau(self, pts: np.ndarray) -> np.ndarray:
        boxes = self.params["boxes"]
        coords = pts[..., None] if len(boxes[0]) == 1 else pts
        best = np.full(coords.shape[:-1], np.inf)
        for box in boxes:
            gap = np.zeros(coords.shape[:-1])
            for axis, (lo, hi) in enumerate(box):
                c = coords[..., axis]
                gap = np.maximum(gap, np.maximum(lo - c, c - hi))
            best = np.minimum(best, np.maximum(gap, 0.0))
        return np.clip(1.0 - best / self.params["width"], 0.0, 1.0)

    def value_range(self, domain: DomainSpec) -> tuple[float, float]:
        """Exact (min, max) of the observable over the domain."""

        kind = self.kind
        if kind == "constant":
            v = self.params["value"]
            return v, v
        if kind in ("digit", "plateau"):
            return 0.0, 1.0
        if kind == "table":
            return min(self.params["ys"]), max(self.params["ys"])
        axis = int(self.params.get("axis", 0))
        lo, hi = domain.lower[axis], domain.upper[axis]
        if kind == "coordinate":
            return lo, hi
        exponent = self.params["exponent"]
        candidates = [lo**exponent, hi**exponent]
        if lo < 0.0 < hi:
            candidates.append(0.0)
        return min(candidates), max(candidates)

    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "table" and len(set(self.params["ys"])) == 1)

    def check_bounded(self, domain: DomainSpec, samples: int = 10_000, seed: int = 0) -> float:
        """Largest |phi| on a uniform sample of the domain; raises if not finite."""

        values = self(domain.sample(np.random.default_rng(seed), samples))
        if not np.all(np.isfinite(values)):
            raise SystemConfigError(f"observable '{self.name}' is unbounded on {domain.describe()}")
        return float(np.max(np.abs(values)))
