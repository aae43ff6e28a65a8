"""Piece-wise linear functions on [0, 1] and the grid arithmetic used by the learner.

A :class:`PiecewiseLinear` behaves like an ordered dictionary of breakpoints:
``d.update(x, y)`` interpolates one more point, or overwrites the ordinate when
``x`` is already a breakpoint.  Values are immutable; every mutation returns a
new object.
"""
from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, RangeError

# Loads within this distance of [0, 1] are clamped instead of rejected.
DOMAIN_TOL = 1e-12
# Abscissas closer than this are treated as the same dictionary key.
KEY_TOL = 1e-14
# Relative (to the grid spacing) distance under which a load snaps to a grid point.
SNAP_REL_TOL = 1e-6


def clip(a: float, l: float, r: float) -> float:
    """Clamp ``a`` into ``[l, r]``."""
    if l > r:
        raise ValueError(f"clip bounds out of order: l={l!r} > r={r!r}")
    return min(max(a, l), r)


def _check_unit(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < -DOMAIN_TOL) or np.any(arr > 1.0 + DOMAIN_TOL) or np.any(np.isnan(arr)):
        raise DomainError(f"argument outside [0, 1]: {x!r}")
    return np.clip(arr, 0.0, 1.0)


class PiecewiseLinear:
    """Linear interpolation through breakpoints ``(x_1, y_1), ..., (x_n, y_n)``.

    ``x_1 = 0`` and ``x_n = 1`` are required so the function is defined on the
    whole unit interval.  With ``monotone=True`` every construction and update
    checks that ordinates are non-decreasing.
    """

    __slots__ = ("_xs", "_ys", "monotone")

    def __init__(self, points: Iterable[tuple[float, float]], monotone: bool = False):
        pts = sorted((float(x), float(y)) for x, y in points)
        xs = np.array([p[0] for p in pts], dtype=float)
        ys = np.array([p[1] for p in pts], dtype=float)
        if xs.size < 2:
            raise ValueError("a piece-wise linear function needs at least two breakpoints")
        if xs[0] != 0.0 or xs[-1] != 1.0:
            raise ValueError(f"breakpoints must span [0, 1], got [{xs[0]}, {xs[-1]}]")
        if np.any(np.diff(xs) <= 0.0):
            raise ValueError("breakpoint abscissas must be strictly increasing")
        if not np.all(np.isfinite(ys)):
            raise ValueError("breakpoint ordinates must be finite")
        if monotone and np.any(np.diff(ys) < 0.0):
            raise ValueError("monotone piece-wise linear function has decreasing ordinates")
        xs.setflags(write=False)
        ys.setflags(write=False)
        self._xs = xs
        self._ys = ys
        self.monotone = monotone

    @classmethod
    def line(cls, y0: float, y1: float, monotone: bool = False) -> "PiecewiseLinear":
        return cls([(0.0, y0), (1.0, y1)], monotone=monotone)

    @property
    def xs(self) -> np.ndarray:
        return self._xs

    @property
    def ys(self) -> np.ndarray:
        return self._ys

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self._xs.tolist(), self._ys.tolist()))

    def __len__(self) -> int:
        return self._xs.size

    def __repr__(self) -> str:
        inner = ", ".join(f"({x:.6g}, {y:.6g})" for x, y in self.breakpoints)
        return f"PiecewiseLinear({{{inner}}})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PiecewiseLinear):
            return NotImplemented
        return np.array_equal(self._xs, other._xs) and np.array_equal(self._ys, other._ys)

    def _segment(self, x: np.ndarray) -> np.ndarray:
        # index i such that x lies in [xs[i], xs[i+1]]
        i = np.searchsorted(self._xs, x, side="right") - 1
        return np.clip(i, 0, self._xs.size - 2)

    def __call__(self, x):
        """Evaluate by the two-point interpolation formula on the bracketing segment."""
        xv = _check_unit(x)
        i = self._segment(xv)
        x0, x1 = self._xs[i], self._xs[i + 1]
        y0, y1 = self._ys[i], self._ys[i + 1]
        val = (xv - x1) / (x0 - x1) * y0 + (x0 - xv) / (x0 - x1) * y1
        # breakpoints are reproduced exactly
        val = np.where(xv == x0, y0, np.where(xv == x1, y1, val))
        return float(val) if np.ndim(val) == 0 else val

    eval = __call__

    def slope(self, x):
        """Right derivative (left derivative at x = 1)."""
        xv = _check_unit(x)
        i = self._segment(xv)
        s = (self._ys[i + 1] - self._ys[i]) / (self._xs[i + 1] - self._xs[i])
        return float(s) if np.ndim(s) == 0 else s

    def min_slope(self) -> float:
        return float(np.min(np.diff(self._ys) / np.diff(self._xs)))

    def integral(self, x):
        """Exact value of the integral from 0 to ``x`` (segment-wise trapezoids)."""
        xv = _check_unit(x)
        seg = np.diff(self._xs) * (self._ys[:-1] + self._ys[1:]) / 2.0
        cum = np.concatenate(([0.0], np.cumsum(seg)))
        i = self._segment(xv)
        x0 = self._xs[i]
        y0 = self._ys[i]
        yx = self.__call__(xv)
        val = cum[i] + (xv - x0) * (y0 + yx) / 2.0
        return float(val) if np.ndim(val) == 0 else val

    def index_of(self, x: float) -> int | None:
        """Index of the breakpoint at abscissa ``x`` (within KEY_TOL), else None."""
        xs = self._xs.tolist()
        lo = bisect.bisect_left(xs, x - KEY_TOL)
        hi = bisect.bisect_right(xs, x + KEY_TOL)
        if lo >= hi:
            return None
        # several breakpoints may lie within the tolerance: take the nearest
        return min(range(lo, hi), key=lambda j: abs(xs[j] - x))

    def update(self, x: float, y: float) -> "PiecewiseLinear":
        """Return ``d ∪ (x, y)``: insert a breakpoint, or overwrite an existing one."""
        x = float(_check_unit(x))
        pts = self.breakpoints
        j = self.index_of(x)
        if j is not None and (pts[j][0] == x or 0 < j < len(pts) - 1):
            # interior keys move onto x so that evaluating at x returns y exactly
            pts[j] = (x, float(y))
        else:
            # the endpoints 0 and 1 are fixed: a nearby x gets its own breakpoint
            pts.append((x, float(y)))
        return PiecewiseLinear(pts, monotone=self.monotone)

    def shift(self, c: float) -> "PiecewiseLinear":
        """Add the constant ``c`` to the function."""
        return PiecewiseLinear(zip(self._xs, self._ys + c), monotone=self.monotone)

    def add_linear(self, slope: float) -> "PiecewiseLinear":
        """Add ``slope * x``; exact because a linear term keeps the breakpoints."""
        return PiecewiseLinear(zip(self._xs, self._ys + slope * self._xs), monotone=self.monotone)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in self.breakpoints:
            w.writerow([f"{x:.12g}", f"{y:.12g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, monotone: bool = False) -> "PiecewiseLinear":
        rows = list(csv.reader(io.StringIO(text)))
        if rows and rows[0] == ["x", "y"]:
            rows = rows[1:]
        return cls(((float(x), float(y)) for x, y in rows if x), monotone=monotone)


@dataclass(frozen=True)
class Grid:
    """The uniform grid {0, 1/K, ..., 1}."""

    K: int

    def __post_init__(self):
        if not isinstance(self.K, (int, np.integer)) or self.K < 1:
            raise ValueError(f"grid resolution must be a positive integer, got {self.K!r}")

    @classmethod
    def for_tolerance(cls, beta: float, eps: float) -> "Grid":
        return cls(int(math.ceil(2.0 * beta / eps)))

    @property
    def spacing(self) -> float:
        return 1.0 / self.K

    def point(self, i: int) -> float:
        return i / self.K

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.K + 1) / self.K

    def snap_index(self, x: float) -> int | None:
        """Grid index whose point is within ``spacing * SNAP_REL_TOL`` of ``x``."""
        i = int(round(x * self.K))
        if 0 <= i <= self.K and abs(x - i / self.K) <= self.spacing * SNAP_REL_TOL:
            return i
        return None

    def floor_index(self, x: float) -> int:
        x = float(_check_unit(x))
        snapped = self.snap_index(x)
        if snapped is not None:
            return snapped
        return min(int(math.floor(x * self.K)), self.K)

    def ceil_index(self, x: float) -> int:
        x = float(_check_unit(x))
        snapped = self.snap_index(x)
        if snapped is not None:
            return snapped
        return max(int(math.ceil(x * self.K)), 0)


@dataclass(frozen=True)
class KnownIndexSet:
    """Grid points (stored as integer grid indices) where the tax is trusted."""

    grid: Grid
    indices: frozenset = frozenset({0})

    def __post_init__(self):
        idx = frozenset(int(i) for i in self.indices)
        if 0 not in idx:
            raise ValueError("a known index set always contains 0")
        if any(i < 0 or i > self.grid.K for i in idx):
            raise ValueError("known indices must be grid indices")
        object.__setattr__(self, "indices", idx)

    def __contains__(self, i: int) -> bool:
        return i in self.indices

    def __len__(self) -> int:
        return len(self.indices)

    def add(self, *idx: int) -> "KnownIndexSet":
        return KnownIndexSet(self.grid, self.indices | frozenset(idx))

    @property
    def points(self) -> list[float]:
        return [self.grid.point(i) for i in sorted(self.indices)]

    def with_one(self) -> list[float]:
        """Member points together with the right endpoint 1."""
        return sorted(set(self.points) | {1.0})


def _as_points(members) -> list[float]:
    if isinstance(members, Grid):
        return members.points.tolist()
    if isinstance(members, KnownIndexSet):
        return members.points
    return sorted(float(m) for m in members)


def grid_floor(members: Grid | KnownIndexSet | Sequence[float], x: float) -> float:
    """Largest member that is <= x.

    For a :class:`Grid`, loads within the snap tolerance of a grid point are
    treated as lying exactly on it.
    """
    if isinstance(members, Grid):
        return members.point(members.floor_index(x))
    pts = _as_points(members)
    j = bisect.bisect_right(pts, x) - 1
    if j < 0:
        raise RangeError(f"no member <= {x!r}")
    return pts[j]


def grid_ceil(members: Grid | KnownIndexSet | Sequence[float], x: float) -> float:
    """Smallest member that is >= x (pass ``K.with_one()`` for the augmented set)."""
    if isinstance(members, Grid):
        return members.point(members.ceil_index(x))
    pts = _as_points(members)
    j = bisect.bisect_left(pts, x)
    if j >= len(pts):
        raise RangeError(f"no member >= {x!r}")
    return pts[j]
