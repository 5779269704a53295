"""Uniform tensor grids, far-field models, and grid functions.

A Grid is a uniform tensor product of nodes over a box; node coordinates
are always reconstructed as lo + index * spacing so they are bit-stable
across calls. A GridFunction carries node values plus a far-field model
describing the function outside the box; evaluation anywhere combines
multilinear interpolation inside with the model outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .registry import Expression, make_expression


class FarFieldGapError(ValueError):
    """Point falls outside the box but inside the far-field validity radius."""


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    nodes_per_axis: int

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have the same dimension")
        if len(lo) not in (1, 2):
            raise ValueError(f"grids support N in {{1, 2}}, got N = {len(lo)}")
        if self.nodes_per_axis < 2:
            raise ValueError("need at least 2 nodes per axis")
        spans = [b - a for a, b in zip(lo, hi)]
        if any(w <= 0 for w in spans):
            raise ValueError("box must have positive extent")
        h = spans[0] / (self.nodes_per_axis - 1)
        for w in spans[1:]:
            if not math.isclose(w / (self.nodes_per_axis - 1), h, rel_tol=1e-12):
                raise ValueError("spacing must be uniform across axes (square cells)")

    @property
    def N(self) -> int:
        return len(self.lo)

    @property
    def spacing(self) -> float:
        return (self.hi[0] - self.lo[0]) / (self.nodes_per_axis - 1)

    @property
    def shape(self) -> tuple:
        return (self.nodes_per_axis,) * self.N

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.N

    def axis(self, d: int = 0) -> np.ndarray:
        return self.lo[d] + np.arange(self.nodes_per_axis) * self.spacing

    def coordinate(self, index) -> np.ndarray:
        """Node coordinate lo + k*h, bit-exact from the integer index."""
        idx = np.atleast_1d(np.asarray(index))
        return np.array([self.lo[d] + int(idx[d]) * self.spacing for d in range(self.N)])

    @cached_property
    def points(self) -> np.ndarray:
        """All node coordinates, shape (M, N) in C order of the value array."""
        if self.N == 1:
            return self.axis(0).reshape(-1, 1)
        x0, x1 = np.meshgrid(self.axis(0), self.axis(1), indexing="ij")
        return np.stack([x0.ravel(), x1.ravel()], axis=1)

    def norms(self) -> np.ndarray:
        """Euclidean norm of every node, in the shape of a value array."""
        return np.sqrt(np.sum(self.points**2, axis=1)).reshape(self.shape)

    def min_exterior_norm(self) -> float:
        """Smallest |y| over points y just outside the box (origin inside)."""
        inside = all(a < 0.0 < b for a, b in zip(self.lo, self.hi))
        if not inside:
            return 0.0
        return min(min(-a for a in self.lo), min(b for b in self.hi))


@dataclass(frozen=True)
class FarField:
    """Behaviour of a function outside the grid box.

    kind 'zero' or 'constant': exact constant model, valid everywhere outside.
    kind 'power_law': A * |x|^exponent for |x| >= valid_radius.
    kind 'closed_form': a registry expression, valid everywhere.
    """

    kind: str
    value: float = 0.0
    amplitude: float = 0.0
    exponent: float = 0.0
    expr: Expression | None = None
    valid_radius: float = 0.0

    _KINDS = ("zero", "constant", "power_law", "closed_form")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"far-field kind must be one of {self._KINDS}, got {self.kind!r}")
        if self.kind == "closed_form" and self.expr is None:
            raise ValueError("closed_form far field needs an expression")

    @classmethod
    def zero(cls) -> "FarField":
        return cls(kind="zero")

    @classmethod
    def constant(cls, value: float) -> "FarField":
        return cls(kind="constant", value=float(value))

    @classmethod
    def power_law(cls, amplitude: float, exponent: float, valid_radius: float = 0.0) -> "FarField":
        return cls(kind="power_law", amplitude=float(amplitude), exponent=float(exponent),
                   valid_radius=float(valid_radius))

    @classmethod
    def closed_form(cls, expr) -> "FarField":
        return cls(kind="closed_form", expr=make_expression(expr))

    @property
    def growth_exponent(self) -> float:
        if self.kind == "zero":
            return -math.inf
        if self.kind == "constant":
            return -math.inf if self.value == 0.0 else 0.0
        if self.kind == "power_law":
            return self.exponent if self.amplitude != 0.0 else -math.inf
        return self.expr.growth_exponent

    def check_tail_admissible(self, params) -> None:
        """Require membership in the weighted tail space: growth*(p-1) < sp."""
        g = self.growth_exponent
        if g * (params.p - 1.0) >= params.sp:
            raise ValueError(
                "far field not admissible: growth_exponent*(p-1) = "
                f"{g * (params.p - 1.0)} must be < s*p = {params.sp}"
            )

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        r = np.abs(pts) if pts.ndim <= 1 else np.sqrt(np.sum(pts * pts, axis=-1))
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "constant":
            return np.full_like(r, self.value)
        if self.kind == "power_law":
            with np.errstate(divide="ignore"):
                return self.amplitude * r**self.exponent
        return self.expr(pts)


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray
    far_field: FarField | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", vals)

    def far_mismatch(self) -> float | None:
        """Max |values - model| over box-face nodes where the model applies.

        None when there is no far field or no face node lies at or beyond
        the validity radius. Recorded as a diagnostic, never enforced.
        """
        if self.far_field is None:
            return None
        g = self.grid
        mask = np.zeros(g.shape, dtype=bool)
        if g.N == 1:
            mask[0] = mask[-1] = True
        else:
            mask[0, :] = mask[-1, :] = True
            mask[:, 0] = mask[:, -1] = True
        pts = g.points[mask.ravel()]
        norms = np.sqrt(np.sum(pts * pts, axis=1))
        ok = norms >= self.far_field.valid_radius
        if self.far_field.kind == "closed_form":
            ok = np.ones_like(ok)
        if not np.any(ok):
            return None
        model = self.far_field(pts[ok])
        return float(np.max(np.abs(self.values[mask][ok] - model)))

    def scaled(self, factor: float) -> "GridFunction":
        far = self.far_field
        if far is not None and far.kind in ("constant", "power_law"):
            far = FarField(kind=far.kind, value=far.value * factor,
                           amplitude=far.amplitude * factor, exponent=far.exponent,
                           valid_radius=far.valid_radius)
        elif far is not None and far.kind == "closed_form" and factor != 1.0:
            raise ValueError("cannot scale a closed-form far field")
        return GridFunction(self.grid, self.values * factor, far)


def evaluate(u: GridFunction, x) -> float:
    """Evaluate a grid function anywhere.

    Inside the box: multilinear interpolation, exact (bit-identical) at
    nodes. Outside: the far-field model, a closed form if present, else
    the power-law/constant model for |x| >= valid_radius; points in the
    gap between the box and the validity radius raise FarFieldGapError.
    """
    g = u.grid
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != g.N:
        raise ValueError(f"point dimension {x.size} != grid dimension {g.N}")
    h = g.spacing
    inside = all(g.lo[d] - 1e-12 * h <= x[d] <= g.hi[d] + 1e-12 * h for d in range(g.N))
    if not inside:
        if u.far_field is None:
            raise FarFieldGapError(f"point {x} outside box and no far-field model attached")
        ff = u.far_field
        if ff.kind != "closed_form" and float(np.sqrt(np.sum(x * x))) < ff.valid_radius:
            raise FarFieldGapError(
                f"point {x} lies in the gap between the box and valid_radius = {ff.valid_radius}"
            )
        return float(ff(x if g.N > 1 else x[0]))

    idx = []
    frac = []
    for d in range(g.N):
        t = (x[d] - g.lo[d]) / h
        i = int(np.floor(t))
        i = min(max(i, 0), g.nodes_per_axis - 2)
        f = t - i
        # snap to the node so node queries reproduce stored values bit-exactly
        if abs(f) < 1e-12:
            f = 0.0
        elif abs(f - 1.0) < 1e-12:
            f = 1.0
        idx.append(i)
        frac.append(f)

    v = u.values
    if g.N == 1:
        i, f = idx[0], frac[0]
        if f == 0.0:
            return float(v[i])
        if f == 1.0:
            return float(v[i + 1])
        return float(v[i] * (1.0 - f) + v[i + 1] * f)
    i0, i1 = idx
    f0, f1 = frac
    if f0 == 0.0 and f1 == 0.0:
        return float(v[i0, i1])
    c = (v[i0, i1] * (1 - f0) * (1 - f1)
         + v[i0 + 1, i1] * f0 * (1 - f1)
         + v[i0, i1 + 1] * (1 - f0) * f1
         + v[i0 + 1, i1 + 1] * f0 * f1)
    return float(c)


def sample_closed_form(expr, grid: Grid, far_field: FarField | str | None = "auto") -> GridFunction:
    """Sample a registry expression on a grid.

    Non-finite node values (a singular node, e.g. a negative power at the
    origin) are replaced by the symmetric two-sided limit along the axes
    when that limit stabilizes to a finite value, and rejected otherwise.
    far_field='auto' attaches the expression itself as a closed-form model.
    """
    e = make_expression(expr)
    pts = grid.points if grid.N > 1 else grid.points[:, 0]
    vals = np.asarray(e(pts), dtype=float).reshape(grid.shape)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        h = grid.spacing
        flat = grid.points.reshape(-1, grid.N)
        for flat_i in np.flatnonzero(bad.ravel()):
            x = flat[flat_i]
            probes = []
            for eps in (h / 4.0, h / 8.0, h / 16.0):
                acc = 0.0
                for d in range(grid.N):
                    step = np.zeros(grid.N)
                    step[d] = eps
                    pair = np.stack([x + step, x - step])
                    pv = e(pair if grid.N > 1 else pair[:, 0])
                    acc += float(np.mean(pv))
                probes.append(acc / grid.N)
            probes = np.array(probes)
            if np.all(np.isfinite(probes)) and abs(probes[-1] - probes[-2]) <= 1e-6 * max(1.0, abs(probes[-1])):
                vals.ravel()[flat_i] = probes[-1]
            else:
                raise ValueError(
                    f"expression {e.expr_id!r} is singular at node {x} and the symmetric limit does not exist"
                )
    if far_field == "auto":
        far_field = FarField.closed_form(e)
    return GridFunction(grid, vals, far_field)


def ball_mask(grid: Grid, center, radius: float) -> np.ndarray:
    """Boolean node mask of the closed ball; tolerance one part in 1e9 of h."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    d = grid.points - c[None, :]
    r = np.sqrt(np.sum(d * d, axis=1))
    return (r <= radius + 1e-9 * grid.spacing).reshape(grid.shape)


def box_mask(grid: Grid, lo, hi) -> np.ndarray:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    tol = 1e-9 * grid.spacing
    ok = np.all((grid.points >= lo[None, :] - tol) & (grid.points <= hi[None, :] + tol), axis=1)
    return ok.reshape(grid.shape)
