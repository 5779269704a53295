"""Difference quotients, smoothness seminorms, and regularity fits.

Everything is measured on lattice shifts: delta_h u(x) = u(x + h) - u(x)
with h an integer multiple of the grid spacing, so shifted nodes land on
nodes again and the only off-lattice evaluations are far-field fills
outside the box. Second differences are literal compositions of first
differences, seminorms are discrete L^q norms of the quotients, and the
fitted Holder exponent comes from log-log regression of ball oscillations
against effective radii.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .grid import FarFieldGapError, Grid, GridFunction, ball_mask
from .kernels import pair_sup, pow_pair_sum
from .params import QINF, Params, _frac, omega_n


# ---------------------------------------------------------------------------
# lattice shifts


def _as_shift(grid: Grid, shift) -> np.ndarray:
    k = np.atleast_1d(np.asarray(shift))
    if k.size != grid.N:
        raise ValueError(f"shift dimension {k.size} != grid dimension {grid.N}")
    if not np.all(k == np.round(k)):
        raise ValueError(f"shifts are integer numbers of cells, got {shift}")
    k = k.astype(int)
    if np.all(k == 0):
        raise ValueError("shift must be nonzero")
    return k


def _far_eval(u: GridFunction, pts: np.ndarray) -> np.ndarray:
    """Evaluate the far-field model at exterior points, gap-checked."""
    far = u.far_field
    if far is None:
        raise ValueError(
            "shift leaves the box at some nodes; attach a far-field model to the input"
        )
    if far.kind != "closed_form" and far.valid_radius > 0.0:
        norms = np.sqrt(np.sum(pts * pts, axis=1))
        bad = norms < far.valid_radius - 1e-12
        if np.any(bad):
            raise FarFieldGapError(
                f"shifted nodes fall in the gap between the box and valid_radius = {far.valid_radius}"
            )
    return np.asarray(far(pts if u.grid.N > 1 else pts[:, 0]), dtype=float)


def _shift_slices(m: int, k: int):
    dst = slice(max(0, -k), m - max(0, k))
    src = slice(max(0, k), m - max(0, -k))
    return dst, src


def shifted_values(u: GridFunction, shift) -> np.ndarray:
    """u(x + k*h) at every node: index shifts inside, far-field fill outside."""
    g = u.grid
    k = _as_shift(g, shift)
    out = np.empty(g.shape)
    pairs = [_shift_slices(g.nodes_per_axis, int(kd)) for kd in k]
    dst = tuple(p[0] for p in pairs)
    src = tuple(p[1] for p in pairs)
    out[dst] = u.values[src]
    mask = np.ones(g.shape, dtype=bool)
    mask[dst] = False
    if np.any(mask):
        pts = g.points[mask.ravel()] + (k * g.spacing)[None, :]
        out[mask] = _far_eval(u, pts)
    return out


def delta(u: GridFunction, shift, order: int = 1) -> GridFunction:
    """Difference delta_h u = u(. + h) - u; order 2 composes delta with itself.

    The order-2 values are computed literally as the first difference of the
    first-difference field (extended outside the box through u's far-field
    model), which agrees bitwise with u(x+2h) - 2u(x+h) + u(x).
    """
    g = u.grid
    k = _as_shift(g, shift)
    if order == 1:
        return GridFunction(g, shifted_values(u, k) - u.values, None)
    if order != 2:
        raise ValueError("only orders 1 and 2 are supported")
    d1 = shifted_values(u, k) - u.values
    # shift the difference field itself, filling exterior entries from the
    # far model: d1(x) = u(x + h) - u(x) wherever x leaves the box
    out = np.empty(g.shape)
    pairs = [_shift_slices(g.nodes_per_axis, int(kd)) for kd in k]
    dst = tuple(p[0] for p in pairs)
    src = tuple(p[1] for p in pairs)
    out[dst] = d1[src]
    mask = np.ones(g.shape, dtype=bool)
    mask[dst] = False
    if np.any(mask):
        pts = g.points[mask.ravel()] + (k * g.spacing)[None, :]
        out[mask] = _far_eval(u, pts + (k * g.spacing)[None, :]) - _far_eval(u, pts)
    return GridFunction(g, out - d1, None)


# ---------------------------------------------------------------------------
# discrete norms and windows


def _window_mask(grid: Grid, window) -> np.ndarray:
    if window is None:
        return np.ones(grid.shape, dtype=bool)
    mask = np.asarray(window, dtype=bool)
    if mask.shape != grid.shape:
        raise ValueError(f"window shape {mask.shape} != grid shape {grid.shape}")
    if not np.any(mask):
        raise ValueError("window contains no nodes")
    return mask


def lq_norm(values: np.ndarray, q: float, cell_volume: float, mask=None) -> float:
    """Discrete L^q norm: (sum |v|^q * cell_volume)^(1/q), max for q = inf."""
    v = values[mask] if mask is not None else values
    if math.isinf(q):
        return float(np.max(np.abs(v))) if v.size else 0.0
    return float(np.sum(np.abs(v) ** q) * cell_volume) ** (1.0 / q)


def default_shifts(grid: Grid, max_fraction: float = 0.5) -> tuple:
    """Dyadic axis-aligned lattice shifts 1, 2, 4, ... per axis."""
    cap = max(1, int((grid.nodes_per_axis - 1) * max_fraction))
    out = []
    for d in range(grid.N):
        k = 1
        while k <= cap:
            vec = [0] * grid.N
            vec[d] = k
            out.append(tuple(vec))
            k *= 2
    return tuple(out)


@dataclass(frozen=True)
class QuotientRow:
    shift: tuple
    distance: float
    norm: float

    def quotient(self, exponent: float) -> float:
        return self.norm / self.distance**exponent


def quotient_profile(u: GridFunction, q: float, order: int = 1, shifts=None,
                     window=None) -> tuple:
    """L^q norms of order-1/2 differences for each lattice shift."""
    g = u.grid
    if shifts is None:
        shifts = default_shifts(g)
    mask = _window_mask(g, window)
    rows = []
    for sh in shifts:
        k = _as_shift(g, sh)
        dist = float(np.sqrt(np.sum((k * g.spacing) ** 2)))
        d = delta(u, k, order=order)
        rows.append(QuotientRow(tuple(int(v) for v in k), dist,
                                lq_norm(d.values, q, g.cell_volume, mask)))
    return tuple(rows)


def nikolskii_seminorm(u: GridFunction, beta: float, q: float, shifts=None,
                       window=None) -> float:
    """sup over shifts of ||delta_h u||_Lq / |h|^beta (first differences)."""
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"first-difference smoothness needs beta in (0, 1], got {beta}")
    rows = quotient_profile(u, q, order=1, shifts=shifts, window=window)
    return max(r.quotient(beta) for r in rows)


def besov2_seminorm(u: GridFunction, beta: float, q: float, shifts=None,
                    window=None) -> float:
    """sup over shifts of ||delta_h^2 u||_Lq / |h|^beta (second differences)."""
    if not (0.0 < beta < 2.0):
        raise ValueError(f"second-difference smoothness needs beta in (0, 2), got {beta}")
    rows = quotient_profile(u, q, order=2, shifts=shifts, window=window)
    return max(r.quotient(beta) for r in rows)


# ---------------------------------------------------------------------------
# integral seminorms


def _mask_is_box(mask: np.ndarray) -> tuple | None:
    """Slices of the bounding box when the mask is exactly a box, else None."""
    idx = np.nonzero(mask)
    slices = []
    count = 1
    for coords in idx:
        lo, hi = int(coords.min()), int(coords.max())
        slices.append(slice(lo, hi + 1))
        count *= hi - lo + 1
    if count == int(np.sum(mask)):
        return tuple(slices)
    return None


def _pair_weight_table(grid_shape, h: float, N: int, exponent: float) -> np.ndarray:
    m = grid_shape[0]
    if N == 1:
        k = np.arange(m, dtype=float)
        with np.errstate(divide="ignore"):
            w = (k * h) ** exponent
        w[0] = 0.0
        return w
    di = np.arange(m, dtype=float)
    dist = h * np.sqrt(di[:, None] ** 2 + di[None, :] ** 2)
    with np.errstate(divide="ignore"):
        w = dist**exponent
    w[0, 0] = 0.0
    return w


def _masked_pair_pow(points: np.ndarray, vals: np.ndarray, q: float,
                     wexp: float, chunk: int = 512) -> float:
    total = 0.0
    m = points.shape[0]
    for a in range(0, m, chunk):
        b = min(a + chunk, m)
        d = points[a:b, None, :] - points[None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=2))
        dv = np.abs(vals[a:b, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = dv**q * dist**wexp
        contrib[~np.isfinite(contrib)] = 0.0
        total += float(np.sum(contrib))
    return total


def slobodeckii_seminorm(u: GridFunction, beta: float, q: float, window=None,
                         return_details: bool = False):
    """Double-sum Gagliardo energy over the window, without the 1/q root.

    sum over ordered node pairs of |u_i - u_j|^q |x_i - x_j|^(-N - beta q)
    * h^(2N), the diagonal excluded. The omitted same-cell contribution is
    estimated from local slopes and reported via return_details.
    """
    if not (0.0 < beta < 1.0):
        raise ValueError(f"Gagliardo seminorm needs beta in (0, 1), got {beta}")
    if q < 1.0 or math.isinf(q):
        raise ValueError("Gagliardo seminorm needs finite q >= 1")
    g = u.grid
    mask = _window_mask(g, window)
    h = g.spacing
    wexp = -(g.N + beta * q)
    box = _mask_is_box(mask)
    if box is not None:
        sub = np.ascontiguousarray(u.values[box])
        if min(sub.shape) >= 2 or g.N == 1:
            table = _pair_weight_table(sub.shape, h, g.N, wexp) * g.cell_volume**2
            value = pow_pair_sum(sub, table, q)
        else:
            value = _masked_pair_pow(g.points[mask.ravel()], u.values[mask], q, wexp) * g.cell_volume**2
    else:
        value = _masked_pair_pow(g.points[mask.ravel()], u.values[mask], q, wexp) * g.cell_volume**2
    if not return_details:
        return value
    slope = np.zeros(g.shape)
    for axis in range(g.N):
        slope = np.maximum(slope, np.abs(np.gradient(u.values, h, axis=axis)))
    e = q * (1.0 - beta)
    per_cell = slope[mask] ** q * g.N * omega_n(g.N) * (h * math.sqrt(g.N)) ** e / e
    omitted = float(np.sum(per_cell)) * g.cell_volume
    return value, {"omitted_diagonal_estimate": omitted, "pairs_window_nodes": int(np.sum(mask))}


def campanato_excess(u: GridFunction, center, radius: float, p: float) -> float:
    """int over ball nodes of |u - mean|^p (cell-volume weights)."""
    g = u.grid
    if radius < 1.5 * g.spacing:
        raise ValueError(
            f"ball of radius {radius} is smaller than 3 cells across (h = {g.spacing})"
        )
    mask = ball_mask(g, center, radius)
    vals = u.values[mask]
    mean = float(np.mean(vals))
    return float(np.sum(np.abs(vals - mean) ** p) * g.cell_volume)


def holder_seminorm(u: GridFunction, gamma: float, window=None) -> float:
    """sup over node pairs of |u_i - u_j| / |x_i - x_j|^gamma."""
    if gamma <= 0.0:
        raise ValueError(f"need gamma > 0, got {gamma}")
    g = u.grid
    mask = _window_mask(g, window)
    box = _mask_is_box(mask)
    if box is not None:
        sub = np.ascontiguousarray(u.values[box])
        if min(sub.shape) >= 2 or g.N == 1:
            table = _pair_weight_table(sub.shape, g.spacing, g.N, -gamma)
            return pair_sup(sub, table)
    pts = g.points[mask.ravel()]
    vals = u.values[mask]
    best = 0.0
    for a in range(0, pts.shape[0], 512):
        b = min(a + 512, pts.shape[0])
        d = pts[a:b, None, :] - pts[None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=2))
        dv = np.abs(vals[a:b, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = dv / dist**gamma
        ratio[~np.isfinite(ratio)] = 0.0
        best = max(best, float(np.max(ratio)))
    return best


# ---------------------------------------------------------------------------
# regularity fits


@dataclass(frozen=True)
class RegularityReport:
    """Log-log oscillation fit over dyadic balls.

    exponent is None when the data is flat (constant to rounding) or
    otherwise degenerate; flags says why.
    """

    center: tuple
    rows: tuple  # dicts: scale, effective_radius, nodes, osc, (excess_rate)
    exponent: float | None
    intercept: float | None
    residual: float | None
    flags: tuple = ()

    def to_json(self) -> str:
        return json.dumps(
            {
                "center": list(self.center),
                "exponent": self.exponent,
                "intercept": self.intercept,
                "residual": self.residual,
                "flags": list(self.flags),
                "rows": [dict(r) for r in self.rows],
            },
            indent=2,
            sort_keys=True,
        )

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scale", "quantity", "value"])
        for row in self.rows:
            for key in sorted(row):
                if key == "scale":
                    continue
                w.writerow([f"{row['scale']!r}", key, repr(row[key])])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_text())


def fit_holder_exponent(u: GridFunction, center, radii, p: float | None = None) -> RegularityReport:
    """Fit osc(B_r) ~ C r^alpha over balls by least squares in log-log.

    The abscissa is the effective radius (the largest node distance from the
    center inside each ball), which removes the lattice-truncation bias of
    the nominal radii. Needs at least 4 scales; constant data is reported
    as flat with exponent None rather than a fake number.
    """
    g = u.grid
    c = np.atleast_1d(np.asarray(center, dtype=float))
    radii = sorted(float(r) for r in radii)
    if len(radii) < 4:
        raise ValueError(f"need at least 4 scales for a fit, got {len(radii)}")
    dist = np.sqrt(np.sum((g.points - c[None, :]) ** 2, axis=1)).reshape(g.shape)
    rows = []
    scale_ref = float(np.max(np.abs(u.values))) if u.values.size else 0.0
    for r in radii:
        mask = dist <= r + 1e-9 * g.spacing
        n = int(np.sum(mask))
        if n < 2:
            raise ValueError(f"ball of radius {r} contains {n} node(s); refine the grid")
        vals = u.values[mask]
        row = {
            "scale": r,
            "effective_radius": float(np.max(dist[mask])),
            "nodes": n,
            "osc": float(np.max(vals) - np.min(vals)),
        }
        if p is not None:
            mean = float(np.mean(vals))
            excess = float(np.sum(np.abs(vals - mean) ** p) * g.cell_volume)
            row["excess_rate"] = (excess / (omega_n(g.N) * r**g.N)) ** (1.0 / p)
        rows.append(row)

    oscs = np.array([row["osc"] for row in rows])
    if np.max(oscs) <= 1e-13 * max(1.0, scale_ref):
        return RegularityReport(tuple(c.tolist()), tuple(rows), None, None, None, ("flat",))
    flags = []
    usable = [row for row in rows if row["osc"] > 0.0 and row["effective_radius"] > 0.0]
    if len(usable) < len(rows):
        flags.append("degenerate scales dropped")
    if len(usable) < 4:
        return RegularityReport(tuple(c.tolist()), tuple(rows), None, None, None,
                                tuple(flags + ["too few usable scales"]))
    lx = np.log([row["effective_radius"] for row in usable])
    ly = np.log([row["osc"] for row in usable])
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.max(np.abs(ly - (slope * lx + intercept))))
    return RegularityReport(tuple(c.tolist()), tuple(rows), float(slope),
                            float(intercept), residual, tuple(flags))


# ---------------------------------------------------------------------------
# the improvement ladder


@dataclass(frozen=True)
class LadderRung:
    level: int
    beta: Fraction
    theta: Fraction
    exponent: Fraction  # (1 + theta*beta)/beta, the quotient exponent at this rung
    hypothesis_ok: bool  # exponent < 1, the regime where the step is meaningful
    identity_ok: bool  # (1 + sp + theta*beta)/(beta + p - 1) equals the next exponent
    measured: tuple | None = None  # QuotientRow tuple when a function was measured
    blow_up: bool | None = None

    @property
    def exponent_float(self) -> float:
        return float(self.exponent)


@dataclass(frozen=True)
class LadderReport:
    params: Params
    rungs: tuple
    theta_limit: Fraction  # sp/(p-1), the fixed point of the recursion

    @property
    def all_identities_ok(self) -> bool:
        return all(r.identity_ok for r in self.rungs)


def ladder_report(params: Params, levels: int = 6, u: GridFunction | None = None,
                  shifts=None, window=None) -> LadderReport:
    """The exponent bookkeeping of the iteration ladder, in exact arithmetic.

    beta_0 = p, beta_{i+1} = beta_i + p - 1; theta_0 = s - 1/p,
    theta_{i+1} = (theta_i beta_i + sp)/beta_{i+1}. Each rung's quotient
    exponent is (1 + theta_i beta_i)/beta_i and the crossover identity
    (1 + sp + theta_i beta_i)/(beta_i + p - 1) = next exponent is checked
    as exact rational arithmetic. When a grid function is supplied, the
    rung's second-difference quotients are measured and flagged when they
    blow up as the shift shrinks.
    """
    s = _frac(params.s)
    p = _frac(params.p)
    sp = s * p
    beta = p
    theta = s - 1 / p
    rungs = []
    for level in range(levels):
        exponent = (1 + theta * beta) / beta
        beta_next = beta + (p - 1)
        theta_next = (theta * beta + sp) / beta_next
        target = (1 + sp + theta * beta) / (beta + p - 1)
        exponent_next = (1 + theta_next * beta_next) / beta_next
        identity_ok = target == exponent_next
        hypothesis_ok = exponent < 1
        measured = None
        blow_up = None
        if u is not None:
            e_f = float(exponent)
            rows = quotient_profile(u, float(beta), order=2, shifts=shifts, window=window)
            measured = tuple(rows)
            quot = [(r.distance, r.quotient(e_f)) for r in rows if r.distance > 0]
            if len(quot) >= 2:
                quot.sort()
                small = quot[0][1]
                large = quot[-1][1]
                blow_up = bool(small > 10.0 * max(large, 1e-300))
        rungs.append(LadderRung(level, beta, theta, exponent, hypothesis_ok,
                                identity_ok, measured, blow_up))
        beta, theta = beta_next, theta_next
    return LadderReport(params=params, rungs=tuple(rungs), theta_limit=sp / (p - 1))
