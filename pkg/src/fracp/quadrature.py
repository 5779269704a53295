"""Kernel tables, operator application, and tail integrals.

The singular kernel |x - y|^(-N - sp) is discretized on uniform grids with
translation-invariant per-offset weights (the performance core), the far
field outside the box enters through per-node exterior rules that are
consistent with the lattice sums (so constants and affine data are exact
discrete solutions in 1D), and a meshfree polar evaluator computes the
operator pointwise for closed-form expressions with principal-value
symmetrized pairs and adaptive radial panels.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import FarField, FarFieldGapError, Grid, GridFunction
from .kernels import jp_pair_sum
from .params import Params, omega_n, spow
from .registry import make_expression

# ---------------------------------------------------------------------------
# quadrature primitives


@lru_cache(maxsize=32)
def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _gauss_nodes(a, b, order):
    """Gauss nodes/weights on [a, b]; a, b may be arrays (panel batches)."""
    x, w = _gauss(order)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[..., None] + half[..., None] * x
    weights = half[..., None] * w
    return nodes, weights


def _panel_value(f, a, b, order):
    nodes, weights = _gauss_nodes(a, b, order)
    return float(np.sum(f(nodes.ravel()) * weights.ravel()))


def _adaptive_integral(f, edges, tol_rel, order=8, max_splits=300):
    """Globally adaptive Gauss quadrature over the union of initial panels.

    Splits the worst panel (by |whole - two halves| discrepancy) until the
    accumulated estimate is below tol_rel * the larger of |value| and the
    total variation scale sum |panel| (so integrands that cancel to the
    floating-point noise floor stop early with an honest error estimate).
    f must be vectorized. Returns (value, error_estimate).
    """
    panels = []  # heap of (-err, a, b, fine)
    total = 0.0
    err_total = 0.0
    mass = 0.0  # sum of |panel| values: the no-cancellation scale

    def assess(a, b):
        coarse = _panel_value(f, a, b, order)
        m = 0.5 * (a + b)
        fine = _panel_value(f, a, m, order) + _panel_value(f, m, b, order)
        return coarse, fine, abs(fine - coarse)

    for a, b in zip(edges[:-1], edges[1:]):
        coarse, fine, err = assess(a, b)
        heapq.heappush(panels, (-err, a, b, fine))
        total += fine
        err_total += err
        mass += abs(fine)

    splits = 0
    while splits < max_splits and err_total > tol_rel * max(abs(total), 1e-4 * mass, 1e-300):
        neg_err, a, b, fine = heapq.heappop(panels)
        if -neg_err <= 1e-18 * max(abs(total), 1e-300):
            heapq.heappush(panels, (neg_err, a, b, fine))
            break
        m = 0.5 * (a + b)
        total -= fine
        err_total += neg_err  # remove this panel's error
        for aa, bb in ((a, m), (m, b)):
            coarse, fi, err = assess(aa, bb)
            heapq.heappush(panels, (-err, aa, bb, fi))
            total += fi
            err_total += err
        splits += 1
    return total, err_total


def _graded_inner_integral(f, rho, panels, order, noise_amp=0.0, sp=None):
    """Integral over (0, rho] with dyadic panels accumulating toward 0.

    The integrand is f(r) = S(r) * r^(-1-sp) with S a symmetrized difference
    whose floating-point evaluation carries absolute noise of order
    noise_amp. The kernel amplifies that noise catastrophically as r -> 0,
    so panels are kept only while their magnitude clears the certified
    per-panel noise bound noise_amp * int_panel r^(-1-sp) dr; below the cut
    the true remainder is extrapolated from a least-squares geometric fit
    of the clean panels. Returns (value, error_estimate).
    """
    hi = rho * 2.0 ** -np.arange(panels)
    lo = hi * 0.5
    nodes, weights = _gauss_nodes(lo, hi, order)
    vals = (f(nodes.ravel()) * weights.ravel()).reshape(nodes.shape)
    per_panel = vals.sum(axis=1)
    mags = np.abs(per_panel)
    if not np.any(mags > 0.0):
        return 0.0, 0.0

    if noise_amp > 0.0 and sp is not None:
        noise_panel = noise_amp * (lo ** (-sp) - hi ** (-sp)) / sp
        clean = mags > 30.0 * noise_panel
    else:
        noise_panel = np.zeros(panels)
        clean = np.ones(panels, dtype=bool)
    cut = int(np.argmin(clean)) if not clean.all() else panels
    if cut == 0:
        return 0.0, float(mags[0] + noise_panel[0])
    total = float(per_panel[:cut].sum())
    kept_noise = float(np.sqrt(np.sum(noise_panel[:cut] ** 2))) * 3.0

    if cut < 4:
        return total, kept_noise + float(mags[cut - 1])

    # geometric-ratio fit over the deepest clean panels (skipping the two
    # noisiest) for the remainder below the cut
    w_hi = cut - 2 if cut < panels else cut
    w_lo = max(0, w_hi - 8)
    window = per_panel[w_lo:w_hi]
    wmags = mags[w_lo:w_hi]
    same_sign = np.all(window > 0) or np.all(window < 0)
    m_last = float(mags[cut - 1])
    if same_sign and np.all(wmags > 0) and len(window) >= 3:
        t_idx = np.arange(len(wmags), dtype=float)
        logs = np.log(wmags)
        slope, intercept = np.polyfit(t_idx, logs, 1)
        residual = float(np.max(np.abs(logs - (slope * t_idx + intercept))))
        ratio = min(math.exp(slope), 0.97)
        # anchor the remainder at the noise-free fit prediction for the panel
        # below the cut, not at the noisiest kept value
        pred_next = math.exp(intercept + slope * (len(wmags) - 1 + (cut - w_hi) + 1))
        omitted = pred_next / (1.0 - ratio)
        err_omit = omitted * min(3.0 * residual + 1e-3, 1.0)
        if residual < 0.1:
            sign = math.copysign(1.0, window[-1])
            return total + sign * omitted, kept_noise + err_omit
        return total, kept_noise + omitted
    # sign changes or too few clean panels: bound the remainder crudely
    ratio = 0.75
    omitted = m_last * ratio / (1.0 - ratio)
    return total, kept_noise + omitted


def _geometric_ray_integral(f, a, rel_stop=5e-14, max_panels=800, order=8, growth=math.sqrt(2.0)):
    """Integral over [a, inf) with geometrically growing panels.

    Stops when panel contributions are negligible relative to the running
    total; the geometric extrapolation of the remainder is folded into the
    value and reported as the error estimate. Growth sqrt(2) keeps single
    Gauss panels accurate even when the integrand has a pole just inside a.
    """
    total = 0.0
    prev_mag = None
    remainder = 0.0
    zero_run = 0
    lo = a
    for _ in range(max_panels):
        hi = lo * growth
        v = _panel_value(f, lo, hi, order)
        total += v
        mag = abs(v)
        if mag == 0.0:
            zero_run += 1
            if zero_run >= 3:
                break
        else:
            zero_run = 0
        if prev_mag is not None and prev_mag > 0:
            ratio = min(mag / prev_mag, 0.97)
            remainder = mag * ratio / (1.0 - ratio)
            if mag <= rel_stop * max(abs(total), 1e-300) and remainder <= rel_stop * max(abs(total), 1e-300):
                break
        prev_mag = mag
        lo = hi
    return total + remainder, max(remainder, abs(total) * 1e-15)


# ---------------------------------------------------------------------------
# kernel tables


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Per-offset kernel weights |x - y|^(-N-sp) * cell_volume on a grid.

    weights[k] (1D) or weights[|di|, |dj|] (2D); the zero offset is excluded
    (entry 0) and its omission is estimated at application time.
    """

    grid: Grid
    s: float
    p: float
    weights: np.ndarray

    @property
    def sp(self) -> float:
        return self.s * self.p

    def weight(self, offset) -> float:
        off = np.atleast_1d(np.asarray(offset, dtype=int))
        if self.grid.N == 1:
            return float(self.weights[abs(int(off[0]))])
        return float(self.weights[abs(int(off[0])), abs(int(off[1]))])


def build_kernel_table(grid: Grid, params: Params) -> KernelTable:
    if grid.N != params.N:
        raise ValueError(f"grid dimension {grid.N} != params dimension {params.N}")
    h = grid.spacing
    sp = params.s * params.p
    m = grid.nodes_per_axis
    if grid.N == 1:
        k = np.arange(m, dtype=float)
        with np.errstate(divide="ignore"):
            w = (k * h) ** (-(1.0 + sp)) * h
        w[0] = 0.0
    else:
        di = np.arange(m, dtype=float)
        dist = h * np.sqrt(di[:, None] ** 2 + di[None, :] ** 2)
        with np.errstate(divide="ignore"):
            w = dist ** (-(2.0 + sp)) * h**2
        w[0, 0] = 0.0
    if not np.all(np.isfinite(w.ravel()[1:] if grid.N == 1 else w[w != w[0, 0]])):
        raise ValueError("kernel weights must be finite")
    return KernelTable(grid=grid, s=params.s, p=params.p, weights=w)


# ---------------------------------------------------------------------------
# quadrature controls


@dataclass(frozen=True)
class QuadratureControls:
    """Tuning knobs for exterior rules, point evaluation, and tail integrals."""

    gauss_order: int = 8
    ring_pad: int | None = None  # exterior lattice ring width (cells); None -> M-1
    tail_panels: int = 64  # dyadic panels beyond the ring for sampled far fields
    inner_split: float = 1e-3  # PV inner radius as a fraction of the point scale
    inner_panels: int = 60
    adaptive_tol: float = 1e-10
    target_tol: float = 1e-7  # flag threshold for point values
    tail_rel_stop: float = 5e-14
    tail_max_panels: int = 400
    angular_order: int = 10  # Gauss order per smooth angular arc (2D)
    length_scale: float = 1.0


DEFAULT_CONTROLS = QuadratureControls()


# ---------------------------------------------------------------------------
# exterior (far-field) rules

def _padded_bounds(grid: Grid):
    half = 0.5 * grid.spacing
    lo = tuple(a - half for a in grid.lo)
    hi = tuple(b + half for b in grid.hi)
    return lo, hi


def _ray_box_exit(x, dirs, lo, hi):
    """Distance along each unit direction from x to the box boundary."""
    t = np.full(dirs.shape[0], np.inf)
    for d in range(len(lo)):
        w = dirs[:, d]
        with np.errstate(divide="ignore"):
            cand = np.where(w > 0, (hi[d] - x[d]) / w, np.where(w < 0, (lo[d] - x[d]) / w, np.inf))
        t = np.minimum(t, cand)
    return t


@dataclass(eq=False)
class ExteriorRule:
    """Per-node quadrature of the kernel against the far field outside the box.

    'collapsed' (zero/constant far fields): a single kernel-mass moment per
    node; the interaction is jp(v_i - c) * mass_i. 'csr' (1D sampled far
    fields): flattened (g value, weight) pairs per node, built from the
    exterior lattice ring plus symmetric dyadic panel pairs, so odd data
    cancels exactly. 'stream2d': the 2D polar rule is regenerated on the
    fly per node (sampled far fields on 2D grids).
    """

    grid: Grid
    s: float
    p: float
    far: FarField
    kind: str
    mass: np.ndarray | None = None
    const: float = 0.0
    gvals: np.ndarray | None = None
    weights: np.ndarray | None = None
    indptr: np.ndarray | None = None
    _template: tuple | None = None

    @property
    def sp(self) -> float:
        return self.s * self.p

    def jp_sum(self, values: np.ndarray) -> np.ndarray:
        """sum_exterior J_p(v_i - g(y)) * kernel weight, per node."""
        pm1 = self.p - 1.0
        if self.kind == "collapsed":
            return spow(values - self.const, pm1) * self.mass
        if self.kind == "csr":
            flat = values.ravel()
            counts = np.diff(self.indptr)
            expanded = np.repeat(flat, counts)
            contrib = spow(expanded - self.gvals, pm1) * self.weights
            sums = np.add.reduceat(contrib, self.indptr[:-1])
            sums[counts == 0] = 0.0
            return sums.reshape(values.shape)
        return self._stream(values, lambda t: spow(t, pm1))

    def pow_sum(self, values: np.ndarray) -> np.ndarray:
        """sum_exterior |v_i - g(y)|^p * kernel weight, per node (energy form)."""
        if self.kind == "collapsed":
            return np.abs(values - self.const) ** self.p * self.mass
        if self.kind == "csr":
            flat = values.ravel()
            counts = np.diff(self.indptr)
            expanded = np.repeat(flat, counts)
            contrib = np.abs(expanded - self.gvals) ** self.p * self.weights
            sums = np.add.reduceat(contrib, self.indptr[:-1])
            sums[counts == 0] = 0.0
            return sums.reshape(values.shape)
        return self._stream(values, lambda t: np.abs(t) ** self.p)

    def amp_sum(self, values: np.ndarray, e: float) -> np.ndarray:
        """sum_exterior |v_i - g(y)|^e * kernel weight (Hessian diagonal)."""
        if self.kind == "collapsed":
            base = np.abs(values - self.const)
            return (np.ones_like(base) if e == 0.0 else base**e) * self.mass
        if self.kind == "csr":
            flat = values.ravel()
            counts = np.diff(self.indptr)
            expanded = np.repeat(flat, counts)
            a = np.abs(expanded - self.gvals)
            contrib = (np.ones_like(a) if e == 0.0 else a**e) * self.weights
            sums = np.add.reduceat(contrib, self.indptr[:-1])
            sums[counts == 0] = 0.0
            return sums.reshape(values.shape)
        if e == 0.0:
            return self._stream(values, lambda t: np.ones_like(t))
        return self._stream(values, lambda t: np.abs(t) ** e)

    def _stream(self, values, transform) -> np.ndarray:
        grid = self.grid
        dirs, ang_w, rel_lo, rel_hi, gx, gw = self._template
        lo, hi = _padded_bounds(grid)
        out = np.empty(grid.shape)
        flat = values.ravel()
        pts = grid.points
        for i in range(pts.shape[0]):
            x = pts[i]
            rexit = _ray_box_exit(x, dirs, lo, hi)  # (n_ang,)
            a = rexit[:, None] * rel_lo[None, :]  # (n_ang, n_panel)
            b = rexit[:, None] * rel_hi[None, :]
            mid = 0.5 * (a + b)
            half = 0.5 * (b - a)
            r = mid[..., None] + half[..., None] * gx  # (n_ang, n_panel, g)
            wq = half[..., None] * gw
            kern = r ** (-(1.0 + self.sp)) * wq * ang_w[:, None, None]
            ys = x[None, None, None, :] + r[..., None] * dirs[:, None, None, :]
            g = self.far(ys.reshape(-1, grid.N)).reshape(r.shape)
            out.ravel()[i] = float(np.sum(transform(flat[i] - g) * kern))
        return out


def _collapsed_mass_1d(grid: Grid, sp: float, K: int) -> np.ndarray:
    h = grid.spacing
    m = grid.nodes_per_axis
    k = np.arange(K + 1, dtype=float)
    with np.errstate(divide="ignore"):
        wk = (k * h) ** (-(1.0 + sp)) * h
    wk[0] = 0.0
    prefix = np.cumsum(wk)
    i = np.arange(m)
    ring = 2.0 * prefix[K] - (prefix[i] + prefix[m - 1 - i])
    beyond = 2.0 * ((K + 0.5) * h) ** (-sp) / sp
    return ring + beyond


def _collapsed_mass_2d(grid: Grid, sp: float, order: int) -> np.ndarray:
    lo, hi = _padded_bounds(grid)
    corners = np.array([(lo[0], lo[1]), (lo[0], hi[1]), (hi[0], lo[1]), (hi[0], hi[1])])
    out = np.empty(grid.shape)
    pts = grid.points
    for i in range(pts.shape[0]):
        x = pts[i]
        ang = np.sort(np.arctan2(corners[:, 1] - x[1], corners[:, 0] - x[0]))
        edges = np.concatenate([ang, [ang[0] + 2.0 * math.pi]])
        acc = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            nodes, wq = _gauss_nodes(a, b, order)
            dirs = np.stack([np.cos(nodes.ravel()), np.sin(nodes.ravel())], axis=1)
            rexit = _ray_box_exit(x, dirs, lo, hi)
            acc += float(np.sum(rexit ** (-sp) / sp * wq.ravel()))
        out.ravel()[i] = acc
    return out


def _dyadic_panel_template(R0_rel: float, panels: int, order: int):
    """Gauss nodes/weights for dyadic panels [R0*2^t, R0*2^(t+1)] (relative units)."""
    lo = R0_rel * 2.0 ** np.arange(panels)
    hi = lo * 2.0
    nodes, weights = _gauss_nodes(lo, hi, order)
    return nodes.ravel(), weights.ravel()


def build_exterior_rule(
    grid: Grid, params: Params, far: FarField, controls: QuadratureControls = DEFAULT_CONTROLS
) -> ExteriorRule:
    """Build the per-node exterior rule for the given far field.

    Raises ValueError when the far field fails tail admissibility
    (growth*(p-1) >= sp) and FarFieldGapError when sampled exterior
    positions fall inside the model's validity radius.
    """
    far.check_tail_admissible(params)
    sp = params.s * params.p
    m = grid.nodes_per_axis
    K = (m - 1) + (controls.ring_pad if controls.ring_pad is not None else m - 1)

    if far.kind in ("zero", "constant"):
        const = 0.0 if far.kind == "zero" else far.value
        if grid.N == 1:
            mass = _collapsed_mass_1d(grid, sp, K)
        else:
            mass = _collapsed_mass_2d(grid, sp, controls.angular_order)
        return ExteriorRule(grid=grid, s=params.s, p=params.p, far=far, kind="collapsed",
                            mass=mass, const=const)

    if far.kind != "closed_form" and far.valid_radius > 0.0:
        min_norm = grid.min_exterior_norm() + 0.5 * grid.spacing
        if far.valid_radius > min_norm + 1e-12:
            raise FarFieldGapError(
                f"far-field gap: valid_radius = {far.valid_radius} exceeds the nearest "
                f"exterior point norm {min_norm}; operator application needs gap-free data"
            )

    if grid.N == 1:
        h = grid.spacing
        lo0 = grid.lo[0]
        k = np.arange(K + 1, dtype=float)
        with np.errstate(divide="ignore"):
            wk = (k * h) ** (-(1.0 + sp)) * h
        wk[0] = 0.0
        R0 = (K + 0.5) * h
        rel_r, rel_w = _dyadic_panel_template(R0, controls.tail_panels, controls.gauss_order)
        kern_w = rel_r ** (-(1.0 + sp)) * rel_w
        g_chunks, w_chunks, counts = [], [], []
        for i in range(m):
            j_left = np.arange(i - K, 0)
            j_right = np.arange(m, i + K + 1)
            pos_ring = np.concatenate([lo0 + j_left * h, lo0 + j_right * h])
            w_ring = np.concatenate([wk[i - j_left], wk[j_right - i]])
            xi = lo0 + i * h
            pos = np.concatenate([pos_ring, xi + rel_r, xi - rel_r])
            wts = np.concatenate([w_ring, kern_w, kern_w])
            if far.kind != "closed_form" and np.min(np.abs(pos)) < far.valid_radius - 1e-12:
                raise FarFieldGapError(
                    f"far-field gap at node {xi}: exterior sample inside valid_radius = {far.valid_radius}"
                )
            g_chunks.append(far(pos))
            w_chunks.append(wts)
            counts.append(pos.size)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return ExteriorRule(grid=grid, s=params.s, p=params.p, far=far, kind="csr",
                            gvals=np.concatenate(g_chunks), weights=np.concatenate(w_chunks),
                            indptr=indptr)

    # 2D sampled far field: polar rule streamed per node
    n_ang = max(4 * controls.angular_order, 32)
    phis = (np.arange(n_ang) + 0.5) * (2.0 * math.pi / n_ang)
    dirs = np.stack([np.cos(phis), np.sin(phis)], axis=1)
    ang_w = np.full(n_ang, 2.0 * math.pi / n_ang)
    rel_lo = 2.0 ** np.arange(controls.tail_panels)
    rel_hi = rel_lo * 2.0
    gx, gw = _gauss(controls.gauss_order)
    template = (dirs, ang_w, rel_lo * 1.0, rel_hi, gx, gw)
    return ExteriorRule(grid=grid, s=params.s, p=params.p, far=far, kind="stream2d",
                        _template=template)


# ---------------------------------------------------------------------------
# operator application on grids


def apply_operator_grid(
    u: GridFunction,
    table: KernelTable,
    controls: QuadratureControls = DEFAULT_CONTROLS,
    rule: ExteriorRule | None = None,
    return_diagnostics: bool = False,
):
    """Apply (-Delta_p)^s to a grid function at every node.

    value(x_i) = 2 * [ sum_j J_p(u_i - u_j) * weight(i - j) + exterior term ],
    the grid part over all other nodes with the per-offset kernel table and
    the exterior part from the far-field rule. The omitted zero-offset cell
    is estimated (local-slope model) and reported via return_diagnostics.
    """
    if u.grid is not table.grid and u.grid != table.grid:
        raise ValueError("kernel table was built for a different grid")
    if u.far_field is None:
        raise ValueError("operator application needs a far-field model on the input")
    params = Params(N=u.grid.N, s=table.s, p=table.p)
    if rule is None:
        rule = build_exterior_rule(u.grid, params, u.far_field, controls)
    core = jp_pair_sum(u.values, table.weights, table.p - 1.0)
    ext = rule.jp_sum(u.values)
    out = 2.0 * (core + ext)
    result = GridFunction(u.grid, out, None)
    if not return_diagnostics:
        return result
    # omitted diagonal-cell estimate from local first/second differences
    h = u.grid.spacing
    v = u.values
    slope = np.zeros_like(v)
    curv = np.zeros_like(v)
    for axis in range(u.grid.N):
        d1 = np.gradient(v, h, axis=axis)
        d2 = np.gradient(d1, h, axis=axis)
        slope = np.maximum(slope, np.abs(d1))
        curv = np.maximum(curv, np.abs(d2))
    sp = table.sp
    p = table.p
    n = u.grid.N
    cell_bound = (
        2.0 * (p - 1.0) * slope ** (p - 2.0) * curv
        * n * omega_n(n) * (0.5 * h) ** (p - sp) / (p - sp)
    )
    return result, {"omitted_cell_estimate": cell_bound}


# ---------------------------------------------------------------------------
# meshfree point evaluation


@dataclass(frozen=True)
class PointValue:
    """Operator value at a point with an accumulated quadrature error estimate."""

    value: float
    error: float
    tol: float

    @property
    def flagged(self) -> bool:
        return self.error > self.tol * max(abs(self.value), 1.0)

    def __float__(self) -> float:
        return self.value


def _radial_integral(S, rho, sp, breaks, tail_start, controls, noise_amp=0.0):
    """integral_0^inf S(r) r^(-1-sp) dr for a paired difference integrand S.

    noise_amp is the absolute floating-point noise level of S, used to cut
    the graded descent toward r = 0 and to floor the error estimate of the
    remaining pieces.
    """

    def f(r):
        return S(r) * r ** (-(1.0 + sp))

    inner, inner_err = _graded_inner_integral(
        f, rho, controls.inner_panels, controls.gauss_order, noise_amp=noise_amp, sp=sp
    )
    edges = sorted({rho, tail_start, *(b for b in breaks if rho < b < tail_start)})
    mid, mid_err = _adaptive_integral(f, list(edges), controls.adaptive_tol, controls.gauss_order)
    tail, tail_err = _geometric_ray_integral(
        f, tail_start, controls.tail_rel_stop, controls.tail_max_panels, controls.gauss_order
    )
    mid_noise = noise_amp * (rho ** (-sp) - tail_start ** (-sp)) / sp if noise_amp > 0 else 0.0
    return inner + mid + tail, inner_err + mid_err + tail_err + mid_noise


def apply_operator_point(
    expr, x, params: Params, controls: QuadratureControls = DEFAULT_CONTROLS
) -> PointValue:
    """Evaluate (-Delta_p)^s of a closed-form expression at one point.

    Polar coordinates about x with the principal value handled by
    symmetrized pairs y = x +- r*omega: the paired integrand is integrated
    over r with graded dyadic panels near 0, adaptive panels across the
    feature scale, and geometric panels with extrapolated remainder in the
    tail. In 2D the angular integral is adaptive with splits toward the
    direction of the origin (where radial kinks concentrate).
    """
    e = make_expression(expr)
    if params.N not in (1, 2):
        raise ValueError("point evaluation supports N in {1, 2}")
    if e.growth_exponent * (params.p - 1.0) >= params.sp:
        raise ValueError(
            "operator diverges: expression growth_exponent*(p-1) = "
            f"{e.growth_exponent * (params.p - 1.0)} must be < s*p = {params.sp}"
        )
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xnorm = float(np.sqrt(np.sum(x * x)))
    scale = max(xnorm, controls.length_scale * 1e-3)
    rho = controls.inner_split * scale
    tail_start = max(8.0 * scale, 4.0 * controls.length_scale)
    pm1 = params.p - 1.0
    sp = params.s * params.p

    eps_fp = 2.220446049250313e-16

    def jp_noise(up_probe, um_probe, ux_val):
        """Absolute noise level of the paired jp difference near r <= rho."""
        nu = 4.0 * eps_fp * max(abs(ux_val), abs(up_probe), abs(um_probe), 1e-300)
        d_ref = max(abs(ux_val - up_probe), abs(ux_val - um_probe), nu)
        return 2.0 * (params.p - 1.0) * d_ref ** (params.p - 2.0) * nu

    if params.N == 1:
        ux = float(e(np.array([x[0]]))[0])

        def S(r):
            up = e(x[0] + r)
            um = e(x[0] - r)
            return spow(ux - up, pm1) + spow(ux - um, pm1)

        noise = jp_noise(float(e(np.array([x[0] + rho]))[0]),
                         float(e(np.array([x[0] - rho]))[0]), ux)
        breaks = {xnorm, 2.0 * xnorm} - {0.0}
        val, err = _radial_integral(S, rho, sp, breaks, tail_start, controls, noise_amp=noise)
        return PointValue(2.0 * val, 2.0 * err, controls.target_tol)

    ux = float(e(x[None, :])[0])

    def radial_for(phi):
        w = np.array([math.cos(phi), math.sin(phi)])

        def S(r):
            r = np.asarray(r)
            pts_p = x[None, :] + r[:, None] * w[None, :]
            pts_m = x[None, :] - r[:, None] * w[None, :]
            return spow(ux - e(pts_p), pm1) + spow(ux - e(pts_m), pm1)

        probes = e(np.stack([x + rho * w, x - rho * w]))
        noise = jp_noise(float(probes[0]), float(probes[1]), ux)
        proj = abs(float(x @ w))
        breaks = {b for b in (proj, xnorm, 2.0 * xnorm) if b > 0.0}
        val, err = _radial_integral(S, rho, sp, breaks, tail_start, controls, noise_amp=noise)
        return val, err

    radial_errs = []

    def F(phis):
        out = np.empty_like(phis)
        for i, phi in enumerate(np.atleast_1d(phis)):
            v, er = radial_for(float(phi))
            out[i] = v
            radial_errs.append(er)
        return out

    # split the angular domain at the direction pointing back to the origin,
    # where the radial profile changes character
    phi_sing = math.atan2(-x[1], -x[0]) % math.pi if xnorm > 0 else math.nan
    edges = sorted({0.0, math.pi} | ({phi_sing} if 0.0 < phi_sing < math.pi else set()))
    ang_val, ang_err = _adaptive_integral(F, edges, controls.adaptive_tol * 10, order=4, max_splits=400)
    radial_part = math.pi * (sum(radial_errs) / max(len(radial_errs), 1))
    return PointValue(2.0 * ang_val, 2.0 * (ang_err + radial_part), controls.target_tol)


# ---------------------------------------------------------------------------
# tail integrals


def tail_power_law(A: float, gamma: float, N: int, q: float, alpha: float, R: float) -> float:
    """Exact bracket integral R^alpha * int_{|y|>R} (A|y|^gamma)^q |y|^(-N-alpha) dy.

    Equals A^q * N * omega_N * R^(gamma q) / (alpha - gamma q); diverges
    (ValueError) when gamma*q >= alpha.
    """
    if gamma * q >= alpha:
        raise ValueError(f"tail diverges: gamma*q = {gamma * q} must be < alpha = {alpha}")
    return abs(A) ** q * N * omega_n(N) * R ** (gamma * q) / (alpha - gamma * q)


def _check_far_reachable(far: FarField, min_sample_norm: float) -> None:
    if far.kind == "power_law" and far.valid_radius > min_sample_norm + 1e-12:
        raise FarFieldGapError(
            f"far-field gap: integral samples the model from norm {min_sample_norm} "
            f"but it is only valid for |y| >= {far.valid_radius}"
        )


def _weighted_far_integral(u: GridFunction, qexp: float, weight_center, alpha: float,
                           x0, R_exclude: float, controls: QuadratureControls) -> float:
    """integral over {y outside box, |y - x0| > R_exclude} of
    |g(y)|^qexp * |y - weight_center|^(-N - alpha) dy, g the far-field model.

    The region uses the true box geometry (not the half-cell-padded lattice
    box) so the hand-computable instances come out exact.
    """
    far = u.far_field
    if far is None:
        raise ValueError("far-field model required for tail integrals")
    g = u.grid
    # every sampled point lies outside the box, so its norm is at least the
    # distance from the origin to the box exterior
    _check_far_reachable(far, g.min_exterior_norm())
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    c = np.atleast_1d(np.asarray(weight_center, dtype=float))
    if g.N == 1:
        total = 0.0
        for sgn, edge in ((1.0, g.hi[0]), (-1.0, g.lo[0])):
            # the ray in the coordinate t = sgn*y: outside the box and the ball
            a = max(sgn * edge, sgn * x0[0] + R_exclude)
            if a <= 0.0:
                raise ValueError("far integrals need the box to contain the origin")

            def f(t, sgn=sgn):
                y = sgn * t
                gv = np.abs(far(y)) ** qexp
                return gv * np.abs(y - c[0]) ** (-(1.0 + alpha))

            val, _ = _geometric_ray_integral(f, a, controls.tail_rel_stop,
                                             controls.tail_max_panels, controls.gauss_order)
            total += val
        return total
    # 2D: polar about x0 with angular splits at the box corners;
    # radial start per direction = max(box exit, ball exit)
    lo, hi = g.lo, g.hi
    corners = np.array([(lo[0], lo[1]), (lo[0], hi[1]), (hi[0], lo[1]), (hi[0], hi[1])])
    ang = np.sort(np.arctan2(corners[:, 1] - x0[1], corners[:, 0] - x0[0]))
    edges = np.concatenate([ang, [ang[0] + 2.0 * math.pi]])
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        nodes, wq = _gauss_nodes(a, b, controls.angular_order)
        for phi, wphi in zip(nodes.ravel(), wq.ravel()):
            w = np.array([math.cos(phi), math.sin(phi)])
            t_box = _ray_box_exit(x0, w[None, :], lo, hi)[0]
            start = max(t_box, R_exclude)

            def f(r, w=w):
                r = np.asarray(r)
                pts = x0[None, :] + r[:, None] * w[None, :]
                gv = np.abs(far(pts)) ** qexp
                d = np.sqrt(np.sum((pts - c[None, :]) ** 2, axis=1))
                return gv * d ** (-(2.0 + alpha)) * r

            val, _ = _geometric_ray_integral(f, start, controls.tail_rel_stop,
                                             controls.tail_max_panels, controls.gauss_order)
            total += val * wphi
    return total


def tail_bracket(u: GridFunction, q: float, alpha: float, x0, R: float,
                 controls: QuadratureControls = DEFAULT_CONTROLS) -> float:
    """R^alpha * int_{complement of B_R(x0)} |u|^q |y - x0|^(-N-alpha) dy.

    Grid nodes outside the ball contribute with cell volume; the region
    outside the box uses the far-field model (exact power-law formula when
    the ball covers the box, x0 = 0 and the model is a pure power/constant).
    """
    far = u.far_field
    if far is None:
        raise ValueError("tail needs a far-field model")
    if alpha <= 0.0 or q < 1.0 or R <= 0.0:
        raise ValueError("tail needs alpha > 0, q >= 1, R > 0")
    growth = far.growth_exponent
    if growth * q >= alpha:
        raise ValueError(
            f"tail diverges: far-field growth*q = {growth * q} must be < alpha = {alpha}"
        )
    g = u.grid
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = g.points - x0[None, :]
    dist = np.sqrt(np.sum(d * d, axis=1))
    outside = dist > R + 1e-9 * g.spacing
    grid_part = float(np.sum(np.abs(u.values.ravel()[outside]) ** q
                             * dist[outside] ** (-(g.N + alpha))) * g.cell_volume)

    if g.N == 1:
        box_reach = max(abs(g.lo[0]), abs(g.hi[0]))
    else:
        box_reach = math.hypot(*(max(abs(a), abs(b)) for a, b in zip(g.lo, g.hi)))
    centered = bool(np.all(np.abs(x0) < 1e-14))
    if centered and R >= box_reach - 1e-12 and far.kind in ("zero", "constant", "power_law"):
        # the ball swallows the box: the far region is exactly {|y| > R}
        _check_far_reachable(far, R)
        if far.kind == "zero" or (far.kind == "constant" and far.value == 0.0):
            far_part = 0.0
        elif far.kind == "constant":
            far_part = tail_power_law(far.value, 0.0, g.N, q, alpha, R) / R**alpha
        else:
            far_part = tail_power_law(far.amplitude, far.exponent, g.N, q, alpha, R) / R**alpha
    elif far.kind == "zero" or (far.kind == "constant" and far.value == 0.0):
        far_part = 0.0
    else:
        far_part = _weighted_far_integral(u, q, x0, alpha, x0, R, controls)
    return R**alpha * (grid_part + far_part)


def tail(u: GridFunction, q: float, alpha: float, x0, R: float,
         controls: QuadratureControls = DEFAULT_CONTROLS) -> float:
    """Tail_{q,alpha}(u; x0, R) = [tail_bracket]^(1/q)."""
    return tail_bracket(u, q, alpha, x0, R, controls) ** (1.0 / q)


# ---------------------------------------------------------------------------
# tail lemmas


@dataclass(frozen=True)
class LemmaCheck:
    name: str
    lhs: float
    rhs: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class TailLemmaReport:
    checks: tuple

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def by_name(self, name: str) -> LemmaCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _lq_ball_norm_q(u: GridFunction, x1, R: float, q: float) -> float:
    """int_{B_R(x1)} |u|^q (node quadrature; ball must stay inside the box)."""
    g = u.grid
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    for d in range(g.N):
        if x1[d] - R < g.lo[d] - 0.5 * g.spacing or x1[d] + R > g.hi[d] + 0.5 * g.spacing:
            raise ValueError("ball must stay inside the sampled box for norm quadrature")
    dd = g.points - x1[None, :]
    dist = np.sqrt(np.sum(dd * dd, axis=1))
    inside = dist <= R + 1e-9 * g.spacing
    return float(np.sum(np.abs(u.values.ravel()[inside]) ** q) * g.cell_volume)


def _sup_ball_norm(u: GridFunction, x1, R: float) -> float:
    g = u.grid
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    dd = g.points - x1[None, :]
    dist = np.sqrt(np.sum(dd * dd, axis=1))
    inside = dist <= R + 1e-9 * g.spacing
    if not np.any(inside):
        raise ValueError("ball contains no grid nodes")
    return float(np.max(np.abs(u.values.ravel()[inside])))


def verify_tail_lemmas(
    u: GridFunction,
    x0,
    x1,
    r: float,
    R: float,
    q: float,
    alpha: float,
    m: float = math.inf,
    controls: QuadratureControls = DEFAULT_CONTROLS,
    slack: float = 1e-8,
    n_sup_samples: int = 9,
) -> TailLemmaReport:
    """Check the tail comparison bounds on a concrete geometry.

    'enlarge': moving the evaluation point inside B_r(x0) costs at most
    (R/(R-r))^(N+alpha) relative to the tail at the center.
    'recenter': Tail(u; x0, r)^q against the tail at (x1, R) plus the local
    L^q mass; 'recenter_holder': same with the L^m interpolation constant
    (m = inf uses the sup form N*omega_N/alpha * ||u||_inf^q).
    """
    g = u.grid
    if u.far_field is None:
        raise ValueError("tail lemmas need a far-field model")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if not (0.0 < r < R):
        raise ValueError(f"need 0 < r < R, got r = {r}, R = {R}")
    d01 = float(np.sqrt(np.sum((x0 - x1) ** 2)))
    if d01 + r > R + 1e-12:
        raise ValueError(f"need B_r(x0) inside B_R(x1): |x0-x1| + r = {d01 + r} > R = {R}")

    checks = []
    far_live = not (u.far_field.kind == "zero"
                    or (u.far_field.kind == "constant" and u.far_field.value == 0.0))

    # --- enlarge: R^alpha sup_{x in B_r(x0)} int_{outside B_R(x0)} |u|^q |x-y|^(-N-a)
    dists = np.sqrt(np.sum((g.points - x0[None, :]) ** 2, axis=1))
    outside = dists > R + 1e-9 * g.spacing
    samples = [x0]
    if g.N == 1:
        samples += [x0 + np.array([r]), x0 - np.array([r])]
        node_in = np.abs(g.points[:, 0] - x0[0]) <= r
        xs = g.points[node_in][:: max(1, int(np.sum(node_in)) // n_sup_samples)]
        samples += [np.array([v]) for v in xs[:, 0]]
    else:
        for ang in np.linspace(0.0, 2 * math.pi, 8, endpoint=False):
            samples.append(x0 + r * np.array([math.cos(ang), math.sin(ang)]))
    best = 0.0
    for x in samples:
        dx = np.sqrt(np.sum((g.points - np.atleast_1d(x)[None, :]) ** 2, axis=1))
        val = float(np.sum(np.abs(u.values.ravel()[outside]) ** q
                           * dx[outside] ** (-(g.N + alpha))) * g.cell_volume)
        if far_live:
            val += _weighted_far_integral(u, q, x, alpha, x0, R, controls)
        best = max(best, val)
    lhs22 = R**alpha * best
    rhs22 = (R / (R - r)) ** (g.N + alpha) * tail_bracket(u, q, alpha, x0, R, controls)
    checks.append(LemmaCheck("enlarge", lhs22, rhs22,
                             lhs22 <= rhs22 + slack * max(1.0, abs(rhs22))))

    # --- recenter (first form)
    lhs23 = tail_bracket(u, q, alpha, x0, r, controls)
    t_big = tail_bracket(u, q, alpha, x1, R, controls)
    lq = _lq_ball_norm_q(u, x1, R, q)
    rhs23 = (r / R) ** alpha * (R / (R - d01)) ** (g.N + alpha) * t_big + r ** (-g.N) * lq
    checks.append(LemmaCheck("recenter", lhs23, rhs23,
                             lhs23 <= rhs23 + slack * max(1.0, abs(rhs23))))

    # --- recenter with Holder interpolation on the local mass
    nwn = g.N * omega_n(g.N)
    if math.isinf(m):
        local = (nwn / alpha) * _sup_ball_norm(u, x1, R) ** q
    else:
        if m <= q:
            raise ValueError(f"interpolation exponent m must exceed q, got m = {m}, q = {q}")
        lm = _lq_ball_norm_q(u, x1, R, m) ** (q / m)
        local = (nwn * (m - q) / (alpha * m + g.N * q)) ** ((m - q) / m) * r ** (-q * g.N / m) * lm
    rhs23h = (r / R) ** alpha * (R / (R - d01)) ** (g.N + alpha) * t_big + local
    checks.append(LemmaCheck("recenter_holder", lhs23, rhs23h,
                             lhs23 <= rhs23h + slack * max(1.0, abs(rhs23h))))

    return TailLemmaReport(checks=tuple(checks))
