"""Registry of closed-form test expressions.

Expressions are vectorized callables on point arrays of shape (m, N)
(or (m,) when N = 1), with metadata used elsewhere: the growth exponent
at infinity (for membership of the far field in the weighted Lebesgue
tail space) and whether the expression is singular at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .params import Params, theta_exponent


@dataclass(frozen=True)
class Expression:
    expr_id: str
    fn: Callable[[np.ndarray], np.ndarray]
    growth_exponent: float
    singular_origin: bool = False
    meta: dict = field(default_factory=dict)

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return self.fn(pts)


def _radii(pts: np.ndarray) -> np.ndarray:
    if pts.ndim <= 1:
        return np.abs(pts)
    return np.sqrt(np.sum(pts * pts, axis=-1))


def _const(value: float) -> Expression:
    def fn(pts):
        r = _radii(pts)
        return np.full_like(r, value, dtype=float)

    grow = -math.inf if value == 0.0 else 0.0
    return Expression("const", fn, growth_exponent=grow, meta={"value": value})


def _affine(intercept: float, gradient) -> Expression:
    g = np.atleast_1d(np.asarray(gradient, dtype=float))

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        if pts.ndim <= 1 and g.size == 1:
            return intercept + g[0] * pts
        return intercept + pts @ g

    return Expression(
        "affine",
        fn,
        growth_exponent=1.0 if np.any(g != 0.0) else 0.0,
        meta={"intercept": intercept, "gradient": tuple(g.tolist())},
    )


def _power(amplitude: float, exponent: float) -> Expression:
    def fn(pts):
        r = _radii(pts)
        with np.errstate(divide="ignore"):
            return amplitude * r**exponent

    return Expression(
        "power",
        fn,
        growth_exponent=exponent,
        singular_origin=exponent < 0.0,
        meta={"amplitude": amplitude, "exponent": exponent},
    )


def example13_exponents(N: int, s: float, p: float, q: float, eps: float) -> dict:
    """Exponent bookkeeping for the sharpness family u = |x|^(Theta+eps).

    Validates the constraint set under which |x|^(Theta+eps) solves
    (-Delta_p)^s u = f with f a pure power, and returns the relevant
    exponents. Raises ValueError naming the violated constraint.
    """
    if N < 2:
        raise ValueError(f"sharpness family needs N >= 2, got N = {N}")
    if not (2.0 < p <= N + 1.0):
        raise ValueError(f"sharpness family needs 2 < p <= N + 1, got p = {p}")
    if not (0.0 < s <= (p - 1.0) / p):
        raise ValueError(f"sharpness family needs 0 < s <= (p-1)/p = {(p - 1) / p}, got s = {s}")
    if not (N / (s * p) < q < math.inf):
        raise ValueError(f"sharpness family needs N/(sp) < q < inf, got q = {q}")
    eps_max = N / (q * (p - 1.0))
    if not (0.0 < eps < eps_max):
        raise ValueError(f"sharpness family needs 0 < eps < N/(q(p-1)) = {eps_max}, got eps = {eps}")
    theta = theta_exponent(Params(N=N, s=s, p=p, q=q))
    alpha = theta + eps
    return {
        "theta": theta,
        "alpha": alpha,
        "f_exponent": (alpha - s) * (p - 1.0) - s,
        "eps_max": eps_max,
    }


def _example13(N: int, s: float, p: float, q: float, eps: float) -> Expression:
    info = example13_exponents(N, s, p, q, eps)
    alpha = info["alpha"]
    base = _power(1.0, alpha)
    return Expression(
        "example13",
        base.fn,
        growth_exponent=alpha,
        meta={"N": N, "s": s, "p": p, "q": q, "eps": eps, **info},
    )


def _riesz3d_radial(R: float) -> tuple[float, float]:
    """Riesz potential of the unit ball, u(x) = int_B |x-y|^(1-3) dy, at |x| = R.

    Angular part analytic; the remaining radial integral
    (2 pi / R) * int_0^1 rho * log((R+rho)/|R-rho|) drho is evaluated
    numerically with the log endpoint flagged as a break point.
    Returns (value, quadrature error estimate).
    """
    if R == 0.0:
        return 4.0 * math.pi, 0.0

    def integrand(rho):
        return rho * math.log((R + rho) / abs(R - rho))

    pts = [R] if 0.0 < R < 1.0 else None
    val, err = quad(integrand, 0.0, 1.0, points=pts, limit=200, epsabs=1e-13, epsrel=1e-12)
    c = 2.0 * math.pi / R
    return c * val, c * err


def _riesz3d() -> Expression:
    def fn(pts):
        r = np.atleast_1d(_radii(pts))
        out = np.array([_riesz3d_radial(float(ri))[0] for ri in r])
        return out if np.asarray(pts).ndim > 1 or np.asarray(pts).size > 1 else out.reshape(())

    return Expression("riesz3d", fn, growth_exponent=-2.0, meta={"dimension": 3})


_FACTORIES = {
    "const": _const,
    "affine": _affine,
    "power": _power,
    "example13": _example13,
    "riesz3d": _riesz3d,
}


def available_expressions() -> tuple[str, ...]:
    return tuple(sorted(_FACTORIES))


def make_expression(spec, **kwargs) -> Expression:
    """Build a registered expression.

    Accepts an Expression (passed through), a dict {"id": ..., params...},
    a bare id string with keyword params, or the shorthand "power:0.5"
    (id:exponent).
    """
    if isinstance(spec, Expression):
        return spec
    if isinstance(spec, dict):
        spec = dict(spec)
        name = spec.pop("id")
        return make_expression(name, **{**spec, **kwargs})
    name = str(spec)
    if ":" in name:
        name, _, arg = name.partition(":")
        if name != "power":
            raise KeyError(f"shorthand id:value only supported for 'power', got {name!r}")
        kwargs.setdefault("exponent", float(arg))
    if name not in _FACTORIES:
        raise KeyError(f"unknown expression id {name!r}; known: {available_expressions()}")
    if name == "power":
        kwargs.setdefault("amplitude", 1.0)
    return _FACTORIES[name](**kwargs)
