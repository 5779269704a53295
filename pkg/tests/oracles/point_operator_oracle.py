"""Independent reference values for the 1D operator point evaluation.

Computes (-Delta_p)^s u(x) = 2 * int_0^inf [J_p(u(x)-u(x+t)) + J_p(u(x)-u(x-t))]
* t^(-1-sp) dt directly with scipy.integrate.quad (QUADPACK), a different
quadrature engine and panel layout from the package's graded/adaptive rule.
Run this script to regenerate the frozen constants in test_quadrature.py.
"""

import numpy as np
from scipy.integrate import quad


def spow(t, e):
    return np.sign(t) * np.abs(t) ** e


def operator_1d(u, x, s, p, kinks=()):
    """Paired principal-value integral; kinks lists t > 0 where the
    integrand loses smoothness (e.g. where x - t crosses a kink of u)."""
    sp = s * p
    pm1 = p - 1.0

    def integrand(t):
        ux = u(x)
        return (spow(ux - u(x + t), pm1) + spow(ux - u(x - t), pm1)) * t ** (-1.0 - sp)

    cut = max(2.0 * abs(x), 2.0)
    pts = sorted(k for k in kinks if 0.0 < k < cut)
    near, near_err = quad(integrand, 0.0, cut, points=pts or None,
                          limit=400, epsabs=1e-13, epsrel=1e-12)
    far, far_err = quad(integrand, cut, np.inf, limit=400, epsabs=1e-13, epsrel=1e-12)
    return 2.0 * (near + far), 2.0 * (near_err + far_err)


def main():
    cases = [
        # (label, u, kinks at t for the given x, x, s, p)
        ("power a=0.5  s=0.4 p=2 x=1.0",
         lambda y: np.abs(y) ** 0.5, (1.0,), 1.0, 0.4, 2.0),
        ("power a=0.5  s=0.4 p=2 x=2.0",
         lambda y: np.abs(y) ** 0.5, (2.0,), 2.0, 0.4, 2.0),
        ("power a=0.3  s=0.6 p=3 x=0.7",
         lambda y: np.abs(y) ** 0.3, (0.7,), 0.7, 0.6, 3.0),
        ("bump 1/(1+y^2) s=0.3 p=2 x=0.5",
         lambda y: 1.0 / (1.0 + y * y), (), 0.5, 0.3, 2.0),
        ("bump 1/(1+y^2) s=0.45 p=3 x=0.5",
         lambda y: 1.0 / (1.0 + y * y), (), 0.5, 0.45, 3.0),
    ]
    for label, u, kinks, x, s, p in cases:
        val, err = operator_1d(u, x, s, p, kinks)
        print(f"{label}: {val!r}  (quad err {err:.2e})")
    # homogeneity check: value(2x) = 2^(a(p-1)-sp) value(x) for u = |y|^a
    v1, _ = operator_1d(lambda y: np.abs(y) ** 0.5, 1.0, 0.4, 2.0, (1.0,))
    v2, _ = operator_1d(lambda y: np.abs(y) ** 0.5, 2.0, 0.4, 2.0, (2.0,))
    print("homogeneity residual:", v2 - 2.0 ** (0.5 - 0.8) * v1)


if __name__ == "__main__":
    main()
