"""Compiled kernels for the difference solver.

One lexicographic Gauss-Seidel sweep of exact per-cell convex
minimization (bisection on the cell's Euler equation), plus matching
energy and residual evaluations. Zero-order terms are passed by tag:
0 none, 1 linear(slope), 2 odd power(exponent), 3 tabulated (knot
arrays). Everything falls back to None when numba is missing; the
caller then uses the vectorized red-black path.

Signed powers carry fast paths for the exponents the conjugate algebra
actually produces (1/2, 1, 2, 3); the generic case costs one libm pow.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is expected in the toolchain
    njit = None


if njit is not None:

    @njit(cache=True, inline="always")
    def _abs_pow(a, q):
        # |a|**q with fast paths for the common exponents
        x = abs(a)
        if q == 2.0:
            return x * x
        if q == 1.0:
            return x
        if q == 3.0:
            return x * x * x
        if q == 0.5:
            return np.sqrt(x)
        if q == 1.5:
            return x * np.sqrt(x)
        if q == 4.0:
            return (x * x) * (x * x)
        return x**q

    @njit(cache=True, inline="always")
    def _psi_pow(d, q):
        # |d|**q * sign(d)
        v = _abs_pow(d, q)
        return v if d >= 0.0 else -v

    @njit(cache=True, inline="always")
    def _b_eval(kind, param, knots, values, t):
        if kind == 0:
            return 0.0
        if kind == 1:
            return param * t
        if kind == 2:
            return _psi_pow(t, param)
        n = knots.size
        if t <= knots[0]:
            slope = (values[1] - values[0]) / (knots[1] - knots[0])
            return values[0] + slope * (t - knots[0])
        if t >= knots[n - 1]:
            slope = (values[n - 1] - values[n - 2]) / (knots[n - 1] - knots[n - 2])
            return values[n - 1] + slope * (t - knots[n - 1])
        lo, hi = 0, n - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if knots[mid] <= t:
                lo = mid
            else:
                hi = mid
        frac = (t - knots[lo]) / (knots[lo + 1] - knots[lo])
        return values[lo] + frac * (values[lo + 1] - values[lo])

    @njit(cache=True, inline="always")
    def _b_primitive(kind, param, knots, values, t):
        if kind == 0:
            return 0.0
        if kind == 1:
            return 0.5 * param * t * t
        if kind == 2:
            return _abs_pow(t, param + 1.0) / (param + 1.0)
        # tabulated: trapezoid between knots from the origin
        acc = 0.0
        if t >= 0.0:
            x0 = 0.0
            v0 = _b_eval(kind, param, knots, values, 0.0)
            for k in range(knots.size):
                if knots[k] <= 0.0:
                    continue
                x1 = knots[k] if knots[k] < t else t
                v1 = _b_eval(kind, param, knots, values, x1)
                acc += 0.5 * (v0 + v1) * (x1 - x0)
                x0, v0 = x1, v1
                if knots[k] >= t:
                    break
            if x0 < t:
                v1 = _b_eval(kind, param, knots, values, t)
                acc += 0.5 * (v0 + v1) * (t - x0)
        else:
            x0 = 0.0
            v0 = _b_eval(kind, param, knots, values, 0.0)
            for k in range(knots.size - 1, -1, -1):
                if knots[k] >= 0.0:
                    continue
                x1 = knots[k] if knots[k] > t else t
                v1 = _b_eval(kind, param, knots, values, x1)
                acc += 0.5 * (v0 + v1) * (x0 - x1)
                x0, v0 = x1, v1
                if knots[k] <= t:
                    break
            if x0 > t:
                v1 = _b_eval(kind, param, knots, values, t)
                acc += 0.5 * (v0 + v1) * (x0 - t)
            # acc approximates the integral from t up to 0 of b (negative
            # there), and G(t) = -that
            acc = -acc
        return acc

    @njit(cache=True, inline="always")
    def _cell_derivative(t, up, down, left, right, fc,
                         lam1e, lam2e, q1, q2, hp1, hp2,
                         b_kind, b_param, b_knots, b_values):
        acc = _b_eval(b_kind, b_param, b_knots, b_values, t) - fc
        acc += lam1e * (_psi_pow(t - up, q1) - _psi_pow(down - t, q1)) / hp1
        acc += lam2e * (_psi_pow(t - left, q2) - _psi_pow(right - t, q2)) / hp2
        return acc

    @njit(cache=True)
    def gs_sweep(U, mask, f, lam1, lam2, p1, p2, h,
                 b_kind, b_param, b_knots, b_values, bisections, omega):
        """One lexicographic sweep over the padded value array, in place.

        ``omega`` extrapolates each cell beyond its exact minimizer
        (1.0 reproduces plain Gauss-Seidel). Returns the largest cell
        change of the sweep.
        """
        n1 = U.shape[0] - 2
        n2 = U.shape[1] - 2
        q1 = p1 - 1.0
        q2 = p2 - 1.0
        lam1e = lam1 * p1
        lam2e = lam2 * p2
        hp1 = h**p1
        hp2 = h**p2
        biggest = 0.0
        for i in range(n1):
            for j in range(n2):
                if not mask[i, j]:
                    continue
                up = U[i, j + 1]
                down = U[i + 2, j + 1]
                left = U[i + 1, j]
                right = U[i + 1, j + 2]
                t0 = U[i + 1, j + 1]
                fc = f[i, j]

                lo = min(min(up, down), min(left, right))
                hi = max(max(up, down), max(left, right))
                if t0 < lo:
                    lo = t0
                if t0 > hi:
                    hi = t0
                lo -= 1.0
                hi += 1.0
                width = hi - lo
                for _ in range(200):
                    expanded = False
                    if _cell_derivative(lo, up, down, left, right, fc,
                                        lam1e, lam2e, q1, q2, hp1, hp2,
                                        b_kind, b_param, b_knots, b_values) > 0.0:
                        lo -= width
                        expanded = True
                    if _cell_derivative(hi, up, down, left, right, fc,
                                        lam1e, lam2e, q1, q2, hp1, hp2,
                                        b_kind, b_param, b_knots, b_values) < 0.0:
                        hi += width
                        expanded = True
                    if not expanded:
                        break
                    width = hi - lo
                for _ in range(bisections):
                    mid = 0.5 * (lo + hi)
                    if _cell_derivative(mid, up, down, left, right, fc,
                                        lam1e, lam2e, q1, q2, hp1, hp2,
                                        b_kind, b_param, b_knots, b_values) < 0.0:
                        lo = mid
                    else:
                        hi = mid
                t_new = t0 + omega * (0.5 * (lo + hi) - t0)
                if abs(t_new - t0) > biggest:
                    biggest = abs(t_new - t0)
                U[i + 1, j + 1] = t_new
        return biggest

    @njit(cache=True)
    def energy_padded(U, mask, f, lam1, lam2, p1, p2, h,
                      b_kind, b_param, b_knots, b_values):
        """Discrete energy of the padded value array."""
        n1 = U.shape[0] - 2
        n2 = U.shape[1] - 2
        grad_part = 0.0
        for i in range(U.shape[0] - 1):
            for j in range(U.shape[1]):
                d = (U[i + 1, j] - U[i, j]) / h
                if d != 0.0:
                    grad_part += lam1 * _abs_pow(d, p1)
        for i in range(U.shape[0]):
            for j in range(U.shape[1] - 1):
                d = (U[i, j + 1] - U[i, j]) / h
                if d != 0.0:
                    grad_part += lam2 * _abs_pow(d, p2)
        zero_part = 0.0
        for i in range(n1):
            for j in range(n2):
                if mask[i, j]:
                    t = U[i + 1, j + 1]
                    zero_part += _b_primitive(b_kind, b_param, b_knots, b_values, t)
                    zero_part -= f[i, j] * t
        return (grad_part + zero_part) * h * h

    @njit(cache=True)
    def residual_sup(U, mask, f, lam1, lam2, p1, p2, h,
                     b_kind, b_param, b_knots, b_values):
        """Sup over the mask of the Euler-Lagrange residual per cell measure."""
        n1 = U.shape[0] - 2
        n2 = U.shape[1] - 2
        q1 = p1 - 1.0
        q2 = p2 - 1.0
        lam1e = lam1 * p1
        lam2e = lam2 * p2
        hp1 = h**p1
        hp2 = h**p2
        worst = 0.0
        for i in range(n1):
            for j in range(n2):
                if not mask[i, j]:
                    continue
                g = _cell_derivative(
                    U[i + 1, j + 1], U[i, j + 1], U[i + 2, j + 1],
                    U[i + 1, j], U[i + 1, j + 2], f[i, j],
                    lam1e, lam2e, q1, q2, hp1, hp2,
                    b_kind, b_param, b_knots, b_values,
                )
                if abs(g) > worst:
                    worst = abs(g)
        return worst

else:  # pragma: no cover
    gs_sweep = None
    energy_padded = None
    residual_sup = None


def zero_order_tag(b) -> tuple:
    """Encode a zero-order term for the compiled kernels."""
    from .radial_solver import LinearTerm, PowerTerm, TabulatedTerm, ZeroTerm

    empty = np.zeros(2)
    if isinstance(b, ZeroTerm):
        return 0, 0.0, empty, empty
    if isinstance(b, LinearTerm):
        return 1, float(b.slope), empty, empty
    if isinstance(b, PowerTerm):
        return 2, float(b.exponent), empty, empty
    if isinstance(b, TabulatedTerm):
        return 3, 0.0, b.t_knots.astype(float), b.values.astype(float)
    raise TypeError(f"unsupported zero-order term {type(b).__name__}")
