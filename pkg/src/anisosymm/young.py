"""Algebra of one-dimensional and N-dimensional Young functions.

A Young function is an even convex function vanishing at the origin and
tending to infinity. The module provides the closed-form families used
throughout the package (powers, power-logs, anisotropic power sums,
separable sums, exponential sums) together with tabulated variants, and
the operations everything downstream is built on:

* Legendre conjugation, 1-D and N-D (discrete supremum over knots);
* doubling classification (does phi(2s) stay within a constant multiple
  of phi(s) at large arguments);
* the slope ratio phi(s)/s, its restricted inverse, and its integral;
* the dimensional conjugate and the bounded/unbounded embedding
  dichotomy it induces.

Conventions. Evenness is exploited everywhere: only s >= 0, or the
nonnegative orthant, is stored, and evaluation reflects the argument.
Tabulated functions are piecewise linear between knots; beyond the last
knot they extrapolate with the last secant slope, and conjugation
refuses dual points whose supremum lands on the last knot
(DomainTooSmall) because the value there is unreliable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DivergentAtZero,
    DomainTooSmall,
    NonIntegrableAtZero,
    OutOfRange,
)

# Default tolerances; entry points expose overrides.
TOL_CONVEX_REL = 1e-9   # allowed convexity defect, relative to function scale
TOL_INV = 1e-10         # absolute bisection tolerance on the argument s

__all__ = [
    "PowerLaw",
    "PowerLog",
    "Tabulated",
    "PowerSum",
    "Separable",
    "ExpSum",
    "TabulatedND",
    "DerivedScalarFn",
    "Delta2Result",
    "EmbeddingResult",
    "conjugate_1d",
    "conjugate_nd",
    "young_gap",
    "delta2_classify",
    "theta_of",
    "psi_of",
    "psi_inverse",
    "sobolev_conjugate",
    "embedding_class",
    "young_to_json",
    "young_from_json",
]


# ---------------------------------------------------------------------------
# one-dimensional families
# ---------------------------------------------------------------------------


class ScalarYoungFunction:
    """Base for even scalar functions stored on s >= 0."""

    def __call__(self, s):
        return self._eval(np.abs(np.asarray(s, dtype=float)))

    def _eval(self, s):  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def zero_set_end(self) -> float:
        """Largest s with phi(s) = 0 (0 for strictly increasing families)."""
        return 0.0

    @property
    def knot_end(self) -> float | None:
        """Last reliable argument for tabulated data, None if unbounded."""
        return None


@dataclass(frozen=True)
class PowerLaw(ScalarYoungFunction):
    """coefficient * |s|**exponent with coefficient > 0, exponent >= 1."""

    coefficient: float
    exponent: float

    def __post_init__(self):
        if not self.coefficient > 0:
            raise ValueError("coefficient must be positive")
        if not self.exponent >= 1:
            raise ValueError("exponent must be >= 1")

    def _eval(self, s):
        return self.coefficient * s**self.exponent


@dataclass(frozen=True)
class PowerLog(ScalarYoungFunction):
    """|s|**exponent * log(shift + |s|)**log_exponent.

    The shift is validated, not derived: the constructor samples second
    divided differences on a verification grid and rejects shifts too
    small for convexity. shift >= 1 keeps the values nonnegative.
    """

    exponent: float
    log_exponent: float
    shift: float

    def __post_init__(self):
        p, a, c = self.exponent, self.log_exponent, self.shift
        if p > 1:
            pass
        elif p == 1:
            if a < 0:
                raise ValueError("log_exponent must be >= 0 when exponent == 1")
        else:
            raise ValueError("exponent must be >= 1")
        if not c >= 1:
            raise ValueError("shift must be >= 1 so the values are nonnegative")
        grid = np.concatenate([np.linspace(0.0, 2.0, 2001), np.geomspace(2.002, 1e4, 2001)])
        v = self._eval(grid)
        d1 = np.diff(v) / np.diff(grid)
        if np.any(np.diff(d1) < -1e-12 * max(1.0, float(v[-1]))):
            raise ValueError("shift too small: sampled convexity check failed")

    def _eval(self, s):
        out = s**self.exponent * np.log(self.shift + s) ** self.log_exponent
        # 0 * log(c)**a may produce 0*inf warnings only for pathological a; exact 0 at 0
        return np.where(s == 0.0, 0.0, out)


@dataclass(frozen=True)
class Tabulated(ScalarYoungFunction):
    """Piecewise-linear interpolant of increasing knots on [0, s_max].

    Knots start at (0, 0). Convexity is enforced within a tolerance
    scaled by the value range unless ``check_convex`` is disabled, which
    is reserved for monotone-but-nonconvex derived tables.
    """

    knots: np.ndarray
    values: np.ndarray
    check_convex: bool = True
    provenance: tuple = ()

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2:
            raise ValueError("knots and values must be equal-length 1-D arrays")
        if not np.all(np.diff(k) > 0):
            raise ValueError("knots must be strictly increasing")
        if k[0] != 0.0:
            raise ValueError("first knot must be at 0")
        scale = max(1e-300, float(np.max(np.abs(v))))
        if v[0] != 0.0 or np.any(v < -TOL_CONVEX_REL * scale):
            raise ValueError("values must be nonnegative and vanish at 0")
        if np.any(np.diff(v) < -TOL_CONVEX_REL * scale):
            raise ValueError("values must be nondecreasing")
        if self.check_convex:
            slopes = np.diff(v) / np.diff(k)
            if np.any(np.diff(slopes) < -TOL_CONVEX_REL * scale):
                raise ValueError("second divided differences below -tol: not convex")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", np.maximum(v, 0.0))

    def _eval(self, s):
        v = np.interp(s, self.knots, self.values)
        last_slope = (self.values[-1] - self.values[-2]) / (self.knots[-1] - self.knots[-2])
        beyond = s > self.knots[-1]
        if np.any(beyond):
            v = np.where(beyond, self.values[-1] + last_slope * (s - self.knots[-1]), v)
        return v

    @property
    def zero_set_end(self) -> float:
        scale = max(1e-300, float(self.values[-1]))
        nz = np.nonzero(self.values > 1e-14 * scale)[0]
        if nz.size == 0:
            return float(self.knots[-1])
        return float(self.knots[max(nz[0] - 1, 0)])

    @property
    def knot_end(self) -> float:
        return float(self.knots[-1])


# ---------------------------------------------------------------------------
# N-dimensional families
# ---------------------------------------------------------------------------


class YoungFunctionND:
    """Base for even-in-each-coordinate functions on R^N, N >= 2."""

    dimension: int
    superlinear: bool = True

    def __call__(self, xi):
        xi = np.abs(np.asarray(xi, dtype=float))
        if xi.shape[-1] != self.dimension:
            raise ValueError(f"expected points with last axis {self.dimension}")
        return self._eval(xi)

    def _eval(self, xi):  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class PowerSum(YoungFunctionND):
    """sum_i coefficients[i] * |xi_i|**exponents[i], exponents > 1."""

    coefficients: tuple
    exponents: tuple

    def __post_init__(self):
        lam = tuple(float(x) for x in self.coefficients)
        p = tuple(float(x) for x in self.exponents)
        if len(lam) != len(p) or len(p) < 2:
            raise ValueError("need matching coefficient/exponent lists, N >= 2")
        if any(x <= 0 for x in lam) or any(q <= 1 for q in p):
            raise ValueError("coefficients must be > 0 and exponents > 1")
        object.__setattr__(self, "coefficients", lam)
        object.__setattr__(self, "exponents", p)

    @property
    def dimension(self):
        return len(self.exponents)

    def _eval(self, xi):
        lam = np.asarray(self.coefficients)
        p = np.asarray(self.exponents)
        return np.sum(lam * xi**p, axis=-1)

    def axis_functions(self) -> list[ScalarYoungFunction]:
        return [PowerLaw(l, p) for l, p in zip(self.coefficients, self.exponents)]


@dataclass(frozen=True)
class Separable(YoungFunctionND):
    """sum_i components[i](xi_i) for 1-D Young functions vanishing only at 0."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 2:
            raise ValueError("need at least two components")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "_superlinear", all(_looks_superlinear(c) for c in comps))

    @property
    def dimension(self):
        return len(self.components)

    @property
    def superlinear(self):
        return self._superlinear

    def _eval(self, xi):
        return sum(c(xi[..., i]) for i, c in enumerate(self.components))

    def axis_functions(self) -> list[ScalarYoungFunction]:
        return list(self.components)


@dataclass(frozen=True)
class ExpSum(YoungFunctionND):
    """exp(sum_i |xi_i|**exponents[i]) - 1 with exponents >= 1."""

    exponents: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.exponents)
        if len(p) < 2 or any(q < 1 for q in p):
            raise ValueError("need N >= 2 exponents, each >= 1")
        object.__setattr__(self, "exponents", p)

    @property
    def dimension(self):
        return len(self.exponents)

    def _eval(self, xi):
        p = np.asarray(self.exponents)
        return np.expm1(np.sum(xi**p, axis=-1))


@dataclass(frozen=True)
class TabulatedND(YoungFunctionND):
    """Multilinear table on a nonnegative-orthant grid of a centered box.

    ``axes`` are per-axis knot arrays starting at 0; ``values`` has the
    matching shape. Convexity along grid lines is checked within the
    shared tolerance; a superlinearity flag is estimated on the
    outermost shell (secant slope there must exceed the mid-shell one).
    """

    axes: tuple
    values: np.ndarray
    check_convex: bool = True

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        v = np.asarray(self.values, dtype=float)
        if len(axes) not in (2, 3):
            raise ValueError("TabulatedND supports N = 2 or 3")
        if v.shape != tuple(a.size for a in axes):
            raise ValueError("values shape must match axes")
        for a in axes:
            if a[0] != 0.0 or not np.all(np.diff(a) > 0):
                raise ValueError("axes must be strictly increasing from 0")
        scale = max(1e-300, float(np.max(np.abs(v))))
        if abs(v[(0,) * len(axes)]) > TOL_CONVEX_REL * scale or np.any(v < -TOL_CONVEX_REL * scale):
            raise ValueError("values must be nonnegative with value 0 at the origin")
        if self.check_convex:
            for ax, a in enumerate(axes):
                sl = np.diff(v, axis=ax) / _shape_for(np.diff(a), ax, v.ndim)
                if np.any(np.diff(sl, axis=ax) < -TOL_CONVEX_REL * scale):
                    raise ValueError(f"not convex along grid lines of axis {ax}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_superlinear", self._estimate_superlinear())

    def _estimate_superlinear(self) -> bool:
        # secant slope phi(x)/|x| on the outermost shell vs. half-radius shell
        ratios = []
        for ax in range(len(self.axes)):
            idx_end = [0] * len(self.axes)
            idx_mid = [0] * len(self.axes)
            idx_end[ax] = self.axes[ax].size - 1
            idx_mid[ax] = (self.axes[ax].size - 1) // 2
            r_end = self.axes[ax][idx_end[ax]]
            r_mid = self.axes[ax][idx_mid[ax]]
            if r_mid <= 0:
                continue
            ratios.append(
                (self.values[tuple(idx_end)] / r_end) / max(self.values[tuple(idx_mid)] / r_mid, 1e-300)
            )
        return bool(ratios) and min(ratios) > 1.0 + 1e-9

    @property
    def dimension(self):
        return len(self.axes)

    @property
    def superlinear(self):
        return self._superlinear

    def _eval(self, xi):
        return _multilinear(self.axes, self.values, xi)


def _shape_for(arr, axis, ndim):
    shape = [1] * ndim
    shape[axis] = arr.size
    return arr.reshape(shape)


def _multilinear(axes, values, pts):
    """Multilinear interpolation on an orthant grid, clamped at the far end."""
    nd = len(axes)
    idx = []
    frac = []
    for d in range(nd):
        a = axes[d]
        x = np.clip(pts[..., d], a[0], a[-1])
        i = np.clip(np.searchsorted(a, x, side="right") - 1, 0, a.size - 2)
        idx.append(i)
        frac.append((x - a[i]) / (a[i + 1] - a[i]))
    out = 0.0
    for corner in range(2**nd):
        w = 1.0
        ii = []
        for d in range(nd):
            bit = (corner >> d) & 1
            ii.append(idx[d] + bit)
            w = w * (frac[d] if bit else (1.0 - frac[d]))
        out = out + w * values[tuple(ii)]
    return out


def _looks_superlinear(fn: ScalarYoungFunction) -> bool:
    hi = fn.knot_end or 1e6
    r = np.array([hi / 8, hi / 4, hi / 2, hi])
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        q = fn(r) / r
    q = q[np.isfinite(q)]
    return q.size >= 2 and bool(q[-1] > 1.02 * q[0])


# ---------------------------------------------------------------------------
# derived scalar functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerivedScalarFn:
    """A scalar function derived from a Young function.

    ``tag`` is one of theta / psi / psi_inverse / sobolev_conjugate /
    h_function. For table-backed tags, ``fn`` holds the derived table;
    for the slope ratio (psi) it holds the parent function and
    evaluation computes fn(s)/s, with value 0 at 0.
    """

    fn: ScalarYoungFunction
    tag: str
    s0: float = 0.0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.tag == "psi":
            a = np.abs(s)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(a > 0, self.fn(a) / np.where(a > 0, a, 1.0), 0.0)
            return out
        return self.fn(s)

    @property
    def knot_end(self):
        return self.fn.knot_end


# ---------------------------------------------------------------------------
# conjugation
# ---------------------------------------------------------------------------


def _lower_convex_envelope(x: np.ndarray, y: np.ndarray):
    """Lower convex envelope of sampled points, by monotone chain.

    Returns the subset of indices kept; x must be strictly increasing.
    """
    keep = [0]
    for i in range(1, x.size):
        while len(keep) >= 2:
            i0, i1 = keep[-2], keep[-1]
            # pop the middle point if it lies above the chord (cross product test)
            if (y[i1] - y[i0]) * (x[i] - x[i0]) >= (y[i] - y[i0]) * (x[i1] - x[i0]):
                keep.pop()
            else:
                break
        keep.append(i)
    return np.asarray(keep)


def _sample_grid_for(phi: ScalarYoungFunction, t_max: float, n: int) -> np.ndarray:
    """Primal grid whose end secant slope safely exceeds t_max."""
    if phi.knot_end is not None:
        if isinstance(phi, Tabulated):
            return phi.knots
        return np.linspace(0.0, phi.knot_end, n)
    s_max = 1.0
    for _ in range(200):
        slope = (phi(s_max) - phi(0.999 * s_max)) / (0.001 * s_max)
        if slope > 1.05 * t_max + 1e-30:
            break
        s_max *= 2.0
        if s_max > 1e150:
            raise DomainTooSmall("no finite argument reaches the requested dual slope")
    return np.linspace(0.0, s_max, n)


def conjugate_1d(
    phi: ScalarYoungFunction,
    dual_grid: Sequence[float],
    *,
    n_samples: int = 4097,
    method: str = "auto",
) -> Tabulated:
    """Legendre conjugate sup_s(t*s - phi(s)) tabulated on dual_grid.

    Closed-form inputs are sampled on an internally sized grid; tabulated
    inputs use their own knots. Noisy tables are replaced by their lower
    convex envelope first (recorded in provenance). ``method='auto'``
    exploits the monotone argmax of the convexified data; ``'direct'``
    is the O(n*m) supremum over knots kept for cross-checks.

    Raises DomainTooSmall when the supremum for some dual point is
    attained at the last knot.
    """
    t = np.asarray(dual_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValueError("dual_grid must be increasing and nonnegative")
    if t[0] != 0.0:
        t = np.concatenate([[0.0], t])
    x = _sample_grid_for(phi, float(t[-1]), n_samples)
    y = phi(x)

    keep = _lower_convex_envelope(x, y)
    convexified = keep.size < x.size
    x, y = x[keep], y[keep]

    if method == "direct":
        g = np.empty(t.size)
        arg = np.empty(t.size, dtype=int)
        chunk = max(1, int(2e6 // max(x.size, 1)))
        for k0 in range(0, t.size, chunk):
            tk = t[k0 : k0 + chunk, None]
            vals = tk * x[None, :] - y[None, :]
            arg[k0 : k0 + chunk] = np.argmax(vals, axis=1)
            g[k0 : k0 + chunk] = np.take_along_axis(
                vals, arg[k0 : k0 + chunk, None], axis=1
            )[:, 0]
    else:
        slopes = np.diff(y) / np.diff(x)
        arg = np.searchsorted(slopes, t, side="left")
        g = t * x[arg] - y[arg]
    if np.any(arg >= x.size - 1):
        bad = t[arg >= x.size - 1]
        raise DomainTooSmall(
            f"conjugate unreliable for dual points >= {bad[0]:.6g}: "
            "supremum attained at the last knot"
        )
    g = np.maximum(g, 0.0)
    prov = ("conjugate",) + (("convexified",) if convexified else ())
    return Tabulated(t, g, provenance=prov)


def _dlt_last_axis(values: np.ndarray, x: np.ndarray, y: np.ndarray):
    """max_j (x_j * y_k - values[..., j]) with argmax-at-end detection."""
    lead = values.shape[:-1]
    flat = values.reshape(-1, values.shape[-1])
    out = np.empty((flat.shape[0], y.size))
    hit_end = False
    chunk = max(1, int(4e6 // (x.size * max(y.size, 1)) + 1))
    for r0 in range(0, flat.shape[0], chunk):
        block = flat[r0 : r0 + chunk]  # (rows, n)
        vals = y[None, :, None] * x[None, None, :] - block[:, None, :]
        arg = np.argmax(vals, axis=2)
        if np.any(arg == x.size - 1):
            hit_end = True
        out[r0 : r0 + chunk] = np.take_along_axis(vals, arg[:, :, None], axis=2)[:, :, 0]
    return out.reshape(lead + (y.size,)), hit_end


def conjugate_nd(
    phi: YoungFunctionND,
    dual_grid: Sequence[np.ndarray],
    *,
    primal_half_width: float | Sequence[float] | None = None,
    primal_cells: int = 257,
) -> TabulatedND:
    """N-dimensional Legendre conjugate tabulated on an orthant box grid.

    ``dual_grid`` is one increasing-from-0 knot array per axis.
    Separable inputs (PowerSum, Separable) factorize into per-axis 1-D
    conjugates. Other inputs are sampled on a primal orthant grid and
    reduced axis by axis; the supremum over the full space restricts to
    the orthant by evenness. Raises DomainTooSmall if any partial
    supremum is attained on the far face of the primal box.
    """
    axes = tuple(np.asarray(a, dtype=float) for a in dual_grid)
    if len(axes) != phi.dimension:
        raise ValueError("dual_grid must supply one axis per dimension")
    axes = tuple(a if a[0] == 0.0 else np.concatenate([[0.0], a]) for a in axes)
    if not phi.superlinear:
        raise ValueError("conjugate requires a superlinear function")

    if isinstance(phi, (PowerSum, Separable)):
        tables = [
            conjugate_1d(f, ax) for f, ax in zip(phi.axis_functions(), axes)
        ]
        vals = tables[0].values
        for tab in tables[1:]:
            vals = np.add.outer(vals, tab.values)
        return TabulatedND(axes, vals, check_convex=False)

    nd = phi.dimension
    if isinstance(phi, TabulatedND):
        primal_axes = phi.axes
        A = phi.values.copy()
    else:
        if primal_half_width is None:
            primal_half_width = [
                float(_sample_grid_for(_AxisSection(phi, d), float(axes[d][-1]), 9)[-1])
                for d in range(nd)
            ]
        widths = np.broadcast_to(np.asarray(primal_half_width, dtype=float), (nd,))
        primal_axes = tuple(np.linspace(0.0, w, primal_cells) for w in widths)
        mesh = np.meshgrid(*primal_axes, indexing="ij")
        A = phi(np.stack(mesh, axis=-1))

    for ax in reversed(range(nd)):
        if ax != nd - 1:
            A = -A
        moved = np.moveaxis(A, ax, -1)
        moved, hit_end = _dlt_last_axis(moved, primal_axes[ax], axes[ax])
        if hit_end:
            raise DomainTooSmall(
                f"partial supremum along axis {ax} attained on the primal box face"
            )
        A = np.moveaxis(moved, -1, ax)
    A = np.maximum(A, 0.0)
    A.flat[0] = 0.0
    return TabulatedND(axes, A, check_convex=False)


class _AxisSection(ScalarYoungFunction):
    """Restriction of an N-D function to a coordinate axis."""

    def __init__(self, phi: YoungFunctionND, axis: int):
        self._phi = phi
        self._axis = axis

    def _eval(self, s):
        pts = np.zeros(np.shape(s) + (self._phi.dimension,))
        pts[..., self._axis] = s
        return self._phi(pts)


def young_gap(phi, phi_conj, xi, xi_prime):
    """phi(xi) + phi_conj(xi') - xi . xi' (contract: >= -tol everywhere)."""
    xi = np.asarray(xi, dtype=float)
    xi_prime = np.asarray(xi_prime, dtype=float)
    return phi(xi) + phi_conj(xi_prime) - np.sum(xi * xi_prime, axis=-1)


# ---------------------------------------------------------------------------
# doubling classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Delta2Result:
    status: str  # "satisfied" | "violated" | "inconclusive"
    constant: float | None
    radii: np.ndarray
    ratios: np.ndarray
    note: str = ""

    @property
    def satisfied(self):
        return self.status == "satisfied"


def _probe_directions(dim: int, n_random: int = 24) -> np.ndarray:
    dirs = list(np.eye(dim))
    dirs.append(np.ones(dim) / np.sqrt(dim))
    rng = np.random.default_rng(0)
    extra = np.abs(rng.standard_normal((n_random, dim)))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    return np.vstack([dirs, extra])


def delta2_classify(phi, probe_radius: float, *, doublings: int = 7, stab_tol: float = 0.05) -> Delta2Result:
    """Estimate sup over shells of phi(2 xi)/phi(xi) across doubling radii.

    Satisfied when the ratio stabilizes (relative growth below
    ``stab_tol`` on the last doubling), violated when it grows
    monotonically by a clear factor, inconclusive otherwise. Tabulated
    inputs are probed only inside their knot range.
    """
    if not probe_radius > 0:
        raise ValueError("probe_radius must be positive")
    note = ""
    end = getattr(phi, "knot_end", None)
    if end is not None and 2 * probe_radius > end:
        probe_radius = end / 2.0
        note = "probe radius clamped to half the knot range"
    radii = probe_radius / 2.0 ** np.arange(doublings - 1, -1, -1)

    is_nd = isinstance(phi, YoungFunctionND)
    if is_nd:
        dirs = _probe_directions(phi.dimension)
        ratios = []
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            for r in radii:
                base = phi(r * dirs)
                top = phi(2 * r * dirs)
                ok = base > 0
                ratios.append(float(np.max(top[ok] / base[ok])) if np.any(ok) else np.nan)
        ratios = np.asarray(ratios)
    else:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            base = phi(radii)
            top = phi(2 * radii)
            ratios = np.where(base > 0, top / base, np.nan)

    ok = np.isfinite(ratios)
    if ok.sum() < 3:
        return Delta2Result("inconclusive", None, radii, ratios, note or "probe range too small")
    r_ok = ratios[ok]
    last_growth = (r_ok[-1] - r_ok[-2]) / abs(r_ok[-2])
    if abs(last_growth) <= stab_tol:
        c = float(max(r_ok[-2:]) * (1 + stab_tol))
        return Delta2Result("satisfied", c, radii, ratios, note)
    if np.all(np.diff(r_ok) > 0) and r_ok[-1] / r_ok[0] > 2.0:
        return Delta2Result("violated", None, radii, ratios, note)
    if not np.all(ok):
        # overflow at the largest radii is itself growth evidence
        if np.all(np.diff(r_ok) > 0):
            return Delta2Result("violated", None, radii, ratios, note + " overflow at large radii")
    return Delta2Result("inconclusive", None, radii, ratios, note or "no stable trend")


# ---------------------------------------------------------------------------
# slope ratio, its integral and inverse
# ---------------------------------------------------------------------------


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def psi_of(phi_diamond: ScalarYoungFunction) -> DerivedScalarFn:
    """Slope ratio phi(s)/s (0 at 0), with its flat-start threshold s0."""
    return DerivedScalarFn(phi_diamond, "psi", s0=phi_diamond.zero_set_end)


def theta_of(phi_diamond: ScalarYoungFunction, grid: Sequence[float], *, refine: int = 8) -> DerivedScalarFn:
    """Integral of the slope ratio, tabulated on ``grid``.

    Requires the slope ratio to vanish at 0+ (NonIntegrableAtZero
    otherwise). The result is convex and dominated by its parent.
    """
    g = np.asarray(grid, dtype=float)
    if g[0] != 0.0:
        g = np.concatenate([[0.0], g])
    if not np.all(np.diff(g) > 0):
        raise ValueError("grid must be strictly increasing")
    psi = psi_of(phi_diamond)
    # the slope ratio must decay toward 0+; probe at the finest reliable
    # scale (first knot for tables, a fraction of the grid otherwise)
    if isinstance(phi_diamond, Tabulated):
        s_lo = float(phi_diamond.knots[1])
    else:
        s_lo = g[1] / 16.0
    s_ref = float(np.sqrt(s_lo * g[-1]))
    scale = max(float(psi(g[-1])), 1e-300)
    if psi(s_lo) > 0.3 * psi(s_ref) and psi(s_lo) > 1e-9 * scale:
        raise NonIntegrableAtZero("phi(s)/s does not vanish at 0+")

    fine = np.unique(np.concatenate([np.linspace(a, b, refine + 1) for a, b in zip(g[:-1], g[1:])]))
    theta_fine = _cumtrapz(psi(fine), fine)
    vals = np.interp(g, fine, theta_fine)
    tab = Tabulated(g, vals, provenance=("integrated-slope-ratio",))
    return DerivedScalarFn(tab, "theta")


def psi_inverse(psi: DerivedScalarFn, r, *, tol: float = TOL_INV, s_hi: float | None = None):
    """Inverse of the slope ratio restricted to [s0, s_max], by bisection.

    Raises OutOfRange when some r exceeds the reachable ratio: upstream
    this signals that the data term is too strong for the gradient
    nonlinearity (the solvability margin is exhausted).
    """
    if psi.tag != "psi":
        raise ValueError("psi_inverse expects the slope-ratio derived function")
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r).astype(float)
    if np.any(r < 0):
        raise ValueError("ratios must be nonnegative")
    s0 = psi.s0
    if s_hi is None:
        if psi.knot_end is not None:
            s_hi = psi.knot_end
        else:
            s_hi = max(1.0, 2 * s0)
            top = float(np.max(r)) if r.size else 0.0
            while psi(s_hi) < top and s_hi < 1e18:
                s_hi *= 2.0
    cap = psi(np.asarray(s_hi, dtype=float))
    bad = r > cap * (1 + 1e-12) + 1e-300
    if np.any(bad):
        raise OutOfRange(
            f"ratio {float(np.max(r[bad])):.6g} exceeds the reachable slope ratio "
            f"{float(cap):.6g} at s = {s_hi:.6g}"
        )
    lo = np.full(r.shape, s0, dtype=float)
    hi = np.full(r.shape, float(s_hi), dtype=float)
    for _ in range(max(1, int(np.ceil(np.log2(max((s_hi - s0) / tol, 2.0))))) + 2):
        mid = 0.5 * (lo + hi)
        below = psi(mid) < r
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# dimensional conjugate and the embedding dichotomy
# ---------------------------------------------------------------------------


def sobolev_conjugate(
    phi_diamond: ScalarYoungFunction,
    dimension: int,
    *,
    r_max: float | None = None,
    n_points: int = 2001,
) -> tuple[DerivedScalarFn, DerivedScalarFn]:
    """Dimensional conjugate of a radial Young function.

    Builds H(r) = (int_0^r (s/phi(s))^(1/(N-1)) ds)^(1/N') and the
    conjugate phi(H^{-1}(.)), both tabulated and nondecreasing. Raises
    DivergentAtZero when the integrand is not integrable near 0, which
    is detected on dyadic segments.
    """
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    n_prime = dimension / (dimension - 1.0)
    if r_max is None:
        r_max = phi_diamond.knot_end or 100.0

    def integrand(s):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = phi_diamond(s)
            return np.where(s > 0, (s / np.where(v > 0, v, np.inf)) ** (1.0 / (dimension - 1)), 0.0)

    # dyadic convergence check near zero: integrals over [e/2^(k+1), e/2^k]
    # must decay geometrically as k grows, else the integral diverges
    e = r_max * 1e-3
    segs = []
    for k in range(4):
        xs = np.linspace(e / 2 ** (k + 1), e / 2**k, 257)
        segs.append(float(np.trapezoid(integrand(xs), xs)))
    ratios = [segs[k + 1] / max(segs[k], 1e-300) for k in range(3)]
    if float(np.mean(ratios[-2:])) >= 0.95:
        raise DivergentAtZero("dyadic segment integrals do not decay toward 0")

    r = np.concatenate([[0.0], np.geomspace(r_max * 1e-6, r_max, n_points - 1)])
    vals = integrand(r)
    cum = _cumtrapz(vals, r)
    # first-cell correction by local power fit of the integrand
    i1, i2 = 1, 2
    if vals[i1] > 0 and vals[i2] > 0 and r[i2] > r[i1]:
        beta = np.log(vals[i2] / vals[i1]) / np.log(r[i2] / r[i1])
        if beta > -1:
            cum = cum - cum[i1] + vals[i1] * r[i1] / (beta + 1.0)
            cum[0] = 0.0
    h_vals = np.maximum(cum, 0.0) ** (1.0 / n_prime)
    h_tab = Tabulated(r, h_vals, check_convex=False, provenance=("dimensional-integral",))
    h_fn = DerivedScalarFn(h_tab, "h_function")

    sigma = np.concatenate([[0.0], np.geomspace(max(h_vals[1], 1e-300), h_vals[-1], n_points - 1)])
    r_of_sigma = np.interp(sigma, h_vals, r)
    phin_vals = phi_diamond(r_of_sigma)
    phin_tab = Tabulated(sigma, np.maximum.accumulate(phin_vals), check_convex=False,
                         provenance=("dimensional-conjugate",))
    return h_fn, DerivedScalarFn(phin_tab, "sobolev_conjugate")


@dataclass(frozen=True)
class EmbeddingResult:
    kind: str  # "essentially_bounded" | "orlicz_embedding" | "inconclusive"
    fitted_exponent: float
    note: str = ""


def embedding_class(
    phi_diamond: ScalarYoungFunction,
    dimension: int,
    *,
    fit_tol: float = 0.05,
) -> EmbeddingResult:
    """Tail dichotomy: bounded functions versus an integral growth class.

    The tail integral of (s/phi(s))^(1/(N-1)) converges exactly when the
    growth exponent q of phi exceeds N. The exponent is fitted on the
    last two available decades; borderline fits fall back to direct
    quadrature across doubling tail segments.
    """
    end = phi_diamond.knot_end
    hi = end if end is not None else 1e6
    lo = hi / 100.0
    s = np.geomspace(lo, hi, 257)
    q = float(np.polyfit(np.log(s), np.log(np.maximum(phi_diamond(s), 1e-300)), 1)[0])
    if q > dimension * (1 + fit_tol):
        return EmbeddingResult("essentially_bounded", q)
    if q < dimension * (1 - fit_tol):
        return EmbeddingResult("orlicz_embedding", q)

    def integrand(x):
        return (x / np.maximum(phi_diamond(x), 1e-300)) ** (1.0 / (dimension - 1))

    base = hi / 16.0
    segs = []
    for k in range(4):
        xs = np.linspace(base * 2**k, base * 2 ** (k + 1), 513)
        segs.append(np.trapezoid(integrand(xs), xs))
    ratios = np.array(segs[1:]) / np.maximum(segs[:-1], 1e-300)
    rho = float(np.mean(ratios[-2:]))
    if rho <= 0.95:
        return EmbeddingResult("essentially_bounded", q, "borderline resolved by tail quadrature")
    if rho >= 0.999:
        return EmbeddingResult("orlicz_embedding", q, "borderline resolved by tail quadrature")
    return EmbeddingResult("inconclusive", q, "tail decay too slow to classify at this range")


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------


def young_to_json(fn) -> dict:
    """Serializable description; inverse of young_from_json."""
    if isinstance(fn, PowerLaw):
        return {"family": "power", "coefficient": fn.coefficient, "exponent": fn.exponent}
    if isinstance(fn, PowerLog):
        return {
            "family": "power_log",
            "exponent": fn.exponent,
            "log_exponent": fn.log_exponent,
            "shift": fn.shift,
        }
    if isinstance(fn, Tabulated):
        return {"family": "tabulated", "s": fn.knots.tolist(), "values": fn.values.tolist()}
    if isinstance(fn, PowerSum):
        return {"family": "power_sum", "lambda": list(fn.coefficients), "p": list(fn.exponents)}
    if isinstance(fn, Separable):
        return {"family": "separable", "components": [young_to_json(c) for c in fn.components]}
    if isinstance(fn, ExpSum):
        return {"family": "exp_sum", "p": list(fn.exponents)}
    raise TypeError(f"cannot serialize {type(fn).__name__}")


def young_from_json(spec: dict):
    """Build a Young function from its JSON description."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise ValueError("young function spec must be an object with a 'family' key")
    fam = spec["family"]
    known = {
        "power": {"coefficient", "exponent"},
        "power_log": {"exponent", "log_exponent", "shift"},
        "tabulated": {"s", "values"},
        "power_sum": {"lambda", "p"},
        "separable": {"components"},
        "exp_sum": {"p"},
    }
    if fam not in known:
        raise ValueError(f"unknown young function family '{fam}'")
    extra = set(spec) - known[fam] - {"family"}
    if extra:
        raise ValueError(f"unknown keys for family '{fam}': {sorted(extra)}")
    try:
        if fam == "power":
            return PowerLaw(float(spec["coefficient"]), float(spec["exponent"]))
        if fam == "power_log":
            return PowerLog(float(spec["exponent"]), float(spec["log_exponent"]), float(spec["shift"]))
        if fam == "tabulated":
            return Tabulated(np.asarray(spec["s"], dtype=float), np.asarray(spec["values"], dtype=float))
        if fam == "power_sum":
            return PowerSum(tuple(spec["lambda"]), tuple(spec["p"]))
        if fam == "separable":
            return Separable(tuple(young_from_json(c) for c in spec["components"]))
        return ExpSum(tuple(spec["p"]))
    except KeyError as exc:
        raise ValueError(f"missing key {exc} for family '{fam}'") from exc


def young_roundtrip_equal(a, b, probe: np.ndarray | None = None) -> bool:
    """Pointwise agreement on a probe grid; used by serialization tests."""
    if probe is None:
        probe = np.linspace(0.0, 3.0, 17)
    if isinstance(a, YoungFunctionND):
        pts = np.stack([probe] * a.dimension, axis=-1)
        return np.allclose(a(pts), b(pts), rtol=1e-12, atol=1e-12)
    return np.allclose(a(probe), b(probe), rtol=1e-12, atol=1e-12)


def dumps_young(fn) -> str:
    return json.dumps(young_to_json(fn), sort_keys=True)
