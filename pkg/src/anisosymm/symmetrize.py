"""Rearrangement machinery for grid functions and the Klimov pipeline.

Grid functions live on uniform cell-centered grids with a domain mask
and are continued by zero outside the mask. Their distribution function
and decreasing rearrangement are computed exactly from the multiset of
cell values (a descending sort), so equimeasurability and integral
preservation hold to the last bit, not just asymptotically.

The same sublevel-volume bookkeeping applied to an N-dimensional Young
function, with "greater than" replaced by "less than", gives the
symmetric increasing rearrangement. Chaining Legendre conjugation,
increasing rearrangement and conjugation again produces the radial
surrogate of an anisotropic Young function (Klimov symmetrization);
``klimov`` runs that pipeline and reports fitted power-law diagnostics
and the two-sided equivalence constants against the plain rearrangement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BoxTooSmall, RangeMismatch
from .young import (
    PowerSum,
    ScalarYoungFunction,
    Separable,
    Tabulated,
    YoungFunctionND,
    conjugate_1d,
)

__all__ = [
    "GridFunction",
    "MonotoneCurve",
    "RadialProfile",
    "RadialTable",
    "KlimovResult",
    "grid_on_square",
    "grid_on_disk",
    "ball_measure",
    "distribution",
    "decreasing_rearrangement",
    "symmetric_rearrangement",
    "symmetric_rearrangement_grid",
    "symmetric_increasing_rearrangement_nd",
    "klimov",
    "equivalence_constants",
    "f_double_star",
    "polya_szego_gap",
]


def ball_measure(dimension: int) -> float:
    """Lebesgue measure of the unit ball."""
    return math.pi ** (dimension / 2.0) / math.gamma(dimension / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# grid functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridFunction:
    """Cell-centered values on a uniform grid with a domain mask.

    ``origin`` is the coordinate of the center of cell (0, ..., 0).
    Values outside the mask are forced to zero on construction.
    """

    values: np.ndarray
    mask: np.ndarray
    spacing: float
    origin: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.mask, dtype=bool)
        if v.ndim not in (2, 3) or v.shape != m.shape:
            raise ValueError("values and mask must be matching 2-D or 3-D arrays")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if not m.any():
            raise ValueError("mask must be nonempty")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "values", np.where(m, v, 0.0))
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def cell_measure(self) -> float:
        return self.spacing**self.dimension

    @property
    def domain_measure(self) -> float:
        return float(self.mask.sum()) * self.cell_measure

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.values.shape[axis])

    def cell_centers(self) -> np.ndarray:
        axes = [self.axis_centers(d) for d in range(self.dimension)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def masked_values(self) -> np.ndarray:
        return self.values[self.mask]

    def integral(self) -> float:
        return float(np.sum(np.abs(self.masked_values()))) * self.cell_measure

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(values, self.mask, self.spacing, self.origin)


def grid_on_square(n: int, fn=0.0, side: float = 1.0) -> GridFunction:
    """Grid over the square (0, side)^2 with every cell in the domain."""
    h = side / n
    origin = (h / 2.0, h / 2.0)
    mask = np.ones((n, n), dtype=bool)
    g = GridFunction(np.zeros((n, n)), mask, h, origin)
    return g.with_values(_eval_on(g, fn))


def grid_on_disk(n: int, fn=0.0, radius: float = 1.0) -> GridFunction:
    """Grid over [-radius, radius]^2 masked to the centered disk.

    Cells belong to the domain when their center lies strictly inside
    the disk.
    """
    h = 2.0 * radius / n
    origin = (-radius + h / 2.0, -radius + h / 2.0)
    x = origin[0] + h * np.arange(n)
    mask = x[:, None] ** 2 + x[None, :] ** 2 < radius**2
    g = GridFunction(np.zeros((n, n)), mask, h, origin)
    return g.with_values(_eval_on(g, fn))


def _eval_on(g: GridFunction, fn) -> np.ndarray:
    if callable(fn):
        return np.asarray(fn(g.cell_centers()), dtype=float)
    return np.full(g.values.shape, float(fn))


# ---------------------------------------------------------------------------
# monotone curves
# ---------------------------------------------------------------------------

_STEP_TAGS = {"distribution", "rearrangement"}
_LINEAR_TAGS = {"concentration", "double_star"}


@dataclass(frozen=True)
class MonotoneCurve:
    """Sampled monotone function, either a step or a piecewise-linear one.

    Step curves (distribution, rearrangement) store interval boundaries
    ``x`` of length K+1 and K interval values; they are right-continuous
    and evaluation at or beyond the last boundary returns the last
    value. Linear curves (concentration, double_star) store matching
    ``x`` and node values. The monotonicity tag is validated within a
    scale-relative tolerance.
    """

    x: np.ndarray
    values: np.ndarray
    direction: str
    interpretation: str
    kind: str = ""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        kind = self.kind or ("step" if self.interpretation in _STEP_TAGS else "linear")
        if kind not in ("step", "linear"):
            raise ValueError("kind must be 'step' or 'linear'")
        if self.direction not in ("nonincreasing", "nondecreasing"):
            raise ValueError("direction must be 'nonincreasing' or 'nondecreasing'")
        if self.interpretation not in _STEP_TAGS | _LINEAR_TAGS:
            raise ValueError(f"unknown interpretation '{self.interpretation}'")
        if x.ndim != 1 or np.any(np.diff(x) <= 0):
            raise ValueError("x must be strictly increasing")
        expected = x.size - 1 if kind == "step" else x.size
        if v.size != expected:
            raise ValueError(f"expected {expected} values for a {kind} curve, got {v.size}")
        scale = float(np.max(np.abs(v))) if v.size else 0.0
        tol = 1e-12 * max(scale, 1.0)
        dv = np.diff(v)
        if self.direction == "nonincreasing" and np.any(dv > tol):
            raise ValueError("values violate the nonincreasing tag")
        if self.direction == "nondecreasing" and np.any(dv < -tol):
            raise ValueError("values violate the nondecreasing tag")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kind", kind)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return np.interp(s, self.x, self.values)
        idx = np.clip(np.searchsorted(self.x, s, side="right") - 1, 0, self.values.size - 1)
        return self.values[idx]

    @property
    def support_end(self) -> float:
        return float(self.x[-1])

    def integral(self) -> float:
        """Exact integral over the stored support."""
        if self.kind == "step":
            return float(np.sum(self.values * np.diff(self.x)))
        return float(np.trapezoid(self.values, self.x))

    def to_rows(self):
        if self.kind == "step":
            return np.column_stack([self.x[:-1], self.values])
        return np.column_stack([self.x, self.values])


@dataclass(frozen=True)
class RadialProfile:
    """Right-continuous step profile r -> value on increasing radii."""

    radii: np.ndarray
    values: np.ndarray

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        idx = np.clip(np.searchsorted(self.radii, r, side="right") - 1, 0, self.values.size - 1)
        return self.values[idx]


@dataclass(frozen=True)
class RadialTable:
    """Nondecreasing sampled function of a radius (piecewise linear)."""

    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 2:
            raise ValueError("radii and values must be equal-length 1-D arrays")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly increasing")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)

    def __call__(self, r):
        return np.interp(np.abs(np.asarray(r, dtype=float)), self.radii, self.values)

    @property
    def r_max(self) -> float:
        return float(self.radii[-1])

    def to_young(self, provenance: tuple = ()) -> Tabulated:
        """Convex lower envelope as a tabulated Young function."""
        r = self.radii if self.radii[0] == 0.0 else np.concatenate([[0.0], self.radii])
        v = self.values if self.radii[0] == 0.0 else np.concatenate([[0.0], self.values])
        v = np.maximum(v - v[0], 0.0) if v[0] > 0 else np.maximum(v, 0.0)
        keep = _envelope_indices(r, v)
        return Tabulated(r[keep], v[keep], check_convex=False,
                         provenance=("convexified",) + provenance)


def _envelope_indices(x, y):
    keep = [0]
    for i in range(1, x.size):
        while len(keep) >= 2:
            i0, i1 = keep[-2], keep[-1]
            if (y[i1] - y[i0]) * (x[i] - x[i0]) >= (y[i] - y[i0]) * (x[i1] - x[i0]):
                keep.pop()
            else:
                break
        keep.append(i)
    return np.asarray(keep)


# ---------------------------------------------------------------------------
# rearrangements of grid functions
# ---------------------------------------------------------------------------


def distribution(u: GridFunction, t_grid: Sequence[float] | None = None) -> MonotoneCurve:
    """Measure of the superlevel sets |u| > t.

    With ``t_grid`` omitted the exact step representation is returned
    (breakpoints at the distinct cell values, closing at the maximum).
    """
    vals = np.abs(u.masked_values())
    m = u.cell_measure
    sorted_vals = np.sort(vals)
    if t_grid is None:
        distinct = np.unique(sorted_vals)
        t = np.concatenate([[0.0], distinct[distinct > 0]])
    else:
        t = np.asarray(t_grid, dtype=float)
        if np.any(np.diff(t) <= 0) or t[0] < 0:
            raise ValueError("t_grid must be increasing and nonnegative")
    counts = vals.size - np.searchsorted(sorted_vals, t, side="right")
    mu = counts * m
    x = np.concatenate([t, [np.inf]])
    return MonotoneCurve(x, mu, "nonincreasing", "distribution")


def decreasing_rearrangement(u: GridFunction) -> MonotoneCurve:
    """Exact discrete decreasing rearrangement of |u| on [0, |domain|].

    The k-th largest cell value occupies one cell measure of length;
    equimeasurability with the input is exact by construction.
    """
    vals = np.sort(np.abs(u.masked_values()))[::-1]
    m = u.cell_measure
    x = m * np.arange(vals.size + 1)
    x[-1] = u.domain_measure  # guard against accumulation drift
    return MonotoneCurve(x, vals, "nonincreasing", "rearrangement")


def symmetric_rearrangement(u: GridFunction) -> RadialProfile:
    """Radial profile of the symmetric decreasing rearrangement.

    The value at radius r is the decreasing rearrangement evaluated at
    the measure of the ball of radius r.
    """
    star = decreasing_rearrangement(u)
    w = ball_measure(u.dimension)
    radii = (star.x / w) ** (1.0 / u.dimension)
    return RadialProfile(radii[:-1], star.values)


def symmetric_rearrangement_grid(u: GridFunction) -> GridFunction:
    """Resample the radial profile onto a centered ball mask (same spacing)."""
    prof = symmetric_rearrangement(u)
    w = ball_measure(u.dimension)
    radius = (u.domain_measure / w) ** (1.0 / u.dimension)
    h = u.spacing
    n = int(np.ceil(2 * radius / h)) + 2
    origin = tuple(-(n / 2.0) * h + h / 2.0 for _ in range(u.dimension))
    axes = [origin[d] + h * np.arange(n) for d in range(u.dimension)]
    mesh = np.meshgrid(*axes, indexing="ij")
    rr = np.sqrt(sum(c**2 for c in mesh))
    mask = rr < radius
    values = np.where(mask, prof(rr), 0.0)
    return GridFunction(values, mask, h, origin)


# ---------------------------------------------------------------------------
# symmetric increasing rearrangement of an N-D function
# ---------------------------------------------------------------------------


def _orthant_centers(half_width, cells_per_axis: int, dimension: int):
    """Cell centers of the positive orthant of a centered box.

    ``cells_per_axis`` counts cells across the full box; centers are
    half-offset so no cell sits on a symmetry plane and the full box is
    exactly 2^N mirrored copies of the orthant.
    """
    widths = np.broadcast_to(np.asarray(half_width, dtype=float), (dimension,))
    if cells_per_axis % 2:
        raise ValueError("cells_per_axis must be even")
    half = cells_per_axis // 2
    axes = [w / half * (np.arange(half) + 0.5) for w in widths]
    spacings = np.array([w / half for w in widths])
    return axes, spacings


def symmetric_increasing_rearrangement_nd(
    phi: YoungFunctionND | Callable,
    half_width,
    *,
    cells: int = 512,
    dimension: int | None = None,
    level_grid: Sequence[float] | None = None,
    smoothing: float = 0.02,
) -> RadialTable:
    """Radial function with ball-shaped sublevel sets of matched volume.

    ``phi`` is sampled at the cell centers of a centered box of the
    given half width(s); the volume of each sublevel set is counted with
    half a cell of boundary correction, and the value at radius r is the
    level whose sublevel volume equals the ball volume at r.

    ``smoothing`` averages the sorted (volume, level) sequence over
    geometric index blocks of that relative width, shrinking the
    lattice-counting jitter by the square root of the block size at a
    quadratically small bias; 0 disables it. Only levels whose sublevel
    set stays off the box boundary are returned; asking for more raises
    BoxTooSmall through the truncated range of the result.
    """
    nd = dimension or getattr(phi, "dimension", None)
    if nd not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    axes, spacings = _orthant_centers(half_width, cells, nd)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    vals = np.asarray(phi(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function values must be finite on the box")

    # smallest value on the boundary shell bounds the usable levels
    boundary_min = np.inf
    for ax in range(nd):
        sl = [slice(None)] * nd
        sl[ax] = -1
        boundary_min = min(boundary_min, float(vals[tuple(sl)].min()))

    cell_vol = float(np.prod(spacings)) * 2**nd
    flat = np.sort(vals.ravel())
    usable = flat < boundary_min
    if usable.sum() < 8:
        raise BoxTooSmall(
            "fewer than 8 interior sublevel cells; enlarge the box or refine it"
        )
    flat = flat[usable]
    volumes = (np.arange(flat.size) + 0.5) * cell_vol

    if level_grid is not None:
        levels = np.asarray(level_grid, dtype=float)
        if np.any(levels >= boundary_min):
            raise BoxTooSmall(
                f"requested level {levels.max():.6g} reaches the box boundary "
                f"(first boundary value {boundary_min:.6g})"
            )
        vol_at = np.interp(levels, flat, volumes)
        flat, volumes = levels, vol_at
    elif smoothing > 0:
        volumes, flat = _block_average(volumes, flat, smoothing)

    w = ball_measure(nd)
    radii = (volumes / w) ** (1.0 / nd)
    radii, idx = np.unique(radii, return_index=True)
    return RadialTable(radii, flat[idx])


def _block_average(volumes: np.ndarray, levels: np.ndarray, rel_width: float):
    """Mean of (volume, level) over geometric index blocks."""
    n = volumes.size
    bounds = [0]
    while bounds[-1] < n:
        nxt = max(bounds[-1] + 1, int(bounds[-1] * (1.0 + rel_width)))
        bounds.append(min(nxt, n))
    bounds = np.asarray(bounds)
    sums_v = np.concatenate([[0.0], np.cumsum(volumes)])
    sums_l = np.concatenate([[0.0], np.cumsum(levels)])
    widths = np.diff(bounds)
    vol_m = (sums_v[bounds[1:]] - sums_v[bounds[:-1]]) / widths
    lev_m = (sums_l[bounds[1:]] - sums_l[bounds[:-1]]) / widths
    return vol_m, lev_m


def _rearrange_multiscale(
    fn, half_width, cells: int, nd: int, scales=(1.0, 0.125, 0.015625)
) -> tuple[RadialTable, float]:
    """Stitch increasing rearrangements computed on nested zoom boxes.

    Small sublevel sets contain few cells of the full box, so their
    volumes carry large counting noise; re-counting them on zoomed-in
    boxes restores accuracy there. Returns the stitched table and the
    finest cell scale actually used (for noise-floor estimates).
    """
    widths = np.broadcast_to(np.asarray(half_width, dtype=float), (nd,))
    tables = []
    used = []
    for sc in scales:
        try:
            tables.append(
                symmetric_increasing_rearrangement_nd(
                    fn, widths * sc, cells=cells, dimension=nd
                )
            )
            used.append(sc)
        except BoxTooSmall:
            break
    if not tables:
        raise BoxTooSmall("even the full box holds no interior sublevel set")
    radii, vals = tables[0].radii, tables[0].values
    for finer in tables[1:]:
        cut = finer.r_max * 0.8
        keep = radii > cut
        take = finer.radii <= cut
        radii = np.concatenate([finer.radii[take], radii[keep]])
        vals = np.concatenate([finer.values[take], vals[keep]])
    h_finest = float(np.max(widths)) * used[-1] / (cells // 2)
    return RadialTable(radii, vals), h_finest


# ---------------------------------------------------------------------------
# Klimov symmetrization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KlimovResult:
    """Radial surrogate of an anisotropic Young function plus diagnostics."""

    phi_diamond: Tabulated
    fitted_exponent: float
    fitted_coefficient: float
    k_lower: float
    k_upper: float
    phi_star: RadialTable
    conj_star: RadialTable

    def __post_init__(self):
        # measured with tolerance slack, so allow a small crossing
        if self.k_lower > self.k_upper * 1.05:
            raise ValueError("equivalence constants must satisfy k_lower <= k_upper")


def _middle_decade(s: np.ndarray) -> np.ndarray:
    pos = s[s > 0]
    center = math.sqrt(pos[0] * pos[-1])
    lo, hi = center / math.sqrt(10.0), center * math.sqrt(10.0)
    return (s >= lo) & (s <= hi)


def _fit_power(s: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    sel = (s > 0) & (v > 0)
    coef = np.polyfit(np.log(s[sel]), np.log(v[sel]), 1)
    return float(coef[0]), float(np.exp(coef[1]))


def klimov(
    phi: YoungFunctionND,
    primal_box,
    dual_box,
    level_grid: Sequence[float] | None = None,
    *,
    cells: int = 512,
    s_grid: Sequence[float] | None = None,
    s_points: int = 1500,
) -> KlimovResult:
    """Conjugate, rearrange increasingly, conjugate again.

    ``primal_box`` and ``dual_box`` are half widths (scalar or per axis)
    of the sampling boxes for the input function and for its conjugate.
    The final radial conjugation is tabulated on ``s_grid`` (default: a
    log-spaced grid sized from the rearranged table's last slope).
    Diagnostics (power-law fit, equivalence constants against the plain
    increasing rearrangement) are taken over the middle decade.
    """
    if not phi.superlinear:
        raise ValueError("klimov requires a superlinear function")
    nd = phi.dimension

    if isinstance(phi, (PowerSum, Separable)):
        widths = np.broadcast_to(np.asarray(dual_box, dtype=float), (nd,))
        axis_tabs = []
        for f, w in zip(phi.axis_functions(), widths):
            # log-spaced dual knots keep the relative interpolation error
            # uniform down to the zoomed-in rearrangement scales
            grid = np.concatenate([[0.0], np.geomspace(w * 1e-7, w, 4 * cells)])
            axis_tabs.append(conjugate_1d(f, grid, n_samples=8193))

        def conj_fn(pts):
            return sum(t(pts[..., i]) for i, t in enumerate(axis_tabs))

    else:
        from .young import conjugate_nd  # local import to keep module load light

        dual_axes = [
            np.concatenate([[0.0], np.geomspace(w * 1e-7, w, cells)])
            for w in np.broadcast_to(np.asarray(dual_box, dtype=float), (nd,))
        ]
        conj_fn = conjugate_nd(phi, dual_axes, primal_half_width=primal_box)

    if level_grid is not None:
        conj_star = symmetric_increasing_rearrangement_nd(
            conj_fn, dual_box, cells=cells, dimension=nd, level_grid=level_grid
        )
        h_noise = float(np.max(np.broadcast_to(np.asarray(dual_box, dtype=float), (nd,)))) / (cells // 2)
    else:
        conj_star, h_noise = _rearrange_multiscale(conj_fn, dual_box, cells, nd)

    star_young = conj_star.to_young(provenance=("increasing-rearrangement",))
    if s_grid is None:
        r_top = conj_star.r_max
        s_hi = 0.90 * float(
            (conj_star(r_top) - conj_star(0.95 * r_top)) / (0.05 * r_top)
        )
        # radii below ~32 finest cells carry visible counting noise; the
        # dual grid starts at the secant slope just past that region
        r_noise = min(32.0 * h_noise, 0.5 * r_top)
        s_lo = float(
            (conj_star(1.1 * r_noise) - conj_star(r_noise)) / (0.1 * r_noise)
        )
        s_lo = min(max(s_lo, s_hi * 1e-7), s_hi / 4.0)
        s_grid = np.concatenate([[0.0], np.geomspace(s_lo, s_hi, s_points)])
    phi_diamond = conjugate_1d(star_young, s_grid)

    sel = _middle_decade(phi_diamond.knots)
    p_hat, lam_hat = _fit_power(phi_diamond.knots[sel], phi_diamond.values[sel])

    phi_star, _ = _rearrange_multiscale(phi, primal_box, cells, nd)
    k_lo, k_hi = equivalence_constants(phi_star, phi_diamond)
    return KlimovResult(phi_diamond, p_hat, lam_hat, k_lo, k_hi, phi_star, conj_star)


def equivalence_constants(
    phi_star: RadialTable,
    phi_diamond: ScalarYoungFunction,
    *,
    rel_tol: float = 1e-3,
) -> tuple[float, float]:
    """Two-sided scaling constants between a radial pair.

    Returns (k_lower, k_upper): the largest k with
    phi_star(k s) <= phi_diamond(s) on all sampled s and the smallest k
    with the reverse domination, both found by bisection on the
    monotone predicates. The probe range is capped so every scaled
    argument stays inside the rearranged table.
    """
    if isinstance(phi_diamond, Tabulated):
        s_all = phi_diamond.knots
    else:
        s_all = np.geomspace(phi_star.r_max * 1e-4, phi_star.r_max, 400)
    s = s_all[(s_all > 0) & (s_all <= phi_star.r_max / 4.0)]
    if s.size < 4:
        raise RangeMismatch("no usable common range between the radial pair")
    if s.size > 50:
        s = s[_middle_decade(s)]
    target = phi_diamond(s)
    scale = float(np.max(target))
    if scale <= 0:
        raise RangeMismatch("the radial function vanishes on the probe range")

    def lower_holds(k):
        return bool(np.all(phi_star(k * s) <= target * (1 + rel_tol) + rel_tol * scale))

    def upper_holds(k):
        return bool(np.all(target <= phi_star(k * s) * (1 + rel_tol) + rel_tol * scale))

    k_min, k_cov = 1e-6, phi_star.r_max / float(s[-1])
    if not lower_holds(k_min):
        raise RangeMismatch("no lower scaling constant found on the common range")
    if lower_holds(k_cov):
        k_lower = k_cov
    else:
        lo, hi = k_min, k_cov
        for _ in range(80):
            mid = math.sqrt(lo * hi)
            if lower_holds(mid):
                lo = mid
            else:
                hi = mid
        k_lower = lo

    if not upper_holds(k_cov):
        raise RangeMismatch("no upper scaling constant found on the common range")
    if upper_holds(k_min):
        k_upper = k_min
    else:
        lo, hi = k_min, k_cov
        for _ in range(80):
            mid = math.sqrt(lo * hi)
            if upper_holds(mid):
                hi = mid
            else:
                lo = mid
        k_upper = hi
    return float(k_lower), float(k_upper)


# ---------------------------------------------------------------------------
# second-order data transform and the energy comparison gap
# ---------------------------------------------------------------------------


def f_double_star(f_star: MonotoneCurve, s_grid: Sequence[float] | None = None) -> MonotoneCurve:
    """Running average (1/s) * integral of the rearrangement up to s.

    Exact at every requested point since the cumulative integral of a
    step curve is piecewise linear. The limit at 0 is the first value.
    """
    if f_star.direction != "nonincreasing":
        raise ValueError("expected a nonincreasing rearrangement curve")
    if f_star.kind != "step":
        raise ValueError("expected a step curve")
    x = f_star.x
    cum = np.concatenate([[0.0], np.cumsum(f_star.values * np.diff(x))])
    if s_grid is None:
        s = x
    else:
        s = np.asarray(s_grid, dtype=float)
    cum_at = np.interp(s, x, cum)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(s > 0, cum_at / np.where(s > 0, s, 1.0), f_star.values[0])
    if s[0] == 0.0:
        vals[0] = f_star.values[0]
    return MonotoneCurve(s, vals, "nonincreasing", "double_star")


def eval_f_double_star(f_star: MonotoneCurve, s) -> np.ndarray:
    """Pointwise running average, exact at arbitrary s > 0."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    x = f_star.x
    cum = np.concatenate([[0.0], np.cumsum(f_star.values * np.diff(x))])
    cum_at = np.interp(s, x, cum)
    return np.where(s > 0, cum_at / np.where(s > 0, s, 1.0), f_star.values[0])


def gradient_energy(u: GridFunction, phi: YoungFunctionND) -> float:
    """Integral of phi(forward-difference gradient) of the zero extension."""
    if u.dimension != phi.dimension:
        raise ValueError("grid dimension does not match the function dimension")
    pad = np.pad(u.values, 1)
    grads = np.stack(
        [np.diff(pad, axis=d)[tuple(slice(0, s) for s in _trim(pad.shape, d))] / u.spacing
         for d in range(u.dimension)],
        axis=-1,
    )
    return float(np.sum(phi(grads))) * u.cell_measure


def _trim(shape, axis):
    # after diff along `axis`, crop the other axes by one trailing entry so
    # all difference fields share the shape (n+1, ...) collocated at cells
    return tuple(s - 1 if d != axis else s - 1 for d, s in enumerate(shape))


def radial_gradient_energy(u: GridFunction, phi_diamond: ScalarYoungFunction) -> float:
    """Energy of the symmetric rearrangement, via the measure variable.

    The decreasing rearrangement is differentiated between consecutive
    distinct plateaus, with each level drop spread over the half
    plateaus on either side (grid functions tie heavily, and charging a
    whole drop to one cell would overstate any convex energy); then
    phi(slope * N w^(1/N) s^(1/N')) integrates in the measure variable.
    """
    star = decreasing_rearrangement(u)
    nd = u.dimension
    m = u.cell_measure
    levels, counts = np.unique(star.values, return_counts=True)
    levels, counts = levels[::-1], counts[::-1]  # descending plateaus
    if levels.size < 2:
        return 0.0
    plateau = counts * m
    bounds = np.cumsum(plateau)[:-1]             # measure where each drop sits
    drops = levels[:-1] - levels[1:]
    windows = 0.5 * (plateau[:-1] + plateau[1:])
    c = nd * ball_measure(nd) ** (1.0 / nd) * bounds ** (1.0 - 1.0 / nd)
    grad = drops / windows * c
    return float(np.sum(phi_diamond(grad) * windows))


def polya_szego_gap(
    u: GridFunction, phi: YoungFunctionND, phi_diamond: ScalarYoungFunction
) -> float:
    """Anisotropic gradient energy minus the energy of the rearrangement.

    Nonnegative in the limit of refinement; at finite spacing it may dip
    below zero by a discretization error that shrinks under refinement.
    """
    return gradient_energy(u, phi) - radial_gradient_energy(u, phi_diamond)
