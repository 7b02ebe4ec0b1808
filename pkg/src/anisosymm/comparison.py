"""Concentration curves and certification of the comparison estimates.

The certified statement: the positive part of the excess of the
anisotropic side's absorption concentration over the radial side's is
bounded, in the sup norm over the measure interval, by the same excess
of the data concentrations. With data rearranged identically on both
sides the bound collapses to one-sided domination of the absorption
concentrations, which in turn yields the mass estimates (for every
convex nondecreasing transform of the absorption) and the sup-norm
estimate.

All curves are compared on the union of their breakpoints, which is
exact for piecewise-linear concentration curves: the difference of two
such curves is piecewise linear, so its extrema sit on breakpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .radial_solver import ZeroOrderTerm, ZeroTerm
from .symmetrize import GridFunction, MonotoneCurve, decreasing_rearrangement

__all__ = [
    "ConcentrationSet",
    "ComparisonReport",
    "concentration",
    "theorem_check",
    "corollary_checks",
    "k_variant_check",
    "weaker_relation_check",
    "CorollaryEntry",
    "WeakerRelationResult",
]


def concentration(curve: MonotoneCurve, b: ZeroOrderTerm | None = None) -> MonotoneCurve:
    """Cumulative integral of a nonincreasing curve, optionally through b.

    Step inputs integrate exactly (cumulative sums of value times cell
    width); sampled piecewise-linear inputs integrate by the trapezoid
    rule on their own breakpoints, which is exact for them as well.
    """
    if curve.direction != "nonincreasing":
        raise ValueError("concentration expects a nonincreasing curve")
    if curve.kind == "step":
        vals = curve.values if b is None else np.asarray(b(curve.values))
        cum = np.concatenate([[0.0], np.cumsum(vals * np.diff(curve.x))])
    else:
        vals = curve.values if b is None else np.asarray(b(curve.values))
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(curve.x))])
    return MonotoneCurve(curve.x, cum, "nondecreasing", "concentration")


@dataclass(frozen=True)
class ConcentrationSet:
    """The four concentration curves entering the main comparison."""

    data_aniso: MonotoneCurve       # cumulative rearranged data, anisotropic side
    absorption_aniso: MonotoneCurve
    data_radial: MonotoneCurve
    absorption_radial: MonotoneCurve
    domain_measure: float

    def __post_init__(self):
        for c in (self.data_aniso, self.absorption_aniso, self.data_radial, self.absorption_radial):
            if c.direction != "nondecreasing":
                raise ValueError("concentration curves must be nondecreasing")
            if abs(float(c(0.0))) > 1e-12 * max(1.0, float(np.max(np.abs(c.values)))):
                raise ValueError("concentration curves must vanish at 0")

    def merged_grid(self) -> np.ndarray:
        xs = np.concatenate([
            self.data_aniso.x, self.absorption_aniso.x,
            self.data_radial.x, self.absorption_radial.x,
        ])
        xs = xs[(xs >= 0.0) & (xs <= self.domain_measure * (1 + 1e-12))]
        return np.unique(np.concatenate([xs, [0.0, self.domain_measure]]))


@dataclass
class ComparisonReport:
    """Measured margins and pass flags of the certified inequalities."""

    sup_absorption_excess: float
    sup_data_excess: float
    tol_disc: float
    passed: bool
    s: np.ndarray = field(repr=False)
    absorption_margin: np.ndarray = field(repr=False)
    data_margin: np.ndarray = field(repr=False)
    mesh_meta: dict = field(default_factory=dict)
    corollary: list = field(default_factory=list)
    k_variant: dict | None = None
    weaker_relation: dict | None = None
    skipped: str = ""

    def to_json(self) -> dict:
        out = {
            "sup_absorption_excess": self.sup_absorption_excess,
            "sup_data_excess": self.sup_data_excess,
            "tol_disc": self.tol_disc,
            "passed": bool(self.passed),
            "mesh": self.mesh_meta,
            "corollary": [e.to_json() for e in self.corollary],
            "skipped": self.skipped,
        }
        if self.k_variant is not None:
            out["k_variant"] = self.k_variant
        if self.weaker_relation is not None:
            out["weaker_relation"] = self.weaker_relation
        return out


def theorem_check(cs: ConcentrationSet, tol_disc: float, mesh_meta: dict | None = None) -> ComparisonReport:
    """Sup-norm comparison of the positive excesses on the merged grid."""
    s = cs.merged_grid()
    absorption_margin = np.asarray(cs.absorption_aniso(s)) - np.asarray(cs.absorption_radial(s))
    data_margin = np.asarray(cs.data_aniso(s)) - np.asarray(cs.data_radial(s))
    sup_b = float(np.max(np.maximum(absorption_margin, 0.0)))
    sup_f = float(np.max(np.maximum(data_margin, 0.0)))
    return ComparisonReport(
        sup_absorption_excess=sup_b,
        sup_data_excess=sup_f,
        tol_disc=tol_disc,
        passed=sup_b <= sup_f + tol_disc,
        s=s,
        absorption_margin=absorption_margin,
        data_margin=data_margin,
        mesh_meta=mesh_meta or {},
    )


@dataclass(frozen=True)
class CorollaryEntry:
    name: str
    status: str  # "pass" | "fail" | "skip"
    margin: float
    detail: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status, "margin": self.margin, "detail": self.detail}


def corollary_checks(
    cs: ConcentrationSet,
    u: GridFunction,
    v_star: MonotoneCurve,
    mass_transforms: Sequence,
    b: ZeroOrderTerm,
    *,
    tol_disc: float,
) -> list[CorollaryEntry]:
    """Pointwise domination, mass estimates and the sup-norm estimate.

    Requires the hypothesis that the radial data dominates in
    concentration; when it fails the checks are skipped, not failed
    (a data-generation mistake, not a disproof).
    """
    s = cs.merged_grid()
    data_gap = np.asarray(cs.data_aniso(s)) - np.asarray(cs.data_radial(s))
    entries: list[CorollaryEntry] = []
    if float(np.max(data_gap)) > tol_disc:
        return [CorollaryEntry(
            "data_concentration_dominated", "skip", float(np.max(data_gap)),
            "hypothesis not met: the anisotropic data is more concentrated",
        )]
    entries.append(CorollaryEntry(
        "data_concentration_dominated", "pass", float(np.max(data_gap)),
        "radial data dominates in concentration",
    ))

    ab_gap = np.asarray(cs.absorption_aniso(s)) - np.asarray(cs.absorption_radial(s))
    worst = float(np.max(ab_gap))
    entries.append(CorollaryEntry(
        "absorption_concentration_dominated", "pass" if worst <= tol_disc else "fail",
        worst, "pointwise domination of the absorption concentrations",
    ))

    u_star = decreasing_rearrangement(u)
    bu = np.asarray(b(u_star.values))
    widths_u = np.diff(u_star.x)
    sv = np.asarray(v_star.values)
    bv = np.asarray(b(sv))
    for transform in mass_transforms:
        lhs = float(np.sum(np.asarray(transform(bu)) * widths_u))
        tv = np.asarray(transform(bv))
        rhs = float(np.trapezoid(tv, v_star.x))
        scale = max(abs(lhs), abs(rhs), 1.0)
        tol_mass = tol_disc * max(1.0, _lipschitz_scale(transform, bu, bv))
        entries.append(CorollaryEntry(
            f"mass_estimate[{getattr(transform, 'label', repr(transform))}]",
            "pass" if lhs <= rhs + tol_mass else "fail",
            lhs - rhs,
            f"lhs {lhs:.6g} vs rhs {rhs:.6g} (tol {tol_mass:.3g})",
        ))

    u_sup = float(u_star.values[0]) if u_star.values.size else 0.0
    v_sup = float(v_star(0.0))
    entries.append(CorollaryEntry(
        "sup_norm_estimate", "pass" if u_sup <= v_sup + tol_disc else "fail",
        u_sup - v_sup, f"sup u {u_sup:.6g} vs sup v {v_sup:.6g}",
    ))
    return entries


def _lipschitz_scale(transform, *value_arrays) -> float:
    top = max((float(np.max(np.abs(v))) if v.size else 0.0) for v in value_arrays)
    if top <= 0:
        return 1.0
    lo = float(np.asarray(transform(np.asarray([0.999 * top]))))
    hi = float(np.asarray(transform(np.asarray([top]))))
    return abs(hi - lo) / (0.001 * top)


def k_variant_check(cs: ConcentrationSet, scale: float, tol_disc: float) -> dict:
    """Sup comparison with the anisotropic curves multiplied by ``scale``.

    Used when the radial side was built from the plain increasing
    rearrangement instead of the conjugation pipeline, with ``scale``
    estimated from the equivalence constants.
    """
    s = cs.merged_grid()
    ab = scale * np.asarray(cs.absorption_aniso(s)) - np.asarray(cs.absorption_radial(s))
    da = scale * np.asarray(cs.data_aniso(s)) - np.asarray(cs.data_radial(s))
    sup_b = float(np.max(np.maximum(ab, 0.0)))
    sup_f = float(np.max(np.maximum(da, 0.0)))
    return {
        "scale": float(scale),
        "sup_absorption_excess": sup_b,
        "sup_data_excess": sup_f,
        "passed": bool(sup_b <= sup_f + tol_disc),
        "tol_disc": float(tol_disc),
    }


@dataclass(frozen=True)
class WeakerRelationResult:
    holds: bool
    max_defect: float
    tol: float

    def to_json(self) -> dict:
        return {"holds": bool(self.holds), "max_defect": self.max_defect, "tol": self.tol}


def weaker_relation_check(
    b1: ZeroOrderTerm,
    b2: ZeroOrderTerm,
    samples: Sequence[float],
    *,
    tol: float = 1e-9,
) -> WeakerRelationResult:
    """Is b1 weaker than b2: does b1 = rho(b2) hold for a contraction rho.

    The transfer map rho is sampled through rho(b2(t)) = b1(t); the
    contraction defect is maximized over all sample pairs.
    """
    if isinstance(b1, ZeroTerm) or isinstance(b2, ZeroTerm):
        raise ValueError("the weaker relation needs strictly increasing terms")
    t = np.asarray(samples, dtype=float)
    sigma = np.asarray(b2(t))
    rho = np.asarray(b1(t))
    d_rho = np.abs(rho[:, None] - rho[None, :])
    d_sigma = np.abs(sigma[:, None] - sigma[None, :])
    defect = float(np.max(d_rho - d_sigma))
    scale = max(1.0, float(np.max(np.abs(sigma))))
    return WeakerRelationResult(defect <= tol * scale, defect, tol * scale)
