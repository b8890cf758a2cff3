"""Radial field surgery with a certified discrete energy decrease.

The surgery rewrites a field inside a node region so its radius about the
well never exceeds r, leaving everything outside bit-identical.  Both
per-value maps are 1-Lipschitz and keep each value on its own ray from the
well, so with the trace hypothesis (radius <= r on the region's relative
boundary) every finite difference, and hence the discrete kinetic term,
can only shrink; radial monotonicity of W up to r0 does the same for the
potential term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .energy import EnergyBreakdown, total_energy
from .grids import BoundarySpec, PolarDecomposition, RegionMask, VectorField2D
from .potentials import Potential

Array = np.ndarray

BOUNDARY_TRACE_TOL = 1e-12


class SurgeryRejectedError(ValueError):
    """Clamp-mode surgery on a region with radii beyond 2r is not licensed."""


class LevelCollisionError(ValueError):
    """Every candidate truncation level collides with a sampled radius."""


@dataclass(frozen=True)
class CutoffParams:
    """Well center and truncation radius; requires 2r below the paired r0."""

    a: Array
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("truncation radius must be positive")
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))

    def check_against(self, p: Potential) -> None:
        if not 2.0 * self.r < p.r0:
            raise ValueError(
                f"need 2r < r0, got r = {self.r} with r0 = {p.r0} for {p.name!r}"
            )


def cutoff_alpha(tau, r: float):
    """Piecewise-linear profile: 1 below r, (2r - tau)/r on [r, 2r], 0 beyond."""
    if r <= 0:
        raise ValueError("r must be positive")
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0):
        raise ValueError("tau must be nonnegative")
    out = np.clip((2.0 * r - tau_arr) / r, 0.0, 1.0)
    return out if out.ndim else float(out)


def _radial_apply(u_val: Array, a: Array, scale: Array) -> Array:
    return a + scale[..., None] * (u_val - a)


def radial_truncation_map(u_val, params: CutoffParams):
    """Value map u -> a + r alpha(rho) n: identity below r, radius 2r - rho on
    [r, 2r], collapse to the well beyond 2r."""
    u_arr = np.asarray(u_val, dtype=float)
    a, r = params.a, params.r
    rho = np.linalg.norm(u_arr - a, axis=-1)
    s = np.where(rho <= r, rho, np.maximum(2.0 * r - rho, 0.0))
    scale = np.divide(s, rho, out=np.ones_like(rho), where=rho > 0)
    out = _radial_apply(u_arr, a, scale)
    return out if u_arr.ndim > 1 else out.reshape(u_arr.shape)


def clamp_at_r_map(u_val, params: CutoffParams):
    """Value map clamping the radius at r: u -> a + min(rho, r) n."""
    u_arr = np.asarray(u_val, dtype=float)
    a, r = params.a, params.r
    rho = np.linalg.norm(u_arr - a, axis=-1)
    scale = np.where(rho <= r, 1.0, np.divide(r, rho, out=np.ones_like(rho), where=rho > 0))
    out = _radial_apply(u_arr, a, scale)
    return out if u_arr.ndim > 1 else out.reshape(u_arr.shape)


_MAPS = {"alpha": radial_truncation_map, "clamp": clamp_at_r_map}


@dataclass(frozen=True)
class ReplacementReport:
    """Before/after energies and the hypothesis flags behind the certificate.

    ``certified`` is True only when the trace hypothesis held (and, in clamp
    mode, the radius stayed within 2r), in which case ``total_delta <= 0`` is
    guaranteed, strictly when C0 carries cells.
    """

    before: EnergyBreakdown
    after: EnergyBreakdown
    kinetic_delta: float
    potential_delta: float
    area_c0: float
    area_a_plus: float
    max_rho_before: float
    max_rho_after: float
    boundary_ok: bool
    has_exceedance: bool
    empty_region: bool
    certified: bool
    mode: str

    @property
    def total_delta(self) -> float:
        return self.kinetic_delta + self.potential_delta

    def flags(self) -> str:
        toks = []
        toks.append("boundary_ok" if self.boundary_ok else "boundary_violated")
        toks.append("exceedance" if self.has_exceedance else "no_op")
        if self.empty_region:
            toks.append("empty_region")
        if self.certified:
            toks.append("certified")
        toks.append(self.mode)
        return ";".join(toks)

    def csv_row(self) -> str:
        return (
            f"{self.before.total:.17g},{self.after.total:.17g},"
            f"{self.kinetic_delta:.17g},{self.potential_delta:.17g},"
            f"{self.area_c0:.17g},{self.area_a_plus:.17g},"
            f"{self.max_rho_before:.17g},{self.max_rho_after:.17g},{self.flags()}"
        )


def write_replacement_csv(report: ReplacementReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "J_before,J_after,kin_delta,pot_delta,area_C0,area_Aplus,"
            "max_rho_before,max_rho_after,flags\n"
        )
        fh.write(report.csv_row() + "\n")


def replace(
    u: VectorField2D,
    A: RegionMask,
    p: Potential,
    params: CutoffParams,
    bc: BoundarySpec,
    mode: str = "alpha",
) -> tuple[VectorField2D, ReplacementReport]:
    """Apply the truncation map on the region's nodes and certify the decrease.

    Outside the region the returned field is bit-identical to the input.  A
    violated trace hypothesis does not stop the surgery; it only withholds
    the certificate.  Clamp mode is rejected outright when the region holds
    radii beyond 2r, since the potential comparison is then unlicensed.
    """
    if mode not in _MAPS:
        raise ValueError(f"unknown mode {mode!r}")
    params.check_against(p)
    grid = u.grid
    a, r = params.a, params.r
    area = grid.cell_area

    inside = A.inside
    rho = np.linalg.norm(u.values - a, axis=-1)
    empty_region = not bool(inside.any())

    bnodes = A.boundary_nodes()
    if bnodes.size:
        trace = rho[bnodes[:, 0], bnodes[:, 1]]
        boundary_ok = bool(np.max(trace) <= r + BOUNDARY_TRACE_TOL)
    else:
        boundary_ok = True

    exceed = inside & (rho > r)
    has_exceedance = bool(exceed.any())
    area_c0 = float(np.count_nonzero(exceed) * area)
    area_a_plus = float(np.count_nonzero(inside & (rho > 2.0 * r)) * area)
    max_rho_before = float(np.max(rho[inside])) if not empty_region else 0.0

    if mode == "clamp" and not empty_region and max_rho_before > 2.0 * r:
        raise SurgeryRejectedError(
            f"clamp mode needs max rho <= 2r on the region, got {max_rho_before} > {2 * r}"
        )

    before = total_energy(u, p, bc)

    if empty_region or not has_exceedance:
        # Hypothesis (3) vacuous: exact no-op.
        report = ReplacementReport(
            before=before,
            after=before,
            kinetic_delta=0.0,
            potential_delta=0.0,
            area_c0=area_c0,
            area_a_plus=area_a_plus,
            max_rho_before=max_rho_before,
            max_rho_after=max_rho_before,
            boundary_ok=boundary_ok,
            has_exceedance=False,
            empty_region=empty_region,
            certified=boundary_ok and not empty_region,
            mode=mode,
        )
        return u.copy(), report

    new_values = u.values.copy()
    # Only nodes with rho > r move; the maps are the identity below r.
    new_values[exceed] = _MAPS[mode](u.values[exceed], params)
    tilde = VectorField2D(grid, new_values)

    after = total_energy(tilde, p, bc)
    rho_after = np.linalg.norm(new_values - a, axis=-1)
    max_rho_after = float(np.max(rho_after[inside]))

    report = ReplacementReport(
        before=before,
        after=after,
        kinetic_delta=after.kinetic - before.kinetic,
        potential_delta=after.potential - before.potential,
        area_c0=area_c0,
        area_a_plus=area_a_plus,
        max_rho_before=max_rho_before,
        max_rho_after=max_rho_after,
        boundary_ok=boundary_ok,
        has_exceedance=True,
        empty_region=False,
        certified=boundary_ok,
        mode=mode,
    )
    return tilde, report


def select_noncritical_level(
    pd: PolarDecomposition,
    A: RegionMask,
    r: float,
    delta_max: Optional[float] = None,
    n_candidates: int = 64,
) -> float:
    """Largest level r' <= r within delta_max of r hitting no sampled radius.

    Discrete surrogate of picking a noncritical level: a candidate collides
    when some node radius in the region equals it exactly.  Candidates are
    ``r - k * delta_max / n_candidates`` for k = 0..n_candidates.
    """
    if delta_max is None:
        delta_max = 1e-6 * r
    if delta_max <= 0:
        raise ValueError("delta_max must be positive")
    radii = pd.rho[A.inside]
    for k in range(n_candidates + 1):
        candidate = r - k * delta_max / n_candidates
        if not np.any(radii == candidate):
            return float(candidate)
    raise LevelCollisionError(
        f"all {n_candidates + 1} candidate levels within {delta_max} of {r} collide "
        "with sampled radii; retry with a larger delta_max"
    )
