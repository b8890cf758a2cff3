"""Column measures on strip domains and the tail pointwise-estimate experiment.

For a field on the strip (0, mu R) x (-R, R) with radius rho about the well,
a column is *bad at level r/2* when some node reaches rho >= r/2, and carries
a *transition* when rho crosses the band [r/4, r/2] monotonically somewhere
along the column.  The measured counterparts of the bad-set bound are:

* ``w0``: the potential floor outside the r/4-ball (from the potentials module),
* ``C``: measured energy per unit height, J / R,
* ``eta0 = 2 sqrt(2) C / (r sqrt(w0))``: the column-measure constant, so that
  the bad-column measure is controlled by eta0 * R,
* per transition, the line energy along the column is at least
  ``r sqrt(w0) / (2 sqrt(2))``.

The experiment minimizes on strips of growing R, measures all of the above,
then runs the radius surgery at level r/2 on everything right of the first
quiet column and checks the resulting tail bound.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

from .energy import total_energy, write_line_energy_csv
from .flow import FlowConfig, FlowHistory, best_of_seeds, seeded_smooth_noise
from .grids import (
    BoundarySpec,
    Grid2,
    PolarDecomposition,
    STRIP,
    VectorField2D,
    column_tail_mask,
    dump_field,
    polar_decompose,
)
from .potentials import HalfPlane, Potential, min_w_outside, two_well
from .replacement import CutoffParams, ReplacementReport, replace, write_replacement_csv

Array = np.ndarray

POINTWISE_TOL = 1e-12


class NoGoodColumnError(RuntimeError):
    """No scanned column stayed below r/2; reports the measured bad measure."""

    def __init__(self, abs_iR: float, eta_window: float, R: float):
        self.abs_iR = abs_iR
        super().__init__(
            f"no column with max rho < r/2 in (0, {eta_window * R:g}); "
            f"measured |i_R| = {abs_iR:g} (R below the effective threshold, "
            "or the minimizer is poor)"
        )


@dataclass(frozen=True)
class ColumnInterval:
    """One transition interval of a column: rho = r/4 at ``a``, r/2 at ``b``.

    Positions are x2 coordinates; ``a < b`` for rising transitions and
    ``a > b`` for falling ones.  In between, rho stays inside [r/4, r/2].
    """

    column: float
    a: float
    b: float
    length: float
    rising: bool

    def bounds(self) -> tuple[float, float]:
        return (min(self.a, self.b), max(self.a, self.b))


def _scan_rising(rho: Array, hy: float, lo: float, hi: float):
    n = rho.size
    for k in range(n - 1):
        if rho[k] < hi <= rho[k + 1]:
            b = (k + (hi - rho[k]) / (rho[k + 1] - rho[k])) * hy
            j = k
            while j >= 0 and lo <= rho[j] <= hi:
                j -= 1
            if j >= 0 and rho[j] < lo:
                a = (j + (lo - rho[j]) / (rho[j + 1] - rho[j])) * hy
                return a, b
    return None


def extract_L_interval(rho_column: Array, hy: float, r: float) -> Optional[ColumnInterval]:
    """First maximal interval where rho transits the band [r/4, r/2].

    Endpoints are located by linear interpolation between samples and given
    relative to the first sample.  Rising transitions (in increasing x2) are
    preferred; if none exists the column is scanned in reverse so a falling
    transit is still found.  Returns None when rho never crosses the band.
    """
    rho = np.asarray(rho_column, dtype=float)
    lo, hi = r / 4.0, r / 2.0
    hit = _scan_rising(rho, hy, lo, hi)
    if hit is not None:
        a, b = hit
        return ColumnInterval(float("nan"), a, b, b - a, rising=True)
    hit = _scan_rising(rho[::-1], hy, lo, hi)
    if hit is not None:
        top = (rho.size - 1) * hy
        a, b = top - hit[0], top - hit[1]
        return ColumnInterval(float("nan"), a, b, a - b, rising=False)
    return None


@dataclass(frozen=True)
class MeasureReport:
    """Bad-column measures at levels r/2 and r/4 plus the measured constants.

    The geometric part is filled by :func:`compute_measures`; the constants
    (C, w0, eta0, R0) are attached by the experiment driver once the energy
    and the potential floor are known.
    """

    r: float
    threshold_half: float
    threshold_quarter: float
    eta_window: float
    scanned: Array
    column_max_rho: Array
    i_columns: Array
    j_columns: Array
    abs_iR: float
    abs_jR: float
    intervals: dict
    xbar1_index: Optional[int]
    xbar1: Optional[float]
    C: Optional[float] = None
    w0: Optional[float] = None
    eta0: Optional[float] = None
    R0: Optional[float] = None

    def with_constants(self, C: float, w0: float) -> "MeasureReport":
        return dataclasses.replace(
            self,
            C=C,
            w0=w0,
            eta0=eta0_constant(C, self.r, w0),
            R0=self.r / (2.0 * math.sqrt(2.0 * w0)),
        )


def compute_measures(
    pd: PolarDecomposition,
    grid: Grid2,
    r: float,
    eta_window: float,
) -> MeasureReport:
    """Classify the strip's columns inside the scan window (0, eta_window * R).

    A column joins i_R when some node reaches rho >= r/2 and j_R when it also
    carries a full r/4 -> r/2 transition; measures are column counts times hx.
    The full height |x2| < R is scanned.  ``xbar1`` is the first scanned
    column outside i_R (the deterministic good-column pick), or None.
    """
    if grid.tag != STRIP:
        raise ValueError("column measures need a strip-tagged grid")
    if not 0.0 < eta_window <= grid.mu:
        raise ValueError("eta_window must lie in (0, mu]")
    x1 = grid.x1()
    col_max = pd.rho.max(axis=1)
    scanned = (x1 > 0.0) & (x1 < eta_window * grid.R)
    i_mask = scanned & (col_max >= r / 2.0)
    intervals: dict[int, ColumnInterval] = {}
    j_list = []
    for i in np.flatnonzero(i_mask):
        hit = extract_L_interval(pd.rho[i], grid.hy, r)
        if hit is not None:
            oy = grid.origin[1]
            intervals[int(i)] = dataclasses.replace(
                hit, column=float(x1[i]), a=hit.a + oy, b=hit.b + oy
            )
            j_list.append(i)
    j_cols = np.array(j_list, dtype=int)
    i_cols = np.flatnonzero(i_mask)
    good = np.flatnonzero(scanned & ~i_mask)
    xbar1_index = int(good[0]) if good.size else None
    return MeasureReport(
        r=r,
        threshold_half=r / 2.0,
        threshold_quarter=r / 4.0,
        eta_window=eta_window,
        scanned=scanned,
        column_max_rho=col_max,
        i_columns=i_cols,
        j_columns=j_cols,
        abs_iR=float(i_cols.size * grid.hx),
        abs_jR=float(j_cols.size * grid.hx),
        intervals=intervals,
        xbar1_index=xbar1_index,
        xbar1=float(x1[xbar1_index]) if xbar1_index is not None else None,
    )


def eta0_constant(C: float, r: float, w0: float) -> float:
    """Column-measure constant 2 sqrt(2) C / (r sqrt(w0))."""
    if C <= 0 or r <= 0 or w0 <= 0:
        raise ValueError(f"eta0 needs positive inputs, got C={C}, r={r}, w0={w0}")
    return 2.0 * math.sqrt(2.0) * C / (r * math.sqrt(w0))


def _interp(arr: Array, t: float) -> float:
    j = int(np.floor(t))
    j = min(max(j, 0), arr.size - 2)
    frac = t - j
    return float(arr[j] * (1.0 - frac) + arr[j + 1] * frac)


def _integrate_partial(phi: Array, t0: float, t1: float, hy: float) -> float:
    """Trapezoid of sampled phi over fractional sample range [t0, t1]."""
    if t1 <= t0:
        return 0.0
    j0 = int(np.ceil(t0))
    j1 = int(np.floor(t1))
    if j1 < j0:
        return 0.5 * (_interp(phi, t0) + _interp(phi, t1)) * (t1 - t0) * hy
    total = 0.5 * (_interp(phi, t0) + phi[j0]) * (j0 - t0) * hy
    if j1 > j0:
        total += float(np.trapezoid(phi[j0 : j1 + 1])) * hy
    total += 0.5 * (phi[j1] + _interp(phi, t1)) * (t1 - j1) * hy
    return total


def column_lower_bound_check(
    u: VectorField2D,
    col: ColumnInterval,
    p: Potential,
    w0: float,
    r: float,
    slack: float = 0.05,
) -> tuple[float, float, bool]:
    """Line energy over the transition interval against r sqrt(w0) / (2 sqrt 2).

    The integrand 1/2 |grad u|^2 + W(u) is sampled at the column's nodes
    (central differences inside, one-sided at edges) and integrated by the
    trapezoid rule with interpolated interval endpoints; the check passes at
    a 1 - slack fraction of the bound to absorb quadrature error.
    """
    grid = u.grid
    i = int(round((col.column - grid.origin[0]) / grid.hx))
    if not 0 <= i < grid.nx:
        raise ValueError(f"interval column {col.column} is outside the grid")
    gx = np.gradient(u.values, grid.hx, axis=0)
    gy = np.gradient(u.values, grid.hy, axis=1)
    dens = 0.5 * (np.sum(gx[i] ** 2, axis=-1) + np.sum(gy[i] ** 2, axis=-1))
    phi = dens + p.evaluate(u.values[i])
    lo, hi = col.bounds()
    t0 = (lo - grid.origin[1]) / grid.hy
    t1 = (hi - grid.origin[1]) / grid.hy
    line_energy = _integrate_partial(phi, t0, t1, grid.hy)
    bound = r * math.sqrt(w0) / (2.0 * math.sqrt(2.0))
    return line_energy, bound, line_energy >= bound * (1.0 - slack)


def plateau_lower_bound_ok(
    u: VectorField2D,
    p: Potential,
    report: MeasureReport,
    w0: float,
) -> bool:
    """Check w0 * 2R <= column potential energy on every i_R-minus-j_R column.

    Those columns never dip into the r/4 ball, so the potential floor w0
    applies at each of their nodes and the trapezoid sum dominates w0 * 2R.
    """
    grid = u.grid
    j_set = set(int(j) for j in report.j_columns)
    plain = [int(i) for i in report.i_columns if int(i) not in j_set]
    if not plain:
        return True
    w_nodes = p.evaluate(u.values)
    wy = np.ones(grid.ny)
    wy[0] = wy[-1] = 0.5
    floor = w0 * 2.0 * grid.R
    for i in plain:
        col_integral = float(np.sum(wy * w_nodes[i]) * grid.hy)
        if col_integral < floor * (1.0 - 1e-9):
            return False
    return True


@dataclass
class ExperimentConfig:
    """Strip sweep configuration; defaults reproduce the desk-scale study."""

    R_values: tuple = (16.0, 32.0, 64.0)
    mu: float = 4.0
    r: float = 0.2
    h: float = 0.25
    potential: Potential = dc_field(default_factory=two_well)
    n_seeds: int = 3
    base_seed: int = 0
    noise_amp: float = 0.02
    pin_point: tuple = (0.0, 1.0)
    pin_gmin: float = 0.125
    pin_decay: float = 0.35
    eta_window: Optional[float] = None
    max_steps: int = 2500
    grad_tol: float = 1e-5
    curvature_bound: float = 120.0
    record_every: int = 50
    w0_box: tuple = ((-2.0, 3.0), (-2.0, 3.0))
    w0_grid_n: int = 400
    line_slack: float = 0.05

    def window(self) -> float:
        return self.mu if self.eta_window is None else self.eta_window


@dataclass
class ExperimentRow:
    """Per-R outcome of the sweep; ``passed`` aggregates every checked bound."""

    R: float
    mu: float
    J: float
    C: float
    w0: float
    eta0: Optional[float]
    abs_iR: float
    abs_jR: float
    xbar1: Optional[float]
    max_rho_tail_before: float
    max_rho_tail_after: float
    passed: bool
    good_column_found: bool
    iR_bound_ok: bool
    line_checks: list
    lower_bound_ok: bool
    tail_beyond_eta0_ok: bool
    surgery: Optional[ReplacementReport]
    measures: MeasureReport
    history: FlowHistory
    seed_energies: list
    best_seed: int
    min_u1: float

    def csv_row(self) -> str:
        xbar = "" if self.xbar1 is None else f"{self.xbar1:.17g}"
        eta = "" if self.eta0 is None else f"{self.eta0:.17g}"
        return (
            f"{self.R:.17g},{self.mu:.17g},{self.J:.17g},{self.C:.17g},"
            f"{self.w0:.17g},{eta},{self.abs_iR:.17g},{self.abs_jR:.17g},"
            f"{xbar},{self.max_rho_tail_before:.17g},{self.max_rho_tail_after:.17g},"
            f"{int(self.passed)}"
        )


REPORT_HEADER = (
    "R,mu,J,C_measured,w0,eta0,abs_iR,abs_jR,xbar1,"
    "max_rho_tail_before,max_rho_tail_after,pass"
)


def left_pin_profile(grid: Grid2, a: Array, pin_point, gmin: float) -> Array:
    """Dirichlet trace for the strip's left side: a + g(x2) (p - a).

    g is 1 at mid-height and decays to gmin at the corners, so columns near
    the left edge sweep radii across the whole [r/4, r/2] band.
    """
    x2 = grid.x2()
    g = gmin + (1.0 - gmin) * np.cos(np.pi * x2 / (2.0 * grid.R)) ** 2
    p_vec = np.asarray(pin_point, dtype=float)
    return np.asarray(a) + g[:, None] * (p_vec - np.asarray(a))


def _initial_field(grid: Grid2, a: Array, trace: Array, decay: float,
                   noise_amp: float, seed: int, m: int) -> VectorField2D:
    x1 = grid.x1()
    envelope = np.exp(-x1 / decay)
    dev = trace[None, :, :] - np.asarray(a)
    values = np.asarray(a) + envelope[:, None, None] * dev
    if noise_amp > 0:
        noise = seeded_smooth_noise(grid, m, seed, noise_amp)
        noise[0, :, :] = 0.0
        noise[-1, :, :] = 0.0
        values = values + noise
    return VectorField2D(grid, values)


def run_single_R(cfg: ExperimentConfig, R: float, w0: float) -> ExperimentRow:
    """Minimize on one strip, measure the columns, and run the tail surgery."""
    p = cfg.potential
    a = p.a
    grid = Grid2.strip(R, cfg.mu, cfg.h)
    trace = left_pin_profile(grid, a, cfg.pin_point, cfg.pin_gmin)
    bc = BoundarySpec(left="dirichlet", right="dirichlet",
                      dirichlet_values={"left": trace})
    flow_cfg = FlowConfig.auto(
        grid,
        max_steps=cfg.max_steps,
        grad_tol=cfg.grad_tol,
        curvature_bound=cfg.curvature_bound,
        record_every=cfg.record_every,
    )
    seeds = [cfg.base_seed + 1000 * k for k in range(cfg.n_seeds)]
    final, history, best_seed, seed_energies = best_of_seeds(
        lambda s: _initial_field(grid, a, trace, cfg.pin_decay, cfg.noise_amp, s, p.m),
        p,
        bc,
        flow_cfg,
        seeds,
    )

    J = history.records[-1][1]
    C = J / R
    measures = compute_measures(polar_decompose(final, a), grid, cfg.r, cfg.window())
    eta0 = None
    iR_bound_ok = False
    tail_beyond_eta0_ok = True
    R0 = None
    try:
        measures = measures.with_constants(C, w0)
        eta0 = measures.eta0
        R0 = measures.R0
    except ValueError:
        pass

    rho = np.linalg.norm(final.values - a, axis=-1)
    if eta0 is not None:
        # Factor-2 margin on the measured-constant comparison.
        iR_bound_ok = measures.abs_iR <= 2.0 * eta0 * R
        x1 = grid.x1()
        beyond = x1 >= eta0 * R
        if np.any(beyond):
            tail_beyond_eta0_ok = bool(np.max(rho[beyond]) <= cfg.r / 2.0 + POINTWISE_TOL)

    line_checks = []
    for i, interval in sorted(measures.intervals.items()):
        le, bound, ok = column_lower_bound_check(
            final, interval, p, w0, cfg.r, slack=cfg.line_slack
        )
        line_checks.append((int(i), le, bound, ok))
    lower_ok = plateau_lower_bound_ok(final, p, measures, w0)

    surgery = None
    after_field = final
    tail_before = float("nan")
    tail_after = float("nan")
    good = measures.xbar1_index is not None
    if good:
        idx = measures.xbar1_index
        tail_before = float(np.max(rho[idx:, :]))
        mask = column_tail_mask(grid, idx)
        params = CutoffParams(a, cfg.r / 2.0)
        after_field, surgery = replace(final, mask, p, params, bc, mode="alpha")
        rho_after = np.linalg.norm(after_field.values - a, axis=-1)
        tail_after = float(np.max(rho_after[idx:, :]))

    surgery_ok = (
        good
        and surgery is not None
        and tail_after <= cfg.r / 2.0 + POINTWISE_TOL
        and surgery.total_delta <= 1e-9 * max(1.0, J)
        and surgery.boundary_ok
    )
    passed = bool(
        good
        and surgery_ok
        and iR_bound_ok
        and lower_ok
        and tail_beyond_eta0_ok
        and all(ok for *_rest, ok in line_checks)
    )

    row = ExperimentRow(
        R=R,
        mu=cfg.mu,
        J=J,
        C=C,
        w0=w0,
        eta0=eta0,
        abs_iR=measures.abs_iR,
        abs_jR=measures.abs_jR,
        xbar1=measures.xbar1,
        max_rho_tail_before=tail_before,
        max_rho_tail_after=tail_after,
        passed=passed,
        good_column_found=good,
        iR_bound_ok=iR_bound_ok,
        line_checks=line_checks,
        lower_bound_ok=lower_ok,
        tail_beyond_eta0_ok=tail_beyond_eta0_ok,
        surgery=surgery,
        measures=measures,
        history=history,
        seed_energies=seed_energies,
        best_seed=best_seed,
        min_u1=history.min_u1,
    )
    row._final_field = final  # type: ignore[attr-defined]
    row._after_field = after_field  # type: ignore[attr-defined]
    return row


def compute_w0(cfg: ExperimentConfig) -> float:
    """Potential floor outside the r/4 ball, on the positivity half-plane."""
    return min_w_outside(
        cfg.potential,
        cfg.potential.a,
        cfg.r / 4.0,
        np.asarray(cfg.w0_box, dtype=float),
        constraint=HalfPlane(np.array([1.0, 0.0]), 0.0),
        grid_n=cfg.w0_grid_n,
    )


def write_profile_csv(row: ExperimentRow, grid: Grid2, line_energy: Array, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x1,max_rho,line_energy\n")
        for x1, mr, le in zip(grid.x1(), row.measures.column_max_rho, line_energy):
            fh.write(f"{x1:.17g},{mr:.17g},{le:.17g}\n")


def run_corollary_experiment(
    cfg: ExperimentConfig,
    out_dir: Optional[Path] = None,
) -> tuple[list[ExperimentRow], list[Path]]:
    """Sweep the configured R values; optionally write all artifacts.

    The potential floor w0 is computed before any flow so a degenerate
    potential fails fast.  A missing good column marks that row failed and
    the sweep continues with the remaining R values.
    """
    w0 = compute_w0(cfg)
    rows: list[ExperimentRow] = []
    written: list[Path] = []
    for R in cfg.R_values:
        row = run_single_R(cfg, float(R), w0)
        rows.append(row)
        if out_dir is not None:
            out_dir = Path(out_dir)
            tag = f"R{R:g}"
            grid = row._final_field.grid  # type: ignore[attr-defined]
            hist_path = out_dir / f"history_{tag}.csv"
            row.history.write_csv(hist_path)
            written.append(hist_path)
            eb = total_energy(row._final_field, cfg.potential, BoundarySpec.all_neumann())
            cols_path = out_dir / f"columns_{tag}.csv"
            write_profile_csv(row, grid, eb.line_energy, cols_path)
            written.append(cols_path)
            if row.surgery is not None:
                rep_path = out_dir / f"replacement_{tag}.csv"
                write_replacement_csv(row.surgery, rep_path)
                written.append(rep_path)
            pre_path = out_dir / f"field_{tag}_pre.txt"
            dump_field(row._final_field, pre_path)
            written.append(pre_path)
            post_path = out_dir / f"field_{tag}_post.txt"
            dump_field(row._after_field, post_path)
            written.append(post_path)
    if out_dir is not None:
        report_path = Path(out_dir) / "report.csv"
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(REPORT_HEADER + "\n")
            for row in rows:
                fh.write(row.csv_row() + "\n")
        written.append(report_path)
    return rows, written
