"""Discrete energy functional, its exact gradient, and the stationarity residual.

Quadrature: each cell contributes ``1/2 |D u|^2 + mean(W at the 4 corners)``
times the cell area, where ``|D u|^2`` averages the squared forward
differences along the cell's two opposite edge pairs.  Both terms are chosen
so that a 1-Lipschitz pointwise map applied on a node set bounds the discrete
energy cell-by-cell (every edge difference is dominated individually), which
is what certifies the surgery's energy decrease.  Equivalently the kinetic
term is the trapezoid-weighted sum over grid links, so the gradient at
interior nodes is exactly the 5-point Laplacian plus the potential force.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grids import (
    BoundarySpec,
    Grid2,
    RegionMask,
    VectorField2D,
    apply_boundary,
    pin_dirichlet,
)
from .potentials import EvaluationError, Potential

Array = np.ndarray


@dataclass(frozen=True)
class EnergyBreakdown:
    """Kinetic/potential split with per-cell densities and column line energies.

    ``line_energy[i]`` integrates the node-share density over column i in x2,
    so that ``sum(line_energy) * hx`` reproduces the total.
    """

    kinetic: float
    potential: float
    cell_density: Array
    line_energy: Array

    @property
    def total(self) -> float:
        return self.kinetic + self.potential

    def csv_row(self) -> str:
        return f"{self.total:.17g},{self.kinetic:.17g},{self.potential:.17g}"


def _trapezoid_weights(n: int) -> Array:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def _cell_terms(values: Array, grid: Grid2, p: Potential):
    hx, hy = grid.hx, grid.hy
    dx = (values[1:, :] - values[:-1, :]) / hx
    dy = (values[:, 1:] - values[:, :-1]) / hy
    dx2 = np.sum(dx * dx, axis=-1)
    dy2 = np.sum(dy * dy, axis=-1)
    kin_cell = 0.5 * (
        0.5 * (dx2[:, :-1] + dx2[:, 1:]) + 0.5 * (dy2[:-1, :] + dy2[1:, :])
    )
    w_nodes = p.evaluate(values)
    pot_cell = 0.25 * (
        w_nodes[:-1, :-1] + w_nodes[1:, :-1] + w_nodes[:-1, 1:] + w_nodes[1:, 1:]
    )
    return kin_cell, pot_cell, w_nodes


def _node_shares(kin_cell: Array, pot_cell_unused: Array, w_nodes: Array, grid: Grid2):
    nx, ny = grid.nx, grid.ny
    kin_node = np.zeros((nx, ny))
    quarter = 0.25 * kin_cell
    kin_node[:-1, :-1] += quarter
    kin_node[1:, :-1] += quarter
    kin_node[:-1, 1:] += quarter
    kin_node[1:, 1:] += quarter
    omega = np.outer(_trapezoid_weights(nx), _trapezoid_weights(ny))
    pot_node = omega * w_nodes
    return kin_node, pot_node


def total_energy(
    u: VectorField2D,
    p: Potential,
    bc: BoundarySpec,
    region: Optional[RegionMask] = None,
) -> EnergyBreakdown:
    """Discrete J over the grid, or over a node region's energy shares.

    Dirichlet sides are pinned before evaluation, so boundary cells see the
    pinned values.  With a region, each node carries its trapezoid share of
    the potential and a quarter of each incident cell's kinetic term.
    """
    if u.m != p.m:
        raise ValueError(f"field has m = {u.m} but potential expects m = {p.m}")
    grid = u.grid
    values = pin_dirichlet(u, bc, p.a).values
    kin_cell, pot_cell, w_nodes = _cell_terms(values, grid, p)
    density = kin_cell + pot_cell
    if not np.all(np.isfinite(density)):
        i, j = np.argwhere(~np.isfinite(density))[0]
        raise EvaluationError(f"non-finite energy contribution in cell ({i}, {j})")
    kin_node, pot_node = _node_shares(kin_cell, pot_cell, w_nodes, grid)
    area = grid.cell_area
    line_energy = (kin_node + pot_node).sum(axis=1) * grid.hy
    if region is None:
        kinetic = float(np.sum(kin_cell) * area)
        potential = float(np.sum(pot_cell) * area)
    else:
        if region.grid is not grid and (region.grid.nx, region.grid.ny) != (grid.nx, grid.ny):
            raise ValueError("region mask does not match the field's grid")
        ins = region.inside
        kinetic = float(np.sum(kin_node[ins]) * area)
        potential = float(np.sum(pot_node[ins]) * area)
    return EnergyBreakdown(kinetic, potential, density, line_energy)


@dataclass(frozen=True)
class ResidualField:
    """Discrete stationarity defect (5-point Laplacian minus W-gradient).

    Dirichlet-pinned nodes are constrained, so their rows are zeroed and the
    ``max_norm`` summary is taken over interior nodes, where the defect
    equals minus the discrete energy gradient exactly.
    """

    values: Array
    max_norm: float


def euler_lagrange_residual(u: VectorField2D, p: Potential, bc: BoundarySpec) -> ResidualField:
    grid = u.grid
    if grid.nx < 3 or grid.ny < 3:
        raise ValueError("residual needs a grid of at least 3x3 nodes")
    ext = apply_boundary(u, bc, p.a)
    inner = ext[1:-1, 1:-1]
    lap = (ext[2:, 1:-1] - 2.0 * inner + ext[:-2, 1:-1]) / grid.hx**2 + (
        ext[1:-1, 2:] - 2.0 * inner + ext[1:-1, :-2]
    ) / grid.hy**2
    res = lap - p.gradient(inner)
    if bc.is_dirichlet("left"):
        res[0, :, :] = 0.0
    if bc.is_dirichlet("right"):
        res[-1, :, :] = 0.0
    if bc.is_dirichlet("bottom"):
        res[:, 0, :] = 0.0
    if bc.is_dirichlet("top"):
        res[:, -1, :] = 0.0
    max_norm = float(np.max(np.abs(res[1:-1, 1:-1]))) if grid.nx > 2 and grid.ny > 2 else 0.0
    return ResidualField(res, max_norm)


def energy_gradient(u: VectorField2D, p: Potential, bc: BoundarySpec) -> VectorField2D:
    """Exact gradient density g of the discrete J: J'(u)[v] = <g, v> hx hy.

    Entries at Dirichlet-pinned nodes are zero (they are not free variables).
    At interior nodes g equals minus the stationarity residual exactly.
    """
    values = pin_dirichlet(u, bc, p.a).values
    g = _gradient_array(values, u.grid, p, bc)
    return VectorField2D(u.grid, g)


def _gradient_array(values: Array, grid: Grid2, p: Potential, bc: BoundarySpec) -> Array:
    nx, ny = grid.nx, grid.ny
    hx, hy = grid.hx, grid.hy
    wx = _trapezoid_weights(nx)
    wy = _trapezoid_weights(ny)
    g = np.empty_like(values)
    omega = np.outer(wx, wy)
    np.multiply(omega[:, :, None], p.gradient(values), out=g)
    # x-links carry the row's trapezoid weight, y-links the column's.
    dxl = (values[1:, :] - values[:-1, :]) * (wy[None, :, None] / hx**2)
    g[:-1, :] -= dxl
    g[1:, :] += dxl
    dyl = (values[:, 1:] - values[:, :-1]) * (wx[:, None, None] / hy**2)
    g[:, :-1] -= dyl
    g[:, 1:] += dyl
    if bc.is_dirichlet("left"):
        g[0, :, :] = 0.0
    if bc.is_dirichlet("right"):
        g[-1, :, :] = 0.0
    if bc.is_dirichlet("bottom"):
        g[:, 0, :] = 0.0
    if bc.is_dirichlet("top"):
        g[:, -1, :] = 0.0
    return g


def write_energy_csv(eb: EnergyBreakdown, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("total,kinetic,potential\n")
        fh.write(eb.csv_row() + "\n")


def write_line_energy_csv(eb: EnergyBreakdown, grid: Grid2, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x1,line_energy\n")
        for x1, le in zip(grid.x1(), eb.line_energy):
            fh.write(f"{x1:.17g},{le:.17g}\n")
