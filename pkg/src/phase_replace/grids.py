"""Rectangular node grids, vector fields, the radius/direction split, masks.

Fields live on nodes of a uniform rectangular grid.  All operations return
new buffers; nothing here mutates its inputs.  Text dump format for fields::

    nx ny hx hy m origin_x origin_y
    i j u_1 ... u_m          (one line per node, row-major: i outer, j inner)

Masks dump as ``i j flag`` lines with the same ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

Array = np.ndarray

RECTANGLE = "rectangle"
STRIP = "strip"

_SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Grid2:
    """Uniform node grid: ``nx * ny`` nodes, node (i, j) at origin + (i hx, j hy).

    A strip-tagged grid spans (0, mu R) x (-R, R) exactly; the constructor
    enforces the spans to 1e-12 relative.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple[float, float] = (0.0, 0.0)
    tag: str = RECTANGLE
    R: Optional[float] = None
    mu: Optional[float] = None

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("node counts must be at least 2")
        if self.hx <= 0 or self.hy <= 0:
            raise ValueError("grid spacings must be positive")
        if self.tag == STRIP:
            if self.R is None or self.mu is None:
                raise ValueError("strip grids need R and mu")
            span_x = (self.nx - 1) * self.hx
            span_y = (self.ny - 1) * self.hy
            if abs(span_x - self.mu * self.R) > 1e-12 * self.mu * self.R:
                raise ValueError(f"strip x-span {span_x} does not match mu*R = {self.mu * self.R}")
            if abs(span_y - 2.0 * self.R) > 1e-12 * 2.0 * self.R:
                raise ValueError(f"strip y-span {span_y} does not match 2R = {2 * self.R}")
            if abs(self.origin[0]) > 1e-12 or abs(self.origin[1] + self.R) > 1e-12 * self.R:
                raise ValueError("strip origin must be (0, -R)")
        elif self.tag != RECTANGLE:
            raise ValueError(f"unknown grid tag {self.tag!r}")

    @classmethod
    def strip(cls, R: float, mu: float, h: float) -> "Grid2":
        """Strip grid with spacing as close to ``h`` as exact spans allow."""
        nx = int(round(mu * R / h)) + 1
        ny = int(round(2.0 * R / h)) + 1
        return cls(
            nx=nx,
            ny=ny,
            hx=mu * R / (nx - 1),
            hy=2.0 * R / (ny - 1),
            origin=(0.0, -float(R)),
            tag=STRIP,
            R=float(R),
            mu=float(mu),
        )

    @classmethod
    def rectangle(cls, nx: int, ny: int, hx: float, hy: float, origin=(0.0, 0.0)) -> "Grid2":
        return cls(nx=nx, ny=ny, hx=hx, hy=hy, origin=tuple(origin))

    def x1(self) -> Array:
        return self.origin[0] + self.hx * np.arange(self.nx)

    def x2(self) -> Array:
        return self.origin[1] + self.hy * np.arange(self.ny)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy


@dataclass(frozen=True)
class VectorField2D:
    """m-component field sampled on grid nodes; values shape (nx, ny, m)."""

    grid: Grid2
    values: Array

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[:2] != (self.grid.nx, self.grid.ny) or v.ndim != 3:
            raise ValueError(f"values shape {v.shape} does not match grid "
                             f"({self.grid.nx}, {self.grid.ny}, m)")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[2]

    def copy(self) -> "VectorField2D":
        return VectorField2D(self.grid, self.values.copy())


def constant_field(grid: Grid2, value: Array) -> VectorField2D:
    v = np.asarray(value, dtype=float)
    return VectorField2D(grid, np.broadcast_to(v, (grid.nx, grid.ny, v.size)).copy())


def field_from_function(grid: Grid2, fn, m: int) -> VectorField2D:
    """Sample ``fn(x1, x2) -> (m,)`` on the node lattice (fn vectorized)."""
    X1, X2 = np.meshgrid(grid.x1(), grid.x2(), indexing="ij")
    vals = np.asarray(fn(X1, X2), dtype=float)
    if vals.shape != (grid.nx, grid.ny, m):
        raise ValueError(f"function returned shape {vals.shape}")
    return VectorField2D(grid, vals)


@dataclass(frozen=True)
class PolarDecomposition:
    """Radius/direction split u = a + rho * unit, unit defined where rho >= rho_tol.

    ``unit`` holds NaN where undefined; ``defined`` is the validity mask.
    """

    a: Array
    rho: Array
    unit: Array
    defined: Array
    rho_tol: float


def polar_decompose(u: VectorField2D, a: Array, rho_tol: float = 1e-12) -> PolarDecomposition:
    """Split the field into radius and unit direction about the well a."""
    if rho_tol <= 0:
        raise ValueError("rho_tol must be positive")
    a_arr = np.asarray(a, dtype=float)
    dev = u.values - a_arr
    rho = np.linalg.norm(dev, axis=-1)
    defined = rho >= rho_tol
    unit = np.full_like(dev, np.nan)
    np.divide(dev, rho[..., None], out=unit, where=defined[..., None])
    return PolarDecomposition(a_arr, rho, unit, defined, rho_tol)


@dataclass(frozen=True)
class RegionMask:
    """Node indicator of an open surgery set plus its relative boundary.

    The relative boundary is the list of nodes outside the set that are
    4-adjacent to a node inside it.  Those are exactly the nodes whose values
    the surgery reads but never modifies, so the energy-decrease certificate
    checks its trace hypothesis there.
    """

    grid: Grid2
    inside: Array

    def __post_init__(self):
        ins = np.asarray(self.inside, dtype=bool)
        if ins.shape != (self.grid.nx, self.grid.ny):
            raise ValueError("mask shape does not match grid")
        object.__setattr__(self, "inside", ins)

    def count(self) -> int:
        return int(np.count_nonzero(self.inside))

    def area(self) -> float:
        """Measure with each node carrying one cell of area hx*hy."""
        return self.count() * self.grid.cell_area

    def boundary_nodes(self) -> Array:
        """(k, 2) indices of outside nodes 4-adjacent to the set."""
        ins = self.inside
        near = np.zeros_like(ins)
        near[1:, :] |= ins[:-1, :]
        near[:-1, :] |= ins[1:, :]
        near[:, 1:] |= ins[:, :-1]
        near[:, :-1] |= ins[:, 1:]
        return np.argwhere(near & ~ins)

    def complement(self) -> "RegionMask":
        return RegionMask(self.grid, ~self.inside)


def box_mask(grid: Grid2, i0: int, i1: int, j0: int, j1: int) -> RegionMask:
    """Nodes with i0 <= i < i1 and j0 <= j < j1."""
    ins = np.zeros((grid.nx, grid.ny), dtype=bool)
    ins[i0:i1, j0:j1] = True
    return RegionMask(grid, ins)


def column_tail_mask(grid: Grid2, i_min: int) -> RegionMask:
    """All columns with index strictly greater than ``i_min``."""
    ins = np.zeros((grid.nx, grid.ny), dtype=bool)
    ins[i_min + 1:, :] = True
    return RegionMask(grid, ins)


def full_mask(grid: Grid2) -> RegionMask:
    return RegionMask(grid, np.ones((grid.nx, grid.ny), dtype=bool))


def sublevel_mask(
    pd: PolarDecomposition,
    region: RegionMask,
    threshold: float,
    strict_above: bool,
) -> RegionMask:
    """Nodes of ``region`` with rho > threshold (strict_above) or rho <= threshold."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    if strict_above:
        ins = region.inside & (pd.rho > threshold)
    else:
        ins = region.inside & (pd.rho <= threshold)
    return RegionMask(region.grid, ins)


@dataclass(frozen=True)
class BoundarySpec:
    """Per-side boundary condition for the four rectangle sides.

    Neumann sides extend by a zero normal difference (ghost copies the
    boundary node); Dirichlet sides pin their boundary nodes, to the well
    point by default or to a per-side trace in ``dirichlet_values`` (arrays
    of shape (n_side, m), keyed by side name).
    """

    left: str = "neumann"
    right: str = "neumann"
    bottom: str = "neumann"
    top: str = "neumann"
    dirichlet_values: Optional[dict] = None

    def __post_init__(self):
        for side in _SIDES:
            cond = getattr(self, side)
            if cond not in ("neumann", "dirichlet"):
                raise ValueError(f"side {side}: unknown condition {cond!r}")

    @classmethod
    def all_neumann(cls) -> "BoundarySpec":
        return cls()

    @classmethod
    def strip_default(cls) -> "BoundarySpec":
        """Dirichlet on the far side x1 = mu R, Neumann on the other three."""
        return cls(right="dirichlet")

    def is_dirichlet(self, side: str) -> bool:
        return getattr(self, side) == "dirichlet"

    def side_value(self, side: str, a: Array, n_side: int, m: int) -> Array:
        if self.dirichlet_values is not None and side in self.dirichlet_values:
            vals = np.asarray(self.dirichlet_values[side], dtype=float)
            if vals.shape != (n_side, m):
                raise ValueError(f"dirichlet trace for {side} has shape {vals.shape}, "
                                 f"expected ({n_side}, {m})")
            return vals
        return np.broadcast_to(np.asarray(a, dtype=float), (n_side, m))


def pin_values_inplace(values: Array, bc: BoundarySpec, a: Array) -> None:
    """Overwrite Dirichlet-side boundary nodes of a raw value array."""
    nx, ny, m = values.shape
    if bc.is_dirichlet("left"):
        values[0, :, :] = bc.side_value("left", a, ny, m)
    if bc.is_dirichlet("right"):
        values[-1, :, :] = bc.side_value("right", a, ny, m)
    if bc.is_dirichlet("bottom"):
        values[:, 0, :] = bc.side_value("bottom", a, nx, m)
    if bc.is_dirichlet("top"):
        values[:, -1, :] = bc.side_value("top", a, nx, m)


def pin_dirichlet(u: VectorField2D, bc: BoundarySpec, a: Array) -> VectorField2D:
    """Copy of the field with Dirichlet-side boundary nodes pinned."""
    v = u.values.copy()
    pin_values_inplace(v, bc, a)
    return VectorField2D(u.grid, v)


def apply_boundary(u: VectorField2D, bc: BoundarySpec, a: Array) -> Array:
    """Ghost-extended value array of shape (nx+2, ny+2, m) for stencils.

    Dirichlet nodes are pinned first; every ghost ring entry copies its
    adjacent boundary node, so one-sided differences across any side vanish
    (the zero-normal-difference extension).
    """
    pinned = pin_dirichlet(u, bc, a).values
    nx, ny, m = pinned.shape
    ext = np.empty((nx + 2, ny + 2, m), dtype=float)
    ext[1:-1, 1:-1] = pinned
    ext[0, 1:-1] = pinned[0]
    ext[-1, 1:-1] = pinned[-1]
    ext[1:-1, 0] = pinned[:, 0]
    ext[1:-1, -1] = pinned[:, -1]
    ext[0, 0] = pinned[0, 0]
    ext[0, -1] = pinned[0, -1]
    ext[-1, 0] = pinned[-1, 0]
    ext[-1, -1] = pinned[-1, -1]
    return ext


def dump_field(u: VectorField2D, path) -> None:
    g = u.grid
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"{g.nx} {g.ny} {g.hx:.17g} {g.hy:.17g} {u.m} "
            f"{g.origin[0]:.17g} {g.origin[1]:.17g}\n"
        )
        for i in range(g.nx):
            for j in range(g.ny):
                comps = " ".join(f"{c:.17g}" for c in u.values[i, j])
                fh.write(f"{i} {j} {comps}\n")


def load_field(path) -> VectorField2D:
    """Inverse of :func:`dump_field`; the strip tag is not retained."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        nx, ny = int(header[0]), int(header[1])
        hx, hy = float(header[2]), float(header[3])
        m = int(header[4])
        origin = (float(header[5]), float(header[6]))
        values = np.empty((nx, ny, m))
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            i, j = int(parts[0]), int(parts[1])
            values[i, j] = [float(c) for c in parts[2 : 2 + m]]
    grid = Grid2.rectangle(nx, ny, hx, hy, origin)
    return VectorField2D(grid, values)


def dump_mask(mask: RegionMask, path) -> None:
    g = mask.grid
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(g.nx):
            for j in range(g.ny):
                fh.write(f"{i} {j} {int(mask.inside[i, j])}\n")
