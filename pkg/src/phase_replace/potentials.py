"""Catalog of nonnegative vector potentials with analytic gradients.

Every potential tracks one distinguished global minimum ``a`` and a radius
``r0`` inside which radial strict monotonicity is expected to hold.  The
monotonicity itself is never assumed: :func:`check_hypothesis_H` verifies it
falsifiably by dense sampling, and :func:`min_w_outside` measures the
potential-energy price of straying from the well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize

Array = np.ndarray


class EvaluationError(ValueError):
    """A potential produced a non-finite value; the message names the point."""


class DegenerateW0Error(ValueError):
    """The exterior minimum w0 is not strictly positive."""


@dataclass(frozen=True)
class HalfPlane:
    """Closed half-plane ``{u : normal . u >= offset}`` in value space."""

    normal: Array
    offset: float = 0.0

    def contains(self, u: Array) -> Array:
        return np.asarray(u) @ np.asarray(self.normal, dtype=float) >= self.offset


@dataclass(frozen=True)
class Potential:
    """Nonnegative potential on R^m with one tracked global minimum.

    ``evaluate`` and ``gradient`` are vectorized over arrays of shape
    ``(..., m)`` and return shapes ``(...)`` and ``(..., m)``.  ``gradient``
    must be the analytic gradient of ``evaluate``; finite differences are a
    test oracle only.  ``curvature_hint`` is a Hessian-norm bound on the
    range the catalog entry is meant for (used as a default explicit-flow
    curvature bound, never verified here).
    """

    name: str
    m: int
    a: Array
    r0: float
    evaluate_fn: Callable[[Array], Array]
    gradient_fn: Callable[[Array], Array]
    curvature_hint: float = 40.0

    def evaluate(self, u: Array) -> Array:
        return self.evaluate_fn(np.asarray(u, dtype=float))

    def gradient(self, u: Array) -> Array:
        return self.gradient_fn(np.asarray(u, dtype=float))


def two_well() -> Potential:
    """Planar two-well ``W(u) = |u - (1,0)|^2 |u - (-1,0)|^2``.

    Tracked well a = (1, 0) with r0 = 0.9; the second zero sits at (-1, 0),
    outside the right half-plane.
    """
    a_plus = np.array([1.0, 0.0])
    a_minus = np.array([-1.0, 0.0])

    def ev(u: Array) -> Array:
        dp = u - a_plus
        dm = u - a_minus
        return np.sum(dp * dp, axis=-1) * np.sum(dm * dm, axis=-1)

    def gr(u: Array) -> Array:
        dp = u - a_plus
        dm = u - a_minus
        fp = np.sum(dp * dp, axis=-1)[..., None]
        fm = np.sum(dm * dm, axis=-1)[..., None]
        return 2.0 * fm * dp + 2.0 * fp * dm

    return Potential("two_well", 2, a_plus, 0.9, ev, gr, curvature_hint=40.0)


def radial_quadratic(a: Array | None = None, r0: float = 1.0) -> Potential:
    """``W(u) = |u - a|^2``; radially strictly increasing at every scale."""
    a_arr = np.array([0.0, 0.0]) if a is None else np.asarray(a, dtype=float)

    def ev(u: Array) -> Array:
        d = u - a_arr
        return np.sum(d * d, axis=-1)

    def gr(u: Array) -> Array:
        return 2.0 * (u - a_arr)

    return Potential("radial_quadratic", a_arr.size, a_arr, r0, ev, gr, curvature_hint=2.0)


def radial_oscillation(a: Array | None = None) -> Potential:
    """``W(u) = sin^2(4|u-a|) + |u-a|^2/100``: violates (H) past the first sine crest."""
    a_arr = np.array([0.0, 0.0]) if a is None else np.asarray(a, dtype=float)

    def ev(u: Array) -> Array:
        rho = np.linalg.norm(u - a_arr, axis=-1)
        return np.sin(4.0 * rho) ** 2 + rho**2 / 100.0

    def gr(u: Array) -> Array:
        d = u - a_arr
        rho = np.linalg.norm(d, axis=-1)
        # dW/drho = 4 sin(8 rho) + rho / 50; direction d/rho, zero at the center
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rho[..., None] > 0, d / np.where(rho == 0.0, 1.0, rho)[..., None], 0.0)
        drho = 4.0 * np.sin(8.0 * rho) + rho / 50.0
        return drho[..., None] * unit

    return Potential("radial_oscillation", a_arr.size, a_arr, 1.0, ev, gr, curvature_hint=70.0)


def zero_potential(m: int = 2) -> Potential:
    """``W = 0``: pure Dirichlet-energy runs and degenerate-w0 guard tests."""
    a_arr = np.zeros(m)

    def ev(u: Array) -> Array:
        return np.zeros(u.shape[:-1])

    def gr(u: Array) -> Array:
        return np.zeros_like(u)

    return Potential("zero", m, a_arr, 1.0, ev, gr, curvature_hint=0.0)


def scalar_double_well() -> Potential:
    """Scalar ``W(u) = (1 - u^2)^2 / 4`` with wells at u = +-1 (m = 1)."""
    a_arr = np.array([1.0])

    def ev(u: Array) -> Array:
        return 0.25 * (1.0 - u[..., 0] ** 2) ** 2

    def gr(u: Array) -> Array:
        return (-u[..., 0] * (1.0 - u[..., 0] ** 2))[..., None]

    return Potential("scalar_double_well", 1, a_arr, 1.0, ev, gr, curvature_hint=4.0)


CATALOG: dict[str, Callable[[], Potential]] = {
    "two_well": two_well,
    "radial_quadratic": radial_quadratic,
    "radial_oscillation": radial_oscillation,
    "zero": zero_potential,
    "scalar_double_well": scalar_double_well,
}


def by_name(name: str) -> Potential:
    try:
        return CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown potential {name!r}; known: {sorted(CATALOG)}") from None


@dataclass(frozen=True)
class HReport:
    """Result of the sampled radial-monotonicity check around the well.

    ``margin`` is the smallest consecutive increment of W along any sampled
    ray; the check passes iff it is strictly positive.  On failure,
    ``violation`` holds the offending unit direction and the left endpoint of
    the non-increasing radius pair.
    """

    passed: bool
    n_directions: int
    n_radii: int
    margin: float
    violation: Optional[tuple[Array, float]] = None

    def csv_row(self) -> str:
        if self.violation is None:
            vdir, vlam = "", ""
        else:
            vdir = "(" + " ".join(f"{c:.17g}" for c in self.violation[0]) + ")"
            vlam = f"{self.violation[1]:.17g}"
        return (
            f"{int(self.passed)},{self.n_directions},{self.n_radii},"
            f"{self.margin:.17g},{vdir},{vlam}"
        )


def _unit_directions(m: int, n_dirs: int) -> Array:
    if m == 2:
        angles = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    # Higher m: deterministic pseudo-random directions.
    rng = np.random.default_rng(0)
    w = rng.standard_normal((n_dirs, m))
    return w / np.linalg.norm(w, axis=-1, keepdims=True)


def check_hypothesis_H(
    p: Potential,
    a: Array,
    r0: float,
    n_dirs: int = 64,
    n_lambda: int = 256,
) -> HReport:
    """Sample whether W(a + lambda w) strictly increases in lambda on [0, r0).

    Uses ``n_dirs`` unit directions and the nested radius grid
    ``lambda_k = r0 k / n_lambda`` (k < n_lambda, so r0 itself is excluded).
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    if n_dirs < 8:
        raise ValueError("n_dirs must be at least 8")
    if n_lambda < 16:
        raise ValueError("n_lambda must be at least 16")
    a_arr = np.asarray(a, dtype=float)
    dirs = _unit_directions(a_arr.size, n_dirs)
    lam = r0 * np.arange(n_lambda) / n_lambda
    points = a_arr + lam[None, :, None] * dirs[:, None, :]
    values = p.evaluate(points)
    if not np.all(np.isfinite(values)):
        i, k = np.argwhere(~np.isfinite(values))[0]
        raise EvaluationError(
            f"potential {p.name!r} is non-finite at {points[i, k].tolist()}"
        )
    diffs = values[:, 1:] - values[:, :-1]
    flat = int(np.argmin(diffs))
    i, k = divmod(flat, n_lambda - 1)
    margin = float(diffs[i, k])
    passed = margin > 0.0
    violation = None if passed else (dirs[i].copy(), float(lam[k]))
    return HReport(passed, n_dirs, n_lambda, margin, violation)


def min_w_outside(
    p: Potential,
    a: Array,
    exclusion_radius: float,
    box: Array,
    constraint: Optional[HalfPlane] = None,
    grid_n: int = 400,
) -> float:
    """Minimum of W over ``box & constraint & {|u - a| > exclusion_radius}``.

    Grid search at ``grid_n`` samples per axis, then constrained local
    refinement (SLSQP) from the best sample.  A result below 1e-9 is treated
    as a second zero of W inside the feasible set and raises
    :class:`DegenerateW0Error`.
    """
    if exclusion_radius <= 0:
        raise ValueError("exclusion_radius must be positive")
    a_arr = np.asarray(a, dtype=float)
    box_arr = np.asarray(box, dtype=float).reshape(a_arr.size, 2)
    if np.any(a_arr - exclusion_radius < box_arr[:, 0]) or np.any(
        a_arr + exclusion_radius > box_arr[:, 1]
    ):
        raise ValueError("box must contain the exclusion ball about a")

    axes = [np.linspace(lo, hi, grid_n) for lo, hi in box_arr]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, a_arr.size)
    feasible = np.linalg.norm(pts - a_arr, axis=-1) > exclusion_radius
    if constraint is not None:
        feasible &= constraint.contains(pts)
    if not np.any(feasible):
        raise ValueError("feasible set is empty on the sampling grid")
    vals = p.evaluate(pts[feasible])
    best_idx = int(np.argmin(vals))
    best = float(vals[best_idx])
    x0 = pts[feasible][best_idx]

    cons = [
        {
            "type": "ineq",
            "fun": lambda u: float(np.sum((u - a_arr) ** 2) - exclusion_radius**2),
            "jac": lambda u: 2.0 * (u - a_arr),
        }
    ]
    if constraint is not None:
        n_vec = np.asarray(constraint.normal, dtype=float)
        cons.append(
            {
                "type": "ineq",
                "fun": lambda u: float(u @ n_vec - constraint.offset),
                "jac": lambda u: n_vec,
            }
        )
    res = optimize.minimize(
        lambda u: float(p.evaluate(u)),
        x0,
        jac=lambda u: p.gradient(u),
        bounds=[(lo, hi) for lo, hi in box_arr],
        constraints=cons,
        method="SLSQP",
        options={"ftol": 1e-16, "maxiter": 500},
    )
    # The refined point counts if it stayed feasible (to tolerance) and improved;
    # SLSQP's success flag is unreliable at benign linesearch terminations.
    w0 = best
    u_ref = np.asarray(res.x)
    ok = np.sum((u_ref - a_arr) ** 2) >= exclusion_radius**2 * (1.0 - 1e-9)
    if constraint is not None:
        ok = ok and bool(u_ref @ np.asarray(constraint.normal) >= constraint.offset - 1e-12)
    if ok and np.isfinite(res.fun):
        w0 = min(w0, float(res.fun))
    if w0 <= 1e-9:
        raise DegenerateW0Error(
            f"exterior minimum of {p.name!r} is degenerate (w0 = {w0:.3e} <= 1e-9); "
            "the feasible set appears to contain another zero of W"
        )
    return w0
