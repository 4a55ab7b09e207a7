"""Discrete radial H^1_0 on the ball B(0, R) in R^d.

Radial profiles are piecewise linear on a 1-D mesh of [0, R] with the
volume weight r^{d-1}.  The gradient (stiffness) integrals are computed
exactly per element; the |u|^q integrals use fixed-order Gauss-Legendre
panels on each element, which is exact for the integer exponents that
occur at d = 4 and accurate far below the advertised tolerances otherwise.

Grids and fields are immutable; every operation here is read-only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .constants import critical_exponent, unit_ball_volume, _as_integer_dimension

_GAUSS_POINTS = 8  # per-element Gauss-Legendre panel size
_MIN_ELEMENTS = 8  # fewest elements a grid may have


def _merge_nodes(base: np.ndarray, extra, radius: float) -> np.ndarray:
    """Insert extra node positions, deduplicating within 1e-12 * R."""
    nodes = np.asarray(base, dtype=float)
    tol = 1e-12 * radius
    for x in sorted(float(v) for v in extra):
        if not 0.0 < x <= radius + tol:
            raise ValueError(f"extra node {x} outside (0, R={radius}]")
        if np.min(np.abs(nodes - x)) > tol:
            nodes = np.sort(np.append(nodes, x))
    nodes[-1] = radius
    return nodes


@dataclass(frozen=True)
class RadialGrid:
    """Mesh 0 = r_0 < ... < r_N = R with weight r^{d-1}."""

    d: int
    radius: float
    nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", _as_integer_dimension(self.d))
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < _MIN_ELEMENTS + 1:
            raise ValueError(f"grid needs at least {_MIN_ELEMENTS} elements")
        if nodes[0] != 0.0:
            raise ValueError("first node must be r = 0")
        if not np.all(np.diff(nodes) > 0.0):
            raise ValueError("nodes must be strictly increasing")
        if abs(nodes[-1] - self.radius) > 1e-12 * self.radius or self.radius <= 0.0:
            raise ValueError("last node must equal the (positive) ball radius")
        nodes = nodes.copy()
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @cached_property
    def elem_h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @cached_property
    def surface_area(self) -> float:
        """Area of the unit (d-1)-sphere: d * omega_d."""
        return self.d * unit_ball_volume(self.d)

    @cached_property
    def stiffness_coeff(self) -> np.ndarray:
        """Per-element k_e with ||u||^2 = sum_e k_e (u_{e+1} - u_e)^2.

        Exact: integral of r^{d-1} against the constant slope squared is
        omega_d (r_{e+1}^d - r_e^d) / h_e^2.
        """
        r = self.nodes
        return unit_ball_volume(self.d) * np.diff(r**self.d) / self.elem_h**2

    @cached_property
    def _gauss(self) -> tuple[np.ndarray, np.ndarray]:
        return np.polynomial.legendre.leggauss(_GAUSS_POINTS)

    @cached_property
    def quad_points(self) -> np.ndarray:
        """(E, Q) physical quadrature coordinates."""
        s, _ = self._gauss
        mid = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        half = 0.5 * self.elem_h
        return mid[:, None] + half[:, None] * s[None, :]

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """(E, Q) weights with the full measure sigma_{d-1} r^{d-1} folded in."""
        _, w = self._gauss
        half = 0.5 * self.elem_h
        return self.surface_area * half[:, None] * w[None, :] * self.quad_points ** (self.d - 1)

    @cached_property
    def basis_at_quad(self) -> tuple[np.ndarray, np.ndarray]:
        """Reference hat-function values (left, right) at the panel points."""
        s, _ = self._gauss
        return (1.0 - s) / 2.0, (1.0 + s) / 2.0

    @cached_property
    def _interior_banded(self) -> np.ndarray:
        """Upper-banded interior stiffness (Dirichlet node eliminated)."""
        k = self.stiffness_coeff
        n = self.n_elements  # free nodes 0 .. n-1
        diag = np.empty(n)
        diag[0] = k[0]
        diag[1:] = k[: n - 1] + k[1:n]
        upper = np.zeros(n)
        upper[1:] = -k[: n - 1]
        return np.vstack([upper, diag])

    @cached_property
    def _interior_cholesky(self) -> np.ndarray:
        return cholesky_banded(self._interior_banded, lower=False)

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the interior stiffness system A x = rhs (free nodes only).

        Uses the cached banded Cholesky factor in double precision; for
        extended-precision right-hand sides a Thomas elimination runs in the
        rhs dtype instead (LAPACK has no long-double kernels).
        """
        rhs = np.asarray(rhs)
        if rhs.dtype == np.float64:
            return cho_solve_banded((self._interior_cholesky, False), rhs)
        k = self.stiffness_coeff.astype(rhs.dtype)
        n = self.n_elements
        diag = np.empty(n, dtype=rhs.dtype)
        diag[0] = k[0]
        diag[1:] = k[: n - 1] + k[1:n]
        lower = -k[: n - 1]
        # Thomas elimination (symmetric positive definite tridiagonal)
        c = np.empty(n - 1, dtype=rhs.dtype)
        x = np.empty(n, dtype=rhs.dtype)
        denom = diag[0]
        c[0] = lower[0] / denom
        x[0] = rhs[0] / denom
        for i in range(1, n - 1):
            denom = diag[i] - lower[i - 1] * c[i - 1]
            c[i] = lower[i] / denom
            x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / denom
        denom = diag[n - 1] - lower[n - 2] * c[n - 2]
        x[n - 1] = (rhs[n - 1] - lower[n - 2] * x[n - 2]) / denom
        for i in range(n - 2, -1, -1):
            x[i] -= c[i] * x[i + 1]
        return x

    def values_at_quad(self, values: np.ndarray) -> np.ndarray:
        """(E, Q) interpolated values of a nodal vector at the panel points."""
        bL, bR = self.basis_at_quad
        return values[:-1, None] * bL[None, :] + values[1:, None] * bR[None, :]

    def assemble_load(self, f_at_quad: np.ndarray) -> np.ndarray:
        """Free-node load vector of integrand values given at the panel points.

        Returns L_i = integral of f * phi_i over the ball (boundary hat
        excluded).
        """
        bL, bR = self.basis_at_quad
        wf = self.quad_weights * f_at_quad
        left = wf @ bL
        right = wf @ bR
        load = np.zeros(self.n_nodes, dtype=wf.dtype)
        load[:-1] += left
        load[1:] += right
        return load[:-1]

    def integrate(self, f_at_quad: np.ndarray):
        """Integral over the ball of values given at the panel points."""
        return np.sum(self.quad_weights * f_at_quad)


def make_grid(d, radius: float, n: int, spacing: str = "uniform",
              ratio: float = 1.05, include=()) -> RadialGrid:
    """Build a radial grid with n elements.

    spacing "uniform" gives equispaced nodes; "graded" makes element sizes
    grow geometrically from the center by the given ratio, clustering
    resolution at r = 0 where critical-exponent near-minimizers concentrate.
    Positions listed in include are inserted as extra nodes (useful to place
    kinks of piecewise-linear profiles exactly on the mesh).
    """
    d = _as_integer_dimension(d)
    radius = float(radius)
    if radius <= 0.0:
        raise ValueError(f"ball radius must be positive (got {radius})")
    n = int(n)
    if n < _MIN_ELEMENTS:
        raise ValueError(f"need at least {_MIN_ELEMENTS} elements (got {n})")
    if spacing == "uniform":
        nodes = np.linspace(0.0, radius, n + 1)
    elif spacing == "graded":
        if ratio <= 1.0:
            raise ValueError(f"graded spacing needs ratio > 1 (got {ratio})")
        powers = np.power(ratio, np.arange(n + 1, dtype=float))
        nodes = radius * (powers - 1.0) / (powers[-1] - 1.0)
        nodes[0], nodes[-1] = 0.0, radius
    else:
        raise ValueError(f"unknown spacing {spacing!r}; expected 'uniform' or 'graded'")
    if include:
        nodes = _merge_nodes(nodes, include, radius)
    return RadialGrid(d=d, radius=radius, nodes=nodes)


@dataclass(frozen=True)
class RadialField:
    """Nodal values of a radial profile on a grid.

    dirichlet=True (the default, for H^1_0 states) enforces u(R) = 0; data
    fields such as a Poisson right-hand side are built with dirichlet=False.
    """

    grid: RadialGrid
    values: np.ndarray
    dirichlet: bool = True

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype not in (np.dtype(np.float64), np.dtype(np.longdouble)):
            values = values.astype(np.float64)
        if values.shape != self.grid.nodes.shape:
            raise ValueError(
                f"field has {values.shape} values for {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if self.dirichlet:
            scale = max(1.0, float(np.max(np.abs(values))))
            if abs(float(values[-1])) > 1e-12 * scale:
                raise ValueError(
                    f"Dirichlet field must vanish at r = R (got u(R) = {values[-1]!r})"
                )
            if values[-1] != 0.0:
                values = values.copy()
                values[-1] = 0.0
        values = values.copy() if values.flags.writeable else values
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def free(self) -> np.ndarray:
        """Values at the non-boundary nodes."""
        return self.values[:-1]

    def with_values(self, values, dirichlet: Optional[bool] = None) -> "RadialField":
        return RadialField(
            grid=self.grid,
            values=values,
            dirichlet=self.dirichlet if dirichlet is None else dirichlet,
        )

    def at_quad(self) -> np.ndarray:
        return self.grid.values_at_quad(self.values)

    def __eq__(self, other):
        if not isinstance(other, RadialField):
            return NotImplemented
        return (
            self.grid.d == other.grid.d
            and self.grid.radius == other.grid.radius
            and np.array_equal(self.grid.nodes, other.grid.nodes)
            and np.array_equal(self.values, other.values)
            and self.dirichlet == other.dirichlet
        )


def make_field(grid: RadialGrid, values, dirichlet: bool = True) -> RadialField:
    return RadialField(grid=grid, values=values, dirichlet=dirichlet)


def field_from_callable(grid: RadialGrid, func: Callable[[np.ndarray], np.ndarray],
                        dirichlet: bool = True) -> RadialField:
    """Nodal interpolation of a radial function r -> u(r)."""
    vals = np.asarray(func(grid.nodes), dtype=float)
    return RadialField(grid=grid, values=vals, dirichlet=dirichlet)


def zero_field(grid: RadialGrid) -> RadialField:
    return RadialField(grid=grid, values=np.zeros(grid.n_nodes))


def field_from_free(grid: RadialGrid, free: np.ndarray) -> RadialField:
    values = np.zeros(grid.n_nodes, dtype=free.dtype)
    values[:-1] = free
    return RadialField(grid=grid, values=values)


def h1_norm_sq(u: RadialField):
    k = u.grid.stiffness_coeff
    du = np.diff(u.values)
    return np.dot(k, du * du)


def h1_norm(u: RadialField) -> float:
    """The H^1_0 norm (integral of |grad u|^2 over the ball)^{1/2}."""
    return float(np.sqrt(h1_norm_sq(u)))


def h1_inner(u: RadialField, v: RadialField):
    """Inner product of the gradients; symmetric, and h1_inner(u,u) = ||u||^2."""
    if u.grid is not v.grid and not np.array_equal(u.grid.nodes, v.grid.nodes):
        raise ValueError("fields live on different grids")
    k = u.grid.stiffness_coeff
    return np.dot(k, np.diff(u.values) * np.diff(v.values))


def lq_norm(u: RadialField, q: float) -> float:
    """L^q norm over the ball for 1 <= q <= 2*."""
    q = float(q)
    two_star = critical_exponent(u.grid.d)
    if not 1.0 <= q <= two_star + 1e-12:
        raise ValueError(f"q must lie in [1, 2*] = [1, {two_star:.6g}] (got {q})")
    vals = np.abs(u.at_quad()) ** q
    return float(u.grid.integrate(vals) ** (1.0 / q))


@dataclass(frozen=True)
class NormBundle:
    """H^1_0 norm together with a selection of L^q norms."""

    h1: float
    lq: dict


def norm_bundle(u: RadialField, qs=None) -> NormBundle:
    if qs is None:
        qs = (2.0, critical_exponent(u.grid.d))
    return NormBundle(h1=h1_norm(u), lq={float(q): lq_norm(u, q) for q in qs})


def refine(grid: RadialGrid) -> RadialGrid:
    """Nested refinement: insert the midpoint of every element."""
    mids = 0.5 * (grid.nodes[:-1] + grid.nodes[1:])
    nodes = np.sort(np.concatenate([grid.nodes, mids]))
    return RadialGrid(d=grid.d, radius=grid.radius, nodes=nodes)


def prolong(u: RadialField, fine: RadialGrid) -> RadialField:
    """Represent a field on a finer grid containing the original nodes.

    Linear interpolation is exact here: the function is unchanged, only its
    nodal representation is.
    """
    vals = np.interp(fine.nodes, u.grid.nodes, u.values)
    return RadialField(grid=fine, values=vals, dirichlet=u.dirichlet)


def _truncated_bubble(grid: RadialGrid, eps: float) -> RadialField:
    """Interpolated extremal-type profile concentrated at scale eps,
    shifted to vanish at the boundary."""
    d, R = grid.d, grid.radius
    power = -(d - 2.0) / 2.0

    def profile(r):
        core = (1.0 + (r / eps) ** 2 / (d * (d - 2.0))) ** power
        tail = (1.0 + (R / eps) ** 2 / (d * (d - 2.0))) ** power
        return np.clip(core - tail, 0.0, None)

    return field_from_callable(grid, profile)


def discrete_sobolev_ratio(grid: RadialGrid, start: Optional[RadialField] = None,
                           max_iter: int = 10_000, rtol: float = 1e-9,
                           return_field: bool = False):
    """Minimize the Sobolev quotient ||u||^2 / ||u||_{2*}^2 over the grid.

    A scan over interpolated concentration bubbles picks the starting
    scale, then inverse-power iteration on the critical ground state
    (stiffness solve against the load of |u|^{2*-2} u, renormalized in
    L^{2*}) settles the profile.  The returned value is the best quotient
    seen, including the start's, so a warm start from a coarse-grid
    minimizer can never make refinement increase the value.

    The result can only sit above the continuum infimum: the discrete
    space embeds in H^1_0, where the infimum is never attained on a
    bounded domain.

    Raises RuntimeError if the iteration has not stalled after max_iter
    steps.
    """
    two_star = critical_exponent(grid.d)

    def quotient(f: RadialField) -> float:
        return h1_norm_sq(f) / lq_norm(f, two_star) ** 2

    h_min = float(np.min(np.diff(grid.nodes)))
    scales = np.geomspace(max(h_min, 1e-7 * grid.radius), grid.radius, 40)
    bubbles = [_truncated_bubble(grid, e) for e in scales]
    u = min(bubbles, key=quotient)
    if start is not None:
        if not np.array_equal(start.grid.nodes, grid.nodes):
            raise ValueError("start field lives on a different grid")
        if quotient(start) < quotient(u):
            u = start

    best = quotient(u)
    best_field = u
    window_best = best
    since_progress = 0
    converged = False
    for _ in range(max_iter):
        uq = u.at_quad()
        load = grid.assemble_load(np.abs(uq) ** (two_star - 2.0) * uq)
        w = grid.solve_interior(load)
        u = field_from_free(grid, w)
        norm = lq_norm(u, two_star)
        if norm == 0.0:
            raise RuntimeError("inverse-power iterate collapsed to zero")
        u = u.with_values(u.values / norm)
        val = quotient(u)
        if val < best:
            best, best_field = val, u
        # stall: no meaningful progress of the best value over a window
        if val < window_best - rtol * abs(window_best):
            window_best = val
            since_progress = 0
        else:
            since_progress += 1
            if since_progress >= 50:
                converged = True
                break
    if not converged:
        raise RuntimeError(
            f"Sobolev quotient iteration did not settle in {max_iter} steps"
        )
    if return_field:
        return best, best_field
    return best


def field_to_dict(u: RadialField) -> dict:
    return {
        "d": u.grid.d,
        "radius": u.grid.radius,
        "r": [float(x) for x in u.grid.nodes],
        "u": [float(x) for x in u.values],
        "dirichlet": u.dirichlet,
    }


def field_from_dict(data: dict) -> RadialField:
    grid = RadialGrid(
        d=int(data["d"]),
        radius=float(data["radius"]),
        nodes=np.asarray(data["r"], dtype=float),
    )
    return RadialField(
        grid=grid,
        values=np.asarray(data["u"], dtype=float),
        dirichlet=bool(data.get("dirichlet", True)),
    )


def write_field_csv(u: RadialField, path) -> None:
    """Write (r, u(r)) rows; full float precision so reads round-trip."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "u"])
        for r, v in zip(u.grid.nodes, u.values):
            writer.writerow([repr(float(r)), repr(float(v))])


def read_field_csv(path, grid: Optional[RadialGrid] = None, d: Optional[int] = None,
                   dirichlet: bool = True) -> RadialField:
    """Read a (r, u) CSV.

    With a grid, values are interpolated onto its nodes if they differ;
    without one, the r column becomes the grid (d must then be given).
    """
    rs, us = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:2]] != ["r", "u"]:
            raise ValueError(f"{path}: expected header 'r,u', got {header!r}")
        for row in reader:
            if not row:
                continue
            rs.append(float(row[0]))
            us.append(float(row[1]))
    rs_arr = np.asarray(rs)
    us_arr = np.asarray(us)
    if grid is not None:
        if rs_arr.shape == grid.nodes.shape and np.allclose(rs_arr, grid.nodes, rtol=0, atol=1e-12 * grid.radius):
            return RadialField(grid=grid, values=us_arr, dirichlet=dirichlet)
        vals = np.interp(grid.nodes, rs_arr, us_arr)
        return RadialField(grid=grid, values=vals, dirichlet=dirichlet)
    if d is None:
        raise ValueError("reading without a grid requires the dimension d")
    new_grid = RadialGrid(d=d, radius=float(rs_arr[-1]), nodes=rs_arr)
    return RadialField(grid=new_grid, values=us_arr, dirichlet=dirichlet)
