"""The Kirchhoff energy on discrete radial fields, its first derivative
(dual and Riesz form) and the second-order quadratic form.

The functional, with all optional perturbation terms, is

    E(u) = a/2 ||u||^2 + b/4 ||u||^4 - ||u||_{2*}^{2*} / 2*
           - int h u - lambda int |u|^p / p - mu int G(u),

with G the antiderivative of a user-supplied subcritical g.  Every term is
evaluated with the same per-element quadrature as its derivative, so
finite differences of the energy reproduce the assembled gradient to
rounding accuracy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .constants import KirchhoffParams, critical_exponent
from .radial import RadialField, h1_inner, h1_norm_sq


def _simpson_antiderivative(g: Callable, t: np.ndarray, rtol: float = 1e-10,
                            max_panels: int = 4096) -> np.ndarray:
    """G(t_i) = int_0^{t_i} g, composite Simpson with panel doubling.

    All upper limits are integrated simultaneously on a shared normalized
    grid; panels double until the estimates change by less than rtol
    relative (or the panel cap is hit, which raises for pathological g).
    """
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    n = 16
    prev = None
    while n <= max_panels:
        x = np.linspace(0.0, 1.0, n + 1)
        s = flat[:, None] * x[None, :]
        vals = np.asarray(g(s), dtype=float)
        if vals.shape != s.shape:
            raise ValueError("g must evaluate elementwise on arrays")
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        est = (flat / (3.0 * n)) * (vals @ w)
        if prev is not None:
            scale = np.maximum(np.abs(est), 1.0)
            if np.max(np.abs(est - prev) / scale) <= rtol:
                return est.reshape(t.shape)
        prev = est
        n *= 2
    raise RuntimeError(
        f"antiderivative quadrature did not reach rtol={rtol} with "
        f"{max_panels} panels; g is too rough"
    )


@dataclass(frozen=True)
class PerturbationSpec:
    """Optional lower-order terms of the energy.

    h is the Poisson datum (positive nodal values, built with
    dirichlet=False); lam and p control the power perturbation
    lambda |u|^{p-2} u; mu and g the general subcritical one.  A supplied g
    must come with its declared growth certificate (M, q) meaning
    |g(t)| <= M (1 + |t|^{q-1}); the declaration is trusted but spot-checked
    by sampling, with violations reported as a warning.
    """

    h: Optional[RadialField] = None
    lam: float = 0.0
    p: float = 3.0
    mu: float = 0.0
    g: Optional[Callable] = None
    g_bound: Optional[tuple] = None  # (M, q)

    def __post_init__(self):
        if self.lam < 0.0 or self.mu < 0.0:
            raise ValueError("lambda and mu must be nonnegative")
        if self.lam > 0.0 and not self.p > 2.0:
            raise ValueError(f"power exponent p must exceed 2 (got {self.p})")
        if self.h is not None:
            if self.h.dirichlet:
                raise ValueError(
                    "the datum h is not an H^1_0 state; build it with dirichlet=False"
                )
            if not np.all(self.h.values > 0.0):
                raise ValueError("the datum h must be positive at every node")
        if self.mu > 0.0 and self.g is None:
            raise ValueError("mu > 0 requires a perturbation function g")
        if self.g is not None:
            if self.g_bound is None:
                raise ValueError("a supplied g needs its declared growth bound (M, q)")
            M, q = self.g_bound
            if not (M > 0.0 and q > 1.0):
                raise ValueError(f"growth bound must have M > 0 and q > 1 (got {self.g_bound})")
            ts = np.linspace(-10.0, 10.0, 201)
            gv = np.abs(np.asarray(self.g(ts), dtype=float))
            cap = M * (1.0 + np.abs(ts) ** (q - 1.0))
            if np.any(gv > cap * (1.0 + 1e-9)):
                warnings.warn(
                    "g exceeds its declared growth bound on sampled points; "
                    "the declaration is trusted but looks wrong",
                    stacklevel=2,
                )

    @property
    def is_trivial(self) -> bool:
        return self.h is None and self.lam == 0.0 and self.mu == 0.0

    def validate_for_dimension(self, d: int) -> None:
        two_star = critical_exponent(d)
        if self.lam > 0.0 and not self.p < two_star:
            raise ValueError(
                f"power exponent p must lie in (2, 2*) = (2, {two_star:.6g}) "
                f"for d = {d} (got {self.p})"
            )
        if self.g is not None and self.g_bound is not None:
            q = self.g_bound[1]
            if not q < two_star:
                raise ValueError(
                    f"declared growth exponent q must lie in (1, 2*) (got {q})"
                )


_NO_PERT = PerturbationSpec()


@dataclass(frozen=True)
class EnergyBreakdown:
    """The energy split into its terms; total = quad + quart - crit
    - poisson - subcrit - pert."""

    quad: float
    quart: float
    crit: float
    poisson: float
    subcrit: float
    pert: float
    total: float

    def to_dict(self) -> dict:
        return {
            "quad": float(self.quad),
            "quart": float(self.quart),
            "crit": float(self.crit),
            "poisson": float(self.poisson),
            "subcrit": float(self.subcrit),
            "pert": float(self.pert),
            "total": float(self.total),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnergyBreakdown":
        return cls(**{k: float(data[k]) for k in
                      ("quad", "quart", "crit", "poisson", "subcrit", "pert", "total")})


def _check_pert(u: RadialField, pert: Optional[PerturbationSpec]) -> PerturbationSpec:
    pert = _NO_PERT if pert is None else pert
    pert.validate_for_dimension(u.grid.d)
    if pert.h is not None and not np.array_equal(pert.h.grid.nodes, u.grid.nodes):
        raise ValueError("datum h lives on a different grid than the state")
    return pert


def energy(u: RadialField, params: KirchhoffParams,
           pert: Optional[PerturbationSpec] = None) -> EnergyBreakdown:
    """Evaluate the energy of a state, term by term."""
    pert = _check_pert(u, pert)
    grid = u.grid
    two_star = critical_exponent(grid.d)
    nsq = h1_norm_sq(u)
    uq = u.at_quad()
    quad = 0.5 * params.a * nsq
    quart = 0.25 * params.b * nsq * nsq
    crit = grid.integrate(np.abs(uq) ** two_star) / two_star
    poisson = grid.integrate(pert.h.at_quad() * uq) if pert.h is not None else 0.0
    subcrit = (
        pert.lam * grid.integrate(np.abs(uq) ** pert.p) / pert.p
        if pert.lam > 0.0
        else 0.0
    )
    pterm = (
        pert.mu * grid.integrate(_simpson_antiderivative(pert.g, uq))
        if pert.mu > 0.0
        else 0.0
    )
    total = quad + quart - crit - poisson - subcrit - pterm
    return EnergyBreakdown(
        quad=quad, quart=quart, crit=crit, poisson=poisson,
        subcrit=subcrit, pert=pterm, total=total,
    )


def _apply_stiffness(u: RadialField) -> np.ndarray:
    """(A u) on the free nodes: the dual vector of v -> (u, v)_{H^1}."""
    k = u.grid.stiffness_coeff
    t = k * np.diff(u.values)
    out = np.zeros(u.grid.n_nodes - 1, dtype=t.dtype)
    out -= t[: out.size]
    out[1:] += t[: out.size - 1]
    return out


def dual_gradient(u: RadialField, params: KirchhoffParams,
                  pert: Optional[PerturbationSpec] = None) -> np.ndarray:
    """Assembled derivative: the free-node vector F with dE(u)[v] = F . v.

    dE(u)[v] = (a + b||u||^2)(u, v)_{H^1} - int |u|^{2*-2} u v - int h v
               - lambda int |u|^{p-2} u v - mu int g(u) v.
    """
    pert = _check_pert(u, pert)
    grid = u.grid
    two_star = critical_exponent(grid.d)
    uq = u.at_quad()
    coeff = params.a + params.b * h1_norm_sq(u)
    F = coeff * _apply_stiffness(u)
    F = F - grid.assemble_load(np.abs(uq) ** (two_star - 2.0) * uq)
    if pert.h is not None:
        F = F - grid.assemble_load(pert.h.at_quad().astype(F.dtype))
    if pert.lam > 0.0:
        F = F - pert.lam * grid.assemble_load(np.abs(uq) ** (pert.p - 2.0) * uq)
    if pert.mu > 0.0:
        F = F - pert.mu * grid.assemble_load(np.asarray(pert.g(uq)))
    return F


def riesz_gradient(u: RadialField, params: KirchhoffParams,
                   pert: Optional[PerturbationSpec] = None) -> RadialField:
    """H^1_0 representative of the derivative: solves (g, v)_{H^1} = dE(u)[v]."""
    from .radial import field_from_free

    F = dual_gradient(u, params, pert)
    return field_from_free(u.grid, u.grid.solve_interior(F))


def directional_derivative(u: RadialField, v: RadialField, params: KirchhoffParams,
                           pert: Optional[PerturbationSpec] = None):
    """dE(u)[v] for a Dirichlet test direction v on the same grid."""
    if not np.array_equal(u.grid.nodes, v.grid.nodes):
        raise ValueError("fields live on different grids")
    return np.dot(dual_gradient(u, params, pert), v.free)


def residual_norm(u: RadialField, params: KirchhoffParams,
                  pert: Optional[PerturbationSpec] = None) -> float:
    """Dual norm of the derivative: sup of dE(u)[v] over ||v|| = 1."""
    F = dual_gradient(u, params, pert)
    g = u.grid.solve_interior(F)
    val = np.dot(F, g)
    return np.sqrt(val) if val > 0.0 else val * 0.0


def second_form(u: RadialField, v: RadialField, params: KirchhoffParams,
                pert: Optional[PerturbationSpec] = None) -> float:
    """The quadratic form <E''(u) v, v>.

    Covers the Kirchhoff terms
        a ||v||^2 + b ||u||^2 ||v||^2 + 2 b (u, v)_{H^1}^2
        - (2* - 1) int |u|^{2*-2} v^2
    and, when a power perturbation is present, the analogous
    - lambda (p - 1) int |u|^{p-2} v^2.  The general g-term carries no
    usable second derivative (only g itself is declared), so mu must be 0.
    """
    if not np.array_equal(u.grid.nodes, v.grid.nodes):
        raise ValueError("fields live on different grids")
    pert = _check_pert(u, pert)
    if pert.mu > 0.0:
        raise ValueError("second_form does not cover mu g(x, u) perturbations")
    grid = u.grid
    two_star = critical_exponent(grid.d)
    uq = u.at_quad()
    vq = v.at_quad()
    nsq_u = h1_norm_sq(u)
    nsq_v = h1_norm_sq(v)
    mixed = h1_inner(u, v)
    out = (
        params.a * nsq_v
        + params.b * nsq_u * nsq_v
        + 2.0 * params.b * mixed**2
        - (two_star - 1.0) * grid.integrate(np.abs(uq) ** (two_star - 2.0) * vq**2)
    )
    if pert.lam > 0.0:
        out -= pert.lam * (pert.p - 1.0) * grid.integrate(np.abs(uq) ** (pert.p - 2.0) * vq**2)
    return float(out)


def hessian_matrix(u: RadialField, params: KirchhoffParams,
                   pert: Optional[PerturbationSpec] = None) -> np.ndarray:
    """Dense free-node Hessian of the energy at u (mu must be 0).

    Built from the same quadrature as second_form:
        (a + b||u||^2) A + 2b (Au)(Au)^T - sum of weighted mass matrices.
    Used by the Newton polish in the multistart solver.
    """
    pert = _check_pert(u, pert)
    if pert.mu > 0.0:
        raise ValueError("hessian_matrix does not cover mu g(x, u) perturbations")
    grid = u.grid
    two_star = critical_exponent(grid.d)
    dtype = u.values.dtype
    n = grid.n_nodes - 1
    uq = u.at_quad()

    weight = (two_star - 1.0) * np.abs(uq) ** (two_star - 2.0)
    if pert.lam > 0.0:
        weight = weight + pert.lam * (pert.p - 1.0) * np.abs(uq) ** (pert.p - 2.0)

    H = np.zeros((n, n), dtype=dtype)
    # weighted mass matrix of the hat functions, element by element
    bL, bR = grid.basis_at_quad
    wq = grid.quad_weights * weight
    mLL = wq @ (bL * bL)
    mLR = wq @ (bL * bR)
    mRR = wq @ (bR * bR)
    idx = np.arange(n)
    H[idx, idx] -= mLL[:n]
    H[idx[:-1] + 1, idx[:-1] + 1] -= mRR[: n - 1]
    H[idx[:-1], idx[:-1] + 1] -= mLR[: n - 1]
    H[idx[:-1] + 1, idx[:-1]] -= mLR[: n - 1]

    # Kirchhoff part: scaled stiffness plus the nonlocal rank-one coupling
    k = grid.stiffness_coeff.astype(dtype)
    coeff = params.a + params.b * h1_norm_sq(u)
    diag = np.empty(n, dtype=dtype)
    diag[0] = k[0]
    diag[1:] = k[: n - 1] + k[1:n]
    H[idx, idx] += coeff * diag
    H[idx[:-1], idx[:-1] + 1] += -coeff * k[: n - 1]
    H[idx[:-1] + 1, idx[:-1]] += -coeff * k[: n - 1]
    au = _apply_stiffness(u)
    H += 2.0 * params.b * np.outer(au, au)
    return H
