"""The explicit plateau cut-off family, its closed-form norm identities,
the computable upper bound for the perturbation threshold, and a numerical
estimate of the threshold itself.

The profile is t0 on [0, sigma R], linear down to 0 at R, and 0 outside.
Its gradient norm has a closed form; the volume integrals of powers and of
a source density H admit explicit lower bounds.  Together they produce a
finite upper bound ("lambda tilde") for the infimum of the energy-to-source
quotient, which the multistart quotient minimizer can only improve on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .constants import (
    KirchhoffParams,
    critical_exponent,
    unit_ball_volume,
    _as_integer_dimension,
)
from .functional import dual_gradient, energy
from .radial import RadialField, RadialGrid, field_from_free
from .solvers import SolverConfig, _gaussian_starts


@dataclass(frozen=True)
class CutoffSpec:
    """Plateau profile parameters: height t0 on the inner fraction sigma of
    a ball of the given support radius (which must fit inside the domain).
    """

    d: int
    radius: float
    t0: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "d", _as_integer_dimension(self.d))
        if not self.radius > 0.0:
            raise ValueError("support radius must be positive")
        if not self.t0 > 0.0:
            raise ValueError("plateau height t0 must be positive")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma must lie in (0, 1) (got {self.sigma})")


def build_cutoff(spec: CutoffSpec, grid: RadialGrid) -> RadialField:
    """Nodal interpolation of the plateau profile on a grid.

    For the closed-form identities to hold exactly, the kink positions
    sigma R and R should be grid nodes (make_grid(..., include=...)).
    """
    if grid.d != spec.d:
        raise ValueError(f"grid dimension {grid.d} differs from spec dimension {spec.d}")
    if spec.radius > grid.radius * (1.0 + 1e-12):
        raise ValueError(
            f"grid ball (radius {grid.radius}) too small for support radius {spec.radius}"
        )
    r = grid.nodes
    ramp = spec.t0 * (spec.radius - r) / (spec.radius * (1.0 - spec.sigma))
    vals = np.where(
        r <= spec.sigma * spec.radius, spec.t0, np.clip(ramp, 0.0, None)
    )
    return RadialField(grid=grid, values=vals)


def cutoff_h1_norm_sq(spec: CutoffSpec) -> float:
    """Closed form: t0^2 (1-sigma)^{-2} (1-sigma^d) R^{d-2} omega_d."""
    return (
        spec.t0**2
        * (1.0 - spec.sigma) ** -2.0
        * (1.0 - spec.sigma**spec.d)
        * spec.radius ** (spec.d - 2)
        * unit_ball_volume(spec.d)
    )


def cutoff_crit_lower_bound(spec: CutoffSpec) -> float:
    """Plateau part of the critical integral: t0^{2*} sigma^d R^d omega_d
    is a lower bound for the integral of u^{2*} over the ball."""
    two_star = critical_exponent(spec.d)
    return spec.t0**two_star * spec.sigma**spec.d * spec.radius**spec.d * unit_ball_volume(spec.d)


def hmax_on_plateau_range(H: Callable, t0: float, samples: int = 10_000) -> float:
    """max of H on [-t0, t0] by dense sampling (H carries no structure we
    could exploit)."""
    ts = np.linspace(-t0, t0, samples)
    return float(np.max(np.asarray(H(ts), dtype=float)))


def cutoff_source_lower_bound(spec: CutoffSpec, H: Callable,
                              hmax: Optional[float] = None) -> float:
    """Lower bound for the integral of H(u_sigma):
    [H(t0) sigma^d - Hmax (1 - sigma^d)] R^d omega_d."""
    if hmax is None:
        hmax = hmax_on_plateau_range(H, spec.t0)
    s_d = spec.sigma**spec.d
    return (
        (float(H(spec.t0)) * s_d - hmax * (1.0 - s_d))
        * spec.radius**spec.d
        * unit_ball_volume(spec.d)
    )


def find_sigma0(d: int, H: Callable, t0: float, hmax: Optional[float] = None,
                margin: float = 0.1) -> float:
    """Smallest sigma making the source lower bound positive, plus a margin.

    Bisects the sign change of H(t0) sigma^d - Hmax (1 - sigma^d) on (0, 1)
    and moves 10% of the remaining way toward 1.
    """
    d = _as_integer_dimension(d)
    if not t0 > 0.0:
        raise ValueError("t0 must be positive")
    h_t0 = float(H(t0))
    if h_t0 <= 0.0:
        raise ValueError(f"need H(t0) > 0 (got H({t0}) = {h_t0})")
    if hmax is None:
        hmax = hmax_on_plateau_range(H, t0)

    def denom(sigma: float) -> float:
        s_d = sigma**d
        return h_t0 * s_d - hmax * (1.0 - s_d)

    lo, hi = 0.0, 1.0
    if denom(hi) <= 0.0:  # cannot happen for hmax >= H(t0) > 0 at sigma -> 1
        raise ValueError("source bound not positive even as sigma -> 1")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if denom(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi + margin * (1.0 - hi)


def lambda_tilde(spec: CutoffSpec, params: KirchhoffParams, H: Callable,
                 alpha0: float = 1.0, hmax: Optional[float] = None) -> float:
    """Computable upper bound for the quotient threshold, from the cut-off
    profile's closed-form pieces:

        [ a T / 2 + b T^2 R^{d-2} omega_d / 4 - t0^{2*} sigma^d R^2 / 2* ]
        / [ alpha0 (H(t0) sigma^d - Hmax (1 - sigma^d)) R^2 ]

    with T = t0^2 (1-sigma)^{-2} (1-sigma^d).  The denominator must be
    positive, i.e. sigma must sit above the admissibility threshold (see
    find_sigma0); otherwise a ValueError asks the caller to raise sigma.
    """
    if alpha0 <= 0.0:
        raise ValueError("alpha0 must be positive")
    if hmax is None:
        hmax = hmax_on_plateau_range(H, spec.t0)
    d = spec.d
    two_star = critical_exponent(d)
    s_d = spec.sigma**d
    denom_factor = float(H(spec.t0)) * s_d - hmax * (1.0 - s_d)
    if denom_factor <= 0.0:
        raise ValueError(
            f"sigma = {spec.sigma} is inadmissible: H(t0) sigma^d - Hmax (1 - sigma^d) "
            f"= {denom_factor:.6g} <= 0; raise sigma toward 1"
        )
    T = spec.t0**2 * (1.0 - spec.sigma) ** -2.0 * (1.0 - s_d)
    R = spec.radius
    omega = unit_ball_volume(d)
    numerator = (
        0.5 * params.a * T
        + 0.25 * params.b * T**2 * R ** (d - 2) * omega
        - spec.t0**two_star * s_d * R**2 / two_star
    )
    return numerator / (alpha0 * denom_factor * R**2)


def power_source(p: float) -> tuple[Callable, Callable]:
    """(f, F) of the power nonlinearity: f(t) = |t|^{p-2} t, F(t) = |t|^p / p."""
    if not p > 1.0:
        raise ValueError(f"power exponent must exceed 1 (got {p})")

    def f(t):
        t = np.asarray(t)
        return np.abs(t) ** (p - 2.0) * t

    def F(t):
        t = np.asarray(t)
        return np.abs(t) ** p / p

    return f, F


def separable_source(h: Callable, H: Callable, alpha0: float = 1.0) -> tuple[Callable, Callable]:
    """(f, F) of the separable form alpha(x) h(t) with constant alpha."""
    return (lambda t: alpha0 * np.asarray(h(t)), lambda t: alpha0 * np.asarray(H(t)))


@dataclass(frozen=True)
class HypothesisReport:
    """Sampled evidence for the two hypotheses of the perturbation theorem.

    The small-t decay check is finite sampling of a limit statement: it is
    evidence, not a certificate.
    """

    h1_ok: bool
    h2_ok: bool
    ratios: tuple  # (t, max of F(+-t)/t^2) pairs, decreasing t
    witness_sigma: Optional[float]
    witness_value: Optional[float]


def hypothesis_check_H1_H2(F: Callable, grid: RadialGrid, t0: float = 1.0,
                           decay_tol: float = 1e-3) -> HypothesisReport:
    """Check the small-t decay of F(t)/t^2 and exhibit a positive-source
    witness field.

    The decay check samples t = 1e-2 .. 1e-8 and requires the final ratio
    to be <= decay_tol.  The witness is a plateau cut-off (several sigma
    and height scalings are tried); success means some discrete field has
    a positive source integral.
    """
    ts = np.array([10.0**-k for k in range(2, 9)])
    ratios = []
    for t in ts:
        vals = np.asarray(F(np.array([t, -t])), dtype=float)
        ratios.append((float(t), float(np.max(vals) / t**2)))
    h1_ok = ratios[-1][1] <= decay_tol

    h2_ok = False
    witness_sigma = None
    witness_value = None
    for sigma in (0.6, 0.75, 0.9, 0.95):
        for height in (0.5, 1.0, 2.0):
            spec = CutoffSpec(
                d=grid.d, radius=grid.radius * 0.95, t0=height * t0, sigma=sigma
            )
            u = build_cutoff(spec, grid)
            val = float(grid.integrate(np.asarray(F(u.at_quad()), dtype=float)))
            if val > 0.0:
                h2_ok = True
                witness_sigma = sigma
                witness_value = val
                break
        if h2_ok:
            break
    return HypothesisReport(
        h1_ok=h1_ok,
        h2_ok=h2_ok,
        ratios=tuple(ratios),
        witness_sigma=witness_sigma,
        witness_value=witness_value,
    )


def _quotient_pieces(u: RadialField, params: KirchhoffParams, F: Callable):
    """(E(u), J(u)) of the quotient; J by quadrature of F."""
    e_val = energy(u, params).total
    j_val = u.grid.integrate(np.asarray(F(u.at_quad()), dtype=float))
    return float(e_val), float(j_val)


def _best_scale(u: RadialField, params: KirchhoffParams, F: Callable):
    """Optimal radial rescale: minimize Q(t u) over a log grid of t.

    Returns (scaled field, Q value) or None when no scale has a positive
    source integral.
    """
    from .radial import h1_norm_sq

    grid = u.grid
    two_star = critical_exponent(grid.d)
    nsq = h1_norm_sq(u)
    if nsq == 0.0:
        return None
    A = 0.5 * params.a * nsq
    B = 0.25 * params.b * nsq**2
    uq = u.at_quad()
    C = grid.integrate(np.abs(uq) ** two_star) / two_star
    ts = np.geomspace(1e-4, 1e4, 161)
    best = None
    for t in ts:
        j = grid.integrate(np.asarray(F(t * uq), dtype=float))
        if j <= 0.0:
            continue
        q = (A * t**2 + B * t**4 - C * t**two_star) / j
        if best is None or q < best[1]:
            best = (t, q)
    if best is None:
        return None
    t = best[0]
    return u.with_values(u.values * t), best[1]


def lambda_star_estimate(params: KirchhoffParams, grid: RadialGrid,
                         f: Callable, F: Callable,
                         cfg: Optional[SolverConfig] = None,
                         extra_starts=(), max_iter: int = 2000,
                         return_field: bool = False):
    """Upper bound for the quotient threshold by multistart minimization of

        Q(u) = E_{a,b}(u) / int F(u)   over fields with int F(u) > 0.

    The discrete space embeds in H^1_0, so the discrete minimum can only
    overestimate the continuum infimum; the result is an upper bound and
    is documented as such.  Starts include plateau cut-offs, the cone, and
    seeded Gaussian fields; each start is first rescaled to its best
    radial scale, then descended with Armijo on Q in the Riesz metric.

    Raises RuntimeError when no start produces a positive source integral
    (the discrete analogue of the positivity hypothesis fails).
    """
    cfg = cfg or SolverConfig()

    starts: list[RadialField] = list(extra_starts)
    for sigma in (0.5, 0.75, 0.9):
        spec = CutoffSpec(d=grid.d, radius=grid.radius * 0.95, t0=1.0, sigma=sigma)
        starts.append(build_cutoff(spec, grid))
    cone = field_from_free(grid, 1.0 - grid.nodes[:-1] / grid.radius)
    starts.append(cone)
    starts += _gaussian_starts(grid, 4, cfg.seed, scales=(1.0, 3.0))

    best_q = None
    best_field = None
    for s in starts:
        scaled = _best_scale(s, params, F)
        if scaled is None:
            continue
        u, q_val = scaled
        e_val, j_val = _quotient_pieces(u, params, F)
        q_val = e_val / j_val
        step = 1.0
        for it in range(max_iter):
            F_e = dual_gradient(u, params)
            uq = u.at_quad()
            F_j = grid.assemble_load(np.asarray(f(uq), dtype=float))
            F_q = (F_e * j_val - e_val * F_j) / j_val**2
            gfree = grid.solve_interior(F_q)
            res_sq = float(np.dot(F_q, gfree))
            if res_sq <= (1e-9 * max(1.0, abs(q_val))) ** 2:
                break
            t = 2.0 * step
            accepted = False
            while t > 1e-25:
                trial = field_from_free(grid, u.free - t * gfree)
                e_t, j_t = _quotient_pieces(trial, params, F)
                if j_t > 0.0 and e_t / j_t <= q_val - 1e-4 * t * res_sq:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                break
            u, e_val, j_val, q_val, step = trial, e_t, j_t, e_t / j_t, t
            if (it + 1) % 50 == 0:
                rescaled = _best_scale(u, params, F)
                if rescaled is not None and rescaled[1] < q_val:
                    u = rescaled[0]
                    e_val, j_val = _quotient_pieces(u, params, F)
                    q_val = e_val / j_val
        if best_q is None or q_val < best_q:
            best_q, best_field = q_val, u
    if best_q is None:
        raise RuntimeError(
            "no start produced a positive source integral; the positivity "
            "hypothesis fails on this discrete space"
        )
    if return_field:
        return best_q, best_field
    return best_q
