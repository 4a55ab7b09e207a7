"""Numerical solution of the Dirichlet problems: preconditioned descent,
Kirchhoff fixed-point iteration, uniqueness probing, the d = 4 a-priori
bound, and an exploratory multistart search for several critical points.

Descent runs in the H^1_0 Riesz metric (the assembled derivative is mapped
through the stiffness Gram matrix before stepping), which keeps the step
sizes mesh independent.  Every solve owns its iterate; nothing here shares
mutable state, so independent solves may run concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .constants import KirchhoffParams, classify
from .functional import (
    EnergyBreakdown,
    PerturbationSpec,
    dual_gradient,
    energy,
    hessian_matrix,
)
from .radial import (
    RadialField,
    RadialGrid,
    field_from_free,
    h1_norm,
    h1_norm_sq,
    zero_field,
)

ENERGY_FLOOR = -1e12  # below this the functional is declared unbounded


class UnboundedEnergyError(RuntimeError):
    """Raised when descent falls through the energy floor.

    In the sub-lsc regime (key < L_d) the functional genuinely has no lower
    bound along concentrating directions; failing loudly beats looping.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DivergenceError(RuntimeError):
    """Fixed-point iterate left the trust region (H^1 norm above 1e6)."""


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by all solvers; the defaults match the test suite."""

    tol: float = 1e-8
    max_iter: int = 10_000
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    starts: int = 10
    seed: int = 1512

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.armijo_c1 < 1.0:
            raise ValueError("Armijo parameter c1 must lie in (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if self.max_iter < 1 or self.starts < 1:
            raise ValueError("max_iter and starts must be positive")


_DEFAULT_CFG = SolverConfig()


@dataclass(frozen=True)
class SolveResult:
    field: RadialField
    residual: float
    energy: EnergyBreakdown
    iterations: int
    converged: bool
    method: str
    energy_trace: tuple = field(default=(), repr=False, compare=False)

    def to_dict(self) -> dict:
        from .radial import field_to_dict

        return {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": float(self.residual),
            "energy": self.energy.to_dict(),
            "field": field_to_dict(self.field),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolveResult":
        from .radial import field_from_dict

        return cls(
            field=field_from_dict(data["field"]),
            residual=float(data["residual"]),
            energy=EnergyBreakdown.from_dict(data["energy"]),
            iterations=int(data["iterations"]),
            converged=bool(data["converged"]),
            method=str(data["method"]),
        )


def _riesz_and_residual(u, params, pert):
    F = dual_gradient(u, params, pert)
    gfree = u.grid.solve_interior(F)
    res_sq = np.dot(F, gfree)
    res_sq = res_sq if res_sq > 0.0 else res_sq * 0.0
    return gfree, res_sq


def _regime_warning(grid: RadialGrid, params: KirchhoffParams):
    report = classify(grid.d, params)
    if not report.swlsc:
        warnings.warn(
            f"regime key {report.key:.6g} is below L_d = "
            f"{report.thresholds.L_d:.6g}: the energy is not weakly lower "
            "semicontinuous and minimization may be unbounded below",
            stacklevel=3,
        )
    return report


def minimize(params: KirchhoffParams, grid: RadialGrid,
             pert: Optional[PerturbationSpec] = None,
             cfg: Optional[SolverConfig] = None,
             start: Optional[RadialField] = None,
             check_regime: bool = True,
             polish: bool = True) -> SolveResult:
    """Armijo-backtracked gradient descent on the Riesz gradient.

    The energy decreases strictly at every accepted step.  If it falls
    below the -1e12 floor the run aborts with UnboundedEnergyError and a
    regime diagnostic, which is the expected outcome below the
    lower-semicontinuity threshold.

    When the line search stalls at the double-precision rounding floor
    with the residual still above tol, a Newton polish in extended
    precision finishes the job (kept only if it does not raise the
    energy; disable with polish=False).
    """
    cfg = cfg or _DEFAULT_CFG
    report = _regime_warning(grid, params) if check_regime else None
    u = start if start is not None else zero_field(grid)
    if not np.array_equal(u.grid.nodes, grid.nodes):
        raise ValueError("start field lives on a different grid")

    e_val = energy(u, params, pert).total
    trace = [float(e_val)]
    step_prev = 1.0
    residual = 0.0
    converged = False
    iterations = 0
    for iterations in range(cfg.max_iter + 1):
        gfree, res_sq = _riesz_and_residual(u, params, pert)
        residual = np.sqrt(res_sq)
        if residual <= cfg.tol:
            converged = True
            break
        if iterations == cfg.max_iter:
            break
        t = 2.0 * step_prev
        accepted = False
        while t > 1e-30:
            trial_free = u.free - t * gfree
            trial = field_from_free(grid, trial_free)
            e_trial = energy(trial, params, pert).total
            if not np.isfinite(e_trial):
                if e_trial < 0:
                    key_msg = f" (key = {report.key:.6g})" if report is not None else ""
                    raise UnboundedEnergyError(
                        "energy overflowed to -inf during line search; the "
                        f"functional is unbounded below{key_msg}",
                        report=report,
                    )
                t *= cfg.backtrack
                continue
            if e_trial <= e_val - cfg.armijo_c1 * t * res_sq:
                accepted = True
                break
            t *= cfg.backtrack
        if not accepted:
            break  # rounding floor: no decrease resolvable
        u, e_val = trial, e_trial
        trace.append(float(e_val))
        step_prev = t
        if e_val < ENERGY_FLOOR:
            key_msg = ""
            if report is not None:
                key_msg = (
                    f" (key = {report.key:.6g}, L_d = {report.thresholds.L_d:.6g}, "
                    f"swlsc = {report.swlsc})"
                )
            raise UnboundedEnergyError(
                f"energy fell below {ENERGY_FLOOR:.0e}: the functional is "
                f"unbounded below along this direction{key_msg}",
                report=report,
            )
    if not converged and polish and (pert is None or pert.mu == 0.0):
        polished, res_p, ok = _newton_polish(u, params, pert or PerturbationSpec(),
                                             cfg.tol, max_iter=40)
        e_polished = float(energy(polished, params, pert).total)
        if ok and e_polished <= e_val + 1e-9 * (1.0 + abs(e_val)):
            u, residual, converged = polished, res_p, True
    return SolveResult(
        field=u,
        residual=float(residual),
        energy=energy(u, params, pert),
        iterations=iterations,
        converged=converged,
        method="descent",
        energy_trace=tuple(trace),
    )


def fixed_point_solve(params: KirchhoffParams, grid: RadialGrid,
                      pert: Optional[PerturbationSpec] = None,
                      cfg: Optional[SolverConfig] = None,
                      start: Optional[RadialField] = None) -> SolveResult:
    """Picard iteration on the weak form of the Poisson-datum problem.

    Each sweep solves the linear radial problem
        (a + b ||u_k||^2) (u_{k+1}, v)_{H^1} = int (|u_k|^{2*-2} u_k + h) v
    and stops when the accepted H^1 step is below tol.  Undamped Picard
    can cycle instead of contracting; on the first sign of growing or
    stagnating step norms the run restarts from the initial guess with
    damping 0.5, after which the damping keeps halving in place (down to
    1/64) until the steps contract.  The returned field must carry a
    nonlinear residual below 10 tol to count as converged.
    """
    from .constants import critical_exponent

    cfg = cfg or _DEFAULT_CFG
    pert = pert or PerturbationSpec()
    if pert.lam != 0.0 or pert.mu != 0.0:
        raise ValueError("the fixed-point scheme covers the datum problem only "
                         "(lambda = mu = 0)")
    two_star = critical_exponent(grid.d)
    h_load = grid.assemble_load(pert.h.at_quad()) if pert.h is not None else None

    u0 = start if start is not None else zero_field(grid)
    if not np.array_equal(u0.grid.nodes, grid.nodes):
        raise ValueError("start field lives on a different grid")

    damping = 1.0
    restarted = False
    u = u0
    iterations = 0
    step_ok = False
    prev_steps: list[float] = []
    best_step = np.inf
    since_best = 0
    while iterations < cfg.max_iter:
        iterations += 1
        uq = u.at_quad()
        rhs = grid.assemble_load(np.abs(uq) ** (two_star - 2.0) * uq)
        if h_load is not None:
            rhs = rhs + h_load
        coeff = params.a + params.b * h1_norm_sq(u)
        w = field_from_free(grid, grid.solve_interior(rhs) / coeff)
        delta = w.values - u.values
        step = float(np.sqrt(np.dot(grid.stiffness_coeff, np.diff(delta) ** 2)))

        growing = len(prev_steps) >= 2 and step > prev_steps[-1] > prev_steps[-2]
        if step < best_step * (1.0 - 1e-3):
            best_step = step
            since_best = 0
        else:
            since_best += 1
        stagnant = since_best >= 40  # cycling without contraction
        if growing or stagnant:
            if damping <= 1.0 / 64.0:
                break
            if not restarted:
                restarted = True
                u = u0
            damping *= 0.5
            prev_steps = []
            best_step = np.inf
            since_best = 0
            continue

        prev_steps.append(step)
        u = u.with_values(u.values + damping * delta)
        if h1_norm(u) > 1e6:
            raise DivergenceError(
                f"fixed-point iterate reached H^1 norm {h1_norm(u):.3e} after "
                f"{iterations} sweeps"
            )
        if damping * step <= cfg.tol:
            step_ok = True
            break
    gfree, res_sq = _riesz_and_residual(u, params, pert)
    residual = float(np.sqrt(res_sq))
    converged = step_ok and residual <= 10.0 * cfg.tol
    if step_ok and not converged:
        # steps contracted but the double-precision residual floor sits
        # above the target: finish in extended precision
        polished, res_p, ok = _newton_polish(u, params, pert, 10.0 * cfg.tol,
                                             max_iter=40)
        if ok:
            u, residual, converged = polished, float(res_p), True
    return SolveResult(
        field=u,
        residual=residual,
        energy=energy(u, params, pert),
        iterations=iterations,
        converged=converged,
        method="fixed_point",
    )


def _gaussian_starts(grid: RadialGrid, count: int, seed: int,
                     scales=(0.1, 1.0, 10.0)) -> list[RadialField]:
    """Random H^1-normalized fields at cycling magnitude scales."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        u = field_from_free(grid, rng.standard_normal(grid.n_nodes - 1))
        scale = scales[i % len(scales)]
        out.append(u.with_values(u.values * (scale / h1_norm(u))))
    return out


@dataclass(frozen=True)
class UniquenessReport:
    results: tuple
    spread: float
    reference_norm: float
    regime: object
    uniqueness_asserted: bool


def uniqueness_probe(params: KirchhoffParams, grid: RadialGrid,
                     pert: Optional[PerturbationSpec] = None,
                     cfg: Optional[SolverConfig] = None) -> UniquenessReport:
    """Minimize from random starts and measure the solution spread.

    In the strictly convex regime (key > C_d) the minimizer is unique, so
    the maximal pairwise H^1 distance must stay below 1e-5 (1 + ||u||);
    a violation there raises, since it means the solver is broken.  Below
    the convexity threshold the probe still runs but asserts nothing.
    """
    cfg = cfg or _DEFAULT_CFG
    report = classify(grid.d, params)
    starts = _gaussian_starts(grid, cfg.starts, cfg.seed)
    results = []
    for s in starts:
        r = minimize(params, grid, pert=pert, cfg=cfg, start=s, check_regime=False)
        if not r.converged:
            raise RuntimeError(
                f"uniqueness probe start failed to converge "
                f"(residual {r.residual:.3e} after {r.iterations} iterations)"
            )
        results.append(r)
    spread = 0.0
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            diff = results[i].field.values - results[j].field.values
            dist = float(np.sqrt(np.dot(grid.stiffness_coeff, np.diff(diff) ** 2)))
            spread = max(spread, dist)
    ref = max(h1_norm(r.field) for r in results)
    asserted = report.strictly_convex
    if asserted and spread > 1e-5 * (1.0 + ref):
        raise RuntimeError(
            f"distinct minimizers (spread {spread:.3e}) found in the strictly "
            "convex regime; this indicates a solver defect"
        )
    return UniquenessReport(
        results=tuple(results),
        spread=spread,
        reference_norm=ref,
        regime=report,
        uniqueness_asserted=asserted,
    )


def apriori_bound(params: KirchhoffParams, lam: float, p: float,
                  grid: RadialGrid) -> float:
    """The d = 4 a-priori estimate for solutions of the power-perturbed
    problem (mu = 0, h = 0):

        ||u|| <= ( lam S_4^{2-p/2} |Omega|^{1-p/2*} / (b S_4^2 - 1) )^{1/(4-p)}.
    """
    from .constants import sobolev_constant, unit_ball_volume

    if grid.d != 4:
        raise ValueError("the a-priori estimate is the d = 4 case")
    if not 2.0 < p < 4.0:
        raise ValueError(f"p must lie in (2, 4) (got {p})")
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    S = sobolev_constant(4)
    margin = params.b * S**2 - 1.0
    if margin <= 0.0:
        raise ValueError(
            f"estimate requires b S_4^2 > 1 (got b S_4^2 = {params.b * S**2:.6g})"
        )
    omega = unit_ball_volume(4) * grid.radius**4
    return float(
        (lam * S ** (2.0 - p / 2.0) * omega ** (1.0 - p / 4.0) / margin)
        ** (1.0 / (4.0 - p))
    )


def apriori_check(solution: SolveResult, params: KirchhoffParams, lam: float,
                  p: float) -> tuple[float, bool]:
    """Evaluate the a-priori bound against a converged solve of the
    power-perturbed problem; returns (bound, satisfied)."""
    grid = solution.field.grid
    bound = apriori_bound(params, lam, p, grid)
    return bound, h1_norm(solution.field) <= bound * (1.0 + 1e-6)


def _dense_solve(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Dense linear solve that also works in extended precision.

    LAPACK only covers float32/float64, so long-double systems go through
    a plain partially pivoted elimination (n is a few hundred at most).
    """
    if H.dtype == np.float64 and rhs.dtype == np.float64:
        return np.linalg.solve(H, rhs)
    A = H.copy()
    b = rhs.copy()
    n = b.size
    for j in range(n):
        pivot_row = j + int(np.argmax(np.abs(A[j:, j])))
        if A[pivot_row, j] == 0.0:
            raise np.linalg.LinAlgError("singular Hessian in Newton polish")
        if pivot_row != j:
            A[[j, pivot_row]] = A[[pivot_row, j]]
            b[[j, pivot_row]] = b[[pivot_row, j]]
        mults = A[j + 1 :, j] / A[j, j]
        A[j + 1 :, j:] -= mults[:, None] * A[j, j:]
        b[j + 1 :] -= mults * b[j]
    x = np.empty_like(b)
    for j in range(n - 1, -1, -1):
        x[j] = (b[j] - np.dot(A[j, j + 1 :], x[j + 1 :])) / A[j, j]
    return x


def _newton_polish(u: RadialField, params: KirchhoffParams,
                   pert: PerturbationSpec, tol: float,
                   max_iter: int = 60) -> tuple[RadialField, float, bool]:
    """Drive the dual-norm residual of a candidate critical point below tol.

    Runs Newton on the assembled gradient in extended precision: the large
    solution scales of the strongly perturbed problems put the double
    precision rounding floor of the residual above tight tolerances, while
    long double leaves two extra orders of headroom.  Steps are halved
    while they fail to reduce the residual; if the plain Newton direction
    makes no progress (the Hessian turns near-singular exactly on the
    convexity boundary), a Levenberg shift is escalated until one does.
    """
    grid = u.grid
    work = u.with_values(u.values.astype(np.longdouble))

    def residual_of(f):
        F = dual_gradient(f, params, pert)
        g = grid.solve_interior(F)
        val = np.dot(F, g)
        return F, np.sqrt(val) if val > 0.0 else val * 0.0

    F, res = residual_of(work)
    identity = None
    for _ in range(max_iter):
        if res <= tol:
            return work, float(res), True
        H = hessian_matrix(work, params, pert)
        if identity is None:
            identity = np.eye(H.shape[0], dtype=H.dtype)
        shift_scale = float(np.max(np.abs(np.diag(H)))) or 1.0
        improved = False
        for tau in (0.0, 1e-14, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4):
            try:
                delta = _dense_solve(H + (tau * shift_scale) * identity, F)
            except np.linalg.LinAlgError:
                continue
            t = 1.0
            while t > 1e-8:
                trial = work.with_values(
                    np.concatenate([work.free - t * delta, work.values[-1:]])
                )
                F_t, res_t = residual_of(trial)
                if res_t < res:
                    work, F, res = trial, F_t, res_t
                    improved = True
                    break
                t *= 0.5
            if improved:
                break
        if not improved:
            break
    return work, float(res), bool(res <= tol)


def _ray_rescale(u: RadialField, params: KirchhoffParams,
                 pert: PerturbationSpec) -> RadialField:
    """Best multiple of a direction: scan E(t u) over a log grid of t.

    Jumps along the long valley of the strongly perturbed problems, where
    plain descent moves at a crawl; keeps the original field when no
    rescaling improves on it.
    """
    if h1_norm(u) == 0.0:
        return u
    e_best = min(energy(u, params, pert).total, 0.0)
    t_best = None
    for t in np.geomspace(1e-3, 1e6, 140):
        e_t = energy(u.with_values(u.values * t), params, pert).total
        if np.isfinite(e_t) and e_t < e_best:
            t_best, e_best = t, e_t
    return u if t_best is None else u.with_values(u.values * t_best)


def multistart_search(params: KirchhoffParams, grid: RadialGrid,
                      pert: Optional[PerturbationSpec] = None,
                      cfg: Optional[SolverConfig] = None,
                      distinct_tol: float = 1e-3,
                      polish: bool = True) -> list[SolveResult]:
    """Hunt for distinct critical points: multistart descent plus deflation.

    Phase one descends from the zero field, a cone direction, and Gaussian
    starts at three magnitude scales, each first rescaled to its best
    point along its ray.  Phase two repels fresh descents from the
    solutions already found by adding inverse-square distance barriers to
    the objective (the barrier gradient pushes iterates out of known
    basins), then re-converges the endpoints on the unmodified energy.

    Every candidate endpoint is validated by a Newton polish on the
    assembled gradient, run in extended precision because the dual-norm
    rounding floor of double precision sits above tight tolerances at the
    solution scales of strongly perturbed problems; only points whose
    residual genuinely reaches cfg.tol are reported.  Results are
    deduplicated at H^1 distance distinct_tol and listed in discovery
    order.  No particular count is guaranteed.
    """
    cfg = cfg or _DEFAULT_CFG
    pert = pert or PerturbationSpec()
    report = classify(grid.d, params)
    if not report.palais_smale:
        warnings.warn(
            f"regime key {report.key:.6g} is not above PS_d = "
            f"{report.thresholds.PS_d:.6g}; the search may not terminate cleanly",
            stacklevel=2,
        )

    found: list[SolveResult] = []

    def distance(a: RadialField, b: RadialField) -> float:
        diff = a.values.astype(np.longdouble) - b.values.astype(np.longdouble)
        return float(np.sqrt(np.dot(grid.stiffness_coeff, np.diff(diff) ** 2)))

    def register(result: SolveResult):
        if not np.isfinite(result.residual):
            return
        for known in found:
            if distance(result.field, known.field) <= distinct_tol:
                return
        if result.residual > cfg.tol:
            if not polish:
                return
            f, res, ok = _newton_polish(result.field, params, pert, cfg.tol)
            if not ok:
                return
            result = replace(
                result,
                field=f,
                residual=res,
                energy=energy(f, params, pert),
                converged=True,
            )
            for known in found:
                if distance(result.field, known.field) <= distinct_tol:
                    return
        found.append(result)

    cone = field_from_free(grid, 1.0 - grid.nodes[:-1] / grid.radius)
    starts = [zero_field(grid), cone]
    starts += _gaussian_starts(grid, max(cfg.starts - 2, 1), cfg.seed)
    budget = replace(cfg, tol=max(cfg.tol, 1e-7),
                     max_iter=min(cfg.max_iter, 2000))
    for s in starts:
        s = _ray_rescale(s, params, pert)
        r = minimize(params, grid, pert=pert, cfg=budget, start=s, check_regime=False)
        register(replace(r, method="multistart"))

    # deflation phase: barrier-repelled descents from fresh random starts
    n_deflated = max(2, cfg.starts // 2)
    defl_starts = _gaussian_starts(grid, n_deflated, cfg.seed + 1, scales=(0.5, 2.0))
    for s in defl_starts:
        u = _deflated_descent(s, params, pert, grid, found, budget)
        if u is None:
            continue
        r = minimize(params, grid, pert=pert, cfg=budget, start=u, check_regime=False)
        register(replace(r, method="multistart"))
    return found


def _deflated_descent(start: RadialField, params, pert, grid,
                      known: list[SolveResult], cfg: SolverConfig,
                      beta: float = 1.0, max_iter: int = 300):
    """Armijo descent on the energy plus inverse-square distance barriers.

    Returns the endpoint to be re-converged on the plain energy, or None
    if the barrier objective never stabilized.
    """
    if not known:
        return start

    anchors = [k.field.values.astype(np.float64) for k in known]
    scale = max(1.0, max(abs(k.energy.total) for k in known))
    strength = beta * scale

    def barrier_and_riesz(u: RadialField):
        val = 0.0
        push = np.zeros(grid.n_nodes - 1)
        for a in anchors:
            diff = u.values - a
            dist_sq = float(np.dot(grid.stiffness_coeff, np.diff(diff) ** 2))
            dist_sq = max(dist_sq, 1e-12)
            val += strength / dist_sq
            push += (-2.0 * strength / dist_sq**2) * diff[:-1]
        return val, push

    def h1_sq_of_free(free: np.ndarray) -> float:
        full = np.zeros(grid.n_nodes)
        full[:-1] = free
        return float(np.dot(grid.stiffness_coeff, np.diff(full) ** 2))

    u = start
    e_val = energy(u, params, pert).total + barrier_and_riesz(u)[0]
    step = 1.0
    for _ in range(max_iter):
        F = dual_gradient(u, params, pert)
        gfree = grid.solve_interior(F)
        _, bpush = barrier_and_riesz(u)
        direction = gfree + bpush  # Riesz gradient of energy + barrier
        slope_sq = h1_sq_of_free(direction)  # squared H^1 norm of the gradient
        if np.sqrt(slope_sq) <= 1e3 * cfg.tol:
            break
        t = 2.0 * step
        accepted = False
        while t > 1e-20:
            trial = field_from_free(grid, u.free - t * direction)
            e_trial = energy(trial, params, pert).total + barrier_and_riesz(trial)[0]
            if np.isfinite(e_trial) and e_trial <= e_val - 1e-4 * t * slope_sq:
                accepted = True
                break
            t *= cfg.backtrack
        if not accepted:
            break
        u, e_val, step = trial, e_trial, t
        if e_val < ENERGY_FLOOR:
            return None
    return u
