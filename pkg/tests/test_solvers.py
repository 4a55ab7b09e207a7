import warnings

import numpy as np
import pytest

from conftest import random_field
from kirchhoff.constants import KirchhoffParams, sharp_constants, sobolev_constant
from kirchhoff.functional import PerturbationSpec, dual_gradient, energy
from kirchhoff.radial import (
    discrete_sobolev_ratio,
    field_from_callable,
    h1_norm,
    make_grid,
    zero_field,
)
from kirchhoff.solvers import (
    DivergenceError,
    SolveResult,
    SolverConfig,
    UnboundedEnergyError,
    apriori_bound,
    apriori_check,
    fixed_point_solve,
    minimize,
    multistart_search,
    uniqueness_probe,
)


def ones_datum(grid, value=1.0):
    return field_from_callable(grid, lambda r: np.full_like(r, value), dirichlet=False)


@pytest.fixture
def poisson_setup(grid4, params_convex):
    return grid4, params_convex, PerturbationSpec(h=ones_datum(grid4))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(armijo_c1=1.5)
    with pytest.raises(ValueError):
        SolverConfig(backtrack=1.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)


def test_zero_is_critical_for_pure_problem(grid4, params_convex):
    result = minimize(params_convex, grid4)
    assert result.converged
    assert result.iterations == 0
    assert result.residual == 0.0
    assert h1_norm(result.field) == 0.0


def test_descent_fixed_point_agreement(poisson_setup):
    grid, params, pert = poisson_setup
    r1 = minimize(params, grid, pert=pert)
    r2 = fixed_point_solve(params, grid, pert=pert)
    assert r1.converged and r2.converged
    diff = r1.field.values - r2.field.values
    dist = np.sqrt(np.dot(grid.stiffness_coeff, np.diff(diff) ** 2))
    assert dist <= 1e-5


@pytest.mark.parametrize("d", [5, 6])
def test_methods_agree_other_dimensions(d):
    grid = make_grid(d, 1.0, 80)
    key_above_c = 1.5 * sharp_constants(d).C_d
    params = KirchhoffParams(1.0, key_above_c)  # a = 1: key = b
    pert = PerturbationSpec(h=ones_datum(grid))
    r1 = minimize(params, grid, pert=pert)
    r2 = fixed_point_solve(params, grid, pert=pert)
    assert r1.converged and r2.converged
    diff = r1.field.values - r2.field.values
    dist = np.sqrt(np.dot(grid.stiffness_coeff, np.diff(diff) ** 2))
    assert dist <= 1e-5
    assert h1_norm(r1.field) > 0.01


def test_descent_monotone_energy(poisson_setup):
    grid, params, pert = poisson_setup
    r = minimize(params, grid, pert=pert)
    trace = np.asarray(r.energy_trace)
    assert np.all(np.diff(trace) < 0)


def test_converged_solution_annihilates_directions(poisson_setup, rng):
    grid, params, pert = poisson_setup
    cfg = SolverConfig()
    r = minimize(params, grid, pert=pert, cfg=cfg)
    assert r.residual <= cfg.tol
    F = dual_gradient(r.field, params, pert)
    for _ in range(20):
        v = random_field(grid, rng)
        assert abs(float(np.dot(F, v.free))) <= cfg.tol * h1_norm(v) * (1 + 1e-9)


def test_start_grid_mismatch(params_convex, grid4):
    other = make_grid(4, 1.0, 50)
    with pytest.raises(ValueError):
        minimize(params_convex, grid4, start=zero_field(other))


def test_regime_warning_below_lsc_threshold(grid4):
    params = KirchhoffParams(1.0, 0.004)
    with pytest.warns(UserWarning, match="lower semicontinuous"):
        minimize(params, grid4)


def test_unbounded_below_abort():
    grid = make_grid(4, 1.0, 150, spacing="graded", ratio=1.05)
    params = KirchhoffParams(1.0, 0.005)
    ratio, bubble = discrete_sobolev_ratio(grid, return_field=True)
    direction = bubble.with_values(bubble.values / h1_norm(bubble))
    t_neg = 2.0 * np.sqrt(2.0 * params.a / (1.0 / ratio**2 - params.b))
    start = direction.with_values(t_neg * direction.values)
    assert energy(start, params).total < 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(UnboundedEnergyError) as err:
            minimize(params, grid, start=start)
    assert err.value.report is not None
    assert not err.value.report.swlsc


def test_fixed_point_trivial_without_datum(grid4, params_convex):
    r = fixed_point_solve(params_convex, grid4)
    assert r.converged
    assert r.iterations == 1
    assert h1_norm(r.field) == 0.0


def test_fixed_point_rejects_other_perturbations(grid4, params_convex):
    with pytest.raises(ValueError):
        fixed_point_solve(params_convex, grid4, pert=PerturbationSpec(lam=1.0, p=3.0))


def test_fixed_point_monotone_datum(grid4, params_convex):
    r1 = fixed_point_solve(params_convex, grid4,
                           pert=PerturbationSpec(h=ones_datum(grid4, 1.0)))
    r2 = fixed_point_solve(params_convex, grid4,
                           pert=PerturbationSpec(h=ones_datum(grid4, 2.0)))
    assert r1.converged and r2.converged
    # comparison run (reported, not a theorem): larger datum, larger state
    assert h1_norm(r2.field) > h1_norm(r1.field)


def test_uniqueness_probe_strictly_convex(poisson_setup):
    grid, params, pert = poisson_setup
    report = uniqueness_probe(params, grid, pert=pert)
    assert report.uniqueness_asserted
    assert report.spread <= 1e-5 * (1.0 + report.reference_norm)


def test_uniqueness_probe_d5(rng):
    grid = make_grid(5, 1.0, 60)
    key = 2.0 * sharp_constants(5).C_d
    params = KirchhoffParams(1.0, key)  # a = 1 so key = b
    pert = PerturbationSpec(h=ones_datum(grid))
    report = uniqueness_probe(params, grid, pert=pert, cfg=SolverConfig(starts=4))
    assert report.uniqueness_asserted
    assert report.spread <= 1e-5 * (1.0 + report.reference_norm)


def test_uniqueness_probe_subconvex_runs_without_assertion(grid4):
    params = KirchhoffParams(1.0, 0.1)  # between PS_4 and C_4
    pert = PerturbationSpec(h=ones_datum(grid4))
    report = uniqueness_probe(params, grid4, pert=pert, cfg=SolverConfig(starts=4))
    assert not report.uniqueness_asserted
    assert report.regime.palais_smale and not report.regime.strictly_convex


def test_apriori_bound_example(grid4):
    # d=4, a=1, b=0.1, lambda=5, p=3, R=1
    params = KirchhoffParams(1.0, 0.1)
    S = sobolev_constant(4)
    expected = (
        5.0 * S**0.5 * (np.pi**2 / 2) ** 0.25 / (0.1 * S**2 - 1.0)
    )
    assert apriori_bound(params, 5.0, 3.0, grid4) == pytest.approx(expected, rel=1e-12)


def test_apriori_bound_validation(grid4):
    with pytest.raises(ValueError):
        apriori_bound(KirchhoffParams(1.0, 0.01), 5.0, 3.0, grid4)  # b S^2 < 1
    with pytest.raises(ValueError):
        apriori_bound(KirchhoffParams(1.0, 0.1), 5.0, 4.5, grid4)
    with pytest.raises(ValueError):
        apriori_bound(KirchhoffParams(1.0, 0.1), 0.0, 3.0, grid4)
    grid5 = make_grid(5, 1.0, 30)
    with pytest.raises(ValueError):
        apriori_bound(KirchhoffParams(1.0, 0.1), 5.0, 3.0, grid5)


def test_apriori_trivial_solution_satisfies(grid4):
    params = KirchhoffParams(1.0, 0.1)
    result = minimize(params, grid4, pert=PerturbationSpec(lam=5.0, p=3.0))
    assert result.converged
    bound, ok = apriori_check(result, params, 5.0, 3.0)
    assert ok and bound > 0


def test_apriori_decay_with_lambda(grid4):
    # the bound forces the branch norm to zero as lambda -> 0
    params = KirchhoffParams(1.0, 0.1)
    bounds = [apriori_bound(params, lam, 3.0, grid4) for lam in (2.0, 1.0, 0.5, 0.25)]
    assert all(b1 > b2 for b1, b2 in zip(bounds, bounds[1:]))
    start = None
    norms = []
    for lam in (2.0, 1.0, 0.5, 0.25):
        r = minimize(params, grid4, pert=PerturbationSpec(lam=lam, p=3.0), start=start)
        assert r.converged
        norms.append(h1_norm(r.field))
        bound, ok = apriori_check(r, params, lam, 3.0)
        assert ok
        start = r.field
    assert all(n <= b * (1 + 1e-6) for n, b in zip(norms, bounds))


def test_mesh_refinement_stability(params_convex):
    g1 = make_grid(4, 1.0, 200)
    g2 = make_grid(4, 1.0, 400)
    r1 = minimize(params_convex, g1, pert=PerturbationSpec(h=ones_datum(g1)))
    r2 = minimize(params_convex, g2, pert=PerturbationSpec(h=ones_datum(g2)))
    n1, n2 = h1_norm(r1.field), h1_norm(r2.field)
    assert abs(n2 - n1) / n1 < 0.02


def test_multistart_trivial_config(grid4, params_convex):
    results = multistart_search(params_convex, grid4, cfg=SolverConfig(starts=4))
    assert len(results) == 1
    assert h1_norm(results[0].field) == 0.0
    assert results[0].residual == 0.0


def test_multistart_finds_two_critical_points(grid4, params_convex):
    # above the quotient threshold the zero state and a deep minimum coexist
    pert = PerturbationSpec(lam=500.0, p=3.0)
    cfg = SolverConfig(starts=6, tol=1e-8)
    results = multistart_search(params_convex, grid4, pert=pert, cfg=cfg)
    assert len(results) >= 2
    for r in results:
        assert r.residual <= 1e-8
    norms = sorted(h1_norm(r.field) for r in results)
    assert norms[0] == 0.0
    assert norms[-1] > 1.0


def test_multistart_deterministic_for_fixed_seed(params_convex):
    grid = make_grid(4, 1.0, 48)
    pert = PerturbationSpec(lam=300.0, p=3.0)
    cfg = SolverConfig(starts=4, seed=99)
    first = multistart_search(params_convex, grid, pert=pert, cfg=cfg)
    second = multistart_search(params_convex, grid, pert=pert, cfg=cfg)
    assert len(first) == len(second)
    for a, b in zip(first, second):
        assert np.array_equal(a.field.values, b.field.values)
        assert a.residual == b.residual


def test_solve_result_round_trip(poisson_setup):
    grid, params, pert = poisson_setup
    r = minimize(params, grid, pert=pert)
    assert SolveResult.from_dict(r.to_dict()) == r


def test_divergence_guard(grid4):
    # gigantic datum blows the Picard iterate through the trust region
    params = KirchhoffParams(1e-8, 1e-8)
    huge = ones_datum(grid4, 1e9)
    with pytest.raises((DivergenceError, RuntimeError)):
        fixed_point_solve(params, grid4, pert=PerturbationSpec(h=huge),
                          cfg=SolverConfig(max_iter=200))
