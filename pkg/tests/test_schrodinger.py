import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from waveguide_stability.admissible import FactoryParams, PerturbationParams, build_pair, make_perturbation
from waveguide_stability.geometry import CrossSection, CylinderGrid, GridFunction, second_difference
from waveguide_stability.schrodinger import (CrankNicolson, NumericalFailure, TimeAffine, boundary_data,
                                             build_source, evolve, manufactured_convergence,
                                             neumann_trace, sigma_norm, solve_direct,
                                             step_crank_nicolson)

D2_8 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])


@pytest.fixture
def lab_grid():
    return CylinderGrid(CrossSection(0.0, 1.0, 17, (1.0,)), half_length=8.0, n_axial=64, T=1.0, n_time=32)


def _bump_rho(grid, amp=0.1, shape="sin2"):
    return make_perturbation(PerturbationParams(shape=shape), grid, amp).values.real


def test_time_affine_evaluation():
    f = TimeAffine(np.array([1.0, 2.0]), np.array([3.0, -1.0]))
    assert np.allclose(f(0.5), [2.5, 1.5])


def test_boundary_data_slope_vanishes_for_stationary_pair(lab_grid):
    bd = boundary_data(build_pair(FactoryParams(), lab_grid))
    assert not np.any(bd.G0.slope)
    assert np.array_equal(bd.trace(0.7, 1.0), bd.G0.const[-1])


def test_source_vanishes_in_stationary_case(lab_grid):
    pair = build_pair(FactoryParams(), lab_grid)
    f = build_source(pair.q0, pair)
    assert not np.any(f.const) and not np.any(f.slope)


def test_source_for_unperturbed_generic_pair(lab_grid):
    pair = build_pair(FactoryParams(interior="bump"), lab_grid)
    f = build_source(pair.q0, pair)
    assert not np.any(f.const)
    assert np.allclose(f(0.3), 0.3j * pair.l2u0)


def test_source_at_time_zero_is_minus_rho_u0(lab_grid):
    pair = build_pair(FactoryParams(), lab_grid)
    rho = _bump_rho(lab_grid)
    f = build_source(pair.q0.values.real + rho, pair)
    assert np.allclose(f(0.0), -rho * pair.u0.values.real, rtol=0, atol=1e-15)


def test_source_factored_form_matches_definition(target_grid):
    # definition: i G0' + (Laplace - q) G0 by stencils applied to G0 itself
    g = target_grid
    pair = build_pair(FactoryParams(interior="bump"), g)
    rho = _bump_rho(g)
    q = pair.q0.values.real + rho
    t = 0.6
    G0 = pair.u0.values + 1j * t * pair.lu0
    lap = second_difference(G0, g.hx)[:, 4:-4] + sum(c * G0[:, k:g.n_axial - 8 + k] for k, c in enumerate(D2_8)) / g.hn**2
    definition = 1j * (1j * pair.lu0[:, 4:-4]) + lap - q[:, 4:-4] * G0[:, 4:-4]
    factored = build_source(q, pair)(t)[:, 4:-4]
    # same x' stencil on both sides; the gap is the axial stencil and rounding
    assert np.abs(definition - factored)[1:-1].max() < 1e-9 * np.abs(factored).max()


def test_cn_zero_state_stays_zero(lab_grid):
    pair = build_pair(FactoryParams(), lab_grid)
    v = step_crank_nicolson(np.zeros(lab_grid.shape), None, pair.q0, lab_grid.dt, lab_grid)
    assert not np.any(v)


@given(st.integers(0, 2**32 - 1))
def test_cn_step_conserves_norm(seed):
    g = CylinderGrid(CrossSection(0.0, 1.0, 17), half_length=8.0, n_axial=32, n_time=16)
    rng = np.random.default_rng(seed)
    v = np.zeros(g.shape, dtype=complex)
    v[1:-1] = rng.standard_normal((15, 32)) + 1j * rng.standard_normal((15, 32))
    X, Y = g.mesh()
    q = 1.0 + np.cos(np.pi * X) * np.exp(-(Y**2))
    w = step_crank_nicolson(v, None, q, g.dt, g)
    assert np.all(w[[0, -1]] == 0)
    assert g.l2_norm(w) == pytest.approx(g.l2_norm(v), rel=1e-12)


def test_defect_correction_refuses_large_spread(lab_grid):
    X, Y = lab_grid.mesh()
    with pytest.raises(NumericalFailure) as info:
        CrankNicolson(lab_grid, 1e4 * np.cos(np.pi * X), 0.1)
    assert info.value.diagnostics["contraction"] >= 0.5


def test_manufactured_solution_second_order():
    rows = manufactured_convergence(levels=3)
    assert all(r["order"] > 1.9 for r in rows[1:])


def test_evolve_callback_and_source_free_run(lab_grid):
    seen = []
    v = evolve(lab_grid, 0.0, None, None, callback=lambda m, t, v: seen.append(m))
    assert seen == list(range(lab_grid.n_time + 1)) and not np.any(v)


def test_solve_direct_preconditions(lab_grid):
    pair = build_pair(FactoryParams(), lab_grid)
    with pytest.raises(ValueError):
        solve_direct(pair, n_time=8)
    with pytest.raises(ValueError):
        solve_direct(pair, store="everything")
    q = pair.q0.values.real.copy()
    q[0] += 0.1
    with pytest.raises(ValueError, match="lateral boundary"):
        solve_direct(pair, q)


def test_stationary_solution(lab_grid):
    pair = build_pair(FactoryParams(), lab_grid)
    sol = solve_direct(pair)
    assert np.abs(sol.u - pair.u0.values).max() == 0.0
    assert not np.any(sol.up)
    assert not np.any(sol.neumann[1.0])


def test_initial_and_boundary_values_exact(lab_grid):
    pair = build_pair(FactoryParams(interior="bump"), lab_grid)
    q = pair.q0.values.real + _bump_rho(lab_grid)
    sol = solve_direct(pair, q)
    bd = boundary_data(pair)
    assert np.array_equal(sol.u[0], pair.u0.values)
    for m, t in enumerate(sol.times):
        assert np.array_equal(sol.u[m, -1], bd.trace(t, 1.0))
        assert np.array_equal(sol.u[m, 0], bd.trace(t, 0.0))


def test_initial_time_derivative_from_pde(lab_grid):
    pair = build_pair(FactoryParams(), lab_grid)
    rho = _bump_rho(lab_grid)
    sol = solve_direct(pair, pair.q0.values.real + rho, store="traces")
    assert np.allclose(sol.up0, -1j * rho * pair.u0.values.real, atol=1e-15)


def test_traces_mode_matches_full_mode(lab_grid):
    pair = build_pair(FactoryParams(), lab_grid)
    q = pair.q0.values.real + _bump_rho(lab_grid)
    a = solve_direct(pair, q, store="full")
    b = solve_direct(pair, q, store="traces")
    assert a.u is not None and b.u is None
    assert np.array_equal(a.neumann[1.0], b.neumann[1.0])
    assert np.array_equal(a.up_energy, b.up_energy)


def test_neumann_trace_rejects_side_outside_gamma_star(lab_grid):
    w = GridFunction.zeros(lab_grid)
    with pytest.raises(ValueError):
        neumann_trace(w, 0.0)
    assert not np.any(neumann_trace(w, 1.0))


def test_neumann_trace_of_sine():
    g = CylinderGrid(CrossSection(0.0, 1.0, 129, (1.0,)), half_length=8.0, n_axial=32)
    w = GridFunction.from_callable(lambda x, y: np.sin(np.pi * x) * np.exp(-(y**2)), g)
    assert np.abs(neumann_trace(w, 1.0) + np.pi * np.exp(-(g.xn**2))).max() < 1e-3


def test_sigma_norm_of_constant_trace(lab_grid):
    tr = np.ones((lab_grid.n_time + 1, lab_grid.n_axial))
    assert sigma_norm(tr, lab_grid) == pytest.approx(np.sqrt(lab_grid.T * 2 * lab_grid.half_length))


def test_uprime_time_difference_second_order():
    errs = []
    for nt in (512, 1024):
        g = CylinderGrid(CrossSection(0.0, 1.0, 17, (1.0,)), half_length=8.0, n_axial=64, n_time=nt)
        pair = build_pair(FactoryParams(), g)
        sol = solve_direct(pair, pair.q0.values.real + _bump_rho(g, 0.1, "sin6"), store="traces")
        errs.append(sol.diagnostics["uprime_time_diff"])
    assert np.log2(errs[0] / errs[1]) > 1.8


def test_sup_norm_and_regularity_ratio_stable_under_refinement():
    sups, ratios = [], []
    for n, nt in ((17, 32), (33, 64), (65, 128)):
        g = CylinderGrid(CrossSection(0.0, 1.0, n, (1.0,)), half_length=8.0, n_axial=64, n_time=nt)
        pair = build_pair(FactoryParams(), g)
        d = solve_direct(pair, pair.q0.values.real + _bump_rho(g, 0.3), store="traces").diagnostics
        sups.append(d["max_sup_u"])
        ratios.append(d["regularity_ratio"])
    assert max(sups) / min(sups) < 1.01
    assert max(ratios) / min(ratios) < 1.05
