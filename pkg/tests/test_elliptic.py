import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from waveguide_stability.elliptic import (boundary_traces, dirichlet_matrix_2d, domain_trace_check,
                                          extrapolation_weights, manufactured_convergence,
                                          regularity_ratio, resolvent_bound_report, solve_dirichlet)
from waveguide_stability.geometry import CrossSection, CylinderGrid, GridFunction


@pytest.fixture
def tiny_grid():
    return CylinderGrid(CrossSection(0.0, 1.0, 9), half_length=4.0, n_axial=16)


def test_fibered_solve_matches_dense_matrix(tiny_grid):
    g = tiny_grid
    rng = np.random.default_rng(3)
    phi = rng.standard_normal(g.shape)
    v = solve_dirichlet(GridFunction(phi, g)).values
    dense = np.linalg.solve(dirichlet_matrix_2d(g), phi[1:-1].ravel()).reshape(g.shape[0] - 2, -1)
    assert np.allclose(v[1:-1], dense, atol=1e-12)
    assert np.all(v[[0, -1]] == 0)


def test_zero_rhs_gives_zero(tiny_grid):
    assert np.all(solve_dirichlet(GridFunction.zeros(tiny_grid)).values == 0)


def test_manufactured_solution_second_order():
    rows = manufactured_convergence(levels=3)
    assert all(r["order"] > 1.95 for r in rows[1:])


@given(st.integers(0, 2**32 - 1))
def test_resolvent_bound_random(seed):
    g = CylinderGrid(CrossSection(0.0, 1.0, 17), half_length=8.0, n_axial=32)
    rng = np.random.default_rng(seed)
    rows = resolvent_bound_report(GridFunction(rng.standard_normal(g.shape), g))
    assert all(r.ok for r in rows)
    assert [r.p for r in rows] == sorted(r.p for r in rows)


def test_resolvent_bound_is_attained_by_ground_state():
    # phi = ground state of the discrete Dirichlet Laplacian at p = 0 attains the bound
    g = CylinderGrid(CrossSection(0.0, 1.0, 33), half_length=8.0, n_axial=32)
    x = g.xp
    phi = np.zeros(g.shape)
    phi[:, 0] = np.sin(np.pi * x)
    row = [r for r in resolvent_bound_report(GridFunction(phi, g)) if r.p == 0.0][0]
    assert row.ratio == pytest.approx(row.bound, rel=1e-10)


def test_resolvent_report_rejects_zero(tiny_grid):
    with pytest.raises(ValueError):
        resolvent_bound_report(GridFunction.zeros(tiny_grid))


def test_extrapolation_weights_exact_for_polynomials():
    w = extrapolation_weights(8)
    idx = np.arange(1, 10)
    for d in range(9):
        assert np.dot(w, idx.astype(float) ** d) == pytest.approx(0.0 ** d, abs=1e-9)


def test_boundary_traces_of_smooth_field():
    x = np.linspace(0, 1, 65)
    f = np.cos(x)[:, None] * np.ones((1, 3))
    left, right = boundary_traces(f)
    f_int = f.copy()
    f_int[[0, -1]] = 99.0
    left2, right2 = boundary_traces(f_int)
    assert np.allclose(left, 1.0) and np.allclose(right, np.cos(1.0))
    assert np.allclose(left, left2) and np.allclose(right, right2)


def test_domain_trace_check_members_and_failures():
    g = CylinderGrid(CrossSection(0.0, 1.0, 64), half_length=8.0, n_axial=64)
    X, Y = g.mesh()
    h = np.exp(-(Y**2))
    assert domain_trace_check(GridFunction(np.sin(np.pi * X) * h, g), k=2).member
    para = domain_trace_check(GridFunction(X * (1 - X) * h, g), k=2)
    assert not para.member and para.first_failure == 1
    assert para.traces[1] == pytest.approx(2.0, rel=1e-6)
    assert domain_trace_check(GridFunction(X * (1 - X) * h, g), k=1).member
    shifted = domain_trace_check(GridFunction(np.cos(np.pi * X) * h, g), k=2)
    assert shifted.first_failure == 0
    with pytest.raises(ValueError):
        domain_trace_check(GridFunction(h, g), k=3)


def test_regularity_ratio_stable_under_refinement():
    ratios = []
    for n in (17, 33, 65):
        g = CylinderGrid(CrossSection(0.0, 1.0, n), half_length=8.0, n_axial=64)
        X, Y = g.mesh()
        ratios.append(regularity_ratio(GridFunction(np.exp(-((X - 0.5) ** 2) * 10 - Y**2), g)))
    assert max(ratios) / min(ratios) < 1.1
