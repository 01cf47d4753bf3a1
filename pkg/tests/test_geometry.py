import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from waveguide_stability.geometry import (CrossSection, CylinderGrid, GridFunction, axial_fourier,
                                          fourier_l2_norm, h_norm, inverse_axial_fourier, japanese,
                                          poincare_constant, second_difference, sup_embedding_study)


def test_cross_section_validation():
    with pytest.raises(ValueError):
        CrossSection(1.0, 0.0)
    with pytest.raises(ValueError):
        CrossSection(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        CrossSection(0.0, 1.0, 16, (0.5,))


def test_cross_section_basics():
    cs = CrossSection(0.0, 2.0, 11, (2.0,))
    assert cs.h == pytest.approx(0.2)
    assert cs.weights.sum() == pytest.approx(2.0)
    assert cs.normal(0.0) == -1.0 and cs.normal(2.0) == 1.0
    assert cs.endpoint_index(2.0) == 10


@pytest.mark.parametrize("n,length", [(17, 1.0), (64, 1.0), (33, 2.5)])
def test_poincare_matches_discrete_closed_form(n, length):
    # lowest Dirichlet eigenvalue of the 3-point Laplacian: (4/h^2) sin^2(pi h / (2 length))
    cs = CrossSection(0.0, length, n)
    h = length / (n - 1)
    assert poincare_constant(cs) == pytest.approx(4 / h**2 * math.sin(math.pi * h / (2 * length)) ** 2, rel=1e-12)


def test_poincare_converges_to_pi_squared():
    vals = [CrossSection(0.0, 1.0, n).poincare for n in (17, 33, 65, 129)]
    errs = [abs(v - math.pi**2) for v in vals]
    for e0, e1 in zip(errs, errs[1:]):
        assert e0 / e1 > 3.8


def test_grid_shapes_and_frequencies(small_grid):
    g = small_grid
    assert g.shape == (33, 128)
    assert g.hn == pytest.approx(32.0 / 128)
    assert g.xn[0] == -16.0
    assert g.times[-1] == pytest.approx(1.0)
    assert g.dp == pytest.approx(2 * math.pi / 32.0)


def test_truncation_check():
    g = CylinderGrid(CrossSection(), half_length=2.0, n_axial=64)
    assert not g.truncation_ok(1.0, 2.0)
    with pytest.raises(ValueError):
        g.check_truncation(1.0, 2.0)
    assert CylinderGrid(CrossSection()).truncation_ok(1.0, 2.0)


def test_second_difference_exact_on_cubics():
    x = np.linspace(0, 1, 21)
    f = 1 + 2 * x - 3 * x**2 + 0.5 * x**3
    assert np.allclose(second_difference(f, x[1] - x[0]), -6 + 3 * x, atol=1e-9)


def test_spectral_axial_derivative(small_grid):
    g = small_grid
    X, Y = g.mesh()
    f = np.exp(-(Y**2))
    assert np.abs(g.dxn(f, 1) - (-2 * Y * f)).max() < 1e-10
    assert np.abs(g.dxn(f, 2) - (4 * Y**2 - 2) * f).max() < 1e-10


def test_normal_derivative_second_order():
    errs = []
    for n in (17, 33, 65):
        g = CylinderGrid(CrossSection(0.0, 1.0, n, (1.0,)), half_length=8.0, n_axial=32)
        X, Y = g.mesh()
        h = np.exp(-(Y**2))
        w = np.sin(np.pi * X) * h
        errs.append(np.abs(g.normal_derivative(w, 1.0) - (-np.pi * h[-1])).max())
        assert np.abs(g.normal_derivative((X - 1) ** 2 * h, 1.0)).max() < 1e-12
        assert np.abs(g.normal_derivative(np.zeros_like(w), 0.0)).max() == 0.0
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_grid_function_rejects_bad_input(small_grid):
    with pytest.raises(ValueError):
        GridFunction(np.zeros((3, 3)), small_grid)
    bad = np.zeros(small_grid.shape)
    bad[1, 1] = np.nan
    with pytest.raises(ValueError):
        GridFunction(bad, small_grid)


def test_grid_function_is_read_only(small_grid):
    w = GridFunction.zeros(small_grid)
    with pytest.raises(ValueError):
        w.values[0, 0] = 1.0


@given(st.integers(0, 2**32 - 1))
def test_axial_fourier_parseval_and_inverse(seed):
    g = CylinderGrid(CrossSection(0.0, 1.0, 9), half_length=4.0, n_axial=32)
    rng = np.random.default_rng(seed)
    w = GridFunction(rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape), g)
    hat = axial_fourier(w)
    assert fourier_l2_norm(hat, g) == pytest.approx(w.norm(0), rel=1e-12)
    assert np.allclose(inverse_axial_fourier(hat, g).values, w.values, atol=1e-12)


def test_axial_fourier_of_gaussian(small_grid):
    # (2 pi)^(-1/2) int exp(-x^2) exp(-i p x) dx = exp(-p^2/4) / sqrt(2)
    g = small_grid
    w = GridFunction.from_callable(lambda x, y: np.exp(-(y**2)) + 0 * x, g)
    hat = axial_fourier(w)[5]
    assert np.abs(hat - np.exp(-g.frequencies**2 / 4) / math.sqrt(2)).max() < 1e-12


def test_h_norm_of_separable_function():
    # ||sin(pi x) exp(-y^2)||_0^2 = (1/2) sqrt(pi/2) on (0,1) x R
    g = CylinderGrid(CrossSection(0.0, 1.0, 257), half_length=8.0, n_axial=128)
    w = GridFunction.from_callable(lambda x, y: np.sin(np.pi * x) * np.exp(-(y**2)), g)
    assert h_norm(w, 0) ** 2 == pytest.approx(0.5 * math.sqrt(math.pi / 2), rel=1e-9)
    assert h_norm(w, 1) > h_norm(w, 0)
    with pytest.raises(ValueError):
        h_norm(w, 4)


def test_japanese_bracket():
    assert japanese(0.0) == 1.0
    assert japanese(np.array([3.0]))[0] == pytest.approx(math.sqrt(10.0))


def test_embedding_study_rejects_low_order():
    with pytest.raises(ValueError):
        sup_embedding_study(k=1)


def test_embedding_ratio_bounded():
    rows = sup_embedding_study(levels=2)
    assert all(0 < r["ratio"] < 1 for r in rows)
