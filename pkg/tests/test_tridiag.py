import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import solve_banded

from waveguide_stability.tridiag import TridiagonalFactor, solve_tridiagonal


@given(st.integers(3, 40), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_batched_thomas_matches_banded_solver(n, m, seed):
    rng = np.random.default_rng(seed)
    lower = rng.standard_normal((n - 1, m)) + 1j * rng.standard_normal((n - 1, m))
    upper = rng.standard_normal((n - 1, m))
    diag = 4.0 + np.abs(lower).max() + np.abs(upper).max() + rng.random((n, m))
    rhs = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    x = solve_tridiagonal(lower, diag, upper, rhs)
    for j in range(m):
        ab = np.zeros((3, n), dtype=complex)
        ab[0, 1:] = upper[:, j]
        ab[1] = diag[:, j]
        ab[2, :-1] = lower[:, j]
        assert np.allclose(x[:, j], solve_banded((1, 1), ab, rhs[:, j]), atol=1e-12)


def test_scalar_off_diagonals_and_vector_rhs():
    n = 10
    f = TridiagonalFactor(-1.0, np.full(n, 2.0), -1.0)
    A = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    b = np.arange(n, dtype=float)
    assert np.allclose(A @ f.solve(b), b)


def test_zero_pivot_raises():
    with pytest.raises(ZeroDivisionError):
        TridiagonalFactor(1.0, np.array([1.0, 1.0]), 1.0)
