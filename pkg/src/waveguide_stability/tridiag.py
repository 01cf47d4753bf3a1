"""Batched Thomas algorithm for tridiagonal systems with a reusable factorisation."""

import numpy as np


class TridiagonalFactor:
    """LU factors of ``m`` independent ``n x n`` tridiagonal systems.

    Parameters
    ----------
    lower, diag, upper : array_like
        ``diag`` has shape ``(n, m)`` (one column per system) or ``(n,)``.
        ``lower``/``upper`` hold the sub/super diagonals and broadcast to
        ``(n - 1, m)``; scalars are accepted for constant off-diagonals.

    No pivoting is done; the systems built in this package are (complex)
    diagonally dominant or symmetric positive definite.
    """

    def __init__(self, lower, diag, upper):
        diag = np.asarray(diag)
        if diag.ndim == 1:
            diag = diag[:, None]
        n, m = diag.shape
        dtype = np.result_type(diag, np.asarray(lower), np.asarray(upper))
        lower = np.broadcast_to(np.asarray(lower, dtype=dtype), (n - 1, m))
        upper = np.broadcast_to(np.asarray(upper, dtype=dtype), (n - 1, m))
        denom = np.empty((n, m), dtype=dtype)
        cprime = np.empty((n - 1, m), dtype=dtype)
        denom[0] = diag[0]
        for i in range(n - 1):
            cprime[i] = upper[i] / denom[i]
            denom[i + 1] = diag[i + 1] - lower[i] * cprime[i]
        if np.any(denom == 0):
            raise ZeroDivisionError("singular tridiagonal system (zero pivot)")
        self.n, self.m = n, m
        self._lower = lower
        self._cprime = cprime
        self._inv_denom = 1.0 / denom
        self.min_pivot = float(np.min(np.abs(denom)))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for a right-hand side of shape ``(n, m)`` (or ``(n,)`` when ``m == 1``)."""
        squeeze = rhs.ndim == 1
        d = rhs[:, None] if squeeze else rhs
        dtype = np.result_type(d, self._inv_denom)
        y = np.empty(d.shape, dtype=dtype)
        y[0] = d[0] * self._inv_denom[0]
        for i in range(1, self.n):
            y[i] = (d[i] - self._lower[i - 1] * y[i - 1]) * self._inv_denom[i]
        for i in range(self.n - 2, -1, -1):
            y[i] -= self._cprime[i] * y[i + 1]
        return y[:, 0] if squeeze else y


def solve_tridiagonal(lower, diag, upper, rhs):
    """One-shot batched tridiagonal solve."""
    return TridiagonalFactor(lower, diag, upper).solve(np.asarray(rhs))
