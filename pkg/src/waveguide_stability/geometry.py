"""Truncated cylinder grids, discrete norms, axial Fourier transform and stencils.

The cylinder is ``omega x (-L, L)`` with ``omega = (a, b)`` an interval.  The
cross-section is discretised with ``n`` nodes including both endpoints and
second-order finite differences; the axis uses ``m`` periodic nodes
``x_n = -L + j * 2L/m`` and spectral (FFT) differentiation.  Fields are
complex arrays indexed ``[x'-node, x_n-node]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

__all__ = [
    "CrossSection",
    "CylinderGrid",
    "GridFunction",
    "poincare_constant",
    "axial_fourier",
    "inverse_axial_fourier",
    "h_norm",
    "sup_embedding_study",
    "japanese",
]

MAX_NORM_ORDER = 3


def japanese(x):
    """Return ``<x> = (1 + x**2) ** 0.5``."""
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


@dataclass(frozen=True)
class CrossSection:
    """The interval ``omega = (a, b)`` sampled at ``n_nodes`` points (endpoints included)."""

    a: float = 0.0
    b: float = 1.0
    n_nodes: int = 64
    gamma_star: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"cross-section needs a < b, got a={self.a}, b={self.b}")
        if self.n_nodes < 8:
            raise ValueError(f"cross-section mesh too coarse: n_nodes={self.n_nodes} < 8")
        for g in self.gamma_star:
            if g not in (self.a, self.b):
                raise ValueError(f"gamma_star point {g} is not an endpoint of ({self.a}, {self.b})")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def h(self) -> float:
        return self.length / (self.n_nodes - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n_nodes)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights on the nodes."""
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def normal(self, endpoint: float) -> float:
        """Outward unit normal at an endpoint."""
        if endpoint == self.a:
            return -1.0
        if endpoint == self.b:
            return 1.0
        raise ValueError(f"{endpoint} is not an endpoint of ({self.a}, {self.b})")

    def endpoint_index(self, endpoint: float) -> int:
        self.normal(endpoint)
        return 0 if endpoint == self.a else self.n_nodes - 1

    @cached_property
    def poincare(self) -> float:
        return poincare_constant(self)

    def refined(self, factor: int = 2) -> "CrossSection":
        return CrossSection(self.a, self.b, factor * (self.n_nodes - 1) + 1, self.gamma_star)


def poincare_constant(cs: CrossSection) -> float:
    """Smallest eigenvalue of the discrete Dirichlet operator ``-d^2/dx'^2`` on ``cs``.

    Converges at second order to ``pi**2 / (b - a)**2``.
    """
    n_int = cs.n_nodes - 2
    d = np.full(n_int, 2.0 / cs.h**2)
    e = np.full(n_int - 1, -1.0 / cs.h**2)
    return float(eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 0))[0])


@dataclass(frozen=True)
class CylinderGrid:
    """Tensor grid on ``omega x (-L, L)`` plus a uniform time grid on ``[0, T]``."""

    cross_section: CrossSection = field(default_factory=CrossSection)
    half_length: float = 16.0
    n_axial: int = 512
    T: float = 1.0
    n_time: int = 256
    truncation_tol: float = 1e-12

    def __post_init__(self):
        if self.half_length <= 0:
            raise ValueError("half_length must be positive")
        if self.n_axial < 8 or self.n_axial % 2:
            raise ValueError(f"n_axial must be even and >= 8, got {self.n_axial}")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.n_time < 1:
            raise ValueError("n_time must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.cross_section.n_nodes, self.n_axial)

    @property
    def hx(self) -> float:
        return self.cross_section.h

    @property
    def hn(self) -> float:
        return 2.0 * self.half_length / self.n_axial

    @property
    def dt(self) -> float:
        return self.T / self.n_time

    @cached_property
    def xp(self) -> np.ndarray:
        return self.cross_section.nodes

    @cached_property
    def xn(self) -> np.ndarray:
        return -self.half_length + self.hn * np.arange(self.n_axial)

    @cached_property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_time + 1)

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Discrete dual frequencies of the axial nodes (FFT ordering)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_axial, d=self.hn)

    @property
    def dp(self) -> float:
        return 2.0 * np.pi / (self.n_axial * self.hn)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xp, self.xn, indexing="ij")

    def truncation_ok(self, b: float, d_eps: float) -> bool:
        return math.exp(-b * math.sqrt(1.0 + self.half_length**2) ** d_eps) < self.truncation_tol

    def check_truncation(self, b: float, d_eps: float) -> None:
        """Raise unless the decay envelope is below ``truncation_tol`` at ``x_n = L``."""
        if not self.truncation_ok(b, d_eps):
            env = math.exp(-b * math.sqrt(1.0 + self.half_length**2) ** d_eps)
            raise ValueError(
                f"half_length={self.half_length} too short: envelope {env:.3e} "
                f">= truncation_tol {self.truncation_tol:.1e}"
            )

    def with_(self, **changes) -> "CylinderGrid":
        from dataclasses import replace

        return replace(self, **changes)

    def refined(self, space: bool = True, time: bool = True, axial: bool = False) -> "CylinderGrid":
        return self.with_(
            cross_section=self.cross_section.refined() if space else self.cross_section,
            n_axial=2 * self.n_axial if axial else self.n_axial,
            n_time=2 * self.n_time if time else self.n_time,
        )

    # -- quadrature -------------------------------------------------------

    def l2_norm(self, values: np.ndarray) -> float:
        """Discrete L2 norm over the truncated cylinder (trapezoid x uniform)."""
        w = self.cross_section.weights[:, None] * self.hn
        return float(np.sqrt(np.sum(w * np.abs(values) ** 2)))

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        w = self.cross_section.weights[:, None] * self.hn
        return complex(np.sum(w * u * np.conj(v)))

    def fiber_norms(self, hat: np.ndarray) -> np.ndarray:
        """L2(omega) norm of every frequency column of ``hat``."""
        w = self.cross_section.weights[:, None]
        return np.sqrt(np.sum(w * np.abs(hat) ** 2, axis=0))

    # -- stencils ---------------------------------------------------------

    def dxp(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Cross-sectional derivative: centered inside, one-sided second order at the ends."""
        if order == 0:
            return values
        if order == 2:
            return second_difference(values, self.hx)
        out = values
        for _ in range(order):
            out = np.gradient(out, self.hx, axis=0, edge_order=2)
        return out

    def dxn(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Spectral axial derivative (periodic, Nyquist mode dropped for odd orders)."""
        if order == 0:
            return values
        p = self.frequencies.copy()
        if order % 2:
            p[self.n_axial // 2] = 0.0
        hat = np.fft.fft(values, axis=-1)
        return np.fft.ifft((1j * p) ** order * hat, axis=-1)

    def dxn_fd(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Finite-difference axial derivative for fields that do not decay along the axis."""
        out = values
        for _ in range(order):
            out = np.gradient(out, self.hn, axis=-1, edge_order=2)
        return out

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        """Discrete Laplacian on all nodes (one-sided second differences at x' = a, b)."""
        return self.dxp(values, 2) + self.dxn(values, 2)

    def laplacian_interior(self, interior: np.ndarray) -> np.ndarray:
        """Laplacian of a field given on interior x'-nodes, zero Dirichlet data at a and b."""
        h2 = self.hx**2
        out = -2.0 * interior
        out[1:] += interior[:-1]
        out[:-1] += interior[1:]
        out /= h2
        return out + self.dxn(interior, 2)

    def normal_derivative(self, values: np.ndarray, endpoint: float) -> np.ndarray:
        """Outward normal derivative at ``x' = endpoint`` by a one-sided second-order stencil."""
        cs = self.cross_section
        nu = cs.normal(endpoint)
        if endpoint == cs.b:
            d = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * self.hx)
        else:
            d = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * self.hx)
        return nu * d


def second_difference(values: np.ndarray, h: float) -> np.ndarray:
    """Second derivative along axis 0; centered inside, ``(2, -5, 4, -1)/h^2`` at the ends."""
    out = np.empty_like(values)
    out[1:-1] = (values[:-2] - 2.0 * values[1:-1] + values[2:]) / h**2
    out[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / h**2
    out[-1] = (2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3] - values[-4]) / h**2
    return out


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A complex field on a :class:`CylinderGrid`."""

    values: np.ndarray
    grid: CylinderGrid

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"shape mismatch: values {vals.shape} vs grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function has non-finite entries")
        vals = vals.astype(complex) if not np.iscomplexobj(vals) else vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, fn, grid: CylinderGrid) -> "GridFunction":
        X, Y = grid.mesh()
        return cls(np.broadcast_to(fn(X, Y), grid.shape), grid)

    @classmethod
    def zeros(cls, grid: CylinderGrid) -> "GridFunction":
        return cls(np.zeros(grid.shape, dtype=complex), grid)

    def norm(self, k: int = 0) -> float:
        return h_norm(self, k)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def boundary_trace(self, endpoint: float) -> np.ndarray:
        return self.values[self.grid.cross_section.endpoint_index(endpoint)].copy()

    def to_csv(self, path) -> None:
        write_field_csv(path, self.grid, self.values)


def write_field_csv(path, grid: CylinderGrid, values: np.ndarray) -> None:
    """Write ``x_prime, x_n, re, im`` rows (x'-major)."""
    X, Y = grid.mesh()
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_prime", "x_n", "re", "im"])
        for x, y, z in zip(X.ravel(), Y.ravel(), np.asarray(values).ravel()):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(z.real)), repr(float(z.imag))])


def axial_fourier(w: GridFunction) -> np.ndarray:
    """Partial Fourier transform in ``x_n``, normalised like the continuous one.

    ``hat[:, k] ~ (2 pi)^(-1/2) * integral exp(-i p_k x_n) w dx_n`` with
    ``p_k = grid.frequencies[k]``; with fiber measure ``grid.dp`` the map is
    unitary, so ``sum_k |hat_k|^2 dp = sum_j |w_j|^2 h_n``.
    """
    g = w.grid
    phase = np.exp(-1j * g.frequencies * g.xn[0])
    return g.hn / math.sqrt(2.0 * math.pi) * phase * np.fft.fft(w.values, axis=-1)


def inverse_axial_fourier(hat: np.ndarray, grid: CylinderGrid) -> GridFunction:
    phase = np.exp(1j * grid.frequencies * grid.xn[0])
    vals = np.fft.ifft(hat * phase, axis=-1) * math.sqrt(2.0 * math.pi) / grid.hn
    return GridFunction(vals, grid)


def fourier_l2_norm(hat: np.ndarray, grid: CylinderGrid) -> float:
    return float(np.sqrt(np.sum(grid.fiber_norms(hat) ** 2) * grid.dp))


def h_norm(w: GridFunction, k: int = 0, axial: str = "spectral") -> float:
    """Discrete ``H^k`` norm: sum over multi-indices ``i + j <= k`` of ``||d_x'^i d_xn^j w||_0^2``.

    ``axial="fd"`` swaps the spectral axial derivative for finite differences,
    for fields that do not decay at ``x_n = +-L``.
    """
    if k not in range(MAX_NORM_ORDER + 1):
        raise ValueError(f"unsupported Sobolev order k={k} (0..{MAX_NORM_ORDER})")
    g = w.grid
    dn = g.dxn if axial == "spectral" else g.dxn_fd
    total = 0.0
    for j in range(k + 1):
        base = dn(w.values, j)
        for i in range(k + 1 - j):
            total += g.l2_norm(g.dxp(base, i)) ** 2
    return math.sqrt(total)


# -- embedding study --------------------------------------------------------

def _corpus():
    """Smooth decaying test functions on omega = (0, 1) (not required to vanish on the boundary)."""
    return {
        "sin_gauss": lambda x, y: np.sin(np.pi * x) * np.exp(-(y**2)),
        "cos_gauss": lambda x, y: np.cos(np.pi * x) * np.exp(-(y**2)),
        "poly_sech": lambda x, y: (1.0 + x - x**2) / np.cosh(y),
        "shifted_gauss": lambda x, y: np.exp(-4.0 * (x - 0.3) ** 2 - 0.5 * (y - 1.0) ** 2),
        "narrow_gauss": lambda x, y: np.exp(-((y / 0.5) ** 2)) * (0.5 + x),
    }


def sup_embedding_study(k: int = 2, levels: int = 3, base: CylinderGrid | None = None):
    """Ratio ``||h||_inf / ||h||_{k}`` for a fixed corpus over successive grid refinements.

    Returns a list of dict rows with keys ``level, n_xprime, n_axial, function,
    sup, hk, ratio``.  The embedding needs ``k > n/2 = 1``.
    """
    if k <= 1:
        raise ValueError(f"embedding H^k in L^inf needs k > n/2 = 1, got k={k}")
    if base is None:
        base = CylinderGrid(CrossSection(0.0, 1.0, 17), half_length=8.0, n_axial=64)
    rows = []
    grid = base
    for level in range(levels):
        for name, fn in _corpus().items():
            h = GridFunction.from_callable(fn, grid)
            hk = h_norm(h, k)
            rows.append(
                dict(level=level, n_xprime=grid.cross_section.n_nodes, n_axial=grid.n_axial,
                     function=name, sup=h.sup(), hk=hk, ratio=h.sup() / hk)
            )
        grid = grid.refined(space=True, time=False, axial=True)
    return rows
