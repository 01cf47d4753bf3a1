"""Linearized difference system, its time-symmetric extension, and the Hölder-stability experiment.

For two potentials ``q1, q2`` sharing the data ``(q0, u0)`` put
``rho = q1 - q2``, ``u = u1 - u2`` and ``v = u1' - u2'``.  Then

    -i v' - Laplace v + q1 v = -rho u2',    v(0) = -i rho u0,    v = 0 laterally,

and the stability experiment compares ``||rho||`` with the Neumann norm
``N = ||d_nu v||`` on ``(0, T) x gamma_star x R`` through ``||rho|| <= C N^theta``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .admissible import AdmissiblePair, PerturbationParams, make_perturbation
from .carleman import WeightSpec, weights
from .geometry import CylinderGrid, japanese
from .schrodinger import DirectSolution, sigma_norm, solve_direct


@dataclass(frozen=True)
class StabilityParams:
    """Decay-class data plus ``delta``; ``theta`` and ``mu_delta`` follow."""

    a: float = 1.0
    b: float = 1.0
    d_eps: float = 2.0
    eps: float = 1.0
    upsilon0: float = 1.0
    delta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.delta < self.b:
            raise ValueError(f"delta must lie in (0, b) = (0, {self.b}), got {self.delta}")
        if self.d_eps <= 2.0 * (1.0 + self.eps) / 3.0:
            raise ValueError("d_eps must exceed 2(1 + eps)/3")
        if self.a <= 0 or self.upsilon0 <= 0:
            raise ValueError("a and upsilon0 must be positive")

    @classmethod
    def from_perturbation(cls, pp: PerturbationParams, upsilon0: float, delta: float) -> "StabilityParams":
        return cls(a=pp.a, b=pp.b, d_eps=pp.d_eps, eps=pp.eps, upsilon0=upsilon0, delta=delta)

    @property
    def theta(self) -> float:
        return (self.b - self.delta) / (2.0 * self.b - self.delta)

    @property
    def mu_delta(self) -> float:
        return float(np.exp(-(2.0 * self.b - self.delta)))


def theta(b: float, delta: float) -> float:
    return (b - delta) / (2.0 * b - delta)


# -- linearization ------------------------------------------------------------------


@dataclass(eq=False)
class LinearizedFields:
    grid: CylinderGrid
    times: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    v: np.ndarray
    u2p: np.ndarray
    q1: np.ndarray
    initial_defect: float  # ||v(0) + i rho u0|| / ||rho u0||
    residual: float  # max_m ||-i v' - Laplace v + q1 v + rho u2'|| over interior times


def _real(q, grid):
    return np.broadcast_to(np.real(np.asarray(getattr(q, "values", q))), grid.shape)


def linearized_residual(v: np.ndarray, u2p: np.ndarray, rho: np.ndarray, q1: np.ndarray,
                        grid: CylinderGrid, dt: float) -> np.ndarray:
    """``-i v' - Laplace v + q1 v + rho u2'`` at interior times (centered in t) and interior x'."""
    vt = (v[2:] - v[:-2]) / (2.0 * dt)
    vi = v[1:-1, 1:-1]
    lap = np.stack([grid.laplacian_interior(x) for x in vi])
    return -1j * vt[:, 1:-1] - lap + q1[1:-1] * vi + rho[1:-1] * u2p[1:-1, 1:-1]


def linearize(sol1: DirectSolution, sol2: DirectSolution, q1, q2, pair: AdmissiblePair) -> LinearizedFields:
    """Difference fields of two full solves and the residual checks of the linearized system."""
    if sol1.grid != sol2.grid or sol1.grid != pair.grid or sol1.times.shape != sol2.times.shape:
        raise ValueError("solutions live on different grids")
    if sol1.u is None or sol2.u is None:
        raise ValueError("linearize needs solutions computed with store='full'")
    grid = pair.grid
    q1v, q2v = _real(q1, grid), _real(q2, grid)
    rho = q1v - q2v
    v = sol1.up - sol2.up
    ru0 = rho * pair.u0.values.real
    denom = grid.l2_norm(ru0)
    defect = grid.l2_norm(v[0] + 1j * ru0)
    dt = sol1.times[1] - sol1.times[0]
    res = linearized_residual(v, sol2.up, rho, q1v, grid, dt)
    hn, w = grid.hn, grid.cross_section.weights[1:-1, None]
    rnorm = float(np.sqrt(np.max(np.sum(w * hn * np.abs(res) ** 2, axis=(1, 2)))))
    return LinearizedFields(grid=grid, times=sol1.times, rho=rho, u=sol1.u - sol2.u, v=v, u2p=sol2.up,
                            q1=np.asarray(q1v), initial_defect=defect / denom if denom > 0 else defect,
                            residual=rnorm)


@dataclass(eq=False)
class SymmetricFields:
    times: np.ndarray  # (-T .. T)
    v: np.ndarray
    u2p: np.ndarray


def symmetrize(v: np.ndarray, u2p: np.ndarray, times: np.ndarray) -> SymmetricFields:
    """Extend to negative times by ``v(-t) = -conj(v(t))`` and ``u2'(-t) = -conj(u2'(t))``.

    The second rule is the time derivative of ``u2(-t) = conj(u2(t))``.
    """
    v0 = v[0]
    if np.abs(v0.real).max() > 1e-12 * max(1.0, np.abs(v0).max()):
        warnings.warn("v(0) is not purely imaginary; the extension is not continuous at t = 0")
    t = np.concatenate([-times[:0:-1], times])
    vv = np.concatenate([-np.conj(v[:0:-1]), v])
    uu = np.concatenate([-np.conj(u2p[:0:-1]), u2p])
    return SymmetricFields(t, vv, uu)


# -- Lemma check ----------------------------------------------------------------------


@dataclass
class LemmaRow:
    s: float
    lhs: float
    interior: float
    boundary: float

    @property
    def rhs(self) -> float:
        return self.interior + self.boundary

    @property
    def ratio(self) -> float:
        if self.lhs == 0.0 and self.rhs == 0.0:
            return 0.0
        return self.lhs / self.rhs


@dataclass
class LemmaTable:
    rows: list

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows])

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())

    def upper_half_flat_or_decreasing(self, tol: float = 0.05) -> bool:
        r = self.ratios[len(self.rows) // 2:]
        return bool(np.all(r <= np.minimum.accumulate(r) * (1.0 + tol)))


def lemma_inv_check(rho, u0, u2p_energy: np.ndarray, neumann_sq: dict, grid: CylinderGrid,
                    ws: WeightSpec, s_values) -> LemmaTable:
    """Both sides of the weighted estimate for ``rho u0`` with the weight frozen at ``t = 0``.

    ``u2p_energy`` is ``int_0^T |u2'|^2 dt`` per node and ``neumann_sq`` maps
    each side of ``gamma_star`` to ``int_0^T int |d_nu v|^2 dx_n dt``.  Since
    ``eta(0, .)`` is time independent these are all the data required.  Every
    term is divided by ``exp(-2 s min eta(0, .))``.
    """
    rho = np.real(np.asarray(getattr(rho, "values", rho)))
    u0 = np.real(np.asarray(getattr(u0, "values", u0)))
    xp = grid.xp
    _, eta0 = weights(ws, 0.0, xp)
    emin = float(eta0.min())
    wq = grid.cross_section.weights[:, None] * grid.hn
    ru0 = np.abs(rho * u0) ** 2
    r2e = rho**2 * u2p_energy
    rows = []
    for s in np.asarray(s_values, dtype=float):
        e2 = np.exp(-2.0 * s * (eta0 - emin))[:, None]
        lhs = float(np.sum(wq * e2 * ru0))
        inner = s**-1.5 * float(np.sum(wq * e2 * r2e))
        bnd = 0.0
        for side, val in neumann_sq.items():
            _, es = weights(ws, 0.0, side)
            bnd += float(np.exp(-2.0 * s * (es - emin))) * val
        rows.append(LemmaRow(float(s), lhs, inner, s**-0.5 * bnd))
    return LemmaTable(rows)


def neumann_difference_sq(sol1: DirectSolution, sol2: DirectSolution) -> dict:
    """``||d_nu u1' - d_nu u2'||^2`` on each side of ``gamma_star``."""
    dt = sol1.times[1] - sol1.times[0]
    return {s: sigma_norm(sol1.neumann[s] - sol2.neumann[s], sol1.grid, dt) ** 2 for s in sol1.neumann}


# -- parameter recipe ---------------------------------------------------------------


@dataclass
class Recipe:
    branch: str  # "small" (mu < mu_delta) or "large"
    y: float | None
    s: float | None
    bound_constant: float | None = None


def y_of_mu(mu, sp: StabilityParams):
    """``y(mu) = ((-ln mu / (2b - delta))^(2/d_eps) - 1)^(1/2)`` for ``0 < mu <= mu_delta``."""
    mu = np.asarray(mu, dtype=float)
    # ln(mu_delta) = -(2b - delta) by definition; avoid the exp/log round trip there.
    log_mu = np.where(mu == sp.mu_delta, -(2.0 * sp.b - sp.delta), np.log(mu))
    inner = (-log_mu / (2.0 * sp.b - sp.delta)) ** (2.0 / sp.d_eps) - 1.0
    return np.sqrt(np.maximum(inner, 0.0))


def s_of_y(y, C: float, sp: StabilityParams):
    """``s = (upsilon0^2 / (2C))^(-2/3) <y>^(2(1+eps)/3)``."""
    return (sp.upsilon0**2 / (2.0 * C)) ** (-2.0 / 3.0) * japanese(y) ** (2.0 * (1.0 + sp.eps) / 3.0)


def large_data_constant(sp: StabilityParams, omega_length: float) -> float:
    """``4 a^2 |omega| int exp(-2b <x>^d_eps) dx / mu_delta^(2 theta)``."""
    integral, _ = quad(lambda x: np.exp(-2.0 * sp.b * japanese(x) ** sp.d_eps), -np.inf, np.inf)
    return 4.0 * sp.a**2 * omega_length * integral / sp.mu_delta ** (2.0 * sp.theta)


def parameter_recipe(mu: float, sp: StabilityParams, C_fit: float, omega_length: float = 1.0) -> Recipe:
    """Choice of ``y`` and ``s`` for a data misfit ``mu``."""
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    if C_fit <= 0.0:
        raise ValueError(f"C_fit must be positive, got {C_fit}")
    if mu >= sp.mu_delta:
        return Recipe("large", None, None, large_data_constant(sp, omega_length))
    y = float(y_of_mu(mu, sp))
    return Recipe("small", y, float(s_of_y(y, C_fit, sp)))


# -- stability sweep ------------------------------------------------------------------


@dataclass
class StabilityRow:
    amplitude: float
    rho_norm: float
    mu: float
    neumann_norm: float
    y: float | None
    s: float | None
    branch: str


@dataclass
class StabilityReport:
    theta: float
    mu_delta: float
    rows: list
    slope: float
    linear_slope: float
    C_fit: float
    mu_quadratic_spread: float
    passed: bool
    warnings: list = field(default_factory=list)

    def table(self) -> list[dict]:
        return [
            {"amplitude": r.amplitude, "rho_norm": r.rho_norm, "mu": r.mu, "neumann_norm": r.neumann_norm,
             "log_rho": float(np.log(r.rho_norm)), "log_neumann": float(np.log(r.neumann_norm)),
             "y": r.y, "s": r.s, "branch": r.branch}
            for r in self.rows
        ]


def middle_decade(amplitudes: np.ndarray) -> np.ndarray:
    """Mask of amplitudes in the decade centred (geometrically) in the sweep."""
    lo, hi = np.log10(amplitudes.min()), np.log10(amplitudes.max())
    mid = 0.5 * (lo + hi)
    la = np.log10(amplitudes)
    return (la >= mid - 0.5 - 1e-12) & (la <= mid + 0.5 + 1e-12)


def _fit_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def stability_sweep(pair: AdmissiblePair, pp: PerturbationParams, sp: StabilityParams, amplitudes,
                    C_lemma: float, threads: int = 1, two_sided: bool = False,
                    reference: DirectSolution | None = None) -> StabilityReport:
    """Solve the direct problem for every amplitude and fit the Hölder relation.

    Default comparison: ``q1 = q0 + amp rho0`` against ``q2 = q0``.  With
    ``two_sided`` the reference is ``q2 = q0 - amp rho0`` (solved per row).
    """
    amps = np.sort(np.asarray(amplitudes, dtype=float))
    if np.any(amps <= 0):
        raise ValueError("amplitudes must be positive (the zero row is excluded)")
    if np.log10(amps.max() / amps.min()) < 3.0 - 1e-9:
        raise ValueError("amplitudes must span at least three decades")
    grid = pair.grid
    q0 = pair.q0.values.real
    shapes = {a: make_perturbation(pp, grid, float(a)).values.real for a in amps}
    if not two_sided and reference is None:
        reference = solve_direct(pair, q0, store="traces")

    def row(amp):
        rho1 = shapes[amp]
        sol1 = solve_direct(pair, q0 + rho1, store="traces")
        if two_sided:
            sol2 = solve_direct(pair, q0 - rho1, store="traces")
            rho = 2.0 * rho1
        else:
            sol2, rho = reference, rho1
        mu = float(sum(neumann_difference_sq(sol1, sol2).values()))
        rec = parameter_recipe(mu, sp, C_lemma, grid.cross_section.length) if mu > 0 else Recipe("zero", None, None)
        return StabilityRow(float(amp), grid.l2_norm(rho), mu, float(np.sqrt(mu)), rec.y, rec.s, rec.branch)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(row, amps))

    notes = []
    mus = np.array([r.mu for r in rows])
    if np.any(np.diff(mus) <= 0):
        notes.append("mu is not strictly increasing in the amplitude (nonlinear regime)")
    small = np.array([r.branch == "small" for r in rows])
    rn = np.array([r.rho_norm for r in rows])
    nn = np.array([r.neumann_norm for r in rows])
    fit = small if small.sum() >= 2 else np.ones_like(small)
    slope = _fit_slope(nn[fit], rn[fit])
    mid = middle_decade(amps) & fit
    linear_slope = _fit_slope(nn[mid], rn[mid]) if mid.sum() >= 2 else float("nan")
    C_fit = float(np.max(rn / nn**sp.theta))
    q = mus[mid] / amps[mid] ** 2
    spread = float(q.max() / q.min() - 1.0) if mid.sum() >= 2 else float("nan")
    passed = bool(np.all(rn <= C_fit * nn**sp.theta * (1 + 1e-12)) and slope >= sp.theta)
    for n in notes:
        warnings.warn(n)
    return StabilityReport(theta=sp.theta, mu_delta=sp.mu_delta, rows=rows, slope=slope,
                           linear_slope=linear_slope, C_fit=C_fit, mu_quadratic_spread=spread,
                           passed=passed, warnings=notes)
