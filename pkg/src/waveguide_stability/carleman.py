"""Carleman weights, the weight-function assumption, and empirical checks of the estimate.

The cross-section is an interval, so ``beta_tilde`` is a function of one
variable and every gradient or Hessian is a scalar derivative.  With
``beta = beta_tilde + K`` and ``D(t) = (T + t)(T - t)``,

    phi = exp(lam beta) / D,    eta = (exp(2 lam K) - exp(lam beta)) / D.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import CrossSection

MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class BetaTilde:
    """A twice differentiable function on the cross-section with its derivatives."""

    value: Callable
    grad: Callable
    hess: Callable
    label: str = "custom"


@dataclass(frozen=True)
class Candidate:
    beta: BetaTilde
    gamma_star: tuple
    x0: float


def quadratic_candidate(x0: float, cs: CrossSection) -> Candidate:
    """``beta_tilde(x') = (x' - x0)^2`` with ``gamma_star = {x' in {a, b} : (x' - x0) nu >= 0}``."""
    if cs.a <= x0 <= cs.b:
        raise ValueError(f"x0 = {x0} lies in the closed cross-section [{cs.a}, {cs.b}]")
    beta = BetaTilde(
        value=lambda x: (np.asarray(x, dtype=float) - x0) ** 2,
        grad=lambda x: 2.0 * (np.asarray(x, dtype=float) - x0),
        hess=lambda x: np.full(np.shape(x), 2.0),
        label=f"quadratic(x0={x0!r})",
    )
    gs = tuple(e for e in (cs.a, cs.b) if (e - x0) * cs.normal(e) >= 0.0)
    return Candidate(beta, gs, x0)


@dataclass
class AssumptionReport:
    """Certificate for the three weight conditions, with witness nodes on failure."""

    C0: float
    gamma_star: tuple
    eps_hess: float
    Lambda1: float
    passed: dict = field(default_factory=dict)
    witness: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def lines(self) -> list[str]:
        out = [f"C0 = {self.C0!r}", f"gamma_star = {self.gamma_star}",
               f"eps_hess = {self.eps_hess!r}", f"Lambda1 = {self.Lambda1!r}"]
        for k in ("i", "ii", "iii"):
            w = self.witness.get(k)
            out.append(f"condition {k}: {'pass' if self.passed.get(k) else 'fail'}"
                       + ("" if w is None else f" (witness x' = {w!r})"))
        return out


def check_assumption(beta: BetaTilde, cs: CrossSection, gamma_star, n_nodes: int = 1025) -> AssumptionReport:
    """Check the weight conditions on ``n_nodes`` points of the closed cross-section.

    (i) ``|beta'| >= C0 > 0``; (ii) ``beta' nu < 0`` on the endpoints outside
    ``gamma_star``; (iii) ``lam beta'^2 + beta'' >= eps`` for every
    ``lam > Lambda1``.  When ``beta'' > 0`` everywhere the certificate is
    ``eps = min beta''`` and ``Lambda1 = 0``; otherwise ``eps = C0^2`` and
    ``Lambda1`` is the smallest value making (iii) hold at the nodes.
    """
    gamma_star = tuple(gamma_star)
    x = np.linspace(cs.a, cs.b, n_nodes)
    g = np.asarray(beta.grad(x), dtype=float)
    hs = np.asarray(beta.hess(x), dtype=float)
    passed, witness = {}, {}

    ag = np.abs(g)
    C0 = float(ag.min())
    passed["i"] = C0 > 0.0
    witness["i"] = None if passed["i"] else float(x[np.argmin(ag)])

    bad = [e for e in (cs.a, cs.b) if e not in gamma_star
           and float(np.asarray(beta.grad(e))) * cs.normal(e) >= 0.0]
    passed["ii"] = not bad
    witness["ii"] = bad[0] if bad else None

    if hs.min() > 0.0:
        eps, lam1 = float(hs.min()), 0.0
        passed["iii"] = True
        witness["iii"] = None
    elif passed["i"]:
        eps = C0**2
        lam1 = float(max(0.0, np.max((eps - hs) / g**2)))
        passed["iii"] = True
        witness["iii"] = None
    else:
        eps, lam1 = 0.0, float("inf")
        passed["iii"] = False
        witness["iii"] = witness["i"]
    return AssumptionReport(C0=C0, gamma_star=gamma_star, eps_hess=eps, Lambda1=lam1,
                            passed=passed, witness=witness)


@dataclass(frozen=True)
class WeightSpec:
    """Weight data: ``beta = beta_tilde + K`` with ``K = r max|beta_tilde|`` on the cross-section."""

    beta: BetaTilde
    cs: CrossSection
    gamma_star: tuple
    r: float = 2.0
    lam: float = 0.1
    T: float = 1.0

    def __post_init__(self):
        if self.r <= 1.0:
            raise ValueError(f"r must exceed 1, got {self.r}")
        if self.lam <= 0.0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.T <= 0.0:
            raise ValueError(f"T must be positive, got {self.T}")
        if 2.0 * self.lam * self.K >= MAX_EXPONENT:
            raise ValueError(f"2 lambda K = {2 * self.lam * self.K:.4g} overflows double precision")
        for e in self.gamma_star:
            if float(np.asarray(self.beta.grad(e))) * self.cs.normal(e) < 0.0:
                raise ValueError(f"normal derivative of beta is negative on gamma_star at x' = {e}")

    @property
    def beta_sup(self) -> float:
        x = np.linspace(self.cs.a, self.cs.b, 2049)
        return float(np.abs(self.beta.value(x)).max())

    @property
    def K(self) -> float:
        return self.r * self.beta_sup

    def eta_min(self) -> float:
        """``min eta`` over the cylinder, attained at ``t = 0``."""
        x = np.linspace(self.cs.a, self.cs.b, 2049)
        bmax = float(np.max(self.beta.value(x))) + self.K
        return (np.exp(2 * self.lam * self.K) - np.exp(self.lam * bmax)) / self.T**2


def weight_spec(x0: float = -1.0, cs: CrossSection | None = None, r: float = 2.0, lam: float = 0.1,
                T: float = 1.0) -> WeightSpec:
    cs = CrossSection() if cs is None else cs
    cand = quadratic_candidate(x0, cs)
    return WeightSpec(cand.beta, cs, cand.gamma_star, r=r, lam=lam, T=T)


def _denominator(ws: WeightSpec, t):
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) >= ws.T):
        raise ValueError(f"weights are defined for |t| < T = {ws.T}")
    return (ws.T + t) * (ws.T - t)


def weights(ws: WeightSpec, t, x):
    """Return ``(phi, eta)`` at ``(t, x')``; raises for ``|t| >= T``."""
    D = _denominator(ws, t)
    eb = np.exp(ws.lam * (ws.beta.value(x) + ws.K))
    return eb / D, (np.exp(2 * ws.lam * ws.K) - eb) / D


def eta_derivatives(ws: WeightSpec, t, x):
    """``eta, d_t eta, d_x' eta, d_x'^2 eta`` in closed form."""
    t = np.asarray(t, dtype=float)
    D = _denominator(ws, t)
    lam = ws.lam
    eb = np.exp(lam * (ws.beta.value(x) + ws.K))
    g = ws.beta.grad(x)
    num = np.exp(2 * lam * ws.K) - eb
    eta = num / D
    eta_t = num * 2.0 * t / D**2
    eta_x = -lam * g * eb / D
    eta_xx = -(lam * ws.beta.hess(x) + lam**2 * g**2) * eb / D
    return eta, eta_t, eta_x, eta_xx


# -- conjugation identity ---------------------------------------------------------


def _d1(f, h, axis):
    return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)


def _d2(f, h, axis):
    return (np.roll(f, -1, axis) - 2 * f + np.roll(f, 1, axis)) / h**2


def conjugation_residual(w: np.ndarray, ws: WeightSpec, s: float, times: np.ndarray,
                         xp: np.ndarray, xn: np.ndarray) -> float:
    """``|| e^{-s eta} L (e^{s eta} w) + (M1 + M2) w ||`` over interior nodes, ``L = -i d_t - Laplace``.

    ``w`` has shape ``(len(times), len(xp), len(xn))`` on uniform grids; the
    axial direction is periodic.  All derivatives are second-order centered
    differences, so the value is a pure stencil error of order ``h^2 + dt^2``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.abs(times) >= ws.T):
        raise ValueError("time grid must stay inside (-T, T)")
    if np.abs(w[[0, -1]]).max() > 0.0:
        raise ValueError("w must vanish on the extreme time slices")
    dt, hx, hn = times[1] - times[0], xp[1] - xp[0], xn[1] - xn[0]
    eta, eta_t, eta_x, eta_xx = (f[..., None] for f in eta_derivatives(ws, times[:, None], xp[None, :]))
    # Capped exponent: slices where it saturates carry w = 0 and only feed zeros to stencils.
    e = np.exp(np.minimum(s * eta, MAX_EXPONENT))
    W = np.where(w != 0, e * w, 0.0)
    LW = -1j * _d1(W, dt, 0) - _d2(W, hx, 1) - _d2(W, hn, 2)
    left = LW / e
    M = (1j * _d1(w, dt, 0) + _d2(w, hx, 1) + _d2(w, hn, 2) + s**2 * eta_x**2 * w
         + 1j * s * eta_t * w + 2 * s * eta_x * _d1(w, hx, 1) + s * eta_xx * w)
    r = (left + M)[1:-1, 1:-1]
    return float(np.sqrt(np.sum(np.abs(r) ** 2) * dt * hx * hn))


def compact_bump(t, tau: float):
    """``exp(-1 / (1 - (t/tau)^2))`` on ``|t| < tau``, zero elsewhere, with its derivative."""
    t = np.asarray(t, dtype=float)
    z = t / tau
    inside = np.abs(z) < 1.0
    zi = np.where(inside, z, 0.0)
    val = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - zi**2, 1.0)), 0.0)
    der = np.where(inside, val * (-2.0 * zi / np.where(inside, (1.0 - zi**2) ** 2, 1.0)) / tau, 0.0)
    return val, der


def conjugation_refinement(ws: WeightSpec, s: float, levels: int = 3, n_time: int = 64,
                           n_xprime: int = 32, n_axial: int = 16, tau: float = 0.5) -> list[dict]:
    """Residual for a smooth bump under joint dyadic refinement of ``t`` and ``x'``.

    ``w = bump(t) exp(-((x' - c)/0.2)^2) exp(-x_n^2)``.  The axial grid is
    fixed: both sides apply the same axial stencil, so it cancels.
    """
    a, b = ws.cs.a, ws.cs.b
    c = 0.5 * (a + b)
    xn = np.linspace(-4.0, 4.0, n_axial, endpoint=False)
    rows = []
    for k in range(levels):
        nt, nx = n_time * 2**k, n_xprime * 2**k
        times = np.linspace(-ws.T, ws.T, nt + 1)[1:-1]
        xp = np.linspace(a, b, nx + 1)
        th, _ = compact_bump(times, tau * ws.T)
        w = (th[:, None, None] * np.exp(-(((xp - c) / (0.2 * (b - a))) ** 2))[None, :, None]
             * np.exp(-(xn**2))[None, None, :]).astype(complex)
        res = conjugation_residual(w, ws, s, times, xp, xn)
        rows.append({"level": k, "n_time": nt, "n_xprime": nx, "residual": res})
    for prev, cur in zip(rows, rows[1:]):
        cur["factor"] = prev["residual"] / cur["residual"] if cur["residual"] > 0 else float("inf")
        cur["order"] = float(np.log2(cur["factor"])) if cur["residual"] > 0 else float("inf")
    return rows


# -- Carleman ratio study ------------------------------------------------------------


def graded_nodes(lo: float, hi: float, focus: str = "both", levels: int = 28, npt: int = 10):
    """Composite Gauss-Legendre nodes on ``[lo, hi]`` with geometric grading toward the ends.

    ``focus`` is ``"lo"``, ``"hi"`` or ``"both"``.  Resolves the boundary
    layers of width ``~1/s`` of ``exp(-2 s eta)`` for every ``s`` in use.
    """
    g, gw = leggauss(npt)
    L = hi - lo
    frac = np.concatenate([[0.0], 2.0 ** -np.arange(levels - 1, 0, -1), [1.0]])
    if focus == "lo":
        br = lo + L * frac
    elif focus == "hi":
        br = hi - L * frac[::-1]
    else:
        half = 0.5 * frac
        br = np.unique(np.concatenate([lo + L * half, hi - L * half]))
    left, right = br[:-1], br[1:]
    x = (0.5 * (right - left))[:, None] * g[None, :] + (0.5 * (right + left))[:, None]
    w = (0.5 * (right - left))[:, None] * gw[None, :]
    return x.ravel(), w.ravel()


@dataclass(frozen=True)
class TensorSample:
    """``w = X(x') Theta(t) Y(x_n)`` with ``X = (x'-a)(b-x')(1 + c1 z + c2 z^2)``,
    ``Theta = bump(t; tau) exp(i omega t)``, ``Y = exp(-(x_n/sigma)^2)``, ``z`` the
    cross-section coordinate scaled to ``[0, 1]``.
    """

    c1: float
    c2: float
    tau: float
    omega: float
    sigma: float

    def X(self, x, a, b):
        z = (x - a) / (b - a)
        p = 1 + self.c1 * z + self.c2 * z * z
        dp = (self.c1 + 2 * self.c2 * z) / (b - a)
        ddp = 2 * self.c2 / (b - a) ** 2
        g = (x - a) * (b - x)
        dg = (b - x) - (x - a)
        return g * p, dg * p + g * dp, -2 * p + 2 * dg * dp + g * ddp

    def Theta(self, t):
        v, d = compact_bump(t, self.tau)
        ph = np.exp(1j * self.omega * t)
        return v * ph, (d + 1j * self.omega * v) * ph

    def axial_moments(self):
        """``int Y^2``, ``int Y'^2``, ``int Y''^2`` (with ``int Y Y'' = -int Y'^2``)."""
        m0 = self.sigma * np.sqrt(np.pi / 2.0)
        return m0, m0 / self.sigma**2, 3.0 * m0 / self.sigma**4


def random_samples(rng: np.random.Generator, n: int, T: float = 1.0) -> list[TensorSample]:
    out = []
    for _ in range(n):
        c1, c2 = rng.uniform(-0.5, 0.5, 2)
        out.append(TensorSample(float(c1), float(c2), float(rng.uniform(0.5, 0.9) * T),
                                float(rng.uniform(-5.0, 5.0)), float(rng.uniform(0.5, 2.0))))
    return out


@dataclass
class _Quadrature:
    t: np.ndarray
    wt: np.ndarray
    x: np.ndarray
    wx: np.ndarray


def _quadrature(ws: WeightSpec, tau_max: float, levels: int = 28) -> _Quadrature:
    th, wt = graded_nodes(0.0, tau_max, focus="lo", levels=levels)
    t = np.concatenate([-th[::-1], th])
    wt = np.concatenate([wt[::-1], wt])
    x, wx = graded_nodes(ws.cs.a, ws.cs.b, focus="both", levels=levels)
    return _Quadrature(t, wt, x, wx)


def carleman_terms(ws: WeightSpec, sample: TensorSample, s: float, quad: _Quadrature | None = None) -> dict:
    """Left and right sides of the Carleman estimate for one tensor sample.

    Every term is divided by ``exp(-2 s eta_min)``, which leaves the ratio
    unchanged and keeps large ``s`` out of underflow.
    """
    quad = _quadrature(ws, sample.tau) if quad is None else quad
    a, b = ws.cs.a, ws.cs.b
    t = quad.t[:, None]
    x = quad.x[None, :]
    eta, eta_t, eta_x, eta_xx = eta_derivatives(ws, t, x)
    emin = ws.eta_min()
    E = np.exp(-s * (eta - emin))
    X, Xp, Xpp = sample.X(x, a, b)
    Th, Thp = sample.Theta(t)
    m0, m1, m2 = sample.axial_moments()
    W = quad.wt[:, None] * quad.wx[None, :]

    def integ(f):
        return float(np.sum(W * f))

    P = E * X * Th
    Pt = E * (X * Thp - s * eta_t * X * Th)
    Px = E * (Xp - s * eta_x * X) * Th
    Pxx = E * (Xpp - 2 * s * eta_x * Xp - s * eta_xx * X + s**2 * eta_x**2 * X) * Th
    A = 1j * Pt + Pxx + s**2 * eta_x**2 * P
    B = 1j * s * eta_t * P + 2 * s * eta_x * Px + s * eta_xx * P
    C = E * (-1j * X * Thp - Xpp * Th)
    P2 = integ(np.abs(P) ** 2)

    terms = {
        "grad": s * integ(np.abs(E * Xp * Th) ** 2) * m0,
        "mass": s**3 * P2 * m0,
        "M1": integ(np.abs(A) ** 2) * m0 - 2 * integ(np.real(A * np.conj(P))) * m1 + P2 * m2,
        "M2": integ(np.abs(B) ** 2) * m0,
        "L": integ(np.abs(C) ** 2) * m0 + 2 * integ(np.real(C * np.conj(P))) * m1 + P2 * m2,
    }
    bnd = 0.0
    tb = quad.t
    for side in ws.gamma_star:
        phi, eta_b = weights(ws, tb, side)
        dnb = float(np.asarray(ws.beta.grad(side))) * ws.cs.normal(side)
        dnw = ws.cs.normal(side) * sample.X(np.float64(side), a, b)[1]
        Thb, _ = sample.Theta(tb)
        bnd += float(np.sum(quad.wt * np.exp(-2 * s * (eta_b - emin)) * phi * dnb * np.abs(dnw * Thb) ** 2)) * m0
    terms["boundary"] = s * bnd
    terms["lhs"] = terms["grad"] + terms["mass"] + terms["M1"] + terms["M2"]
    terms["rhs"] = terms["boundary"] + terms["L"]
    terms["ratio"] = terms["lhs"] / terms["rhs"]
    return terms


@dataclass
class RatioStudy:
    s_values: np.ndarray
    ratios: np.ndarray  # (n_s, n_samples)

    @property
    def max_ratio(self) -> np.ndarray:
        return self.ratios.max(axis=1)

    @property
    def mean_ratio(self) -> np.ndarray:
        return self.ratios.mean(axis=1)

    def rows(self) -> list[dict]:
        return [{"s": float(s), "max_ratio": float(m), "mean_ratio": float(a)}
                for s, m, a in zip(self.s_values, self.max_ratio, self.mean_ratio)]

    def upper_half_nonincreasing(self, tol: float = 0.05) -> bool:
        """Per-s max never exceeds an earlier value of the upper half by more than ``tol``."""
        m = self.max_ratio[len(self.s_values) // 2:]
        return bool(np.all(m <= np.minimum.accumulate(m) * (1.0 + tol)))


def carleman_ratio_study(ws: WeightSpec, samples: list[TensorSample], s_values) -> RatioStudy:
    """Ratio LHS/RHS of the Carleman estimate for every sample and every ``s``."""
    s_values = np.asarray(s_values, dtype=float)
    ratios = np.empty((len(s_values), len(samples)))
    for j, smp in enumerate(samples):
        quad = _quadrature(ws, smp.tau)
        for i, s in enumerate(s_values):
            ratios[i, j] = carleman_terms(ws, smp, float(s), quad)["ratio"]
    if not np.all(np.isfinite(ratios)):
        raise FloatingPointError("non-finite Carleman ratio")
    return RatioStudy(s_values, ratios)


def calibrate_s0(ws: WeightSpec, samples: list[TensorSample], s_grid=None, slope_tol: float = 0.02):
    """Onset of the large-``s`` regime of the per-s max ratio.

    Returns the smallest grid value after which the log-log slope of the
    max ratio stays below ``slope_tol`` in magnitude, with the coarse study.
    """
    s_grid = np.logspace(-1, 4, 21) if s_grid is None else np.asarray(s_grid, dtype=float)
    study = carleman_ratio_study(ws, samples, s_grid)
    slope = np.abs(np.diff(np.log(study.max_ratio)) / np.diff(np.log(s_grid)))
    ok = slope <= slope_tol
    k = len(ok)
    while k > 0 and ok[k - 1]:
        k -= 1
    if k == len(ok):
        raise RuntimeError("ratio does not settle on the calibration grid")
    return float(s_grid[k]), study
