"""Admissible background data ``(q0, u0)`` and perturbations of the potential.

The background pair blends an axial profile ``u_b(y) = c <y>^(-(1+eps)/2)``,
``q_b = u_b''/u_b`` (so ``-u_b'' + q_b u_b = 0``) near the lateral boundary
with arbitrary interior data ``(q_i, u_i)``::

    q0 = chi q_b + (1 - chi) q_i,     u0 = chi u_b + (1 - chi) u_i

where ``chi = 1`` on a collar of the boundary.  Since ``u_b`` does not decay
along the axis it is never differentiated numerically in ``x_n``: the operator
``(Laplace - q0)`` is applied to it in closed form, and to the decaying
remainder ``u0 - u_b`` with the grid stencils.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CylinderGrid, GridFunction, japanese, second_difference

__all__ = [
    "BackgroundProfile",
    "background_profile",
    "FactoryParams",
    "AdmissiblePair",
    "build_pair",
    "PerturbationParams",
    "make_perturbation",
    "check_decay_class",
    "smoothstep",
    "cutoff",
]

TRACE_TOL = 1e-8


@dataclass(frozen=True)
class BackgroundProfile:
    eps: float
    c: float

    @property
    def alpha(self) -> float:
        return 0.5 * (1.0 + self.eps)

    def u(self, y):
        return self.c * (1.0 + np.asarray(y, dtype=float) ** 2) ** (-0.5 * self.alpha)

    def u_dd(self, y):
        y2 = np.asarray(y, dtype=float) ** 2
        a = self.alpha
        return a * self.c * (1.0 + y2) ** (-0.5 * a - 2.0) * ((a + 1.0) * y2 - 1.0)

    def q(self, y):
        y2 = np.asarray(y, dtype=float) ** 2
        a = self.alpha
        return a * ((a + 1.0) * y2 - 1.0) / (1.0 + y2) ** 2


def background_profile(eps: float, c: float) -> BackgroundProfile:
    """Closed-form ``(u_b, q_b)``; ``q_b(y) = alpha((alpha+1)y^2 - 1)/(1+y^2)^2``, ``alpha = (1+eps)/2``."""
    if eps <= 0 or c <= 0:
        raise ValueError(f"need eps > 0 and c > 0, got eps={eps}, c={c}")
    return BackgroundProfile(float(eps), float(c))


def smoothstep(t):
    """``6t^5 - 15t^4 + 10t^3`` clipped to [0, 1]; C^2 at both ends."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 + t * (-15.0 + 6.0 * t))


def cutoff(xp, a: float, b: float, width: float):
    """``chi(x') = 1`` within ``width`` of {a, b}, 0 beyond ``2 width``, smoothstep in between."""
    dist = np.minimum(np.asarray(xp) - a, b - np.asarray(xp))
    return 1.0 - smoothstep((dist - width) / width)


@dataclass(frozen=True)
class FactoryParams:
    """Parameters of the blended background pair.

    ``interior="background"`` takes ``u_i = u_b`` and ``q_i = q_b``, which
    makes ``(-Laplace + q0) u0`` vanish on the whole cylinder.  With
    ``interior="bump"`` a Gaussian (in ``x_n``) of heights ``u_bump >= 0`` and
    ``q_bump`` is added to ``u_b`` and ``q_b`` respectively.
    """

    eps: float = 1.0
    c: float = 1.0
    collar_width: float = 0.15
    interior: str = "background"
    u_bump: float = 0.5
    q_bump: float = 0.5
    bump_width: float = 1.0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.collar_width <= 0:
            raise ValueError(f"collar_width must be positive, got {self.collar_width}")
        if self.interior not in ("background", "bump"):
            raise ValueError(f"unknown interior selector {self.interior!r}")
        if self.bump_width <= 0:
            raise ValueError("bump_width must be positive")


@dataclass(frozen=True, eq=False)
class AdmissiblePair:
    """Background data with the operator images needed by the direct solver.

    ``lu0 = (Laplace - q0) u0`` and ``l2u0 = (Laplace - q0)^2 u0``; both decay
    along the axis.  ``report`` records the nodewise lower bound and the
    boundary conditions on ``(-Laplace + q0)^2 u0``.
    """

    grid: CylinderGrid
    q0: GridFunction
    u0: GridFunction
    eps: float
    upsilon0: float
    chi: np.ndarray
    lu0: np.ndarray
    l2u0: np.ndarray
    profile: BackgroundProfile
    report: dict = field(default_factory=dict)

    @property
    def stationary(self) -> bool:
        return not np.any(self.lu0)

    def to_csv(self, path) -> None:
        import csv

        X, Y = self.grid.mesh()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_prime", "x_n", "q0", "u0", "chi", "re_lu0", "im_lu0"])
            for row in zip(X.ravel(), Y.ravel(), self.q0.values.real.ravel(), self.u0.values.real.ravel(),
                           np.broadcast_to(self.chi[:, None], self.grid.shape).ravel(), self.lu0.real.ravel(),
                           self.lu0.imag.ravel()):
                w.writerow([repr(float(v)) for v in row])


def _collar_stencil_mask(chi_col: np.ndarray) -> np.ndarray:
    """x'-nodes whose whole (centered or one-sided) stencil lies where chi == 1."""
    one = chi_col == 1.0
    n = len(one)
    mask = np.zeros(n, dtype=bool)
    mask[0] = one[:4].all()
    mask[-1] = one[-4:].all()
    mask[1:-1] = one[:-2] & one[1:-1] & one[2:]
    return mask


# Eighth-order centered second derivative.
_D2_8 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])


def collar_residual(u0: np.ndarray, q0: np.ndarray, grid: CylinderGrid, mask: np.ndarray) -> float:
    """Sup of the discrete ``(-Laplace + q0) u0`` over the masked x'-rows.

    Applied to ``u0`` itself (no splitting): second differences in ``x'`` and an
    eighth-order stencil in ``x_n``, whose four edge nodes on each side are skipped
    because ``u0`` does not decay along the axis.
    """
    if not mask.any():
        return float("nan")
    u = u0[mask]
    m = u.shape[1]
    dnn = sum(c * u[:, k:m - 8 + k] for k, c in enumerate(_D2_8)) / grid.hn**2
    dxx = second_difference(u0, grid.hx)[mask][:, 4:-4]
    return float(np.abs(-dnn - dxx + q0[mask][:, 4:-4] * u[:, 4:-4]).max())


def build_pair(fp: FactoryParams, grid: CylinderGrid, u_i=None, q_i=None) -> AdmissiblePair:
    """Assemble ``(q0, u0)`` on ``grid`` and certify the lower bound and boundary conditions.

    ``u_i``/``q_i`` may be supplied as arrays on the grid to override the
    selector in ``fp``.  Raises ``ValueError`` if ``u_i < u_b`` at some node.
    """
    prof = background_profile(fp.eps, fp.c)
    cs = grid.cross_section
    X, Y = grid.mesh()
    ub = prof.u(Y)
    qb = prof.q(Y)
    chi_col = cutoff(cs.nodes, cs.a, cs.b, fp.collar_width)
    chi = np.broadcast_to(chi_col[:, None], grid.shape)

    bump = np.exp(-((Y / fp.bump_width) ** 2))
    if u_i is None:
        u_i = ub + (fp.u_bump * bump if fp.interior == "bump" else 0.0)
    if q_i is None:
        q_i = qb + (fp.q_bump * bump if fp.interior == "bump" else 0.0)
    u_i = np.broadcast_to(np.asarray(u_i, dtype=float), grid.shape)
    q_i = np.broadcast_to(np.asarray(q_i, dtype=float), grid.shape)

    below = u_i < ub
    if np.any(below):
        i, j = np.argwhere(below)[0]
        raise ValueError(
            f"u_i < u_b at node (x'={X[i, j]:.6g}, x_n={Y[i, j]:.6g}): {u_i[i, j]:.6g} < {ub[i, j]:.6g}"
        )

    d0 = (1.0 - chi) * (u_i - ub)
    r0 = (1.0 - chi) * (q_i - qb)
    edge = np.abs(np.concatenate([d0[:, :2], d0[:, -2:], r0[:, :2], r0[:, -2:]], axis=1)).max()
    if edge > grid.truncation_tol * max(1.0, np.abs(d0).max(), np.abs(r0).max()):
        raise ValueError("interior data must decay to the truncation tolerance at x_n = +-L")

    u0 = ub + d0
    q0 = qb + r0
    # (Laplace - q_b) u_b = 0 in closed form; only the decaying parts meet the stencils.
    lu0 = -r0 * ub + grid.laplacian(d0) - q0 * d0
    lu0 = lu0.real.astype(float)
    l2u0 = (grid.laplacian(lu0) - q0 * lu0).real

    # u_b is the lower bound itself, evaluated with the same formula to avoid rounding noise.
    lower_slack = u0 - ub
    collar = _collar_stencil_mask(chi_col)
    report = {
        "lower_bound_min_slack": float(lower_slack.min()),
        "lower_bound_ok": bool(np.all(lower_slack >= 0.0)),
        "l2u0_max_trace": float(max(np.abs(l2u0[0]).max(), np.abs(l2u0[-1]).max())),
        "collar_nodes": int(collar.sum()),
        "collar_residual_sup": collar_residual(u0, q0, grid, collar),
    }
    report["l2u0_trace_ok"] = report["l2u0_max_trace"] < TRACE_TOL
    if not report["lower_bound_ok"]:
        i, j = np.unravel_index(np.argmin(lower_slack), grid.shape)
        raise ValueError(f"lower bound violated at node (x'={X[i, j]:.6g}, x_n={Y[i, j]:.6g})")

    return AdmissiblePair(
        grid=grid,
        q0=GridFunction(q0, grid),
        u0=GridFunction(u0, grid),
        eps=fp.eps,
        upsilon0=fp.c,
        chi=chi_col,
        lu0=lu0,
        l2u0=l2u0,
        profile=prof,
        report=report,
    )


# -- perturbations ------------------------------------------------------------

SHAPES = ("sin2", "sin4", "sin6")


@dataclass(frozen=True)
class PerturbationParams:
    """Decay class ``|q - q0| <= a exp(-b <x_n>^d_eps)`` and the shape of ``q - q0``."""

    a: float = 1.0
    b: float = 1.0
    d_eps: float = 2.0
    eps: float = 1.0
    shape: str = "sin2"

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError(f"need a > 0 and b > 0, got a={self.a}, b={self.b}")
        if not self.d_eps > 2.0 * (1.0 + self.eps) / 3.0:
            raise ValueError(
                f"d_eps={self.d_eps} must exceed 2(1+eps)/3 = {2.0 * (1.0 + self.eps) / 3.0:.6g}"
            )
        if self.shape not in SHAPES:
            raise ValueError(f"unknown perturbation shape {self.shape!r}; expected one of {SHAPES}")

    def envelope(self, xn):
        return np.exp(-self.b * japanese(xn) ** self.d_eps)

    def log_envelope(self, xn):
        return -self.b * japanese(xn) ** self.d_eps


def shape_profile(shape: str, xp, a: float, b: float):
    """``sin^k`` of the scaled cross-section coordinate, ``k`` read from the shape name."""
    return np.sin(np.pi * (np.asarray(xp) - a) / (b - a)) ** int(shape[3:])


def make_perturbation(pp: PerturbationParams, grid: CylinderGrid, amplitude: float) -> GridFunction:
    """``rho0 = amplitude * s(x') * exp(-b <x_n>^d_eps)`` with ``s`` vanishing to second order at the ends."""
    if amplitude < 0 or amplitude > pp.a:
        raise ValueError(f"amplitude {amplitude} outside [0, a={pp.a}]")
    grid.check_truncation(pp.b, pp.d_eps)
    cs = grid.cross_section
    s = shape_profile(pp.shape, cs.nodes, cs.a, cs.b)
    s[0] = s[-1] = 0.0
    rho = amplitude * s[:, None] * pp.envelope(grid.xn)[None, :]
    rep = check_decay_class(rho, 0.0, pp, grid)
    if not rep.passed:
        raise ValueError(f"envelope violated at node {rep.worst_node}")
    return GridFunction(rho, grid)


@dataclass
class DecayReport:
    passed: bool
    slack: float
    worst_node: tuple[int, int]
    worst_xn: float
    boundary_trace: float
    m_surrogate: float


def check_decay_class(q, q0, pp: PerturbationParams, grid: CylinderGrid | None = None) -> DecayReport:
    """Nodewise check of ``|q - q0| <= a exp(-b<x_n>^d)`` plus a surrogate for ``||q||_{W^{4,inf}}``.

    ``slack = min over nodes of (a - |q - q0| exp(b<x_n>^d))``.  The surrogate is
    the largest nodal finite-difference derivative of ``q`` up to order 3.
    """
    if grid is None:
        grid = getattr(q, "grid", None) or getattr(q0, "grid")
    qv = np.real(np.asarray(getattr(q, "values", q)))
    q0v = np.real(np.asarray(getattr(q0, "values", q0)))
    rho = np.broadcast_to(qv - q0v, grid.shape)
    logenv = pp.log_envelope(grid.xn)[None, :]
    with np.errstate(divide="ignore"):
        expo = np.where(rho != 0.0, np.log(np.abs(rho)) - logenv, -np.inf)
    scaled = np.exp(np.minimum(expo, 700.0))
    slack_map = pp.a - scaled
    i, j = np.unravel_index(np.argmin(slack_map), grid.shape)
    slack = float(slack_map[i, j])

    qfull = np.broadcast_to(qv, grid.shape)
    m_sur = 0.0
    for ix in range(4):
        for jn in range(4 - ix):
            d = grid.dxp(qfull, ix) if ix else qfull
            d = grid.dxn_fd(d, jn) if jn else d
            m_sur = max(m_sur, float(np.abs(d).max()))
    btrace = float(max(np.abs(rho[0]).max(), np.abs(rho[-1]).max()))
    return DecayReport(
        passed=bool(slack >= -1e-14 * pp.a and btrace <= 1e-14 * pp.a),
        slack=slack,
        worst_node=(int(i), int(j)),
        worst_xn=float(grid.xn[j]),
        boundary_trace=btrace,
        m_surrogate=m_sur,
    )
