"""Command-line entry point: configuration, experiment orchestration, CSV tables and run manifests.

Usage::

    waveguide-lab <subcommand> [--config run.ini] [--out DIR] [--seed N] [--threads N]

Subcommands: ``factory``, ``direct``, ``elliptic``, ``carleman``, ``lemma-inv``,
``stability``.  Exit status: 0 success, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .admissible import FactoryParams, PerturbationParams, build_pair, make_perturbation
from .carleman import (calibrate_s0, carleman_ratio_study, check_assumption, conjugation_refinement,
                       quadratic_candidate, random_samples, WeightSpec)
from .elliptic import manufactured_convergence as elliptic_convergence
from .elliptic import resolvent_bound_report
from .geometry import CrossSection, CylinderGrid, GridFunction
from .inverse import StabilityParams, lemma_inv_check, neumann_difference_sq, stability_sweep
from .schrodinger import NumericalFailure, sigma_norm, solve_direct

log = logging.getLogger("waveguide_stability")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
SUBCOMMANDS = ("factory", "direct", "elliptic", "carleman", "lemma-inv", "stability")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# -- configuration ---------------------------------------------------------------------


@dataclass
class GeometryConfig:
    a: float = 0.0
    b: float = 1.0
    half_length: float = 16.0
    n_xprime: int = 64
    n_axial: int = 512
    T: float = 1.0
    n_time: int = 256
    truncation_tol: float = 1e-12


@dataclass
class AdmissibleConfig:
    eps: float = 1.0
    c: float = 1.0
    collar_width: float = 0.15
    interior: str = "background"
    u_bump: float = 0.5
    q_bump: float = 0.5
    bump_width: float = 1.0


@dataclass
class PerturbationConfig:
    a: float = 1.0
    b: float = 1.0
    d_eps: float = 2.0
    shape: str = "sin2"
    amplitudes: tuple = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1)
    direct_amplitude: float = 0.0


@dataclass
class CarlemanConfig:
    x0: float = -1.0
    r: float = 2.0
    lam: float = 0.1
    samples: int = 20
    sweep_points: int = 10
    s0: float = 0.0  # 0 selects calibration
    conjugation_s: tuple = (1.0, 5.0)


@dataclass
class InverseConfig:
    delta: float = 0.5
    two_sided: bool = False
    lemma_amplitude: float = 1e-3
    lemma_s_min: float = 1.0
    lemma_s_max: float = 1000.0
    lemma_points: int = 13


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    admissible: AdmissibleConfig = field(default_factory=AdmissibleConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    carleman: CarlemanConfig = field(default_factory=CarlemanConfig)
    inverse: InverseConfig = field(default_factory=InverseConfig)
    output: str = "runs/out"
    seed: int = 0

    # derived objects, built by validate()
    def cross_section(self) -> CrossSection:
        g = self.geometry
        cand = quadratic_candidate(self.carleman.x0, CrossSection(g.a, g.b, g.n_xprime))
        return CrossSection(g.a, g.b, g.n_xprime, cand.gamma_star)

    def grid(self) -> CylinderGrid:
        g = self.geometry
        return CylinderGrid(self.cross_section(), g.half_length, g.n_axial, g.T, g.n_time, g.truncation_tol)

    def factory(self) -> FactoryParams:
        return FactoryParams(**asdict(self.admissible))

    def perturbation_params(self) -> PerturbationParams:
        p = self.perturbation
        return PerturbationParams(a=p.a, b=p.b, d_eps=p.d_eps, eps=self.admissible.eps, shape=p.shape)

    def stability_params(self) -> StabilityParams:
        return StabilityParams.from_perturbation(self.perturbation_params(), self.admissible.c, self.inverse.delta)

    def weight_spec(self) -> WeightSpec:
        g = self.geometry
        cs = CrossSection(g.a, g.b, g.n_xprime)
        cand = quadratic_candidate(self.carleman.x0, cs)
        return WeightSpec(cand.beta, cs, cand.gamma_star, r=self.carleman.r, lam=self.carleman.lam, T=g.T)


def _convert(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(f"not a boolean: {raw!r}")
            return low in ("true", "yes", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def load_config(path: str | Path | None) -> RunConfig:
    """Read a ``key = value`` INI file; unknown sections or keys are configuration errors."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError("config", str(exc)) from None
    for section in parser.sections():
        if section == "output":
            for key, raw in parser[section].items():
                if key == "dir":
                    cfg.output = raw.strip()
                elif key == "seed":
                    cfg.seed = _convert("output.seed", raw, 0)
                else:
                    raise ConfigError(f"output.{key}", "unknown key")
            continue
        block = getattr(cfg, section, None)
        if block is None or not hasattr(block, "__dataclass_fields__"):
            raise ConfigError(section, "unknown section")
        for key, raw in parser[section].items():
            if key not in block.__dataclass_fields__:
                raise ConfigError(f"{section}.{key}", "unknown key")
            setattr(block, key, _convert(f"{section}.{key}", raw, getattr(block, key)))
    return cfg


def validate(cfg: RunConfig) -> None:
    """Build every module object once so that precondition failures surface before any solve."""
    checks = [
        ("carleman.x0", cfg.weight_spec),
        ("geometry", cfg.grid),
        ("admissible", cfg.factory),
        ("perturbation", cfg.perturbation_params),
        ("inverse.delta", cfg.stability_params),
    ]
    for key, build in checks:
        try:
            build()
        except (ValueError, TypeError) as exc:
            raise ConfigError(key, str(exc)) from None
    p = cfg.perturbation
    try:
        cfg.grid().check_truncation(p.b, p.d_eps)
    except ValueError as exc:
        raise ConfigError("geometry.half_length", str(exc)) from None
    amps = np.asarray(p.amplitudes)
    if amps.size == 0 or np.any(amps <= 0) or np.any(amps > p.a):
        raise ConfigError("perturbation.amplitudes", f"amplitudes must lie in (0, a={p.a}]")
    if not 0.0 <= p.direct_amplitude <= p.a:
        raise ConfigError("perturbation.direct_amplitude", f"must lie in [0, a={p.a}]")
    if not 0.0 < cfg.inverse.lemma_amplitude <= p.a:
        raise ConfigError("inverse.lemma_amplitude", f"must lie in (0, a={p.a}]")
    if cfg.carleman.samples < 1 or cfg.carleman.sweep_points < 2:
        raise ConfigError("carleman.samples", "need at least one sample and two sweep points")
    if cfg.geometry.n_time < 16:
        raise ConfigError("geometry.n_time", "at least 16 time steps are required")
    if cfg.seed < 0:
        raise ConfigError("seed", "must be non-negative")


def config_text(cfg: RunConfig) -> str:
    """Canonical ``key = value`` dump used for hashing and archiving."""
    lines = []
    for name in ("geometry", "admissible", "perturbation", "carleman", "inverse"):
        lines.append(f"[{name}]")
        for k, v in asdict(getattr(cfg, name)).items():
            v = " ".join(repr(float(x)) for x in v) if isinstance(v, tuple) else repr(v)
            lines.append(f"{k} = {v}")
    lines += ["[output]", f"dir = {cfg.output}", f"seed = {cfg.seed}"]
    return "\n".join(lines) + "\n"


# -- output ---------------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, rows: list[dict], header: list[str] | None = None) -> None:
    header = header or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(k)) for k in header])


@dataclass
class RunState:
    subcommand: str
    cfg: RunConfig
    out: Path
    seed: int
    threads: int
    results: dict = field(default_factory=dict)
    status: str = "ok"
    failure_stage: str = ""
    started: float = field(default_factory=time.perf_counter)


def emit_manifest(state: RunState) -> Path:
    text = config_text(state.cfg)
    lines = [
        f"subcommand = {state.subcommand}",
        f"status = {state.status}",
        f"failure_stage = {state.failure_stage}",
        f"config_sha256 = {hashlib.sha256(text.encode()).hexdigest()}",
        f"seed = {state.seed}",
        f"threads = {state.threads}",
        f"package_version = {__version__}",
        f"python = {platform.python_version()}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        f"wall_time_s = {time.perf_counter() - state.started:.3f}",
    ]
    lines += [f"{k} = {_fmt(v)}" for k, v in state.results.items()]
    path = state.out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    (state.out / "config.ini").write_text(text)
    return path


# -- subcommands -----------------------------------------------------------------------------


def run_factory(st: RunState) -> None:
    cfg = st.cfg
    pair = build_pair(cfg.factory(), cfg.grid())
    pair.to_csv(st.out / "factory.csv")
    st.results.update({f"factory.{k}": v for k, v in pair.report.items()})
    st.results["factory.upsilon0"] = pair.upsilon0


def run_direct(st: RunState) -> None:
    cfg = st.cfg
    grid = cfg.grid()
    pair = build_pair(cfg.factory(), grid)
    amp = cfg.perturbation.direct_amplitude
    q = pair.q0.values.real + make_perturbation(cfg.perturbation_params(), grid, amp).values.real
    sol = solve_direct(pair, q, store="traces")
    rows = []
    for side, tr in sol.neumann.items():
        for m, t in enumerate(sol.times):
            for j, xn in enumerate(grid.xn):
                rows.append({"side": side, "t": t, "x_n": xn, "re_dnu_up": tr[m, j].real, "im_dnu_up": tr[m, j].imag})
    write_csv(st.out / "neumann_trace.csv", rows)
    GridFunction(sol.u_final, grid).to_csv(st.out / "u_final.csv")
    diag = {k: v for k, v in sol.diagnostics.items()}
    diag["rel_dev_u0_max"] = diag.pop("rel_dev_u0")
    for side, tr in sol.neumann.items():
        diag[f"sigma_norm_side_{side!r}"] = sigma_norm(tr, grid)
    write_csv(st.out / "diagnostics.csv", [{"quantity": k, "value": v} for k, v in diag.items()])
    st.results.update({f"direct.{k}": v for k, v in diag.items()})
    st.results["direct.dt"] = grid.dt


def run_elliptic(st: RunState, rng: np.random.Generator) -> None:
    cfg = st.cfg
    rows = elliptic_convergence()
    write_csv(st.out / "elliptic_convergence.csv", rows, ["n_xprime", "h", "error", "order"])
    grid = cfg.grid()
    X, Y = grid.mesh()
    worst = 0.0
    res_rows = []
    for k in range(20):
        phi = rng.standard_normal(grid.shape) * np.exp(-(Y**2) / 4.0)
        rep = resolvent_bound_report(GridFunction(phi, grid))
        for r in rep:
            res_rows.append({"sample": k, "p": r.p, "phi_norm": r.phi_norm, "v_norm": r.v_norm,
                             "ratio": r.ratio, "bound": r.bound, "ok": r.ok})
            worst = max(worst, r.ratio / r.bound)
    write_csv(st.out / "resolvent.csv", res_rows)
    st.results["elliptic.min_order"] = min(r["order"] for r in rows[1:])
    st.results["elliptic.poincare"] = grid.cross_section.poincare
    st.results["elliptic.max_ratio_over_bound"] = worst
    if worst > 1.0 + 1e-6:
        raise NumericalFailure("resolvent bound violated", max_ratio_over_bound=worst)


def run_carleman(st: RunState, rng: np.random.Generator) -> None:
    cfg = st.cfg
    ws = cfg.weight_spec()
    rep = check_assumption(ws.beta, ws.cs, ws.gamma_star)
    (st.out / "assumption.txt").write_text("\n".join(rep.lines()) + "\n")
    st.results.update({"carleman.C0": rep.C0, "carleman.eps_hess": rep.eps_hess,
                       "carleman.Lambda1": rep.Lambda1, "carleman.K": ws.K,
                       "carleman.gamma_star": " ".join(repr(g) for g in ws.gamma_star)})
    if not rep.ok:
        raise NumericalFailure("weight assumption fails", **rep.passed)
    conj = []
    for s in cfg.carleman.conjugation_s:
        for r in conjugation_refinement(ws, s):
            conj.append({"s": s, **r})
    write_csv(st.out / "conjugation.csv", conj, ["s", "level", "n_time", "n_xprime", "residual", "factor", "order"])
    samples = random_samples(rng, cfg.carleman.samples, ws.T)
    s0 = cfg.carleman.s0
    if s0 <= 0:
        s0, coarse = calibrate_s0(ws, samples)
        write_csv(st.out / "carleman_calibration.csv", coarse.rows())
    study = carleman_ratio_study(ws, samples, np.geomspace(s0, 10 * s0, cfg.carleman.sweep_points))
    write_csv(st.out / "carleman_ratio.csv", study.rows())
    st.results.update({"carleman.s0": s0, "carleman.max_ratio": float(study.max_ratio.max()),
                       "carleman.upper_half_nonincreasing": study.upper_half_nonincreasing()})


def _lemma(cfg: RunConfig, pair, reference):
    grid = pair.grid
    ic = cfg.inverse
    rho = make_perturbation(cfg.perturbation_params(), grid, ic.lemma_amplitude).values.real
    sol1 = solve_direct(pair, pair.q0.values.real + rho, store="traces")
    table = lemma_inv_check(rho, pair.u0, reference.up_energy, neumann_difference_sq(sol1, reference), grid,
                            cfg.weight_spec(), np.geomspace(ic.lemma_s_min, ic.lemma_s_max, ic.lemma_points))
    return table


def run_lemma(st: RunState) -> None:
    cfg = st.cfg
    pair = build_pair(cfg.factory(), cfg.grid())
    ref = solve_direct(pair, None, store="traces")
    table = _lemma(cfg, pair, ref)
    write_csv(st.out / "lemma_inv.csv", [{"s": r.s, "lhs": r.lhs, "rhs_interior": r.interior,
                                          "rhs_boundary": r.boundary, "ratio": r.ratio} for r in table.rows])
    st.results.update({"lemma.max_ratio": table.max_ratio,
                       "lemma.upper_half_flat_or_decreasing": table.upper_half_flat_or_decreasing()})


def run_stability(st: RunState) -> None:
    cfg = st.cfg
    pair = build_pair(cfg.factory(), cfg.grid())
    sp = cfg.stability_params()
    ref = solve_direct(pair, None, store="traces")
    table = _lemma(cfg, pair, ref)
    C = table.max_ratio
    rep = stability_sweep(pair, cfg.perturbation_params(), sp, cfg.perturbation.amplitudes, C,
                          threads=st.threads, two_sided=cfg.inverse.two_sided,
                          reference=None if cfg.inverse.two_sided else ref)
    write_csv(st.out / "stability.csv", rep.table())
    st.results.update({"stability.a": sp.a, "stability.b": sp.b, "stability.d_eps": sp.d_eps,
                       "stability.eps": sp.eps, "stability.delta": sp.delta, "stability.theta": sp.theta,
                       "stability.mu_delta": sp.mu_delta, "stability.C_lemma": C, "stability.C_fit": rep.C_fit,
                       "stability.slope": rep.slope, "stability.linear_slope": rep.linear_slope,
                       "stability.mu_quadratic_spread": rep.mu_quadratic_spread, "stability.passed": rep.passed,
                       "stability.warnings": "; ".join(rep.warnings)})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="waveguide-lab", description=__doc__.split("\n\n")[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", default=None, help="INI file with [geometry], [admissible], ... sections")
    p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, default=None, help="seed for random test fields")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent solves")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output = args.out
        if args.threads < 1:
            raise ConfigError("threads", "must be at least 1")
        validate(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    st = RunState(args.subcommand, cfg, out, cfg.seed, args.threads)
    rng = np.random.default_rng(cfg.seed)
    runners = {
        "factory": lambda: run_factory(st),
        "direct": lambda: run_direct(st),
        "elliptic": lambda: run_elliptic(st, rng),
        "carleman": lambda: run_carleman(st, rng),
        "lemma-inv": lambda: run_lemma(st),
        "stability": lambda: run_stability(st),
    }
    code = EXIT_OK
    try:
        runners[args.subcommand]()
    except (NumericalFailure, FloatingPointError, ZeroDivisionError, RuntimeError, ValueError) as exc:
        st.status = "failed"
        st.failure_stage = args.subcommand
        diag = getattr(exc, "diagnostics", {})
        text = [f"error = {exc}", f"type = {type(exc).__name__}"] + [f"{k} = {_fmt(v)}" for k, v in diag.items()]
        (out / "diagnostics.txt").write_text("\n".join(text) + "\n")
        print(f"numerical failure in {args.subcommand}: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    try:
        emit_manifest(st)
    except OSError as exc:
        print(f"cannot write manifest: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.info("wrote %s", out)
    return code


if __name__ == "__main__":
    sys.exit(main())
