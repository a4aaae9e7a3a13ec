"""
Command line harness: ``spwell solve | sweep | verify``.

Configuration files are flat ``key = value`` text; dotted keys group related
settings.  Recognised keys and defaults are listed in ``DEFAULTS``.  Lists are
comma separated, and ``p`` accepts fractions such as ``8/3``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from .analysis import (fit_decay, h1_distance, localization_mass, moser_linf_bound, radial_profile)
from .functional import Constants, Functional, SolverError, SolverParams
from .grid import (BOUNDED_WELL, UNBOUNDED_WELL, TABULATED_3D, TABULATED_RADIAL, GridError,
                   PotentialSpec, build_grid, load_box_table, load_radial_table)
from .solver import (COLLAPSED, CONVERGED, EXHAUSTED, SolveReport, mountain_pass_solve,
                     solve_dirichlet_limit)

log = logging.getLogger("spwell")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_COLLAPSED = 2
EXIT_EXHAUSTED = 3
EXIT_CONFIG = 64

OUTCOME_EXIT = {CONVERGED: EXIT_OK, COLLAPSED: EXIT_COLLAPSED, EXHAUSTED: EXIT_EXHAUSTED}

CSV_COLUMNS = ("lambda", "mu", "p", "outcome", "energy", "norm_lambda", "linf", "residual_max",
               "nehari_defect", "beta_fit", "A_fit", "mass_in_omega", "dist_to_limit")

DEFAULTS = {
    "grid.kind": "radial",
    "grid.L": "12",
    "grid.n": "2000",
    "potential.kind": BOUNDED_WELL,
    "potential.b": "1",
    "potential.file": "",
    "p": "8/3",
    "lambda": "200",
    "mu": "0.1",
    "mu.scale": "fraction",
    "solver.tol": "1e-8",
    "solver.mp_tol": "1e-2",
    "solver.path_nodes": "32",
    "solver.max_outer": "4000",
    "solver.newton_max": "40",
    "sweep.limit": "dirichlet",
    "decay.R": "auto",
    "output.dir": "out",
    "seed": "0",
    "verify.criteria": "all",
    "verify.mu_fraction": "0.1",
    "verify.kernel_origin_scale": "1",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    grid_kind: str
    L: float
    n: int
    potential_kind: str
    b: float
    potential_file: str
    p: float
    lambdas: tuple
    mus: tuple
    mu_scale: str
    tol: float
    mp_tol: float
    path_nodes: int
    max_outer: int
    newton_max: int
    sweep_limit: str
    decay_R: float | None
    out: str
    seed: int
    criteria: tuple | None
    mu_fraction: float
    kernel_origin_scale: float

    # -- parsing -----------------------------------------------------------
    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
        cp.optionxform = str
        try:
            cp.read_string("[config]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        raw = dict(DEFAULTS)
        for key, val in cp["config"].items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
            raw[key] = val.strip()
        return cls.from_mapping(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_text(text)

    @classmethod
    def default(cls) -> "ExperimentConfig":
        return cls.from_mapping(dict(DEFAULTS))

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        def num(key, conv=float):
            try:
                v = conv(Fraction(raw[key])) if conv is float else conv(raw[key])
            except (ValueError, ZeroDivisionError):
                raise ConfigError(f"{key}: not a number: {raw[key]!r}") from None
            if conv is float and not math.isfinite(v):
                raise ConfigError(f"{key}: must be finite")
            return v

        def lst(key):
            items = [s.strip() for s in raw[key].split(",") if s.strip()]
            if not items:
                raise ConfigError(f"{key}: schedule is empty")
            try:
                return tuple(float(Fraction(s)) for s in items)
            except (ValueError, ZeroDivisionError):
                raise ConfigError(f"{key}: bad schedule {raw[key]!r}") from None

        p = num("p")
        if not 2.0 < p < 6.0:
            raise ConfigError("p must lie in (2, 6)")
        lambdas, mus = lst("lambda"), lst("mu")
        if any(x <= 0 for x in lambdas):
            raise ConfigError("lambda values must be positive")
        if any(x < 0 for x in mus):
            raise ConfigError("mu values must be nonnegative")
        if raw["mu.scale"] not in ("fraction", "absolute"):
            raise ConfigError("mu.scale must be 'fraction' or 'absolute'")
        if raw["sweep.limit"] not in ("dirichlet", "none"):
            raise ConfigError("sweep.limit must be 'dirichlet' or 'none'")
        if raw["potential.kind"] not in (BOUNDED_WELL, UNBOUNDED_WELL, TABULATED_RADIAL, TABULATED_3D):
            raise ConfigError(f"unknown potential.kind {raw['potential.kind']!r}")
        seed = num("seed", int)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        crit = raw["verify.criteria"]
        if crit == "all":
            criteria = None
        else:
            try:
                criteria = tuple(int(c) for c in crit.split(",") if c.strip())
            except ValueError:
                raise ConfigError(f"verify.criteria: {crit!r}") from None
        R = None if raw["decay.R"] == "auto" else num("decay.R")
        cfg = cls(
            grid_kind=raw["grid.kind"], L=num("grid.L"), n=num("grid.n", int),
            potential_kind=raw["potential.kind"], b=num("potential.b"), potential_file=raw["potential.file"],
            p=p, lambdas=lambdas, mus=mus, mu_scale=raw["mu.scale"],
            tol=num("solver.tol"), mp_tol=num("solver.mp_tol"), path_nodes=num("solver.path_nodes", int),
            max_outer=num("solver.max_outer", int), newton_max=num("solver.newton_max", int),
            sweep_limit=raw["sweep.limit"], decay_R=R, out=raw["output.dir"], seed=seed,
            criteria=criteria, mu_fraction=num("verify.mu_fraction"),
            kernel_origin_scale=num("verify.kernel_origin_scale"),
        )
        try:
            cfg.grid()
            cfg.potential()
        except (GridError, OSError) as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    # -- derived objects ---------------------------------------------------
    def grid(self):
        return _grid(self.grid_kind, self.L, self.n)

    def potential(self) -> PotentialSpec:
        if self.potential_kind == TABULATED_RADIAL:
            return load_radial_table(self.potential_file, self.b)
        if self.potential_kind == TABULATED_3D:
            return load_box_table(self.potential_file, self.L, self.n, self.b)
        return PotentialSpec(self.potential_kind, self.b)

    def params(self, lam: float, mu: float, T: float) -> SolverParams:
        return SolverParams(lam=lam, mu=mu, p=self.p, T=T, tol=self.tol, mp_tol=self.mp_tol,
                            path_nodes=self.path_nodes, max_outer=self.max_outer,
                            newton_max=self.newton_max, seed=self.seed)


@lru_cache(maxsize=8)
def _grid(kind, L, n):
    return build_grid(kind, L, n)


@lru_cache(maxsize=4)
def _setup(cfg: ExperimentConfig):
    """Grid, potential samples, well bottom and constants (cached per process)."""
    grid = cfg.grid()
    spec = cfg.potential()
    V = spec.sample(grid)
    omega = spec.omega(grid)
    C = Constants.build(grid, omega, cfg.p, V)
    return grid, spec, V, omega, C


def _mu_abs(cfg: ExperimentConfig, mu: float, C: Constants) -> float:
    return mu * C.mu_star if cfg.mu_scale == "fraction" else mu


def decay_radius(cfg: ExperimentConfig, grid, spec, V) -> float:
    """Onset radius of the decay envelope: the outer edge of ``{V < b}``."""
    if cfg.decay_R is not None:
        return cfg.decay_R
    r = grid.radius
    inside = V < spec.b
    if not inside.any():
        return grid.h
    return float(np.max(r[inside])) + grid.h


# ---------------------------------------------------------------------------
# one parameter point


def _metrics(cfg, grid, spec, V, omega, C, lam, rep: SolveReport, limit=None) -> dict:
    out = {"beta_fit": None, "A_fit": None, "mass_in_omega": None, "dist_to_limit": None,
           "decay": None, "moser": None}
    if not rep.converged:
        return out
    u = rep.solution
    out["mass_in_omega"] = localization_mass(grid, u, omega)
    try:
        fit = fit_decay(grid, u, lam, decay_radius(cfg, grid, spec, V))
        out["beta_fit"], out["A_fit"] = fit.beta, fit.A
        out["decay"] = fit.as_dict()
    except ValueError as exc:
        out["decay"] = {"error": str(exc)}
    d_p = C.d_s.get(cfg.p)
    if d_p:
        c0 = moser_linf_bound(cfg.p, C.T, C.S, d_p)
        out["moser"] = {"C0": c0, "d_p": d_p, "T": C.T, "S": C.S, "linf": rep.linf,
                        "satisfied": bool(rep.linf <= c0), "d_p_source": "seed-pinned random corpus"}
    if limit is not None:
        out["dist_to_limit"] = h1_distance(grid, u, limit)
    return out


def _limit_task(cfg: ExperimentConfig, mu: float):
    grid, spec, V, omega, C = _setup(cfg)
    mu_abs = _mu_abs(cfg, mu, C)
    prm = cfg.params(1.0, mu_abs, C.T)
    rep = solve_dirichlet_limit(omega, mu_abs, cfg.p, grid, prm, C)
    return rep.solution if rep.converged else None


def _point_task(cfg: ExperimentConfig, lam: float, mu: float, limit=None):
    grid, spec, V, omega, C = _setup(cfg)
    mu_abs = _mu_abs(cfg, mu, C)
    try:
        fun = Functional(grid, V, cfg.params(lam, mu_abs, C.T))
        rep = mountain_pass_solve(fun, C.e0)
    except (SolverError, ValueError, ArithmeticError) as exc:
        return {"lambda": lam, "mu": mu_abs, "p": cfg.p, "outcome": "Failed", "error": str(exc)}, None
    m = _metrics(cfg, grid, spec, V, omega, C, lam, rep, limit)
    rec = {"lambda": lam, "mu": mu_abs, "p": cfg.p}
    rec.update(rep.record())
    rec.update({k: m[k] for k in ("mass_in_omega", "beta_fit", "A_fit", "dist_to_limit", "decay", "moser")})
    rec["constants"] = {"mu_star": C.mu_star, "M": C.M, "T": C.T, "S": C.S}
    return rec, rep


def _map(fn, args, jobs: int):
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futures]  # submission order, not completion order


def _point_record_only(cfg, lam, mu, limit):
    return _point_task(cfg, lam, mu, limit)[0]


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def _json_line(rec: dict) -> str:
    return json.dumps(_clean(rec), separators=(",", ":"), allow_nan=False)


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def _svg_figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "spwell"
    plt.rcParams["svg.fonttype"] = "path"
    return plt


def _save_svg(plt, fig, path: Path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_profile_plot(path: Path, r, u, phi, title: str):
    plt = _svg_figure()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(r, u, label="u")
    ax.plot(r, phi, label="phi_u")
    ax.set_xlabel("r")
    ax.set_title(title)
    ax.legend()
    _save_svg(plt, fig, path)


def write_sweep_plot(path: Path, rows: list):
    plt = _svg_figure()
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for mu in sorted({r["mu"] for r in rows}):
        sel = [r for r in rows if r["mu"] == mu and r.get("mass_in_omega") is not None]
        if not sel:
            continue
        lam = [r["lambda"] for r in sel]
        axes[0].plot(lam, [r["mass_in_omega"] for r in sel], marker="o", label=f"mu={mu:.3g}")
        d = [(r["lambda"], r["dist_to_limit"]) for r in sel if r.get("dist_to_limit") is not None]
        if d:
            axes[1].plot(*zip(*d), marker="o", label=f"mu={mu:.3g}")
    for ax, name in zip(axes, ("mass_in_omega", "dist_to_limit")):
        ax.set_xscale("log")
        ax.set_xlabel("lambda")
        ax.set_ylabel(name)
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
    _save_svg(plt, fig, path)


def write_sweep_csv(path: Path, rows: list):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        ok = r.get("outcome") == CONVERGED
        cells = []
        for col in CSV_COLUMNS:
            if col in ("lambda", "mu", "p"):
                cells.append(_fmt(r[col]))
            elif col == "outcome":
                cells.append(r["outcome"])
            else:
                cells.append(_fmt(r.get(col)) if ok else "")
        w.writerow(cells)
    path.write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: ExperimentConfig, jobs: int = 1) -> int:
    if len(cfg.lambdas) != 1 or len(cfg.mus) != 1:
        raise ConfigError("solve takes a single lambda and a single mu")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lam, mu = cfg.lambdas[0], cfg.mus[0]
    rec, rep = _point_task(cfg, lam, mu)
    (out / "report.json").write_text(_json_line(rec) + "\n", encoding="utf-8")
    if rep is None:
        log.error("solve failed: %s", rec.get("error"))
        return EXIT_EXHAUSTED
    grid = _setup(cfg)[0]
    from .poisson import newton_potential

    u = rep.solution
    r, up = radial_profile(grid, u)
    _, phip = radial_profile(grid, newton_potential(grid, u * u))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("r", "u", "phi_u"))
    for row in zip(r, up, phip):
        w.writerow([_fmt(v) for v in row])
    (out / "profile.csv").write_text(buf.getvalue(), encoding="utf-8")
    write_profile_plot(out / "profile.svg", r, up, phip, f"{rep.outcome}: lambda={lam:g}, mu={rec['mu']:.3g}")
    print(_json_line({k: rec[k] for k in ("lambda", "mu", "p", "outcome", "energy", "norm_lambda",
                                          "residual_max")}))
    return OUTCOME_EXIT[rep.outcome]


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> list:
    """All ``(lambda, mu)`` records in lambda-major order."""
    limits = {}
    if cfg.sweep_limit == "dirichlet":
        sols = _map(_limit_task, [(cfg, mu) for mu in cfg.mus], jobs)
        limits = dict(zip(cfg.mus, sols))
    args = [(cfg, lam, mu, limits.get(mu)) for lam in cfg.lambdas for mu in cfg.mus]
    return _map(_point_record_only, args, jobs)


def cmd_sweep(cfg: ExperimentConfig, jobs: int = 1) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(cfg, jobs)
    write_sweep_csv(out / "sweep.csv", rows)
    (out / "sweep.jsonl").write_text("".join(_json_line(r) + "\n" for r in rows), encoding="utf-8")
    write_sweep_plot(out / "sweep.svg", rows)
    n_ok = sum(r["outcome"] == CONVERGED for r in rows)
    print(f"{n_ok}/{len(rows)} converged; wrote {out / 'sweep.csv'}")
    return EXIT_OK if n_ok else EXIT_FAIL


def cmd_verify(cfg: ExperimentConfig, jobs: int = 1) -> int:
    from .acceptance import run_criteria

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    failed = False
    for verdict in run_criteria(cfg.criteria, config=cfg, jobs=jobs):
        line = _json_line(verdict)
        lines.append(line)
        print(line, flush=True)
        failed |= verdict["status"] == "fail"
    (out / "verify.jsonl").write_text("".join(s + "\n" for s in lines), encoding="utf-8")
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spwell", description=__doc__.strip().splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", metavar="PATH", help="key = value configuration file")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    ap.add_argument("--jobs", metavar="N", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--seed", metavar="U64", type=int, help="path perturbation seed (overrides seed)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.default()
        if args.out:
            cfg = replace(cfg, out=args.out)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        return COMMANDS[args.command](cfg, args.jobs)
    except ConfigError as exc:
        print(f"spwell: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
