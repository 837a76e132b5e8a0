"""Experiment presets, configuration files, CSV/VTK output, and the CLI.

Boundary conditions are hard-wired (no-slip velocity everywhere, natural
conditions for c and mu); configs select physics, stepping, meshing and
output cadence only.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from . import diagnostics as diag
from .fem import FemContext, quadrature
from .mesh import AdaptOptions, build_p2_space, build_rect_mesh
from .physics import PhysParams
from .scheme import (
    NewtonConfig,
    State,
    advance,
    initial_mu,
    norm_matrix,
    recover_physical,
    remesh_state,
)

CSV_HEADER = ("t,E_total,E_kin,E_mix,E_grad,E_pot,D_visc,D_div,D_chem,"
              "law_residual,volume,mass,newton_iters,remeshed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TimeConfig:
    dt: float
    steps: int


@dataclass(frozen=True)
class RunConfig:
    phys: PhysParams
    time: TimeConfig
    newton: NewtonConfig
    adapt: AdaptOptions | None       # None runs on the fixed base mesh
    mesh_n: int
    preset: str                      # kissing | rising | custom
    ic: str                          # kissing | rising
    eps: float
    out_dir: str = "out"
    snap_interval: int = 10
    seed: int = 0


# --------------------------------------------------------------------------
# initial conditions (domain [-1,1]^2)
# --------------------------------------------------------------------------

KISS_R = 0.2 * math.sqrt(2.0)
RISE_R = 0.2
RISE_CENTER = (0.0, -0.6)


def ic_kissing(space, eps: float):
    """Two osculating drops of fluid 2 (c=0) touching at the origin."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    d = KISS_R / math.sqrt(2.0)
    s = 2.0 * math.sqrt(2.0) * eps
    da = np.hypot(x + d, y - d)
    db = np.hypot(x - d, y + d)
    return 0.5 * np.tanh((da - KISS_R) / s) + 0.5 * np.tanh((db - KISS_R) / s)


def ic_rising(space, eps: float):
    """A single light drop (c=1 inside) released below the box center."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    s = 2.0 * math.sqrt(2.0) * eps
    d = np.hypot(x - RISE_CENTER[0], y - RISE_CENTER[1])
    return 0.5 * np.tanh((RISE_R - d) / s) + 0.5


_IC = {"kissing": ic_kissing, "rising": ic_rising}


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

def _kissing_preset(rho2: float) -> RunConfig:
    eps = 0.01
    return RunConfig(
        phys=PhysParams(rho1=1.0, rho2=rho2, Re=1.0, M=1.0 / (10 * eps),
                        Pe=100.0 / eps, C=100.0 * eps**2, invFr2=0.0),
        time=TimeConfig(dt=0.01, steps=50),
        newton=NewtonConfig(tol=1e-8),
        adapt=None,
        mesh_n=32,
        preset="kissing",
        ic="kissing",
        eps=eps,
    )


def _rising_preset(rho2: float, dt: float) -> RunConfig:
    eps = 0.01
    return RunConfig(
        phys=PhysParams(rho1=1.0, rho2=rho2, Re=1.0, M=1.0 / (20 * eps),
                        Pe=1000.0 / eps, C=200.0 * eps**2, invFr2=10.0),
        time=TimeConfig(dt=dt, steps=50),
        newton=NewtonConfig(tol=1e-8),
        adapt=AdaptOptions(h_min=1.0 / 128.0, interval=10),
        mesh_n=32,
        preset="rising",
        ic="rising",
        eps=eps,
    )


_PRESETS = {
    "kissing-matched": lambda: _kissing_preset(1.0),
    "kissing-1to10": lambda: _kissing_preset(10.0),
    "rising-1to2": lambda: _rising_preset(2.0, 0.001),
    "rising-1to50": lambda: _rising_preset(50.0, 0.00025),
}


def preset(name: str) -> RunConfig:
    try:
        cfg = _PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; known: {', '.join(sorted(_PRESETS))}"
        ) from None
    _check_preset(cfg)
    return replace(cfg, out_dir=os.path.join("runs", name))


def _check_preset(cfg: RunConfig):
    """Presets must reproduce the benchmark parameter tables exactly."""
    eps, p = cfg.eps, cfg.phys
    if cfg.preset == "kissing":
        ok = (p.C == 100 * eps**2 and p.M == 1 / (10 * eps)
              and p.Pe == 100 / eps and p.invFr2 == 0.0 and cfg.time.dt == 0.01)
    elif cfg.preset == "rising":
        ok = (p.C == 200 * eps**2 and p.M == 1 / (20 * eps)
              and p.Pe == 1000 / eps and p.invFr2 == 10.0
              and cfg.time.dt in (0.001, 0.00025))
    else:
        ok = True
    if not ok:
        raise ConfigError(f"preset {cfg.preset!r} drifted from its parameter table")


# --------------------------------------------------------------------------
# config files: flat "key = value" lines, '#' comments, dotted groups
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def save_config(cfg: RunConfig, path: str):
    p, t, nw = cfg.phys, cfg.time, cfg.newton
    lines = [
        f"# nsch2d {__version__} run configuration",
        f"run.preset = {cfg.preset}",
        f"run.out = {cfg.out_dir}",
        f"run.snap_interval = {cfg.snap_interval}",
        f"run.seed = {cfg.seed}",
        f"ic.kind = {cfg.ic}",
        f"ic.eps = {_fmt(cfg.eps)}",
        f"mesh.n = {cfg.mesh_n}",
        f"phys.rho1 = {_fmt(p.rho1)}",
        f"phys.rho2 = {_fmt(p.rho2)}",
        f"phys.Re = {_fmt(p.Re)}",
        f"phys.M = {_fmt(p.M)}",
        f"phys.Pe = {_fmt(p.Pe)}",
        f"phys.C = {_fmt(p.C)}",
        f"phys.invFr2 = {_fmt(p.invFr2)}",
        f"phys.rho0 = {'default' if p.rho0 is None else _fmt(p.rho0)}",
        f"time.dt = {_fmt(t.dt)}",
        f"time.steps = {t.steps}",
        f"newton.tol = {_fmt(nw.tol)}",
        f"newton.max_iter = {nw.max_iter}",
        f"newton.max_halvings = {nw.max_halvings}",
    ]
    a = cfg.adapt
    lines.append(f"adapt.interval = {0 if a is None else a.interval}")
    if a is not None:
        lines += [
            f"adapt.refine_frac = {_fmt(a.refine_frac)}",
            f"adapt.coarsen_frac = {_fmt(a.coarsen_frac)}",
            f"adapt.h_min = {_fmt(a.h_min)}",
            f"adapt.max_depth = {a.max_depth}",
        ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_config(path: str) -> RunConfig:
    raw: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
            key, val = (s.strip() for s in text.split("=", 1))
            if not key or not val:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = val

    def take(key, conv, default=None):
        if key not in raw:
            if default is None:
                raise ConfigError(f"{path}: missing required key {key!r}")
            return default
        try:
            return conv(raw.pop(key))
        except ConfigError:
            raise
        except Exception:
            raise ConfigError(f"{path}: bad value for {key!r}") from None

    rho0_raw = raw.pop("phys.rho0", "default")
    rho0 = None if rho0_raw == "default" else float(rho0_raw)
    phys = PhysParams(
        rho1=take("phys.rho1", float), rho2=take("phys.rho2", float),
        Re=take("phys.Re", float), M=take("phys.M", float),
        Pe=take("phys.Pe", float), C=take("phys.C", float),
        invFr2=take("phys.invFr2", float), rho0=rho0,
    )
    time_cfg = TimeConfig(dt=take("time.dt", float), steps=take("time.steps", int))
    newton = NewtonConfig(
        tol=take("newton.tol", float),
        max_iter=take("newton.max_iter", int, NewtonConfig.max_iter),
        max_halvings=take("newton.max_halvings", int, NewtonConfig.max_halvings),
    )
    interval = take("adapt.interval", int, 0)
    if interval > 0:
        adapt = AdaptOptions(
            refine_frac=take("adapt.refine_frac", float, AdaptOptions.refine_frac),
            coarsen_frac=take("adapt.coarsen_frac", float, AdaptOptions.coarsen_frac),
            h_min=take("adapt.h_min", float, AdaptOptions.h_min),
            max_depth=take("adapt.max_depth", int, AdaptOptions.max_depth),
            interval=interval,
        )
    else:
        adapt = None
        for k in list(raw):
            if k.startswith("adapt."):
                raw.pop(k)
    ic = take("ic.kind", str)
    if ic not in _IC:
        raise ConfigError(f"{path}: ic.kind must be one of {sorted(_IC)}, got {ic!r}")
    cfg = RunConfig(
        phys=phys, time=time_cfg, newton=newton, adapt=adapt,
        mesh_n=take("mesh.n", int),
        preset=take("run.preset", str, "custom"),
        ic=ic,
        eps=take("ic.eps", float),
        out_dir=take("run.out", str, "out"),
        snap_interval=take("run.snap_interval", int, 10),
        seed=take("run.seed", int, 0),
    )
    if raw:
        raise ConfigError(f"{path}: unknown keys: {', '.join(sorted(raw))}")
    if cfg.preset != "custom":
        _check_preset(cfg)
    return cfg


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def provenance_lines(cfg: RunConfig) -> list[str]:
    """Comment block prefixed to every output file: full config echo plus
    flags for values the experiment definitions leave open."""
    out = [f"nsch2d {__version__}"]
    p = cfg.phys
    out.append(f"preset = {cfg.preset}  ic = {cfg.ic}  eps = {_fmt(cfg.eps)}")
    out.append(f"mesh.n = {cfg.mesh_n}  dt = {_fmt(cfg.time.dt)}  steps = {cfg.time.steps}")
    out.append(
        f"phys: rho1={_fmt(p.rho1)} rho2={_fmt(p.rho2)} Re={_fmt(p.Re)} "
        f"M={_fmt(p.M)} Pe={_fmt(p.Pe)} C={_fmt(p.C)} invFr2={_fmt(p.invFr2)}"
    )
    flags = []
    if cfg.preset != "custom":
        flags.append("Re defaulted to 1 (not part of the experiment definition)")
    if p.rho0_defaulted:
        flags.append("rho0 defaulted to rho2 (not part of the experiment definition)")
    for f in flags:
        out.append(f"note: {f}")
    out.append(f"newton: tol={_fmt(cfg.newton.tol)} max_iter={cfg.newton.max_iter}")
    a = cfg.adapt
    if a is None:
        out.append("adapt: off (fixed mesh)")
    else:
        out.append(f"adapt: interval={a.interval} h_min={_fmt(a.h_min)} "
                   f"refine_frac={_fmt(a.refine_frac)} coarsen_frac={_fmt(a.coarsen_frac)}")
    return out


class TimeseriesWriter:
    """Appends rows of the fixed CSV schema, flushing after every row."""

    def __init__(self, path: str, cfg: RunConfig):
        self.path = path
        try:
            self.fh = open(path, "w")
        except OSError as exc:
            raise OSError(f"cannot open timeseries file {path}: {exc}") from exc
        for line in provenance_lines(cfg):
            self.fh.write(f"# {line}\n")
        self.fh.write(CSV_HEADER + "\n")
        self.fh.flush()
        self.rows = 0

    def write_row(self, t, e: diag.EnergyBreakdown, law, vol, mass_, iters, remeshed):
        law_vals = ((law.viscous, law.divergence, law.chemical, law.law_residual)
                    if law is not None else (math.nan,) * 4)
        vals = (t, e.total, e.kinetic, e.mixing, e.gradient, e.potential,
                *law_vals, vol, mass_, float(iters), float(remeshed))
        # v + 0.0 turns IEEE negative zeros into plain 0
        self.fh.write(",".join(f"{v + 0.0:.17g}" for v in vals) + "\n")
        self.fh.flush()
        self.rows += 1

    def close(self):
        self.fh.close()


def write_snapshot(path: str, state: State, params: PhysParams, div_u, title: str):
    """VTK legacy ASCII snapshot: 6-node quadratic triangles (cell type 22).

    Point data: c, mu, p_hat, div_u scalars and the recovered physical
    velocity as a 3-padded vector.
    """
    space = state.space
    u, p_hat = recover_physical(state, params)
    # local dofs are [v0 v1 v2 | midpoints opposite each vertex]; the cell
    # type wants corner nodes then midpoints of edges 01, 12, 20
    cells = space.cell_dofs[:, [0, 1, 2, 5, 3, 4]]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {space.ndof} double\n")
        np.savetxt(fh, np.column_stack([space.dof_coords,
                                        np.zeros(space.ndof)]), fmt="%.17g")
        fh.write(f"CELLS {len(cells)} {len(cells) * 7}\n")
        np.savetxt(fh, np.column_stack([np.full(len(cells), 6), cells]), fmt="%d")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        np.savetxt(fh, np.full(len(cells), 22, dtype=int), fmt="%d")
        fh.write(f"POINT_DATA {space.ndof}\n")
        for name, vals in (("c", state.c), ("mu", state.mu),
                           ("p_hat", p_hat), ("div_u", div_u)):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, np.asarray(vals), fmt="%.17g")
        fh.write("VECTORS u double\n")
        np.savetxt(fh, np.column_stack([u, np.zeros(space.ndof)]), fmt="%.17g")


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

def initial_state(cfg: RunConfig, degree: int = 6):
    space = build_p2_space(build_rect_mesh(cfg.mesh_n, cfg.mesh_n))
    ctx = FemContext(space, quadrature(degree))
    c = _IC[cfg.ic](space, cfg.eps)
    p = np.zeros(space.ndof)
    mu = initial_mu(ctx, c, p, cfg.phys)
    return State(0.0, space, np.zeros((space.ndof, 2)), p, c, mu), ctx


def _snapshot_title(cfg: RunConfig, t: float) -> str:
    return (f"nsch2d {__version__} preset={cfg.preset} ic={cfg.ic} t={t:.9g} "
            f"Re={_fmt(cfg.phys.Re)} rho0="
            f"{'rho2(default)' if cfg.phys.rho0 is None else _fmt(cfg.phys.rho0)}")


def run_experiment(cfg: RunConfig, log=print):
    """March cfg.time.steps steps, streaming CSV rows and VTK snapshots.

    Returns (final_state, reports). Rows are written for the initial state
    and after every step; a snapshot goes out at t=0, every snap_interval
    steps, and at the end.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_config(cfg, os.path.join(cfg.out_dir, "config.txt"))
    state, ctx = initial_state(cfg)
    params, dt = cfg.phys, cfg.time.dt
    writer = TimeseriesWriter(os.path.join(cfg.out_dir, "timeseries.csv"), cfg)

    def emit_snapshot(k, st, context):
        div = diag.divergence_field(context, params, st)
        path = os.path.join(cfg.out_dir, f"snap_{k:06d}.vtk")
        write_snapshot(path, st, params, div, _snapshot_title(cfg, st.t))

    writer.write_row(0.0, diag.energy(ctx, params, state), None,
                     diag.volume(ctx, state), diag.mass(ctx, params, state), 0, 0)
    emit_snapshot(0, state, ctx)

    normN = norm_matrix(ctx)
    reports = []
    for k in range(1, cfg.time.steps + 1):
        new, rep = advance(state, params, dt, cfg.newton, ctx, normN=normN)
        # the per-step law only holds over a single unhalved step
        law = (diag.law_report(ctx, params, dt, state, new)
               if rep.dt_halvings == 0 else None)
        if rep.dt_halvings:
            log(f"step {k}: converged with {rep.dt_halvings} dt halvings")
        state = new
        e = diag.energy(ctx, params, state)
        remeshed = 0
        if cfg.adapt is not None and cfg.adapt.interval > 0 and k % cfg.adapt.interval == 0:
            moved, changed = remesh_state(state, cfg.adapt)
            if changed:
                remeshed = 1
                rep.remeshed = True
                new_ctx = FemContext(moved.space, quadrature(6))
                e_moved = diag.energy(new_ctx, params, moved)
                log(f"step {k}: remeshed to {len(moved.space.mesh.triangles)} "
                    f"triangles, transfer energy jump {e_moved.total - e.total:+.3e}")
                state, ctx, e = moved, new_ctx, e_moved
                normN = norm_matrix(ctx)
        writer.write_row(state.t, e, law, diag.volume(ctx, state),
                         diag.mass(ctx, params, state), rep.iterations, remeshed)
        if k % max(cfg.snap_interval, 1) == 0 or k == cfg.time.steps:
            emit_snapshot(k, state, ctx)
        reports.append(rep)
    writer.close()
    return state, reports


# --------------------------------------------------------------------------
# verification commands
# --------------------------------------------------------------------------

def verify_jacobian(preset_name: str = "kissing-1to10", n: int = 16,
                    directions: int = 10, seed: int = 0, log=print) -> float:
    """Directional-derivative check of the analytic Jacobian at the first
    Newton state of a preset run; returns the worst relative error."""
    from . import scheme

    cfg = replace(preset(preset_name), mesh_n=n)
    state, ctx = initial_state(cfg)
    params, dt = cfg.phys, cfg.time.dt
    prev = (state.u, state.p, state.c, state.mu)
    nd = state.space.ndof
    base = np.concatenate([state.u[:, 0], state.u[:, 1], state.p,
                           state.c, state.mu])
    J = scheme.jacobian(ctx, params, dt, prev, scheme.split_blocks(base, nd))
    rng = np.random.default_rng(seed)
    h = 1e-5
    worst = 0.0
    for k in range(directions):
        d = rng.standard_normal(5 * nd)
        d /= np.linalg.norm(d)
        rp = scheme.residual(ctx, params, dt, prev, scheme.split_blocks(base + h * d, nd))
        rm = scheme.residual(ctx, params, dt, prev, scheme.split_blocks(base - h * d, nd))
        fd = (rp - rm) / (2 * h)
        an = J @ d
        rel = np.linalg.norm(fd - an) / max(np.linalg.norm(an), 1e-300)
        worst = max(worst, rel)
        log(f"direction {k + 1:2d}/{directions}: relative error {rel:.3e}")
    return worst


def verify_energy_law(preset_name: str = "kissing-1to10", levels: int = 3,
                      steps: int = 3, base_n: int = 16, log=print):
    """Refinement sweep of |rate + dissipation| / dissipation.

    Returns the per-level mean ratios; the caller decides pass/fail.
    """
    cfg = preset(preset_name)
    ratios = []
    for lev in range(levels):
        n = base_n * 2**lev
        lcfg = replace(cfg, mesh_n=n, adapt=None)
        state, ctx = initial_state(lcfg)
        level_vals = []
        for _ in range(steps):
            new, _ = advance(state, cfg.phys, cfg.time.dt, cfg.newton, ctx)
            rep = diag.law_report(ctx, cfg.phys, cfg.time.dt, state, new)
            level_vals.append(rep.law_residual / rep.dissipation)
            state = new
        ratios.append(float(np.mean(level_vals)))
        log(f"level {lev + 1} ({n}x{n}): law residual / dissipation = {ratios[-1]:.3e}")
    return ratios


# --------------------------------------------------------------------------
# CLI
# --------------------------------------------------------------------------

def _build_parser():
    ap = argparse.ArgumentParser(prog="nsch2d",
                                 description="two-phase flow stepping and checks")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="march an experiment and write CSV/VTK")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="path to a key = value config file")
    src.add_argument("--preset", help=f"one of: {', '.join(sorted(_PRESETS))}")
    run_p.add_argument("--out", help="output directory override")
    run_p.add_argument("--steps", type=int, help="step count override")

    ver = sub.add_parser("verify", help="verification suites")
    vsub = ver.add_subparsers(dest="check", required=True)
    vj = vsub.add_parser("jacobian", help="finite-difference Jacobian check")
    vj.add_argument("--preset", default="kissing-1to10")
    ve = vsub.add_parser("energy-law", help="energy-law residual refinement sweep")
    ve.add_argument("--preset", default="kissing-1to10")
    ve.add_argument("--levels", type=int, default=3)

    sg = sub.add_parser("sigma", help="1D surface-tension estimate")
    sg.add_argument("--eps", type=float, default=0.01)
    sg.add_argument("--rho1", type=float, default=1.0)
    sg.add_argument("--rho2", type=float, default=1.0)
    sg.add_argument("--C", type=float, default=None, help="default 100*eps^2")
    sg.add_argument("--M", type=float, default=None, help="default 1/(10*eps)")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.cmd == "run":
        try:
            cfg = load_config(args.config) if args.config else preset(args.preset)
        except (ConfigError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.steps is not None:
            cfg = replace(cfg, time=replace(cfg.time, steps=args.steps))
        state, reports = run_experiment(cfg)
        print(f"finished at t={state.t:.6g} after {len(reports)} steps; "
              f"output in {cfg.out_dir}")
        return 0
    if args.cmd == "verify" and args.check == "jacobian":
        worst = verify_jacobian(args.preset)
        ok = worst < 1e-6
        print(f"jacobian: worst relative error {worst:.3e} "
              f"({'ok' if ok else 'FAIL, tolerance 1e-6'})")
        return 0 if ok else 1
    if args.cmd == "verify" and args.check == "energy-law":
        ratios = verify_energy_law(args.preset, levels=args.levels)
        # matched densities sit at the rounding floor from level one; only
        # demand decrease while the ratio is above it
        decreasing = all(b < a or b < 1e-12 for a, b in zip(ratios, ratios[1:]))
        ok = decreasing and ratios[-1] < 1e-2
        print(f"energy-law: ratios {' -> '.join(f'{r:.3e}' for r in ratios)} "
              f"({'ok' if ok else 'FAIL: need decreasing levels and < 1e-2'})")
        return 0 if ok else 1
    if args.cmd == "sigma":
        eps = args.eps
        C = 100.0 * eps**2 if args.C is None else args.C
        M = 1.0 / (10.0 * eps) if args.M is None else args.M
        params = PhysParams(rho1=args.rho1, rho2=args.rho2, Re=1.0, M=M,
                            Pe=1.0, C=C, invFr2=0.0)
        z, c = diag.tanh_profile(eps)
        sigma = diag.surface_tension_1d(params, z, c)
        print(f"sigma = {sigma:.9g}")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
