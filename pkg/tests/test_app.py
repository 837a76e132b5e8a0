"""Presets, config files, CSV/VTK writers, and the CLI."""

import math
import os
from dataclasses import replace

import numpy as np
import pytest

from nsch2d import app
from nsch2d import diagnostics as diag
from nsch2d.app import ConfigError, RunConfig, TimeConfig
from nsch2d.fem import FemContext, n_threads, quadrature
from nsch2d.mesh import AdaptOptions, build_p2_space, build_rect_mesh
from nsch2d.physics import PhysParams
from nsch2d.scheme import NewtonConfig, State


def space_ctx(n, degree=6):
    space = build_p2_space(build_rect_mesh(n, n))
    return space, FemContext(space, quadrature(degree))


def state_from_c(space, c):
    z = np.zeros(space.ndof)
    return State(0.0, space, np.zeros((space.ndof, 2)), z, c, z)


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

def test_kissing_presets_match_parameter_table():
    for name, rho2 in (("kissing-matched", 1.0), ("kissing-1to10", 10.0)):
        cfg = app.preset(name)
        eps, p = cfg.eps, cfg.phys
        assert eps == 0.01
        assert (p.rho1, p.rho2) == (1.0, rho2)
        assert p.C == 100 * eps**2
        assert p.M == 1 / (10 * eps)
        assert p.Pe == 100 / eps
        assert p.invFr2 == 0.0
        assert p.Re == 1.0 and p.rho0 is None
        assert cfg.time.dt == 0.01 and cfg.time.steps == 50
        assert cfg.newton.tol == 1e-8
        assert cfg.adapt is None and cfg.mesh_n == 32
        assert cfg.ic == "kissing"


def test_rising_presets_match_parameter_table():
    for name, rho2, dt in (("rising-1to2", 2.0, 0.001),
                           ("rising-1to50", 50.0, 0.00025)):
        cfg = app.preset(name)
        eps, p = cfg.eps, cfg.phys
        assert eps == 0.01
        assert (p.rho1, p.rho2) == (1.0, rho2)
        assert p.C == 200 * eps**2
        assert p.M == 1 / (20 * eps)
        assert p.Pe == 1000 / eps
        assert p.invFr2 == 10.0
        assert cfg.time.dt == dt
        assert cfg.adapt is not None and cfg.adapt.h_min == 1 / 128
        assert cfg.ic == "rising"


def test_unknown_preset_raises():
    with pytest.raises(ConfigError, match="no-such-preset"):
        app.preset("no-such-preset")


# --------------------------------------------------------------------------
# initial conditions
# --------------------------------------------------------------------------

def test_ic_kissing_saturation_and_volume():
    space, ctx = space_ctx(32)
    c = app.ic_kissing(space, 0.01)
    xy = space.dof_coords
    corner = int(np.argmin(np.hypot(xy[:, 0] - 1, xy[:, 1] - 1)))
    center = int(np.argmin(np.hypot(xy[:, 0], xy[:, 1])))
    assert abs(c[corner] - 1.0) < 1e-12
    assert abs(c[center]) < 1e-6
    vol = diag.volume(ctx, state_from_c(space, c))
    assert abs(vol - 3.49321) < 2e-3


def test_ic_rising_saturation_and_volume():
    space, ctx = space_ctx(32)
    c = app.ic_rising(space, 0.01)
    xy = space.dof_coords
    inside = int(np.argmin(np.hypot(xy[:, 0], xy[:, 1] + 0.6)))
    far = int(np.argmin(np.hypot(xy[:, 0], xy[:, 1] - 0.9)))
    assert c[inside] > 1 - 1e-5
    assert abs(c[far]) < 1e-12
    vol = diag.volume(ctx, state_from_c(space, c))
    assert abs(vol - 0.127731) < 2e-3


# --------------------------------------------------------------------------
# config files
# --------------------------------------------------------------------------

def custom_config():
    return RunConfig(
        phys=PhysParams(rho1=1.0, rho2=3.5, Re=2.0, M=0.25, Pe=40.0,
                        C=0.05, invFr2=7.0, rho0=1.5),
        time=TimeConfig(dt=0.005, steps=12),
        newton=NewtonConfig(tol=1e-7, max_iter=12, max_halvings=2),
        adapt=AdaptOptions(refine_frac=0.2, coarsen_frac=0.01,
                           h_min=1 / 64, max_depth=8, interval=3),
        mesh_n=12,
        preset="custom",
        ic="rising",
        eps=0.03,
        out_dir="somewhere",
        snap_interval=4,
        seed=11,
    )


def test_config_roundtrip_presets_and_custom(tmp_path):
    path = str(tmp_path / "cfg.txt")
    for cfg in [app.preset(n) for n in ("kissing-matched", "kissing-1to10",
                                        "rising-1to2", "rising-1to50")] + [custom_config()]:
        app.save_config(cfg, path)
        assert app.load_config(path) == cfg


def test_config_comments_and_spacing(tmp_path):
    cfg = app.preset("kissing-matched")
    path = tmp_path / "cfg.txt"
    app.save_config(cfg, str(path))
    text = path.read_text()
    # leading comment, inline comments, and loose spacing must all parse
    mangled = "# a comment\n\n" + text.replace(
        "phys.Re = 1.0", "phys.Re=1.0   # inline note")
    path.write_text(mangled)
    assert app.load_config(str(path)) == cfg


def test_config_parse_error_reports_line_number(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# fine\nphys.rho1 = 1.0\nthis line is wrong\n")
    with pytest.raises(ConfigError, match=r"bad\.txt:3"):
        app.load_config(str(path))


def test_config_rejects_duplicate_unknown_and_missing_keys(tmp_path):
    path = tmp_path / "cfg.txt"
    app.save_config(app.preset("kissing-matched"), str(path))
    base = path.read_text()

    path.write_text(base + "phys.rho1 = 2.0\n")
    with pytest.raises(ConfigError, match="duplicate"):
        app.load_config(str(path))

    path.write_text(base + "phys.bogus = 1\n")
    with pytest.raises(ConfigError, match="phys.bogus"):
        app.load_config(str(path))

    path.write_text(base.replace("phys.Pe = 10000.0\n", ""))
    with pytest.raises(ConfigError, match="phys.Pe"):
        app.load_config(str(path))

    path.write_text(base.replace("ic.kind = kissing", "ic.kind = blob"))
    with pytest.raises(ConfigError, match="blob"):
        app.load_config(str(path))


# --------------------------------------------------------------------------
# CSV timeseries
# --------------------------------------------------------------------------

def read_timeseries(path):
    """Returns (provenance comment lines, header, rows as float lists)."""
    comments, header, rows = [], None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                comments.append(line)
            elif header is None:
                header = line
            elif line:
                rows.append([float(v) for v in line.split(",")])
    return comments, header, rows


def test_zero_step_run_single_row_and_snapshot(tmp_path):
    cfg = replace(app.preset("kissing-matched"),
                  time=TimeConfig(dt=0.01, steps=0), out_dir=str(tmp_path / "o"))
    state, reports = app.run_experiment(cfg, log=lambda *_: None)
    assert reports == []
    comments, header, rows = read_timeseries(os.path.join(cfg.out_dir, "timeseries.csv"))
    assert header == ("t,E_total,E_kin,E_mix,E_grad,E_pot,D_visc,D_div,D_chem,"
                      "law_residual,volume,mass,newton_iters,remeshed")
    assert header == app.CSV_HEADER
    assert len(rows) == 1
    snaps = sorted(f for f in os.listdir(cfg.out_dir) if f.endswith(".vtk"))
    assert snaps == ["snap_000000.vtk"]

    # provenance echoes the config and flags defaulted parameters
    text = "\n".join(comments)
    assert "0.1" in comments[0]
    assert "rho2=1.0" in text and "Pe=10000.0" in text
    assert "Re defaulted" in text and "rho0 defaulted" in text

    # 17-digit rows reparse to the exact doubles of the computed state
    space, ctx = space_ctx(32)
    st = state_from_c(space, app.ic_kissing(space, cfg.eps))
    row = rows[0]
    assert row[0] == 0.0
    assert row[10] == diag.volume(ctx, st)
    assert row[11] == diag.mass(ctx, cfg.phys, st)
    e = diag.energy(ctx, cfg.phys, state)
    assert row[1] == e.total and row[2] == e.kinetic
    assert all(math.isnan(v) for v in row[6:10])   # no step yet, no law row
    assert row[12] == 0 and row[13] == 0


def cheap_config(out_dir, **over):
    base = dict(
        phys=PhysParams(rho1=1.0, rho2=1.0, Re=1.0, M=1.25, Pe=12.5, C=0.64,
                        invFr2=0.0),
        time=TimeConfig(dt=0.02, steps=3),
        newton=NewtonConfig(tol=1e-6),
        adapt=None,
        mesh_n=16,
        preset="custom",
        ic="kissing",
        eps=0.08,
        out_dir=out_dir,
        snap_interval=2,
    )
    base.update(over)
    return RunConfig(**base)


def test_short_run_row_count_snapshots_and_law(tmp_path):
    cfg = cheap_config(str(tmp_path / "o"))
    app.run_experiment(cfg, log=lambda *_: None)
    comments, header, rows = read_timeseries(os.path.join(cfg.out_dir, "timeseries.csv"))
    assert len(rows) == cfg.time.steps + 1
    snaps = sorted(f for f in os.listdir(cfg.out_dir) if f.endswith(".vtk"))
    assert snaps == ["snap_000000.vtk", "snap_000002.vtk", "snap_000003.vtk"]
    t = [r[0] for r in rows]
    assert t == pytest.approx([0.0, 0.02, 0.04, 0.06], abs=1e-15)
    for r in rows[1:]:
        assert all(np.isfinite(r))
        assert r[9] < 1e-10           # law_residual
        assert 0 < r[12] <= 30        # newton iterations
        assert r[13] == 0
    # energies decrease on this quiescent start
    e_tot = [r[1] for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(e_tot, e_tot[1:]))


def test_run_with_remeshing_flags_rows(tmp_path):
    # bisection shrinks the longest edge by ~1/sqrt(2) per depth level, so
    # h_min=1/16 from an 8x8 base needs about 5 levels
    cfg = cheap_config(str(tmp_path / "o"),
                       time=TimeConfig(dt=0.02, steps=2),
                       mesh_n=8,
                       adapt=AdaptOptions(refine_frac=0.3, coarsen_frac=0.0,
                                          h_min=1 / 16, max_depth=12, interval=1))
    lines = []
    state, reports = app.run_experiment(cfg, log=lines.append)
    _, _, rows = read_timeseries(os.path.join(cfg.out_dir, "timeseries.csv"))
    assert any(r[13] == 1 for r in rows[1:])
    assert any("remeshed" in ln for ln in lines)
    assert state.space.ndof > build_p2_space(build_rect_mesh(8, 8)).ndof
    for r in rows[1:]:
        assert np.isfinite(r).all()


# --------------------------------------------------------------------------
# VTK snapshots
# --------------------------------------------------------------------------

def parse_vtk(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    i = 4
    out = {"title": lines[1]}
    npts = int(lines[i].split()[1]); i += 1
    out["points"] = np.array([[float(v) for v in lines[i + k].split()]
                              for k in range(npts)]); i += npts
    ncells, _ = (int(v) for v in lines[i].split()[1:]); i += 1
    out["cells"] = np.array([[int(v) for v in lines[i + k].split()]
                             for k in range(ncells)]); i += ncells
    assert lines[i] == f"CELL_TYPES {ncells}"; i += 1
    out["cell_types"] = np.array([int(lines[i + k]) for k in range(ncells)]); i += ncells
    assert lines[i] == f"POINT_DATA {npts}"; i += 1
    out["scalars"], out["vectors"] = {}, {}
    while i < len(lines) and lines[i]:
        head = lines[i].split()
        if head[0] == "SCALARS":
            i += 2   # skip LOOKUP_TABLE
            out["scalars"][head[1]] = np.array([float(lines[i + k]) for k in range(npts)])
            i += npts
        elif head[0] == "VECTORS":
            i += 1
            out["vectors"][head[1]] = np.array(
                [[float(v) for v in lines[i + k].split()] for k in range(npts)])
            i += npts
        else:
            raise AssertionError(f"unexpected section {lines[i]!r}")
    return out


def test_snapshot_readback_matches_state(tmp_path):
    space, ctx = space_ctx(8)
    params = PhysParams(rho1=1.0, rho2=2.0, Re=1.0, M=1.25, Pe=12.5, C=0.64,
                        invFr2=0.0)
    c = app.ic_kissing(space, 0.08)
    rng = np.random.default_rng(3)
    st = State(0.0, space, 0.1 * rng.standard_normal((space.ndof, 2)),
               rng.standard_normal(space.ndof), c, rng.standard_normal(space.ndof))
    div = diag.divergence_field(ctx, params, st)
    path = str(tmp_path / "snap.vtk")
    app.write_snapshot(path, st, params, div, "roundtrip check")
    data = parse_vtk(path)

    assert data["title"] == "roundtrip check"
    assert len(data["points"]) == space.ndof
    np.testing.assert_array_equal(data["points"][:, :2], space.dof_coords)
    np.testing.assert_array_equal(data["points"][:, 2], 0.0)
    assert np.all(data["cell_types"] == 22)
    assert np.all(data["cells"][:, 0] == 6)
    # corner nodes then midpoints of edges 01, 12, 20
    np.testing.assert_array_equal(data["cells"][:, 1:],
                                  space.cell_dofs[:, [0, 1, 2, 5, 3, 4]])
    mids = data["points"][data["cells"][:, 4], :2]
    np.testing.assert_allclose(
        mids, 0.5 * (data["points"][data["cells"][:, 1], :2]
                     + data["points"][data["cells"][:, 2], :2]), atol=1e-14)

    np.testing.assert_array_equal(data["scalars"]["c"], st.c)
    np.testing.assert_array_equal(data["scalars"]["mu"], st.mu)
    np.testing.assert_array_equal(data["scalars"]["div_u"], div)
    from nsch2d.scheme import recover_physical
    u, p_hat = recover_physical(st, params)
    np.testing.assert_array_equal(data["scalars"]["p_hat"], p_hat)
    np.testing.assert_array_equal(data["vectors"]["u"][:, :2], u)
    np.testing.assert_array_equal(data["vectors"]["u"][:, 2], 0.0)


def test_snapshot_t0_readback_equals_ic(tmp_path):
    cfg = replace(app.preset("kissing-matched"),
                  time=TimeConfig(dt=0.01, steps=0), out_dir=str(tmp_path / "o"))
    app.run_experiment(cfg, log=lambda *_: None)
    data = parse_vtk(os.path.join(cfg.out_dir, "snap_000000.vtk"))
    space = build_p2_space(build_rect_mesh(cfg.mesh_n, cfg.mesh_n))
    assert len(data["points"]) == space.ndof
    np.testing.assert_array_equal(data["scalars"]["c"], app.ic_kissing(space, cfg.eps))
    np.testing.assert_array_equal(data["vectors"]["u"], 0.0)


# --------------------------------------------------------------------------
# verification entry points and CLI
# --------------------------------------------------------------------------

def test_cli_verify_jacobian_passes(capsys):
    assert app.main(["verify", "jacobian"]) == 0
    assert "ok" in capsys.readouterr().out


def test_verify_energy_law_matched_is_at_floor():
    ratios = app.verify_energy_law("kissing-matched", levels=1, steps=2,
                                   base_n=8, log=lambda *_: None)
    assert len(ratios) == 1
    assert ratios[0] < 1e-10


def test_cli_sigma_default_prints_closed_form(capsys):
    assert app.main(["sigma"]) == 0
    out = capsys.readouterr().out
    val = float(out.split("=")[1])
    assert abs(val - 0.011785) < 1e-6


def test_cli_sigma_heavier_pair_is_larger(capsys):
    app.main(["sigma"])
    matched = float(capsys.readouterr().out.split("=")[1])
    app.main(["sigma", "--rho2", "10"])
    heavy = float(capsys.readouterr().out.split("=")[1])
    assert heavy > matched


def test_cli_run_errors_on_unknown_preset(capsys):
    assert app.main(["run", "--preset", "nope"]) == 2
    assert "nope" in capsys.readouterr().err


def test_cli_run_errors_on_missing_config(capsys):
    assert app.main(["run", "--config", "/does/not/exist.txt"]) == 2
    assert "exist.txt" in capsys.readouterr().err


def test_cli_zero_step_run(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert app.main(["run", "--preset", "kissing-matched", "--steps", "0",
                     "--out", out]) == 0
    assert "finished at t=0" in capsys.readouterr().out
    vtks = sorted(f for f in os.listdir(out) if f.endswith(".vtk"))
    assert vtks == ["snap_000000.vtk"]
    _, _, rows = read_timeseries(os.path.join(out, "timeseries.csv"))
    assert len(rows) == 1


def test_cli_verify_energy_law_exit_codes(capsys, monkeypatch):
    # a single coarse level of the variable-density pair sits above 1e-2
    def fake(preset_name, levels):
        return {1: [2.3e-2], 3: [2.3e-2, 7.1e-3, 2.6e-3]}[levels]

    monkeypatch.setattr(app, "verify_energy_law", fake)
    assert app.main(["verify", "energy-law", "--levels", "1"]) == 1
    assert app.main(["verify", "energy-law", "--levels", "3"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" in out and "ok" in out


def test_nsch_threads_env(monkeypatch):
    monkeypatch.delenv("NSCH_THREADS", raising=False)
    assert n_threads() == 1
    monkeypatch.setenv("NSCH_THREADS", "4")
    assert n_threads() == 4
    monkeypatch.setenv("NSCH_THREADS", "zero")
    with pytest.raises(ValueError):
        n_threads()
    monkeypatch.setenv("NSCH_THREADS", "0")
    with pytest.raises(ValueError):
        n_threads()
