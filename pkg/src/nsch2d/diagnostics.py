"""Energy bookkeeping and physical observables for solution states.

Every integral here reuses the run's FemContext, so reported numbers are
the ones the stepping scheme actually balances, not a re-discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from . import scheme
from .fem import FemContext, assemble_operator, assemble_vector, solve_sparse
from .physics import PhysParams, density, double_well
from .scheme import State


class MeshMismatchError(ValueError):
    """Raised when an inter-step report would span two different meshes."""


@dataclass(frozen=True)
class EnergyBreakdown:
    """Total energy split: kinetic + mixing + gradient + potential."""

    kinetic: float
    mixing: float
    gradient: float
    potential: float
    total: float


@dataclass(frozen=True)
class LawReport:
    """Audit of the per-step energy balance.

    The implemented step satisfies rate + viscous + divergence + chemical
    (+ the matched-density pressure-penalty term) = 0 up to the solver
    tolerance and the test-space defect; law_residual is the measured gap.
    """

    rate: float
    viscous: float
    divergence: float
    chemical: float
    stabilization: float
    law_residual: float

    @property
    def dissipation(self) -> float:
        return self.viscous + self.divergence + self.chemical + self.stabilization


def energy(ctx: FemContext, params: PhysParams, state: State) -> EnergyBreakdown:
    """Energy components of one state.

    Kinetic energy is (1/2) int |u~|^2 directly: |sqrt(rho) u|^2 = |u~|^2
    in the substituted variables, so no density recovery is involved.
    """
    q = scheme.eval_state(ctx, state)
    rho = np.asarray(density(q.c, params))
    kin = 0.5 * ctx.integrate(np.einsum("...d,...d->...", q.u, q.u))
    mix = ctx.integrate(rho * np.asarray(double_well(q.c))) / params.M
    grad_sq = np.einsum("...d,...d->...", q.gc, q.gc)
    grd = 0.5 * params.C / params.M * ctx.integrate(rho * grad_sq)
    pot = params.invFr2 * ctx.integrate(rho * ctx.qpoints[..., 1])
    return EnergyBreakdown(kin, mix, grd, pot, kin + mix + grd + pot)


def law_report(ctx: FemContext, params: PhysParams, dt: float,
               prev: State, cand: State) -> LawReport:
    """Energy-law audit for one accepted step (both states on one mesh)."""
    if prev.space is not cand.space:
        raise MeshMismatchError("states straddle a remesh; audit them on one mesh")
    if ctx.space is not cand.space:
        raise MeshMismatchError("context was built for a different mesh")
    rate = (energy(ctx, params, cand).total - energy(ctx, params, prev).total) / dt
    comp = scheme.composite_fields(
        scheme.eval_state(ctx, prev), scheme.eval_state(ctx, cand), params, dt
    )
    dv = ctx.integrate(np.einsum("...jd,...jd->...", comp.gw, comp.gw)) / params.Re
    dd = ctx.integrate(comp.divw**2) / (3.0 * params.Re)
    dc = ctx.integrate(np.einsum("...d,...d->...", comp.gmum, comp.gmum)) / (
        params.M * params.Pe
    )
    ds = scheme.stab_dissipation(ctx, params, cand.p)
    return LawReport(rate, dv, dd, dc, ds, abs(rate + dv + dd + dc + ds))


def volume(ctx: FemContext, state: State) -> float:
    """Phase volume int c dx."""
    return ctx.integrate(ctx.eval_value(state.c))


def mass(ctx: FemContext, params: PhysParams, state: State) -> float:
    """Total mass int rho(c) dx."""
    return ctx.integrate(np.asarray(density(ctx.eval_value(state.c), params)))


def divergence_field(ctx: FemContext, params: PhysParams, state: State):
    """L2 projection of the recovered physical divergence onto the P2 space.

    From u = u~ / sqrt(rho) and 1/rho = alpha c + 1/rho2,
        div u = div(u~)/sqrt(rho) + (alpha/2) sqrt(rho) u~ . grad c.
    Matched densities make the second term vanish; the projection then picks
    up only the pressure-penalty flux of the continuity row, not solver noise.
    """
    q = scheme.eval_state(ctx, state)
    s = np.sqrt(np.asarray(density(q.c, params)))
    div_sub = q.gu[..., 0, 0] + q.gu[..., 1, 1]
    udotgc = np.einsum("...d,...d->...", q.u, q.gc)
    div_u = div_sub / s + 0.5 * params.alpha * s * udotgc
    b = assemble_vector(ctx, S=div_u)
    M = assemble_operator(ctx, vv=np.ones_like(div_u))
    return solve_sparse(M, b)


# first-derivative central stencil, offsets -4..4, O(h^8)
_D1_STENCIL = np.array(
    [1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280]
)


def tanh_profile(eps: float, half_width: float = 30.0, n: int = 2001):
    """Flat-interface reference profile c(z) = (1 + tanh(z/(2 sqrt2 eps)))/2.

    half_width is in units of eps; the default saturates both tails well
    below the 1e-6 acceptance threshold of surface_tension_1d.
    """
    z = np.linspace(-half_width * eps, half_width * eps, n)
    return z, 0.5 * (1.0 + np.tanh(z / (2.0 * math.sqrt(2.0) * eps)))


def surface_tension_1d(params: PhysParams, z, c) -> float:
    """Excess free energy of a flat profile, sigma = (C/M) int rho(c) c_z^2 dz.

    c_z comes from the 8th-order central stencil on the uniform sample grid
    (np.gradient covers the 4 points nearest each end, where a saturated
    profile is flat anyway); the integral is composite Simpson.
    """
    z = np.asarray(z, dtype=float)
    c = np.asarray(c, dtype=float)
    if z.ndim != 1 or z.shape != c.shape or z.size < 16:
        raise ValueError("need matching 1D arrays with at least 16 samples")
    steps = np.diff(z)
    if steps[0] <= 0.0 or not np.allclose(steps, steps[0], rtol=1e-10, atol=0.0):
        raise ValueError("sample grid must be uniform and increasing")
    for end in (c[0], c[-1]):
        if min(abs(end), abs(end - 1.0)) > 1e-6:
            raise ValueError("profile tails are not saturated to a pure phase")
    h = float(steps[0])
    cz = np.gradient(c, h, edge_order=2)
    cz[4:-4] = np.correlate(c, _D1_STENCIL, mode="valid") / h
    rho = np.asarray(density(c, params))
    return params.C / params.M * float(simpson(rho * cz**2, x=z))
