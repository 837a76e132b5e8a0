"""Midpoint-secant time stepping for the coupled two-phase system.

Unknowns per step, all in the same quadratic space:

    ux, uy : components of the substituted velocity  u~ = sqrt(rho) u
    p      : substituted pressure  p~ = p^ / rho  at the half time level
    c      : phase field at the new time level
    mu     : chemical potential at the new time level

The step couples the new and old levels through composite fields: the
velocity average w = (u~^{new} + u~^{old}) / (sqrt(rho^{new}) + sqrt(rho^{old}))
(which tends to the physical velocity), midpoint averages of mu and c,
arithmetic density means, and the secant averages g_secant / r_secant that
make the discrete energy balance telescope.

Places where the printed model divides by alpha are implemented in their
cancelled forms, exact for alpha != 0 and the correct continuation at
matched densities:

    -r_secant / alpha                      = rho(c1) rho(c0)
    (1/(alpha rho_m)) grad rho_m           = -(rho1^2 grad c1 + rho0^2 grad c0) / (2 rho_m)

The Jacobian is the exact analytic derivative of the residual; finite
difference agreement is enforced by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import FemContext, apply_dirichlet, assemble_operator, assemble_vector, solve_sparse
from .mesh import AdaptOptions, P2Space, adapt, build_p2_space, transfer
from .physics import (
    DensityFloorError,
    PhysParams,
    density,
    drho_dc,
    double_well,
    double_well_prime,
    g_secant,
    r_secant,
)

UX, UY, P, CC, MU = range(5)
NFIELDS = 5

# weight of the element-scaled pressure-gradient penalty used only for
# matched densities (see residual_terms); scaled by 2|T| per element
PRESSURE_STAB = 2e-3


class NewtonError(RuntimeError):
    def __init__(self, message, iterations=0, increment=np.inf):
        super().__init__(message)
        self.iterations = iterations
        self.increment = increment


@dataclass(frozen=True)
class State:
    """Solution snapshot; p is the half-level value ending at time t."""

    t: float
    space: P2Space
    u: np.ndarray    # (ndof, 2) substituted velocity
    p: np.ndarray    # (ndof,)
    c: np.ndarray
    mu: np.ndarray


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-5
    max_iter: int = 30
    max_halvings: int = 3


@dataclass
class StepReport:
    iterations: int = 0
    increment_norms: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    linear_solves: int = 0
    dt_halvings: int = 0
    converged: bool = False
    remeshed: bool = False

    def iters_to(self, tol):
        """Iterations needed before the increment norm first drops below tol."""
        for k, v in enumerate(self.increment_norms, start=1):
            if v < tol:
                return k
        return len(self.increment_norms) if self.increment_norms else 0


@dataclass
class QuadFields:
    """Values and gradients of one time level at quadrature points."""

    u: np.ndarray    # (nt, nq, 2)
    gu: np.ndarray   # (nt, nq, 2, 2), gu[j, d] = d_d u_j
    p: np.ndarray
    gp: np.ndarray
    c: np.ndarray
    gc: np.ndarray
    mu: np.ndarray
    gmu: np.ndarray


def eval_fields(ctx: FemContext, u, p, c, mu) -> QuadFields:
    ux, uy = u[:, 0], u[:, 1]
    return QuadFields(
        u=np.stack([ctx.eval_value(ux), ctx.eval_value(uy)], axis=-1),
        gu=np.stack([ctx.eval_grad(ux), ctx.eval_grad(uy)], axis=-2),
        p=ctx.eval_value(p),
        gp=ctx.eval_grad(p),
        c=ctx.eval_value(c),
        gc=ctx.eval_grad(c),
        mu=ctx.eval_value(mu),
        gmu=ctx.eval_grad(mu),
    )


def eval_state(ctx: FemContext, state: State) -> QuadFields:
    return eval_fields(ctx, state.u, state.p, state.c, state.mu)


class Composites:
    """Pointwise composite fields shared by the residual, the Jacobian and
    the energy diagnostics."""

    def __init__(self, prev: QuadFields, cand: QuadFields, params: PhysParams, dt: float):
        a = params.alpha
        R1 = np.asarray(density(cand.c, params))
        R0 = np.asarray(density(prev.c, params))
        if np.any(R1 <= 0.0) or np.any(R0 <= 0.0):
            raise DensityFloorError("density became non-positive at a quadrature point")
        self.R1, self.R0 = R1, R0
        self.Rm = 0.5 * (R1 + R0)
        self.S1, self.S0 = np.sqrt(R1), np.sqrt(R0)
        self.Sm = 0.5 * (self.S1 + self.S0)
        self.h = 0.5 / self.Sm
        self.R1p = -a * R1**2
        self.R0p = -a * R0**2
        self.z = prev.u + cand.u
        self.Gz = prev.gu + cand.gu
        self.wt = (cand.u - prev.u) / dt
        # grad of the mean of square roots (chain rule through the density law)
        self.cS1 = self.R1p / (4.0 * self.S1)
        cS0 = self.R0p / (4.0 * self.S0)
        self.SmGrad = self.cS1[..., None] * cand.gc + cS0[..., None] * prev.gc
        self.k = (-2.0 * self.h**2)[..., None] * self.SmGrad
        self.w = self.h[..., None] * self.z
        self.gw = self.h[..., None, None] * self.Gz + self.z[..., :, None] * self.k[..., None, :]
        self.trGz = self.Gz[..., 0, 0] + self.Gz[..., 1, 1]
        self.divw = self.h * self.trGz + np.einsum("...d,...d->...", self.z, self.k)
        self.gRm = 0.5 * (self.R1p[..., None] * cand.gc + self.R0p[..., None] * prev.gc)
        self.V = (R1**2)[..., None] * cand.gc + (R0**2)[..., None] * prev.gc
        self.mum = 0.5 * (cand.mu + prev.mu)
        self.gmum = 0.5 * (cand.gmu + prev.gmu)
        self.cm = 0.5 * (cand.c + prev.c)
        self.gcm = 0.5 * (cand.gc + prev.gc)
        self.ct = (cand.c - prev.c) / dt
        self.rsec = np.asarray(r_secant(cand.c, prev.c, params))
        self.gsec = np.asarray(g_secant(cand.c, prev.c, params))
        self.QQ = R1 * R0          # equals -r_secant/alpha for any densities
        self.F1 = np.asarray(double_well(cand.c))
        self.F0 = np.asarray(double_well(prev.c))
        self.conv = np.einsum("...jd,...d->...j", self.gw, self.w)
        self.divRmW = self.Rm * self.divw + np.einsum(
            "...d,...d->...", self.w, self.gRm
        )


def composite_fields(prev: QuadFields, cand: QuadFields, params: PhysParams, dt: float) -> Composites:
    return Composites(prev, cand, params, dt)


def _potential_g(comp: Composites, cand: QuadFields, g_mode: str):
    """Bulk-energy kernel; 'midpoint' is a deliberately inconsistent variant
    kept for negative-control tests (it must break the energy law)."""
    if g_mode == "secant":
        return comp.gsec
    if g_mode == "midpoint":
        return np.asarray(double_well_prime(comp.cm))
    raise ValueError(f"unknown g_mode {g_mode!r}")


def residual_terms(ctx, params, dt, prev: QuadFields, cand: QuadFields, g_mode="secant"):
    """Per-equation (S, T) integrand coefficients at quadrature points."""
    comp = composite_fields(prev, cand, params, dt)
    pz = params
    invRe, invM, invPe = 1.0 / pz.Re, 1.0 / pz.M, 1.0 / pz.Pe
    rho0 = pz.rho0_value
    y = ctx.qpoints[..., 1]
    invRm = 1.0 / comp.Rm

    # momentum (both components at once)
    Svec = (
        comp.Sm[..., None] * comp.wt
        + comp.Rm[..., None] * comp.conv
        + 0.5 * comp.divRmW[..., None] * comp.w
        + invM * comp.Rm[..., None] * cand.gp
        - 0.5 * invM * (invRm * comp.mum)[..., None] * comp.V
        - (0.5 * pz.rho0_value * pz.alpha * pz.invFr2) * (y * invRm)[..., None] * comp.V
    )
    Svec = Svec.copy()
    Svec[..., 1] += pz.invFr2 * (comp.Rm - rho0)
    Tmat = invRe * comp.gw.copy()
    Tmat[..., 0, 0] += comp.divw * (invRe / 3.0)
    Tmat[..., 1, 1] += comp.divw * (invRe / 3.0)

    # mass constraint; for matched densities the pressure decouples from the
    # potential equation and the equal-order pair carries spurious pressure
    # modes, so an element-scaled gradient penalty is added in that case only
    # (tested with p~ it contributes a positive dissipation, preserving the
    # energy decrease).
    Tq = -comp.w + (pz.alpha * invPe) * comp.gmum
    if pz.alpha == 0.0:
        Tq = Tq + (PRESSURE_STAB * ctx.detJ)[:, None, None] * cand.gp

    # phase transport
    E = comp.R1**2 * np.einsum("...d,...d->...", comp.w, cand.gc) + comp.R0**2 * np.einsum(
        "...d,...d->...", comp.w, prev.gc
    )
    Sphi = comp.QQ * invRm * comp.ct + 0.5 * invRm * E
    Tphi = invPe * comp.gmum

    # chemical potential
    g = _potential_g(comp, cand, g_mode)
    grad_sq = np.einsum("...d,...d->...", cand.gc, cand.gc) + np.einsum(
        "...d,...d->...", prev.gc, prev.gc
    )
    Schi = (
        comp.QQ * invRm * comp.mum
        - comp.Rm * g
        + comp.rsec * cand.p
        - 0.5 * comp.rsec * (comp.F1 + comp.F0)
        - 0.25 * pz.C * comp.rsec * grad_sq
        - (pz.M * rho0 * pz.invFr2) * comp.rsec * invRm * y
    )
    Tchi = -pz.C * comp.Rm[..., None] * comp.gcm

    S = {UX: Svec[..., 0], UY: Svec[..., 1], CC: Sphi, MU: Schi}
    T = {UX: Tmat[..., 0, :], UY: Tmat[..., 1, :], P: Tq, CC: Tphi, MU: Tchi}
    return S, T, comp


def _as_quad(ctx, fields):
    return fields if isinstance(fields, QuadFields) else eval_fields(ctx, *fields)


def residual(ctx, params, dt, prev_fields, cand_fields, g_mode="secant"):
    """Stacked residual vector, block order (ux, uy, p, c, mu)."""
    prev = _as_quad(ctx, prev_fields)
    cand = _as_quad(ctx, cand_fields)
    S, T, _ = residual_terms(ctx, params, dt, prev, cand, g_mode)
    blocks = []
    for e in range(NFIELDS):
        blocks.append(assemble_vector(ctx, S=S.get(e), T=T.get(e)))
    return np.concatenate(blocks)


def jacobian(ctx, params, dt, prev_fields, cand_fields, g_mode="secant"):
    """Exact derivative of the residual with respect to the new-level blocks."""
    prev = _as_quad(ctx, prev_fields)
    cand = _as_quad(ctx, cand_fields)
    comp = composite_fields(prev, cand, params, dt)
    pz = params
    a = pz.alpha
    invRe, invM, invPe = 1.0 / pz.Re, 1.0 / pz.M, 1.0 / pz.Pe
    rho0 = pz.rho0_value
    y = ctx.qpoints[..., 1]
    nt, nq = ctx.wdet.shape

    R1, R0, Rm, Sm, h = comp.R1, comp.R0, comp.Rm, comp.Sm, comp.h
    z, Gz, w, gw, k = comp.z, comp.Gz, comp.w, comp.gw, comp.k
    g1, g0 = cand.gc, prev.gc
    invRm = 1.0 / Rm
    dRm = 0.5 * comp.R1p
    R1p = comp.R1p
    R1pp = 2.0 * a**2 * R1**3
    SmP = comp.cS1                       # d Sm / d c1
    SmP2 = 0.375 * a**2 * R1**2 * comp.S1
    hP = -2.0 * h**2 * SmP
    kPv = (-4.0 * h * hP)[..., None] * comp.SmGrad + (-2.0 * h**2 * SmP2)[..., None] * g1
    kPg = -2.0 * h**2 * SmP              # delta k = kPv*phi + kPg*grad(phi)
    rP = -a * R1 * comp.rsec
    QQp = R1p * R0
    AA = comp.QQ * invRm
    AAp = QQp * invRm - comp.QQ * dRm * invRm**2
    BB = 0.5 * invRm
    BBp = -0.5 * dRm * invRm**2
    invRmP = -dRm * invRm**2
    f1 = np.asarray(double_well_prime(cand.c))
    kw = np.einsum("...d,...d->...", k, w)
    kz_dot = np.einsum("...d,...d->...", z, kPv)
    zk = np.einsum("...d,...d->...", z, k)
    zgRm = np.einsum("...d,...d->...", z, comp.gRm)
    wg1 = np.einsum("...d,...d->...", w, g1)
    wg0 = np.einsum("...d,...d->...", w, prev.gc)
    zg1 = np.einsum("...d,...d->...", z, g1)
    zg0 = np.einsum("...d,...d->...", z, prev.gc)
    G0y = 0.5 * rho0 * a * pz.invFr2 * y
    eye2 = np.broadcast_to(np.eye(2), (nt, nq, 2, 2))

    blocks: dict[tuple[int, int], dict] = {}

    def add(e, f, **kw_):
        slot = blocks.setdefault((e, f), {})
        for key, val in kw_.items():
            slot[key] = slot[key] + val if key in slot else val

    def basis_vec(j):
        e = np.zeros((nt, nq, 2))
        e[..., j] = 1.0
        return e

    ex, ey = basis_vec(0), basis_vec(1)

    # ---- momentum rows -------------------------------------------------
    for j, (row, other) in enumerate([(UX, UY), (UY, UX)]):
        wj = w[..., j]
        gwj = gw[..., j, :]
        Gzj = Gz[..., j, :]
        ej = ex if j == 0 else ey
        eo = ey if j == 0 else ex
        o = 1 - j

        # same velocity component
        add(
            row,
            row,
            vv=Sm / dt
            + Rm * (kw + h * gw[..., j, j])
            + 0.5 * wj * (Rm * k[..., j] + h * comp.gRm[..., j])
            + 0.5 * comp.divRmW * h,
            vg=(Rm * h)[..., None] * w + (0.5 * wj * Rm * h)[..., None] * ej,
            gv=invRe * k + ((invRe / 3.0) * k[..., j])[..., None] * ej,
            gg=(invRe * h)[..., None, None] * eye2
            + (invRe / 3.0 * h)[..., None, None] * np.einsum("...d,...l->...dl", ej, ej),
        )
        # other velocity component
        add(
            row,
            other,
            vv=Rm * h * gw[..., j, o] + 0.5 * wj * (Rm * k[..., o] + h * comp.gRm[..., o]),
            vg=(0.5 * wj * Rm * h)[..., None] * eo,
            gv=((invRe / 3.0) * k[..., o])[..., None] * ej,
            gg=(invRe / 3.0 * h)[..., None, None] * np.einsum("...d,...l->...dl", ej, eo),
        )
        # pressure
        add(row, P, vg=(invM * Rm)[..., None] * ej)
        # chemical potential
        add(row, MU, vv=-0.25 * invM * invRm * comp.V[..., j])
        # phase field
        vv_c = (
            SmP * comp.wt[..., j]
            + dRm * comp.conv[..., j]
            + Rm
            * (
                hP * np.einsum("...d,...d->...", Gzj, w)
                + z[..., j] * np.einsum("...d,...d->...", kPv, w)
                + hP * np.einsum("...d,...d->...", gwj, z)
            )
            + 0.5
            * wj
            * (dRm * comp.divw + Rm * (hP * comp.trGz + kz_dot) + hP * zgRm + 0.5 * R1pp * wg1)
            + 0.5 * comp.divRmW * z[..., j] * hP
            + invM * dRm * cand.gp[..., j]
            - invM * (BBp * comp.V[..., j] + 2.0 * BB * R1 * R1p * g1[..., j]) * comp.mum
            - G0y * (invRmP * comp.V[..., j] + 2.0 * invRm * R1 * R1p * g1[..., j])
        )
        if j == 1:
            vv_c = vv_c + pz.invFr2 * dRm
        vg_c = (
            (Rm * kPg * z[..., j])[..., None] * w
            + (0.5 * wj)[..., None] * ((Rm * kPg)[..., None] * z + (0.5 * R1p)[..., None] * w)
            - ((invM * BB * comp.mum + G0y * invRm) * R1**2)[..., None] * ej
        )
        gv_c = invRe * (hP[..., None] * Gzj + z[..., j][..., None] * kPv) + (
            (invRe / 3.0) * (hP * comp.trGz + kz_dot)
        )[..., None] * ej
        gg_c = (invRe * kPg * z[..., j])[..., None, None] * eye2 + (invRe / 3.0) * np.einsum(
            "...d,...l->...dl", ej, kPg[..., None] * z
        )
        add(row, CC, vv=vv_c, vg=vg_c, gv=gv_c, gg=gg_c)

    # ---- mass-constraint row -------------------------------------------
    add(P, UX, gv=-h[..., None] * ex)
    add(P, UY, gv=-h[..., None] * ey)
    add(P, CC, gv=-hP[..., None] * z)
    add(P, MU, gg=(0.5 * a * invPe) * eye2)
    if a == 0.0:
        add(P, P, gg=(PRESSURE_STAB * ctx.detJ)[:, None, None, None] * eye2)

    # ---- phase row -------------------------------------------------------
    E = R1**2 * wg1 + R0**2 * wg0
    add(CC, UX, vv=BB * h * comp.V[..., 0])
    add(CC, UY, vv=BB * h * comp.V[..., 1])
    add(
        CC,
        CC,
        vv=AAp * comp.ct
        + AA / dt
        + BBp * E
        + BB * (2.0 * R1 * R1p * wg1 + hP * (R1**2 * zg1 + R0**2 * zg0)),
        vg=(BB * R1**2)[..., None] * w,
    )
    add(CC, MU, gg=(0.5 * invPe) * eye2)

    # ---- potential row ---------------------------------------------------
    if g_mode == "secant":
        g = comp.gsec
        c1, c0 = cand.c, prev.c
        gP = 0.25 * ((2.0 * c1 - 1.0) * (c1 + c0 - 1.0) + (c1 * (c1 - 1.0) + c0 * (c0 - 1.0)))
    elif g_mode == "midpoint":
        g = np.asarray(double_well_prime(comp.cm))
        cm = comp.cm
        gP = 0.5 * (3.0 * cm**2 - 3.0 * cm + 0.5)
    else:
        raise ValueError(f"unknown g_mode {g_mode!r}")
    grad_sq = np.einsum("...d,...d->...", g1, g1) + np.einsum("...d,...d->...", g0, g0)
    add(MU, P, vv=comp.rsec)
    add(MU, MU, vv=0.5 * AA)
    add(
        MU,
        CC,
        vv=AAp * comp.mum
        - dRm * g
        - Rm * gP
        + rP * cand.p
        - 0.5 * (rP * (comp.F1 + comp.F0) + comp.rsec * f1)
        - 0.25 * pz.C * rP * grad_sq
        - pz.M * rho0 * pz.invFr2 * y * (rP * invRm + comp.rsec * invRmP),
        vg=(-0.5 * pz.C * comp.rsec)[..., None] * g1,
        gv=(-pz.C * dRm)[..., None] * comp.gcm,
        gg=(-0.5 * pz.C * Rm)[..., None, None] * eye2,
    )

    grid = [[None] * NFIELDS for _ in range(NFIELDS)]
    for (e, f), co in blocks.items():
        grid[e][f] = assemble_operator(ctx, **co)
    return sp.bmat(grid, format="csr")


def norm_matrix(ctx: FemContext):
    """H1 inner-product matrix (mass + stiffness) on the scalar space."""
    nt, nq = ctx.wdet.shape
    eye = np.broadcast_to(np.eye(2), (nt, nq, 2, 2))
    ones = np.ones((nt, nq))
    return assemble_operator(ctx, vv=ones, gg=eye)


def stab_dissipation(ctx: FemContext, params: PhysParams, p):
    """Dissipation contributed by the matched-density pressure penalty,
    (theta/M) * sum_T 2|T| int_T |grad p~|^2; zero when alpha != 0."""
    if params.alpha != 0.0:
        return 0.0
    gp = ctx.eval_grad(p)
    g2 = np.einsum("...d,...d->...", gp, gp)
    return PRESSURE_STAB / params.M * ctx.integrate(ctx.detJ[:, None] * g2)


def combined_h1_norm(N, du, dp, dc, dmu):
    total = (
        du[:, 0] @ (N @ du[:, 0])
        + du[:, 1] @ (N @ du[:, 1])
        + dp @ (N @ dp)
        + dc @ (N @ dc)
        + dmu @ (N @ dmu)
    )
    return float(np.sqrt(total))


def dirichlet_dofs(space: P2Space, params: PhysParams):
    """Velocity wall dofs (both components), plus one pinned pressure dof.

    Matched densities leave the pressure free up to an additive constant.
    For distinct densities the step still has a one-parameter gauge: shifting
    the new potential by s and the pressure by s/(2*alpha*Rm) leaves every
    equation unchanged (the momentum terms cancel through grad Rm = -a/2 V),
    so one pressure value is fixed in either case.
    """
    nd = space.ndof
    b = space.boundary_dofs
    return np.concatenate([b, nd + b, np.array([2 * nd], dtype=int)])


def split_blocks(x, ndof):
    u = np.column_stack([x[:ndof], x[ndof : 2 * ndof]])
    return u, x[2 * ndof : 3 * ndof], x[3 * ndof : 4 * ndof], x[4 * ndof :]


def newton_solve(ctx, params, dt, prev_fields, guess_fields, cfg: NewtonConfig,
                 g_mode="secant", normN=None):
    """Full Newton on the coupled step; combined H1 increment criterion."""
    ndof = ctx.space.ndof
    N = norm_matrix(ctx) if normN is None else normN
    cons = dirichlet_dofs(ctx.space, params)
    zeros = np.zeros(cons.size)
    u = guess_fields[0].copy()
    p, c, mu = (f.copy() for f in guess_fields[1:])
    prevq = _as_quad(ctx, prev_fields)
    report = StepReport()
    for it in range(1, cfg.max_iter + 1):
        try:
            R = residual(ctx, params, dt, prevq, (u, p, c, mu), g_mode)
            J = jacobian(ctx, params, dt, prevq, (u, p, c, mu), g_mode)
        except DensityFloorError as exc:
            raise NewtonError(f"density floor during Newton: {exc}", it - 1) from exc
        report.residual_norms.append(float(np.linalg.norm(R)))
        J_red, rhs, expand = apply_dirichlet(J, -R, cons, zeros)
        delta = expand(solve_sparse(J_red, rhs))
        report.linear_solves += 1
        du, dp, dc, dmu = split_blocks(delta, ndof)
        u = u + du
        p = p + dp
        c = c + dc
        mu = mu + dmu
        inc = combined_h1_norm(N, du, dp, dc, dmu)
        report.increment_norms.append(inc)
        report.iterations = it
        if not np.isfinite(inc):
            raise NewtonError("non-finite Newton increment", it, inc)
        if inc < cfg.tol:
            report.converged = True
            return (u, p, c, mu), report
    last = report.increment_norms[-1] if report.increment_norms else np.inf
    raise NewtonError(
        f"Newton did not reach tol {cfg.tol:g} in {cfg.max_iter} iterations "
        f"(last increment {last:.3e})",
        report.iterations,
        last,
    )


def advance(state: State, params: PhysParams, dt: float, cfg: NewtonConfig,
            ctx: FemContext = None, g_mode="secant", normN=None):
    """One step of size dt, retrying with halved substeps on Newton failure."""
    if ctx is None:
        from .fem import quadrature

        ctx = FemContext(state.space, quadrature(6))
    if normN is None:
        normN = norm_matrix(ctx)
    last_exc = None
    for level in range(cfg.max_halvings + 1):
        nsub = 2**level
        sub_dt = dt / nsub
        cur = state
        total = StepReport(dt_halvings=level)
        try:
            for _ in range(nsub):
                prev_fields = (cur.u, cur.p, cur.c, cur.mu)
                fields, rep = newton_solve(
                    ctx, params, sub_dt, prev_fields, prev_fields, cfg, g_mode, normN
                )
                total.iterations += rep.iterations
                total.linear_solves += rep.linear_solves
                total.increment_norms.extend(rep.increment_norms)
                total.residual_norms.extend(rep.residual_norms)
                cur = State(cur.t + sub_dt, cur.space, fields[0], fields[1], fields[2], fields[3])
            total.converged = True
            return cur, total
        except NewtonError as exc:
            last_exc = exc
    raise NewtonError(
        f"step failed after {cfg.max_halvings} halvings: {last_exc}",
    )


def remesh_state(state: State, opts: AdaptOptions):
    """Adapt the mesh to the current phase field and carry all fields over."""
    new_mesh = adapt(state.space.mesh, state.c, opts)
    if new_mesh is state.space.mesh:
        return state, False
    same = len(new_mesh.triangles) == len(state.space.mesh.triangles) and np.array_equal(
        new_mesh.triangles, state.space.mesh.triangles
    )
    if same:
        return state, False
    new_space = build_p2_space(new_mesh)
    old = state.space
    u = np.column_stack(
        [transfer(state.u[:, 0], old, new_space), transfer(state.u[:, 1], old, new_space)]
    )
    return (
        State(
            state.t,
            new_space,
            u,
            transfer(state.p, old, new_space),
            transfer(state.c, old, new_space),
            transfer(state.mu, old, new_space),
        ),
        True,
    )


def run(state: State, params: PhysParams, dt: float, steps: int, cfg: NewtonConfig,
        adapt_opts: AdaptOptions = None, quad_degree: int = 6, g_mode="secant",
        on_step=None, on_remesh=None):
    """March `steps` steps; optionally adapt every adapt_opts.interval steps.

    on_step(prev_state, new_state, report, ctx) fires after every step;
    on_remesh(old_state, new_state, old_ctx, new_ctx) after every remesh.
    Returns (final_state, [StepReport]).
    """
    from .fem import quadrature

    ctx = FemContext(state.space, quadrature(quad_degree))
    normN = norm_matrix(ctx)
    reports = []
    for k in range(1, steps + 1):
        new_state, rep = advance(state, params, dt, cfg, ctx, g_mode, normN)
        if on_step is not None:
            on_step(state, new_state, rep, ctx)
        state = new_state
        if adapt_opts is not None and adapt_opts.interval > 0 and k % adapt_opts.interval == 0:
            remeshed_state, changed = remesh_state(state, adapt_opts)
            if changed:
                rep.remeshed = True
                new_ctx = FemContext(remeshed_state.space, quadrature(quad_degree))
                if on_remesh is not None:
                    on_remesh(state, remeshed_state, ctx, new_ctx)
                state = remeshed_state
                ctx = new_ctx
                normN = norm_matrix(ctx)
        reports.append(rep)
    return state, reports


def initial_mu(ctx: FemContext, c, p, params: PhysParams):
    """Chemical potential consistent with the step kernel at start-up.

    Solves the potential equation with both time levels set to the initial
    phase field (so every secant collapses to a derivative) and the given
    substituted pressure.
    """
    cq = ctx.eval_value(c)
    gq = ctx.eval_grad(c)
    pq = ctx.eval_value(p)
    rho = np.asarray(density(cq, params))
    rp = np.asarray(drho_dc(cq, params))
    y = ctx.qpoints[..., 1]
    fcv = np.asarray(double_well_prime(cq))
    Fv = np.asarray(double_well(cq))
    grad_sq = np.einsum("...d,...d->...", gq, gq)
    rhs_S = (
        rho * fcv
        - rp * pq
        + rp * Fv
        + 0.5 * params.C * rp * grad_sq
        + params.M * params.rho0_value * params.invFr2 * rp * y / rho
    )
    rhs_T = params.C * rho[..., None] * gq
    b = assemble_vector(ctx, S=rhs_S, T=rhs_T)
    Mrho = assemble_operator(ctx, vv=rho)
    return solve_sparse(Mrho, b)


def recover_physical(state: State, params: PhysParams):
    """Physical velocity and pressure at the dofs.

    u = u~ / sqrt(rho(c)); p^ = p~ * rho(c).  The stored pressure lives at
    the half level; using the state's own c there is exact for matched
    densities and a snapshot-grade approximation otherwise.
    """
    rho = np.asarray(density(state.c, params))
    u = state.u / np.sqrt(rho)[:, None]
    p_hat = state.p * rho
    return u, p_hat
