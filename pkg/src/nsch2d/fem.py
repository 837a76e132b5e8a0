"""Quadratic triangular elements: quadrature, basis, assembly, direct solve.

Everything is evaluated on the reference triangle {x,y >= 0, x+y <= 1} and
mapped affinely.  Weights of every rule are positive and sum to the
reference area 1/2.  Degrees 2, 4 and 5 use the classical symmetric rules
(the degree-5 orbit parameters (6 +- sqrt(15))/21 are exact); degree 6 and
above fall back to a collapsed-square Gauss-Legendre product rule, which is
positive by construction.

Assembly walks elements in fixed chunk order; the NSCH_THREADS environment
variable caps how many chunks are evaluated concurrently (default 1).
Results are bitwise reproducible for a fixed thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(RuntimeError):
    """Direct factorization hit an exactly singular pivot."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


def n_threads() -> int:
    raw = os.environ.get("NSCH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"NSCH_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"NSCH_THREADS must be >= 1, got {n}")
    return n


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), sum 1/2
    degree: int          # guaranteed polynomial exactness


def _orbit3(a):
    # barycentric (a, b, b) permutations as reference (x, y) points
    b = 0.5 * (1.0 - a)
    return np.array([[b, b], [a, b], [b, a]])


def _collapsed_rule(npts):
    t, w = np.polynomial.legendre.leggauss(npts)
    x = 0.5 * (t + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wxi, weta = np.meshgrid(w, w, indexing="ij")
    px = xi.ravel()
    py = (eta * (1.0 - xi)).ravel()
    pw = (wxi * weta * (1.0 - xi)).ravel()
    return np.column_stack([px, py]), pw


_RULE_CACHE: dict[int, QuadratureRule] = {}


def quadrature(degree: int) -> QuadratureRule:
    """Rule exact to at least the requested total degree, positive weights."""
    if degree < 1:
        raise ValueError(f"quadrature degree must be >= 1, got {degree}")
    if degree in _RULE_CACHE:
        return _RULE_CACHE[degree]
    if degree <= 2:
        pts = _orbit3(2.0 / 3.0)
        wts = np.full(3, 1.0 / 6.0)
        deg = 2
    elif degree <= 4:
        pts = np.vstack([_orbit3(0.108103018168070), _orbit3(0.816847572980459)])
        wts = 0.5 * np.concatenate(
            [np.full(3, 0.223381589678011), np.full(3, 0.109951743655322)]
        )
        deg = 4
    elif degree == 5:
        s15 = math.sqrt(15.0)
        a1 = (6.0 - s15) / 21.0
        a2 = (6.0 + s15) / 21.0
        w1 = (155.0 - s15) / 1200.0
        w2 = (155.0 + s15) / 1200.0
        pts = np.vstack([np.array([[1 / 3, 1 / 3]]), _orbit3(1 - 2 * a1), _orbit3(1 - 2 * a2)])
        wts = 0.5 * np.concatenate([[9.0 / 40.0], np.full(3, w1), np.full(3, w2)])
        deg = 5
    else:
        n = (degree + 3) // 2
        pts, wts = _collapsed_rule(n)
        deg = 2 * n - 2
    rule = QuadratureRule(points=pts, weights=wts, degree=deg)
    _RULE_CACHE[degree] = rule
    return rule


def p2_basis(points):
    """Quadratic basis values and reference gradients at (m, 2) points.

    Local order: the three vertices, then the midpoint of the edge opposite
    each vertex.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    xi, eta = points[:, 0], points[:, 1]
    lam = np.column_stack([1.0 - xi - eta, xi, eta])  # (m, 3)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # (3, 2)
    m = len(points)
    val = np.empty((m, 6))
    grad = np.empty((m, 6, 2))
    for k in range(3):
        val[:, k] = lam[:, k] * (2.0 * lam[:, k] - 1.0)
        grad[:, k] = (4.0 * lam[:, k] - 1.0)[:, None] * dlam[k]
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        val[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
        grad[:, 3 + k] = 4.0 * (lam[:, i][:, None] * dlam[j] + lam[:, j][:, None] * dlam[i])
    return val, grad


class FemContext:
    """Precomputed geometry and basis tables for one space/quadrature pair.

    The same context instance (hence the same rule) is shared by residual,
    Jacobian and diagnostic integrals of a run.
    """

    def __init__(self, space, quad: QuadratureRule):
        self.space = space
        self.quad = quad
        mesh = space.mesh
        p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nt,2,2) cols
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(detJ <= 0):
            raise ValueError("mesh contains non-positively-oriented triangles")
        invJ = np.empty_like(J)
        invJ[:, 0, 0] = J[:, 1, 1]
        invJ[:, 0, 1] = -J[:, 0, 1]
        invJ[:, 1, 0] = -J[:, 1, 0]
        invJ[:, 1, 1] = J[:, 0, 0]
        invJ /= detJ[:, None, None]
        self.detJ = detJ
        phi, dphi = p2_basis(quad.points)          # (nq,6), (nq,6,2)
        self.phi = phi
        # physical gradients: dphi_ref @ invJ  -> (nt, nq, 6, 2)
        self.grad = np.einsum("qkd,tde->tqke", dphi, invJ)
        self.wdet = quad.weights[None, :] * detJ[:, None]   # (nt, nq)
        ref = quad.points
        lam0 = 1.0 - ref[:, 0] - ref[:, 1]
        self.qpoints = (
            lam0[None, :, None] * p[:, None, 0]
            + ref[None, :, 0, None] * p[:, None, 1]
            + ref[None, :, 1, None] * p[:, None, 2]
        )  # (nt, nq, 2)

    def eval_value(self, coeffs):
        """Field values at quadrature points, (nt, nq)."""
        local = np.asarray(coeffs)[self.space.cell_dofs]  # (nt, 6)
        return np.einsum("tk,qk->tq", local, self.phi)

    def eval_grad(self, coeffs):
        """Field gradients at quadrature points, (nt, nq, 2)."""
        local = np.asarray(coeffs)[self.space.cell_dofs]
        return np.einsum("tk,tqkd->tqd", local, self.grad)

    def integrate(self, values):
        """Integral of per-quadrature-point samples (nt, nq)."""
        return float(np.sum(self.wdet * values))


def _chunks(n, parts):
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [(bounds[i], bounds[i + 1]) for i in range(parts) if bounds[i] < bounds[i + 1]]


def _run_chunked(fn, nt):
    threads = n_threads()
    pieces = _chunks(nt, max(threads, 1))
    if threads == 1 or len(pieces) == 1:
        return [fn(a, b) for a, b in pieces]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), pieces))


def assemble_operator(ctx: FemContext, vv=None, vg=None, gv=None, gg=None):
    """Assemble a scalar bilinear form from per-quadrature-point coefficients.

    Entry (i, j) accumulates, per element and point,
        vv * phi_i phi_j + vg_d phi_i d_d phi_j
        + gv_d d_d phi_i phi_j + gg_de d_d phi_i d_e phi_j
    with coefficient shapes (nt,nq), (nt,nq,2), (nt,nq,2), (nt,nq,2,2).
    """
    space, phi, grad, wdet = ctx.space, ctx.phi, ctx.grad, ctx.wdet
    nt = wdet.shape[0]

    def work(a, b):
        w = wdet[a:b]
        elem = 0.0
        if vv is not None:
            elem = elem + np.einsum("tq,qi,qj->tij", w * vv[a:b], phi, phi)
        if vg is not None:
            elem = elem + np.einsum("tq,tqd,qi,tqjd->tij", w, vg[a:b], phi, grad[a:b])
        if gv is not None:
            elem = elem + np.einsum("tq,tqd,tqid,qj->tij", w, gv[a:b], grad[a:b], phi)
        if gg is not None:
            elem = elem + np.einsum("tq,tqde,tqid,tqje->tij", w, gg[a:b], grad[a:b], grad[a:b])
        return np.asarray(elem)

    parts = _run_chunked(work, nt)
    elem = np.concatenate(parts, axis=0) if len(parts) > 1 else parts[0]
    dofs = space.cell_dofs
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    A = sp.coo_matrix((elem.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    return A.tocsr()


def assemble_vector(ctx: FemContext, S=None, T=None):
    """Assemble a load vector: per point, S * phi_i + T_d d_d phi_i."""
    space, phi, grad, wdet = ctx.space, ctx.phi, ctx.grad, ctx.wdet
    nt = wdet.shape[0]

    def work(a, b):
        w = wdet[a:b]
        elem = 0.0
        if S is not None:
            elem = elem + np.einsum("tq,qi->ti", w * S[a:b], phi)
        if T is not None:
            elem = elem + np.einsum("tq,tqd,tqid->ti", w, T[a:b], grad[a:b])
        return np.asarray(elem)

    parts = _run_chunked(work, nt)
    elem = np.concatenate(parts, axis=0) if len(parts) > 1 else parts[0]
    out = np.zeros(space.ndof)
    np.add.at(out, space.cell_dofs.ravel(), elem.ravel())
    return out


def apply_dirichlet(A, b, dofs, values):
    """Eliminate constrained dofs symmetrically.

    Returns (A_ff, b_f, expand) where expand maps the reduced solution back
    to a full vector carrying the prescribed values exactly.
    """
    dofs = np.asarray(dofs, dtype=int)
    values = np.asarray(values, dtype=float)
    n = A.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[dofs] = False
    free = np.where(mask)[0]
    A = A.tocsr()
    A_ff = A[free][:, free]
    b_f = b[free] - A[free][:, dofs] @ values

    def expand(x_red):
        full = np.empty(n)
        full[free] = x_red
        full[dofs] = values
        return full

    return A_ff.tocsr(), b_f, expand


def _dense_pivot_probe(A):
    import scipy.linalg as sla

    dense = A.toarray()
    _, _, U = sla.lu(dense)
    diag = np.abs(np.diag(U))
    tol = np.finfo(float).eps * max(1.0, diag.max()) * A.shape[0]
    bad = np.where(diag <= tol)[0]
    return int(bad[0]) if bad.size else None


def solve_sparse(A, b):
    """Direct sparse LU solve (SuperLU, partial pivoting, unsymmetric)."""
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        pivot = _dense_pivot_probe(A) if A.shape[0] <= 2000 else None
        raise SingularMatrixError(
            f"sparse factorization failed: {exc} (pivot index {pivot})", pivot=pivot
        ) from exc
    x = lu.solve(np.asarray(b, dtype=float))
    if not np.all(np.isfinite(x)):
        pivot = _dense_pivot_probe(A) if A.shape[0] <= 2000 else None
        raise SingularMatrixError(
            f"sparse solve produced non-finite entries (pivot index {pivot})",
            pivot=pivot,
        )
    return x
