"""Conforming triangulations with newest-vertex bisection and P2 spaces.

Triangles are stored counterclockwise with the bisection peak in local slot
0, so the refinement edge is always the edge opposite local vertex 0.  The
structured rectangle generator assigns each cell diagonal as the refinement
edge of both triangles sharing it, which makes the recursive conformity
closure terminate.

Coarsening is structural: a vertex can be removed when every surviving
triangle around it has that vertex as its peak and the triangles pair back
into their parents; this undoes bisections without storing a forest and
never coarsens past the depth-0 mesh.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .fem import FemContext, p2_basis, quadrature


class AdaptDepthError(RuntimeError):
    """Requested edge size needs more bisection levels than allowed."""

    def __init__(self, triangles, coords):
        self.triangles = list(triangles)
        self.coords = coords
        super().__init__(
            f"{len(self.triangles)} triangles need refinement beyond max depth; "
            f"first at {coords[0] if len(coords) else '?'}"
        )


class PointLocationError(RuntimeError):
    """Points could not be located inside the source mesh."""

    def __init__(self, points):
        self.points = np.atleast_2d(points)
        super().__init__(
            f"{len(self.points)} points outside source mesh; first at {self.points[0]}"
        )


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray        # (nv, 2)
    triangles: np.ndarray       # (nt, 3) CCW, peak first
    depth: np.ndarray           # (nt,) bisection generation
    edges: np.ndarray           # (ne, 2) sorted endpoint pairs
    tri_edges: np.ndarray       # (nt, 3) edge index opposite local vertex k
    boundary_edges: np.ndarray  # edge indices with a single adjacent triangle


@dataclass(frozen=True)
class P2Space:
    mesh: Mesh
    ndof: int
    cell_dofs: np.ndarray       # (nt, 6): vertices then opposite-edge midpoints
    dof_coords: np.ndarray      # (ndof, 2)
    boundary_dofs: np.ndarray
    vertex_count: int


@dataclass(frozen=True)
class AdaptOptions:
    refine_frac: float = 0.1    # refine where |grad c| > refine_frac * global max
    coarsen_frac: float = 0.02  # merge where |grad c| < coarsen_frac * global max
    h_min: float = 1.0 / 128.0  # stop refining once the longest edge is this short
    max_depth: int = 30
    interval: int = 10          # steps between adapt calls during a run


def _make_mesh(vertices, triangles, depth):
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    depth = np.asarray(depth, dtype=np.int64)
    nv = len(vertices)
    u = np.minimum(triangles[:, [1, 2, 0]], triangles[:, [2, 0, 1]])
    v = np.maximum(triangles[:, [1, 2, 0]], triangles[:, [2, 0, 1]])
    keys = u.astype(np.int64) * nv + v
    uniq, inverse = np.unique(keys.ravel(), return_inverse=True)
    edges = np.column_stack([uniq // nv, uniq % nv])
    tri_edges = inverse.reshape(keys.shape)
    counts = np.bincount(inverse, minlength=len(uniq))
    boundary = np.where(counts == 1)[0]
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        depth=depth,
        edges=edges,
        tri_edges=tri_edges,
        boundary_edges=boundary,
    )


def build_rect_mesh(nx: int, ny: int, bounds=(-1.0, 1.0, -1.0, 1.0)) -> Mesh:
    """Structured right-triangle mesh of a rectangle, nx-by-ny cells."""
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append([v10, v11, v00])  # peak at right angle, diagonal opposite
            tris.append([v01, v00, v11])
    return _make_mesh(vertices, tris, np.zeros(len(tris), dtype=np.int64))


def build_p2_space(mesh: Mesh) -> P2Space:
    nv = len(mesh.vertices)
    ne = len(mesh.edges)
    cell_dofs = np.hstack([mesh.triangles, nv + mesh.tri_edges])
    mids = mesh.vertices[mesh.edges].mean(axis=1)
    dof_coords = np.vstack([mesh.vertices, mids])
    bverts = np.unique(mesh.edges[mesh.boundary_edges].ravel())
    boundary_dofs = np.concatenate([bverts, nv + mesh.boundary_edges])
    return P2Space(
        mesh=mesh,
        ndof=nv + ne,
        cell_dofs=cell_dofs,
        dof_coords=dof_coords,
        boundary_dofs=np.sort(boundary_dofs),
        vertex_count=nv,
    )


class _EditableMesh:
    """Mutable triangle soup used while bisecting/merging."""

    def __init__(self, mesh: Mesh):
        self.verts = [tuple(p) for p in mesh.vertices]
        self.tri = [list(t) for t in mesh.triangles]
        self.depth = list(mesh.depth)
        self.alive = [True] * len(self.tri)
        self.edge_tris = defaultdict(set)
        for t, tri in enumerate(self.tri):
            for k in range(3):
                self.edge_tris[self._key(tri[(k + 1) % 3], tri[(k + 2) % 3])].add(t)
        self.midpoint = {}

    @staticmethod
    def _key(a, b):
        return (a, b) if a < b else (b, a)

    def refedge(self, t):
        _, a, b = self.tri[t]
        return self._key(a, b)

    def _add_tri(self, verts3, depth):
        idx = len(self.tri)
        self.tri.append(list(verts3))
        self.depth.append(depth)
        self.alive.append(True)
        for k in range(3):
            self.edge_tris[self._key(verts3[(k + 1) % 3], verts3[(k + 2) % 3])].add(idx)
        return idx

    def _drop_tri(self, t):
        self.alive[t] = False
        tri = self.tri[t]
        for k in range(3):
            self.edge_tris[self._key(tri[(k + 1) % 3], tri[(k + 2) % 3])].discard(t)

    def _split(self, t, m):
        p, a, b = self.tri[t]
        d = self.depth[t] + 1
        self._drop_tri(t)
        self._add_tri((m, p, a), d)
        self._add_tri((m, b, p), d)

    def bisect(self, marked):
        for seed in marked:
            if seed >= len(self.tri) or not self.alive[seed]:
                continue
            stack = [seed]
            while stack:
                t = stack[-1]
                if not self.alive[t]:
                    stack.pop()
                    continue
                k = self.refedge(t)
                nb = next(
                    (s for s in self.edge_tris[k] if s != t and self.alive[s]), None
                )
                if nb is not None and self.refedge(nb) != k:
                    stack.append(nb)
                    continue
                a, b = k
                m = self.midpoint.get(k)
                if m is None:
                    va, vb = self.verts[a], self.verts[b]
                    m = len(self.verts)
                    self.verts.append(((va[0] + vb[0]) / 2.0, (va[1] + vb[1]) / 2.0))
                    self.midpoint[k] = m
                self._split(t, m)
                if nb is not None:
                    self._split(nb, m)
                stack.pop()

    def coarsen(self, indicator, kappa):
        ind = list(indicator)
        v2t = defaultdict(set)
        for t, tri in enumerate(self.tri):
            if self.alive[t]:
                for v in tri:
                    v2t[v].add(t)
        verts_np = np.asarray(self.verts)
        merged_any = False
        queue = set(v2t.keys())
        while queue:
            m = queue.pop()
            ts = [t for t in v2t[m] if self.alive[t]]
            if len(ts) not in (2, 4):
                continue
            ok = all(
                self.tri[t][0] == m and self.depth[t] > 0 and ind[t] < kappa
                for t in ts
            )
            if not ok:
                continue
            by_v2 = {self.tri[t][2]: t for t in ts}
            if len(by_v2) != len(ts):
                continue
            pairs = []
            used = set()
            valid = True
            for t in ts:
                if t in used:
                    continue
                partner = by_v2.get(self.tri[t][1])
                if partner is None or partner in used or partner == t:
                    valid = False
                    break
                if self.depth[partner] != self.depth[t]:
                    valid = False
                    break
                used.update((t, partner))
                pairs.append((t, partner))
            if not valid or len(used) != len(ts):
                continue
            # geometric sanity: m really is the midpoint of each parent base
            for t1, t2 in pairs:
                a, b = self.tri[t1][2], self.tri[t2][1]
                mid = 0.5 * (verts_np[a] + verts_np[b])
                if not np.allclose(mid, verts_np[m], atol=1e-12):
                    valid = False
            if not valid:
                continue
            for t1, t2 in pairs:
                p, a = self.tri[t1][1], self.tri[t1][2]
                b = self.tri[t2][1]
                new_ind = max(ind[t1], ind[t2])
                self._drop_tri(t1)
                self._drop_tri(t2)
                idx = self._add_tri((p, a, b), self.depth[t1] - 1)
                ind.append(new_ind)
                for v in (p, a, b):
                    v2t[v].add(idx)
                    queue.add(v)
                merged_any = True
        return merged_any

    def finish(self):
        keep = [t for t, a in enumerate(self.alive) if a]
        tris = [self.tri[t] for t in keep]
        depth = [self.depth[t] for t in keep]
        used = sorted({v for tri in tris for v in tri})
        remap = {v: i for i, v in enumerate(used)}
        verts = [self.verts[v] for v in used]
        tris = [[remap[v] for v in tri] for tri in tris]
        return _make_mesh(verts, tris, depth)


def bisect_triangles(mesh: Mesh, marked) -> Mesh:
    """Bisect the marked triangles (with conformity closure)."""
    em = _EditableMesh(mesh)
    em.bisect(list(marked))
    return em.finish()


def gradient_indicator(space: P2Space, c, degree: int = 6):
    """Per-triangle max |grad c| over quadrature points, plus the global max."""
    ctx = FemContext(space, quadrature(degree))
    g = ctx.eval_grad(np.asarray(c, dtype=float))
    mag = np.sqrt(g[..., 0] ** 2 + g[..., 1] ** 2)
    per_tri = mag.max(axis=1)
    return per_tri, float(per_tri.max()) if len(per_tri) else 0.0


def _longest_edges(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    e0 = np.hypot(*(p[:, 1] - p[:, 2]).T)
    e1 = np.hypot(*(p[:, 2] - p[:, 0]).T)
    e2 = np.hypot(*(p[:, 0] - p[:, 1]).T)
    return np.max([e0, e1, e2], axis=0)


def adapt(mesh: Mesh, c, opts: AdaptOptions) -> Mesh:
    """Refine steep-gradient triangles to the target edge size, merge flat ones.

    Thresholds are frozen from the indicator on the input mesh; coarsening
    runs first so closure splits are not churned, then bisection repeats
    (re-evaluating on the transferred field) until every triangle above the
    threshold has longest edge <= h_min or the depth limit trips.
    """
    src_space = build_p2_space(mesh)
    c = np.asarray(c, dtype=float)
    ind, gmax = gradient_indicator(src_space, c)
    if gmax <= 1e-10:
        return mesh
    tau = opts.refine_frac * gmax
    kappa = opts.coarsen_frac * gmax

    em = _EditableMesh(mesh)
    if kappa > 0.0:
        em.coarsen(ind, kappa)
    work = em.finish()

    while True:
        wspace = build_p2_space(work)
        cw = transfer(c, src_space, wspace)
        ind_w, _ = gradient_indicator(wspace, cw)
        longest = _longest_edges(work)
        need = (ind_w > tau) & (longest > opts.h_min + 1e-12)
        if not np.any(need):
            return work
        blocked = need & (work.depth >= opts.max_depth)
        if np.any(blocked):
            ids = np.where(blocked)[0]
            coords = work.vertices[work.triangles[ids]].mean(axis=1)
            raise AdaptDepthError(ids, coords)
        work = bisect_triangles(work, np.where(need)[0])


def _inverse_maps(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 0, 1] = -J[:, 0, 1]
    inv[:, 1, 0] = -J[:, 1, 0]
    inv[:, 1, 1] = J[:, 0, 0]
    inv /= det[:, None, None]
    return p, inv


def locate_points(mesh: Mesh, points, tol=1e-10):
    """Triangle index and reference coordinates for each query point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p, inv = _inverse_maps(mesh)
    centroids = p.mean(axis=1)
    tree = cKDTree(centroids)
    nt = len(mesh.triangles)
    n = len(points)
    tri_of = np.full(n, -1, dtype=int)
    loc = np.zeros((n, 2))
    remaining = np.arange(n)
    k = 8
    while remaining.size:
        k_eff = min(k, nt)
        _, cand = tree.query(points[remaining], k=k_eff)
        cand = np.atleast_2d(cand)
        if cand.shape[0] != remaining.size:
            cand = cand.T
        found = np.zeros(remaining.size, dtype=bool)
        for r in range(k_eff):
            tr = cand[:, r]
            rel = points[remaining] - p[tr, 0]
            lxy = np.einsum("mde,me->md", inv[tr], rel)
            lam_min = np.minimum(1.0 - lxy.sum(axis=1), lxy.min(axis=1))
            ok = (~found) & (lam_min >= -tol)
            sel = remaining[ok]
            tri_of[sel] = tr[ok]
            loc[sel] = lxy[ok]
            found |= ok
        remaining = remaining[~found]
        if k_eff >= nt:
            break
        k *= 8
    if remaining.size:
        raise PointLocationError(points[remaining])
    return tri_of, loc


def transfer(values, old_space: P2Space, new_space: P2Space):
    """Interpolate a P2 field onto another mesh's P2 dofs.

    Exact whenever the new mesh is a refinement of the old one (and for
    globally quadratic fields on any mesh pair).
    """
    values = np.asarray(values, dtype=float)
    if old_space is new_space:
        return values.copy()
    tri_of, loc = locate_points(old_space.mesh, new_space.dof_coords)
    val, _ = p2_basis(loc)
    local = values[old_space.cell_dofs[tri_of]]
    return np.einsum("mk,mk->m", val, local)
