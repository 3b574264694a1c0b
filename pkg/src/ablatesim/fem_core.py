"""P1 and P1-bubble elements, quadrature, and assembly of the weak forms.

Velocity uses the MINI pair: each component is P1 enriched with the cubic
bubble 27*l1*l2*l3; pressure, temperature and potential are plain P1.  One
degree-6, 12-point rule integrates every interior term; boundary integrals
use 2-point Gauss on edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import CooBuilder, SparseMatrix
from .mesh import Mesh2D


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points/weights on the reference triangle (weights sum to 1/2)."""

    points: np.ndarray  # (NQ, 3) barycentric coordinates
    weights: np.ndarray  # (NQ,)
    degree: int


def _dunavant6() -> QuadratureRule:
    # 12-point rule, exact through polynomial degree 6.
    groups = [
        (0.116786275726379, 0.501426509658179, 0.249286745170910),
        (0.050844906370207, 0.873821971016996, 0.063089014491502),
    ]
    pts = []
    wts = []
    for w, a, b in groups:
        for perm in ((a, b, b), (b, a, b), (b, b, a)):
            pts.append(perm)
            wts.append(w)
    w3 = 0.082851075618374
    a3, b3, c3 = 0.053145049844816, 0.310352451033785, 0.636502499121399
    for perm in (
        (a3, b3, c3), (a3, c3, b3), (b3, a3, c3),
        (b3, c3, a3), (c3, a3, b3), (c3, b3, a3),
    ):
        pts.append(perm)
        wts.append(w3)
    pts = np.array(pts)
    wts = 0.5 * np.array(wts)
    wts *= 0.5 / wts.sum()  # pin the sum to the reference area exactly
    return QuadratureRule(points=pts, weights=wts, degree=6)


TRI_RULE = _dunavant6()

# 2-point Gauss on the unit edge parameter t in [0, 1]; exact to degree 3.
EDGE_T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
EDGE_W = np.array([0.5, 0.5])


class ElementP1:
    """Linear nodal basis = barycentric coordinates; constant gradients."""

    n_basis = 3
    ref_grads = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

    @staticmethod
    def values(bary: np.ndarray) -> np.ndarray:
        return np.asarray(bary, dtype=float)


class ElementP1Bubble:
    """P1 plus the cubic bubble 27*l1*l2*l3 (per velocity component)."""

    n_basis = 4

    @staticmethod
    def bubble_values(bary: np.ndarray) -> np.ndarray:
        bary = np.asarray(bary, dtype=float)
        return 27.0 * bary[..., 0] * bary[..., 1] * bary[..., 2]

    @staticmethod
    def bubble_ref_grads(bary: np.ndarray) -> np.ndarray:
        """Gradient of the bubble w.r.t. reference coordinates at barycentric pts."""
        bary = np.asarray(bary, dtype=float)
        l1, l2, l3 = bary[..., 0], bary[..., 1], bary[..., 2]
        g = (
            (l2 * l3)[..., None] * ElementP1.ref_grads[0]
            + (l1 * l3)[..., None] * ElementP1.ref_grads[1]
            + (l1 * l2)[..., None] * ElementP1.ref_grads[2]
        )
        return 27.0 * g


@dataclass(frozen=True)
class DofMap:
    """Global dof layout.

    Flow block: [vx vertices | vx bubbles | vy vertices | vy bubbles | P vertices],
    total 2*(NV + NT) + NV.  Scalar fields (theta, phi) use the vertex index
    directly (one dof per vertex).
    """

    nv: int
    nt: int

    @property
    def n_velocity(self) -> int:
        return 2 * (self.nv + self.nt)

    @property
    def n_pressure(self) -> int:
        return self.nv

    @property
    def n_flow(self) -> int:
        return self.n_velocity + self.n_pressure

    def vx_vertex(self, idx):
        return np.asarray(idx, dtype=np.int64)

    def vy_vertex(self, idx):
        return self.nv + self.nt + np.asarray(idx, dtype=np.int64)

    def vx_bubble(self, tri_idx):
        return self.nv + np.asarray(tri_idx, dtype=np.int64)

    def vy_bubble(self, tri_idx):
        return 2 * self.nv + self.nt + np.asarray(tri_idx, dtype=np.int64)

    def pressure(self, idx):
        return self.n_velocity + np.asarray(idx, dtype=np.int64)

    def velocity_element_dofs(self, mesh: Mesh2D) -> np.ndarray:
        """(NT, 8) dofs per element: [v1x v2x v3x bx v1y v2y v3y by]."""
        t = mesh.triangles
        it = np.arange(self.nt)
        return np.column_stack([
            self.vx_vertex(t[:, 0]), self.vx_vertex(t[:, 1]), self.vx_vertex(t[:, 2]),
            self.vx_bubble(it),
            self.vy_vertex(t[:, 0]), self.vy_vertex(t[:, 1]), self.vy_vertex(t[:, 2]),
            self.vy_bubble(it),
        ])


def dofmap_for(mesh: Mesh2D) -> DofMap:
    return DofMap(nv=mesh.num_vertices, nt=mesh.num_triangles)


# -- per-mesh geometric factors (cached on the immutable mesh) -----------------


class _Geometry:
    def __init__(self, mesh: Mesh2D):
        p = mesh.vertices
        t = mesh.triangles
        coords = p[t]  # (NT, 3, 2)
        jac = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv /= det[:, None, None]
        jinvT = np.transpose(inv, (0, 2, 1))

        bary = TRI_RULE.points
        self.qw = TRI_RULE.weights[None, :] * det[:, None]  # (NT, NQ), sums to area
        self.qp = np.einsum("qa,tad->tqd", bary, coords)  # physical quad points
        self.grad_p1 = np.einsum("tde,ae->tad", jinvT, ElementP1.ref_grads)  # (NT,3,2)
        ref_gb = ElementP1Bubble.bubble_ref_grads(bary)  # (NQ, 2)
        self.grad_bubble = np.einsum("tde,qe->tqd", jinvT, ref_gb)  # (NT,NQ,2)
        self.p1_vals = ElementP1.values(bary)  # (NQ, 3)
        self.bubble_vals = ElementP1Bubble.bubble_values(bary)  # (NQ,)

        nq = bary.shape[0]
        nt = t.shape[0]
        # Combined MINI basis values/gradients, local order [l1 l2 l3 bubble].
        self.vals4 = np.empty((nt, nq, 4))
        self.vals4[:, :, :3] = self.p1_vals[None, :, :]
        self.vals4[:, :, 3] = self.bubble_vals[None, :]
        self.grads4 = np.empty((nt, nq, 4, 2))
        self.grads4[:, :, :3, :] = self.grad_p1[:, None, :, :]
        self.grads4[:, :, 3, :] = self.grad_bubble


def geometry(mesh: Mesh2D) -> _Geometry:
    geo = getattr(mesh, "_fem_geometry", None)
    if geo is None:
        geo = _Geometry(mesh)
        object.__setattr__(mesh, "_fem_geometry", geo)
    return geo


def _coeff_at_qp(mesh: Mesh2D, coeff) -> np.ndarray:
    """Broadcast a scalar / per-triangle / per-quad-point coefficient to (NT, NQ)."""
    nt = mesh.num_triangles
    nq = TRI_RULE.points.shape[0]
    c = np.asarray(coeff, dtype=float)
    if c.ndim == 0:
        return np.full((nt, nq), float(c))
    if c.shape == (nt,):
        return np.repeat(c[:, None], nq, axis=1)
    if c.shape == (nt, nq):
        return c
    raise ValueError(f"coefficient shape {c.shape} not scalar, (NT,), or (NT, NQ)")


def _scatter_p1(mesh: Mesh2D, local: np.ndarray) -> SparseMatrix:
    """Assemble (NT, 3, 3) local matrices into the global P1 operator."""
    nv = mesh.num_vertices
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    builder = CooBuilder(nv, nv)
    builder.add(rows, cols, local.reshape(len(t), -1).ravel())
    return builder.finalize()


# -- field evaluation ----------------------------------------------------------


def p1_at_qp(mesh: Mesh2D, nodal: np.ndarray) -> np.ndarray:
    """(NT, NQ) values of a P1 nodal field at the interior quad points."""
    geo = geometry(mesh)
    return np.einsum("qa,ta->tq", geo.p1_vals, np.asarray(nodal)[mesh.triangles])


def p1_gradients(mesh: Mesh2D, nodal: np.ndarray) -> np.ndarray:
    """(NT, 2) elementwise-constant gradient of a P1 field."""
    geo = geometry(mesh)
    return np.einsum("tad,ta->td", geo.grad_p1, np.asarray(nodal)[mesh.triangles])


def velocity_element_coeffs(mesh: Mesh2D, dofmap: DofMap, u: np.ndarray) -> np.ndarray:
    """(NT, 2, 4) per-element MINI coefficients [x/y][l1 l2 l3 bubble]."""
    dofs = dofmap.velocity_element_dofs(mesh)
    coeff = np.asarray(u)[dofs]  # (NT, 8)
    return coeff.reshape(-1, 2, 4)


def velocity_at_qp(mesh: Mesh2D, dofmap: DofMap, u: np.ndarray) -> np.ndarray:
    """(NT, NQ, 2) MINI velocity at the interior quad points."""
    geo = geometry(mesh)
    coeff = velocity_element_coeffs(mesh, dofmap, u)
    return np.einsum("tqa,tca->tqc", geo.vals4, coeff)


def velocity_grad_at_qp(mesh: Mesh2D, dofmap: DofMap, u: np.ndarray) -> np.ndarray:
    """(NT, NQ, 2, 2) velocity Jacobian, entry [c, d] = d(u_c)/d(x_d)."""
    geo = geometry(mesh)
    coeff = velocity_element_coeffs(mesh, dofmap, u)
    return np.einsum("tqad,tca->tqcd", geo.grads4, coeff)


def velocity_at_vertices(mesh: Mesh2D, dofmap: DofMap, u: np.ndarray) -> np.ndarray:
    """(NV, 2) vertex velocity (bubbles have no vertex trace)."""
    u = np.asarray(u)
    idx = np.arange(dofmap.nv)
    return np.column_stack([u[dofmap.vx_vertex(idx)], u[dofmap.vy_vertex(idx)]])


def strain_rate_product(grad: np.ndarray) -> np.ndarray:
    """D(v):D(v) from a velocity Jacobian array (..., 2, 2)."""
    d = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    return np.einsum("...cd,...cd->...", d, d)


# -- boundary edge helpers ------------------------------------------------------


def edge_quadrature(mesh: Mesh2D, edge_sel: np.ndarray):
    """Physical Gauss points/weights on selected boundary edges.

    Returns (points (NE,2,2), weights (NE,2), a_idx, b_idx, outward normals).
    """
    edges = mesh.boundary_edges[edge_sel]
    pa = mesh.vertices[edges[:, 0]]
    pb = mesh.vertices[edges[:, 1]]
    length = np.linalg.norm(pb - pa, axis=1)
    pts = pa[:, None, :] + EDGE_T[None, :, None] * (pb - pa)[:, None, :]
    wts = EDGE_W[None, :] * length[:, None]
    normals = mesh.boundary_outward_normals()[edge_sel]
    return pts, wts, edges[:, 0], edges[:, 1], normals


def _tag_selector(mesh: Mesh2D, tags) -> np.ndarray:
    tags = np.atleast_1d(np.asarray(tags, dtype=np.int64))
    return np.isin(mesh.boundary_tags, tags)


# -- scalar-field assembly --------------------------------------------------------


def assemble_stiffness(mesh: Mesh2D, coeff=1.0) -> SparseMatrix:
    """P1 stiffness with scalar/per-triangle/per-quad-point diffusion coefficient."""
    geo = geometry(mesh)
    c = _coeff_at_qp(mesh, coeff)
    scale = np.einsum("tq,tq->t", geo.qw, c)  # gradients are constant per element
    local = np.einsum("t,tad,tbd->tab", scale, geo.grad_p1, geo.grad_p1)
    return _scatter_p1(mesh, local)


def assemble_mass(mesh: Mesh2D, lumped: bool = False) -> SparseMatrix:
    """P1 mass matrix; ``lumped`` sums rows onto the diagonal."""
    geo = geometry(mesh)
    local = np.einsum("tq,qa,qb->tab", geo.qw, geo.p1_vals, geo.p1_vals)
    if lumped:
        nv = mesh.num_vertices
        builder = CooBuilder(nv, nv)
        t = mesh.triangles
        builder.add(t.ravel(), t.ravel(), local.sum(axis=2).ravel())
        return builder.finalize()
    return _scatter_p1(mesh, local)


def assemble_boundary_mass(mesh: Mesh2D, tags) -> SparseMatrix:
    """P1 mass restricted to boundary edges with the given tags."""
    nv = mesh.num_vertices
    builder = CooBuilder(nv, nv)
    sel = _tag_selector(mesh, tags)
    if np.any(sel):
        _, wts, ia, ib, _ = edge_quadrature(mesh, sel)
        phi = np.stack([1.0 - EDGE_T, EDGE_T])  # (2 basis, 2 gauss)
        local = np.einsum("eg,ag,bg->eab", wts, phi, phi)  # (NE, 2, 2)
        rows = np.stack([ia, ia, ib, ib], axis=1).ravel()
        cols = np.stack([ia, ib, ia, ib], axis=1).ravel()
        builder.add(rows, cols, local.reshape(-1, 4).ravel())
    return builder.finalize()


def assemble_boundary_load(mesh: Mesh2D, tags, data) -> np.ndarray:
    """Load vector of ``data`` against P1 traces over tagged edges.

    ``data`` is a constant or a callable(x, y) evaluated at edge Gauss points.
    """
    load = np.zeros(mesh.num_vertices)
    sel = _tag_selector(mesh, tags)
    if not np.any(sel):
        return load
    pts, wts, ia, ib, _ = edge_quadrature(mesh, sel)
    if callable(data):
        vals = np.asarray(data(pts[..., 0], pts[..., 1]), dtype=float)
        vals = np.broadcast_to(vals, wts.shape)
    else:
        vals = np.full(wts.shape, float(data))
    phi = np.stack([1.0 - EDGE_T, EDGE_T])
    contrib = np.einsum("eg,eg,ag->ea", wts, vals, phi)
    np.add.at(load, ia, contrib[:, 0])
    np.add.at(load, ib, contrib[:, 1])
    return load


def assemble_advection(mesh: Mesh2D, vel_qp) -> SparseMatrix:
    """Scalar advection matrix D_ij = integral (v . grad(l_j)) l_i.

    ``vel_qp`` is a (NT, NQ, 2) velocity sample at the interior quad points
    (use :func:`velocity_at_qp` for a MINI field).
    """
    geo = geometry(mesh)
    vel_qp = np.asarray(vel_qp, dtype=float)
    vdotg = np.einsum("tqd,tbd->tqb", vel_qp, geo.grad_p1)  # v . grad(l_b)
    local = np.einsum("tq,qa,tqb->tab", geo.qw, geo.p1_vals, vdotg)
    return _scatter_p1(mesh, local)


def assemble_scalar_load(mesh: Mesh2D, source) -> np.ndarray:
    """Volume load f_i = integral source * l_i; source scalar or (NT, NQ)."""
    geo = geometry(mesh)
    s = _coeff_at_qp(mesh, source)
    contrib = np.einsum("tq,tq,qa->ta", geo.qw, s, geo.p1_vals)
    load = np.zeros(mesh.num_vertices)
    np.add.at(load, mesh.triangles.ravel(), contrib.ravel())
    return load


def integrate_qp(mesh: Mesh2D, qp_values) -> float:
    """Integral over the domain of a per-quad-point sampled field."""
    geo = geometry(mesh)
    return float(np.einsum("tq,tq->", geo.qw, _coeff_at_qp(mesh, qp_values)))


# -- MINI (velocity/pressure) assembly -------------------------------------------


def _advect_at_qp(mesh: Mesh2D, dofmap: DofMap, advect) -> np.ndarray:
    geo = geometry(mesh)
    if callable(advect):
        ax, ay = advect(geo.qp[..., 0], geo.qp[..., 1])
        return np.stack([np.broadcast_to(ax, geo.qw.shape),
                         np.broadcast_to(ay, geo.qw.shape)], axis=-1)
    return velocity_at_qp(mesh, dofmap, advect)


def _advect_on_edges(mesh: Mesh2D, dofmap: DofMap, advect, pts, ia, ib) -> np.ndarray:
    if callable(advect):
        ax, ay = advect(pts[..., 0], pts[..., 1])
        shape = pts.shape[:-1]
        return np.stack([np.broadcast_to(ax, shape), np.broadcast_to(ay, shape)], axis=-1)
    # Bubbles vanish on edges, so the P1 trace is exact.
    u = np.asarray(advect)
    idx = np.arange(dofmap.nv)
    vx = u[dofmap.vx_vertex(idx)]
    vy = u[dofmap.vy_vertex(idx)]
    phi_a = (1.0 - EDGE_T)[None, :]
    phi_b = EDGE_T[None, :]
    ax = vx[ia][:, None] * phi_a + vx[ib][:, None] * phi_b
    ay = vy[ia][:, None] * phi_a + vy[ib][:, None] * phi_b
    return np.stack([ax, ay], axis=-1)


def assemble_mini_mass(mesh: Mesh2D, dofmap: DofMap) -> SparseMatrix:
    """Velocity mass matrix on the MINI space (block diagonal per component)."""
    geo = geometry(mesh)
    local = np.einsum("tq,tqa,tqb->tab", geo.qw, geo.vals4, geo.vals4)  # (NT,4,4)
    dofs = dofmap.velocity_element_dofs(mesh)
    n = dofmap.n_velocity
    builder = CooBuilder(n, n)
    nt = mesh.num_triangles
    for comp in range(2):
        d = dofs[:, 4 * comp:4 * comp + 4]
        rows = np.repeat(d, 4, axis=1).ravel()
        cols = np.tile(d, (1, 4)).ravel()
        builder.add(rows, cols, local.reshape(nt, -1).ravel())
    return builder.finalize()


def assemble_mini_blocks(mesh: Mesh2D, dofmap: DofMap, viscosity,
                         advect=None, gamma_n_tags=()) -> dict:
    """Momentum/divergence blocks of the MINI saddle system.

    Returns {"A_vv", "B", "G"} with

    * A_vv: viscous form integral nu D(u):D(w) plus, when ``advect`` is given,
      the convective form  -integral (a x u):D(w) + integral_{Gamma_N} (a.n)(u.w)
      with the surface term only on ``gamma_n_tags`` edges;
    * B: divergence block, (Bu)_i = integral psi_i div(u);
    * G: structural transpose of B (the momentum pressure-gradient coupling
      enters the saddle system as -G).

    ``viscosity`` is scalar / per-triangle / per-quad-point; ``advect`` is a
    flow dof vector or a callable(x, y) -> (ax, ay).
    """
    geo = geometry(mesh)
    nu = _coeff_at_qp(mesh, viscosity)
    w = geo.qw
    wnu = w * nu
    G4 = geo.grads4
    V4 = geo.vals4
    nt = mesh.num_triangles

    # Viscous: E[(a,d),(b,c)] = 1/2 integral nu (d_d phi_b d_c phi_a
    #                                            + delta_dc grad phi_a . grad phi_b)
    local = np.zeros((nt, 8, 8))
    grad_dot = np.einsum("tq,tqak,tqbk->tab", wnu, G4, G4)
    for d in range(2):
        for c in range(2):
            blk = 0.5 * np.einsum("tq,tqb,tqa->tab", wnu, G4[..., d], G4[..., c])
            if c == d:
                blk = blk + 0.5 * grad_dot
            local[:, 4 * d:4 * d + 4, 4 * c:4 * c + 4] += blk

    if advect is not None:
        # Convective volume part: -(a x u):D(w)
        #   = -phi_b/2 * (a_d d_c phi_a + delta_dc a . grad phi_a)
        a_qp = _advect_at_qp(mesh, dofmap, advect)  # (NT,NQ,2)
        a_dot_grad = np.einsum("tqk,tqak->tqa", a_qp, G4)
        for d in range(2):
            for c in range(2):
                blk = -0.5 * np.einsum("tq,tqb,tq,tqa->tab", w, V4, a_qp[..., d], G4[..., c])
                if c == d:
                    blk = blk - 0.5 * np.einsum("tq,tqb,tqa->tab", w, V4, a_dot_grad)
                local[:, 4 * d:4 * d + 4, 4 * c:4 * c + 4] += blk

    dofs = dofmap.velocity_element_dofs(mesh)
    nvel = dofmap.n_velocity
    builder = CooBuilder(nvel, nvel)
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    builder.add(rows, cols, local.reshape(nt, -1).ravel())

    if advect is not None and len(gamma_n_tags) > 0:
        sel = _tag_selector(mesh, gamma_n_tags)
        if np.any(sel):
            pts, wts, ia, ib, normals = edge_quadrature(mesh, sel)
            a_e = _advect_on_edges(mesh, dofmap, advect, pts, ia, ib)  # (NE,G,2)
            a_dot_n = np.einsum("egk,ek->eg", a_e, normals)
            phi = np.stack([1.0 - EDGE_T, EDGE_T])  # (2 basis, G)
            surf = np.einsum("eg,ag,bg->eab", wts * a_dot_n, phi, phi)  # (NE,2,2)
            for vfun in (dofmap.vx_vertex, dofmap.vy_vertex):
                da = vfun(ia)
                db = vfun(ib)
                rr = np.stack([da, da, db, db], axis=1).ravel()
                cc = np.stack([da, db, da, db], axis=1).ravel()
                builder.add(rr, cc, surf.reshape(-1, 4).ravel())

    A_vv = builder.finalize()

    # Divergence block: B[i, (b, c)] = integral psi_i d(phi_b)/d(x_c)
    bb = CooBuilder(dofmap.n_pressure, nvel)
    tvert = mesh.triangles
    for c in range(2):
        local_b = np.einsum("tq,qa,tqb->tab", w, geo.p1_vals, G4[..., c])  # (NT,3,4)
        rows = np.repeat(tvert, 4, axis=1).ravel()
        cols = np.tile(dofs[:, 4 * c:4 * c + 4], (1, 3)).ravel()
        bb.add(rows, cols, local_b.reshape(nt, -1).ravel())
    B = bb.finalize()

    return {"A_vv": A_vv, "B": B, "G": SparseMatrix(B.T)}


def assemble_vector_load(mesh: Mesh2D, dofmap: DofMap, force_qp) -> np.ndarray:
    """Velocity load L[(a,c)] = integral f_c * phi_a; force_qp is (NT, NQ, 2)."""
    geo = geometry(mesh)
    force_qp = np.asarray(force_qp, dtype=float)
    contrib = np.einsum("tq,tqc,tqa->tca", geo.qw, force_qp, geo.vals4)  # (NT,2,4)
    dofs = dofmap.velocity_element_dofs(mesh)
    load = np.zeros(dofmap.n_velocity)
    np.add.at(load, dofs.ravel(), contrib.reshape(-1, 8).ravel())
    return load
