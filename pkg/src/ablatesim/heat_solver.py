"""Implicit-Euler advection-diffusion solve for temperature.

Sources are the Joule density sigma(theta)|grad phi|^2 and the viscous
dissipation nu(theta) D(v):D(v), both evaluated at quadrature points from the
lagged fields.  Transport is stabilized by a residual-based artificial
viscosity: a cell viscosity

    art|_K = beta ||v||_inf(K) * min(h_K, h_K^a ||R_a||_inf(K) / c(v, theta))
    c(v, theta) = c_R ||v||_inf(Omega) * var(theta) * diam(Omega)^(a-2)

that vanishes where the discrete fields satisfy the temperature equation and
saturates at the first-order upwind level beta ||v|| h_K elsewhere.  The
residual R_a is evaluated pointwise at quadrature points; the P1 diffusion
flux has zero divergence inside elements, so that term drops elementwise and
the residual acts as an upper-bound trigger, not an exact operator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem_core, linalg
from .fem_core import DofMap
from .materials import MaterialModel
from .mesh import Mesh2D
from .potential_solver import joule_density
from .flow_solver import viscous_dissipation

log = logging.getLogger(__name__)

ROLE_ROBIN = "robin"
ROLE_DIRICHLET = "dirichlet"
ROLE_NEUMANN = "neumann"  # homogeneous: no boundary terms
ROLE_INFLOW = "inflow"  # weakly imposed inflow temperature via the advective flux


@dataclass
class StabilizationParams:
    alpha_exp: float = 2.0
    beta: float = 0.1
    c_r: float = 1.0
    var_floor: float = 1e-10

    def __post_init__(self):
        if not 1.0 <= self.alpha_exp <= 2.0:
            raise ValueError(f"alpha_exp must lie in [1, 2], got {self.alpha_exp}")


@dataclass
class HeatBC:
    role: str
    alpha: float = 0.0  # Robin transfer coefficient
    data: object = 0.0  # ambient/inflow/Dirichlet temperature; const or callable(x, y, t)

    def __post_init__(self):
        if self.role not in (ROLE_ROBIN, ROLE_DIRICHLET, ROLE_NEUMANN, ROLE_INFLOW):
            raise ValueError(f"unknown heat boundary role {self.role!r}")
        if self.role == ROLE_ROBIN and self.alpha < 0.0:
            raise ValueError("Robin coefficient must be nonnegative")


@dataclass
class HeatProblem:
    mesh: Mesh2D
    dofmap: DofMap
    model: MaterialModel
    theta_prev: np.ndarray  # theta^{n-1}
    v: np.ndarray  # velocity dofs used for transport (and dissipation)
    phi: np.ndarray  # potential driving the Joule source
    dt: float
    bc: dict  # tag -> HeatBC, every boundary tag present exactly once
    stab: StabilizationParams = field(default_factory=StabilizationParams)
    theta_prev2: np.ndarray | None = None  # theta^{n-2}; None at startup
    v_stab: np.ndarray | None = None  # velocity for residual/viscosity (v^{n-1}); defaults to v
    time: float = 0.0  # t_n, for time-dependent boundary/source closures
    include_physics_sources: bool = True
    include_inflow_bc: bool = True  # False = saline supply off (initial equilibrium)
    extra_source: object = None  # callable(x, y, t); verification hook
    method: str = "gmres"
    tol: float = 1e-8
    max_iter: int = 20000
    iterations: int = field(default=0, init=False)
    art_visc: np.ndarray | None = field(default=None, init=False)  # last per-cell values

    def validate(self) -> None:
        from .mesh import ALL_TAGS

        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if set(self.bc) != set(ALL_TAGS):
            raise ValueError("every boundary tag needs exactly one heat role")
        for name, arr in (("theta_prev", self.theta_prev), ("v", self.v), ("phi", self.phi)):
            if not np.all(np.isfinite(np.asarray(arr, dtype=float))):
                raise ValueError(f"{name} contains non-finite values")


def _powers(theta_q, alpha, floor):
    """(theta^(a-1), theta^(a-2)) with fractional exponents guarded at >= floor."""
    if alpha == 1.0:
        return np.ones_like(theta_q), None
    if alpha == 2.0:
        return theta_q, np.ones_like(theta_q)
    base = np.maximum(theta_q, floor)
    return base ** (alpha - 1.0), base ** (alpha - 2.0)


def entropy_residual(mesh: Mesh2D, dofmap: DofMap, model: MaterialModel,
                     theta_prev: np.ndarray, theta_prev2: np.ndarray,
                     v: np.ndarray, phi: np.ndarray, dt: float,
                     alpha_exp: float = 2.0, var_floor: float = 1e-10) -> np.ndarray:
    """Per-cell sup norm of the pointwise temperature-equation residual.

    Expanded form at each quadrature point (theta = theta^{n-1}, lagged
    coefficients, backward-difference time derivative against theta^{n-2}):

        (th^a - th_prev^a)/(a dt) + th^(a-1) v.grad(th)
        + eta(th)(a-1) th^(a-2) |grad th|^2 - gamma th^(a-1)

    with gamma = nu(th) D(v):D(v) + sigma(th)|grad phi|^2.  The elementwise
    P1 diffusion flux divergence vanishes and is dropped.
    """
    a = float(alpha_exp)
    th1_q = fem_core.p1_at_qp(mesh, theta_prev)
    th2_q = fem_core.p1_at_qp(mesh, theta_prev2)
    grad1 = fem_core.p1_gradients(mesh, theta_prev)  # (NT, 2)
    grad1_sq = np.einsum("td,td->t", grad1, grad1)

    v_qp = fem_core.velocity_at_qp(mesh, dofmap, v)
    v_dot_grad = np.einsum("tqd,td->tq", v_qp, grad1)

    gamma_q = (viscous_dissipation(mesh, dofmap, model, theta_prev, v)
               + joule_density(mesh, model, theta_prev, phi))
    eta_q = model.eta(th1_q)

    pow1, pow2 = _powers(th1_q, a, var_floor)
    if a == 1.0:
        time_term = (th1_q - th2_q) / dt
        cross = 0.0
    else:
        if a == 2.0:
            time_term = (th1_q ** 2 - th2_q ** 2) / (2.0 * dt)
        else:
            b1 = np.maximum(th1_q, var_floor)
            b2 = np.maximum(th2_q, var_floor)
            time_term = (b1 ** a - b2 ** a) / (a * dt)
        cross = eta_q * (a - 1.0) * pow2 * grad1_sq[:, None]
    res = time_term + pow1 * v_dot_grad + cross - gamma_q * pow1
    return np.max(np.abs(res), axis=1)


def _cell_speed_max(mesh: Mesh2D, dofmap: DofMap, v: np.ndarray) -> np.ndarray:
    """Per-cell sup of |v| sampled at quadrature points and vertices."""
    v_qp = fem_core.velocity_at_qp(mesh, dofmap, v)
    speed_qp = np.linalg.norm(v_qp, axis=2).max(axis=1)
    vv = fem_core.velocity_at_vertices(mesh, dofmap, v)
    speed_v = np.linalg.norm(vv, axis=1)[mesh.triangles].max(axis=1)
    return np.maximum(speed_qp, speed_v)


def domain_diameter(mesh: Mesh2D) -> float:
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    return float(np.linalg.norm(hi - lo))


def artificial_viscosity(mesh: Mesh2D, dofmap: DofMap, residuals,
                         theta: np.ndarray, v: np.ndarray,
                         params: StabilizationParams) -> np.ndarray:
    """Per-cell artificial viscosity; ``residuals=None`` saturates the h_K branch."""
    vmax_k = _cell_speed_max(mesh, dofmap, v)
    h = mesh.h
    if residuals is None:
        min_term = h
    else:
        vmax = float(vmax_k.max()) if vmax_k.size else 0.0
        var = float(np.max(theta) - np.min(theta))
        c = params.c_r * vmax * var * domain_diameter(mesh) ** (params.alpha_exp - 2.0)
        if c <= params.var_floor:
            min_term = h
        else:
            min_term = np.minimum(h, h ** params.alpha_exp * np.asarray(residuals) / c)
    return params.beta * vmax_k * min_term


def _robin_terms(problem: HeatProblem):
    mesh = problem.mesh
    nv = mesh.num_vertices
    mat = None
    rhs = np.zeros(nv)
    for tag, bc in problem.bc.items():
        if bc.role != ROLE_ROBIN or bc.alpha == 0.0:
            continue
        m = fem_core.assemble_boundary_mass(mesh, (tag,))
        mat = m.multiply(bc.alpha) if mat is None else mat + m.multiply(bc.alpha)
        if callable(bc.data):
            t = problem.time
            rhs += bc.alpha * fem_core.assemble_boundary_load(
                mesh, (tag,), lambda x, y, f=bc.data: f(x, y, t))
        else:
            rhs += bc.alpha * fem_core.assemble_boundary_load(mesh, (tag,), float(bc.data))
    return mat, rhs


def _inflow_terms(problem: HeatProblem):
    """Weak imposition of the inflow temperature through the advective flux.

    On edges where the transporting velocity enters the domain (v.n < 0) the
    fluid carries the prescribed temperature, adding

        A += int_e (-(v.n)_-) theta psi,   rhs += int_e (-(v.n)_-) theta_in psi.

    Where v.n >= 0 (or v = 0) the term vanishes, so a switched-off jet
    imposes nothing.
    """
    mesh, dm = problem.mesh, problem.dofmap
    nv = mesh.num_vertices
    mat = None
    rhs = np.zeros(nv)
    if not problem.include_inflow_bc:
        return mat, rhs
    from .linalg import CooBuilder

    for tag, bc in sorted(problem.bc.items()):
        if bc.role != ROLE_INFLOW:
            continue
        sel = fem_core._tag_selector(mesh, (tag,))
        if not np.any(sel):
            continue
        pts, wts, ia, ib, normals = fem_core.edge_quadrature(mesh, sel)
        vel = fem_core._advect_on_edges(mesh, dm, problem.v, pts, ia, ib)
        vdotn = np.einsum("egk,ek->eg", vel, normals)
        w_in = wts * np.maximum(-vdotn, 0.0)  # active only on the inflow part
        phi = np.stack([1.0 - fem_core.EDGE_T, fem_core.EDGE_T])
        local = np.einsum("eg,ag,bg->eab", w_in, phi, phi)
        builder = CooBuilder(nv, nv)
        rows = np.stack([ia, ia, ib, ib], axis=1).ravel()
        cols = np.stack([ia, ib, ia, ib], axis=1).ravel()
        builder.add(rows, cols, local.reshape(-1, 4).ravel())
        m = builder.finalize()
        mat = m if mat is None else mat + m
        if callable(bc.data):
            vals = np.asarray(bc.data(pts[..., 0], pts[..., 1], problem.time), dtype=float)
            vals = np.broadcast_to(vals, w_in.shape)
        else:
            vals = np.full(w_in.shape, float(bc.data))
        contrib = np.einsum("eg,eg,ag->ea", w_in, vals, phi)
        np.add.at(rhs, ia, contrib[:, 0])
        np.add.at(rhs, ib, contrib[:, 1])
    return mat, rhs


def _dirichlet_terms(problem: HeatProblem):
    mesh = problem.mesh
    dofs = []
    vals = []
    for tag, bc in sorted(problem.bc.items()):
        if bc.role != ROLE_DIRICHLET:
            continue
        verts = mesh.boundary_vertices_with_tag(tag)
        if verts.size == 0:
            continue
        xy = mesh.vertices[verts]
        if callable(bc.data):
            v = np.broadcast_to(np.asarray(bc.data(xy[:, 0], xy[:, 1], problem.time),
                                           dtype=float), verts.shape)
        else:
            v = np.full(verts.shape, float(bc.data))
        dofs.append(verts)
        vals.append(np.asarray(v))
    if not dofs:
        return np.empty(0, dtype=np.int64), np.empty(0)
    alldofs = np.concatenate(dofs)
    allvals = np.concatenate(vals)
    # Corner vertices shared by two Dirichlet tags: keep the last assignment.
    _, keep = np.unique(alldofs[::-1], return_index=True)
    keep = alldofs.size - 1 - keep
    return alldofs[keep], allvals[keep]


def _source_load(problem: HeatProblem) -> np.ndarray:
    mesh, dm = problem.mesh, problem.dofmap
    src = np.zeros((mesh.num_triangles, fem_core.TRI_RULE.points.shape[0]))
    if problem.include_physics_sources:
        src += viscous_dissipation(mesh, dm, problem.model, problem.theta_prev, problem.v)
        src += joule_density(mesh, problem.model, problem.theta_prev, problem.phi)
    if problem.extra_source is not None:
        geo = fem_core.geometry(mesh)
        extra = problem.extra_source(geo.qp[..., 0], geo.qp[..., 1], problem.time)
        src = src + np.broadcast_to(np.asarray(extra, dtype=float), src.shape)
    return fem_core.assemble_scalar_load(mesh, src)


def _diffusion_coefficient(problem: HeatProblem) -> np.ndarray:
    """eta(theta^{n-1}) at quad points plus the per-cell artificial viscosity."""
    mesh, dm = problem.mesh, problem.dofmap
    eta_qp = problem.model.eta(fem_core.p1_at_qp(mesh, problem.theta_prev))
    v_stab = problem.v_stab if problem.v_stab is not None else problem.v
    if problem.stab.beta == 0.0:
        art = np.zeros(mesh.num_triangles)
    elif problem.theta_prev2 is None:
        # Startup: no residual level yet, so saturate the first-order branch.
        art = artificial_viscosity(mesh, dm, None, problem.theta_prev, v_stab,
                                   problem.stab)
    else:
        res = entropy_residual(mesh, dm, problem.model, problem.theta_prev,
                               problem.theta_prev2, v_stab, problem.phi,
                               problem.dt, problem.stab.alpha_exp,
                               problem.stab.var_floor)
        art = artificial_viscosity(mesh, dm, res, problem.theta_prev, v_stab,
                                   problem.stab)
    problem.art_visc = art
    return eta_qp + art[:, None]


def _solve_system(problem: HeatProblem, A, rhs, x0) -> np.ndarray:
    if problem.method == "lu":
        problem.iterations = 0
        return linalg.solve_lu(A, rhs)
    info: dict = {}
    try:
        theta = linalg.solve_gmres(A, rhs, tol_rel=problem.tol, restart=50,
                                   max_iter=problem.max_iter, x0=x0, info=info)
        problem.iterations = info.get("iterations", 0)
        return theta
    except linalg.NotConverged as exc:
        log.warning("heat GMRES did not converge (%s); falling back to LU", exc)
        problem.iterations = getattr(exc, "iters", 0)
        return linalg.solve_lu(A, rhs)


def solve_heat_step(problem: HeatProblem) -> np.ndarray:
    """One implicit-Euler step of the stabilized temperature equation."""
    problem.validate()
    mesh = problem.mesh
    theta_prev = np.asarray(problem.theta_prev, dtype=float)

    coeff = _diffusion_coefficient(problem)
    A_diff = fem_core.assemble_stiffness(mesh, coeff)
    vel_qp = fem_core.velocity_at_qp(mesh, problem.dofmap, problem.v)
    D = fem_core.assemble_advection(mesh, vel_qp)
    M = fem_core.assemble_mass(mesh)
    Mdt = M.multiply(1.0 / problem.dt).tocsr()

    A_sys = (Mdt + A_diff + D).tocsr()
    rhs = Mdt @ theta_prev + _source_load(problem)
    for mat, extra in (_robin_terms(problem), _inflow_terms(problem)):
        if mat is not None:
            A_sys = (A_sys + mat).tocsr()
        rhs = rhs + extra

    dofs, vals = _dirichlet_terms(problem)
    A_sys, rhs = linalg.apply_dirichlet(A_sys, rhs, dofs, vals)
    theta = _solve_system(problem, A_sys, rhs, x0=theta_prev)
    theta[dofs] = vals  # pinned dofs are exact by contract
    if not np.all(np.isfinite(theta)):
        raise linalg.SolverError("heat step produced non-finite temperature")
    return theta


def solve_heat_stationary(problem: HeatProblem, picard_tol: float = 1e-10,
                          picard_max: int = 50) -> np.ndarray:
    """Steady temperature with given flow/potential, by Picard on eta(theta).

    Solves the unstabilized stationary equation (no time derivative, no
    artificial viscosity); used to build initial conditions.  ``theta_prev``
    seeds the Picard iteration.
    """
    problem.validate()
    mesh = problem.mesh
    theta = np.asarray(problem.theta_prev, dtype=float).copy()
    vel_qp = fem_core.velocity_at_qp(mesh, problem.dofmap, problem.v)
    D = fem_core.assemble_advection(mesh, vel_qp)
    robin_mat, robin_rhs = _robin_terms(problem)
    inflow_mat, inflow_rhs = _inflow_terms(problem)

    saved_prev = problem.theta_prev
    try:
        for it in range(picard_max):
            problem.theta_prev = theta  # lag the coefficient fields
            eta_qp = problem.model.eta(fem_core.p1_at_qp(mesh, theta))
            A_sys = fem_core.assemble_stiffness(mesh, eta_qp) + D
            for mat in (robin_mat, inflow_mat):
                if mat is not None:
                    A_sys = A_sys + mat
            rhs = _source_load(problem) + robin_rhs + inflow_rhs
            dofs, vals = _dirichlet_terms(problem)
            A_sys, rhs = linalg.apply_dirichlet(A_sys.tocsr(), rhs, dofs, vals)
            theta_new = _solve_system(problem, A_sys, rhs, x0=theta)
            theta_new[dofs] = vals
            incr = np.linalg.norm(theta_new - theta) / max(1.0, np.linalg.norm(theta_new))
            theta = theta_new
            if incr < picard_tol:
                break
        else:
            log.warning("stationary heat Picard hit the iteration cap (incr=%.3e)", incr)
    finally:
        problem.theta_prev = saved_prev
    if not np.all(np.isfinite(theta)):
        raise linalg.SolverError("stationary heat solve produced non-finite temperature")
    return theta
