"""Semi-implicit MINI-element solve of the incompressible flow step.

Time scheme: implicit Euler with Oseen linearization, convection advected by
the previous velocity and viscosity frozen at the lagged temperature.  The
saddle system

    [ M/dt + A(nu) + N(a)   -G ] [v]   [ M v_prev / dt + F ]
    [ B                      0 ] [p] = [ 0                 ]

is assembled monolithically (G = B^T) and solved by sparse LU by default;
restarted GMRES is available as an optional path.  Do-nothing outlets add no
stress boundary terms; the convective form keeps its Gamma_N surface integral
exactly as written.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem_core, linalg
from .fem_core import DofMap
from .materials import MaterialModel
from .mesh import Mesh2D

log = logging.getLogger(__name__)

ROLE_INFLOW = "inflow"
ROLE_NOSLIP = "noslip"
ROLE_DONOTHING = "donothing"


@dataclass
class InflowProfile:
    """Boundary velocity closure (vectorized over coordinates)."""

    name: str
    fn: object  # callable(x, y) -> (vx, vy)
    params: dict = field(default_factory=dict)

    def __call__(self, x, y):
        return self.fn(x, y)


def builtin_profile_gamma1(H: float) -> InflowProfile:
    """Parabolic blood inflow (y (H - y), 0) on the left side."""

    def fn(x, y):
        return y * (H - y), np.zeros_like(np.asarray(y, dtype=float))

    return InflowProfile("gamma1_parabola", fn, {"H": H})


def builtin_profile_gamma5(L: float, r: float) -> InflowProfile:
    """Saline electrode jet on the top segment, evaluated at wall coordinates."""

    def fn(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        wl = x - 0.5 * L + r
        wr = 0.5 * L + r - x
        vx = (2.0 / r) * wl * wr * (0.5 * L - x)
        vy = -(2.0 / r) * wl * wr * y
        return vx, vy

    return InflowProfile("gamma5_electrode", fn, {"L": L, "r": r})


def zero_profile() -> InflowProfile:
    def fn(x, y):
        z = np.zeros_like(np.asarray(x, dtype=float))
        return z, z.copy()

    return InflowProfile("zero", fn)


def make_profile(name: str, **params) -> InflowProfile:
    if name == "gamma1_parabola":
        return builtin_profile_gamma1(params["H"])
    if name == "gamma5_electrode":
        return builtin_profile_gamma5(params["L"], params["r"])
    if name == "zero":
        return zero_profile()
    raise ValueError(f"unknown inflow profile {name!r}")


@dataclass
class FlowBC:
    role: str
    profile: InflowProfile | None = None

    def __post_init__(self):
        if self.role not in (ROLE_INFLOW, ROLE_NOSLIP, ROLE_DONOTHING):
            raise ValueError(f"unknown flow boundary role {self.role!r}")
        if self.role == ROLE_INFLOW and self.profile is None:
            raise ValueError("inflow boundary needs a profile")


@dataclass
class FlowProblem:
    mesh: Mesh2D
    dofmap: DofMap
    model: MaterialModel
    theta: np.ndarray  # lagged temperature (P1 nodal)
    v_prev: np.ndarray  # previous velocity (n_velocity dofs)
    dt: float
    bc: dict  # tag -> FlowBC, every boundary tag present exactly once
    body_force: bool = False
    include_convection: bool = True
    advect_field: object = None  # callable override of the Oseen advecting field
    extra_force: object = None  # callable(x, y) -> (fx, fy); verification hook
    method: str = "lu"
    tol: float = 1e-8
    pressure_pin_value: float = 0.0
    iterations: int = field(default=0, init=False)

    def validate(self) -> None:
        from .mesh import ALL_TAGS

        if self.dt is not None and not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if set(self.bc) != set(ALL_TAGS):
            raise ValueError("every boundary tag needs exactly one flow role")
        if not np.all(np.isfinite(self.v_prev)):
            raise ValueError("previous velocity contains non-finite values")
        if not np.all(np.isfinite(np.asarray(self.theta, dtype=float))):
            raise ValueError("temperature field contains non-finite values")


def _dirichlet_velocity(problem: FlowProblem):
    """Constrained velocity dofs and values from the no-slip/inflow tags."""
    mesh, dm = problem.mesh, problem.dofmap
    values: dict[int, float] = {}
    for tag in sorted(problem.bc):
        bc = problem.bc[tag]
        if bc.role == ROLE_DONOTHING:
            continue
        verts = mesh.boundary_vertices_with_tag(tag)
        if verts.size == 0:
            continue
        xy = mesh.vertices[verts]
        if bc.role == ROLE_NOSLIP:
            vx = np.zeros(verts.size)
            vy = np.zeros(verts.size)
        else:
            vx, vy = bc.profile(xy[:, 0], xy[:, 1])
            vx = np.broadcast_to(np.asarray(vx, dtype=float), verts.shape)
            vy = np.broadcast_to(np.asarray(vy, dtype=float), verts.shape)
        for v, a, b in zip(verts, vx, vy):
            values[int(dm.vx_vertex(v))] = float(a)
            values[int(dm.vy_vertex(v))] = float(b)
    dofs = np.fromiter(values.keys(), dtype=np.int64, count=len(values))
    vals = np.fromiter(values.values(), dtype=float, count=len(values))
    order = np.argsort(dofs)
    return dofs[order], vals[order]


def _force_load(problem: FlowProblem) -> np.ndarray:
    mesh, dm = problem.mesh, problem.dofmap
    geo = fem_core.geometry(mesh)
    load = np.zeros(dm.n_velocity)
    if problem.body_force:
        theta_qp = fem_core.p1_at_qp(mesh, problem.theta)
        fx, fy = problem.model.body_force(theta_qp)
        load += fem_core.assemble_vector_load(mesh, dm, np.stack([fx, fy], axis=-1))
    if problem.extra_force is not None:
        fx, fy = problem.extra_force(geo.qp[..., 0], geo.qp[..., 1])
        fx = np.broadcast_to(np.asarray(fx, dtype=float), geo.qw.shape)
        fy = np.broadcast_to(np.asarray(fy, dtype=float), geo.qw.shape)
        load += fem_core.assemble_vector_load(mesh, dm, np.stack([fx, fy], axis=-1))
    return load


def _donothing_tags(problem: FlowProblem) -> tuple:
    return tuple(t for t, bc in problem.bc.items() if bc.role == ROLE_DONOTHING)


def _solve_linear(problem: FlowProblem, advect, include_time: bool):
    """One linear (Stokes/Oseen) solve; returns (v, P)."""
    mesh, dm = problem.mesh, problem.dofmap
    nu_qp = problem.model.nu(fem_core.p1_at_qp(mesh, problem.theta))
    gamma_n = _donothing_tags(problem)
    blocks = fem_core.assemble_mini_blocks(mesh, dm, nu_qp, advect=advect,
                                           gamma_n_tags=gamma_n)
    K = blocks["A_vv"]
    B = blocks["B"]
    G = blocks["G"]

    rhs_v = _force_load(problem)
    if include_time:
        M = fem_core.assemble_mini_mass(mesh, dm)
        Mdt = M.multiply(1.0 / problem.dt).tocsr()
        K = (K + Mdt).tocsr()
        rhs_v = rhs_v + Mdt @ np.asarray(problem.v_prev, dtype=float)

    S = sp.bmat([[K, -G], [B, None]], format="csr")
    rhs = np.concatenate([rhs_v, np.zeros(dm.n_pressure)])

    dofs, vals = _dirichlet_velocity(problem)
    if not gamma_n:
        # Enclosed flow: the do-nothing outlet normally fixes the pressure
        # level; without one, pin a single pressure dof.
        dofs = np.append(dofs, dm.pressure(0))
        vals = np.append(vals, problem.pressure_pin_value)
    S, rhs = linalg.apply_dirichlet(S, rhs, dofs, vals)

    if problem.method == "gmres":
        info: dict = {}
        x = linalg.solve_gmres(S, rhs, tol_rel=problem.tol, restart=50,
                               max_iter=20000, info=info)
        problem.iterations = info.get("iterations", 0)
    else:
        x = linalg.solve_lu(S, rhs)
        problem.iterations = 0
        res = np.linalg.norm(rhs - S @ x)
        if not np.isfinite(res) or res > 1e-8 * (1.0 + np.linalg.norm(rhs)):
            raise linalg.SolverError(f"flow LU residual too large: {res:.3e}")

    x[dofs] = vals  # constrained dofs are exact by contract
    v = x[:dm.n_velocity]
    p = x[dm.n_velocity:]
    div = float(np.linalg.norm(B @ v))
    if div > 1e-8 * (1.0 + np.linalg.norm(v)):
        if problem.method == "gmres":
            x = linalg.solve_lu(S, rhs)
            v = x[:dm.n_velocity]
            p = x[dm.n_velocity:]
            div = float(np.linalg.norm(B @ v))
        if div > 1e-8 * (1.0 + np.linalg.norm(v)):
            raise linalg.SolverError(f"divergence contract violated: |Bv| = {div:.3e}")
    return v, p


def solve_flow_step(problem: FlowProblem):
    """Advance the flow one implicit-Euler step; returns (v, P)."""
    problem.validate()
    advect = None
    if problem.include_convection:
        advect = problem.advect_field if problem.advect_field is not None else problem.v_prev
    return _solve_linear(problem, advect, include_time=True)


def solve_flow_stationary(problem: FlowProblem, picard_tol: float = 1e-8,
                          picard_max: int = 50):
    """Steady flow by Picard iteration on the Oseen linearization.

    Falls back to a zero field (with a logged warning) if the very first
    Stokes solve fails; used only to build initial conditions.
    """
    problem.validate()
    if problem.advect_field is not None:
        # Prescribed advecting field (manufactured cases): single linear solve.
        return _solve_linear(problem, problem.advect_field, include_time=False)
    try:
        v, p = _solve_linear(problem, None, include_time=False)
    except linalg.SolverError as exc:
        log.warning("stationary Stokes solve failed (%s); using zero initial flow", exc)
        return np.zeros(problem.dofmap.n_velocity), np.zeros(problem.dofmap.n_pressure)
    if not problem.include_convection:
        return v, p
    for _ in range(picard_max):
        v_new, p = _solve_linear(problem, v, include_time=False)
        incr = np.linalg.norm(v_new - v) / max(1.0, np.linalg.norm(v_new))
        v = v_new
        if incr < picard_tol:
            break
    else:
        log.warning("stationary flow Picard hit the iteration cap (incr=%.3e)", incr)
    return v, p


def viscous_dissipation(mesh: Mesh2D, dofmap: DofMap, model: MaterialModel,
                        theta: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(NT, NQ) dissipation nu(theta) D(v):D(v) at the quad points."""
    nu_qp = model.nu(fem_core.p1_at_qp(mesh, theta))
    grad = fem_core.velocity_grad_at_qp(mesh, dofmap, v)
    return nu_qp * fem_core.strain_rate_product(grad)
