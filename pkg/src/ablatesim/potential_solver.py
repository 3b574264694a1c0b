"""Electric potential solve: -div(sigma(theta) grad phi) = source.

The physical problem has zero volumetric source, a prescribed current flux g
on the electrode segment, and grounded (phi = 0) remaining boundaries; the
optional volumetric source exists for manufactured-solution verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem_core, linalg
from .materials import MaterialModel
from .mesh import GAMMA1, GAMMA2, GAMMA3, GAMMA4, GAMMA5, Mesh2D


@dataclass
class PotentialProblem:
    mesh: Mesh2D
    model: MaterialModel
    theta: np.ndarray  # lagged temperature, P1 nodal
    g: object = 0.0  # flux on the Neumann tags: constant or callable(x, y)
    neumann_tags: tuple = (GAMMA5,)
    dirichlet_tags: tuple = (GAMMA1, GAMMA2, GAMMA3, GAMMA4)
    dirichlet_value: float = 0.0
    source: object = None  # verification hook: (NT, NQ) array or callable(x, y)
    tol: float = 1e-10
    max_iter: int = 5000
    iterations: int = field(default=0, init=False)  # written by solve_potential


def _source_at_qp(problem: PotentialProblem):
    if problem.source is None:
        return None
    geo = fem_core.geometry(problem.mesh)
    if callable(problem.source):
        return np.asarray(problem.source(geo.qp[..., 0], geo.qp[..., 1]), dtype=float)
    return np.asarray(problem.source, dtype=float)


def solve_potential(problem: PotentialProblem) -> np.ndarray:
    """CG solve of the lagged-conductivity potential equation."""
    mesh = problem.mesh
    theta = np.asarray(problem.theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("temperature field contains non-finite values")
    if not problem.dirichlet_tags:
        raise ValueError("potential problem needs a nonempty Dirichlet tag set")

    sigma_qp = problem.model.sigma(fem_core.p1_at_qp(mesh, theta))
    A = fem_core.assemble_stiffness(mesh, sigma_qp)
    b = fem_core.assemble_boundary_load(mesh, problem.neumann_tags, problem.g)
    src = _source_at_qp(problem)
    if src is not None:
        b = b + fem_core.assemble_scalar_load(mesh, src)

    dirichlet = np.unique(np.concatenate([
        mesh.boundary_vertices_with_tag(t) for t in problem.dirichlet_tags
    ]))
    A, b = linalg.apply_dirichlet(A, b, dirichlet,
                                  np.full(dirichlet.size, problem.dirichlet_value))
    info: dict = {}
    phi = linalg.solve_cg(A, b, tol_rel=problem.tol, max_iter=problem.max_iter, info=info)
    problem.iterations = info.get("iterations", 0)
    phi[dirichlet] = problem.dirichlet_value  # pinned dofs are exact by contract
    return phi


def joule_density(mesh: Mesh2D, model: MaterialModel, theta: np.ndarray,
                  phi: np.ndarray) -> np.ndarray:
    """(NT, NQ) Joule heating sigma(theta) |grad phi|^2 at the quad points."""
    sigma_qp = model.sigma(fem_core.p1_at_qp(mesh, theta))
    grad_phi = fem_core.p1_gradients(mesh, phi)  # constant per element
    grad_sq = np.einsum("td,td->t", grad_phi, grad_phi)
    return sigma_qp * grad_sq[:, None]
