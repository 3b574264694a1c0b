import numpy as np
import pytest

from ablatesim import fem_core
from ablatesim.flow_solver import (FlowBC, FlowProblem, InflowProfile,
                                   builtin_profile_gamma1,
                                   builtin_profile_gamma5, make_profile,
                                   solve_flow_stationary, solve_flow_step,
                                   viscous_dissipation)
from ablatesim.materials import MaterialModel
from ablatesim.mesh import ALL_TAGS, GeometrySpec, generate_channel_mesh

L, H, R = 1.5, 0.5, 0.075


def channel_mesh(nx=20, ny=10):
    return generate_channel_mesh(GeometrySpec(L=L, H=H, r=R, nx=nx, ny=ny))


def bc_test1():
    return {
        1: FlowBC("inflow", builtin_profile_gamma1(H)),
        2: FlowBC("noslip"),
        3: FlowBC("donothing"),
        4: FlowBC("noslip"),
        5: FlowBC("inflow", builtin_profile_gamma5(L, R)),
    }


def make_problem(mesh, bc, theta_val=37.0, v_prev=None, dt=0.01, **kw):
    dm = fem_core.dofmap_for(mesh)
    model = kw.pop("model", MaterialModel())
    if v_prev is None:
        v_prev = np.zeros(dm.n_velocity)
    return FlowProblem(mesh=mesh, dofmap=dm, model=model,
                       theta=np.full(mesh.num_vertices, theta_val),
                       v_prev=v_prev, dt=dt, bc=bc, **kw)


class TestProfiles:
    def test_gamma1_endpoints_and_peak(self):
        p = builtin_profile_gamma1(H)
        assert p(0.0, 0.0) == (0.0, 0.0)
        vx, vy = p(0.0, H)
        assert vx == 0.0 and vy == 0.0
        vx, vy = p(0.0, H / 2)
        assert vx == pytest.approx(H * H / 4.0, rel=1e-15)  # 0.0625 for H=0.5
        assert vx == pytest.approx(0.0625)
        assert vy == 0.0

    def test_gamma5_zeros_at_segment_ends(self):
        p = builtin_profile_gamma5(L, R)
        for x in (L / 2 - R, L / 2 + R):
            vx, vy = p(x, H)
            assert vx == pytest.approx(0.0, abs=1e-15)
            assert vy == pytest.approx(0.0, abs=1e-15)

    def test_gamma5_center_value(self):
        # direct arithmetic oracle: (0, -(2/r) r^2 y) at x = L/2
        p = builtin_profile_gamma5(L, R)
        vx, vy = p(L / 2, H)
        assert vx == pytest.approx(0.0, abs=1e-15)
        assert vy == pytest.approx(-(2.0 / R) * R * R * H, rel=1e-14)
        assert vy == pytest.approx(-0.075, rel=1e-12)

    def test_profile_registry(self):
        assert make_profile("gamma1_parabola", H=H).name == "gamma1_parabola"
        assert make_profile("gamma5_electrode", L=L, r=R).name == "gamma5_electrode"
        z = make_profile("zero")
        assert z(0.3, 0.4) == (0.0, 0.0)
        with pytest.raises(ValueError):
            make_profile("nonsense")

    def test_inflow_requires_profile(self):
        with pytest.raises(ValueError):
            FlowBC("inflow")
        with pytest.raises(ValueError):
            FlowBC("slippery")


class TestFlowStep:
    def test_zero_data_zero_solution(self):
        mesh = channel_mesh(10, 6)
        bc = {t: FlowBC("noslip") for t in (1, 2, 4, 5)}
        bc[3] = FlowBC("donothing")
        problem = make_problem(mesh, bc)
        v, p = solve_flow_step(problem)
        assert np.abs(v).max() <= 1e-10
        assert np.abs(p).max() <= 1e-10

    def test_rigid_translation_enclosed(self):
        # constant Dirichlet data on every side of an enclosed box
        mesh = generate_channel_mesh(GeometrySpec(L=2.0, H=1.0, r=0.25, nx=10, ny=6))
        dm = fem_core.dofmap_for(mesh)
        const = InflowProfile("const", lambda x, y: (
            np.ones_like(np.asarray(x, dtype=float)),
            np.zeros_like(np.asarray(x, dtype=float))))
        bc = {t: FlowBC("inflow", const) for t in ALL_TAGS}
        v_prev = np.zeros(dm.n_velocity)
        v_prev[dm.vx_vertex(np.arange(dm.nv))] = 1.0
        problem = make_problem(mesh, bc, v_prev=v_prev, dt=0.1)
        v, p = solve_flow_step(problem)
        vv = fem_core.velocity_at_vertices(mesh, dm, v)
        assert np.abs(vv[:, 0] - 1.0).max() <= 1e-8
        assert np.abs(vv[:, 1]).max() <= 1e-8

    def test_divergence_contract(self):
        mesh = channel_mesh()
        problem = make_problem(mesh, bc_test1())
        v, p = solve_flow_step(problem)
        B = fem_core.assemble_mini_blocks(mesh, problem.dofmap, 1.0)["B"]
        assert np.linalg.norm(B @ v) <= 1e-8 * (1.0 + np.linalg.norm(v))

    def test_dirichlet_dofs_exact(self):
        mesh = channel_mesh(10, 6)
        problem = make_problem(mesh, bc_test1())
        v, _ = solve_flow_step(problem)
        dm = problem.dofmap
        wall = mesh.boundary_vertices_with_tag(2)
        assert np.abs(v[dm.vx_vertex(wall)]).max() == 0.0
        inlet = mesh.boundary_vertices_with_tag(1)
        expected = mesh.vertices[inlet, 1] * (H - mesh.vertices[inlet, 1])
        assert np.array_equal(v[dm.vx_vertex(inlet)], expected)

    def test_invalid_dt_rejected(self):
        problem = make_problem(channel_mesh(10, 6), bc_test1(), dt=-0.1)
        with pytest.raises(ValueError):
            solve_flow_step(problem)

    def test_nan_field_rejected(self):
        problem = make_problem(channel_mesh(10, 6), bc_test1())
        problem.theta = problem.theta.copy()
        problem.theta[0] = np.inf
        with pytest.raises(ValueError):
            solve_flow_step(problem)


class TestStationary:
    def test_zero_data_zero_solution(self):
        mesh = channel_mesh(10, 6)
        bc = {t: FlowBC("noslip") for t in (1, 2, 4, 5)}
        bc[3] = FlowBC("donothing")
        problem = make_problem(mesh, bc, dt=None)
        v, p = solve_flow_stationary(problem)
        assert np.abs(v).max() <= 1e-12
        assert np.abs(p).max() <= 1e-12

    def test_stokes_limit_matches_time_marching(self):
        # cross-method oracle: steady Stokes vs the long-time implicit limit
        mesh = channel_mesh(10, 6)
        problem = make_problem(mesh, bc_test1(), dt=None, include_convection=False)
        v_steady, _ = solve_flow_stationary(problem)
        v = np.zeros_like(v_steady)
        for _ in range(200):
            step = make_problem(mesh, bc_test1(), v_prev=v, dt=0.5,
                                include_convection=False)
            v, _ = solve_flow_step(step)
        scale = max(1.0, np.linalg.norm(v_steady))
        assert np.linalg.norm(v - v_steady) <= 1e-6 * scale

    def test_test1_channel_flow_structure(self):
        mesh = channel_mesh()
        problem = make_problem(mesh, bc_test1(), dt=None)
        v, _ = solve_flow_stationary(problem)
        dm = problem.dofmap
        vv = fem_core.velocity_at_vertices(mesh, dm, v)
        speed = np.linalg.norm(vv, axis=1)
        assert speed.max() > 0.05  # nonzero channel flow
        # argmax scan oracle: the developed profile peaks on the centerline
        # (the accelerated outflow parabola), not at the walls
        k = int(np.argmax(speed))
        x, y = mesh.vertices[k]
        assert abs(y - H / 2) <= 0.15
        assert speed.max() > H * H / 4.0  # exceeds the inflow peak: flux added by the jet

    def test_divergence_contract_stationary(self):
        mesh = channel_mesh(10, 6)
        problem = make_problem(mesh, bc_test1(), dt=None)
        v, _ = solve_flow_stationary(problem)
        B = fem_core.assemble_mini_blocks(mesh, problem.dofmap, 1.0)["B"]
        assert np.linalg.norm(B @ v) <= 1e-8 * (1.0 + np.linalg.norm(v))


class TestDissipation:
    def test_zero_velocity(self):
        mesh = channel_mesh(6, 4)
        dm = fem_core.dofmap_for(mesh)
        model = MaterialModel()
        theta = np.full(mesh.num_vertices, 37.0)
        d = viscous_dissipation(mesh, dm, model, theta, np.zeros(dm.n_velocity))
        assert np.abs(d).max() == 0.0

    def test_rigid_rotation_zero(self):
        mesh = channel_mesh(6, 4)
        dm = fem_core.dofmap_for(mesh)
        v = np.zeros(dm.n_velocity)
        idx = np.arange(dm.nv)
        v[dm.vx_vertex(idx)] = -mesh.vertices[:, 1]
        v[dm.vy_vertex(idx)] = mesh.vertices[:, 0]
        d = viscous_dissipation(mesh, dm, MaterialModel(),
                                np.full(mesh.num_vertices, 37.0), v)
        assert np.abs(d).max() <= 1e-26

    def test_shear_flow_value(self):
        # symbolic oracle: v = (y, 0) gives D:D = 1/2 pointwise
        mesh = channel_mesh(6, 4)
        dm = fem_core.dofmap_for(mesh)
        v = np.zeros(dm.n_velocity)
        v[dm.vx_vertex(np.arange(dm.nv))] = mesh.vertices[:, 1]
        model = MaterialModel()
        d = viscous_dissipation(mesh, dm, model, np.full(mesh.num_vertices, 37.0), v)
        assert np.allclose(d, model.nu_const * 0.5, rtol=1e-12)

    def test_nonnegative_for_random_fields(self):
        mesh = channel_mesh(6, 4)
        dm = fem_core.dofmap_for(mesh)
        rng = np.random.default_rng(8)
        for _ in range(3):
            v = rng.standard_normal(dm.n_velocity)
            d = viscous_dissipation(mesh, dm, MaterialModel(),
                                    np.full(mesh.num_vertices, 37.0), v)
            assert d.min() >= 0.0


class TestEnergyDecay:
    def test_stokes_homogeneous_decay(self):
        mesh = channel_mesh(8, 4)
        dm = fem_core.dofmap_for(mesh)
        bc = {t: FlowBC("noslip") for t in ALL_TAGS}
        rng = np.random.default_rng(4)
        v = np.zeros(dm.n_velocity)
        interior = np.setdiff1d(np.arange(dm.nv), np.unique(mesh.boundary_edges.ravel()))
        v[dm.vx_vertex(interior)] = rng.standard_normal(interior.size)
        v[dm.vy_vertex(interior)] = rng.standard_normal(interior.size)
        M = fem_core.assemble_mini_mass(mesh, dm)
        for _ in range(4):
            problem = make_problem(mesh, bc, v_prev=v, dt=0.05,
                                   include_convection=False)
            v_new, _ = solve_flow_step(problem)
            assert v_new @ (M @ v_new) <= v @ (M @ v) * (1.0 + 1e-12)
            v = v_new
