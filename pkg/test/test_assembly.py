import numpy as np
import pytest
from scipy import sparse

from lgdm.assembly import (
    STATE_FIELDS,
    SparseSystem,
    apply_dirichlet,
    assemble,
    element_blocks,
    internal_forces,
    reaction_force,
)
from lgdm.constitutive import elasticity_matrix
from lgdm.exceptions import InvalidArgumentError, InvalidStateError, UnsupportedConstraintError
from lgdm.geometry import model_geometry
from lgdm.mesh import Constraint
from lgdm.problems import build_model, build_problem
from lgdm.solver import initial_state, update_state

SMALL = {
    "bar1d": {"divisions": (20,)},
    "sen2d": {"divisions": (8, 8)},
    "sen3d": {"divisions": (4, 4, 2)},
}


def small_model(problem_id, **overrides):
    return build_model(build_problem(problem_id, {**SMALL[problem_id], **overrides}))


def damaged_state(model, seed, backend="batched"):
    """Random state with every Gauss point loading well above the threshold"""
    generator = np.random.default_rng(seed)
    dofmap, params = model.dofmap, model.params
    u = generator.normal(scale=1e-2, size=dofmap.ndof_u)
    ebar = params.kappa0 * (3 + 0.2 * generator.uniform(size=dofmap.ndof_e))
    seed_state = initial_state(model)
    state = update_state(
        u, ebar, model.mesh, dofmap, seed_state, seed_state.kappa, params, backend
    )
    return np.concatenate([u, ebar]), seed_state, state


def relative_difference(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


class TestBackendEquivalence:
    @pytest.mark.parametrize("problem_id", list(SMALL))
    def test_virgin_state(self, problem_id):
        model = small_model(problem_id)
        state = initial_state(model)
        loop = assemble(model.mesh, model.dofmap, state, model.params, "loop")
        batched = assemble(model.mesh, model.dofmap, state, model.params, "batched")
        assert relative_difference(loop.dense(), batched.dense()) <= 1e-12
        assert np.abs(loop.rhs - batched.rhs).max() <= 1e-12

    @pytest.mark.parametrize("problem_id", list(SMALL))
    def test_damaged_state(self, problem_id):
        model = small_model(problem_id)
        _, _, state = damaged_state(model, 17)
        assert state.D.max() > 0.5
        loop = assemble(model.mesh, model.dofmap, state, model.params, "loop")
        batched = assemble(model.mesh, model.dofmap, state, model.params, "batched")
        assert relative_difference(loop.dense(), batched.dense()) <= 1e-12
        assert relative_difference(loop.rhs, batched.rhs) <= 1e-12

    @pytest.mark.parametrize("problem_id", list(SMALL))
    def test_state_update(self, problem_id):
        model = small_model(problem_id)
        _, _, batched = damaged_state(model, 5, "batched")
        _, _, loop = damaged_state(model, 5, "loop")
        for name in ("strain", "eeq", "ebar", "grad_ebar", "kappa", "D", "sigma"):
            assert relative_difference(getattr(loop, name), getattr(batched, name)) <= 1e-12

    def test_worker_processes(self):
        model = small_model("sen2d")
        _, _, state = damaged_state(model, 3)
        serial = assemble(model.mesh, model.dofmap, state, model.params, "loop", workers=1)
        parallel = assemble(model.mesh, model.dofmap, state, model.params, "loop", workers=2)
        assert np.array_equal(serial.values, parallel.values)
        assert np.array_equal(serial.rhs, parallel.rhs)

    def test_unknown_backend(self):
        model = small_model("bar1d")
        with pytest.raises(InvalidArgumentError):
            assemble(model.mesh, model.dofmap, initial_state(model), model.params, "gpu")


class TestTangent:
    def test_finite_differences(self):
        model = build_model(build_problem("sen2d", {"divisions": (4, 4)}))
        mesh, dofmap, params = model.mesh, model.dofmap, model.params
        x, seed_state, state = damaged_state(model, 11)
        committed = seed_state.kappa

        def residual(x):
            u, ebar = dofmap.split(x)
            st = update_state(u, ebar, mesh, dofmap, seed_state, committed, params)
            return -assemble(mesh, dofmap, st, params).rhs

        K = assemble(mesh, dofmap, state, params).matrix
        generator = np.random.default_rng(2024)
        scale = np.concatenate([np.full(dofmap.ndof_u, 1e-2), np.full(dofmap.ndof_e, 1e-4)])
        step = 1e-6
        for _ in range(20):
            v = generator.normal(size=dofmap.size) * scale
            fd = (residual(x + step * v) - residual(x - step * v)) / (2 * step)
            Kv = K @ v
            assert np.linalg.norm(fd - Kv) <= 1e-5 * np.linalg.norm(Kv)

    def test_virgin_displacement_block(self):
        """k = 1: at zero strain the displacement block is the elastic stiffness"""
        model = small_model("sen2d", k=1.0)
        mesh, dofmap, params = model.mesh, model.dofmap, model.params
        K = assemble(mesh, dofmap, initial_state(model), params).dense()

        geometry = model_geometry(mesh)
        C = elasticity_matrix(params.E, params.nu, 2)
        local = np.einsum("pvi,vw,pwj,p->pij", geometry.B, C, geometry.B, geometry.wdetJ)
        local = geometry.per_element(local).sum(axis=1)
        rows = np.repeat(dofmap.gather_u, dofmap.gather_u.shape[1], axis=1).ravel()
        cols = np.tile(dofmap.gather_u, (1, dofmap.gather_u.shape[1])).ravel()
        expected = sparse.coo_matrix(
            (local.ravel(), (rows, cols)), shape=(dofmap.ndof_u, dofmap.ndof_u)
        ).toarray()
        n = dofmap.ndof_u
        assert np.allclose(K[:n, :n], expected, rtol=1e-12, atol=1e-9)
        assert np.all(K[:n, n:] == 0)
        assert np.all(K[n:, :n] == 0)

    def test_element_blocks_symmetric_elastic_part(self):
        model = small_model("sen3d")
        state = initial_state(model)
        el_state = {name: getattr(state, name)[:8] for name in STATE_FIELDS}
        blocks = element_blocks(
            model.mesh.element_coords_u[0],
            model.mesh.element_coords_e[0],
            el_state,
            model.params,
            model.mesh.family_u,
            model.mesh.family_e,
        )
        assert blocks.matrix.shape == (32, 32)
        assert np.allclose(blocks.k_uu, blocks.k_uu.T)
        assert np.allclose(blocks.k_ee, blocks.k_ee.T)
        assert np.all(blocks.vector == 0)

    @pytest.mark.parametrize("problem_id, modes", [("bar1d", 1), ("sen2d", 3), ("sen3d", 6)])
    def test_virgin_rigid_body_modes(self, problem_id, modes):
        model = small_model(problem_id)
        K = assemble(model.mesh, model.dofmap, initial_state(model), model.params).dense()
        n = model.dofmap.ndof_u
        eigenvalues = np.linalg.eigvalsh(K[:n, :n])
        assert eigenvalues.min() > -1e-9 * eigenvalues.max()
        assert np.sum(np.abs(eigenvalues) < 1e-9 * eigenvalues.max()) == modes

    def test_unknown_tangent(self):
        model = small_model("bar1d")
        with pytest.raises(InvalidArgumentError, match="tangent"):
            assemble(model.mesh, model.dofmap, initial_state(model), model.params, tangent="exact")

    def test_state_size_mismatch(self):
        model = small_model("bar1d")
        other = small_model("bar1d", divisions=(10,))
        with pytest.raises(InvalidStateError):
            assemble(model.mesh, model.dofmap, initial_state(other), model.params)


class TestConvexTangent:
    @pytest.fixture
    def systems(self):
        model = small_model("sen2d")
        _, _, state = damaged_state(model, 29)
        return model, state, {
            tangent: assemble(model.mesh, model.dofmap, state, model.params, tangent=tangent)
            for tangent in ("consistent", "convex")
        }

    def test_only_displacement_block_changes(self, systems):
        model, state, systems = systems
        n = model.dofmap.ndof_u
        consistent, convex = systems["consistent"].dense(), systems["convex"].dense()
        assert np.any(state.ebar > state.eeq)
        assert not np.allclose(convex[:n, :n], consistent[:n, :n])
        assert np.array_equal(convex[:, n:], consistent[:, n:])
        assert np.array_equal(convex[n:, :], consistent[n:, :])
        assert np.array_equal(systems["convex"].rhs, systems["consistent"].rhs)

    def test_clipped_curvature_is_positive(self, systems):
        model, _, systems = systems
        n = model.dofmap.ndof_u
        added = systems["convex"].dense()[:n, :n] - systems["consistent"].dense()[:n, :n]
        assert np.allclose(added, added.T, atol=1e-9 * np.abs(added).max())
        eigenvalues = np.linalg.eigvalsh(0.5 * (added + added.T))
        assert eigenvalues.min() >= -1e-9 * eigenvalues.max()

    def test_displacement_block_positive(self, systems):
        model, _, systems = systems
        n = model.dofmap.ndof_u
        K_uu = systems["convex"].dense()[:n, :n]
        eigenvalues = np.linalg.eigvalsh(0.5 * (K_uu + K_uu.T))
        assert eigenvalues.min() >= -1e-9 * eigenvalues.max()

    def test_equal_without_excess_micro_strain(self):
        model = small_model("sen2d")
        generator = np.random.default_rng(31)
        u = generator.normal(scale=1e-2, size=model.dofmap.ndof_u)
        seed_state = initial_state(model)
        state = update_state(
            u,
            np.zeros(model.dofmap.ndof_e),
            model.mesh,
            model.dofmap,
            seed_state,
            seed_state.kappa,
            model.params,
        )
        consistent, convex = (
            assemble(model.mesh, model.dofmap, state, model.params, backend, tangent=tangent)
            for backend, tangent in (("batched", "consistent"), ("loop", "convex"))
        )
        assert relative_difference(convex.dense(), consistent.dense()) <= 1e-12

    @pytest.mark.parametrize("backend", ["loop", "batched"])
    def test_uniaxial_unchanged(self, backend):
        model = small_model("bar1d")
        _, _, state = damaged_state(model, 37)
        consistent, convex = (
            assemble(model.mesh, model.dofmap, state, model.params, backend, tangent=tangent)
            for tangent in ("consistent", "convex")
        )
        assert relative_difference(convex.dense(), consistent.dense()) <= 1e-9


class TestDirichlet:
    @pytest.fixture
    def system(self):
        generator = np.random.default_rng(7)
        K = generator.normal(size=(6, 6)) + 6 * np.eye(6)
        return SparseSystem.from_matrix(K, generator.normal(size=6), ndof_u=4)

    def test_first_phase(self, system):
        constraints = [Constraint(0), Constraint(2, 0.5, "driven")]
        K0 = system.dense()
        constrained = apply_dirichlet(system, constraints, "first")
        K = constrained.dense()
        for dof, value in ((0, 0.0), (2, 0.5)):
            row = np.zeros(6)
            row[dof] = 1
            assert np.array_equal(K[dof], row)
            assert np.array_equal(K[:, dof], row)
            assert constrained.rhs[dof] == value
        free = [1, 3, 4, 5]
        assert np.allclose(constrained.rhs[free], system.rhs[free] - K0[free, 2] * 0.5)
        assert np.allclose(K[np.ix_(free, free)], K0[np.ix_(free, free)])

    def test_solution_satisfies_constraints(self, system):
        constraints = [Constraint(1), Constraint(3, -0.25, "driven")]
        constrained = apply_dirichlet(system, constraints, "first")
        dx = np.linalg.solve(constrained.dense(), constrained.rhs)
        assert dx[1] == pytest.approx(0.0)
        assert dx[3] == pytest.approx(-0.25)
        residual = system.dense() @ dx - system.rhs
        assert np.allclose(residual[[0, 2, 4, 5]], 0)

    def test_subsequent_phase(self, system):
        constrained = apply_dirichlet(system, [Constraint(2, 0.5, "driven")], "subsequent")
        assert constrained.rhs[2] == 0.0
        assert np.allclose(np.delete(constrained.rhs, 2), np.delete(system.rhs, 2))

    def test_micro_strain_dof(self, system):
        with pytest.raises(UnsupportedConstraintError):
            apply_dirichlet(system, [Constraint(4)])

    def test_contradicting(self, system):
        with pytest.raises(UnsupportedConstraintError):
            apply_dirichlet(system, [Constraint(1), Constraint(1, 0.1, "driven")], "first")

    def test_unknown_phase(self, system):
        with pytest.raises(InvalidArgumentError):
            apply_dirichlet(system, [Constraint(1)], "last")


class TestInternalForces:
    def test_virgin_state(self):
        model = small_model("sen2d")
        forces = internal_forces(model.mesh, model.dofmap, initial_state(model))
        assert forces.shape == (model.dofmap.ndof_u,)
        assert np.all(forces == 0)

    @pytest.mark.parametrize("problem_id", list(SMALL))
    def test_reaction_balances_driven_forces(self, problem_id):
        model = small_model(problem_id)
        _, _, state = damaged_state(model, 41)
        system = assemble(model.mesh, model.dofmap, state, model.params)
        driven = [c.dof for c in model.constraints if c.kind == "driven"]
        reaction = reaction_force(
            model.mesh, model.dofmap, state, model.constraints, model.spec.section
        )
        expected = -system.rhs[driven].sum() * model.spec.section
        assert reaction == pytest.approx(expected, rel=1e-12, abs=1e-12 * np.abs(system.rhs).max())
        assert reaction != 0
