import numpy as np
import pytest

from weldfrac.fem import (
    NODE_COORDS,
    ElementGeometry,
    FieldState,
    activate_elements,
    advance,
    assemble_matrix,
    assemble_vector,
    deactivate_elements,
    gauss_rule,
    newton_solve,
    next_time_step,
    orphan_dofs,
    rigid_modes,
    shape_eval,
    shape_functions,
    side_integration,
    solve_linear,
    staggered_step,
)
from weldfrac.geometry import rectangle
from weldfrac.types import (
    ConvergenceError,
    MeshError,
    RunStatistics,
    SingularSystemError,
    StaggeredConvergenceError,
)


@pytest.fixture
def patch():
    "Three by three elements with the interior corners moved off the lattice."
    mesh = rectangle(3.0, 3.0, 3, 3)
    for point, shift in (((1e-3, 1e-3), (0.15e-3, 0.1e-3)), ((2e-3, 2e-3), (-0.1e-3, 0.12e-3))):
        mesh.nodes[mesh.closest_node(point)] += shift
    return mesh


def laplace_matrix(mesh, geometry):
    element_matrices = np.einsum(
        "eq,eqai,eqbi->eab", geometry.weights, geometry.dNdx, geometry.dNdx
    )
    return assemble_matrix(mesh, element_matrices)


def boundary_nodes(mesh):
    sides = ("left", "right", "top", "bottom")
    return np.unique(np.concatenate([mesh.node_set(s) for s in sides]))


def test_gauss_rule():
    points, weights = gauss_rule()
    assert points.shape == (9, 2)
    assert weights.sum() == pytest.approx(4.0)
    # exact for a bi-quintic monomial
    assert np.sum(weights * points[:, 0] ** 4 * points[:, 1] ** 2) == pytest.approx(0.4 * 2 / 3)


def test_shape_functions_kronecker():
    N, dN = shape_functions(NODE_COORDS[:, 0], NODE_COORDS[:, 1])
    assert N == pytest.approx(np.eye(8))
    assert dN.sum(axis=1) == pytest.approx(np.zeros((8, 2)), abs=1e-12)


def test_shape_functions_partition_of_unity(rng):
    xi, eta = rng.uniform(-1, 1, (2, 50))
    N, _ = shape_functions(xi, eta)
    assert N.sum(axis=-1) == pytest.approx(np.ones(50))


def test_shape_eval_inverted():
    coords = 1e-3 * (NODE_COORDS[[1, 0, 3, 2, 4, 7, 6, 5]] + 1)
    with pytest.raises(MeshError, match="Jacobian"):
        shape_eval(coords, 0.0, 0.0)


def test_geometry_area(patch):
    geometry = ElementGeometry(patch)
    assert geometry.weights.sum() == pytest.approx(9e-6)
    assert geometry.integrate(np.ones((9, 9))) == pytest.approx(9e-6)


@pytest.mark.parametrize(
    "field, gradient",
    [
        (lambda x, y: 3 * x + 2 * y, lambda x, y: (3 + 0 * x, 2 + 0 * y)),
        (lambda x, y: x * x - x * y, lambda x, y: (2 * x - y, -x)),
    ],
    ids=["linear", "quadratic"],
)
def test_geometry_gradient(field, gradient):
    mesh = rectangle(3.0, 2.0, 3, 2)
    geometry = ElementGeometry(mesh)
    x, y = mesh.nodes.T
    values = geometry.gradient(field(x, y))
    px, py = geometry.points[..., 0], geometry.points[..., 1]
    gx, gy = gradient(px, py)
    assert values[..., 0] == pytest.approx(gx, abs=1e-9)
    assert values[..., 1] == pytest.approx(gy, abs=1e-9)


def test_projection_reproduces_nodal_field(patch):
    geometry = ElementGeometry(patch)
    x, y = patch.nodes.T
    nodal = 1.0 + 200 * x - 50 * y
    projected = geometry.project_to_nodes(geometry.interpolate(nodal))
    assert projected == pytest.approx(nodal, rel=1e-8)


def test_cell_average():
    mesh = rectangle(1.0, 1.0, 1, 1)
    geometry = ElementGeometry(mesh)
    values = geometry.points[..., 0]
    assert geometry.cell_average(values) == pytest.approx([0.5e-3])


def test_laplace_patch(patch):
    geometry = ElementGeometry(patch)
    K = laplace_matrix(patch, geometry)
    x, y = patch.nodes.T
    exact = 2.0 + 300 * x - 200 * y
    fixed = boundary_nodes(patch)
    solution = solve_linear(K, np.zeros(patch.num_nodes), fixed=fixed, values=exact)
    assert solution == pytest.approx(exact, rel=1e-9)


def test_laplace_patch_cg(patch):
    geometry = ElementGeometry(patch)
    K = laplace_matrix(patch, geometry)
    x, y = patch.nodes.T
    exact = 1.0 + 100 * x
    fixed = boundary_nodes(patch)
    solution = solve_linear(
        K, np.zeros(patch.num_nodes), fixed=fixed, values=exact[fixed], method="cg", rtol=1e-12
    )
    assert solution == pytest.approx(exact, rel=1e-7)


def test_singular_system_reports_modes(patch):
    geometry = ElementGeometry(patch)
    K = laplace_matrix(patch, geometry)
    f = np.zeros(patch.num_nodes)
    f[0] = 1.0
    with pytest.raises(SingularSystemError) as exc:
        solve_linear(K, f, modes=rigid_modes(patch, 1))
    assert exc.value.rigid_modes == ("constant",)


def test_unknown_linear_solver():
    with pytest.raises(ValueError, match="unknown linear solver"):
        solve_linear(np.eye(2), np.ones(2), method="gmres")


def test_rigid_modes_vector(patch):
    modes = rigid_modes(patch, 2)
    assert set(modes) == {"translation x", "translation y", "rotation"}
    assert modes["rotation"].shape == (2 * patch.num_nodes,)


def test_assembly_symmetric(patch):
    K = laplace_matrix(patch, ElementGeometry(patch))
    assert abs(K - K.T).max() < 1e-12 * abs(K).max()
    # constants lie in the null space
    assert np.abs(K @ np.ones(patch.num_nodes)).max() < 1e-9 * abs(K).max()


def test_assemble_vector_inactive(patch):
    patch.active[:] = False
    patch.active[0] = True
    vector = assemble_vector(patch, np.ones((1, 8)))
    assert vector.sum() == 8
    assert vector[patch.elements[0]].tolist() == [1.0] * 8


def test_newton_scalar():
    result = newton_solve(lambda x: (x * x - 2.0, 2 * x), 1.0, tol=1e-12)
    assert result.x == pytest.approx(np.sqrt(2.0))
    assert result.iterations < 8
    assert result.history[0] == pytest.approx(1.0)


def test_newton_fixed_dofs():
    def fun(x):
        residual = np.array([x[0] - 3.0, x[1] ** 3 - x[0]])
        tangent = np.array([[1.0, 0.0], [-1.0, 3 * x[1] ** 2]])
        return residual, tangent

    result = newton_solve(fun, np.array([5.0, 1.0]), fixed=[0], tol=1e-12)
    assert result.x[0] == 5.0
    assert result.x[1] == pytest.approx(5.0 ** (1 / 3))


def test_newton_divergence():
    with pytest.raises(ConvergenceError) as exc:
        newton_solve(lambda x: (np.arctan(x), 1 / (1 + x * x)), 2.0, max_iter=5)
    assert exc.value.iterations == 5


def test_staggered_converges():
    changes = iter([1.0, 0.1, 1e-5])
    assert staggered_step([lambda: next(changes), lambda: 0.0], tol=1e-4) == 3


def test_staggered_single_pass():
    assert staggered_step([lambda: 1.0], single_pass=True) == 1


def test_staggered_limit():
    with pytest.raises(StaggeredConvergenceError, match="3 passes"):
        staggered_step([lambda: 1.0], max_passes=3)


@pytest.mark.parametrize(
    "iterations, expected", [(5, 1.0), (10, 0.5), (20, 0.5), (1, 2.0), (0, 2.0)]
)
def test_next_time_step(iterations, expected):
    assert next_time_step(1.0, iterations) == pytest.approx(expected)


def test_next_time_step_bounds():
    assert next_time_step(1.0, 1, dt_max=1.5) == 1.5
    assert next_time_step(1.0, 50, dt_min=0.8) == 0.8


def test_advance_bisects():
    stats = RunStatistics()
    state = {"value": 0}

    def attempt(dt):
        state["value"] += 1
        if dt > 0.3:
            raise ConvergenceError("too large")
        return dt * 10

    dt, result = advance(attempt, lambda: 0, lambda saved: state.update(value=saved), 1.0, 0.01,
                         stats)  # fmt: skip
    assert dt == 0.25
    assert result == 2.5
    assert stats.bisections == 2
    assert state["value"] == 1


def test_advance_gives_up():
    def attempt(dt):
        raise ConvergenceError("never", iterations=3, residual=1.0)

    with pytest.raises(ConvergenceError, match="fell below") as exc:
        advance(attempt, lambda: None, lambda saved: None, 1.0, 0.2)
    assert exc.value.iterations == 3


def test_field_state_snapshot(patch):
    fields = FieldState(patch, T=20.0)
    plastic = fields.register("ep_eq", initial=0.0)
    saved = fields.snapshot()
    fields.T[:] = 500.0
    plastic[:] = 0.1
    patch.active[0] = False
    fields.restore(saved)
    assert np.all(fields.T == 20.0)
    assert np.all(fields.history["ep_eq"] == 0.0)
    assert patch.active.all()


def test_activation(patch):
    patch.element_sets["late"] = np.array([7, 8])
    fields = FieldState(patch)
    strain = fields.register("strain", shape=(4,), initial=0.0)
    assert strain.shape == (9, 9, 4)
    deactivate_elements(patch, "late")
    strain[:] = 1.0
    assert len(orphan_dofs(patch)) > 0
    seen = []
    new = activate_elements(patch, fields, "late", temperature=1500.0, on_activate=seen.append)
    assert new.tolist() == [7, 8]
    assert np.array_equal(seen[0], new)
    assert np.all(fields.T[np.unique(patch.elements[new])] == 1500.0)
    assert np.all(strain[new] == 0.0)
    assert np.all(strain[:7] == 1.0)
    assert orphan_dofs(patch, components=2).size == 0
    assert activate_elements(patch, fields, "late").size == 0


def test_activation_unknown_set(patch):
    with pytest.raises(MeshError):
        activate_elements(patch, FieldState(patch), "nowhere")


def test_side_integration():
    mesh = rectangle(2.0, 1.0, 2, 1)
    nodes, N, weights = side_integration(mesh, mesh.side_set("bottom"))
    assert nodes.shape == (2, 3)
    assert N.sum(axis=1) == pytest.approx(np.ones(3))
    assert weights.sum() == pytest.approx(2e-3)
