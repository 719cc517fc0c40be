"""
Finite element infrastructure shared by the thermal, mechanical and fracture solvers.

8-node serendipity quadrilaterals integrated with a 3x3 Gauss rule, sparse assembly, the
linear solve contract, a generic Newton driver, staggered fixed-point iteration with step
bisection, and element (de)activation.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from .mesh import SIDE_NODES
from .types import ConvergenceError, MeshError, SingularSystemError, StaggeredConvergenceError

logger = logging.getLogger(__name__)

#: Reference coordinates of the element nodes
NODE_COORDS = np.array(
    [[-1, -1], [1, -1], [1, 1], [-1, 1], [0, -1], [1, 0], [0, 1], [-1, 0]], dtype=float
)


def gauss_rule(order=3):
    """
    Tensor-product Gauss-Legendre rule on the reference square.

    :returns: points ``(order**2, 2)`` and weights ``(order**2,)``
    """
    x, w = np.polynomial.legendre.leggauss(order)
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wx, wy = np.meshgrid(w, w, indexing="ij")
    return np.column_stack([xi.ravel(), eta.ravel()]), (wx * wy).ravel()


def shape_functions(xi, eta):
    """
    Serendipity shape functions and their reference derivatives.

    :returns: ``N`` with shape ``(..., 8)`` and ``dN`` with shape ``(..., 8, 2)``
    """
    xi = np.asarray(xi, dtype=float)[..., None]
    eta = np.asarray(eta, dtype=float)[..., None]
    xc, yc = NODE_COORDS[:4, 0], NODE_COORDS[:4, 1]
    corner = 0.25 * (1 + xi * xc) * (1 + eta * yc) * (xi * xc + eta * yc - 1)
    corner_dxi = 0.25 * xc * (1 + eta * yc) * (2 * xi * xc + eta * yc)
    corner_deta = 0.25 * yc * (1 + xi * xc) * (xi * xc + 2 * eta * yc)

    # mid-side nodes 4 and 6 lie on eta = -1/+1, nodes 5 and 7 on xi = +1/-1
    ym = NODE_COORDS[[4, 6], 1]
    xm = NODE_COORDS[[5, 7], 0]
    mid_h = 0.5 * (1 - xi**2) * (1 + eta * ym)
    mid_h_dxi = -xi * (1 + eta * ym)
    mid_h_deta = 0.5 * (1 - xi**2) * ym
    mid_v = 0.5 * (1 + xi * xm) * (1 - eta**2)
    mid_v_dxi = 0.5 * xm * (1 - eta**2)
    mid_v_deta = -eta * (1 + xi * xm)

    N = np.concatenate(
        [corner, mid_h[..., :1], mid_v[..., :1], mid_h[..., 1:], mid_v[..., 1:]], -1
    )
    dxi = np.concatenate(
        [corner_dxi, mid_h_dxi[..., :1], mid_v_dxi[..., :1], mid_h_dxi[..., 1:],
         mid_v_dxi[..., 1:]],
        -1,
    )  # fmt: skip
    deta = np.concatenate(
        [corner_deta, mid_h_deta[..., :1], mid_v_deta[..., :1], mid_h_deta[..., 1:],
         mid_v_deta[..., 1:]],
        -1,
    )  # fmt: skip
    return N, np.stack([dxi, deta], axis=-1)


def shape_eval(coords, xi, eta):
    """
    Shape values, physical gradients and Jacobian determinant of one element.

    :param coords: ``(8, 2)`` nodal coordinates
    :raises MeshError: if the Jacobian is not positive at the point
    :returns: ``(N, dNdx, detJ)``
    """
    N, dN = shape_functions(xi, eta)
    J = np.einsum("...ni,nj->...ij", dN, np.asarray(coords, dtype=float))
    detJ = np.linalg.det(J)
    if np.any(detJ <= 0):
        raise MeshError("non-positive Jacobian determinant")

    dNdx = np.einsum("...ij,...nj->...ni", np.linalg.inv(J), dN)
    return N, dNdx, detJ


def edge_shape_functions(zeta):
    "Quadratic edge shape functions ordered (start, end, middle) and their derivatives."
    zeta = np.asarray(zeta, dtype=float)
    N = np.stack([0.5 * zeta * (zeta - 1), 0.5 * zeta * (zeta + 1), 1 - zeta**2], axis=-1)
    dN = np.stack([zeta - 0.5, zeta + 0.5, -2 * zeta], axis=-1)
    return N, dN


class ElementGeometry:
    """
    Quadrature data of every element of a mesh.

    Attributes: ``N`` ``(9, 8)``, ``dNdx`` ``(m, 9, 8, 2)``, ``detJ`` and ``weights``
    ``(m, 9)`` and ``points`` ``(m, 9, 2)`` (physical integration point coordinates).

    :raises MeshError: if any element has a non-positive Jacobian
    """

    def __init__(self, mesh, order=3):
        points, weights = gauss_rule(order)
        self.mesh = mesh
        self.N, dN = shape_functions(points[:, 0], points[:, 1])
        coords = mesh.nodes[mesh.elements]
        J = np.einsum("qni,enj->eqij", dN, coords)
        self.detJ = np.linalg.det(J)
        bad = np.flatnonzero((self.detJ <= 0).any(axis=1))
        if bad.size:
            raise MeshError(f"non-positive Jacobian in elements {bad[:10].tolist()}")

        self.dNdx = np.einsum("eqij,qnj->eqni", np.linalg.inv(J), dN)
        self.weights = self.detJ * weights
        self.points = np.einsum("qn,enj->eqj", self.N, coords)

    @property
    def num_points(self):
        return self.N.shape[0]

    def interpolate(self, nodal):
        "Nodal scalar field to integration points ``(m, 9)``."
        return np.einsum("qn,en->eq", self.N, np.asarray(nodal)[self.mesh.elements])

    def gradient(self, nodal):
        "Gradient of a nodal scalar field at integration points ``(m, 9, 2)``."
        return np.einsum("eqni,en->eqi", self.dNdx, np.asarray(nodal)[self.mesh.elements])

    def integrate(self, values, elements=None):
        "Integral of an integration point field over the given (default: active) elements."
        elements = np.flatnonzero(self.mesh.active) if elements is None else elements
        return float(np.sum(np.asarray(values)[elements] * self.weights[elements]))

    def cell_average(self, values):
        "Quadrature-weighted average per element of an integration point field."
        values = np.asarray(values)
        weights = self.weights.reshape(self.weights.shape + (1,) * (values.ndim - 2))
        return np.sum(values * weights, axis=1) / np.sum(weights, axis=1)

    def project_to_nodes(self, values, elements=None):
        """
        L2 projection of an integration point scalar field onto the nodal space.

        Nodes outside ``elements`` (default: active elements) are returned as zero.
        """
        elements = np.flatnonzero(self.mesh.active) if elements is None else elements
        w = self.weights[elements]
        M = assemble_matrix(
            self.mesh, np.einsum("eq,qa,qb->eab", w, self.N, self.N), elements=elements
        )
        rhs = assemble_vector(
            self.mesh, np.einsum("eq,qa,eq->ea", w, self.N, np.asarray(values)[elements]), elements
        )
        used = np.zeros(self.mesh.num_nodes, dtype=bool)
        used[self.mesh.elements[elements].ravel()] = True
        result = np.zeros(self.mesh.num_nodes)
        result[used] = splu(M[used][:, used].tocsc()).solve(rhs[used])
        return result


def element_dofs(mesh, elements, components=1):
    "Global degree of freedom numbers ``(k, 8 * components)`` of the given elements."
    conn = mesh.elements[elements]
    if components == 1:
        return conn

    return (conn[:, :, None] * components + np.arange(components)).reshape(len(conn), -1)


def assemble_matrix(mesh, element_matrices, elements=None, components=1):
    """
    Assemble element matrices into a CSR matrix.

    Duplicate entries are summed in a fixed order so identical inputs give identical results.

    :param element_matrices: ``(k, d, d)`` for the ``k`` listed elements
    :param elements: element indices (default: all active elements)
    """
    elements = np.flatnonzero(mesh.active) if elements is None else np.asarray(elements)
    dofs = element_dofs(mesh, elements, components)
    size = mesh.num_nodes * components
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    values = np.asarray(element_matrices).ravel()
    matrix = sp.coo_matrix((values, (rows, cols)), shape=(size, size))
    return matrix.tocsr()


def assemble_vector(mesh, element_vectors, elements=None, components=1):
    "Assemble element vectors ``(k, d)`` into a global vector."
    elements = np.flatnonzero(mesh.active) if elements is None else np.asarray(elements)
    dofs = element_dofs(mesh, elements, components)
    return np.bincount(
        dofs.ravel(),
        weights=np.asarray(element_vectors).ravel(),
        minlength=mesh.num_nodes * components,
    )


def rigid_modes(mesh, components):
    "Named rigid body modes of a scalar (constant) or 2D vector (translations, rotation) field."
    if components == 1:
        return {"constant": np.ones(mesh.num_nodes)}

    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    zero, one = np.zeros(mesh.num_nodes), np.ones(mesh.num_nodes)
    return {
        "translation x": np.column_stack([one, zero]).ravel(),
        "translation y": np.column_stack([zero, one]).ravel(),
        "rotation": np.column_stack([-y, x]).ravel(),
    }


def solve_linear(K, f, fixed=None, values=None, modes=None, method="direct", rtol=1e-10):
    """
    Solve ``K x = f`` with prescribed values on the ``fixed`` degrees of freedom.

    :param K: sparse system matrix
    :param f: right-hand side
    :param fixed: boolean mask or index array of constrained degrees of freedom
    :param values: prescribed values (full-length vector or one per fixed dof)
    :param dict modes: named candidate null-space vectors reported when the system is singular
    :param str method: ``direct`` (sparse LU) or ``cg`` (conjugate gradients, symmetric only)
    :raises SingularSystemError: if the reduced system cannot be solved
    :returns: full solution vector
    """
    K = sp.csr_matrix(K)
    f = np.asarray(f, dtype=float)
    n = K.shape[0]
    mask = np.zeros(n, dtype=bool)
    if fixed is not None:
        mask[fixed] = True

    x = np.zeros(n)
    if values is not None:
        values = np.asarray(values, dtype=float)
        if values.shape == (n,):
            x[mask] = values[mask]
        else:
            x[mask] = values

    free = ~mask
    rhs = f[free] - K[free][:, mask] @ x[mask]
    A = K[free][:, free]
    try:
        if method == "direct":
            solution = splu(A.tocsc()).solve(rhs)
        elif method == "cg":
            solution, info = cg(A, rhs, rtol=rtol, atol=0.0, maxiter=10 * A.shape[0])
            if info != 0:
                raise RuntimeError(f"conjugate gradients stopped with code {info}")
        else:
            raise ValueError(f"unknown linear solver {method!r}")
    except RuntimeError as exc:
        raise SingularSystemError(
            f"linear solve failed: {exc}", _unconstrained_modes(K, free, modes)
        ) from None

    if not np.all(np.isfinite(solution)):
        raise SingularSystemError("linear solve produced non-finite values",
                                  _unconstrained_modes(K, free, modes))  # fmt: skip

    residual = np.linalg.norm(A @ solution - rhs)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    if residual > 1e-6 * scale:
        raise SingularSystemError(
            f"linear solve residual {residual / scale:.3e} (relative)",
            _unconstrained_modes(K, free, modes),
        )
    if residual > rtol * scale:
        logger.debug("linear solve relative residual %.3e", residual / scale)

    x[free] = solution
    return x


def _unconstrained_modes(K, free, modes):
    if not modes:
        return ()

    names = list(modes)
    R = np.column_stack([modes[name] for name in names])
    R = R / np.linalg.norm(R, axis=0)
    if (~free).any():
        _, s, vt = np.linalg.svd(R[~free], full_matrices=True)
        rank = int(np.sum(s > 1e-10 * max(s.max(initial=0.0), 1.0)))
        null = vt[rank:]
    else:
        null = np.eye(len(names))

    # combinations of modes untouched by the constraints and not resisted by K
    scale = abs(K.diagonal()).max() or 1.0
    found = []
    for combination in null:
        r = R @ combination
        if np.linalg.norm((K @ r)[free]) <= 1e-8 * scale * np.linalg.norm(r):
            found.append(" + ".join(names[i] for i in np.flatnonzero(np.abs(combination) > 1e-6)))

    return found


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def newton_solve(fun, x0, tol=1e-8, max_iter=25, fixed=None, atol=0.0, method="direct",
                 modes=None):  # fmt: skip
    """
    Newton iteration on ``fun(x) -> (residual, tangent)``.

    Values of ``x0`` on the ``fixed`` degrees of freedom are kept. Convergence is declared when
    the free residual norm falls below ``tol`` times the initial free residual norm, or below
    ``atol``. Dense tangents and scalars are accepted as well as sparse ones.

    :raises ConvergenceError: when ``max_iter`` is exhausted or the iteration diverges
    :rtype: NewtonResult
    """
    scalar = np.ndim(x0) == 0
    x = np.atleast_1d(np.array(x0, dtype=float))
    free = np.ones(x.shape, dtype=bool)
    if fixed is not None:
        free[fixed] = False

    history = []
    reference = None
    for iteration in range(max_iter + 1):
        residual, tangent = fun(x[0] if scalar else x)
        residual = np.atleast_1d(np.asarray(residual, dtype=float))
        norm = float(np.linalg.norm(residual[free]))
        history.append(norm)
        if not np.isfinite(norm):
            raise ConvergenceError("Newton iteration produced a non-finite residual",
                                   iteration, norm)  # fmt: skip
        if reference is None:
            reference = norm

        logger.debug("Newton iteration %d: residual %.3e", iteration, norm)
        if norm <= atol or norm <= tol * reference:
            return NewtonResult(x[0] if scalar else x, iteration, norm, history)
        if iteration == max_iter:
            break

        if sp.issparse(tangent):
            dx = solve_linear(tangent, -residual, fixed=~free, modes=modes, method=method)
        else:
            tangent = np.atleast_2d(np.asarray(tangent, dtype=float))
            dx = np.zeros_like(x)
            dx[free] = np.linalg.solve(tangent[np.ix_(free, free)], -residual[free])

        x = x + dx

    raise ConvergenceError(
        f"Newton did not converge in {max_iter} iterations (residual {norm:.3e})",
        max_iter,
        norm,
    )


def staggered_step(passes, tol=1e-4, max_passes=25, single_pass=False):
    """
    Fixed-point iteration over a sequence of field solves.

    Each callable in ``passes`` performs one solve and returns a non-negative change measure;
    the loop repeats the whole sequence until the largest change is below ``tol``.

    :returns: number of passes performed
    :raises StaggeredConvergenceError: when ``max_passes`` is exceeded
    """
    change = np.inf
    for count in range(1, max_passes + 1):
        change = max(float(solve()) for solve in passes)
        logger.debug("staggered pass %d: change %.3e", count, change)
        if single_pass or change < tol:
            return count

    raise StaggeredConvergenceError(
        f"staggered iteration did not converge in {max_passes} passes (change {change:.3e})",
        max_passes,
        change,
    )


def next_time_step(dt, iterations, target=5, dt_min=0.0, dt_max=np.inf):
    "Scale ``dt`` towards ``target`` nonlinear iterations, within ``[dt_min, dt_max]``."
    factor = np.clip(target / max(iterations, 1), 0.5, 2.0)
    return float(np.clip(dt * factor, dt_min, dt_max))


def advance(attempt, snapshot, restore, dt, dt_min, stats=None):
    """
    Run ``attempt(dt)``, halving ``dt`` on :exc:`~weldfrac.types.ConvergenceError`.

    ``snapshot()`` is taken before the first attempt and passed to ``restore`` after each
    failure.

    :returns: ``(dt_used, result of attempt)``
    :raises ConvergenceError: when ``dt`` would drop below ``dt_min``
    """
    saved = snapshot()
    while True:
        try:
            return dt, attempt(dt)
        except ConvergenceError as exc:
            restore(saved)
            if dt / 2 < dt_min:
                raise ConvergenceError(
                    f"time step fell below {dt_min:g} s: {exc}", exc.iterations, exc.residual
                ) from exc

            dt /= 2
            if stats is not None:
                stats.bisections += 1
            logger.info("reducing time step to %.4g s after: %s", dt, exc)


class FieldState:
    """
    Nodal fields and integration point history of a simulation.

    Nodal fields are ``T``, ``phi`` and ``C`` (scalars) and ``u`` (``(n, 2)``). History arrays
    are registered with an initial value used when elements are (re)activated; they are sized
    over all elements of the mesh and only the active entries are meaningful.
    """

    def __init__(self, mesh, T=20.0, num_points=9):
        n = mesh.num_nodes
        self.mesh = mesh
        self.num_points = num_points
        self.T = np.full(n, float(T))
        self.u = np.zeros((n, 2))
        self.phi = np.zeros(n)
        self.C = np.zeros(n)
        self.history = {}
        self._initial = {}

    def register(self, name, shape=(), initial=0.0):
        "Create a history array of shape ``(elements, points) + shape``."
        full = (self.mesh.num_elements, self.num_points) + tuple(shape)
        self.history[name] = np.full(full, initial, dtype=float)
        self._initial[name] = initial
        return self.history[name]

    def reset_history(self, elements):
        for name, array in self.history.items():
            array[elements] = self._initial[name]

    def snapshot(self):
        return {
            "T": self.T.copy(),
            "u": self.u.copy(),
            "phi": self.phi.copy(),
            "C": self.C.copy(),
            "active": self.mesh.active.copy(),
            "history": {name: array.copy() for name, array in self.history.items()},
        }

    def restore(self, snapshot):
        self.T[:] = snapshot["T"]
        self.u[:] = snapshot["u"]
        self.phi[:] = snapshot["phi"]
        self.C[:] = snapshot["C"]
        self.mesh.active[:] = snapshot["active"]
        for name, array in snapshot["history"].items():
            self.history[name][...] = array


def activate_elements(mesh, fields, name, temperature=None, on_activate=None):
    """
    Add the elements of an element set to the assembly.

    Nodes of newly activated elements take ``temperature`` (when given), their history is reset
    and ``on_activate(elements)`` is called with the newly activated element indices.
    Activating an already active set does nothing.

    :returns: indices of the newly activated elements
    :raises MeshError: for an unknown set
    """
    elements = mesh.element_set(name)
    new = elements[~mesh.active[elements]]
    if new.size == 0:
        return new

    mesh.active[new] = True
    if temperature is not None:
        fields.T[np.unique(mesh.elements[new])] = temperature

    fields.reset_history(new)
    if on_activate is not None:
        on_activate(new)

    logger.info("activated %d elements of set %r", new.size, name)
    return new


def deactivate_elements(mesh, name):
    """
    Remove the elements of an element set from the assembly.

    :raises MeshError: for an unknown set
    """
    elements = mesh.element_set(name)
    mesh.active[elements] = False
    logger.info("deactivated %d elements of set %r", elements.size, name)
    return elements


def orphan_dofs(mesh, components=1):
    "Degrees of freedom of nodes not attached to any active element."
    orphans = np.flatnonzero(~mesh.active_node_mask())
    if components == 1:
        return orphans

    return (orphans[:, None] * components + np.arange(components)).ravel()


def side_integration(mesh, sides, order=3):
    """
    Quadrature data on element sides.

    :returns: ``(node_ids (k, 3), N (q, 3), weights (k, q))`` where the weights include the
        length element
    """
    zeta, w = np.polynomial.legendre.leggauss(order)
    N, dN = edge_shape_functions(zeta)
    coords = mesh.side_coordinates(sides)
    tangent = np.einsum("qa,kaj->kqj", dN, coords)
    return mesh.side_node_ids(sides), N, np.linalg.norm(tangent, axis=-1) * w


__all__ = [
    "SIDE_NODES",
    "ElementGeometry",
    "FieldState",
    "NewtonResult",
    "activate_elements",
    "advance",
    "assemble_matrix",
    "assemble_vector",
    "deactivate_elements",
    "element_dofs",
    "gauss_rule",
    "newton_solve",
    "next_time_step",
    "orphan_dofs",
    "rigid_modes",
    "shape_eval",
    "shape_functions",
    "side_integration",
    "solve_linear",
    "staggered_step",
]
