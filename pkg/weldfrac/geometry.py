"""
Demo geometries built from structured patches of quadratic quadrilaterals.

Every generator takes dimensions in millimetres and returns a :class:`~weldfrac.mesh.Mesh` in
metres with the element, node and side sets the scenarios refer to.
"""
import logging

import numpy as np

from .mesh import SIDE_NODES, Mesh

logger = logging.getLogger(__name__)

# lattice offsets of the 8 element nodes relative to the lower-left corner
_OFFSETS = np.array([[0, 0], [2, 0], [2, 2], [0, 2], [1, 0], [2, 1], [1, 2], [0, 1]])


def refine_lattice(lines):
    "Insert mid-points between successive coordinates: ``n + 1`` lines become ``2n + 1``."
    lines = np.asarray(lines, dtype=float)
    lattice = np.empty(2 * len(lines) - 1)
    lattice[0::2] = lines
    lattice[1::2] = 0.5 * (lines[:-1] + lines[1:])
    return lattice


def graded(start, stop, first, ratio, max_step=np.inf):
    """
    Coordinates from ``start`` to ``stop`` with the first spacing ``first`` growing by ``ratio``
    up to ``max_step``.

    The last spacing is stretched to land on ``stop``.
    """
    points = [start]
    step = first
    direction = np.sign(stop - start)
    while abs(stop - points[-1]) > 1.5 * step:
        points.append(points[-1] + direction * step)
        step = min(step * ratio, max_step)
    points.append(stop)
    return np.array(points)


def lattice_mesh(X, Y, scale=1e-3):
    """
    Mesh of a structured patch.

    :param X: ``(2 n1 + 1, 2 n2 + 1)`` lattice x-coordinates (mm); element corners sit on even
        lattice indices and mid-side nodes on the mixed ones
    :param Y: lattice y-coordinates (mm)
    :returns: ``(mesh, element_index)`` where ``element_index[a, b]`` is the element whose
        lower-left corner is lattice node ``(2a, 2b)``
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n1, n2 = (X.shape[0] - 1) // 2, (X.shape[1] - 1) // 2
    used = np.ones(X.shape, dtype=bool)
    used[1::2, 1::2] = False
    numbering = np.full(X.shape, -1, dtype=np.int64)
    numbering[used] = np.arange(int(used.sum()))
    nodes = np.column_stack([X[used], Y[used]]) * scale

    a, b = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    i = 2 * a.ravel()[:, None] + _OFFSETS[:, 0]
    j = 2 * b.ravel()[:, None] + _OFFSETS[:, 1]
    elements = numbering[i, j]
    return Mesh(nodes, elements), np.arange(n1 * n2).reshape(n1, n2)


def merge(meshes, tol=1e-9):
    """
    Join meshes, merging nodes closer than ``tol`` (m). Sets with equal names are united.

    :rtype: Mesh
    """
    nodes = np.concatenate([m.nodes for m in meshes])
    keys = np.round(nodes / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(first)
    renumber = np.empty_like(order)
    renumber[order] = np.arange(len(order))
    new_nodes = nodes[first[order]]

    elements, element_sets, node_sets, side_sets = [], {}, {}, {}
    node_offset = element_offset = 0
    for m in meshes:
        mapping = renumber[inverse[node_offset : node_offset + m.num_nodes]]
        elements.append(mapping[m.elements])
        for name, ids in m.element_sets.items():
            element_sets.setdefault(name, []).append(ids + element_offset)
        for name, ids in m.node_sets.items():
            node_sets.setdefault(name, []).append(mapping[ids])
        for name, pairs in m.side_sets.items():
            side_sets.setdefault(name, []).append(pairs + [element_offset, 0])
        node_offset += m.num_nodes
        element_offset += m.num_elements

    return Mesh(
        new_nodes,
        np.concatenate(elements),
        {name: np.concatenate(ids) for name, ids in element_sets.items()},
        {name: np.unique(np.concatenate(ids)) for name, ids in node_sets.items()},
        {name: np.concatenate(pairs) for name, pairs in side_sets.items()},
    )


def _boundary_sides(mesh, elements, predicate):
    "Exterior sides of ``elements`` whose three nodes all satisfy ``predicate(x, y)`` (mm)."
    sides = mesh.exterior_sides(active_only=False)
    sides = sides[np.isin(sides[:, 0], elements)]
    xy = mesh.side_coordinates(sides) * 1e3
    keep = np.all(predicate(xy[..., 0], xy[..., 1]), axis=1)
    return sides[keep]


def _side_nodes(mesh, sides):
    return np.unique(mesh.elements[sides[:, 0][:, None], SIDE_NODES[sides[:, 1]]])


def _centroids(mesh):
    return mesh.nodes[mesh.elements[:, :4]].mean(axis=1) * 1e3


def _fusion_nodes(mesh, bead, before):
    "Nodes of ``bead`` shared with the elements present before the bead is deposited."
    return np.intersect1d(np.unique(mesh.elements[bead]), np.unique(mesh.elements[before]))


def rectangle(width, height, nx, ny, origin=(0.0, 0.0)):
    """
    Rectangle of ``nx`` by ``ny`` elements.

    Sets: element set ``all``; node and side sets ``left``, ``right``, ``bottom``, ``top``.
    """
    x = np.linspace(origin[0], origin[0] + width, nx + 1)
    y = np.linspace(origin[1], origin[1] + height, ny + 1)
    X, Y = np.meshgrid(refine_lattice(x), refine_lattice(y), indexing="ij")
    mesh, _ = lattice_mesh(X, Y)
    _add_box_sets(mesh, x[0], x[-1], y[0], y[-1])
    mesh.element_sets["all"] = np.arange(mesh.num_elements)
    return mesh


def _add_box_sets(mesh, x0, x1, y0, y1, tol=1e-9):
    everything = np.arange(mesh.num_elements)
    for name, predicate in (
        ("left", lambda x, y: np.abs(x - x0) < tol),
        ("right", lambda x, y: np.abs(x - x1) < tol),
        ("bottom", lambda x, y: np.abs(y - y0) < tol),
        ("top", lambda x, y: np.abs(y - y1) < tol),
    ):
        sides = _boundary_sides(mesh, everything, predicate)
        mesh.side_sets[name] = sides
        mesh.node_sets[name] = _side_nodes(mesh, sides)


def strip(length, height=None, nx=50, x0=0.0):
    "One element high strip along x, for one-dimensional checks."
    height = length / nx if height is None else height
    return rectangle(length, height, nx, 1, origin=(x0, 0.0))


def plate_weld(half_width=30.0, thickness=8.0, groove_half_width=3.0, h=1.0, coarse=4.0):
    """
    Butt-welded plate with a square groove filled by two beads, root bead first.

    The plate spans ``[-half_width, half_width] x [0, thickness]`` mm. Elements of size ``h``
    cover ``|x| <= 10`` mm; the spacing grows to ``coarse`` towards the free ends.

    Sets: element sets ``base``, ``bead_1`` (lower half of the groove), ``bead_2``; node sets
    ``fusion_1``, ``fusion_2``, ``anchor`` (fixed), ``roller`` (fixed vertically), and the
    box node/side sets ``left``, ``right``, ``bottom``, ``top``.
    """
    fine = min(h * np.ceil(10.0 / h), half_width)
    inner = np.union1d(
        np.arange(-fine, fine + 0.5 * h, h), [-groove_half_width, groove_half_width]
    )
    outer = graded(fine, half_width, h, 1.5, coarse)[1:] if half_width > fine else np.zeros(0)
    x = np.concatenate([-outer[::-1], inner, outer])
    x = x[np.concatenate([[True], np.diff(x) > 1e-6])]
    ny = max(2, int(round(thickness / h)))
    ny += ny % 2
    y = np.linspace(0.0, thickness, ny + 1)

    X, Y = np.meshgrid(refine_lattice(x), refine_lattice(y), indexing="ij")
    mesh, _ = lattice_mesh(X, Y)
    _add_box_sets(mesh, x[0], x[-1], 0.0, thickness)

    cx, cy = _centroids(mesh).T
    groove = np.abs(cx) < groove_half_width
    bead_1 = np.flatnonzero(groove & (cy < thickness / 2))
    bead_2 = np.flatnonzero(groove & (cy >= thickness / 2))
    base = np.flatnonzero(~groove)
    mesh.element_sets.update(base=base, bead_1=bead_1, bead_2=bead_2)
    mesh.node_sets["fusion_1"] = _fusion_nodes(mesh, bead_1, base)
    mesh.node_sets["fusion_2"] = _fusion_nodes(mesh, bead_2, np.concatenate([base, bead_1]))
    mesh.node_sets["anchor"] = np.array([mesh.closest_node((x[0] * 1e-3, 0.0))])
    mesh.node_sets["roller"] = np.array([mesh.closest_node((x[-1] * 1e-3, 0.0))])
    logger.info("plate weld demo: %s", mesh)
    return mesh


def pipe_ring(inner_radius=372.8, wall=8.2, layers=8, groove_half_width=3.0, h=1.0,
              coarse=40.0, ratio=1.3):  # fmt: skip
    """
    Cross-section of a pipe with a two-bead seam weld at the top (inner bead first).

    Elements of arc length ``h`` (mm, at mid-wall) cover 15 mm either side of the weld,
    growing by ``ratio`` up to ``coarse`` elsewhere.

    Sets: element sets ``base``, ``bead_1`` (inner half of the groove), ``bead_2``, ``weld``;
    node sets ``inner``, ``outer``, ``fusion_1``, ``fusion_2``, ``monitor`` (mid-wall opposite
    the weld), ``anchor`` and ``roller``; side sets ``inner`` and ``outer``.
    """
    layers += layers % 2
    outer_radius = inner_radius + wall
    mid = inner_radius + wall / 2
    fine = 15.0
    arc = np.pi * mid
    # arc length measured from the weld at the top, one half of the ring
    half = np.union1d(np.arange(0.0, fine + 0.5 * h, h), [groove_half_width])
    half = np.concatenate([half, graded(half[-1], arc, h, ratio, coarse)[1:]])
    s = np.concatenate([-half[::-1], half[1:]])
    theta = np.pi / 2 - s / mid
    r = np.linspace(inner_radius, outer_radius, layers + 1)

    R, T = np.meshgrid(refine_lattice(r), refine_lattice(theta[::-1]), indexing="ij")
    mesh, _ = lattice_mesh(R * np.cos(T), R * np.sin(T))
    mesh = merge([mesh])

    everything = np.arange(mesh.num_elements)
    tol = 1e-6
    for name, radius in (("inner", inner_radius), ("outer", outer_radius)):
        sides = _boundary_sides(
            mesh, everything, lambda x, y, radius=radius: np.abs(np.hypot(x, y) - radius) < tol
        )
        mesh.side_sets[name] = sides
        mesh.node_sets[name] = _side_nodes(mesh, sides)

    cx, cy = _centroids(mesh).T
    arc_position = mid * (np.pi / 2 - np.arctan2(cy, cx))
    arc_position = (arc_position + arc) % (2 * arc) - arc
    groove = np.abs(arc_position) < groove_half_width
    radius = np.hypot(cx, cy)
    bead_1 = np.flatnonzero(groove & (radius < mid))
    bead_2 = np.flatnonzero(groove & (radius >= mid))
    base = np.flatnonzero(~groove)
    mesh.element_sets.update(base=base, bead_1=bead_1, bead_2=bead_2,
                             weld=np.flatnonzero(groove))  # fmt: skip
    mesh.node_sets["fusion_1"] = _fusion_nodes(mesh, bead_1, base)
    mesh.node_sets["fusion_2"] = _fusion_nodes(mesh, bead_2, np.concatenate([base, bead_1]))
    mesh.node_sets["monitor"] = np.array([mesh.closest_node((0.0, -mid * 1e-3))])
    mesh.node_sets["anchor"] = np.array([mesh.closest_node((0.0, -inner_radius * 1e-3))])
    mesh.node_sets["roller"] = np.array([mesh.closest_node((inner_radius * 1e-3, 0.0))])
    logger.info("pipe ring demo: %s", mesh)
    return mesh


def boundary_layer(ell=0.46, box=8.0, h=None, outer_radius=None, layers=8):
    """
    Upper half of a circular boundary-layer domain around a crack tip at the origin.

    The crack faces lie on ``y = 0, x < 0`` and the ligament on ``y = 0, x > 0``. A box of
    half-size ``box * ell`` is meshed uniformly with elements of size ``h`` (default
    ``ell / 2``); a ring of ``layers`` graded layers connects it to the rim.

    Sets: node sets ``ligament``, ``crack_face``, ``rim``, ``tip``; element sets ``box``,
    ``ring``, ``rim_ring`` (outermost layer).
    """
    h = ell / 2 if h is None else h
    a = box * ell
    outer_radius = 20 * a if outer_radius is None else outer_radius
    n = max(1, int(round(a / h)))
    x = np.linspace(-a, a, 2 * n + 1)
    y = np.linspace(0.0, a, n + 1)
    X, Y = np.meshgrid(refine_lattice(x), refine_lattice(y), indexing="ij")
    box_mesh, _ = lattice_mesh(X, Y)
    box_mesh.element_sets["box"] = np.arange(box_mesh.num_elements)

    # box boundary from (-a, 0) over the top to (a, 0), including mid-side lattice points
    lx, ly = refine_lattice(x), refine_lattice(y)
    path = np.concatenate([
        np.column_stack([np.full(len(ly), -a), ly]),
        np.column_stack([lx[1:], np.full(len(lx) - 1, a)]),
        np.column_stack([np.full(len(ly) - 1, a), ly[::-1][1:]]),
    ])  # fmt: skip
    length = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(path, axis=0), axis=1))])
    angle = np.pi * (1 - length / length[-1])
    rim = outer_radius * np.column_stack([np.cos(angle), np.sin(angle)])

    t = graded(0.0, 1.0, 1.0 / (2 ** layers), 2.0) if layers > 1 else np.array([0.0, 1.0])
    lam = refine_lattice(t)
    RX = (1 - lam)[None, :] * path[:, 0:1] + lam[None, :] * rim[:, 0:1]
    RY = (1 - lam)[None, :] * path[:, 1:2] + lam[None, :] * rim[:, 1:2]
    ring_mesh, index = lattice_mesh(RX, RY)
    ring_mesh.element_sets["ring"] = np.arange(ring_mesh.num_elements)
    ring_mesh.element_sets["rim_ring"] = index[:, -1]

    mesh = merge([box_mesh, ring_mesh])
    xy = mesh.nodes * 1e3
    on_axis = np.abs(xy[:, 1]) < 1e-9
    mesh.node_sets["ligament"] = np.flatnonzero(on_axis & (xy[:, 0] >= 0))
    mesh.node_sets["crack_face"] = np.flatnonzero(on_axis & (xy[:, 0] < 0))
    mesh.node_sets["rim"] = np.flatnonzero(np.abs(np.hypot(xy[:, 0], xy[:, 1]) - outer_radius)
                                           < 1e-6 * outer_radius)  # fmt: skip
    mesh.node_sets["tip"] = np.array([mesh.closest_node((0.0, 0.0))])
    logger.info("boundary layer demo: %s", mesh)
    return mesh


__all__ = [
    "boundary_layer",
    "graded",
    "lattice_mesh",
    "merge",
    "pipe_ring",
    "plate_weld",
    "rectangle",
    "refine_lattice",
    "strip",
]
