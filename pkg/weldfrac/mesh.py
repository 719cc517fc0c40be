"""
Two-dimensional meshes of 8-node serendipity quadrilaterals.

Plain-text mesh format
----------------------

Coordinates are in millimetres, ids are 1-based and ``#`` starts a comment::

    nodes <count>
    <id> <x> <y>
    ...
    elements <count>
    <id> <n1> ... <n8>
    ...
    elset <name> <count>
    <element id> ...
    nodeset <name> <count>
    <node id> ...
    sideset <name> <count>
    <element id> <side 1-4>
    ...

Set members may be spread over any number of lines. Element nodes follow the usual ordering:
four corners counter-clockwise, then the mid-side nodes of sides 1-2, 2-3, 3-4 and 4-1.
"""
import logging

import numpy as np

from .types import MeshError

logger = logging.getLogger(__name__)

#: Local node indices on each side (corner, corner, mid-side)
SIDE_NODES = np.array([[0, 1, 4], [1, 2, 5], [2, 3, 6], [3, 0, 7]])


class Mesh:
    """
    Mesh of quadratic quadrilaterals with named sets and an active-element mask.

    :param nodes: ``(n, 2)`` coordinates in metres
    :param elements: ``(m, 8)`` zero-based connectivity
    :param dict element_sets: name to element indices
    :param dict node_sets: name to node indices
    :param dict side_sets: name to ``(k, 2)`` arrays of ``(element, side)``
    """

    __slots__ = ("nodes", "elements", "element_sets", "node_sets", "side_sets", "active")

    def __init__(self, nodes, elements, element_sets=None, node_sets=None, side_sets=None):
        self.nodes = np.asarray(nodes, dtype=float)
        self.elements = np.asarray(elements, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        if self.elements.ndim != 2 or self.elements.shape[1] != 8:
            raise MeshError("elements must be an (m, 8) array")
        if self.elements.size and (
            self.elements.min() < 0 or self.elements.max() >= len(self.nodes)
        ):
            raise MeshError("element connectivity references missing nodes")

        self.element_sets = {
            name: np.asarray(ids, dtype=np.int64) for name, ids in (element_sets or {}).items()
        }
        self.node_sets = {
            name: np.asarray(ids, dtype=np.int64) for name, ids in (node_sets or {}).items()
        }
        self.side_sets = {
            name: np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
            for name, pairs in (side_sets or {}).items()
        }
        for name, ids in self.element_sets.items():
            if ids.size and (ids.min() < 0 or ids.max() >= len(self.elements)):
                raise MeshError(f"element set {name!r} references missing elements")
        for name, ids in self.node_sets.items():
            if ids.size and (ids.min() < 0 or ids.max() >= len(self.nodes)):
                raise MeshError(f"node set {name!r} references missing nodes")
        for name, pairs in self.side_sets.items():
            if pairs.size and (
                pairs[:, 0].min() < 0
                or pairs[:, 0].max() >= len(self.elements)
                or pairs[:, 1].min() < 0
                or pairs[:, 1].max() > 3
            ):
                raise MeshError(f"side set {name!r} references missing sides")

        self.active = np.ones(len(self.elements), dtype=bool)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_elements(self):
        return len(self.elements)

    def element_set(self, name):
        try:
            return self.element_sets[name]
        except KeyError:
            raise MeshError(f"unknown element set {name!r}") from None

    def node_set(self, name):
        try:
            return self.node_sets[name]
        except KeyError:
            raise MeshError(f"unknown node set {name!r}") from None

    def side_set(self, name):
        try:
            return self.side_sets[name]
        except KeyError:
            raise MeshError(f"unknown side set {name!r}") from None

    def set_nodes(self, name):
        "Nodes of the elements in an element set."
        return np.unique(self.elements[self.element_set(name)])

    def active_node_mask(self):
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[self.elements[self.active].ravel()] = True
        return mask

    def exterior_sides(self, active_only=True):
        """
        Sides not shared with another (active) element, as ``(k, 2)`` ``(element, side)``.

        Sides are matched by their mid-side node, which is unique to the side.
        """
        candidates = np.flatnonzero(self.active) if active_only else np.arange(self.num_elements)
        mid = self.elements[candidates][:, SIDE_NODES[:, 2]]
        counts = np.bincount(mid.ravel(), minlength=self.num_nodes)
        element_index, side = np.nonzero(counts[mid] == 1)
        return np.column_stack([candidates[element_index], side])

    def side_coordinates(self, sides):
        "Coordinates ``(k, 3, 2)`` of the three nodes of each side."
        sides = np.asarray(sides, dtype=np.int64).reshape(-1, 2)
        nodes = self.elements[sides[:, 0][:, None], SIDE_NODES[sides[:, 1]]]
        return self.nodes[nodes]

    def side_node_ids(self, sides):
        sides = np.asarray(sides, dtype=np.int64).reshape(-1, 2)
        return self.elements[sides[:, 0][:, None], SIDE_NODES[sides[:, 1]]]

    def element_sizes(self, elements=None):
        "Longest corner-to-corner side length of each element."
        conn = self.elements if elements is None else self.elements[elements]
        corners = self.nodes[conn[:, :4]]
        edges = np.roll(corners, -1, axis=1) - corners
        return np.linalg.norm(edges, axis=-1).max(axis=1)

    def nodes_near(self, point, tol=1e-9):
        "Indices of nodes within ``tol`` of ``point``."
        distance = np.linalg.norm(self.nodes - np.asarray(point, dtype=float), axis=1)
        return np.flatnonzero(distance <= tol)

    def closest_node(self, point):
        return int(np.argmin(np.linalg.norm(self.nodes - np.asarray(point, dtype=float), axis=1)))

    def copy(self):
        new = Mesh(self.nodes.copy(), self.elements.copy(), self.element_sets, self.node_sets,
                   self.side_sets)  # fmt: skip
        new.active = self.active.copy()
        return new

    def __repr__(self):
        return (
            f"Mesh({self.num_nodes} nodes, {self.num_elements} elements, "
            f"{int(self.active.sum())} active)"
        )


def _tokens(lines):
    for line in lines:
        line = line.split("#", 1)[0]
        yield from line.split()


def read_mesh(path):
    """
    Read a mesh in the plain-text format described in this module.

    :rtype: Mesh
    """
    with open(path, encoding="utf-8") as f:
        tokens = _tokens(f)
        try:
            return _parse(tokens, path)
        except StopIteration:
            raise MeshError(f"{path}: unexpected end of file") from None
        except ValueError as exc:
            if isinstance(exc, MeshError):
                raise
            raise MeshError(f"{path}: {exc}") from None


def _parse(tokens, path):
    nodes = elements = None
    element_sets, node_sets, side_sets = {}, {}, {}
    node_index = element_index = None
    for keyword in tokens:
        if keyword == "nodes":
            count = int(next(tokens))
            data = np.array([float(next(tokens)) for _ in range(3 * count)]).reshape(count, 3)
            node_index = {int(i): k for k, i in enumerate(data[:, 0])}
            nodes = data[:, 1:] * 1e-3
        elif keyword == "elements":
            if node_index is None:
                raise MeshError(f"{path}: elements given before nodes")
            count = int(next(tokens))
            data = np.array([int(next(tokens)) for _ in range(9 * count)]).reshape(count, 9)
            element_index = {int(i): k for k, i in enumerate(data[:, 0])}
            try:
                elements = np.vectorize(node_index.__getitem__)(data[:, 1:])
            except KeyError as exc:
                raise MeshError(f"{path}: element references unknown node {exc}") from None
        elif keyword in ("elset", "nodeset", "sideset"):
            name = next(tokens)
            count = int(next(tokens))
            try:
                if keyword == "elset":
                    element_sets[name] = [element_index[int(next(tokens))] for _ in range(count)]
                elif keyword == "nodeset":
                    node_sets[name] = [node_index[int(next(tokens))] for _ in range(count)]
                else:
                    side_sets[name] = [
                        (element_index[int(next(tokens))], int(next(tokens)) - 1)
                        for _ in range(count)
                    ]
            except (KeyError, TypeError):
                raise MeshError(f"{path}: set {name!r} references unknown entities") from None
        else:
            raise MeshError(f"{path}: unexpected token {keyword!r}")

    if nodes is None or elements is None:
        raise MeshError(f"{path}: nodes and elements sections are required")

    return Mesh(nodes, elements, element_sets, node_sets, side_sets)


def write_mesh(mesh, path):
    "Write ``mesh`` in the plain-text format (coordinates in mm)."
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# weldfrac mesh\nnodes {mesh.num_nodes}\n")
        for i, (x, y) in enumerate(mesh.nodes * 1e3, start=1):
            f.write(f"{i} {x:.12g} {y:.12g}\n")

        f.write(f"elements {mesh.num_elements}\n")
        for i, conn in enumerate(mesh.elements + 1, start=1):
            f.write(f"{i} " + " ".join(str(n) for n in conn) + "\n")

        for keyword, sets in (("elset", mesh.element_sets), ("nodeset", mesh.node_sets)):
            for name, ids in sets.items():
                f.write(f"{keyword} {name} {len(ids)}\n")
                for start in range(0, len(ids), 10):
                    f.write(" ".join(str(i + 1) for i in ids[start : start + 10]) + "\n")

        for name, pairs in mesh.side_sets.items():
            f.write(f"sideset {name} {len(pairs)}\n")
            for element, side in pairs:
                f.write(f"{element + 1} {side + 1}\n")


def from_meshio(source, scale=1e-3):
    """
    Convert a :mod:`meshio` mesh (or a path readable by meshio) holding ``quad8`` cells.

    Cell sets become element sets and point sets become node sets. Coordinates are multiplied
    by ``scale`` (default: millimetres to metres).

    :rtype: Mesh
    """
    import meshio

    if not isinstance(source, meshio.Mesh):
        source = meshio.read(source)

    blocks = [i for i, block in enumerate(source.cells) if block.type == "quad8"]
    if not blocks:
        raise MeshError("no quad8 cells found")

    offsets = {}
    connectivity = []
    count = 0
    for i in blocks:
        offsets[i] = count
        connectivity.append(source.cells[i].data)
        count += len(source.cells[i].data)

    element_sets = {}
    for name, per_block in source.cell_sets.items():
        ids = [
            offsets[i] + np.asarray(members, dtype=np.int64)
            for i, members in enumerate(per_block)
            if i in offsets and members is not None
        ]
        if ids:
            element_sets[name] = np.concatenate(ids)

    node_sets = {name: np.asarray(ids) for name, ids in source.point_sets.items()}
    mesh = Mesh(
        np.asarray(source.points)[:, :2] * scale,
        np.concatenate(connectivity),
        element_sets,
        node_sets,
    )
    logger.info("imported %s", mesh)
    return mesh
