import numpy as np
import pytest

from weldfrac.geometry import rectangle
from weldfrac.mesh import Mesh, read_mesh, write_mesh
from weldfrac.types import MeshError


@pytest.fixture
def pair():
    return rectangle(2.0, 1.0, 2, 1)


def test_counts(pair):
    assert pair.num_nodes == 13
    assert pair.num_elements == 2
    assert pair.active.all()


def test_exterior_sides(pair):
    sides = pair.exterior_sides()
    assert len(sides) == 6
    pair.active[1] = False
    assert len(pair.exterior_sides()) == 4
    assert len(pair.exterior_sides(active_only=False)) == 6


def test_active_node_mask(pair):
    pair.active[1] = False
    assert pair.active_node_mask().sum() == 8


def test_element_sizes(pair):
    assert pair.element_sizes() == pytest.approx([1e-3, 1e-3])


def test_side_coordinates(pair):
    left = pair.side_set("left")
    xy = pair.side_coordinates(left)
    assert xy.shape == (1, 3, 2)
    assert xy[0, :, 0] == pytest.approx([0.0, 0.0, 0.0])
    # mid-side node sits halfway along the side
    assert xy[0, 2, 1] == pytest.approx(0.5e-3)


def test_roundtrip(pair, tmp_path):
    path = tmp_path / "pair.mesh"
    write_mesh(pair, path)
    mesh = read_mesh(path)
    assert np.allclose(mesh.nodes, pair.nodes, rtol=0, atol=1e-12)
    assert np.array_equal(mesh.elements, pair.elements)
    assert set(mesh.element_sets) == set(pair.element_sets)
    assert set(mesh.side_sets) == set(pair.side_sets)
    for name, ids in pair.node_sets.items():
        assert np.array_equal(mesh.node_set(name), ids)
    for name, pairs in pair.side_sets.items():
        assert np.array_equal(mesh.side_set(name), pairs)


def test_read_comments_and_ids(tmp_path):
    path = tmp_path / "one.mesh"
    path.write_text(
        "# single element\n"
        "nodes 8\n"
        "10 0 0\n11 2 0\n12 2 2\n13 0 2\n14 1 0\n15 2 1\n16 1 2\n17 0 1\n"
        "elements 1\n"
        "5 10 11 12 13 14 15 16 17  # corners then mid-sides\n"
        "elset weld 1\n5\n"
        "sideset bottom 1\n5 1\n"
    )
    mesh = read_mesh(path)
    assert mesh.elements.tolist() == [list(range(8))]
    assert mesh.nodes[2] == pytest.approx([2e-3, 2e-3])
    assert mesh.element_set("weld").tolist() == [0]
    assert mesh.side_set("bottom").tolist() == [[0, 0]]


@pytest.mark.parametrize(
    "text, message",
    [
        ("nodes 2\n1 0 0\n", "unexpected end"),
        ("elements 1\n1 1 2 3 4 5 6 7 8\n", "before nodes"),
        ("nodes 1\n1 0 0\nelements 1\n1 1 1 1 1 1 1 1 9\n", "unknown node"),
        ("nodes 1\n1 0 0\nfaces 0\n", "unexpected token"),
        ("nodes 1\n1 0 0\n", "required"),
        ("nodes 1\n1 zero 0\n", "could not convert"),
    ],
    ids=["truncated", "order", "missing_node", "keyword", "no_elements", "number"],
)
def test_read_errors(tmp_path, text, message):
    path = tmp_path / "bad.mesh"
    path.write_text(text)
    with pytest.raises(MeshError, match=message):
        read_mesh(path)


def test_invalid_connectivity():
    with pytest.raises(MeshError, match="missing nodes"):
        Mesh(np.zeros((4, 2)), [list(range(8))])


def test_invalid_set(pair):
    with pytest.raises(MeshError, match="missing elements"):
        Mesh(pair.nodes, pair.elements, element_sets={"weld": [5]})


@pytest.mark.parametrize("getter", ["element_set", "node_set", "side_set"])
def test_unknown_set(pair, getter):
    with pytest.raises(MeshError, match="unknown"):
        getattr(pair, getter)("nowhere")


def test_copy_is_independent(pair):
    copy = pair.copy()
    copy.active[0] = False
    copy.nodes[0] = 1.0
    assert pair.active.all()
    assert pair.nodes[0].tolist() == [0.0, 0.0]
