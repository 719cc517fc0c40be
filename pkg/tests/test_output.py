import hashlib
import json
from types import SimpleNamespace

import numpy as np
import pytest

from weldfrac.fem import ElementGeometry, FieldState
from weldfrac.geometry import rectangle
from weldfrac.output import (
    RunManifest,
    cell_average,
    export_curves,
    file_checksum,
    pressurization_fields,
    write_crack_path,
    write_csv,
    write_vtk,
)


@pytest.fixture
def mesh():
    return rectangle(2.0, 1.0, 2, 1)


def sections(text):
    "Map each VTK keyword line to the lines that follow it."
    lines = text.splitlines()
    return {line.split()[0]: (line, lines[i + 1 :]) for i, line in enumerate(lines)
            if line[:1].isupper() and not line[:1].isdigit()}  # fmt: skip


def test_cell_average():
    values = np.array([[0.0, 4.0]])
    weights = np.array([[1.0, 3.0]])
    assert cell_average(values, weights) == pytest.approx([3.0])
    tensors = np.stack([values, 2 * values], axis=-1)
    assert cell_average(tensors, weights) == pytest.approx(np.array([[3.0, 6.0]]))


def test_write_vtk(tmp_path, mesh):
    geometry = ElementGeometry(mesh)
    path = tmp_path / "weld.vtk"
    fields = {
        "T_degC": np.linspace(20.0, 80.0, mesh.num_nodes),
        "u_mm": np.ones((mesh.num_nodes, 2)),
        "hardness_HV": np.full((2, 9), 250.0),
        "stress_MPa": np.ones((2, 9, 4)),
        "bead": np.array([0.0, 1.0]),
    }
    write_vtk(mesh, fields, path, weights=geometry.weights)
    text = path.read_text(encoding="ascii")
    assert text.startswith("# vtk DataFile Version 3.0\nweldfrac\nASCII\n")
    found = sections(text)
    assert found["POINTS"][0] == f"POINTS {mesh.num_nodes} double"
    # coordinates are written in mm
    assert found["POINTS"][1][mesh.closest_node((2e-3, 1e-3))] == "2 1 0"
    assert found["CELLS"][0] == "CELLS 2 18"
    assert found["CELLS"][1][0].split()[0] == "8"
    assert found["CELL_TYPES"][1][:2] == ["23", "23"]
    assert "POINT_DATA 13" in text
    assert "CELL_DATA 2" in text
    assert "SCALARS hardness_HV double 1" in text
    assert "u_mm 2 13 double" in text
    assert "stress_MPa 4 2 double" in text


def test_write_vtk_inactive(tmp_path, mesh):
    mesh.active[1] = False
    path = tmp_path / "partial.vtk"
    write_vtk(mesh, {"bead": np.array([7.0, 9.0])}, path)
    text = path.read_text(encoding="ascii")
    assert "CELLS 1 9" in text
    assert "CELL_DATA 1\nSCALARS bead double 1\nLOOKUP_TABLE default\n7\n" in text
    assert "POINT_DATA" not in text


@pytest.mark.parametrize(
    "fields, message",
    [
        ({"von Mises": np.zeros(13)}, "spaces"),
        ({"wrong": np.zeros(5)}, "fits neither"),
    ],
    ids=["space", "shape"],
)
def test_write_vtk_invalid(tmp_path, mesh, fields, message):
    with pytest.raises(ValueError, match=message):
        write_vtk(mesh, fields, tmp_path / "bad.vtk")


def test_pressurization_fields(mesh):
    state = FieldState(mesh)
    state.register("stress", shape=(4,))
    state.u[:] = 1e-3
    fields = pressurization_fields(state)
    assert set(fields) == {"u_mm", "phi", "C_wppm", "von_mises_MPa"}
    assert fields["u_mm"] == pytest.approx(np.ones((mesh.num_nodes, 2)))
    assert fields["von_mises_MPa"].shape == (2, 9)


def test_write_csv(tmp_path):
    path = tmp_path / "curve.csv"
    write_csv(path, ("time_s", "phase"), [(0.1 + 0.2, "ferrite"), (2, "bainite")], ("s", "-"))
    assert path.read_text(encoding="utf-8") == (
        "time_s,phase\ns,-\n0.3,ferrite\n2,bainite\n"
    )


def test_export_curves(tmp_path):
    record = SimpleNamespace(
        columns=("K_MPa_sqrt_m", "da_mm"),
        units=("MPa*m^0.5", "mm"),
        rows=lambda: iter([(10.0, 0.0), (20.0, 0.125)]),
    )
    path = tmp_path / "jr.csv"
    export_curves(record, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == ["K_MPa_sqrt_m,da_mm", "MPa*m^0.5,mm", "10,0", "20,0.125"]


def test_write_crack_path(tmp_path):
    path = tmp_path / "crack.csv"
    write_crack_path(path, np.array([[0.0, 0.3728], [0.5e-3, 0.374]]))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == ["x_mm,y_mm", "mm,mm", "0,372.8", "0.5,374"]


def test_manifest(tmp_path):
    output = tmp_path / "result.csv"
    output.write_text("a,b\n1,2\n", encoding="utf-8")
    manifest = RunManifest("weld", "abc", "demo", statistics={"increments": np.int64(3)})
    assert manifest.register(str(output)) == str(output)
    path = manifest.write(str(tmp_path))

    content = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert path.endswith("manifest.json")
    assert content["command"] == "weld"
    assert content["config_hash"] == "abc"
    assert content["statistics"] == {"increments": 3}
    assert content["wall_clock"] >= 0
    assert content["files"] == [{
        "path": "result.csv",
        "sha256": hashlib.sha256(b"a,b\n1,2\n").hexdigest(),
        "bytes": 8,
    }]  # fmt: skip
    assert isinstance(content["version"], str)


def test_file_checksum(tmp_path):
    path = tmp_path / "data.bin"
    path.write_bytes(bytes(range(256)) * 1000)
    assert file_checksum(path) == hashlib.sha256(bytes(range(256)) * 1000).hexdigest()
