"""
Result files: legacy VTK meshes, CSV curves and the run manifest.

Lengths are written in mm and stresses in MPa, like the configuration files.
"""
import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .mechanics import von_mises
from .types import PHASES

logger = logging.getLogger(__name__)

#: VTK cell type of the 8-node quadrilateral
VTK_QUADRATIC_QUAD = 23
NUMBER_FORMAT = "%.10g"


def _format(values):
    return " ".join(NUMBER_FORMAT % v for v in values)


def cell_average(values, weights):
    """
    Quadrature-weighted average of integration point values over each element.

    :param values: ``(m, q, ...)`` integration point values
    :param weights: ``(m, q)`` quadrature weights times Jacobians
    :returns: ``(m, ...)``
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    w = weights.reshape(weights.shape + (1,) * (values.ndim - 2))
    return np.sum(values * w, axis=1) / np.sum(w, axis=1)


def _classify(mesh, fields, weights):
    points, cells = {}, {}
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if " " in name:
            raise ValueError(f"VTK array names cannot contain spaces: {name!r}")
        if weights is not None and values.shape[:2] == np.shape(weights):
            cells[name] = cell_average(values, weights)
        elif values.shape[:1] == (mesh.num_nodes,):
            points[name] = values
        elif values.shape[:1] == (mesh.num_elements,):
            cells[name] = values
        else:
            raise ValueError(f"field {name!r} of shape {values.shape} fits neither nodes, "
                             "elements nor integration points")  # fmt: skip
    return points, cells


def _write_arrays(f, arrays, count):
    scalars = {name: a for name, a in arrays.items() if a.ndim == 1}
    others = {name: a.reshape(count, -1) for name, a in arrays.items() if a.ndim > 1}
    for name, array in scalars.items():
        f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for value in array:
            f.write(NUMBER_FORMAT % value + "\n")
    if others:
        f.write(f"FIELD attributes {len(others)}\n")
        for name, array in others.items():
            f.write(f"{name} {array.shape[1]} {count} double\n")
            for row in array:
                f.write(_format(row) + "\n")


def write_vtk(mesh, fields, path, weights=None, title="weldfrac"):
    """
    Write the active elements and fields as a legacy ASCII VTK unstructured grid.

    Arrays of length ``num_nodes`` become point data and arrays of length ``num_elements``
    cell data; arrays shaped like ``weights`` are integration point values, averaged over
    each element with the quadrature weights. Nodal coordinates are written in mm.

    :param mesh: :class:`~weldfrac.mesh.Mesh`
    :param dict fields: array name to values; names must not contain spaces
    :param weights: ``(m, q)`` quadrature weights, needed for integration point fields
    """
    points, cells = _classify(mesh, fields, weights)
    active = np.flatnonzero(mesh.active)
    cells = {name: values[active] for name, values in cells.items()}
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.num_nodes} double\n")
        for x, y in mesh.nodes * 1e3:
            f.write(_format((x, y, 0.0)) + "\n")
        f.write(f"CELLS {len(active)} {9 * len(active)}\n")
        for connectivity in mesh.elements[active]:
            f.write("8 " + " ".join(map(str, connectivity)) + "\n")
        f.write(f"CELL_TYPES {len(active)}\n")
        f.write(f"{VTK_QUADRATIC_QUAD}\n" * len(active))
        if points:
            f.write(f"POINT_DATA {mesh.num_nodes}\n")
            _write_arrays(f, points, mesh.num_nodes)
        if cells:
            f.write(f"CELL_DATA {len(active)}\n")
            _write_arrays(f, cells, len(active))
    logger.info("wrote %s (%d cells)", path, len(active))


def weld_fields(result):
    "VTK arrays of a :class:`~weldfrac.scenarios.WeldResult` (MPa, mm, HV)."
    fields = {
        "T_degC": result.T,
        "u_mm": result.u * 1e3,
        "hardness_HV": result.hardness,
        "von_mises_MPa": von_mises(result.stress) / 1e6,
        "stress_MPa": result.stress / 1e6,
        "ep_eq": result.ep_eq,
        "etp_eq": result.etp_eq,
        "yield_stress_MPa": result.yield_stress / 1e6,
        "grain_size_um": result.D,
        "cr700_degC_per_h": result.cr700,
    }
    for i, name in enumerate(PHASES):
        fields[name] = result.fractions[..., i]
    return fields


def pressurization_fields(state):
    "VTK arrays of the final :class:`~weldfrac.fem.FieldState` of a pressurization run."
    fields = {"u_mm": state.u * 1e3, "phi": state.phi, "C_wppm": state.C}
    if "stress" in state.history:
        fields["von_mises_MPa"] = von_mises(state.history["stress"]) / 1e6
    if "ep_eq" in state.history:
        fields["ep_eq"] = state.history["ep_eq"]
    return fields


def write_csv(path, columns, rows, units=None):
    "Write a header row, an optional units row and the data rows."
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        if units is not None:
            writer.writerow(units)
        for row in rows:
            writer.writerow([NUMBER_FORMAT % v if isinstance(v, float) else v for v in row])


def export_curves(record, path):
    """
    Write any record with ``columns``, ``units`` and ``rows()`` (TTT and CCT diagrams,
    dilatometry, pressure-displacement, J-R and sweep tables) as CSV.
    """
    write_csv(path, record.columns, record.rows(), record.units)
    logger.info("wrote %s", path)


def write_crack_path(path, polyline):
    write_csv(path, ("x_mm", "y_mm"), (tuple(float(v) for v in p) for p in polyline * 1e3),
              ("mm", "mm"))  # fmt: skip


def file_checksum(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_version():
    try:
        return version("weldfrac")
    except PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    """
    Provenance record of one command, written as ``manifest.json`` next to the outputs.

    Every file passed to :meth:`register` is listed with its SHA-256 checksum.
    """

    command: str
    config_hash: str
    scenario: str
    version: str = field(default_factory=package_version)
    started: float = field(default_factory=time.time)
    wall_clock: float = 0.0
    statistics: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def register(self, path):
        self.files.append({
            "path": os.path.basename(path),
            "sha256": file_checksum(path),
            "bytes": os.path.getsize(path),
        })  # fmt: skip
        return path

    def write(self, directory):
        self.wall_clock = time.time() - self.started
        path = os.path.join(directory, "manifest.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True, default=_json_default)
            f.write("\n")
        return path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


__all__ = [
    "RunManifest",
    "VTK_QUADRATIC_QUAD",
    "cell_average",
    "export_curves",
    "file_checksum",
    "package_version",
    "pressurization_fields",
    "weld_fields",
    "write_crack_path",
    "write_csv",
    "write_vtk",
]
