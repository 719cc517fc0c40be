"""
Stage-1 result bundles.

A bundle is a CBOR document holding the mesh and the end-of-weld fields, so that the
pressurization stage can start from a weld run without redoing it. Arrays are written as
multi-dimensional typed arrays: tag 40 wrapping ``[shape, typed array]`` where the typed array
is one of the little-endian tags below.
"""
import logging
from dataclasses import fields

import numpy as np
from cbor2 import CBORDecodeError, CBORTag, dump, load

from .mesh import Mesh
from .scenarios import WeldResult
from .types import ScenarioError

logger = logging.getLogger(__name__)

FORMAT = "weldfrac-stage1"
FORMAT_VERSION = 1

MULTI_DIMENSIONAL = 40
#: typed array tag by numpy dtype (little-endian)
TYPED_ARRAY_TAGS = {
    np.dtype("uint8"): 64,
    np.dtype("int8"): 72,
    np.dtype("<i4"): 78,
    np.dtype("<i8"): 79,
    np.dtype("<f4"): 85,
    np.dtype("<f8"): 86,
}
DTYPES = {tag: dtype for dtype, tag in TYPED_ARRAY_TAGS.items()}

_ARRAY_FIELDS = tuple(
    f.name for f in fields(WeldResult) if f.name not in ("mesh", "time", "statistics")
)


class BundleError(ScenarioError):
    "Unreadable or incompatible result bundle."


def _typed_array(array):
    if array.dtype == np.bool_:
        array = array.astype(np.uint8)
    elif array.dtype.kind == "f":
        array = array.astype("<f8" if array.dtype.itemsize > 4 else "<f4")
    elif array.dtype.kind in "iu":
        array = array.astype("<i8")
    else:
        raise TypeError(f"cannot store arrays of {array.dtype}")

    array = np.ascontiguousarray(array)
    return CBORTag(TYPED_ARRAY_TAGS[array.dtype], array.tobytes())


def default_encoder(encoder, value):
    if isinstance(value, np.ndarray):
        encoder.encode(CBORTag(MULTI_DIMENSIONAL, [list(value.shape), _typed_array(value)]))
    elif isinstance(value, np.generic):
        encoder.encode(value.item())
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")


def tag_hook(first, second):
    """
    Decode typed and multi-dimensional arrays; other tags pass through.

    cbor2 5.x calls the hook as ``(decoder, tag)``, 6.x as ``(tag, immutable)``.
    """
    tag = first if isinstance(first, CBORTag) else second
    if tag.tag in DTYPES:
        return np.frombuffer(tag.value, dtype=DTYPES[tag.tag]).copy()
    if tag.tag == MULTI_DIMENSIONAL:
        shape, data = tag.value
        return np.asarray(data).reshape(shape)

    return tag


def _mesh_payload(mesh):
    return {
        "nodes": mesh.nodes,
        "elements": mesh.elements,
        "element_sets": dict(mesh.element_sets),
        "node_sets": dict(mesh.node_sets),
        "side_sets": dict(mesh.side_sets),
        "active": mesh.active,
    }


def _mesh_from_payload(payload):
    mesh = Mesh(payload["nodes"], payload["elements"], payload["element_sets"],
                payload["node_sets"], payload["side_sets"])  # fmt: skip
    mesh.active = np.asarray(payload["active"], dtype=bool)
    return mesh


def save_bundle(result, path, config_hash=None):
    """
    Write a :class:`~weldfrac.scenarios.WeldResult` to ``path``.

    :param str config_hash: hash of the configuration that produced the result
    """
    payload = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "config_hash": config_hash,
        "mesh": _mesh_payload(result.mesh),
        "time": float(result.time),
        "statistics": dict(result.statistics),
        "fields": {name: np.asarray(getattr(result, name)) for name in _ARRAY_FIELDS},
    }
    with open(path, "wb") as fp:
        dump(payload, fp, default=default_encoder)
    logger.info("wrote stage-1 bundle %s", path)


def read_payload(path):
    "Decode a bundle without building the result objects."
    try:
        with open(path, "rb") as fp:
            payload = load(fp, tag_hook=tag_hook)
    except OSError as exc:
        raise BundleError(f"cannot read bundle {path}: {exc.strerror}") from None
    except (CBORDecodeError, ValueError) as exc:
        raise BundleError(f"{path} is not a valid bundle: {exc}") from None

    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise BundleError(f"{path} is not a weldfrac stage-1 bundle")
    if payload.get("version") != FORMAT_VERSION:
        raise BundleError(f"unsupported bundle version {payload.get('version')!r} in {path}")
    return payload


def load_bundle(path):
    """
    Read a bundle written by :func:`save_bundle`.

    :returns: ``(WeldResult, config hash)``
    :raises BundleError: if the file cannot be read or has the wrong format
    """
    payload = read_payload(path)
    missing = [name for name in _ARRAY_FIELDS if name not in payload["fields"]]
    if missing:
        raise BundleError(f"bundle {path} lacks the fields {', '.join(missing)}")

    mesh = _mesh_from_payload(payload["mesh"])
    result = WeldResult(
        mesh=mesh,
        time=payload["time"],
        statistics=payload["statistics"],
        **{name: payload["fields"][name] for name in _ARRAY_FIELDS},
    )
    return result, payload["config_hash"]


def _describe(array):
    info = {"shape": list(array.shape), "dtype": str(array.dtype)}
    finite = array[np.isfinite(array)] if array.dtype.kind == "f" else array
    if finite.size:
        info.update(min=finite.min().item(), max=finite.max().item())
    return info


def summarize(path):
    """
    Describe the contents of a bundle: set sizes, array shapes and value ranges.

    :returns: a JSON-ready dict
    """
    payload = read_payload(path)
    mesh = payload["mesh"]
    return {
        "format": payload["format"],
        "version": payload["version"],
        "config_hash": payload["config_hash"],
        "time": payload["time"],
        "mesh": {
            "nodes": len(mesh["nodes"]),
            "elements": len(mesh["elements"]),
            "active": int(np.count_nonzero(mesh["active"])),
            "element_sets": {name: len(ids) for name, ids in mesh["element_sets"].items()},
            "node_sets": {name: len(ids) for name, ids in mesh["node_sets"].items()},
            "side_sets": {name: len(ids) for name, ids in mesh["side_sets"].items()},
        },
        "fields": {name: _describe(array) for name, array in payload["fields"].items()},
        "statistics": payload["statistics"],
    }


__all__ = [
    "BundleError",
    "default_encoder",
    "load_bundle",
    "read_payload",
    "save_bundle",
    "summarize",
    "tag_hook",
]
