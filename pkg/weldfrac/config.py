"""
Scenario configuration files.

A configuration is a TOML or JSON document with the sections ``material``, ``kinetics``,
``thermal``, ``mesh``, ``weld``, ``pressurization``, ``defects``, ``ssy``, ``dilatometry``,
``ttt``, ``cct``, ``output`` and ``run``. Every key has a default; values are given in the
units listed in :data:`SCHEMA` (mm, MPa, kJ/m², 1/MPa, °C, s) and converted to SI by the
``build_*`` helpers.
"""
import hashlib
import json
import logging
import os
import sys
import warnings
from collections.abc import Mapping
from dataclasses import fields as dataclass_fields

import numpy as np

from .materials import (
    FRACTURE_IDS,
    PROPERTY_IDS,
    MaterialDB,
    PropertyTable,
    default_fracture_props,
    default_phase_props,
)
from .thermal import ThermalBC
from .types import (
    PHASES,
    Composition,
    ConfigError,
    MaterialError,
    FrozenDict,
    KineticsConfig,
    TransformationTemps,
    freeze,
    thaw,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

USER = "user"
PUBLISHED = "published-default"
TOOL = "tool-default"

ELEMENTS = ("C", "Si", "Mn", "Ni", "Cr", "Mo", "V", "Cu")
# properties given in MPa (or 1/MPa) in configuration files
_PROPERTY_SCALE = {"kappa": 1e6, "G_shear": 1e6, "sigma_y0": 1e6, "K_trip": 1e-6}
_FRACTURE_SCALE = {"Gc0": 1e3, "ell": 1e-3}


class Option:
    """
    One configuration key.

    :param default: value used when the key is absent
    :param str kind: ``number``, ``integer``, ``bool``, ``string``, ``list``, ``mapping`` or
        ``records``; a trailing ``?`` also admits ``None``
    :param str source: provenance of the default
    :param check: optional callable returning an error message or ``None``
    :param item: schema applied to every entry of a ``records`` list
    """

    __slots__ = ("default", "kind", "source", "check", "unit", "item")

    def __init__(self, default, kind="number", source=TOOL, check=None, unit="", item=None):
        self.default = default
        self.kind = kind
        self.source = source
        self.check = check
        self.unit = unit
        self.item = item


def positive(value):
    return None if value > 0 else "must be positive"


def non_negative(value):
    return None if value >= 0 else "must be non-negative"


def unit_interval(value):
    return None if 0 <= value <= 1 else "must lie in [0, 1]"


def one_of(*choices):
    def check(value):
        return None if value in choices else f"must be one of {', '.join(map(repr, choices))}"

    return check


def _number_list(length=None, check=None):
    def validate(value):
        if length is not None and len(value) != length:
            return f"needs {length} numbers"
        if not all(_is_number(v) for v in value):
            return "must contain numbers only"
        if check is not None:
            return next((m for m in map(check, value) if m), None)
        return None

    return validate


def _composition(source):
    values = dict(C=0.0, Si=0.0, Mn=0.0, Ni=0.0, Cr=0.0, Mo=0.0, V=0.0, Cu=0.0)
    if source == PUBLISHED:
        values.update(C=0.176, Si=0.217, Mn=1.37)
    schema = {name: Option(value, source=source, check=non_negative, unit="wt.%")
              for name, value in values.items()}  # fmt: skip
    schema["G_init"] = Option(9.0, source=TOOL, unit="ASTM")
    return schema


PASS_SCHEMA = {
    "bead": Option(None, "string"),
    "fusion": Option(None, "string"),
    "insertion_temperature": Option(1500.0, source=PUBLISHED, unit="°C"),
    "ramp": Option(3.0, source=PUBLISHED, check=positive, unit="s"),
    "cooldown": Option(120.0, source=PUBLISHED, check=positive, unit="s"),
}

DEFECT_SCHEMA = {
    "start": Option(None, "list", check=_number_list(2), unit="mm"),
    "end": Option(None, "list", check=_number_list(2), unit="mm"),
    "name": Option("", "string"),
}

SCHEMA = {
    "scenario": Option("weldfrac", "string"),
    "material": {
        "base": _composition(PUBLISHED),
        "filler": Option(None, "mapping?", unit="wt.%"),
        "initial": Option({"ferrite": 0.75, "pearlite": 0.25}, "mapping"),
        "base_hardness": Option(200.0, check=positive, unit="HV"),
        "bainite_diffusivity_ratio": Option(0.5, check=positive),
        "phases": Option({}, "mapping"),
        "fracture": Option({}, "mapping"),
    },
    "kinetics": {
        "Ae1": Option(690.0, unit="°C"),
        "Ae3": Option(820.0, unit="°C"),
        "Bs": Option(640.0, unit="°C"),
        "Ms": Option(420.0, unit="°C"),
        "Xf_eq": Option(0.75, check=unit_interval),
        "D0": Option(20.0, check=positive, unit="µm"),
        "D_lim": Option(150.0, check=positive, unit="µm"),
        "A_gg": Option(4.0e8, check=non_negative, unit="µm²/s"),
        "Q_gg": Option(190.0e3, source=PUBLISHED, check=positive, unit="J/mol"),
        "tau_LD": Option([1.0, 0.05], "list", PUBLISHED, _number_list(2, positive), "s"),
        "km_enabled": Option(False, "bool"),
        "km_b": Option(0.011, check=non_negative, unit="1/°C"),
    },
    "thermal": {
        "h_c": Option(15.0, source=PUBLISHED, check=non_negative, unit="W/(m²·K)"),
        "T0": Option(20.0, source=PUBLISHED, unit="°C"),
        "emissivity": Option(0.8, source=PUBLISHED, check=unit_interval),
        "insulated": Option([], "list"),
    },
    "mesh": {
        "path": Option("", "string"),
        "demo": Option(
            "plate", "string", check=one_of("plate", "pipe", "boundary_layer", "strip")
        ),
        "h": Option(1.0, check=positive, unit="mm"),
        "coarse": Option(None, "number?", check=positive, unit="mm"),
        "layers": Option(8, "integer", check=positive),
        "half_width": Option(30.0, check=positive, unit="mm"),
        "thickness": Option(8.0, check=positive, unit="mm"),
        "inner_radius": Option(372.8, source=PUBLISHED, check=positive, unit="mm"),
        "wall": Option(8.2, source=PUBLISHED, check=positive, unit="mm"),
        "groove_half_width": Option(3.0, check=positive, unit="mm"),
    },
    "weld": {
        "passes": Option(
            [{"bead": "bead_1", "fusion": "fusion_1"}, {"bead": "bead_2", "fusion": "fusion_2"}],
            "records", item=PASS_SCHEMA,
        ),  # fmt: skip
        "annealing_temperature": Option(1400.0, source=PUBLISHED, unit="°C"),
        "fixed": Option([["anchor", 0], ["anchor", 1], ["roller", 1]], "list"),
        "dt_initial": Option(0.01, check=positive, unit="s"),
        "dt_min": Option(1e-5, check=positive, unit="s"),
        "dt_max": Option(5.0, check=positive, unit="s"),
        "final_dt_max": Option(200.0, check=positive, unit="s"),
        "dT_max": Option(25.0, check=positive, unit="°C"),
        "final_tolerance": Option(1.0, source=PUBLISHED, check=positive, unit="°C"),
        "final_time_max": Option(1.0e5, check=positive, unit="s"),
    },
    "pressurization": {
        "pressure": Option(15.0, check=non_negative, unit="MPa"),
        "radius": Option(376.9, check=positive, unit="mm"),
        "thickness": Option(8.2, source=PUBLISHED, check=positive, unit="mm"),
        "duration": Option(90 * 86400.0, source=PUBLISHED, check=positive, unit="s"),
        "increments": Option(50, "integer", check=positive),
        "medium": Option("hydrogen", "string", check=one_of("hydrogen", "inert")),
        "solubility": Option(0.077, source=PUBLISHED, check=non_negative, unit="wppm/MPa^0.5"),
        "overshoot": Option(1.0, check=positive),
        "max_strain": Option(0.2, check=positive),
        "beta": Option(0.1, source=PUBLISHED, check=non_negative),
        "heterogeneity": Option(True, "bool"),
        "residual_stress": Option(True, "bool"),
        "tol": Option(1e-4, check=positive),
        "max_passes": Option(25, "integer", check=positive),
        "single_pass": Option(False, "bool"),
        "collapse_ratio": Option(0.01, check=positive),
        "collapse_increments": Option(5, "integer", check=positive),
        "stage1": Option("", "string"),
    },
    "defects": Option([], "records", item=DEFECT_SCHEMA),
    "ssy": {
        "K_max": Option(150.0, check=positive, unit="MPa·m^0.5"),
        "increments": Option(60, "integer", check=positive),
        "fractions": Option({"ferrite": 1.0}, "mapping"),
        "hydrogen_concentration": Option(0.0, check=non_negative, unit="wppm"),
        "box": Option(8.0, check=positive, unit="ell"),
        "resolution": Option(2.0, check=positive, unit="elements per ell"),
        "layers": Option(8, "integer", check=positive),
        "rim_strain": Option(1e-6, check=positive),
        "tol": Option(1e-4, check=positive),
    },
    "dilatometry": {
        "T_start": Option(20.0, unit="°C"),
        "dT": Option(1.0, check=positive, unit="°C"),
        "schedule": Option([[1000.0, 3.0, 60.0], [20.0, 3.0]], "list", source=PUBLISHED),
    },
    "ttt": {
        "levels": Option([0.001, 0.999], "list", check=_number_list(None, lambda x: (
            None if 0 < x < 1 else "fraction levels must lie in (0, 1)"))),
        "points": Option(120, "integer", check=positive),
    },
    "cct": {
        "rates": Option([-0.3, -1.0, -3.0, -10.0, -30.0, -100.0], "list", check=_number_list(
            None, lambda x: None if x < 0 else "cooling rates must be negative")),
        "T_end": Option(20.0, unit="°C"),
    },
    "output": {
        "vtk": Option(True, "bool"),
        "csv": Option(True, "bool"),
        "bundle": Option(True, "bool"),
    },
    "run": {
        "threads": Option(None, "integer?"),
        "seed": Option(0, "integer"),
    },
}  # fmt: skip


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _matches(kind, value):
    if kind.endswith("?"):
        if value is None:
            return True
        kind = kind[:-1]

    return {
        "number": _is_number,
        "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "bool": lambda v: isinstance(v, bool),
        "string": lambda v: isinstance(v, str),
        "list": lambda v: isinstance(v, (list, tuple)),
        "mapping": lambda v: isinstance(v, Mapping),
        "records": lambda v: isinstance(v, (list, tuple)),
    }[kind](value)


class Config(FrozenDict):
    """
    Validated, immutable configuration tree.

    ``provenance`` maps every dotted key path to ``"user"``, ``"published-default"`` or
    ``"tool-default"``.
    """

    __slots__ = ("provenance",)

    def __init__(self, tree, provenance=None):
        super().__init__(tree)
        self.provenance = FrozenDict(provenance or {})

    def get_path(self, path):
        "Value at a dotted path such as ``kinetics.Ae1``."
        node = self
        for key in path.split("."):
            node = node[key]
        return node

    def replace(self, path, value):
        """
        Return a validated copy with one value changed (provenance ``"user"``).

        :raises ConfigError: if the new value is invalid
        """
        tree = thaw(self)
        node = tree
        keys = path.split(".")
        try:
            for key in keys[:-1]:
                node = node[key]
        except (KeyError, TypeError):
            raise ConfigError([(path, "unknown key")]) from None
        node[keys[-1]] = value
        config = from_mapping(tree)
        provenance = dict(self.provenance)
        provenance[path] = USER
        return Config(config, provenance)


class _Validator:
    def __init__(self, strict):
        self.strict = strict
        self.violations = []
        self.provenance = {}

    def error(self, path, message):
        self.violations.append((path, message))

    def unknown(self, path):
        if self.strict:
            self.error(path, "unknown key")
        else:
            message = f"ignoring unknown configuration key {path!r}"
            warnings.warn(message, UserWarning, stacklevel=4)
            logger.warning("ignoring unknown configuration key %r", path)

    def merge(self, schema, data, path, record_provenance=True):
        if not isinstance(data, Mapping):
            self.error(path, "expected a table")
            data = {}

        for key in data:
            if key not in schema:
                self.unknown(f"{path}.{key}" if path else str(key))

        result = {}
        for key, spec in schema.items():
            sub = f"{path}.{key}" if path else key
            if isinstance(spec, dict):
                result[key] = self.merge(spec, data.get(key, {}), sub, record_provenance)
                continue

            if key in data:
                value = self.value(spec, data[key], sub)
                source = USER
            elif spec.default is None and not spec.kind.endswith("?"):
                self.error(sub, "is required")
                value, source = None, TOOL
            else:
                value, source = thaw(spec.default), spec.source
                if spec.kind == "records":
                    value = self.value(spec, value, sub)
            if record_provenance:
                self.provenance[sub] = source
            result[key] = value
        return result

    def value(self, spec, value, path):
        if not _matches(spec.kind, value):
            self.error(path, f"expected {spec.kind.rstrip('?')}, got {type(value).__name__}")
            return value
        if value is None:
            return None
        if spec.kind.startswith("number"):
            value = float(value)
        elif spec.kind == "records":
            return [self.merge(spec.item, entry, f"{path}[{i}]", False)
                    for i, entry in enumerate(value)]  # fmt: skip
        elif spec.kind.startswith("list"):
            value = thaw(freeze(value))
        elif spec.kind.startswith("mapping"):
            value = thaw(value)

        if spec.check is not None:
            message = spec.check(value)
            if message:
                self.error(path, message)
        return value


def _check_composition(validator, path, values):
    if values is None:
        return
    unknown = set(values) - set(ELEMENTS) - {"G_init"}
    for name in sorted(unknown):
        validator.error(f"{path}.{name}", "unknown alloying element")
    numbers = [v for v in values.values() if _is_number(v)]
    if len(numbers) != len(values):
        validator.error(path, "composition entries must be numbers")
        return
    if any(values[name] < 0 for name in ELEMENTS if name in values):
        validator.error(path, "alloy contents must be non-negative")
    if sum(values.get(name, 0.0) for name in ELEMENTS) >= 100:
        validator.error(path, "the sum of alloying elements must be below 100 wt.%")


def _check_fractions(validator, path, fractions):
    unknown = set(fractions) - set(PHASES)
    for name in sorted(unknown):
        validator.error(f"{path}.{name}", "unknown phase")
    values = list(fractions.values())
    if not all(_is_number(v) and 0 <= v <= 1 for v in values):
        validator.error(path, "phase fractions must lie in [0, 1]")
    elif abs(sum(values) - 1) > 1e-9:
        validator.error(path, "phase fractions must sum to 1")


def _check_table(validator, path, entry):
    if _is_number(entry):
        if entry < 0:
            validator.error(path, "must be non-negative")
        return
    try:
        table = np.asarray(entry, dtype=float)
    except (TypeError, ValueError):
        table = None
    if table is None or table.ndim != 2 or table.shape[1] != 2:
        validator.error(path, "expected a number or a list of [temperature, value] pairs")
    elif np.any(np.diff(table[:, 0]) <= 0):
        validator.error(path, "table temperatures must be strictly increasing")


def _cross_check(validator, tree):
    kinetics = tree["kinetics"]
    if not kinetics["Ae1"] < kinetics["Ae3"]:
        validator.error("kinetics.Ae1", "must be below Ae3")
    if not kinetics["Bs"] < kinetics["Ae1"]:
        validator.error("kinetics.Bs", "must be below Ae1")
    if not kinetics["Ms"] < kinetics["Bs"]:
        validator.error("kinetics.Ms", "must be below Bs")
    if not kinetics["D_lim"] > kinetics["D0"]:
        validator.error("kinetics.D_lim", "must exceed D0")

    material = tree["material"]
    _check_composition(validator, "material.base", material["base"])
    _check_composition(validator, "material.filler", material["filler"])
    _check_fractions(validator, "material.initial", material["initial"])
    _check_fractions(validator, "ssy.fractions", tree["ssy"]["fractions"])
    for phase, props in material["phases"].items():
        if phase not in PHASES:
            validator.error(f"material.phases.{phase}", "unknown phase")
            continue
        for name, entry in props.items():
            if name not in PROPERTY_IDS:
                validator.error(f"material.phases.{phase}.{name}", "unknown property")
            elif name in ("K_trip", "n") and not _is_number(entry):
                validator.error(f"material.phases.{phase}.{name}", "expected a number")
            else:
                _check_table(validator, f"material.phases.{phase}.{name}", entry)
    for phase, props in material["fracture"].items():
        if phase not in PHASES:
            validator.error(f"material.fracture.{phase}", "unknown phase")
            continue
        for name, entry in props.items():
            if name not in FRACTURE_IDS:
                validator.error(f"material.fracture.{phase}.{name}", "unknown parameter")
            elif not _is_number(entry) or entry <= 0:
                validator.error(f"material.fracture.{phase}.{name}", "must be a positive number")

    beads = [entry["bead"] for entry in tree["weld"]["passes"]]
    for name in {b for b in beads if beads.count(b) > 1}:
        validator.error("weld.passes", f"bead {name!r} is deposited twice")
    for i, entry in enumerate(tree["weld"]["fixed"]):
        if (
            not isinstance(entry, (list, tuple)) or len(entry) != 2
            or not isinstance(entry[0], str) or entry[1] not in (0, 1)
        ):  # fmt: skip
            validator.error(f"weld.fixed[{i}]", "expected [node set, component 0 or 1]")
    for i, segment in enumerate(tree["dilatometry"]["schedule"]):
        if (
            not isinstance(segment, (list, tuple)) or len(segment) not in (2, 3)
            or not all(_is_number(v) for v in segment)
            or segment[1] <= 0 or (len(segment) == 3 and segment[2] < 0)
        ):  # fmt: skip
            validator.error(
                f"dilatometry.schedule[{i}]",
                "expected [target °C, rate > 0 °C/s] or [target, rate, hold s]",
            )
    for i, entry in enumerate(tree["thermal"]["insulated"]):
        if not isinstance(entry, str):
            validator.error(f"thermal.insulated[{i}]", "expected a side set name")
    threads = tree["run"]["threads"]
    if threads is not None and threads < 1:
        validator.error("run.threads", "must be positive")


def from_mapping(data, strict=True):
    """
    Validate a configuration mapping against :data:`SCHEMA`.

    :param bool strict: reject unknown keys (otherwise warn and drop them)
    :rtype: Config
    :raises ConfigError: listing every violation found
    """
    validator = _Validator(strict)
    tree = validator.merge(SCHEMA, data, "")
    if not validator.violations:
        _cross_check(validator, tree)
    if validator.violations:
        raise ConfigError(validator.violations)

    return Config(tree, validator.provenance)


def load_config(path=None, strict=True):
    """
    Read a TOML (``.toml``) or JSON (``.json``) configuration file.

    Without ``path`` the defaults are returned.

    :rtype: Config
    :raises ConfigError: for unreadable files and invalid content
    """
    if path is None:
        return from_mapping({}, strict)

    path = os.fspath(path)
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as f:
                data = tomllib.load(f)
        elif path.endswith(".json"):
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        else:
            raise ConfigError([(path, "configuration files must end in .toml or .json")])
    except OSError as exc:
        raise ConfigError([(path, f"cannot read: {exc.strerror}")]) from None
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError([(path, f"parse error: {exc}")]) from None

    config = from_mapping(data, strict)
    logger.info("loaded configuration %s (%d keys set by the user)", path,
                sum(1 for source in config.provenance.values() if source == USER))  # fmt: skip
    return config


def dump_config(config):
    "The normalized configuration tree as JSON text."
    return json.dumps(thaw(config), indent=2, sort_keys=True, ensure_ascii=False)


def config_hash(config):
    "SHA-256 of the normalized configuration."
    text = json.dumps(thaw(config), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


#
# Conversion to domain objects (SI units)
#


def build_composition(config, which="base"):
    """
    Alloy composition of the base metal or the filler (which falls back to the base metal).

    :rtype: ~weldfrac.types.Composition
    """
    material = config["material"]
    values = dict(material["base"])
    if which == "filler":
        if material["filler"] is None:
            return None
        values.update(dict.fromkeys(ELEMENTS, 0.0))
        values.update(material["filler"])
    elif which != "base":
        raise ValueError(f"unknown composition {which!r}")
    return Composition(**{name: float(value) for name, value in values.items()})


def build_kinetics(config):
    section = config["kinetics"]
    temps = TransformationTemps(section["Ae1"], section["Ae3"], section["Bs"], section["Ms"],
                                section["Xf_eq"])  # fmt: skip
    return KineticsConfig(
        temps,
        D0=section["D0"],
        D_lim=section["D_lim"],
        A_gg=section["A_gg"],
        Q_gg=section["Q_gg"],
        tau_LD=tuple(section["tau_LD"]),
        km_enabled=section["km_enabled"],
        km_b=section["km_b"],
    )


def _property(phase, name, entry):
    scale = _PROPERTY_SCALE.get(name, 1.0)
    if name in ("K_trip", "n"):
        return float(entry) * scale
    if _is_number(entry):
        return PropertyTable.constant(float(entry) * scale, f"{phase}.{name}")
    table = np.asarray(entry, dtype=float)
    return PropertyTable(table[:, 0], table[:, 1] * scale, f"{phase}.{name}")


def build_material_db(config):
    """
    Phase property database: shipped tables with the configured overrides.

    :rtype: ~weldfrac.materials.MaterialDB
    """
    material = config["material"]
    fracture = default_fracture_props(material["bainite_diffusivity_ratio"])
    db = MaterialDB(default_phase_props(), fracture, material["base_hardness"])
    try:
        for phase, props in material["phases"].items():
            changes = {name: _property(phase, name, entry) for name, entry in props.items()}
            db = db.replace_phase(phase, **changes)
        for phase, props in material["fracture"].items():
            changes = {name: float(v) * _FRACTURE_SCALE.get(name, 1.0)
                       for name, v in props.items()}  # fmt: skip
            db = db.replace_fracture(phase, **changes)
    except (ValueError, MaterialError) as exc:
        raise ConfigError([("material", str(exc))]) from None
    return db


def build_thermal_bc(config):
    section = config["thermal"]
    return ThermalBC(h_c=section["h_c"], T0=section["T0"], emissivity=section["emissivity"],
                     insulated=tuple(section["insulated"]))  # fmt: skip


def build_mesh(config, demo=None):
    """
    The mesh of the scenario: read from ``mesh.path`` or generated by a demo geometry.

    Files ending in ``.mesh`` use the native text format; anything else goes through meshio.
    """
    from . import geometry
    from .mesh import from_meshio, read_mesh

    section = config["mesh"]
    if section["path"]:
        path = section["path"]
        return read_mesh(path) if path.endswith(".mesh") else from_meshio(path)

    demo = demo or section["demo"]
    coarse = {} if section["coarse"] is None else {"coarse": section["coarse"]}
    if demo == "plate":
        return geometry.plate_weld(section["half_width"], section["thickness"],
                                   section["groove_half_width"], section["h"],
                                   **coarse)  # fmt: skip
    if demo == "pipe":
        return geometry.pipe_ring(section["inner_radius"], section["wall"], section["layers"],
                                  section["groove_half_width"], section["h"],
                                  **coarse)  # fmt: skip
    if demo == "boundary_layer":
        return build_boundary_layer(config)
    return geometry.strip(section["half_width"], nx=int(section["half_width"] / section["h"]))


def build_boundary_layer(config, db=None):
    "Boundary-layer mesh sized by the mixed length scale of the ``ssy.fractions`` material."
    from . import geometry

    section = config["ssy"]
    db = build_material_db(config) if db is None else db
    fractions = np.array([section["fractions"].get(name, 0.0) for name in PHASES])
    ell = float(db.mix_fracture(fractions).ell) * 1e3
    return geometry.boundary_layer(ell, section["box"], ell / section["resolution"],
                                   layers=section["layers"])  # fmt: skip


def build_weld(config, db=None):
    """
    Weld passes and settings.

    :returns: ``(passes, WeldSettings)``
    """
    from .scenarios import WeldPass, WeldSettings

    section = config["weld"]
    passes = [WeldPass(**entry) for entry in section["passes"]]
    settings = WeldSettings(
        db=build_material_db(config) if db is None else db,
        kinetics=build_kinetics(config),
        base=build_composition(config),
        filler=build_composition(config, "filler"),
        initial=FrozenDict(config["material"]["initial"]),
        bc=build_thermal_bc(config),
        annealing_temperature=section["annealing_temperature"],
        fixed=tuple((name, int(component)) for name, component in section["fixed"]),
        dt_initial=section["dt_initial"],
        dt_min=section["dt_min"],
        dt_max=section["dt_max"],
        final_dt_max=section["final_dt_max"],
        dT_max=section["dT_max"],
        final_tolerance=section["final_tolerance"],
        final_time_max=section["final_time_max"],
    )
    return passes, settings


def build_defects(config):
    from .scenarios import DefectSpec

    return [
        DefectSpec(np.asarray(entry["start"]) * 1e-3, np.asarray(entry["end"]) * 1e-3,
                   entry["name"])  # fmt: skip
        for entry in config["defects"]
    ]


def build_pressurization(config, db=None):
    """
    Pressurization program, settings and defects.

    :returns: ``(PressurizationProgram, PressurizationSettings, defects)``
    """
    from .scenarios import PressurizationProgram, PressurizationSettings

    section = config["pressurization"]
    program = PressurizationProgram(
        pressure=section["pressure"] * 1e6,
        radius=section["radius"] * 1e-3,
        thickness=section["thickness"] * 1e-3,
        duration=section["duration"],
        increments=section["increments"],
        medium=section["medium"],
        solubility=section["solubility"],
        overshoot=section["overshoot"],
        max_strain=section["max_strain"],
    )
    names = {f.name for f in dataclass_fields(PressurizationSettings)}
    settings = PressurizationSettings(
        db=build_material_db(config) if db is None else db,
        initial=FrozenDict(config["material"]["initial"]),
        **{key: section[key] for key in names & set(section)},
    )
    return program, settings, build_defects(config)


def build_ssy(config, db=None):
    "Keyword arguments of :func:`~weldfrac.scenarios.run_ssy_jr` (without the mesh)."
    section = config["ssy"]
    concentration = section["hydrogen_concentration"]
    return {
        "db": build_material_db(config) if db is None else db,
        "K_max": section["K_max"] * 1e6,
        "increments": section["increments"],
        "fractions": dict(section["fractions"]),
        "C_uniform": concentration if concentration > 0 else None,
        "beta": config["pressurization"]["beta"],
        "tol": section["tol"],
        "rim_strain": section["rim_strain"],
    }


def threads(config):
    "Worker count: ``run.threads``, else ``WELDFRAC_THREADS``, else 1."
    value = config["run"]["threads"]
    if value is None:
        value = os.environ.get("WELDFRAC_THREADS", "1")
        try:
            value = int(value)
        except ValueError:
            raise ConfigError([("WELDFRAC_THREADS", f"not an integer: {value!r}")]) from None
    if value < 1:
        raise ConfigError([("run.threads", "must be positive")])
    return value


__all__ = [
    "Config",
    "Option",
    "SCHEMA",
    "build_boundary_layer",
    "build_composition",
    "build_defects",
    "build_kinetics",
    "build_material_db",
    "build_mesh",
    "build_pressurization",
    "build_ssy",
    "build_thermal_bc",
    "build_weld",
    "config_hash",
    "dump_config",
    "from_mapping",
    "load_config",
    "threads",
]
