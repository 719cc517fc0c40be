"""
Phase-resolved material properties, rule-of-mixtures evaluation and hardness correlations.

All quantities are SI: kg/m³, W/(m·K), J/(kg·K), Pa, 1/Pa, J/m², m, m²/s, m³/mol.
Temperatures are in °C.
"""
import logging
import warnings
from dataclasses import dataclass, fields, replace

import numpy as np

from .types import PHASES, MaterialError, PhaseState, PropertyRangeWarning

logger = logging.getLogger(__name__)

PROPERTY_IDS = ("rho", "k", "c", "kappa", "G_shear", "sigma_y0", "K_trip", "n")
FRACTURE_IDS = ("Gc0", "ell", "f_min", "q1", "q2", "D_diff", "V_h")


class PropertyTable:
    """
    Temperature-dependent property sampled at increasing temperatures.

    Evaluation interpolates linearly and clamps outside the sampled range, emitting a
    :class:`~weldfrac.types.PropertyRangeWarning`.

    :param temperatures: strictly increasing temperatures (°C)
    :param values: property values at those temperatures
    :param str name: label used in warnings
    """

    __slots__ = ("temperatures", "values", "name")

    def __init__(self, temperatures, values, name="property"):
        temperatures = np.atleast_1d(np.asarray(temperatures, dtype=float))
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if temperatures.shape != values.shape or temperatures.ndim != 1:
            raise ValueError(f"{name}: temperatures and values must be 1D and of equal length")
        if np.any(np.diff(temperatures) <= 0):
            raise ValueError(f"{name}: temperatures must be strictly increasing")

        self.temperatures = temperatures
        self.values = values
        self.name = name

    @classmethod
    def constant(cls, value, name="property"):
        return cls([20.0], [value], name)

    def __call__(self, T):
        T = np.asarray(T, dtype=float)
        if len(self.temperatures) == 1:
            return np.full(T.shape, self.values[0])

        if np.any(T < self.temperatures[0]) or np.any(T > self.temperatures[-1]):
            warnings.warn(
                f"{self.name} evaluated outside [{self.temperatures[0]:g}, "
                f"{self.temperatures[-1]:g}] °C; clamped",
                PropertyRangeWarning,
                stacklevel=3,
            )

        return np.interp(T, self.temperatures, self.values)

    def __repr__(self):
        return f"PropertyTable({self.name!r}, {len(self.temperatures)} points)"


@dataclass(frozen=True)
class PhaseProps:
    "Thermal and mechanical properties of one phase."

    rho: PropertyTable
    k: PropertyTable
    c: PropertyTable
    kappa: PropertyTable
    G_shear: PropertyTable
    sigma_y0: PropertyTable
    K_trip: float = 0.0
    n: float = 0.1

    def __post_init__(self):
        for name in ("rho", "k", "c", "kappa", "G_shear", "sigma_y0"):
            if np.any(getattr(self, name).values <= 0):
                raise ValueError(f"{name} must be positive over its table")
        if not 0 < self.n <= 1:
            raise ValueError("hardening exponent must lie in (0, 1]")
        if self.K_trip < 0:
            raise ValueError("K_trip must be non-negative")


@dataclass(frozen=True)
class FractureProps:
    """
    Fracture and hydrogen transport parameters.

    Fields are scalars for a single phase or arrays after mixing.
    """

    Gc0: float
    ell: float
    f_min: float
    q1: float
    q2: float
    D_diff: float
    V_h: float = 2.0e-6

    def __post_init__(self):
        if np.any(np.asarray(self.Gc0) <= 0) or np.any(np.asarray(self.ell) <= 0):
            raise ValueError("Gc0 and ell must be positive")
        f_min = np.asarray(self.f_min)
        if np.any(f_min <= 0) or np.any(f_min > 1):
            raise ValueError("f_min must lie in (0, 1]")
        if np.any(np.asarray(self.q1) <= 0) or np.any(np.asarray(self.q2) <= 0):
            raise ValueError("q1 and q2 must be positive")
        if np.any(np.asarray(self.D_diff) <= 0):
            raise ValueError("D_diff must be positive")


# sample temperatures of the shipped tables
_GRID = (20.0, 200.0, 400.0, 600.0, 800.0, 1000.0, 1200.0, 1500.0)
_YOUNG = (210e9, 200e9, 180e9, 150e9, 110e9, 80e9, 40e9, 10e9)
_POISSON = 0.3


def _table(name, values):
    return PropertyTable(_GRID, values, name)


def _linear(name, at20, slope):
    return _table(name, [at20 + slope * (T - 20.0) for T in _GRID])


def _elastic(name, scale=1.0):
    young = np.asarray(_YOUNG) * scale
    kappa = young / (3 * (1 - 2 * _POISSON))
    shear = young / (2 * (1 + _POISSON))
    return _table(f"{name}.kappa", kappa), _table(f"{name}.G_shear", shear)


def _yield(name, at20):
    # ferrite-shaped softening curve scaled to the room temperature value
    shape = (1.0, 0.96, 0.79, 0.48, 0.19, 0.096, 0.048, 0.012)
    return _table(f"{name}.sigma_y0", [at20 * s for s in shape])


def default_phase_props():
    """
    Placeholder property tables for a generic low-carbon pipeline steel.

    Austenite is denser than the body-centred phases over the transformation range so that
    austenitization contracts and decomposition expands the material.
    """
    ferritic_k = _table("k", (52.0, 49.0, 43.0, 36.0, 27.0, 28.0, 29.0, 30.0))
    ferritic_c = _table("c", (460.0, 520.0, 590.0, 700.0, 750.0, 650.0, 650.0, 650.0))
    props = {}
    for phase, rho20, sigma20, K_trip, n in (
        ("ferrite", 7875.0, 416e6, 6e-11, 0.1),
        ("pearlite", 7865.0, 550e6, 6e-11, 0.1),
        ("bainite", 7855.0, 820e6, 8e-11, 0.05),
        ("martensite", 7800.0, 1200e6, 1e-10, 0.05),
    ):
        kappa, shear = _elastic(phase)
        props[phase] = PhaseProps(
            rho=_linear(f"{phase}.rho", rho20, -0.33),
            k=ferritic_k,
            c=ferritic_c,
            kappa=kappa,
            G_shear=shear,
            sigma_y0=_yield(phase, sigma20),
            K_trip=K_trip,
            n=n,
        )

    kappa, shear = _elastic("austenite", 0.95)
    props["austenite"] = PhaseProps(
        rho=_linear("austenite.rho", 8110.0, -0.48),
        k=_linear("austenite.k", 15.0, 0.0122),
        c=_linear("austenite.c", 500.0, 0.1),
        kappa=kappa,
        G_shear=shear,
        sigma_y0=_table("austenite.sigma_y0", (250e6, 200e6, 160e6, 110e6, 60e6, 30e6, 15e6, 5e6)),
        K_trip=0.0,
        n=0.1,
    )
    return props


def default_fracture_props(bainite_diffusivity_ratio=0.5):
    """
    Fracture parameters calibrated on X52 (ferrite, pearlite, austenite) and X100 (bainite,
    martensite) grades.
    """
    ferritic = FractureProps(
        Gc0=60e3, ell=0.46e-3, f_min=0.26, q1=25.0, q2=2.0, D_diff=1.0e-10, V_h=2.0e-6
    )
    bainitic = FractureProps(
        Gc0=80e3,
        ell=0.35e-3,
        f_min=0.10,
        q1=20.0,
        q2=1.0,
        D_diff=bainite_diffusivity_ratio * 1.0e-10,
        V_h=2.0e-6,
    )
    return {
        "ferrite": ferritic,
        "pearlite": ferritic,
        "bainite": bainitic,
        "martensite": bainitic,
        "austenite": ferritic,
    }


def _as_fractions(fractions):
    if isinstance(fractions, PhaseState):
        return fractions.fractions()

    fractions = np.asarray(fractions, dtype=float)
    if fractions.shape[-1] != len(PHASES):
        raise MaterialError(f"expected {len(PHASES)} phase fractions along the last axis")
    return fractions


class MaterialDB:
    """
    Immutable database of phase properties.

    :param dict phases: phase name to :class:`PhaseProps`
    :param dict fracture: phase name to :class:`FractureProps`
    :param float base_hardness: as-received base metal hardness (HV), used where no cooling
        rate through 700 °C was recorded
    """

    def __init__(self, phases, fracture=None, base_hardness=200.0):
        missing = set(PHASES) - set(phases)
        if missing:
            raise MaterialError(f"missing phase properties: {', '.join(sorted(missing))}")

        self._phases = dict(phases)
        self._fracture = dict(fracture or default_fracture_props())
        self.base_hardness = float(base_hardness)

    @classmethod
    def default(cls):
        return cls(default_phase_props(), default_fracture_props())

    @classmethod
    def uniform(cls, rho=7850.0, k=40.0, c=500.0, E=210e9, nu=0.3, sigma_y0=400e6, n=0.1,
                K_trip=0.0, fracture=None):  # fmt: skip
        "Database with identical, temperature-independent properties for every phase."
        props = PhaseProps(
            rho=PropertyTable.constant(rho, "rho"),
            k=PropertyTable.constant(k, "k"),
            c=PropertyTable.constant(c, "c"),
            kappa=PropertyTable.constant(E / (3 * (1 - 2 * nu)), "kappa"),
            G_shear=PropertyTable.constant(E / (2 * (1 + nu)), "G_shear"),
            sigma_y0=PropertyTable.constant(sigma_y0, "sigma_y0"),
            K_trip=K_trip,
            n=n,
        )
        fracture = fracture or default_fracture_props()["ferrite"]
        return cls(dict.fromkeys(PHASES, props), dict.fromkeys(PHASES, fracture))

    def phase(self, name):
        try:
            return self._phases[name]
        except KeyError:
            raise MaterialError(f"unknown phase {name!r}") from None

    def fracture(self, name):
        try:
            return self._fracture[name]
        except KeyError:
            raise MaterialError(f"unknown phase {name!r}") from None

    def replace_phase(self, name, **changes):
        "Return a new database with fields of one phase replaced."
        phases = dict(self._phases)
        phases[name] = replace(self.phase(name), **changes)
        return MaterialDB(phases, self._fracture, self.base_hardness)

    def replace_fracture(self, name, **changes):
        fracture = dict(self._fracture)
        fracture[name] = replace(self.fracture(name), **changes)
        return MaterialDB(self._phases, fracture, self.base_hardness)

    def phase_values(self, prop, T):
        """
        Property of every phase at ``T``, stacked along a trailing axis.

        :raises MaterialError: for unknown property ids
        """
        if prop not in PROPERTY_IDS:
            raise MaterialError(f"unknown property id {prop!r}")

        T = np.asarray(T, dtype=float)
        values = []
        for name in PHASES:
            entry = getattr(self._phases[name], prop)
            if isinstance(entry, PropertyTable):
                values.append(entry(T))
            else:
                values.append(np.full(T.shape, float(entry)))

        return np.stack(values, axis=-1)

    def mix(self, prop, fractions, T):
        """
        Linear rule of mixtures ``sum_i X_i prop_i(T)``.

        :param str prop: one of :data:`PROPERTY_IDS`
        :param fractions: a :class:`PhaseState` or an array with phase fractions on the last axis
        :param T: temperature(s) in °C, broadcast against the fractions
        """
        fractions = _as_fractions(fractions)
        return np.sum(fractions * self.phase_values(prop, T), axis=-1)

    def young_modulus(self, fractions, T):
        kappa = self.mix("kappa", fractions, T)
        shear = self.mix("G_shear", fractions, T)
        return 9 * kappa * shear / (3 * kappa + shear)

    def poisson_ratio(self, fractions, T):
        kappa = self.mix("kappa", fractions, T)
        shear = self.mix("G_shear", fractions, T)
        return (3 * kappa - 2 * shear) / (2 * (3 * kappa + shear))

    def mix_fracture(self, fractions):
        """
        Mix every fracture parameter linearly by phase fraction.

        :rtype: FractureProps
        """
        fractions = _as_fractions(fractions)
        mixed = {}
        for f in fields(FractureProps):
            table = np.array([getattr(self._fracture[name], f.name) for name in PHASES])
            mixed[f.name] = fractions @ table

        return FractureProps(**mixed)


def hardness_fp(comp, cr700):
    """
    Vickers hardness of ferrite/pearlite from the cooling rate at 700 °C.

    :param cr700: cooling rate at 700 °C in °C/hour
    :raises MaterialError: if any ``cr700 <= 0``
    """
    cr700 = np.asarray(cr700, dtype=float)
    if np.any(cr700 <= 0):
        raise MaterialError("CR700 must be positive")

    return (
        42 + 223 * comp.C + 53 * comp.Si + 30 * comp.Mn + 12.6 * comp.Ni + 7 * comp.Cr
        + 19 * comp.Mo
        + (10 - 19 * comp.Si + 4 * comp.Ni + 8 * comp.Cr + 130 * comp.V) * np.log10(cr700)
    )  # fmt: skip


def hardness_b(comp, cr700):
    """
    Vickers hardness of bainite from the cooling rate at 700 °C.

    :param cr700: cooling rate at 700 °C in °C/hour
    :raises MaterialError: if any ``cr700 <= 0``
    """
    cr700 = np.asarray(cr700, dtype=float)
    if np.any(cr700 <= 0):
        raise MaterialError("CR700 must be positive")

    return (
        -323 + 185 * comp.C + 330 * comp.Si + 153 * comp.Mn + 65 * comp.Ni + 144 * comp.Cr
        + 191 * comp.Mo
        + (89 + 53 * comp.C - 55 * comp.Si - 22 * comp.Mn - 10 * comp.Ni + 20 * comp.Cr
           - 33 * comp.Mo) * np.log10(cr700)
    )  # fmt: skip


def hardness_mixture(state, comp, cr700):
    """
    Hardness of a ferrite/pearlite/bainite mixture.

    :raises MaterialError: if martensite is present
    """
    if np.any(state.X_m > 1e-6):
        raise MaterialError("no hardness correlation for martensite")

    return (state.X_f + state.X_p) * hardness_fp(comp, cr700) + state.X_b * hardness_b(comp, cr700)


def hardness_map(state, comp, cr700, fallback):
    """
    Hardness per material point.

    Points without a recorded cooling rate (NaN) get ``fallback``. Points holding martensite
    are reported as NaN.
    """
    cr700 = np.asarray(cr700, dtype=float)
    recorded = np.isfinite(cr700) & (cr700 > 0)
    safe = np.where(recorded, cr700, 1.0)
    hardness = (state.X_f + state.X_p) * hardness_fp(comp, safe)
    hardness = hardness + state.X_b * hardness_b(comp, safe)
    hardness = np.where(state.X_m > 1e-6, np.nan, hardness)
    return np.where(recorded, hardness, fallback)
