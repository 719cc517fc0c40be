from collections.abc import Mapping
from dataclasses import dataclass, field, fields

import numpy as np

PHASES = ("ferrite", "pearlite", "bainite", "martensite", "austenite")


class WeldfracError(Exception):
    "Base class for errors raised by weldfrac."


class ConfigError(WeldfracError, ValueError):
    """
    Raised when a configuration file cannot be accepted.

    Every violation found is collected before raising; ``violations`` holds ``(path, message)``
    pairs where ``path`` is the dotted location inside the configuration tree.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [("", violations)]

        self.violations = list(violations)
        lines = [f"{path}: {message}" if path else message for path, message in self.violations]
        super().__init__(
            f"{len(self.violations)} configuration error(s):\n  " + "\n  ".join(lines)
        )


class MetallurgyError(WeldfracError, ValueError):
    "Raised for invalid arguments to the transformation kinetics."


class NoDrivingForceError(MetallurgyError):
    "Raised when a transformation time is requested at or above the phase start temperature."


class SigmoidDomainError(MetallurgyError):
    "Raised when the sigmoid integral is evaluated outside ``0 <= X < 1``."


class FractionConsistencyError(MetallurgyError):
    "Raised when a kinetic update produces a negative phase fraction."


class MaterialError(WeldfracError, ValueError):
    "Raised for unknown property ids and invalid hardness inputs."


class MeshError(WeldfracError, ValueError):
    "Raised for malformed meshes, unknown sets and degenerate elements."


class SolverError(WeldfracError):
    "Base class for failures of the numerical solvers."


class SingularSystemError(SolverError):
    """
    Raised when a linear system cannot be factorized.

    :param str message: description of the failure
    :param rigid_modes: names of the rigid body modes left unconstrained
    """

    def __init__(self, message, rigid_modes=()):
        self.rigid_modes = tuple(rigid_modes)
        if self.rigid_modes:
            message = f"{message} (unconstrained modes: {', '.join(self.rigid_modes)})"

        super().__init__(message)


class ConvergenceError(SolverError):
    """
    Raised when an iterative solve does not converge.

    Drivers catch this to bisect the time step.
    """

    def __init__(self, message, iterations=None, residual=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class StaggeredConvergenceError(ConvergenceError):
    "Raised when a staggered fixed-point loop exceeds its pass limit."


class ScenarioError(WeldfracError):
    "Base class for failures of a scenario run."


class ScenarioInvariantError(ScenarioError):
    "Raised when a scenario precondition or invariant is violated."


class SSYViolationError(ScenarioInvariantError):
    "Raised when plastic flow reaches the outer rim of a boundary-layer model."


class PropertyRangeWarning(UserWarning):
    "Emitted when a property table is evaluated outside its tabulated temperature range."


def _nonnegative(name, value):
    if np.any(np.asarray(value) < 0):
        raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class Composition:
    """
    Alloy chemistry in wt.%.

    Fields may be scalars or arrays of equal shape (one entry per material point), which is how
    weld metal and base metal with different chemistries share one kinetic update.
    """

    C: float = 0.0
    Si: float = 0.0
    Mn: float = 0.0
    Ni: float = 0.0
    Cr: float = 0.0
    Mo: float = 0.0
    V: float = 0.0
    Cu: float = 0.0
    G_init: float = 9.0

    def __post_init__(self):
        total = 0.0
        for f in fields(self):
            if f.name != "G_init":
                value = getattr(self, f.name)
                _nonnegative(f.name, value)
                total = total + np.asarray(value, dtype=float)

        if np.any(total >= 100):
            raise ValueError("the sum of alloying elements must be below 100 wt.%")

    @property
    def carbon_equivalent(self):
        "IIW carbon equivalent."
        return self.C + self.Mn / 6 + (self.Cr + self.Mo + self.V) / 5 + (self.Ni + self.Cu) / 15

    def take(self, index):
        "Composition of the points selected by ``index`` (scalar fields are kept as they are)."
        values = {}
        for f in fields(self):
            value = getattr(self, f.name)
            values[f.name] = value if np.ndim(value) == 0 else np.asarray(value)[index]

        return Composition(**values)

    def select(self, mask, other):
        """
        Blend two compositions point by point.

        :param mask: boolean array, ``True`` where ``other`` applies
        :param Composition other: composition used where ``mask`` is set
        :rtype: Composition
        """
        mask = np.asarray(mask, dtype=bool)
        values = {
            f.name: np.where(mask, getattr(other, f.name), getattr(self, f.name))
            for f in fields(self)
        }
        return Composition(**values)


@dataclass(frozen=True)
class TransformationTemps:
    """
    Start temperatures (°C) and the equilibrium ferrite fraction.

    ``Xf_eq`` is either a constant or a pair of sequences ``(temperatures, fractions)``.
    """

    Ae1: float
    Ae3: float
    Bs: float
    Ms: float
    Xf_eq: object = 0.75

    def __post_init__(self):
        if not self.Ae1 < self.Ae3:
            raise ValueError("Ae1 must be below Ae3")
        if not self.Bs < self.Ae1:
            raise ValueError("Bs must be below Ae1")
        if not self.Ms < self.Bs:
            raise ValueError("Ms must be below Bs")

        if np.isscalar(self.Xf_eq):
            values = np.asarray([self.Xf_eq], dtype=float)
        else:
            temperatures, values = (np.asarray(a, dtype=float) for a in self.Xf_eq)
            if temperatures.shape != values.shape or np.any(np.diff(temperatures) <= 0):
                raise ValueError("Xf_eq table temperatures must be strictly increasing")

        if np.any((values < 0) | (values > 1)):
            raise ValueError("Xf_eq must lie in [0, 1]")

    def ferrite_equilibrium(self, T):
        "Equilibrium ferrite fraction at ``T``."
        if np.isscalar(self.Xf_eq):
            return np.full(np.shape(T), float(self.Xf_eq))

        temperatures, values = self.Xf_eq
        return np.interp(T, temperatures, values)

    def start_temperature(self, phase):
        return {"ferrite": self.Ae3, "pearlite": self.Ae1, "bainite": self.Bs}[phase]


@dataclass(frozen=True)
class KineticsConfig:
    """
    Parameters of the transformation kinetics.

    Grain sizes are in µm, ``A_gg`` in µm²/s and ``Q_gg`` in J/mol.
    """

    temps: TransformationTemps
    D0: float = 20.0
    D_lim: float = 150.0
    A_gg: float = 4.0e8
    Q_gg: float = 190.0e3
    tau_LD: tuple = (1.0, 0.05)
    km_enabled: bool = False
    km_b: float = 0.011

    def __post_init__(self):
        if not self.D0 > 0:
            raise ValueError("D0 must be positive")
        if not self.D_lim > self.D0:
            raise ValueError("D_lim must exceed D0")
        if len(self.tau_LD) != 2 or min(self.tau_LD) <= 0:
            raise ValueError("tau_LD needs two positive endpoints")
        if self.A_gg < 0 or self.km_b < 0:
            raise ValueError("A_gg and km_b must be non-negative")


class PhaseState:
    """
    Phase fractions and kinetic variables of one or many material points.

    Every attribute is a float array of the same shape; scalars are stored as 0-d arrays.

    ``X_*_raw`` are the unconstrained fractions integrated by the kinetic equations,
    ``parent`` the austenite available when the current decomposition cycle started,
    ``parent_b`` the austenite available when bainite nucleated and ``X_a_ms`` the austenite
    present when the martensite start temperature was first crossed (negative before that).
    ``T_ref`` is the temperature (°C) at which the thermal direction was last updated and
    ``heating`` that direction (1 heating, 0 cooling); both are NaN before the first step.
    """

    __slots__ = (
        "X_f", "X_p", "X_b", "X_m", "X_a", "D",
        "nucl_f", "nucl_p", "nucl_b",
        "X_f_raw", "X_p_raw", "X_b_raw",
        "parent", "parent_b", "X_a_ms",
        "T_ref", "heating",
    )  # fmt: skip

    def __init__(self, X_f=0.0, X_p=0.0, X_b=0.0, X_m=0.0, X_a=0.0, D=20.0, **kinetic):
        shape = np.broadcast(
            *(np.asarray(v) for v in (X_f, X_p, X_b, X_m, X_a, D, *kinetic.values()))
        ).shape
        defaults = dict(
            nucl_f=0.0, nucl_p=0.0, nucl_b=0.0,
            X_f_raw=0.0, X_p_raw=0.0, X_b_raw=0.0,
            parent=X_a, parent_b=0.0, X_a_ms=-1.0,
            T_ref=np.nan, heating=np.nan,
        )  # fmt: skip
        unknown = set(kinetic) - set(defaults)
        if unknown:
            raise TypeError(f"unexpected fields: {', '.join(sorted(unknown))}")

        defaults.update(kinetic)
        values = dict(X_f=X_f, X_p=X_p, X_b=X_b, X_m=X_m, X_a=X_a, D=D, **defaults)
        for name in self.__slots__:
            array = np.array(np.broadcast_to(np.asarray(values[name], dtype=float), shape))
            object.__setattr__(self, name, array)

    @classmethod
    def austenitic(cls, shape=(), D=20.0):
        "Fully austenitic state with grain diameter ``D`` (µm)."
        return cls(X_a=np.ones(shape), D=D)

    @classmethod
    def from_fractions(cls, fractions, D=20.0):
        """
        Build a state from a mapping of phase name to fraction.

        :param fractions: e.g. ``{"ferrite": 0.75, "pearlite": 0.25}``
        """
        unknown = set(fractions) - set(PHASES)
        if unknown:
            raise ValueError(f"unknown phases: {', '.join(sorted(unknown))}")

        keys = dict(zip(PHASES, ("X_f", "X_p", "X_b", "X_m", "X_a")))
        return cls(D=D, **{keys[name]: value for name, value in fractions.items()})

    @property
    def shape(self):
        return self.X_a.shape

    def copy(self):
        new = object.__new__(PhaseState)
        for name in self.__slots__:
            object.__setattr__(new, name, getattr(self, name).copy())

        return new

    def fractions(self):
        "Phase fractions stacked along a trailing axis in :data:`PHASES` order."
        return np.stack([self.X_f, self.X_p, self.X_b, self.X_m, self.X_a], axis=-1)

    def where(self, mask, other):
        "Return a state taking ``other`` where ``mask`` is set and ``self`` elsewhere."
        new = object.__new__(PhaseState)
        for name in self.__slots__:
            value = np.where(mask, getattr(other, name), getattr(self, name))
            object.__setattr__(new, name, value)

        return new

    def put(self, index, other):
        "Overwrite the points selected by ``index`` in place with ``other``."
        for name in self.__slots__:
            getattr(self, name)[index] = getattr(other, name)

    def take(self, index):
        new = object.__new__(PhaseState)
        for name in self.__slots__:
            object.__setattr__(new, name, np.array(getattr(self, name)[index]))

        return new

    def validate(self, tol=1e-9):
        "Check fraction bounds and conservation; raise :exc:`FractionConsistencyError`."
        fractions = self.fractions()
        if np.any(fractions < -tol) or np.any(fractions > 1 + tol):
            raise FractionConsistencyError("phase fraction outside [0, 1]")
        if np.any(np.abs(fractions.sum(axis=-1) - 1) > tol):
            raise FractionConsistencyError("phase fractions do not sum to 1")
        if np.any((self.X_a > 0) & (self.D <= 0)):
            raise FractionConsistencyError("austenite present with non-positive grain size")

    def __eq__(self, other):
        if isinstance(other, PhaseState):
            return all(
                np.array_equal(getattr(self, n), getattr(other, n), equal_nan=True)
                for n in self.__slots__
            )
        return NotImplemented

    __hash__ = None

    def __repr__(self):
        if self.shape:
            return f"PhaseState(shape={self.shape})"

        parts = ", ".join(
            f"{name}={float(getattr(self, name)):.4g}"
            for name in ("X_f", "X_p", "X_b", "X_m", "X_a", "D")
        )
        return f"PhaseState({parts})"


class FrozenDict(Mapping):
    """
    A hashable, immutable mapping used for configuration trees.

    Nested mappings and lists are frozen recursively on construction.
    """

    __slots__ = ("_d", "_hash")

    def __init__(self, *args, **kwargs):
        self._d = {key: freeze(value) for key, value in dict(*args, **kwargs).items()}
        self._hash = None

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __getitem__(self, key):
        return self._d[key]

    def __repr__(self):
        return f"{self.__class__.__name__}({self._d})"

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(sorted(self._d.items(), key=lambda item: item[0])))
        return self._hash

    def thaw(self):
        "Return a plain, mutable copy (dicts and lists)."
        return thaw(self)


def freeze(value):
    if isinstance(value, FrozenDict):
        return value
    if isinstance(value, Mapping):
        return FrozenDict(value)
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v) for v in value)
    return value


def thaw(value):
    if isinstance(value, Mapping):
        return {key: thaw(v) for key, v in value.items()}
    if isinstance(value, tuple):
        return [thaw(v) for v in value]
    return value


@dataclass
class RunStatistics:
    "Solver counters collected while a scenario runs."

    increments: int = 0
    newton_iterations: int = 0
    staggered_passes: int = 0
    bisections: int = 0
    dt_history: list = field(default_factory=list)

    def as_dict(self):
        return {
            "increments": self.increments,
            "newton_iterations": self.newton_iterations,
            "staggered_passes": self.staggered_passes,
            "bisections": self.bisections,
            "dt_min": min(self.dt_history) if self.dt_history else None,
            "dt_max": max(self.dt_history) if self.dt_history else None,
        }
