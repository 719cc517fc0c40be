"""
Solid-state transformation kinetics of low-alloy steels.

Austenite decomposes into ferrite, pearlite and bainite following isothermal transformation
times combined through the additivity rule, grows back on heating following a first order
relaxation towards its equilibrium fraction and transforms athermally into martensite below
the martensite start temperature. All functions are vectorized: phase states, temperatures and
compositions may hold one entry per material point.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .types import (
    FractionConsistencyError,
    MetallurgyError,
    NoDrivingForceError,
    PhaseState,
    SigmoidDomainError,
)

logger = logging.getLogger(__name__)

KELVIN = 273.15
R_GAS = 8.314462618
#: Activation temperature (K) shared by the three diffusive phases
Q_DIFFUSIVE = 13840.0
DIFFUSIVE_PHASES = ("ferrite", "pearlite", "bainite")
NUCLEATION_FRACTION = 0.01
COMPLETION_FRACTION = 0.999
#: Temperature change (°C) needed to switch between heating and cooling
DIRECTION_TOLERANCE = 0.01
#: Austenite fraction below which decomposition is complete
CONSUMED_FRACTION = 1e-12

# grain size exponent coefficient and undercooling exponent per phase
_TIME_EXPONENTS = {"ferrite": (0.41, 3), "pearlite": (0.32, 3), "bainite": (0.29, 2)}

# constant, C, Mn, Si, Ni, Cr, Mo
_COMPOSITION_COEFFICIENTS = {
    "ferrite": (1.0, 6.31, 1.78, 0.31, 1.12, 2.70, 4.06),
    "pearlite": (-4.25, 4.12, 4.36, 0.44, 1.71, 3.33, 0.36),
    "bainite": (-10.23, 10.18, 0.85, 0.0, 0.55, 0.90, 0.36),
}

_SIGMOID_NODES = 2048
_NEWTON_TOL = 1e-10
_NEWTON_MAX_ITER = 50


def _growth_function(x):
    return x ** (0.4 * (1 - x)) * (1 - x) ** (0.4 * x)


def _growth_log_derivative(x):
    return 0.4 * (-np.log(x) + (1 - x) / x + np.log1p(-x) - x / (1 - x))


@lru_cache(maxsize=None)
def _sigmoid_table():
    grid = COMPLETION_FRACTION * (np.arange(_SIGMOID_NODES) / (_SIGMOID_NODES - 1)) ** 3
    increments = np.empty(_SIGMOID_NODES - 1)
    # the first interval carries the x**-0.4 endpoint singularity as an algebraic weight
    increments[0] = quad(
        lambda x: x ** (0.4 * x) * (1 - x) ** (-0.4 * x),
        0.0, grid[1], weight="alg", wvar=(-0.4, 0.0), epsabs=0.0, epsrel=1e-12,
    )[0]  # fmt: skip
    for i in range(1, _SIGMOID_NODES - 1):
        increments[i] = quad(
            lambda x: 1.0 / _growth_function(x), grid[i], grid[i + 1], epsabs=0.0, epsrel=1e-12
        )[0]

    values = np.concatenate([[0.0], np.cumsum(increments)])
    logger.debug("tabulated the transformation sigmoid on %d nodes", _SIGMOID_NODES)
    return grid, values, PchipInterpolator(grid, values)


def sigmoid_S(X):
    """
    Integral of the reciprocal growth function from 0 to ``X``.

    Values come from a memoized table with monotone interpolation. Fractions between 0.999 and 1
    are treated as complete transformation and evaluated at 0.999.

    :param X: transformed fraction(s), ``0 <= X < 1``
    :raises SigmoidDomainError: if any ``X`` is negative or not below 1
    """
    X = np.asarray(X, dtype=float)
    if np.any(X < 0) or np.any(X >= 1) or np.any(np.isnan(X)):
        raise SigmoidDomainError("the sigmoid integral is only defined for 0 <= X < 1")

    grid, _values, interpolator = _sigmoid_table()
    X = np.minimum(X, COMPLETION_FRACTION)
    result = interpolator(X)
    # below the first node the integrand is x**-0.4 to leading order
    small = X < grid[1]
    result = np.where(small, X**0.6 / 0.6, result)
    return result[()] if result.ndim == 0 else result


def comp_factor(phase, comp):
    """
    Composition factor of the isothermal transformation time.

    :param str phase: ``ferrite``, ``pearlite`` or ``bainite``
    :param Composition comp: alloy chemistry
    """
    try:
        a0, c, mn, si, ni, cr, mo = _COMPOSITION_COEFFICIENTS[phase]
    except KeyError:
        raise MetallurgyError(f"unknown diffusive phase {phase!r}") from None

    return np.exp(
        a0 + c * comp.C + mn * comp.Mn + si * comp.Si + ni * comp.Ni + cr * comp.Cr + mo * comp.Mo
    )


def carbon_equivalent(comp):
    "IIW carbon equivalent (wt.%) of a composition."
    return comp.carbon_equivalent


def rate_constant(phase, T, comp, G, temps):
    """
    Kinetic rate ``k`` such that ``tau(X, T) = S(X) / k``.

    Points at or above the start temperature get ``k = 0``.
    """
    T = np.asarray(T, dtype=float)
    a, n = _TIME_EXPONENTS[phase]
    undercooling = np.maximum(temps.start_temperature(phase) - T, 0.0)
    return (
        2.0 ** (a * np.asarray(G, dtype=float))
        * undercooling**n
        * np.exp(-Q_DIFFUSIVE / (T + KELVIN))
        / comp_factor(phase, comp)
    )


def tau_isothermal(phase, X, T, comp, G, temps):
    """
    Isothermal time (s) to reach fraction ``X`` of ``phase`` at temperature ``T`` (°C).

    Undercoolings are °C differences, the Arrhenius term uses kelvin.

    :param G: ASTM grain size number of the parent austenite
    :param TransformationTemps temps: start temperatures
    :raises NoDrivingForceError: if ``T`` is not below the start temperature of ``phase``
    """
    if phase not in _TIME_EXPONENTS:
        raise MetallurgyError(f"unknown diffusive phase {phase!r}")

    X = np.asarray(X, dtype=float)
    if np.any(X <= 0):
        raise SigmoidDomainError("transformation times need 0 < X < 1")
    if np.any(np.asarray(T) >= temps.start_temperature(phase)):
        raise NoDrivingForceError(
            f"no driving force for {phase} at or above {temps.start_temperature(phase)} °C"
        )

    return sigmoid_S(X) / rate_constant(phase, T, comp, G, temps)


def astm_number(D):
    """
    ASTM grain size number of a mean grain diameter ``D`` in µm.

    :raises MetallurgyError: if ``D <= 0``
    """
    D = np.asarray(D, dtype=float)
    if np.any(D <= 0):
        raise MetallurgyError("grain diameter must be positive")

    result = 2.0 * np.log2(254.0 / D) + 1.0
    return result[()] if result.ndim == 0 else result


def grain_diameter(G):
    "Inverse of :func:`astm_number`."
    return 254.0 / 2.0 ** ((np.asarray(G, dtype=float) - 1.0) / 2.0)


def austenite_equilibrium(T, temps):
    "Equilibrium austenite fraction, linear between Ae1 and Ae3."
    return np.clip((np.asarray(T, dtype=float) - temps.Ae1) / (temps.Ae3 - temps.Ae1), 0.0, 1.0)


def austenitization_time(T, temps, bounds=(1.0, 0.05)):
    "Characteristic time of austenite formation, linear between Ae1 and Ae3."
    weight = austenite_equilibrium(T, temps)
    return bounds[0] + (bounds[1] - bounds[0]) * weight


def _backward_euler_growth(x_old, k, dt):
    """
    Solve ``x - x_old - dt * k * h(x) = 0`` on ``[x_old, 0.999]``.

    Points whose root lies beyond 0.999 return 1 (transformation complete).
    """
    lo = x_old.copy()
    hi = np.full_like(x_old, COMPLETION_FRACTION)
    complete = hi - x_old - dt * k * _growth_function(hi) <= 0
    x = np.where(complete, hi, x_old)
    active = ~complete & (k > 0)
    for _ in range(_NEWTON_MAX_ITER):
        if not active.any():
            break

        h = _growth_function(x)
        residual = x - x_old - dt * k * h
        lo = np.where(active & (residual < 0), x, lo)
        hi = np.where(active & (residual > 0), x, hi)
        slope = 1.0 - dt * k * h * _growth_log_derivative(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            candidate = x - residual / slope

        outside = ~np.isfinite(candidate) | (candidate <= lo) | (candidate >= hi)
        candidate = np.where(outside, 0.5 * (lo + hi), candidate)
        converged = np.abs(candidate - x) < _NEWTON_TOL
        x = np.where(active, candidate, x)
        active &= ~converged
    else:
        if active.any():
            raise MetallurgyError("backward Euler growth update did not converge")

    return np.where(complete, 1.0, x)


def decomposition_step(state, T, dt, comp, config):
    """
    Advance austenite decomposition over one time step.

    Ferrite, pearlite and bainite are updated in that order, each drawing on the austenite left
    by the previous one. A phase whose kinetic fraction is still zero accumulates its nucleation
    integral instead of growing.

    :param PhaseState state: state at the start of the step (not modified)
    :param T: end-of-step temperature (°C)
    :param float dt: time step (s)
    :param Composition comp: alloy chemistry (scalar or per point)
    :param KineticsConfig config: kinetic parameters
    :rtype: PhaseState
    """
    if not dt > 0:
        raise MetallurgyError("time step must be positive")

    new = state.copy()
    shape = new.shape
    T = np.broadcast_to(np.asarray(T, dtype=float), shape)
    temps = config.temps
    G = np.where(new.D > 0, astm_number(np.where(new.D > 0, new.D, 1.0)), comp.G_init)
    xf_eq = temps.ferrite_equilibrium(T)

    for phase, raw_name, nucl_name, target, share in (
        ("ferrite", "X_f_raw", "nucl_f", "X_f", xf_eq),
        ("pearlite", "X_p_raw", "nucl_p", "X_p", 1.0 - xf_eq),
        ("bainite", "X_b_raw", "nucl_b", "X_b", 1.0),
    ):
        window = (T < temps.start_temperature(phase)) & (T > temps.Ms) & (new.X_a > 0)
        if not window.any():
            continue

        raw = getattr(new, raw_name)
        nucl = getattr(new, nucl_name)
        k = np.where(window, rate_constant(phase, T, comp, G, temps), 0.0)

        with np.errstate(divide="ignore"):
            nucleation_time = sigmoid_S(NUCLEATION_FRACTION) / k

        nucleating = window & (raw == 0)
        nucl = np.where(nucleating & (k > 0), nucl + dt / nucleation_time, nucl)
        nucleated = nucleating & (nucl >= 1.0)
        growing = window & (raw > 0) & (raw < 1)

        raw_new = raw.copy()
        raw_new[nucleated] = NUCLEATION_FRACTION
        if growing.any():
            raw_new[growing] = _backward_euler_growth(raw[growing], k[growing], dt)

        if phase == "bainite":
            new.parent_b = np.where(nucleated, new.X_a, new.parent_b)
            parent = new.parent_b
        else:
            parent = new.parent

        increment = np.minimum(share * (raw_new - raw) * parent, new.X_a)
        increment = np.where(window, np.maximum(increment, 0.0), 0.0)
        setattr(new, raw_name, raw_new)
        setattr(new, nucl_name, nucl)
        setattr(new, target, getattr(new, target) + increment)
        new.X_a = new.X_a - increment

    consumed = new.X_a <= CONSUMED_FRACTION
    if consumed.any():
        new.X_a = np.where(consumed, 0.0, new.X_a)
        for name in ("nucl_f", "nucl_p", "nucl_b", "X_f_raw", "X_p_raw", "X_b_raw", "parent",
                     "parent_b"):  # fmt: skip
            setattr(new, name, np.where(consumed, 0.0, getattr(new, name)))

    _normalize(new)
    return new


def austenitize_step(state, T, dt, config):
    """
    Grow austenite towards its equilibrium fraction on heating.

    Points where the equilibrium fraction does not exceed the current austenite fraction are
    returned unchanged. New austenite consumes the other phases in proportion to their
    fractions; points starting from zero austenite get the initial grain diameter, and all
    decomposition variables are reset.

    :param PhaseState state: state at the start of the step (not modified)
    :param T: end-of-step temperature (°C)
    :param float dt: time step (s)
    :param KineticsConfig config: kinetic parameters
    :rtype: PhaseState
    """
    if not dt > 0:
        raise MetallurgyError("time step must be positive")

    new = state.copy()
    T = np.broadcast_to(np.asarray(T, dtype=float), new.shape)
    equilibrium = austenite_equilibrium(T, config.temps)
    heating = equilibrium > new.X_a + 1e-12
    if not heating.any():
        return new

    ratio = dt / austenitization_time(T, config.temps, config.tau_LD)
    X_a = np.where(heating, (new.X_a + ratio * equilibrium) / (1.0 + ratio), new.X_a)
    formed = X_a - new.X_a
    others = 1.0 - new.X_a
    with np.errstate(divide="ignore", invalid="ignore"):
        consumed = np.where(others > 0, formed / others, 0.0)

    for name in ("X_f", "X_p", "X_b", "X_m"):
        value = getattr(new, name)
        setattr(new, name, np.where(heating, value * (1.0 - consumed), value))

    new.D = np.where(heating & (new.X_a <= 0), config.D0, new.D)
    new.X_a = X_a
    for name in ("nucl_f", "nucl_p", "nucl_b", "X_f_raw", "X_p_raw", "X_b_raw", "parent_b"):
        setattr(new, name, np.where(heating, 0.0, getattr(new, name)))

    new.parent = np.where(heating, X_a, new.parent)
    new.X_a_ms = np.where(heating, -1.0, new.X_a_ms)
    _normalize(new)
    return new


def grain_growth_step(D, T, dt, config):
    """
    Implicit update of the austenite grain diameter (µm).

    The backward Euler equation is quadratic in the new diameter and solved in closed form.
    The result never decreases and never exceeds ``D_lim``.

    :raises MetallurgyError: if any ``D <= 0``
    """
    D = np.asarray(D, dtype=float)
    if np.any(D <= 0):
        raise MetallurgyError("grain diameter must be positive")

    T = np.asarray(T, dtype=float)
    c = dt * config.A_gg * np.exp(-config.Q_gg / (R_GAS * (T + KELVIN)))
    b = D - c / config.D_lim
    D_new = 0.5 * (b + np.sqrt(b * b + 4.0 * c))
    result = np.clip(D_new, D, np.maximum(D, config.D_lim))
    return result[()] if result.ndim == 0 else result


def martensite_step(state, T, config):
    """
    Athermal martensite formation below the martensite start temperature.

    The austenite fraction at the first crossing of Ms is remembered; the remaining austenite
    follows ``X_a_ms * exp(-b * (Ms - T))``. Returns an unchanged copy unless martensite is
    enabled in ``config``.
    """
    new = state.copy()
    if not config.km_enabled:
        return new

    T = np.broadcast_to(np.asarray(T, dtype=float), new.shape)
    Ms = config.temps.Ms
    below = T < Ms
    new.X_a_ms = np.where(below & (new.X_a_ms < 0), new.X_a, new.X_a_ms)
    remaining = new.X_a_ms * np.exp(-config.km_b * np.maximum(Ms - T, 0.0))
    formed = np.where(below, np.clip(new.X_a - remaining, 0.0, None), 0.0)
    new.X_m = new.X_m + formed
    new.X_a = new.X_a - formed
    _normalize(new)
    return new


def thermal_direction(state, T, equilibrium, tol=DIRECTION_TOLERANCE):
    """
    Boolean array, True where a point is heating.

    The direction flips only once the temperature has moved more than ``tol`` °C away from
    ``state.T_ref`` and is kept during holds. Points without a history count as heating when
    their equilibrium austenite exceeds the current fraction.
    """
    fallback = equilibrium > state.X_a + 1e-12
    previous = np.where(np.isnan(state.heating), fallback, state.heating > 0.5)
    with np.errstate(invalid="ignore"):
        change = T - state.T_ref
        return np.where(change > tol, True, np.where(change < -tol, False, previous))


def transformation_step(state, T, dt, comp, config):
    """
    Full metallurgical update of one time step.

    Each point austenitizes while heating below its equilibrium austenite fraction and
    decomposes otherwise, then forms martensite when enabled, and grows its austenite grains
    above Ae1. A cooling point never returns to austenitization, so an interrupted
    decomposition keeps its kinetic state.

    :rtype: PhaseState
    """
    T = np.broadcast_to(np.asarray(T, dtype=float), state.shape)
    equilibrium = austenite_equilibrium(T, config.temps)
    heating = thermal_direction(state, T, equilibrium)
    austenitizing = heating & (equilibrium > state.X_a + 1e-12)
    if austenitizing.all():
        new = austenitize_step(state, T, dt, config)
    elif austenitizing.any():
        new = decomposition_step(state, T, dt, comp, config).where(
            austenitizing, austenitize_step(state, T, dt, config)
        )
    else:
        new = decomposition_step(state, T, dt, comp, config)

    new = martensite_step(new, T, config)
    growing = (new.X_a > 0) & (T > config.temps.Ae1) & (new.D > 0)
    if growing.any():
        grown = grain_growth_step(np.where(growing, new.D, 1.0), T, dt, config)
        new.D = np.where(growing, grown, new.D)

    with np.errstate(invalid="ignore"):
        moved = ~(np.abs(T - state.T_ref) <= DIRECTION_TOLERANCE)
    new.T_ref = np.where(moved, T, state.T_ref)
    new.heating = heating.astype(float)
    return new


def _normalize(state, tol=1e-9):
    fractions = state.fractions()
    if np.any(fractions < -tol):
        raise FractionConsistencyError("negative phase fraction after kinetic update")

    fractions = np.clip(fractions, 0.0, 1.0)
    fractions /= fractions.sum(axis=-1, keepdims=True)
    state.X_f, state.X_p, state.X_b, state.X_m, state.X_a = np.moveaxis(fractions, -1, 0)


@dataclass
class TTTDiagram:
    "Isothermal transformation curves, one per phase and fraction level."

    curves: dict = field(default_factory=dict)

    def rows(self):
        for (phase, level), (temperatures, times) in self.curves.items():
            for T, t in zip(temperatures, times):
                yield phase, level, float(T), float(t)

    columns = ("phase", "fraction_level", "T_degC", "time_s")
    units = ("-", "-", "degC", "s")


def generate_ttt(comp, temps, G, fractions=(0.001, 0.999), points=120):
    """
    Sample isothermal transformation times over each phase's temperature window.

    The window of every phase runs from Ms up to (excluding) its start temperature.

    :param fractions: fraction levels in ``(0, 1)``
    :rtype: TTTDiagram
    """
    levels = [float(x) for x in fractions]
    if any(not 0 < x < 1 for x in levels):
        raise MetallurgyError("fraction levels must lie in (0, 1)")

    diagram = TTTDiagram()
    for phase in DIFFUSIVE_PHASES:
        start = temps.start_temperature(phase)
        if not start > temps.Ms:
            raise MetallurgyError(f"empty temperature window for {phase}")

        temperatures = np.linspace(temps.Ms, start, points + 1)[:-1]
        for level in levels:
            times = tau_isothermal(phase, level, temperatures, comp, G, temps)
            diagram.curves[(phase, level)] = (temperatures, times)

    return diagram


@dataclass
class CCTRun:
    "Result of one continuous cooling simulation."

    rate: float
    final: PhaseState
    intervals: dict
    cr700: float
    hardness: object


@dataclass
class CCTDiagram:
    runs: list = field(default_factory=list)

    columns = ("rate_degC_s", "phase", "T_start_degC", "T_end_degC", "final_fraction", "HV")
    units = ("degC/s", "-", "degC", "degC", "-", "HV")

    def rows(self):
        for run in self.runs:
            fractions = dict(
                zip(("ferrite", "pearlite", "bainite", "martensite", "austenite"),
                    run.final.fractions().tolist())
            )  # fmt: skip
            for phase in ("ferrite", "pearlite", "bainite", "martensite"):
                start, end = run.intervals.get(phase, (np.nan, np.nan))
                hv = np.nan if run.hardness is None else run.hardness
                yield run.rate, phase, start, end, fractions[phase], hv


def generate_cct(comp, temps, config, rates, T_start=None, T_end=20.0, max_dt=1.0):
    """
    Simulate linear cooling from a fully austenitic state at each rate.

    The time step never lets the temperature change by more than 0.5 °C.

    :param rates: cooling rates in °C/s (negative)
    :param KineticsConfig config: kinetic parameters (``config.temps`` should be ``temps``)
    :rtype: CCTDiagram
    """
    from .materials import hardness_mixture

    rates = [float(r) for r in rates]
    if any(r >= 0 for r in rates):
        raise MetallurgyError("cooling rates must be negative")

    if T_start is None:
        T_start = temps.Ae3 + 50.0

    diagram = CCTDiagram()
    for rate in rates:
        dt = min(max_dt, 0.5 / abs(rate))
        steps = int(np.ceil((T_start - T_end) / (abs(rate) * dt)))
        dt = (T_start - T_end) / (abs(rate) * steps)
        state = PhaseState.austenitic(D=config.D0)
        intervals = {}
        for i in range(1, steps + 1):
            T = T_start + rate * dt * i
            previous = state.fractions()
            state = transformation_step(state, T, dt, comp, config)
            grown = state.fractions() - previous
            for phase, delta in zip(("ferrite", "pearlite", "bainite", "martensite"), grown[:4]):
                if delta > 1e-9:
                    first = intervals.get(phase, (T, T))[0]
                    intervals[phase] = (first, T)

        cr700 = abs(rate) * 3600.0
        hardness = None if state.X_m > 1e-6 else float(hardness_mixture(state, comp, cr700))
        logger.info("CCT %g °C/s: final fractions %s", rate, np.round(state.fractions(), 4))
        diagram.runs.append(CCTRun(rate, state, intervals, cr700, hardness))

    return diagram
