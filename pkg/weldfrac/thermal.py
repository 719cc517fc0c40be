"""
Transient heat conduction coupled to the transformation kinetics.

Properties are mixed per integration point from the current phase fractions. Exposed sides
lose heat by convection and radiation; prescribed-temperature programs stand in for the
welding torch.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (
    assemble_matrix,
    assemble_vector,
    newton_solve,
    orphan_dofs,
    rigid_modes,
    side_integration,
    staggered_step,
)
from .metallurgy import transformation_step
from .types import PhaseState

logger = logging.getLogger(__name__)

#: Temperature (°C) at which the cooling rate is recorded for hardness estimates
CR700_TEMPERATURE = 700.0


@dataclass(frozen=True)
class ThermalBC:
    """
    Surface heat loss and the insulated side sets.

    :param float h_c: convective coefficient (W/(m²·K))
    :param float T0: ambient temperature (°C)
    :param float emissivity: surface emissivity
    :param float sigma_SB: Stefan-Boltzmann constant (W/(m²·K⁴))
    :param float T_Z: absolute zero (°C)
    :param tuple insulated: names of side sets without heat loss
    """

    h_c: float = 15.0
    T0: float = 20.0
    emissivity: float = 0.8
    sigma_SB: float = 5.670374419e-8
    T_Z: float = -273.15
    insulated: tuple = ()

    def __post_init__(self):
        if not 0 <= self.emissivity <= 1:
            raise ValueError("emissivity must lie in [0, 1]")
        if self.h_c < 0:
            raise ValueError("h_c must be non-negative")
        if self.sigma_SB < 0:
            raise ValueError("sigma_SB must be non-negative")

    def flux(self, T):
        "Outward heat flux density (W/m²) at surface temperature ``T``."
        T = np.asarray(T, dtype=float)
        radiative = self.emissivity * self.sigma_SB * (
            (T - self.T_Z) ** 4 - (self.T0 - self.T_Z) ** 4
        )
        return self.h_c * (T - self.T0) + radiative

    def flux_derivative(self, T):
        T = np.asarray(T, dtype=float)
        return self.h_c + 4 * self.emissivity * self.sigma_SB * (T - self.T_Z) ** 3


@dataclass(frozen=True, eq=False)
class TemperatureProgram:
    """
    Prescribed nodal temperatures ramping linearly from their initial values to ``target``
    over ``duration`` seconds starting at ``start``, held afterwards.
    """

    nodes: np.ndarray
    initial: np.ndarray
    target: float
    duration: float
    start: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("program duration must be positive")

    @classmethod
    def ramp(cls, nodes, T, target, duration, start=0.0):
        "Program starting from the current nodal temperatures ``T``."
        nodes = np.asarray(nodes, dtype=np.int64)
        return cls(nodes, np.asarray(T, dtype=float)[nodes].copy(), float(target),
                   float(duration), float(start))  # fmt: skip

    @property
    def end(self):
        return self.start + self.duration

    def values(self, time):
        fraction = np.clip((time - self.start) / self.duration, 0.0, 1.0)
        return self.initial + fraction * (self.target - self.initial)


def prescribed_temperatures(programs, time):
    """
    Combine temperature programs into ``(nodes, values)``; later programs win on shared nodes.
    """
    if not programs:
        return None

    values = {}
    for program in programs:
        values.update(zip(program.nodes.tolist(), program.values(time).tolist()))

    nodes = np.fromiter(values, dtype=np.int64, count=len(values))
    return nodes, np.fromiter(values.values(), dtype=float, count=len(values))


def surface_sides(mesh, insulated=()):
    "Exterior sides of the active elements minus the listed insulated side sets."
    sides = mesh.exterior_sides()
    if not insulated or not sides.size:
        return sides

    excluded = np.concatenate([mesh.side_set(name) for name in insulated])
    keep = ~np.isin(sides[:, 0] * 4 + sides[:, 1], excluded[:, 0] * 4 + excluded[:, 1])
    return sides[keep]


def _fractions(phases, active):
    if isinstance(phases, PhaseState):
        return phases.fractions()[active]

    return np.asarray(phases, dtype=float)[active]


def thermal_step(mesh, geometry, T_old, phases, dt, bc, db, prescribed=None, T_start=None,
                 tol=1e-8, max_iter=40, method="direct"):  # fmt: skip
    """
    Backward Euler step of ``rho c dT/dt = div(k grad T)`` with surface losses.

    Conductivity and heat capacity are mixed from ``phases`` at the current iterate. The
    radiative tangent is exact; property changes within the step are lagged in the tangent.
    Nodes outside the active elements keep their temperature.

    :param T_old: nodal temperatures at the start of the step (°C)
    :param phases: :class:`~weldfrac.types.PhaseState` or fractions ``(m, 9, 5)`` at the
        integration points
    :param ThermalBC bc: surface conditions
    :param prescribed: optional ``(nodes, values)`` of prescribed temperatures
    :param T_start: Newton starting point (default ``T_old``)
    :returns: ``(T_new, Newton iterations)``
    :raises ConvergenceError: if Newton fails
    """
    if not dt > 0:
        raise ValueError("time step must be positive")

    T_old = np.asarray(T_old, dtype=float)
    active = np.flatnonzero(mesh.active)
    fractions = _fractions(phases, active)
    conn = mesh.elements[active]
    N = geometry.N
    w = geometry.weights[active]
    dNdx = geometry.dNdx[active]
    sides = surface_sides(mesh, bc.insulated)
    size = mesh.num_nodes

    fixed = [orphan_dofs(mesh)]
    T = (T_old if T_start is None else np.asarray(T_start, dtype=float)).copy()
    if prescribed is not None:
        nodes, values = prescribed
        T[nodes] = values
        fixed.append(np.asarray(nodes, dtype=np.int64))
    fixed = np.unique(np.concatenate(fixed))

    if sides.size:
        side_nodes, Ns, ws = side_integration(mesh, sides)
        rows = np.repeat(side_nodes, 3, axis=1).ravel()
        cols = np.tile(side_nodes, (1, 3)).ravel()

    def capacity(T_ip):
        return db.mix("rho", fractions, T_ip) * db.mix("c", fractions, T_ip)

    def residual(T):
        T_e = T[conn]
        T_ip = T_e @ N.T
        M_e = np.einsum("eq,qa,qb->eab", w * capacity(T_ip) / dt, N, N)
        K_e = np.einsum("eq,eqai,eqbi->eab", w * db.mix("k", fractions, T_ip), dNdx, dNdx)
        r_e = np.einsum("eab,eb->ea", M_e, T_e - T_old[conn]) + np.einsum("eab,eb->ea", K_e, T_e)
        r = assemble_vector(mesh, r_e, active)
        A = assemble_matrix(mesh, M_e + K_e, active)
        if sides.size:
            T_s = T[side_nodes] @ Ns.T
            r += np.bincount(
                side_nodes.ravel(),
                weights=np.einsum("kq,qa->ka", ws * bc.flux(T_s), Ns).ravel(),
                minlength=size,
            )
            S_e = np.einsum("kq,qa,qb->kab", ws * bc.flux_derivative(T_s), Ns, Ns)
            A = A + sp.coo_matrix((S_e.ravel(), (rows, cols)), shape=(size, size)).tocsr()
        return r, A

    lumped = assemble_vector(
        mesh,
        np.einsum("eq,qa->ea", w * capacity(T_old[conn] @ N.T) / dt, np.abs(N)),
        active,
    )
    atol = 1e-12 * np.linalg.norm(lumped * (np.abs(T_old) - bc.T_Z))
    result = newton_solve(residual, T, tol=tol, max_iter=max_iter, fixed=fixed, atol=atol,
                          method=method, modes=rigid_modes(mesh, 1))  # fmt: skip
    return result.x, result.iterations


@dataclass
class CoupledStepResult:
    T: np.ndarray
    phases: PhaseState
    passes: int
    newton_iterations: int = 0
    cooling: dict = field(default_factory=dict)


def thermometallurgical_step(mesh, geometry, T_old, phases, dt, bc, db, comp, kinetics,
                             prescribed=None, tol=0.1, max_passes=10, **options):  # fmt: skip
    """
    Heat conduction and transformation kinetics iterated to a common end-of-step state.

    Each pass solves the thermal step with the latest phase fractions, then recomputes the
    kinetics from the start-of-step phase state with the new temperatures. Passes repeat
    until the nodal temperatures change by less than ``tol`` °C.

    :param phases: start-of-step :class:`~weldfrac.types.PhaseState` ``(m, 9)``
    :param comp: :class:`~weldfrac.types.Composition`, scalar or per integration point
    :param kinetics: :class:`~weldfrac.types.KineticsConfig`
    :param options: passed on to :func:`thermal_step`
    :rtype: CoupledStepResult
    :raises ConvergenceError: if a thermal solve or the fixed point fails
    """
    active = np.flatnonzero(mesh.active)
    comp_active = comp.take(active)
    phases_active = phases.take(active)
    current = {"T": np.asarray(T_old, dtype=float).copy(), "phases": phases, "iterations": 0}

    def thermal_pass():
        T_new, iterations = thermal_step(
            mesh, geometry, T_old, current["phases"], dt, bc, db, prescribed,
            T_start=current["T"], **options,
        )  # fmt: skip
        change = float(np.max(np.abs(T_new - current["T"]), initial=0.0))
        current["T"] = T_new
        current["iterations"] += iterations
        T_ip = geometry.interpolate(T_new)[active]
        new = phases.copy()
        new.put(active, transformation_step(phases_active, T_ip, dt, comp_active, kinetics))
        current["phases"] = new
        return change

    passes = staggered_step([thermal_pass], tol=tol, max_passes=max_passes)
    logger.debug(
        "thermo-metallurgical step: %d passes, %d Newton iterations, max T %.1f °C",
        passes,
        current["iterations"],
        current["T"].max(),
    )
    return CoupledStepResult(current["T"], current["phases"], passes, current["iterations"])


def update_cooling_rate(cr700, T_old, T_new, dt, threshold=CR700_TEMPERATURE):
    """
    Record the cooling rate (°C/hour) where the temperature falls through ``threshold``.

    Later crossings overwrite earlier ones, so a reheated point keeps the rate of its final
    cooling. Points that never cross keep their previous value (NaN initially).
    """
    T_old = np.asarray(T_old, dtype=float)
    T_new = np.asarray(T_new, dtype=float)
    crossing = (T_old > threshold) & (T_new <= threshold)
    return np.where(crossing, (T_old - T_new) / dt * 3600.0, cr700)


def record_cooling_rate(times, temperatures, threshold=CR700_TEMPERATURE):
    """
    Cooling rate (°C/hour) at the final downward crossing of ``threshold``.

    :param times: increasing sample times (s), shape ``(n,)``
    :param temperatures: temperatures (°C), shape ``(n, ...)``
    :returns: rate per trajectory, NaN where the trajectory never cools through ``threshold``
    """
    times = np.asarray(times, dtype=float)
    temperatures = np.asarray(temperatures, dtype=float)
    if times.ndim != 1 or temperatures.shape[0] != times.shape[0]:
        raise ValueError("times and temperatures must share their first dimension")

    rate = np.full(temperatures.shape[1:], np.nan)
    for i in range(len(times) - 1):
        rate = update_cooling_rate(
            rate, temperatures[i], temperatures[i + 1], times[i + 1] - times[i], threshold
        )

    return rate[()] if rate.ndim == 0 else rate


__all__ = [
    "CR700_TEMPERATURE",
    "CoupledStepResult",
    "TemperatureProgram",
    "ThermalBC",
    "prescribed_temperatures",
    "record_cooling_rate",
    "surface_sides",
    "thermal_step",
    "thermometallurgical_step",
    "update_cooling_rate",
]
