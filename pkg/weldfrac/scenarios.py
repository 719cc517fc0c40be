"""
Scenario drivers.

:func:`run_weld` deposits weld beads on a mesh and returns the microstructure, hardness and
residual stress fields; :func:`run_pressurization` loads a (welded) pipe section by an inner
radial displacement with optional hydrogen uptake until it fractures or collapses.
:func:`run_ssy_jr` derives a J-R curve on a boundary-layer model and :func:`run_dilatometry`
drives a single material point through a thermal cycle.

All inputs are SI (m, Pa, s) with temperatures in °C.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fem import (
    ElementGeometry,
    FieldState,
    activate_elements,
    advance,
    deactivate_elements,
    next_time_step,
    staggered_step,
)
from .fracture import (
    BETA,
    FractureModel,
    check_resolution,
    crack_extension,
    crack_path,
    crack_surface_energy,
    sievert_concentration,
    through_ligament,
)
from .materials import hardness_map
from .mechanics import MechanicsModel, eigenstrain, hoop_stress
from .metallurgy import transformation_step
from .thermal import (
    TemperatureProgram,
    ThermalBC,
    prescribed_temperatures,
    thermometallurgical_step,
    update_cooling_rate,
)
from .types import (
    PHASES,
    FrozenDict,
    PhaseState,
    RunStatistics,
    ScenarioError,
    ScenarioInvariantError,
    SSYViolationError,
)

logger = logging.getLogger(__name__)

#: As-received base metal microstructure
INITIAL_MICROSTRUCTURE = FrozenDict({"ferrite": 0.75, "pearlite": 0.25})
#: Offset of the construction line used for J_Ic (m)
OFFSET = 0.2e-3


def uniform_state(fractions, shape, D=20.0):
    "Phase state of ``shape`` material points sharing the ``fractions`` mapping."
    return PhaseState.from_fractions(
        {name: np.full(shape, float(value)) for name, value in fractions.items()}, D=D
    )


def uniform_fractions(fractions, shape):
    return uniform_state(fractions, shape).fractions()


#
# Welding
#


@dataclass(frozen=True)
class WeldPass:
    """
    One weld bead.

    :param str bead: element set deposited by the pass
    :param str fusion: node set heated by the torch before deposition
    :param float insertion_temperature: temperature of the deposited metal (°C)
    :param float ramp: torch heating time (s)
    :param float cooldown: cooling time after deposition (s)
    """

    bead: str
    fusion: str
    insertion_temperature: float = 1500.0
    ramp: float = 3.0
    cooldown: float = 120.0

    def __post_init__(self):
        if not self.ramp > 0 or not self.cooldown > 0:
            raise ValueError("ramp and cooldown durations must be positive")


@dataclass(frozen=True)
class WeldSettings:
    """
    Materials, surface conditions and time stepping of a weld simulation.

    :param db: :class:`~weldfrac.materials.MaterialDB`
    :param kinetics: :class:`~weldfrac.types.KineticsConfig`
    :param base: base metal :class:`~weldfrac.types.Composition`
    :param filler: weld metal composition (default: ``base``)
    :param initial: as-received microstructure of the base metal
    :param fixed: ``(node set, component)`` pairs removing the rigid body motion
    :param float dT_max: largest nodal temperature change aimed for per increment (°C)
    :param float final_tolerance: the run ends when every temperature is this close to
        ambient (°C)
    :param float final_time_max: longest final cooling (s)
    """

    db: object
    kinetics: object
    base: object
    filler: object = None
    initial: FrozenDict = INITIAL_MICROSTRUCTURE
    bc: ThermalBC = field(default_factory=ThermalBC)
    annealing_temperature: float = 1400.0
    fixed: tuple = (("anchor", 0), ("anchor", 1), ("roller", 1))
    dt_initial: float = 0.01
    dt_min: float = 1e-5
    dt_max: float = 5.0
    final_dt_max: float = 200.0
    dT_max: float = 25.0
    final_tolerance: float = 1.0
    final_time_max: float = 1.0e5
    method: str = "direct"


@dataclass
class WeldResult:
    """
    Fields at the end of a weld simulation.

    Integration point arrays have shape ``(elements, 9)`` (plus a trailing ``4`` for tensors,
    ``5`` for phase fractions in :data:`~weldfrac.types.PHASES` order); ``T`` and ``u`` are
    nodal. ``eps_inelastic`` is the stress-free strain (eigen, reference and TRIP parts) and
    ``cr700`` holds NaN where the material never cooled through 700 °C.
    """

    mesh: object
    fractions: np.ndarray
    D: np.ndarray
    cr700: np.ndarray
    hardness: np.ndarray
    stress: np.ndarray
    strain: np.ndarray
    eps_p: np.ndarray
    ep_eq: np.ndarray
    etp_eq: np.ndarray
    eps_inelastic: np.ndarray
    yield_stress: np.ndarray
    T: np.ndarray
    u: np.ndarray
    time: float = 0.0
    statistics: dict = field(default_factory=dict)

    def phases(self):
        return PhaseState.from_fractions(dict(zip(PHASES, np.moveaxis(self.fractions, -1, 0))),
                                         D=self.D)  # fmt: skip


def check_beads(mesh, passes):
    """
    Verify that every pass names existing sets and that no two beads share an element.

    :raises MeshError: for unknown sets
    :raises ScenarioInvariantError: for overlapping beads
    """
    seen = {}
    for weld_pass in passes:
        mesh.node_set(weld_pass.fusion)
        for element in mesh.element_set(weld_pass.bead).tolist():
            if element in seen:
                raise ScenarioInvariantError(
                    f"beads {seen[element]!r} and {weld_pass.bead!r} overlap in element {element}"
                )
            seen[element] = weld_pass.bead


class _WeldDriver:
    def __init__(self, mesh, passes, settings, stats):
        self.mesh = mesh
        self.settings = settings
        self.stats = stats
        self.geometry = ElementGeometry(mesh)
        shape = self.geometry.weights.shape
        self.fields = FieldState(mesh, T=settings.bc.T0, num_points=shape[1])

        in_bead = np.zeros(mesh.num_elements, dtype=bool)
        for weld_pass in passes:
            in_bead[mesh.element_set(weld_pass.bead)] = True
        if settings.filler is None:
            self.comp = settings.base
        else:
            mask = np.broadcast_to(in_bead[:, None], shape)
            self.comp = settings.base.select(mask, settings.filler)

        self.phases = uniform_state(settings.initial, shape, D=settings.kinetics.D0)
        fixed = [(mesh.node_set(name), component) for name, component in settings.fixed]
        self.mechanics = MechanicsModel(
            mesh, self.geometry, self.fields, settings.db, settings.annealing_temperature,
            fixed=fixed, method=settings.method,
        )  # fmt: skip
        self.rho_base = settings.db.mix("rho", self.phases, settings.bc.T0)
        self.fields.history["rho_ref"][...] = self.rho_base
        self.cr700 = np.full(shape, np.nan)
        self.time = 0.0
        self.dt = settings.dt_initial

    def _attempt(self, programs):
        s = self.settings

        def attempt(dt):
            T_old = self.fields.T.copy()
            coupled = thermometallurgical_step(
                self.mesh, self.geometry, T_old, self.phases, dt, s.bc, s.db, self.comp,
                s.kinetics, prescribed_temperatures(programs, self.time + dt),
                method=s.method,
            )  # fmt: skip
            T_ip = self.geometry.interpolate(coupled.T)
            iterations = self.mechanics.equilibrium_step(T_ip, coupled.phases, self.phases)
            self.fields.T[:] = coupled.T
            return coupled, T_old, iterations

        return attempt

    def step(self, programs=(), dt_max=None, end=np.inf):
        s = self.settings
        dt_max = s.dt_max if dt_max is None else dt_max
        dt = min(self.dt, dt_max, end - self.time)
        dt, (coupled, T_old, iterations) = advance(
            self._attempt(programs), self.fields.snapshot, self.fields.restore, dt, s.dt_min,
            self.stats,
        )  # fmt: skip

        active = self.mesh.active[:, None]
        T_ip_old = self.geometry.interpolate(T_old)
        T_ip_new = self.geometry.interpolate(coupled.T)
        self.cr700 = np.where(active, update_cooling_rate(self.cr700, T_ip_old, T_ip_new, dt),
                              self.cr700)  # fmt: skip
        self.phases = coupled.phases
        self.time += dt

        stats = self.stats
        stats.increments += 1
        stats.newton_iterations += coupled.newton_iterations + iterations
        stats.staggered_passes += coupled.passes
        stats.dt_history.append(dt)

        nodes = self.mesh.active_node_mask()
        change = float(np.abs(coupled.T - T_old)[nodes].max())
        self.dt = next_time_step(dt, iterations, dt_min=s.dt_min, dt_max=dt_max)
        if change > 0:
            self.dt = max(min(self.dt, dt * s.dT_max / change), s.dt_min)
        logger.info(
            "t = %.4g s, dt = %.3g s: %d passes, %d Newton iterations, max T %.1f °C",
            self.time, dt, coupled.passes, coupled.newton_iterations + iterations,
            coupled.T[nodes].max(),
        )  # fmt: skip

    def run_until(self, end, programs=()):
        while self.time < end - 1e-9:
            self.step(programs, end=end)

    def deposit(self, weld_pass):
        s = self.settings
        fusion = self.mesh.node_set(weld_pass.fusion)
        program = TemperatureProgram.ramp(fusion, self.fields.T, weld_pass.insertion_temperature,
                                          weld_pass.ramp, start=self.time)  # fmt: skip
        logger.info("pass %r: torch on at t = %.4g s", weld_pass.bead, self.time)
        self.dt = s.dt_initial
        self.run_until(program.end, [program])

        activate_elements(self.mesh, self.fields, weld_pass.bead,
                          temperature=weld_pass.insertion_temperature,
                          on_activate=self._on_activate)  # fmt: skip
        self.dt = s.dt_initial
        self.run_until(self.time + weld_pass.cooldown)

    def _on_activate(self, elements):
        s = self.settings
        shape = (len(elements), self.geometry.num_points)
        self.phases.put(elements, PhaseState.austenitic(shape, D=s.kinetics.D0))
        self.cr700[elements] = np.nan
        history = self.fields.history
        history["rho_ref"][elements] = self.rho_base[elements]
        T_ip = self.geometry.interpolate(self.fields.T)[elements]
        eps_eig = eigenstrain(T_ip, self.phases.take(elements), history["rho_ref"][elements],
                              s.db)  # fmt: skip
        self.mechanics.reset_reference(elements, eps_eig)

    def cool_to_ambient(self):
        s = self.settings
        deadline = self.time + s.final_time_max
        self.dt = max(self.dt, s.dt_initial)
        while True:
            nodes = self.mesh.active_node_mask()
            deviation = float(np.abs(self.fields.T[nodes] - s.bc.T0).max())
            if deviation < s.final_tolerance:
                return
            if self.time >= deadline - 1e-9:
                raise ScenarioInvariantError(
                    f"temperature still {deviation:.2f} °C off ambient after "
                    f"{s.final_time_max:g} s of final cooling"
                )
            self.step(dt_max=s.final_dt_max, end=deadline)

    def result(self):
        s = self.settings
        history = self.fields.history
        T_ip = self.geometry.interpolate(self.fields.T)
        self.phases.validate()
        fractions = self.phases.fractions()
        return WeldResult(
            mesh=self.mesh,
            fractions=fractions,
            D=self.phases.D.copy(),
            cr700=self.cr700.copy(),
            hardness=hardness_map(self.phases, self.comp, self.cr700, s.db.base_hardness),
            stress=history["stress"].copy(),
            strain=history["strain"].copy(),
            eps_p=history["eps_p"].copy(),
            ep_eq=history["ep_eq"].copy(),
            etp_eq=history["etp_eq"].copy(),
            eps_inelastic=self.mechanics.inelastic_strain(T_ip, fractions),
            yield_stress=self.mechanics.current_yield_stress(T_ip, fractions),
            T=self.fields.T.copy(),
            u=self.fields.u.copy(),
            time=self.time,
            statistics=self.stats.as_dict(),
        )


def run_weld(mesh, passes, settings, stats=None):
    """
    Simulate a multi-pass weld.

    All beads are removed first. Each pass then heats its fusion nodes to the insertion
    temperature over the ramp time, activates the bead at that temperature and cools for the
    pass's cooldown time. After the last pass the assembly cools until every temperature is
    within ``settings.final_tolerance`` of ambient. Pass order is weld order.

    :param mesh: :class:`~weldfrac.mesh.Mesh`; a copy is simulated
    :param passes: sequence of :class:`WeldPass`
    :param WeldSettings settings: materials and numerics
    :param stats: optional :class:`~weldfrac.types.RunStatistics` to accumulate into
    :rtype: WeldResult
    :raises ScenarioInvariantError: for overlapping beads or when ambient temperature is not
        reached in time
    :raises ConvergenceError: when a step fails even at the smallest time step
    """
    passes = list(passes)
    check_beads(mesh, passes)
    mesh = mesh.copy()
    mesh.active[:] = True
    for weld_pass in passes:
        deactivate_elements(mesh, weld_pass.bead)

    driver = _WeldDriver(mesh, passes, settings, stats or RunStatistics())
    for weld_pass in passes:
        driver.deposit(weld_pass)

    driver.cool_to_ambient()
    logger.info("weld finished at t = %.5g s after %d increments", driver.time,
                driver.stats.increments)  # fmt: skip
    return driver.result()


#
# Pressurization
#


@dataclass(frozen=True)
class PressurizationProgram:
    """
    Internal pressure loading of a pipe section, applied as an inner radial displacement.

    The displacement grows linearly in time up to ``overshoot`` times the value
    ``u = p R² / (b E) (1 - nu / 2)`` that corresponds to ``pressure``. The pressure actually
    carried is measured from the hoop stress as ``p = sigma_hoop b / R``.

    :param float pressure: nominal final pressure (Pa)
    :param float radius: pipe radius ``R`` (m)
    :param float thickness: wall thickness ``b`` (m)
    :param float duration: ramp time (s)
    :param int increments: number of load increments
    :param str medium: ``"hydrogen"`` or ``"inert"``
    :param float solubility: Sievert constant (wppm/√MPa)
    :param float max_strain: largest admissible applied hoop strain ``u / R``
    """

    pressure: float = 15.0e6
    radius: float = 0.3769
    thickness: float = 8.2e-3
    duration: float = 90 * 86400.0
    increments: int = 50
    medium: str = "hydrogen"
    solubility: float = 0.077
    overshoot: float = 1.0
    max_strain: float = 0.2

    def __post_init__(self):
        if self.medium not in ("hydrogen", "inert"):
            raise ValueError(f"unknown medium {self.medium!r}")
        for name in ("radius", "thickness", "duration", "overshoot", "max_strain"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.pressure < 0:
            raise ValueError("pressure must be non-negative")
        if self.increments < 1:
            raise ValueError("at least one increment is needed")

    def target_displacement(self, E, nu):
        "Radial displacement (m) corresponding to ``pressure``."
        return self.pressure * self.radius**2 / (self.thickness * E) * (1 - nu / 2)

    def pressure_from_hoop(self, hoop):
        return hoop * self.thickness / self.radius


@dataclass(frozen=True)
class DefectSpec:
    """
    A crack-like defect seeded along a segment.

    :param start: first endpoint (m)
    :param end: second endpoint (m)
    """

    start: tuple
    end: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "end", tuple(float(v) for v in self.end))
        if not self.length > 0:
            raise ValueError("defect length must be positive")

    @classmethod
    def along(cls, origin, direction, length, name=""):
        "Defect of ``length`` starting at ``origin`` in ``direction``."
        direction = np.asarray(direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        end = np.asarray(origin, dtype=float) + length * direction
        return cls(tuple(origin), tuple(end), name)

    @property
    def length(self):
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    @property
    def direction(self):
        return (np.asarray(self.end) - np.asarray(self.start)) / self.length


@dataclass(frozen=True)
class PressurizationSettings:
    """
    Materials and numerics of a pressurization run.

    :param bool heterogeneity: use the stage-1 phase fractions and residual fields; when off,
        the whole section has the ``initial`` microstructure and no residual state
    :param bool residual_stress: carry the stage-1 residual stress and plastic history over
    :param float collapse_ratio: plastic collapse is flagged when the incremental stiffness
        ``dp/du`` stays below this fraction of the initial stiffness ...
    :param int collapse_increments: ... for this many consecutive increments
    """

    db: object
    initial: FrozenDict = INITIAL_MICROSTRUCTURE
    beta: float = BETA
    heterogeneity: bool = True
    residual_stress: bool = True
    tol: float = 1e-4
    max_passes: int = 25
    single_pass: bool = False
    collapse_ratio: float = 0.01
    collapse_increments: int = 5
    min_fraction: float = 1e-4
    monitor: str = "monitor"
    inner: str = "inner"
    outer: str = "outer"
    weld: str = "weld"
    method: str = "direct"


@dataclass
class PressurizationResult:
    """
    Pressure-displacement record and failure report.

    ``mode`` is ``"fracture"``, ``"collapse"`` or ``"none"``; ``critical_pressure`` is the
    largest pressure carried under loading (Pa).
    """

    records: list = field(default_factory=list)
    mode: str = "none"
    critical_pressure: float = float("nan")
    failure_increment: int = -1
    crack: np.ndarray = None
    fields: object = None
    defects: tuple = ()
    statistics: dict = field(default_factory=dict)

    columns = ("increment", "time_s", "displacement_mm", "pressure_MPa", "phi_max",
               "C_max_wppm", "crack_energy_J_per_m", "mode")  # fmt: skip
    units = ("-", "s", "mm", "MPa", "-", "wppm", "J/m", "-")

    def rows(self):
        "One row per increment; ``mode`` is set on the failure increment only."
        for record in self.records:
            failed = record["increment"] == self.failure_increment
            yield (
                record["increment"], record["time"], record["displacement"] * 1e3,
                record["pressure"] / 1e6, record["phi_max"], record["C_max"],
                record["crack_energy"], self.mode if failed else "-",
            )  # fmt: skip

    @property
    def pressures(self):
        return np.array([record["pressure"] for record in self.records])

    @property
    def displacements(self):
        return np.array([record["displacement"] for record in self.records])

    def peak_pressure(self):
        """
        Largest pressure of the loaded increments.

        The pressure of increment 0 comes from residual stress alone and is only used when no
        increment was recorded.
        """
        loaded = [record["pressure"] for record in self.records if record["increment"] > 0]
        if not loaded:
            loaded = [record["pressure"] for record in self.records]
        return float(max(loaded)) if loaded else float("nan")


def detect_collapse(displacements, pressures, ratio=0.01, count=5):
    """
    Index of the increment at which a pressure plateau is established, or ``None``.

    The plateau holds when ``dp/du`` stays below ``ratio`` times the stiffness of the first
    increment for ``count`` consecutive increments.
    """
    u = np.asarray(displacements, dtype=float)
    p = np.asarray(pressures, dtype=float)
    if len(u) < count + 2:
        return None

    du = np.diff(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        stiffness = np.diff(p) / du
    initial = stiffness[0]
    if not initial > 0:
        return None

    low = stiffness < ratio * initial
    run = 0
    for index, flag in enumerate(low):
        run = run + 1 if flag else 0
        if run >= count:
            return index + 1
    return None


def _monitor(mesh, settings):
    monitor = mesh.node_set(settings.monitor)
    weld = settings.weld
    if weld in mesh.element_sets and np.isin(monitor, mesh.set_nodes(weld)).any():
        raise ScenarioInvariantError(f"monitor node {int(monitor[0])} lies inside the weld")
    return np.flatnonzero(np.isin(mesh.elements, monitor).any(axis=1))


def _check_defect(mesh, defect):
    h = mesh.element_sizes().max()
    for point in (defect.start, defect.end):
        node = mesh.closest_node(point)
        if np.linalg.norm(mesh.nodes[node] - np.asarray(point)) > h:
            raise ScenarioError(f"defect {defect.name or defect} leaves the mesh")


def _load_stage1(model, fields, stage1):
    history = fields.history
    for name in ("eps_p", "ep_eq", "etp_eq", "stress"):
        history[name][...] = getattr(stage1, name)
    model.eps_initial[...] = stage1.eps_inelastic - stage1.strain


def run_pressurization(mesh, program, settings, stage1=None, defects=(), stats=None):
    """
    Pressurize a pipe section until fracture, plastic collapse or the end of the ramp.

    Each increment prescribes the inner radial displacement and iterates displacement, damage
    and (for a hydrogen medium) hydrogen transport to a common state. The inner surface is in
    equilibrium with the gas through Sievert's law at the pressure measured in the previous
    increment; the outer surface is free of hydrogen.

    :param mesh: pipe section centred at the origin
    :param PressurizationProgram program: loading
    :param PressurizationSettings settings: materials and numerics
    :param stage1: optional :class:`WeldResult` of the same mesh
    :param defects: :class:`DefectSpec` sequence seeded before loading
    :rtype: PressurizationResult
    :raises ScenarioInvariantError: if the pressure monitor lies inside the weld
    :raises ScenarioError: for defects outside the mesh, a mismatched stage-1 mesh or a ramp
        beyond ``program.max_strain``
    """
    stats = stats or RunStatistics()
    mesh = mesh.copy()
    mesh.active[:] = True
    monitor_elements = _monitor(mesh, settings)
    if stage1 is not None and stage1.mesh.num_elements != mesh.num_elements:
        raise ScenarioError("stage-1 fields belong to a different mesh")
    for defect in defects:
        _check_defect(mesh, defect)

    geometry = ElementGeometry(mesh)
    shape = geometry.weights.shape
    fields = FieldState(mesh, num_points=shape[1])
    heterogeneous = stage1 is not None and settings.heterogeneity
    if heterogeneous:
        fractions = stage1.fractions
    else:
        fractions = uniform_fractions(settings.initial, shape)
    model = FractureModel(mesh, geometry, fields, settings.db, fractions, beta=settings.beta,
                          method=settings.method)  # fmt: skip
    if heterogeneous and settings.residual_stress:
        _load_stage1(model, fields, stage1)
    for defect in defects:
        seeded = model.seed(defect.start, defect.end)
        logger.info("seeded defect %s (%.3g mm) at %d points", defect.name or "",
                    defect.length * 1e3, seeded)  # fmt: skip
    check_resolution(mesh, model.props.ell)

    E = float(np.mean(model.params["E"]))
    kappa = float(np.mean(model.params["kappa"]))
    G = float(np.mean(model.params["G"]))
    nu = (3 * kappa - 2 * G) / (2 * (3 * kappa + G))
    u_final = program.overshoot * program.target_displacement(E, nu)
    if u_final > program.max_strain * program.radius:
        raise ScenarioError(
            f"final inner displacement {u_final * 1e3:.3g} mm exceeds the admissible strain "
            f"{program.max_strain:g}"
        )

    inner = mesh.node_set(settings.inner)
    outer = mesh.node_set(settings.outer)
    normal = mesh.nodes[inner] / np.linalg.norm(mesh.nodes[inner], axis=1)[:, None]
    dofs = np.concatenate([inner * 2, inner * 2 + 1])
    hydrogen = program.medium == "hydrogen"

    def measured_pressure():
        stress = fields.history["stress"][monitor_elements]
        hoop = hoop_stress(stress, geometry.points[monitor_elements])
        return program.pressure_from_hoop(float(np.mean(hoop)))

    def record(increment, time):
        Gc = model.toughness()
        return {
            "increment": increment,
            "time": time,
            "displacement": u_final * time / program.duration,
            "pressure": measured_pressure(),
            "phi_max": float(fields.phi.max()),
            "C_max": float(fields.C.max()),
            "crack_energy": crack_surface_energy(geometry, fields.phi, Gc, model.props.ell),
        }

    result = PressurizationResult(defects=tuple(defects))
    result.records.append(record(0, 0.0))
    state = {"time": 0.0}

    def attempt(dt):
        time = state["time"] + dt
        u_r = u_final * time / program.duration
        prescribed = (dofs, np.concatenate([u_r * normal[:, 0], u_r * normal[:, 1]]))
        p_previous = result.records[-1]["pressure"]
        C_inner = sievert_concentration(p_previous / 1e6, program.solubility)
        C_fixed = np.concatenate([np.full(len(inner), C_inner), np.zeros(len(outer))])
        fixed_C = (np.concatenate([inner, outer]), C_fixed)
        C_old = fields.C.copy()
        passes = [lambda: model.solve_displacement(prescribed), model.solve_phase_field]
        if hydrogen:
            passes.append(lambda: model.solve_hydrogen(dt, fixed_C, C_old))
        return staggered_step(passes, settings.tol, settings.max_passes, settings.single_pass)

    def restore(snapshot):
        fields.restore(snapshot)
        model.trial = None

    dt_nominal = program.duration / program.increments
    increment = 0
    while state["time"] < program.duration * (1 - 1e-12):
        dt = min(dt_nominal, program.duration - state["time"])
        dt, passes = advance(attempt, fields.snapshot, restore, dt,
                             dt_nominal * settings.min_fraction, stats)  # fmt: skip
        model.commit()
        state["time"] += dt
        increment += 1
        stats.increments += 1
        stats.staggered_passes += passes
        stats.newton_iterations += model.mechanics.last_iterations
        stats.dt_history.append(dt)
        result.records.append(record(increment, state["time"]))
        last = result.records[-1]
        logger.info(
            "increment %d: u = %.4g mm, p = %.4g MPa, max phi %.3f, %d passes",
            increment, last["displacement"] * 1e3, last["pressure"] / 1e6, last["phi_max"],
            passes,
        )  # fmt: skip

        if through_ligament(mesh, fields.phi, inner, outer):
            result.mode = "fracture"
            break
        if detect_collapse(result.displacements, result.pressures, settings.collapse_ratio,
                           settings.collapse_increments) is not None:  # fmt: skip
            result.mode = "collapse"
            break

    result.critical_pressure = result.peak_pressure()
    result.failure_increment = increment if result.mode != "none" else -1
    result.crack = crack_path(mesh, fields.phi)
    result.fields = fields
    result.statistics = stats.as_dict()
    logger.info("pressurization ended: %s at %.4g MPa", result.mode,
                result.critical_pressure / 1e6)  # fmt: skip
    return result


def _pressurize(arguments):
    mesh, program, settings, stage1, defect = arguments
    defects = () if defect is None else (defect,)
    result = run_pressurization(mesh, program, settings, stage1, defects)
    result.fields = None
    return result


@dataclass
class SweepResult:
    "Failure of one pressurization run per defect (``None`` for the defect-free run)."

    defects: list
    results: list
    violations: list = field(default_factory=list)

    columns = ("defect", "length_mm", "mode", "critical_pressure_MPa")
    units = ("-", "mm", "-", "MPa")

    @property
    def monotone(self):
        return not self.violations

    def rows(self):
        for defect, result in zip(self.defects, self.results):
            name = "none" if defect is None else defect.name or "defect"
            length = 0.0 if defect is None else defect.length * 1e3
            yield name, length, result.mode, result.critical_pressure / 1e6


def check_length_monotonicity(defects, pressures, rtol=1e-6):
    """
    Pairs of defects at the same location and orientation where the longer one failed at a
    higher pressure.

    :returns: list of ``(shorter index, longer index)``
    """
    groups = {}
    for index, defect in enumerate(defects):
        if defect is None:
            continue
        key = (tuple(np.round(defect.start, 9)), tuple(np.round(defect.direction, 6)))
        groups.setdefault(key, []).append(index)

    violations = []
    for members in groups.values():
        members.sort(key=lambda index: defects[index].length)
        for shorter, longer in zip(members, members[1:]):
            if pressures[longer] > pressures[shorter] * (1 + rtol):
                violations.append((shorter, longer))
    return violations


def run_defect_sweep(mesh, program, settings, defects, stage1=None, threads=1):
    """
    One independent pressurization per defect, optionally in parallel processes.

    :param defects: sequence of :class:`DefectSpec` or ``None`` (defect-free)
    :param int threads: worker processes; 1 runs in this process
    :rtype: SweepResult
    """
    defects = list(defects)
    jobs = [(mesh, program, settings, stage1, defect) for defect in defects]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(_pressurize, jobs))
    else:
        results = [_pressurize(job) for job in jobs]

    sweep = SweepResult(defects, results)
    sweep.violations = check_length_monotonicity(
        defects, [result.critical_pressure for result in results]
    )
    for shorter, longer in sweep.violations:
        logger.warning(
            "defect of %.3g mm failed at a higher pressure than the %.3g mm defect at the "
            "same location",
            defects[longer].length * 1e3, defects[shorter].length * 1e3,
        )  # fmt: skip
    return sweep


#
# Boundary-layer J-R curve
#


@dataclass
class JRCurve:
    """
    Crack growth resistance from a boundary-layer run.

    ``J_Ic`` is the intersection with the offset line ``J = 2 sigma_Y (da - 0.2 mm)``, NaN
    when the curve does not reach it; ``J_onset`` the first J with crack growth.
    """

    K: np.ndarray
    J: np.ndarray
    da: np.ndarray
    sigma_y: float
    J_Ic: float = float("nan")
    J_onset: float = float("nan")
    statistics: dict = field(default_factory=dict)

    columns = ("K_MPa_sqrt_m", "J_kJ_per_m2", "da_mm")
    units = ("MPa*m^0.5", "kJ/m^2", "mm")

    def rows(self):
        for K, J, da in zip(self.K, self.J, self.da):
            yield K / 1e6, J / 1e3, da * 1e3


def williams_displacement(points, K, E, nu):
    "Mode I plane-strain crack tip displacements ``(k, 2)`` for a tip at the origin."
    G = E / (2 * (1 + nu))
    kappa = 3 - 4 * nu
    r = np.hypot(points[:, 0], points[:, 1])
    theta = np.arctan2(points[:, 1], points[:, 0])
    scale = K / (2 * G) * np.sqrt(r / (2 * np.pi)) * (kappa - np.cos(theta))
    return np.column_stack([scale * np.cos(theta / 2), scale * np.sin(theta / 2)])


def offset_intersection(J, da, sigma_y, offset=OFFSET):
    """
    J at the intersection of a J-R curve with the line ``2 sigma_y (da - offset)``.

    :returns: NaN when the curve stays above the line
    """
    J = np.asarray(J, dtype=float)
    da = np.asarray(da, dtype=float)
    if not np.isfinite(sigma_y):
        beyond = np.flatnonzero(da >= offset)
        if not beyond.size:
            return float("nan")
        i = beyond[0]
        if i == 0 or da[i] == da[i - 1]:
            return float(J[i])
        return float(np.interp(offset, da[i - 1 : i + 1], J[i - 1 : i + 1]))

    gap = J - 2 * sigma_y * (da - offset)
    below = np.flatnonzero(gap <= 0)
    if not below.size:
        return float("nan")
    i = below[0]
    if i == 0:
        return float(J[0])
    weight = gap[i - 1] / (gap[i - 1] - gap[i])
    return float(J[i - 1] + weight * (J[i] - J[i - 1]))


def run_ssy_jr(mesh, db, K_max, increments=40, fractions=None, C_uniform=None, beta=BETA,
               tol=1e-4, max_passes=25, rim_strain=1e-6, method="direct", stats=None):  # fmt: skip
    """
    J-R curve of a boundary-layer model loaded by the mode I K-field.

    ``J = K² (1 - nu²) / E`` is the far-field energy release rate, valid while plastic flow
    stays clear of the rim; the crack extension is the farthest damaged node along the
    ligament.

    :param mesh: :func:`~weldfrac.geometry.boundary_layer` mesh (sets ``rim``, ``ligament``,
        ``tip``, ``rim_ring``)
    :param float K_max: final stress intensity (Pa·m^0.5)
    :param fractions: phase fraction mapping of the homogeneous material (default ferrite)
    :param C_uniform: uniform hydrogen concentration (wppm); ``None`` for air
    :rtype: JRCurve
    :raises SSYViolationError: if plastic strain exceeds ``rim_strain`` in the outermost ring
    """
    stats = stats or RunStatistics()
    mesh = mesh.copy()
    mesh.active[:] = True
    geometry = ElementGeometry(mesh)
    shape = geometry.weights.shape
    fields = FieldState(mesh, num_points=shape[1])
    fractions = uniform_fractions(fractions or {"ferrite": 1.0}, shape)
    ligament = mesh.node_set("ligament")
    model = FractureModel(mesh, geometry, fields, db, fractions, beta=beta, fixed=[(ligament, 1)],
                          method=method, C_uniform=C_uniform)  # fmt: skip
    check_resolution(mesh, model.props.ell, mesh.element_set("box"))

    E = float(np.mean(model.params["E"]))
    kappa = float(np.mean(model.params["kappa"]))
    G = float(np.mean(model.params["G"]))
    nu = (3 * kappa - 2 * G) / (2 * (3 * kappa + G))
    sigma_y = float(np.mean(model.params["sigma_y0"]))
    rim = mesh.node_set("rim")
    dofs = np.concatenate([rim * 2, rim * 2 + 1])
    tip = mesh.nodes[mesh.node_set("tip")[0]]
    rim_ring = mesh.element_set("rim_ring")

    def attempt(dK):
        K = state["K"] + dK
        u = williams_displacement(mesh.nodes[rim] - tip, K, E, nu)
        prescribed = (dofs, np.concatenate([u[:, 0], u[:, 1]]))
        return staggered_step([lambda: model.solve_displacement(prescribed),
                               model.solve_phase_field], tol, max_passes)  # fmt: skip

    def restore(snapshot):
        fields.restore(snapshot)
        model.trial = None

    state = {"K": 0.0}
    dK_nominal = K_max / increments
    K_values, J_values, extensions = [], [], []
    while state["K"] < K_max * (1 - 1e-12):
        dK = min(dK_nominal, K_max - state["K"])
        dK, passes = advance(attempt, fields.snapshot, restore, dK, dK_nominal * 1e-4, stats)
        model.commit()
        state["K"] += dK
        stats.increments += 1
        stats.staggered_passes += passes
        stats.dt_history.append(dK)

        rim_plastic = float(fields.history["ep_eq"][rim_ring].max())
        if rim_plastic > rim_strain:
            raise SSYViolationError(
                f"plastic strain {rim_plastic:.3g} reached the rim at K = "
                f"{state['K'] / 1e6:.4g} MPa·m^0.5; enlarge the domain or lower K_max"
            )

        K_values.append(state["K"])
        J_values.append(state["K"] ** 2 * (1 - nu**2) / E)
        extensions.append(crack_extension(mesh, fields.phi, tip))
        logger.info("K = %.4g MPa·m^0.5: J = %.4g kJ/m², da = %.4g mm", state["K"] / 1e6,
                    J_values[-1] / 1e3, extensions[-1] * 1e3)  # fmt: skip

    curve = JRCurve(np.array(K_values), np.array(J_values), np.array(extensions), sigma_y)
    grown = np.flatnonzero(curve.da > 0)
    if grown.size:
        curve.J_onset = float(curve.J[grown[0]])
    curve.J_Ic = offset_intersection(curve.J, curve.da, sigma_y)
    curve.statistics = stats.as_dict()
    return curve


#
# Dilatometry
#


@dataclass
class DilatometryCurve:
    "Eigenstrain and phase fractions of one material point along a thermal cycle."

    records: list = field(default_factory=list)

    columns = ("time_s", "T_degC", "strain", "volumetric_strain") + PHASES
    units = ("s", "degC", "-", "-") + ("-",) * len(PHASES)

    def rows(self):
        return iter(self.records)

    @property
    def temperatures(self):
        return np.array([row[1] for row in self.records])

    @property
    def strains(self):
        return np.array([row[2] for row in self.records])

    def fraction(self, phase):
        return np.array([row[4 + PHASES.index(phase)] for row in self.records])


def run_dilatometry(comp, kinetics, db, schedule, T_start=20.0, initial=INITIAL_MICROSTRUCTURE,
                    dT=1.0):  # fmt: skip
    """
    Drive one material point through a piecewise linear thermal cycle.

    :param schedule: sequence of ``(T_target, rate)`` or ``(T_target, rate, hold)`` with the
        rate magnitude in °C/s and an optional isothermal hold (s) at the target
    :param float dT: largest temperature change per step (°C)
    :rtype: DilatometryCurve
    """
    state = PhaseState.from_fractions(dict(initial), D=kinetics.D0)
    rho_ref = db.mix("rho", state, T_start)
    curve = DilatometryCurve()
    time = 0.0
    T = float(T_start)

    def sample():
        strain = float(eigenstrain(T, state, rho_ref, db)[0])
        volumetric = float(rho_ref / db.mix("rho", state, T) - 1.0)
        curve.records.append((time, T, strain, volumetric, *state.fractions().tolist()))

    sample()
    for segment in schedule:
        target, rate, hold = (tuple(segment) + (0.0,))[:3]
        rate = abs(float(rate))
        if target != T and not rate > 0:
            raise ValueError("heating and cooling rates must be non-zero")

        steps = int(np.ceil(abs(target - T) / dT))
        if steps:
            dt = abs(target - T) / (rate * steps)
            start = T
            for i in range(1, steps + 1):
                T = start + (target - start) * i / steps
                time += dt
                state = transformation_step(state, T, dt, comp, kinetics)
                sample()
        if hold > 0:
            steps = min(200, max(1, int(np.ceil(hold / 0.1))))
            for _ in range(steps):
                time += hold / steps
                state = transformation_step(state, T, hold / steps, comp, kinetics)
                sample()

    state.validate()
    return curve


__all__ = [
    "INITIAL_MICROSTRUCTURE",
    "DefectSpec",
    "DilatometryCurve",
    "JRCurve",
    "PressurizationProgram",
    "PressurizationResult",
    "PressurizationSettings",
    "SweepResult",
    "WeldPass",
    "WeldResult",
    "WeldSettings",
    "check_beads",
    "check_length_monotonicity",
    "detect_collapse",
    "offset_intersection",
    "run_defect_sweep",
    "run_dilatometry",
    "run_pressurization",
    "run_ssy_jr",
    "run_weld",
    "uniform_fractions",
    "uniform_state",
    "williams_displacement",
]
