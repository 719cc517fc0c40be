import numpy as np
import pytest

from weldfrac.fem import ElementGeometry
from weldfrac.geometry import rectangle, strip
from weldfrac.materials import MaterialDB
from weldfrac.metallurgy import transformation_step
from weldfrac.thermal import (
    TemperatureProgram,
    ThermalBC,
    prescribed_temperatures,
    record_cooling_rate,
    surface_sides,
    thermal_step,
    thermometallurgical_step,
    update_cooling_rate,
)
from weldfrac.types import PhaseState


def ferrite(mesh):
    return np.broadcast_to(np.eye(5)[0], (mesh.num_elements, 9, 5))


def test_flux_vanishes_at_ambient():
    bc = ThermalBC()
    assert bc.flux(bc.T0) == pytest.approx(0.0, abs=1e-9)


def test_flux_derivative():
    bc = ThermalBC()
    T = 850.0
    numeric = (bc.flux(T + 1e-3) - bc.flux(T - 1e-3)) / 2e-3
    assert bc.flux_derivative(T) == pytest.approx(numeric, rel=1e-6)


@pytest.mark.parametrize(
    "changes",
    [dict(emissivity=1.2), dict(h_c=-1.0), dict(sigma_SB=-1.0)],
    ids=["emissivity", "h_c", "sigma_SB"],
)
def test_bc_invalid(changes):
    with pytest.raises(ValueError):
        ThermalBC(**changes)


def test_program_ramp():
    T = np.array([20.0, 20.0, 400.0])
    program = TemperatureProgram.ramp([0, 2], T, 1500.0, 3.0, start=1.0)
    assert program.end == 4.0
    assert program.values(0.0).tolist() == [20.0, 400.0]
    assert program.values(2.5) == pytest.approx([760.0, 950.0])
    assert program.values(10.0).tolist() == [1500.0, 1500.0]


def test_program_duration():
    with pytest.raises(ValueError, match="duration"):
        TemperatureProgram.ramp([0], np.zeros(1), 1500.0, 0.0)


def test_prescribed_later_program_wins():
    T = np.zeros(4)
    first = TemperatureProgram.ramp([0, 1], T, 100.0, 1.0)
    second = TemperatureProgram.ramp([1, 2], T, 200.0, 1.0)
    nodes, values = prescribed_temperatures([first, second], 5.0)
    assert dict(zip(nodes.tolist(), values.tolist())) == {0: 100.0, 1: 200.0, 2: 200.0}
    assert prescribed_temperatures([], 5.0) is None


def test_surface_sides_insulated():
    mesh = rectangle(2.0, 1.0, 2, 1)
    assert len(surface_sides(mesh)) == 6
    assert len(surface_sides(mesh, ("bottom",))) == 4
    assert len(surface_sides(mesh, ("bottom", "left"))) == 3


def test_update_cooling_rate():
    rate = update_cooling_rate(
        np.array([np.nan, 5.0, np.nan]),
        np.array([710.0, 650.0, 690.0]),
        np.array([690.0, 600.0, 710.0]),
        2.0,
    )
    assert rate[0] == pytest.approx(36000.0)
    assert rate[1] == 5.0
    assert np.isnan(rate[2])


def test_record_cooling_rate_final_crossing():
    times = np.arange(6.0)
    temperatures = np.array([800.0, 650.0, 750.0, 710.0, 690.0, 600.0])
    # reheated above 700 °C, the second crossing is kept
    assert record_cooling_rate(times, temperatures) == pytest.approx(20.0 * 3600)


def test_record_cooling_rate_never_crossing():
    times = np.linspace(0.0, 10.0, 11)
    temperatures = np.column_stack([np.linspace(600.0, 20.0, 11), np.linspace(1000.0, 100.0, 11)])
    rate = record_cooling_rate(times, temperatures)
    assert np.isnan(rate[0])
    assert rate[1] == pytest.approx(90.0 * 3600)


def test_record_cooling_rate_shapes():
    with pytest.raises(ValueError):
        record_cooling_rate(np.arange(3.0), np.zeros(4))


def test_steady_conduction():
    mesh = strip(10.0, nx=10)
    geometry = ElementGeometry(mesh)
    db = MaterialDB.uniform(k=40.0)
    bc = ThermalBC(h_c=0.0, emissivity=0.0)
    left, right = mesh.node_set("left"), mesh.node_set("right")
    values = np.r_[np.full(len(left), 100.0), np.zeros(len(right))]
    prescribed = (np.concatenate([left, right]), values)
    T, iterations = thermal_step(
        mesh, geometry, np.full(mesh.num_nodes, 50.0), ferrite(mesh), 1e9, bc, db, prescribed
    )
    x = mesh.nodes[:, 0]
    assert T == pytest.approx(100.0 * (1 - x / 10e-3), abs=1e-6)
    assert iterations <= 2


def test_lumped_cooling():
    # a highly conductive square loses heat through its perimeter only
    side = 10.0
    mesh = rectangle(side, side, 2, 2)
    geometry = ElementGeometry(mesh)
    db = MaterialDB.uniform(rho=7850.0, c=500.0, k=1e5)
    bc = ThermalBC(h_c=15.0, emissivity=0.0, T0=20.0)
    tau = 7850.0 * 500.0 * side * 1e-3 / (4 * 15.0)
    dt = tau / 300
    T = np.full(mesh.num_nodes, 100.0)
    for _ in range(300):
        T, _ = thermal_step(mesh, geometry, T, ferrite(mesh), dt, bc, db)

    assert np.ptp(T) < 1e-3
    assert T.mean() - 20.0 == pytest.approx(80.0 * np.exp(-1.0), rel=0.01)


def test_invalid_time_step():
    mesh = rectangle(1.0, 1.0, 1, 1)
    with pytest.raises(ValueError, match="time step"):
        thermal_step(mesh, ElementGeometry(mesh), np.zeros(mesh.num_nodes), ferrite(mesh), 0.0,
                     ThermalBC(), MaterialDB.uniform())  # fmt: skip


def test_inactive_nodes_keep_temperature():
    mesh = rectangle(2.0, 1.0, 2, 1)
    geometry = ElementGeometry(mesh)
    mesh.active[1] = False
    T_old = np.full(mesh.num_nodes, 500.0)
    db = MaterialDB.uniform()
    T, _ = thermal_step(mesh, geometry, T_old, ferrite(mesh), 1.0, ThermalBC(), db)
    orphans = ~mesh.active_node_mask()
    assert np.all(T[orphans] == 500.0)
    assert np.all(T[~orphans] < 500.0)


def test_thermometallurgical_step(x60_vintage, kinetics):
    mesh = rectangle(1.0, 1.0, 1, 1)
    geometry = ElementGeometry(mesh)
    phases = PhaseState.austenitic(shape=(1, 9))
    result = thermometallurgical_step(
        mesh, geometry, np.full(mesh.num_nodes, 1000.0), phases, 1.0, ThermalBC(),
        MaterialDB.uniform(), x60_vintage, kinetics,
    )  # fmt: skip
    assert result.passes >= 1
    assert np.all(result.T < 1000.0)
    assert np.all(result.phases.X_a == 1.0)
    assert np.all(result.phases.D > phases.D)
    assert np.all(phases.D == 20.0)


def test_insulated_enthalpy_balance():
    mesh = rectangle(3.0, 3.0, 3, 3)
    geometry = ElementGeometry(mesh)
    db = MaterialDB.uniform(rho=7850.0, c=500.0, k=40.0)
    bc = ThermalBC(h_c=0.0, emissivity=0.0)
    T = 20.0 + 500.0 * mesh.nodes[:, 0] / 3e-3
    reference = geometry.integrate(geometry.interpolate(T - bc.T_Z))
    for _ in range(5):
        T_new, _ = thermal_step(mesh, geometry, T, ferrite(mesh), 0.05, bc, db)
        change = geometry.integrate(geometry.interpolate(T_new - T))
        assert abs(change) <= 1e-8 * reference
        T = T_new

    assert np.ptp(T) < 500.0


def test_coupled_step_matches_standalone_kinetics(x60_vintage, kinetics):
    # every node follows the same program, so each integration point sees one history
    mesh = rectangle(1.0, 1.0, 1, 1)
    geometry = ElementGeometry(mesh)
    db = MaterialDB.uniform()
    nodes = np.arange(mesh.num_nodes)
    phases = PhaseState.austenitic(shape=(1, 9))
    point = PhaseState.austenitic()
    T_old = np.full(mesh.num_nodes, 900.0)
    dt = 1.0
    for step in range(1, 121):
        T = 900.0 - 5.0 * step
        result = thermometallurgical_step(
            mesh, geometry, T_old, phases, dt, ThermalBC(), db, x60_vintage, kinetics,
            prescribed=(nodes, np.full(mesh.num_nodes, T)),
        )  # fmt: skip
        phases, T_old = result.phases, result.T
        point = transformation_step(point, T, dt, x60_vintage, kinetics)

    assert T_old == pytest.approx(np.full(mesh.num_nodes, 300.0))
    assert point.X_a < 0.5
    expected = np.broadcast_to(point.fractions(), (1, 9, 5))
    assert phases.fractions() == pytest.approx(expected, abs=1e-3)
