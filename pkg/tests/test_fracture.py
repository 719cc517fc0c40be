import logging
from dataclasses import replace

import numpy as np
import pytest

from weldfrac.fem import ElementGeometry, FieldState
from weldfrac.fracture import (
    FractureModel,
    check_resolution,
    crack_extension,
    crack_path,
    crack_surface_energy,
    degradation,
    degraded_return_map,
    energy_split,
    gc_of_C,
    history_update,
    hydrogen_step,
    phasefield_solve,
    plastic_energy,
    seed_crack,
    sievert_concentration,
    through_ligament,
)
from weldfrac.geometry import rectangle, strip
from weldfrac.materials import MaterialDB, default_fracture_props
from weldfrac.metallurgy import R_GAS

GC = 60e3
ELL = 0.46e-3


def test_plastic_energy():
    assert plastic_energy(0.01, 0.0, 416e6, 210e9, 0.1) == pytest.approx(4.675262e6, rel=1e-5)
    # TRIP strain counts like plastic strain
    assert plastic_energy(0.004, 0.006, 416e6, 210e9, 0.1) == pytest.approx(4.675262e6, rel=1e-5)
    assert plastic_energy(0.0, 0.0, 416e6, 210e9, 0.1) == 0.0
    assert plastic_energy(0.01, 0.0, np.inf, 210e9, 0.1) == 0.0


def test_gc_of_C():
    props = default_fracture_props()["ferrite"]
    assert gc_of_C(0.17219, props) / props.Gc0 == pytest.approx(0.61263, rel=1e-4)
    assert gc_of_C(0.0, props) == pytest.approx(props.Gc0)
    assert gc_of_C(1e3, props) == pytest.approx(props.f_min * props.Gc0)
    assert gc_of_C(-1.0, props) == pytest.approx(props.Gc0)


def test_gc_of_C_decreasing():
    props = default_fracture_props()["bainite"]
    values = gc_of_C(np.linspace(0.0, 0.5, 50), props)
    assert np.all(np.diff(values) < 0)


def test_sievert():
    assert sievert_concentration(5.0) == pytest.approx(0.077 * np.sqrt(5.0))
    assert sievert_concentration(-1.0) == 0.0


@pytest.mark.parametrize(
    "phi, expected", [(0.0, (1.0, 1.0)), (1.0, (0.0, 0.9)), (0.5, (0.25, 0.925))]
)
def test_degradation(phi, expected):
    assert degradation(phi) == pytest.approx(expected)


def test_history_update():
    assert history_update(np.array([1.0, 3.0]), np.array([2.0, 2.0])).tolist() == [2.0, 3.0]


def test_energy_split(rng):
    eps = rng.normal(scale=1e-3, size=(20, 4))
    kappa, G = 175e9, 80e9
    split = energy_split(eps, np.full(20, kappa), np.full(20, G))
    tr = eps[:, :3].sum(axis=1)
    dev = eps - tr[:, None] / 3 * np.array([1, 1, 1, 0])
    total = 0.5 * kappa * tr**2 + G * np.sum(np.array([1, 1, 1, 2]) * dev * dev, axis=1)
    assert split.psi_plus + split.psi_minus == pytest.approx(total)
    assert np.all(split.psi_minus[tr > 0] == 0)
    stress = split.stress_plus + split.stress_minus
    expected = kappa * tr[:, None] * np.array([1, 1, 1, 0]) + 2 * G * dev
    assert stress == pytest.approx(expected)


def test_degraded_return_map_cracked():
    params = dict(kappa=175e9, G=80e9, sigma_y0=416e6, n=0.1, E=210e9)
    tension = np.array([[1e-5, 1e-5, 0.0, 0.0]])
    compression = -tension
    broken = degraded_return_map(tension, np.zeros(1), np.zeros(1), params, phi=1.0)
    assert broken["stress"] == pytest.approx(np.zeros((1, 4)), abs=1e-6)
    squeezed = degraded_return_map(compression, np.zeros(1), np.zeros(1), params, phi=1.0)
    assert squeezed["stress"][0, :3] == pytest.approx(np.full(3, 175e9 * -2e-5))
    assert squeezed["psi_p"][0] == 0.0


def test_degraded_return_map_softer_yield():
    params = dict(kappa=175e9, G=80e9, sigma_y0=416e6, n=0.1, E=210e9)
    eps = np.array([[3e-3, -3e-3, 0.0, 0.0]])
    intact = degraded_return_map(eps, np.zeros(1), np.zeros(1), params, phi=0.0)
    damaged = degraded_return_map(eps, np.zeros(1), np.zeros(1), params, phi=0.8)
    assert damaged["dgamma"][0] > intact["dgamma"][0] > 0
    psi_p = plastic_energy(intact["dgamma"][0], 0.0, 416e6, 210e9, 0.1)
    assert intact["psi_p"][0] == pytest.approx(psi_p)


def test_homogeneous_phase_field():
    mesh = rectangle(1.0, 1.0, 2, 2)
    geometry = ElementGeometry(mesh)
    H = 2e5
    phi = phasefield_solve(mesh, geometry, np.full((4, 9), H), GC, ELL)
    assert phi == pytest.approx(np.full(mesh.num_nodes, 2 * ELL * H / (GC + 2 * ELL * H)))


def test_phase_field_irreversible():
    mesh = rectangle(1.0, 1.0, 1, 1)
    geometry = ElementGeometry(mesh)
    previous = np.full(mesh.num_nodes, 0.5)
    assert np.all(phasefield_solve(mesh, geometry, np.zeros((1, 9)), GC, ELL) == 0.0)
    phi = phasefield_solve(mesh, geometry, np.zeros((1, 9)), GC, ELL, phi_old=previous,
                           irreversible=True)  # fmt: skip
    assert np.all(phi == 0.5)


def test_surface_energy_1d():
    # the optimal profile exp(-|x|/ell) dissipates Gc per unit crack length
    mesh = strip(20 * ELL * 1e3, nx=100, x0=-10 * ELL * 1e3)
    geometry = ElementGeometry(mesh)
    crack = np.flatnonzero(np.abs(mesh.nodes[:, 0]) < 1e-12)
    assert len(crack) == 3
    phi = phasefield_solve(mesh, geometry, np.zeros((100, 9)), GC, ELL,
                           fixed=(crack, np.ones(3)))  # fmt: skip
    width = mesh.nodes[:, 1].max()
    assert crack_surface_energy(geometry, phi, GC, ELL) == pytest.approx(GC * width, rel=0.02)
    x = mesh.nodes[:, 0]
    far = np.abs(x) > 2 * ELL
    assert phi[far] == pytest.approx(np.exp(-np.abs(x[far]) / ELL), abs=0.01)


def test_hydrogen_mass_conservation():
    mesh = strip(10.0, nx=40)
    geometry = ElementGeometry(mesh)
    x = mesh.nodes[:, 0]
    C_old = 1.0 + x / 10e-3
    C = hydrogen_step(mesh, geometry, C_old, np.zeros(mesh.num_nodes), 1e4, 1e-10, 2e-6)
    before = geometry.integrate(geometry.interpolate(C_old))
    after = geometry.integrate(geometry.interpolate(C))
    assert after == pytest.approx(before, rel=1e-10)
    # diffusion flattens the gradient
    assert np.ptp(C) < np.ptp(C_old)


def test_hydrogen_boltzmann_profile():
    mesh = strip(10.0, nx=100)
    geometry = ElementGeometry(mesh)
    x = mesh.nodes[:, 0]
    sigma_h = 5e10 * x
    C = np.ones(mesh.num_nodes)
    for _ in range(3):
        C = hydrogen_step(mesh, geometry, C, sigma_h, 1e8, 1e-10, 2e-6)

    expected = np.exp(2e-6 * sigma_h / (R_GAS * 293.15))
    assert C / C[np.argmin(x)] == pytest.approx(expected, rel=1e-3)


def test_hydrogen_prescribed_boundary():
    mesh = strip(10.0, nx=20)
    geometry = ElementGeometry(mesh)
    left = mesh.node_set("left")
    C = np.zeros(mesh.num_nodes)
    surface = sievert_concentration(5.0)
    for _ in range(5):
        C = hydrogen_step(mesh, geometry, C, np.zeros(mesh.num_nodes), 1e8, 1e-10, 2e-6,
                          fixed=(left, np.full(len(left), surface)))  # fmt: skip
    assert C == pytest.approx(np.full(mesh.num_nodes, surface), rel=1e-3)


def test_hydrogen_invalid_step():
    mesh = strip(1.0, nx=2)
    with pytest.raises(ValueError, match="time step"):
        hydrogen_step(mesh, ElementGeometry(mesh), np.zeros(mesh.num_nodes),
                      np.zeros(mesh.num_nodes), 0.0, 1e-10, 2e-6)  # fmt: skip


def test_seed_crack():
    mesh = rectangle(2.0, 2.0, 8, 8)
    geometry = ElementGeometry(mesh)
    H = np.zeros((64, 9))
    count = seed_crack(geometry, H, (0.0, 1e-3), (1e-3, 1e-3), GC, ELL)
    assert count > 0
    assert H.max() == pytest.approx(1e3 * GC / ELL)
    seeded = geometry.points[H > 0]
    assert np.all(np.abs(seeded[:, 1] - 1e-3) <= ELL / 4)
    assert np.all(seeded[:, 0] <= 1e-3 + ELL / 4)
    with pytest.raises(ValueError, match="positive length"):
        seed_crack(geometry, H, (0.0, 0.0), (0.0, 0.0), GC, ELL)


def test_check_resolution(caplog):
    mesh = rectangle(1.0, 1.0, 10, 10)
    assert check_resolution(mesh, 0.6e-3)
    with caplog.at_level(logging.WARNING, logger="weldfrac.fracture"):
        assert not check_resolution(mesh, 0.46e-3)
    assert "100 of 100 elements" in caplog.text


@pytest.fixture
def plate():
    return rectangle(4.0, 4.0, 4, 4)


def damage_column(mesh, x, y_max=np.inf):
    xy = mesh.nodes
    return ((np.abs(xy[:, 0] - x) < 1e-9) & (xy[:, 1] <= y_max + 1e-12)).astype(float)


def test_through_ligament(plate):
    top, bottom = plate.node_set("top"), plate.node_set("bottom")
    phi = damage_column(plate, 2e-3)
    assert through_ligament(plate, phi, bottom, top)
    partial = damage_column(plate, 2e-3, y_max=3e-3)
    assert not through_ligament(plate, partial, bottom, top)
    assert not through_ligament(plate, np.zeros(plate.num_nodes), bottom, top)


def test_through_ligament_inactive(plate):
    phi = damage_column(plate, 2e-3)
    # the column is only connected through elements that have been removed
    plate.active[:] = False
    assert not through_ligament(plate, phi, plate.node_set("bottom"), plate.node_set("top"))


def test_crack_path(plate):
    phi = damage_column(plate, 2e-3)
    path = crack_path(plate, phi)
    assert path.shape[1] == 2
    assert len(path) >= 2
    assert path[:, 0] == pytest.approx(np.full(len(path), 2e-3))
    assert np.all(np.diff(path[:, 1]) > 0) or np.all(np.diff(path[:, 1]) < 0)
    assert crack_path(plate, np.zeros(plate.num_nodes)).shape == (0, 2)


def test_crack_extension(plate):
    phi = damage_column(plate, 2e-3, y_max=2.5e-3)
    assert crack_extension(plate, phi, (2e-3, 0.0), direction=(0.0, 1.0)) == pytest.approx(2.5e-3)
    assert crack_extension(plate, phi, (2e-3, 3e-3), direction=(0.0, 1.0)) == 0.0


def test_fracture_model_homogeneous_damage():
    mesh = rectangle(1.0, 1.0, 1, 1)
    geometry = ElementGeometry(mesh)
    fields = FieldState(mesh)
    origin = mesh.closest_node((0.0, 0.0))
    fixed = [(mesh.node_set("left"), 0), ([origin], 1)]
    fractions = np.broadcast_to(np.eye(5)[0], (1, 9, 5))
    model = FractureModel(mesh, geometry, fields, MaterialDB.uniform(), fractions, fixed=fixed,
                          C_uniform=0.0)  # fmt: skip
    right = mesh.node_set("right")
    prescribed = (right * 2, np.full(len(right), 1e-6))
    assert model.solve_displacement(prescribed=prescribed) == pytest.approx(1.0)

    H = model.trial["H"]
    assert np.ptp(H) < 1e-6 * H.max()
    model.solve_phase_field()
    expected = 2 * ELL * H.max() / (GC + 2 * ELL * H.max())
    assert fields.phi == pytest.approx(np.full(mesh.num_nodes, expected), rel=1e-6)

    model.commit()
    assert model.trial is None
    assert np.all(fields.history["H"] == H)
    assert model.stored_energy() > 0
    reactions = model.reactions()
    # the prescribed pull is balanced by the fixed side
    assert reactions[right, 0].sum() == pytest.approx(-reactions[mesh.node_set("left"), 0].sum())


def test_energy_balance_homogeneous_bar():
    # the external work splits into stored elastic energy and crack surface energy
    mesh = rectangle(1.0, 1.0, 1, 1)
    geometry = ElementGeometry(mesh)
    fields = FieldState(mesh)
    origin = mesh.closest_node((0.0, 0.0))
    left, right = mesh.node_set("left"), mesh.node_set("right")
    fracture = replace(default_fracture_props()["ferrite"], Gc0=600.0)
    db = MaterialDB.uniform(sigma_y0=1e15, fracture=fracture)
    fractions = np.broadcast_to(np.eye(5)[0], (1, 9, 5))
    model = FractureModel(mesh, geometry, fields, db, fractions, fixed=[(left, 0), ([origin], 1)],
                          C_uniform=0.0)  # fmt: skip
    pulls = np.linspace(0.0, 4e-3, 41)
    work = force = 0.0
    for step, pull in zip(np.diff(pulls), pulls[1:]):
        previous = fields.phi.copy()
        model.solve_displacement(prescribed=(right * 2, np.full(len(right), pull)))
        model.solve_phase_field()
        model.commit()
        assert np.all(fields.phi >= previous)
        new_force = model.reactions()[right, 0].sum()
        work += 0.5 * (force + new_force) * step
        force = new_force

    assert fields.phi.min() > 0.5
    stored = model.stored_energy()
    surface = crack_surface_energy(geometry, fields.phi, model.toughness(), model.props.ell)
    assert stored < work
    assert work == pytest.approx(stored + surface, rel=5e-3)
