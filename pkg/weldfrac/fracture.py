"""
Elastoplastic phase-field fracture coupled to stress-assisted hydrogen diffusion.

The damage field ``phi`` degrades the tensile elastic energy with ``g = (1 - phi)**2`` and the
yield stress with ``g_p = beta g - beta + 1``. Toughness drops with the local diffusible
hydrogen concentration (wppm). All fields live on the nodes of the same quadratic mesh as the
displacements.
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .fem import (
    assemble_matrix,
    assemble_vector,
    orphan_dofs,
    rigid_modes,
    solve_linear,
)
from .mechanics import (
    IDENTITY,
    WEIGHTS,
    MechanicsModel,
    _radial_return,
    deviator,
    hydrostatic,
    trace,
)
from .metallurgy import R_GAS

logger = logging.getLogger(__name__)

#: Fraction of the plastic work driving damage
BETA = 0.1
#: Absolute service temperature of the diffusion drift term (K)
SERVICE_TEMPERATURE = 293.15
#: Damage level regarded as fully cracked
CRACKED = 0.95


@dataclass
class EnergySplit:
    """
    Volumetric-deviatoric split of the elastic energy.

    The damaged stress is ``g * stress_plus + stress_minus``.
    """

    psi_plus: np.ndarray
    psi_minus: np.ndarray
    stress_plus: np.ndarray
    stress_minus: np.ndarray


def energy_split(eps_e, kappa, G):
    """
    Split the elastic energy into a tensile-deviatoric part and a compressive part.

    :param eps_e: elastic strain tensors ``(..., 4)``
    :param kappa: bulk modulus (Pa)
    :param G: shear modulus (Pa)
    :rtype: EnergySplit
    """
    eps_e = np.asarray(eps_e, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    G = np.asarray(G, dtype=float)
    eps_vol = trace(eps_e)
    dev = deviator(eps_e)
    tension = np.maximum(eps_vol, 0.0)
    compression = np.minimum(eps_vol, 0.0)
    return EnergySplit(
        psi_plus=0.5 * kappa * tension**2 + G * np.sum(WEIGHTS * dev * dev, axis=-1),
        psi_minus=0.5 * kappa * compression**2,
        stress_plus=(kappa * tension)[..., None] * IDENTITY + 2 * G[..., None] * dev,
        stress_minus=(kappa * compression)[..., None] * IDENTITY,
    )


def plastic_energy(ep_eq, etp_eq, sigma_y0, E, n):
    """
    Plastic work density of power-law hardening.

    ``sigma_y0**2 / (E (n + 1)) [(1 + E (ep_eq + etp_eq) / sigma_y0)**(n + 1) - 1]``;
    zero where ``sigma_y0`` is infinite.
    """
    ebar = np.asarray(ep_eq, dtype=float) + np.asarray(etp_eq, dtype=float)
    sigma_y0 = np.asarray(sigma_y0, dtype=float)
    finite = np.isfinite(sigma_y0)
    s0 = np.where(finite, sigma_y0, 1.0)
    value = s0**2 / (E * (n + 1)) * ((1 + E * ebar / s0) ** (n + 1) - 1)
    return np.where(finite, value, 0.0)


def degradation(phi, beta=BETA):
    "Degradation functions ``(g, g_p)`` of the elastic energy and of the yield stress."
    phi = np.asarray(phi, dtype=float)
    g = (1.0 - phi) ** 2
    return g, beta * g - beta + 1.0


def history_update(psi_plus, H):
    "Crack driving history: the running maximum of the tensile elastic energy."
    return np.maximum(H, psi_plus)


def degraded_return_map(eps_e_trial, ep_eq, etp_eq, params, phi, beta=BETA, tangent=True):
    """
    Return mapping with the yield stress scaled by ``g_p(phi)`` and the tensile part of the
    stress scaled by ``g(phi)``.

    Besides the results of :func:`~weldfrac.mechanics.return_map` the dict holds ``psi_p``,
    the plastic work density at the updated equivalent strains.
    """
    shape = np.shape(ep_eq)
    g, g_p = degradation(np.broadcast_to(phi, shape), beta)
    values = [np.broadcast_to(np.asarray(params[name], dtype=float), shape)
              for name in ("kappa", "G", "sigma_y0", "n", "E")]  # fmt: skip
    ep_eq = np.asarray(ep_eq, dtype=float)
    etp_eq = np.asarray(etp_eq, dtype=float)
    result = _radial_return(
        np.asarray(eps_e_trial, dtype=float), ep_eq + etp_eq, *values, g=g, g_p=g_p,
        split=True, tangent=tangent,
    )  # fmt: skip
    kappa, G, sigma_y0, n, E = values
    result["psi_p"] = plastic_energy(ep_eq + result["dgamma"], etp_eq, sigma_y0, E, n)
    return result


def gc_of_C(C, props):
    """
    Hydrogen-degraded critical energy release rate (J/m²).

    ``[f_min + (1 - f_min) exp(-q1 C**q2)] Gc0`` with ``C`` in wppm.

    :param props: :class:`~weldfrac.materials.FractureProps` (scalar or mixed arrays)
    """
    C = np.maximum(np.asarray(C, dtype=float), 0.0)
    factor = props.f_min + (1 - props.f_min) * np.exp(-props.q1 * C**props.q2)
    return factor * props.Gc0


def sievert_concentration(pressure, solubility=0.077):
    "Boundary concentration (wppm) in equilibrium with hydrogen gas at ``pressure`` (MPa)."
    return solubility * np.sqrt(np.maximum(pressure, 0.0))


def phasefield_solve(mesh, geometry, driving, Gc, ell, phi_old=None, fixed=None,
                     irreversible=False, method="direct"):  # fmt: skip
    """
    Solve the linear damage balance ``Gc/ell (phi - ell² lap phi) = 2 (1 - phi) D``.

    :param driving: crack driving energy ``D = H + beta psi_p`` at the integration points
    :param Gc: critical energy release rate at the integration points (J/m²)
    :param ell: length scale at the integration points (m)
    :param phi_old: previous damage, kept on nodes outside the active elements and used as
        a lower bound when ``irreversible`` is set
    :param fixed: optional ``(nodes, values)`` of prescribed damage
    :returns: nodal damage clipped to ``[0, 1]``
    """
    active = np.flatnonzero(mesh.active)
    w = geometry.weights[active]
    N = geometry.N
    dNdx = geometry.dNdx[active]
    D = np.asarray(driving, dtype=float)[active]
    Gc = np.broadcast_to(np.asarray(Gc, dtype=float), geometry.weights.shape)[active]
    ell = np.broadcast_to(np.asarray(ell, dtype=float), geometry.weights.shape)[active]

    K_e = np.einsum("eq,qa,qb->eab", w * (Gc / ell + 2 * D), N, N) + np.einsum(
        "eq,eqai,eqbi->eab", w * Gc * ell, dNdx, dNdx
    )
    f_e = np.einsum("eq,qa->ea", 2 * w * D, N)
    K = assemble_matrix(mesh, K_e, active)
    f = assemble_vector(mesh, f_e, active)

    phi_old = np.zeros(mesh.num_nodes) if phi_old is None else np.asarray(phi_old, dtype=float)
    values = phi_old.copy()
    constrained = [orphan_dofs(mesh)]
    if fixed is not None:
        nodes, prescribed = fixed
        values[nodes] = prescribed
        constrained.append(np.asarray(nodes, dtype=np.int64))

    phi = solve_linear(K, f, fixed=np.unique(np.concatenate(constrained)), values=values,
                       modes=rigid_modes(mesh, 1), method=method)  # fmt: skip
    phi = np.clip(phi, 0.0, 1.0)
    if irreversible:
        phi = np.maximum(phi, phi_old)
    return phi


def hydrogen_step(mesh, geometry, C_old, sigma_h, dt, D, V_h, fixed=None,
                  temperature=SERVICE_TEMPERATURE):  # fmt: skip
    """
    Backward Euler step of ``dC/dt = div(D grad C - D C V_h / (R T) grad sigma_h)``.

    Boundaries without prescribed concentration are closed. Negative concentrations after
    the solve are clipped with a warning.

    :param C_old: nodal concentration (wppm)
    :param sigma_h: nodal hydrostatic stress (Pa)
    :param D: diffusivity (m²/s) at the integration points
    :param V_h: partial molar volume (m³/mol) at the integration points
    :param fixed: optional ``(nodes, values)`` of prescribed concentrations
    :param float temperature: absolute temperature (K)
    :returns: nodal concentration
    """
    if not dt > 0:
        raise ValueError("time step must be positive")

    active = np.flatnonzero(mesh.active)
    shape = geometry.weights.shape
    w = geometry.weights[active]
    N = geometry.N
    dNdx = geometry.dNdx[active]
    D = np.broadcast_to(np.asarray(D, dtype=float), shape)[active]
    V_h = np.broadcast_to(np.asarray(V_h, dtype=float), shape)[active]
    grad_sigma = geometry.gradient(sigma_h)[active]
    drift = D * V_h / (R_GAS * temperature)

    M_e = np.einsum("eq,qa,qb->eab", w / dt, N, N)
    K_e = np.einsum("eq,eqai,eqbi->eab", w * D, dNdx, dNdx) - np.einsum(
        "eq,eqai,eqi,qb->eab", w * drift, dNdx, grad_sigma, N
    )
    A = assemble_matrix(mesh, M_e + K_e, active)
    C_old = np.asarray(C_old, dtype=float)
    rhs = assemble_vector(mesh, np.einsum("eab,eb->ea", M_e, C_old[mesh.elements[active]]),
                          active)  # fmt: skip

    values = C_old.copy()
    constrained = [orphan_dofs(mesh)]
    if fixed is not None:
        nodes, prescribed = fixed
        values[nodes] = prescribed
        constrained.append(np.asarray(nodes, dtype=np.int64))

    C = solve_linear(A, rhs, fixed=np.unique(np.concatenate(constrained)), values=values,
                     modes=rigid_modes(mesh, 1))  # fmt: skip
    if C.min() < 0:
        lost = geometry.integrate(geometry.interpolate(np.minimum(C, 0.0)))
        message = f"clipped negative hydrogen concentrations (min {C.min():.3e} wppm)"
        logger.warning("%s; mass balance off by %.3e wppm·m²", message, -lost)
        warnings.warn(message, RuntimeWarning, stacklevel=2)
        C = np.maximum(C, 0.0)
    return C


def crack_surface_energy(geometry, phi, Gc, ell):
    "Regularized crack surface energy ``int Gc/(2 ell) (phi² + ell² |grad phi|²)`` (J/m)."
    phi_ip = geometry.interpolate(phi)
    grad = geometry.gradient(phi)
    density = Gc / (2 * ell) * (phi_ip**2 + ell**2 * np.sum(grad * grad, axis=-1))
    return geometry.integrate(density)


def elastic_energy(geometry, psi):
    return geometry.integrate(psi)


def seed_crack(geometry, H, start, end, Gc, ell, factor=1e3, width=None):
    """
    Seed a crack as a band of large history energy along a segment.

    Integration points within ``width`` (default ``ell / 4``) of the segment receive
    ``factor * Gc / ell``. ``H`` is modified in place.

    :returns: number of seeded points
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if np.allclose(start, end):
        raise ValueError("crack segment must have positive length")

    Gc = np.broadcast_to(np.asarray(Gc, dtype=float), H.shape)
    ell = np.broadcast_to(np.asarray(ell, dtype=float), H.shape)
    width = ell / 4 if width is None else np.broadcast_to(width, H.shape)
    axis = end - start
    points = geometry.points - start
    s = np.clip(points @ axis / (axis @ axis), 0.0, 1.0)
    distance = np.linalg.norm(points - s[..., None] * axis, axis=-1)
    mask = (distance <= width) & geometry.mesh.active[:, None]
    H[mask] = np.maximum(H[mask], factor * Gc[mask] / ell[mask])
    return int(mask.sum())


def check_resolution(mesh, ell, elements=None, ratio=5.0):
    """
    Warn when elements are too coarse to resolve the damage length scale.

    :returns: ``True`` when every listed element is at most ``ell / ratio`` wide
    """
    elements = np.flatnonzero(mesh.active) if elements is None else np.asarray(elements)
    sizes = mesh.element_sizes(elements)
    ell = np.asarray(ell, dtype=float)
    ell_min = ell[elements].min() if ell.ndim else float(ell)
    coarse = int(np.sum(sizes > ell_min / ratio))
    if coarse:
        logger.warning(
            "%d of %d elements exceed ell/%g = %.3g mm (largest %.3g mm)",
            coarse, len(sizes), ratio, ell_min / ratio * 1e3, sizes.max() * 1e3,
        )  # fmt: skip
    return coarse == 0


def _damaged_graph(mesh, phi, threshold):
    damaged = np.asarray(phi) >= threshold
    conn = mesh.elements[mesh.active]
    a = np.repeat(conn, 8, axis=1).ravel()
    b = np.tile(conn, (1, 8)).ravel()
    keep = damaged[a] & damaged[b]
    graph = sp.coo_matrix(
        (np.ones(int(keep.sum())), (a[keep], b[keep])), shape=(mesh.num_nodes, mesh.num_nodes)
    )
    return damaged, graph


def through_ligament(mesh, phi, nodes_a, nodes_b, threshold=CRACKED):
    """
    Whether damaged nodes form a connected path between two node sets.

    Nodes are connected when they share an active element and both reach ``threshold``.
    """
    damaged, graph = _damaged_graph(mesh, phi, threshold)
    nodes_a = np.asarray(nodes_a)[damaged[nodes_a]]
    nodes_b = np.asarray(nodes_b)[damaged[nodes_b]]
    if not nodes_a.size or not nodes_b.size:
        return False

    _, labels = connected_components(graph, directed=False)
    return bool(np.intersect1d(labels[nodes_a], labels[nodes_b]).size)


def crack_path(mesh, phi, threshold=CRACKED):
    """
    Ordered polyline through the damaged nodes.

    Nodes at or above ``threshold`` are sorted along their principal direction and averaged
    in bins of the smallest element size.

    :returns: ``(k, 2)`` coordinates (m); empty when fewer than two nodes are damaged
    """
    damaged = np.flatnonzero(np.asarray(phi) >= threshold)
    if damaged.size < 2:
        return np.zeros((0, 2))

    points = mesh.nodes[damaged]
    center = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - center, full_matrices=False)
    s = (points - center) @ vt[0]
    h = mesh.element_sizes(np.flatnonzero(mesh.active)).min() / 2
    bins = np.floor((s - s.min()) / h).astype(np.int64)
    order = np.unique(bins)
    return np.array([points[bins == b].mean(axis=0) for b in order])


def crack_extension(mesh, phi, origin, direction=(1.0, 0.0), threshold=CRACKED, tol=1e-9):
    """
    Crack growth along a straight ligament.

    :returns: distance (m) from ``origin`` to the farthest damaged node on the line through
        ``origin`` along ``direction``; 0 when none is damaged ahead of ``origin``
    """
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    relative = mesh.nodes - np.asarray(origin, dtype=float)
    along = relative @ direction
    across = np.abs(relative @ np.array([-direction[1], direction[0]]))
    on_line = (across <= tol) & (along >= 0) & (np.asarray(phi) >= threshold)
    return float(along[on_line].max()) if on_line.any() else 0.0


class FractureModel:
    """
    Stage-2 fields, parameters and the individual solves of the staggered scheme.

    Material parameters are mixed once from the frozen phase fractions. The displacement
    solve starts from the stage-1 state: ``eps_initial`` is the part of the total strain that
    does not produce stress (stage-1 inelastic strains minus the stage-1 total strain), so
    residual stresses carry over with ``u = 0``.

    :param fields: :class:`~weldfrac.fem.FieldState`; ``eps_p``, ``ep_eq`` and ``etp_eq``
        history arrays may be preloaded after construction
    :param fractions: phase fractions at the integration points ``(m, 9, 5)``
    :param fixed: constrained displacement components, as for
        :class:`~weldfrac.mechanics.MechanicsModel`
    :param C_uniform: uniform environmental concentration (wppm) used when hydrogen does not
        diffuse
    """

    def __init__(self, mesh, geometry, fields, db, fractions, beta=BETA, fixed=(),
                 temperature=20.0, irreversible=False, method="direct", newton_tol=1e-8,
                 max_iter=25, C_uniform=None):  # fmt: skip
        self.mesh = mesh
        self.geometry = geometry
        self.fields = fields
        self.beta = beta
        self.irreversible = irreversible
        self.method = method
        self.mechanics = MechanicsModel(
            mesh, geometry, fields, db, fixed=fixed, newton_tol=newton_tol, max_iter=max_iter,
            method=method,
        )  # fmt: skip
        self.history = fields.history
        fields.register("H")
        fields.register("psi_p")
        fractions = np.asarray(fractions, dtype=float)
        T = np.full(geometry.weights.shape, float(temperature))
        self.params = self.mechanics.material(T, fractions)
        self.props = db.mix_fracture(fractions)
        self.eps_initial = np.zeros(geometry.weights.shape + (4,))
        self.C_uniform = C_uniform
        self.trial = None

    def toughness(self):
        "Hydrogen-degraded toughness at the integration points."
        if self.C_uniform is not None:
            return gc_of_C(np.full(self.geometry.weights.shape, self.C_uniform), self.props)
        return gc_of_C(self.geometry.interpolate(self.fields.C), self.props)

    def seed(self, start, end, **options):
        return seed_crack(self.geometry, self.history["H"], start, end, self.props.Gc0,
                          self.props.ell, **options)  # fmt: skip

    def solve_displacement(self, prescribed=None, u0=None):
        """
        Equilibrium with the current damage.

        :returns: relative change of the displacement against the previous pass
        """
        g, g_p = degradation(self.geometry.interpolate(self.fields.phi), self.beta)
        previous = self.fields.u if self.trial is None else self.trial["u"]
        u0 = previous if u0 is None else u0
        u, local = self.mechanics.solve(
            self.params, self.eps_initial, u0=u0, prescribed=prescribed, g=g, g_p=g_p, split=True
        )
        active = np.flatnonzero(self.mesh.active)
        eps_e = local["eps_e"] - local["plastic_strain_increment"]
        split = energy_split(eps_e, self.params["kappa"][active], self.params["G"][active])
        H = self.history["H"].copy()
        H[active] = history_update(split.psi_plus, H[active])
        psi_p = self.history["psi_p"].copy()
        psi_p[active] = plastic_energy(
            self.history["ep_eq"][active] + local["dgamma"],
            self.history["etp_eq"][active],
            self.params["sigma_y0"][active],
            self.params["E"][active],
            self.params["n"][active],
        )
        stress = np.zeros(self.geometry.weights.shape + (4,))
        stress[active] = local["stress"]
        self.trial = {"u": u, "local": local, "H": H, "psi_p": psi_p, "stress": stress,
                      "psi_plus": split.psi_plus}  # fmt: skip
        scale = max(float(np.abs(u).max()), 1e-30)
        return float(np.abs(u - previous).max()) / scale

    def solve_phase_field(self):
        "Damage update from the trial history; returns the largest nodal change."
        H = self.trial["H"] if self.trial else self.history["H"]
        psi_p = self.trial["psi_p"] if self.trial else self.history["psi_p"]
        phi = phasefield_solve(
            self.mesh, self.geometry, H + self.beta * psi_p, self.toughness(), self.props.ell,
            phi_old=self.fields.phi, irreversible=self.irreversible, method=self.method,
        )  # fmt: skip
        change = float(np.abs(phi - self.fields.phi).max())
        self.fields.phi[:] = phi
        return change

    def hydrostatic_stress(self):
        "Nodal hydrostatic stress projected from the latest stresses."
        stress = self.trial["stress"] if self.trial else self.history["stress"]
        return self.geometry.project_to_nodes(hydrostatic(stress))

    def solve_hydrogen(self, dt, fixed=None, C_old=None):
        """
        Diffusion step with the latest hydrostatic stress; returns the largest nodal change
        relative to the largest concentration.
        """
        C_old = self.fields.C if C_old is None else C_old
        C = hydrogen_step(self.mesh, self.geometry, C_old, self.hydrostatic_stress(), dt,
                          self.props.D_diff, self.props.V_h, fixed=fixed)  # fmt: skip
        change = float(np.abs(C - self.fields.C).max()) / max(float(np.abs(C).max()), 1e-30)
        self.fields.C[:] = C
        return change

    def commit(self):
        "Accept the trial state of the increment."
        trial = self.trial
        self.mechanics.commit(trial["u"], trial["local"])
        self.history["H"][...] = trial["H"]
        self.history["psi_p"][...] = trial["psi_p"]
        self.trial = None

    def reactions(self, u=None):
        g, g_p = degradation(self.geometry.interpolate(self.fields.phi), self.beta)
        u = self.fields.u if u is None else u
        return self.mechanics.reactions(u, self.params, self.eps_initial, g, g_p, split=True)

    def stored_energy(self):
        "Degraded elastic energy of the committed state."
        active = np.flatnonzero(self.mesh.active)
        strain = self.history["strain"][active]
        eps_e = strain - self.eps_initial[active] - self.history["eps_p"][active]
        split = energy_split(eps_e, self.params["kappa"][active], self.params["G"][active])
        g, _ = degradation(self.geometry.interpolate(self.fields.phi)[active], self.beta)
        psi = np.zeros(self.geometry.weights.shape)
        psi[active] = g * split.psi_plus + split.psi_minus
        return elastic_energy(self.geometry, psi)


__all__ = [
    "BETA",
    "CRACKED",
    "EnergySplit",
    "FractureModel",
    "check_resolution",
    "crack_extension",
    "crack_path",
    "crack_surface_energy",
    "degradation",
    "degraded_return_map",
    "elastic_energy",
    "energy_split",
    "gc_of_C",
    "history_update",
    "hydrogen_step",
    "phasefield_solve",
    "plastic_energy",
    "seed_crack",
    "sievert_concentration",
]
