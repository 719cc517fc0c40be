"""
Quasi-static plane-strain mechanics with phase transformations.

Strains and stresses are stored as tensor components ``(xx, yy, zz, xy)`` (tensorial shear).
The total strain splits additively into elastic, density-based eigenstrain, plastic and
transformation-induced plastic (TRIP) parts; an annealing reference strain keeps material
that passed the annealing temperature stress-free in its current configuration.
"""
import logging

import numpy as np

from .fem import assemble_matrix, assemble_vector, element_dofs, newton_solve, orphan_dofs
from .fem import rigid_modes as _rigid_modes
from .types import ConvergenceError, PHASES

logger = logging.getLogger(__name__)

IDENTITY = np.array([1.0, 1.0, 1.0, 0.0])
#: Contraction weights of the 4-component tensor storage
WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0])
VOIGT = [0, 1, 3]
DEVIATORIC_PROJECTOR = np.eye(4) - np.outer(IDENTITY, IDENTITY) / 3
TRANSFORMED_PHASES = ("ferrite", "pearlite", "bainite", "martensite")


def trace(t):
    return t[..., 0] + t[..., 1] + t[..., 2]


def deviator(t):
    return t - trace(t)[..., None] / 3 * IDENTITY


def tensor_norm(t):
    return np.sqrt(np.sum(WEIGHTS * t * t, axis=-1))


def von_mises(stress):
    return np.sqrt(1.5) * tensor_norm(deviator(stress))


def hydrostatic(stress):
    return trace(stress) / 3


def hoop_stress(stress, points, center=(0.0, 0.0)):
    "Circumferential stress about ``center`` at the given points."
    d = np.asarray(points) - np.asarray(center)
    theta = np.arctan2(d[..., 1], d[..., 0])
    s, c = np.sin(theta), np.cos(theta)
    return s * s * stress[..., 0] + c * c * stress[..., 1] - 2 * s * c * stress[..., 3]


def flow_stress(ebar, sigma_y0, E, n):
    "Power-law flow stress ``sigma_y0 (1 + E ebar / sigma_y0)**n``."
    with np.errstate(invalid="ignore", divide="ignore"):
        value = sigma_y0 * (1 + E * ebar / sigma_y0) ** n
    return np.where(np.isinf(sigma_y0), np.inf, value)


def hardening_modulus(ebar, sigma_y0, E, n):
    with np.errstate(invalid="ignore", divide="ignore"):
        value = n * E * (1 + E * ebar / sigma_y0) ** (n - 1)
    return np.where(np.isinf(sigma_y0), 0.0, value)


def eigenstrain(T, state, rho_ref, db):
    """
    Isotropic thermal and transformation strain from the mixed density.

    :param T: temperature (°C)
    :param state: :class:`~weldfrac.types.PhaseState` or fractions array
    :param rho_ref: reference density (kg/m³)
    :returns: tensor components with shape ``(..., 4)``
    """
    rho = db.mix("rho", state, T)
    return (np.cbrt(np.asarray(rho_ref) / rho) - 1.0)[..., None] * IDENTITY


def trip_increment(stress_dev, dX, X, K_trip):
    """
    Greenwood-Johnson transformation plasticity increment.

    ``sum_i 3 K_i (1 - X_i) <dX_i> s`` where only positive fraction increments contribute.

    :param stress_dev: deviatoric stress ``(..., 4)``
    :param dX: fraction increments ``(..., k)``
    :param X: end-of-step fractions ``(..., k)``
    :param K_trip: TRIP parameters ``(k,)`` in 1/Pa
    """
    coefficient = 3 * np.sum(
        np.asarray(K_trip) * (1 - np.asarray(X)) * np.maximum(np.asarray(dX), 0.0), axis=-1
    )
    return coefficient[..., None] * np.asarray(stress_dev)


def equivalent_strain(strain):
    "Equivalent strain ``sqrt(2/3) |e|`` of a deviatoric strain tensor."
    return np.sqrt(2.0 / 3.0) * tensor_norm(strain)


def _radial_return(eps_e, ebar, kappa, G, sigma_y0, n, E, g=1.0, g_p=1.0, split=False,
                   tangent=True, tol=1e-10, max_iter=50):  # fmt: skip
    """
    Return mapping shared by the undamaged and damaged models.

    Plasticity is solved on the effective stress with the yield stress scaled by ``g_p``; the
    stress is then degraded by ``g`` (deviatoric and, with ``split``, tensile volumetric part).
    """
    g = np.broadcast_to(np.asarray(g, dtype=float), ebar.shape)
    g_p = np.broadcast_to(np.asarray(g_p, dtype=float), ebar.shape)
    eps_vol = trace(eps_e)
    s_trial = 2 * G[..., None] * deviator(eps_e)
    norm_trial = tensor_norm(s_trial)
    q_trial = np.sqrt(1.5) * norm_trial
    yield_trial = g_p * flow_stress(ebar, sigma_y0, E, n)
    plastic = q_trial > yield_trial * (1 + 1e-12)

    dgamma = np.zeros(ebar.shape)
    if plastic.any():
        q, G_p, k = q_trial[plastic], G[plastic], g_p[plastic]
        s0, E_p, n_p, e0 = sigma_y0[plastic], E[plastic], n[plastic], ebar[plastic]
        x = np.zeros(q.shape)
        for _ in range(max_iter):
            f = q - 3 * G_p * x - k * flow_stress(e0 + x, s0, E_p, n_p)
            slope = -3 * G_p - k * hardening_modulus(e0 + x, s0, E_p, n_p)
            x = np.maximum(x - f / slope, 0.0)
            if np.all(np.abs(f) <= tol * s0):
                break
        else:
            raise ConvergenceError("return mapping did not converge", max_iter, np.abs(f).max())
        dgamma[plastic] = x

    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(norm_trial[..., None] > 0, s_trial / norm_trial[..., None], 0.0)
        factor = np.where(plastic, 1 - 3 * G * dgamma / q_trial, 1.0)

    s = factor[..., None] * s_trial
    if split:
        volumetric = g * kappa * np.maximum(eps_vol, 0) - kappa * np.maximum(-eps_vol, 0)
        bulk = np.where(eps_vol > 0, g * kappa, kappa)
    else:
        volumetric = kappa * eps_vol
        bulk = kappa

    result = {
        "stress": volumetric[..., None] * IDENTITY + g[..., None] * s,
        "effective_deviator": s,
        "dgamma": dgamma,
        "plastic_strain_increment": np.sqrt(1.5) * dgamma[..., None] * direction,
        "eps_vol": eps_vol,
        "plastic": plastic,
    }
    if tangent:
        H = g_p * hardening_modulus(ebar + dgamma, sigma_y0, E, n)
        with np.errstate(invalid="ignore", divide="ignore"):
            B = np.where(
                plastic, 6 * G * G * (dgamma / q_trial - 1 / (3 * G + H)), 0.0
            )
        outer = np.einsum("...i,...j->...ij", direction, direction * WEIGHTS)
        C = (
            (2 * G * factor * g)[..., None, None] * DEVIATORIC_PROJECTOR
            + (B * g)[..., None, None] * outer
            + np.asarray(bulk)[..., None, None] * np.outer(IDENTITY, IDENTITY)
        )
        result["tangent"] = C

    return result


def return_map(eps_e_trial, ep_eq, etp_eq, params, tangent=True):
    """
    Radial return for power-law J2 plasticity.

    Hardening is driven by the sum of the equivalent plastic and TRIP strains.

    :param eps_e_trial: trial elastic strain ``(..., 4)``
    :param dict params: ``kappa``, ``G``, ``sigma_y0``, ``n``, ``E`` arrays
    :returns: dict with ``stress``, ``dgamma``, ``plastic_strain_increment`` and ``tangent``
        (4x4 tensor-component tangent)
    :raises ConvergenceError: if the plastic multiplier iteration fails
    """
    return _radial_return(
        np.asarray(eps_e_trial, dtype=float),
        np.asarray(ep_eq, dtype=float) + np.asarray(etp_eq, dtype=float),
        *(np.broadcast_to(np.asarray(params[name], dtype=float), np.shape(ep_eq))
          for name in ("kappa", "G", "sigma_y0", "n", "E")),
        tangent=tangent,
    )  # fmt: skip


def anneal(history, T, T_a):
    """
    Erase the hardening history of points at or above the annealing temperature.

    :param dict history: arrays ``eps_p``, ``ep_eq``, ``eps_tp``, ``etp_eq``, modified in place
    :returns: boolean mask of the annealed points
    """
    mask = np.asarray(T) >= T_a
    if mask.any():
        history["eps_p"][mask] = 0.0
        history["ep_eq"][mask] = 0.0
        history["eps_tp"][mask] = 0.0
        history["etp_eq"][mask] = 0.0
    return mask


def voigt_tangent(C):
    "Tensor-component tangent ``(..., 4, 4)`` to engineering-shear Voigt ``(..., 3, 3)``."
    D = C[..., VOIGT, :][..., :, VOIGT].copy()
    D[..., :, 2] *= 0.5
    return D


def strain_displacement(dNdx):
    "B matrices ``(..., 3, 16)`` mapping element displacements to engineering strains."
    shape = dNdx.shape[:-2]
    B = np.zeros(shape + (3, 16))
    B[..., 0, 0::2] = dNdx[..., 0]
    B[..., 1, 1::2] = dNdx[..., 1]
    B[..., 2, 0::2] = dNdx[..., 1]
    B[..., 2, 1::2] = dNdx[..., 0]
    return B


class MechanicsModel:
    """
    Equilibrium solver and integration point history of the residual stress analysis.

    History arrays are registered in ``fields`` so that step bisection and element activation
    handle them: ``eps_p``, ``ep_eq``, ``eps_tp``, ``etp_eq``, ``rho_ref``, ``eps_ref``,
    ``stress`` and ``strain``.

    :param mesh: :class:`~weldfrac.mesh.Mesh`
    :param geometry: :class:`~weldfrac.fem.ElementGeometry` of ``mesh``
    :param fields: :class:`~weldfrac.fem.FieldState`
    :param db: :class:`~weldfrac.materials.MaterialDB`
    :param float annealing_temperature: annealing temperature (°C)
    :param fixed: list of ``(node indices, component)`` pairs with component 0 (x) or 1 (y)
    """

    def __init__(self, mesh, geometry, fields, db, annealing_temperature=1400.0, fixed=(),
                 newton_tol=1e-8, max_iter=25, method="direct"):  # fmt: skip
        self.mesh = mesh
        self.geometry = geometry
        self.fields = fields
        self.db = db
        self.annealing_temperature = float(annealing_temperature)
        self.fixed = list(fixed)
        self.newton_tol = newton_tol
        self.max_iter = max_iter
        self.method = method
        self.B = strain_displacement(geometry.dNdx)
        self.history = fields.history
        for name in ("eps_p", "eps_tp", "eps_ref", "stress", "strain"):
            fields.register(name, (4,))
        for name in ("ep_eq", "etp_eq", "rho_ref"):
            fields.register(name)
        self.K_trip = np.array([db.phase(name).K_trip for name in TRANSFORMED_PHASES])
        self.last_iterations = 0

    def fixed_dofs(self):
        dofs = [np.asarray(nodes, dtype=np.int64) * 2 + comp for nodes, comp in self.fixed]
        dofs.append(orphan_dofs(self.mesh, 2))
        return np.unique(np.concatenate(dofs)) if dofs else np.zeros(0, dtype=np.int64)

    def material(self, T, fractions):
        "Mixed elastic and hardening parameters at every integration point."
        kappa = self.db.mix("kappa", fractions, T)
        G = self.db.mix("G_shear", fractions, T)
        return {
            "kappa": kappa,
            "G": G,
            "E": 9 * kappa * G / (3 * kappa + G),
            "sigma_y0": self.db.mix("sigma_y0", fractions, T),
            "n": self.db.mix("n", fractions, T),
        }

    def total_strain(self, u, elements=None):
        "Total strain tensors ``(k, 9, 4)`` of the given (default: active) elements."
        elements = np.flatnonzero(self.mesh.active) if elements is None else elements
        ue = np.asarray(u).reshape(-1)[element_dofs(self.mesh, elements, 2)]
        e = np.einsum("eqij,ej->eqi", self.B[elements], ue)
        return np.stack([e[..., 0], e[..., 1], np.zeros_like(e[..., 0]), 0.5 * e[..., 2]], -1)

    def evaluate(self, u, params, eps_inelastic, g=1.0, g_p=1.0, split=False, tangent=True):
        """
        Stresses of the active elements and the assembled internal force and tangent.

        :param eps_inelastic: strains not produced by stress, excluding the plastic strain,
            over all elements ``(m, 9, 4)``
        :returns: ``(f_int, K, local)``, where ``local`` holds the return mapping results for
            the active elements
        """
        active = np.flatnonzero(self.mesh.active)

        def pick(value):
            value = np.asarray(value, dtype=float)
            return value[active] if value.ndim >= 2 else value

        strain = self.total_strain(u, active)
        eps_e = strain - eps_inelastic[active] - self.history["eps_p"][active]
        ebar = self.history["ep_eq"][active] + self.history["etp_eq"][active]
        local = _radial_return(
            eps_e, ebar, pick(params["kappa"]), pick(params["G"]), pick(params["sigma_y0"]),
            pick(params["n"]), pick(params["E"]), pick(g), pick(g_p), split, tangent,
        )  # fmt: skip
        local["strain"] = strain
        local["eps_e"] = eps_e
        w = self.geometry.weights[active]
        B = self.B[active]
        f_e = np.einsum("eq,eqij,eqi->ej", w, B, local["stress"][..., VOIGT])
        f_int = assemble_vector(self.mesh, f_e, active, components=2)
        K = None
        if tangent:
            D = voigt_tangent(local["tangent"])
            K_e = np.einsum("eq,eqia,eqij,eqjb->eab", w, B, D, B)
            K = assemble_matrix(self.mesh, K_e, active, components=2)
        return f_int, K, local

    def solve(self, params, eps_inelastic, u0=None, prescribed=None, g=1.0, g_p=1.0,
              split=False):  # fmt: skip
        """
        Newton solve of global equilibrium without external loads.

        :param prescribed: optional ``(dofs, values)`` of additional Dirichlet conditions
        :returns: ``(u (n, 2), local)``
        :raises ConvergenceError: on Newton failure
        """
        u = (self.fields.u if u0 is None else np.asarray(u0)).reshape(-1).copy()
        fixed = [self.fixed_dofs()]
        if prescribed is not None:
            dofs, values = prescribed
            u[dofs] = values
            fixed.append(np.asarray(dofs, dtype=np.int64))
        fixed = np.unique(np.concatenate(fixed))
        E_ref = float(np.max(np.where(np.isfinite(params["E"]), params["E"], 0.0)))
        h = float(self.mesh.element_sizes(np.flatnonzero(self.mesh.active)).min())
        cache = {}

        def residual(x):
            f_int, K, local = self.evaluate(x, params, eps_inelastic, g, g_p, split)
            cache["local"] = local
            return f_int, K

        result = newton_solve(
            residual, u, tol=self.newton_tol, max_iter=self.max_iter, fixed=fixed,
            atol=1e-12 * E_ref * h, method=self.method, modes=_rigid_modes(self.mesh, 2),
        )  # fmt: skip
        self.last_iterations = result.iterations
        return result.x.reshape(-1, 2), cache["local"]

    def reactions(self, u, params, eps_inelastic, g=1.0, g_p=1.0, split=False):
        f_int, _, _ = self.evaluate(u, params, eps_inelastic, g, g_p, split, tangent=False)
        return f_int.reshape(-1, 2)

    def commit(self, u, local):
        "Store the converged displacement and update the history of the active elements."
        active = np.flatnonzero(self.mesh.active)
        h = self.history
        self.fields.u[:] = u
        h["eps_p"][active] += local["plastic_strain_increment"]
        h["ep_eq"][active] += local["dgamma"]
        h["stress"][active] = local["stress"]
        h["strain"][active] = local["strain"]

    def reset_reference(self, elements, eps_eig):
        """
        Make the listed elements stress-free in the current configuration.

        :param eps_eig: eigenstrains of the listed elements ``(k, 9, 4)``
        """
        h = self.history
        strain = self.total_strain(self.fields.u, elements)
        h["eps_ref"][elements] = strain - eps_eig - h["eps_p"][elements] - h["eps_tp"][elements]
        h["stress"][elements] = 0.0
        h["strain"][elements] = strain

    def equilibrium_step(self, T, phases, phases_old):
        """
        Thermo-metallurgical increment of the residual stress analysis.

        Temperatures and phase fractions are frozen at their end-of-step values. Annealing,
        the TRIP increment (with the beginning-of-step deviatoric stress) and the eigenstrain
        are applied before the equilibrium Newton solve; the history is committed on success.

        :param T: integration point temperatures ``(m, 9)`` (°C)
        :param phases: end-of-step :class:`~weldfrac.types.PhaseState` ``(m, 9)``
        :param phases_old: beginning-of-step phase state
        :raises ConvergenceError: on Newton failure (history left untouched)
        """
        h = self.history
        active = self.mesh.active
        fractions = phases.fractions()
        params = self.material(T, fractions)

        dX = fractions[..., :4] - phases_old.fractions()[..., :4]
        d_tp = trip_increment(deviator(h["stress"]), dX, fractions[..., :4], self.K_trip)
        d_tp[~active] = 0.0
        eps_tp = h["eps_tp"] + d_tp
        etp_eq = h["etp_eq"] + equivalent_strain(d_tp)
        eps_eig = eigenstrain(T, fractions, np.where(h["rho_ref"] > 0, h["rho_ref"], 1.0), self.db)

        saved = {
            name: h[name].copy() for name in ("eps_p", "ep_eq", "eps_tp", "etp_eq", "eps_ref")
        }
        h["eps_tp"][...] = eps_tp
        h["etp_eq"][...] = etp_eq
        annealed = anneal(h, np.where(active[:, None], T, -np.inf), self.annealing_temperature)
        if annealed.any():
            strain = np.zeros(h["strain"].shape)
            strain[active] = self.total_strain(self.fields.u)
            h["eps_ref"][annealed] = strain[annealed] - eps_eig[annealed]

        try:
            u, local = self.solve(params, eps_eig + h["eps_ref"] + h["eps_tp"])
        except ConvergenceError:
            for name, array in saved.items():
                h[name][...] = array
            raise

        self.commit(u, local)
        logger.debug(
            "mechanics: %d Newton iterations, %d annealed points, max von Mises %.1f MPa",
            self.last_iterations,
            int(annealed.sum()),
            von_mises(h["stress"][active]).max() / 1e6 if active.any() else 0.0,
        )
        return self.last_iterations

    def inelastic_strain(self, T, fractions):
        "Eigenstrain plus reference and TRIP strain of the current history."
        h = self.history
        rho_ref = np.where(h["rho_ref"] > 0, h["rho_ref"], 1.0)
        return eigenstrain(T, fractions, rho_ref, self.db) + h["eps_ref"] + h["eps_tp"]

    def current_yield_stress(self, T, fractions):
        params = self.material(T, fractions)
        ebar = self.history["ep_eq"] + self.history["etp_eq"]
        return flow_stress(ebar, params["sigma_y0"], params["E"], params["n"])


__all__ = [
    "PHASES",
    "MechanicsModel",
    "anneal",
    "eigenstrain",
    "flow_stress",
    "hoop_stress",
    "hydrostatic",
    "return_map",
    "trip_increment",
    "von_mises",
]
