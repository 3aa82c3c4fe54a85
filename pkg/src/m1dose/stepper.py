"""Backward-in-energy time integrator for the M1 proton transport system.

Energy plays the role of time and runs from E_max down to the cutoff E_MIN.  One
level advance is a symmetric Strang split: half scattering step (exact exponential
decay of the first moment), full transport step (Heun / SSP-RK2 with monolithic
convex limiting), half scattering step.  The conserved products (S*psi0, S*psi1)
are the marching unknowns; moment states are recovered by dividing by the nodal
stopping power at the stage's evaluation energy.  Dose is accumulated with the
composite trapezoidal rule plus a residual local-deposition term at the cutoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import limiter
from .grid import BoundaryFace, DiscreteOperators
from .moments import RealizabilityError, closure_coefficients, flux_dot
from .physics import E_MIN, LAMBDA_MAX, clamped

# isotropic floor replacing vanishing boundary/initial states; keeps states off
# the realizable-set boundary
FLOOR_PSI0 = 1.0e-15

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class BeamSpec:
    """Collimated Gaussian proton beam entering through one box face.

    The beam travels along `axis` in the `sign` direction, has total proton count
    psi_total, energy spectrum N(e0, sigma_e^2) and transverse spatial profile
    N(isocenter_k, sigma_k^2) on the inflow face.
    """

    e0: float
    psi_total: float
    axis: int
    sign: int
    isocenter: np.ndarray
    sigma_e: float = 0.0  # 0 -> default 0.01 * e0
    sigma_k: float = 0.3
    collimation: float = 0.9999

    def __post_init__(self):
        if self.e0 <= 0.0 or self.psi_total <= 0.0:
            raise ValueError("beam energy and proton count must be positive")
        if self.sign not in (-1, 1):
            raise ValueError("beam sign must be +1 or -1")
        if not 0.0 < self.collimation < 1.0:
            raise ValueError("collimation factor must lie in (0, 1)")
        if self.sigma_e <= 0.0:
            object.__setattr__(self, "sigma_e", 0.01 * self.e0)
        object.__setattr__(self, "isocenter", np.asarray(self.isocenter, dtype=float))

    def direction(self, dim: int) -> np.ndarray:
        e = np.zeros(dim)
        e[self.axis] = float(self.sign)
        return e

    def enters_face(self, face: BoundaryFace) -> bool:
        return face.axis == self.axis and face.side == (0 if self.sign > 0 else 1)

    def psi0_at(self, coords: np.ndarray, e: float) -> np.ndarray:
        """Prescribed zeroth moment on the inflow face at energy e."""
        z = (e - self.e0) / self.sigma_e
        val = self.psi_total * _INV_SQRT_2PI / self.sigma_e * math.exp(-0.5 * z * z)
        out = np.full(coords.shape[0], val)
        for k in range(coords.shape[1]):
            if k == self.axis:
                continue
            zk = (coords[:, k] - self.isocenter[k]) / self.sigma_k
            out *= _INV_SQRT_2PI / self.sigma_k * np.exp(-0.5 * zk * zk)
        return out


@dataclass
class SolutionField:
    """Nodal conserved products (S psi0, S psi1) at one energy level."""

    su0: np.ndarray  # (N,)
    su1: np.ndarray  # (N, d)
    energy: float

    def copy(self) -> "SolutionField":
        return SolutionField(self.su0.copy(), self.su1.copy(), self.energy)

    def moments(self, ops: DiscreteOperators, e: float | None = None):
        """Recover (psi0, psi1) by dividing by the nodal stopping power."""
        s = ops.stopping_power_nodes(clamped(self.energy if e is None else e))
        return self.su0 / s, self.su1 / s[:, None]


def initial_field(ops: DiscreteOperators, e_max: float) -> SolutionField:
    """Floor state psi0 = 1e-15, psi1 = 0 scaled by S(E_max)."""
    s = ops.stopping_power_nodes(clamped(e_max))
    return SolutionField(FLOOR_PSI0 * s, np.zeros((ops.grid.n_nodes, ops.grid.dim)), e_max)


class RealizabilityMonitor:
    """Counts (or raises on) nodal states outside the realizable set.

    Violation means psi0 <= 0 or |psi1| >= psi0 after any substep.  With
    strict=True the first violation raises with node diagnostics.
    """

    def __init__(self, strict: bool = False):
        self.strict = strict
        self.violations = 0
        self.checks = 0
        self.first_event: str | None = None

    def record(self, field: SolutionField, label: str) -> None:
        self.checks += 1
        bad = (field.su0 <= 0.0) | (np.linalg.norm(field.su1, axis=1) >= field.su0)
        n_bad = int(np.count_nonzero(bad))
        if n_bad:
            self.violations += n_bad
            if self.first_event is None:
                node = int(np.argmax(bad))
                self.first_event = (
                    f"{label} at E={field.energy:.6g}: node {node}, "
                    f"su0={field.su0[node]:.6g}, |su1|={np.linalg.norm(field.su1[node]):.6g}")
            if self.strict:
                raise RealizabilityError(self.first_event)


def compute_energy_step(field: SolutionField, ops: DiscreteOperators, cfl: float) -> float:
    """CFL-limited energy step, clipped to land exactly on E_MIN at the last level."""
    if not 0.0 < cfl <= 1.0:
        raise ValueError("cfl must lie in (0, 1]")
    s = ops.stopping_power_nodes(clamped(field.energy))
    de = cfl / float(np.max(ops.cfl_geometry / s))
    if field.energy - de < E_MIN + 1.0e-3 * de:
        de = field.energy - E_MIN
    return de


def scattering_decay_factors(ops: DiscreteOperators, e_mid: float, width: float) -> np.ndarray:
    """Per-node first-moment decay exp(-m_i^T/(m_i S_i) * width) at the midpoint energy."""
    e_mid = clamped(e_mid)
    m_t = ops.scattering_mass(e_mid)
    s = ops.stopping_power_nodes(e_mid)
    return np.exp(-m_t / (ops.lumped_mass * s) * width)


def scattering_half_step(field: SolutionField, ops: DiscreteOperators, e_from: float,
                         e_to: float, scattering: bool = True,
                         monitor: RealizabilityMonitor | None = None) -> SolutionField:
    """Exact scattering substep over [e_to, e_from]: (S psi0) unchanged, (S psi1)
    contracted by the exponential of the midpoint-rule energy integral."""
    if e_from < e_to:
        raise ValueError("scattering step must move downward in energy")
    if not scattering or e_from == e_to:
        out = SolutionField(field.su0.copy(), field.su1.copy(), e_to)
    else:
        factors = scattering_decay_factors(ops, 0.5 * (e_from + e_to), e_from - e_to)
        out = SolutionField(field.su0.copy(), field.su1 * factors[:, None], e_to)
    if monitor is not None:
        monitor.record(out, "scattering")
    return out


def boundary_term(u: np.ndarray, u_hat: np.ndarray, n: np.ndarray, w) -> np.ndarray:
    """Lumped weak boundary contribution w * (F(u).n - GLF(u, u_hat; n)).

    Equals lambda_max * w * (bar_Gamma - u) for the boundary bar state; vanishes
    identically when u_hat == u (outflow).  Stacked-state layout (E, d+1).
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    u_hat = np.atleast_2d(np.asarray(u_hat, dtype=float))
    n = np.asarray(n, dtype=float)
    w = np.asarray(w, dtype=float)
    fu0, fu1 = flux_dot(u[:, 0], u[:, 1:], n)
    fh0, fh1 = flux_dot(u_hat[:, 0], u_hat[:, 1:], n)
    out = np.empty_like(u)
    out[:, 0] = 0.5 * (fu0 - fh0) + 0.5 * LAMBDA_MAX * (u_hat[:, 0] - u[:, 0])
    out[:, 1:] = 0.5 * (fu1 - fh1) + 0.5 * LAMBDA_MAX * (u_hat[:, 1:] - u[:, 1:])
    return w[:, None] * out


def beam_boundary_state(face: BoundaryFace, beams, e: float, dim: int) -> np.ndarray:
    """External moment state on one inflow face, floored far from the beam spots."""
    psi0 = np.zeros(face.nodes.shape[0])
    psi1 = np.zeros((face.nodes.shape[0], dim))
    for beam in beams:
        contrib = beam.psi0_at(face.coords, e)
        psi0 += contrib
        psi1 += beam.collimation * contrib[:, None] * beam.direction(dim)
    low = psi0 < FLOOR_PSI0
    psi0[low] = FLOOR_PSI0
    psi1[low] = 0.0
    return np.concatenate([psi0[:, None], psi1], axis=1)


def boundary_terms(u_nodes: np.ndarray, ops: DiscreteOperators, beams, e: float) -> np.ndarray:
    """Accumulated weak boundary contributions on all faces carrying a beam.

    Faces without a beam are outflow (external state equals the interior state),
    so their contribution vanishes and is skipped.
    """
    out = np.zeros_like(u_nodes)
    dim = ops.grid.dim
    for face in ops.faces:
        face_beams = [b for b in beams if b.enters_face(face)]
        if not face_beams:
            continue
        u_hat = beam_boundary_state(face, face_beams, e, dim)
        out[face.nodes] += boundary_term(u_nodes[face.nodes], u_hat, face.normal, face.weight)
    return out


def _gather_flux_dot(u_nodes, iso, aniso, idx, c) -> np.ndarray:
    """F(u_idx).c stacked as (E, d+1) using precomputed closure coefficients."""
    p1 = u_nodes[idx, 1:]
    dot = np.einsum("ek,ek->e", p1, c)
    out = np.empty((idx.shape[0], u_nodes.shape[1]))
    out[:, 0] = dot
    out[:, 1:] = iso[idx, None] * c + (aniso[idx] * dot)[:, None] * p1
    return out


def low_order_rate(field: SolutionField, ops: DiscreteOperators, beams,
                   e_eval: float | None = None, include_scattering: bool = False,
                   scattering: bool = True) -> np.ndarray:
    """Lumped low-order energy rate: (S u) at the lower level = (S u) + dE * rate.

    rate_i = (1/m_i) * [sum_j (d_ij (u_j - u_i) - (F_j - F_i).c_ij) + boundary - m_i^sigma u_i]
    The reactive term enters only with include_scattering=True (it belongs to the
    raw-flux surrogate, not to the split transport substep).
    """
    e = clamped(field.energy if e_eval is None else e_eval)
    s = ops.stopping_power_nodes(e)
    u = np.concatenate([(field.su0 / s)[:, None], field.su1 / s[:, None]], axis=1)
    iso, aniso = closure_coefficients(u[:, 0], u[:, 1:])
    lowsum = np.zeros_like(u)
    for blk in ops.edge_blocks:
        g_ij, g_ji = _edge_low_order(u, iso, aniso, blk)
        lowsum[blk.i] += g_ij
        lowsum[blk.j] += g_ji
    total = lowsum + boundary_terms(u, ops, beams, e)
    if include_scattering and scattering:
        total[:, 1:] -= ops.scattering_mass(e)[:, None] * u[:, 1:]
    return total / ops.lumped_mass[:, None]


def _edge_low_order(u, iso, aniso, blk):
    """Per-edge low-order increments g_ij (at i) and g_ji (at j)."""
    u_i = u[blk.i]
    u_j = u[blk.j]
    fd_i = _gather_flux_dot(u, iso, aniso, blk.i, blk.c_ij)
    fd_j = _gather_flux_dot(u, iso, aniso, blk.j, blk.c_ij)
    g_ij = blk.d_ij[:, None] * (u_j - u_i) - (fd_j - fd_i)
    fd_i2 = _gather_flux_dot(u, iso, aniso, blk.i, blk.c_ji)
    fd_j2 = _gather_flux_dot(u, iso, aniso, blk.j, blk.c_ji)
    g_ji = blk.d_ij[:, None] * (u_i - u_j) - (fd_i2 - fd_j2)
    return g_ij, g_ji


def transport_stage(field: SolutionField, ops: DiscreteOperators, beams, de: float,
                    mode: str = "mcl", e_eval: float | None = None,
                    scattering: bool = True,
                    monitor: RealizabilityMonitor | None = None) -> SolutionField:
    """One explicit stage of the backward transport march.

    mode='low' applies the graph-viscosity scheme; mode='mcl' adds the limited
    antidiffusive fluxes.  The moment states, closure and boundary data are
    evaluated at e_eval (default: the input field's energy).
    """
    if mode not in ("low", "mcl"):
        raise ValueError(f"mode must be 'low' or 'mcl': {mode!r}")
    e = clamped(field.energy if e_eval is None else e_eval)
    s = ops.stopping_power_nodes(e)
    u = np.concatenate([(field.su0 / s)[:, None], field.su1 / s[:, None]], axis=1)
    iso, aniso = closure_coefficients(u[:, 0], u[:, 1:])

    lowsum = np.zeros_like(u)
    bars: list[tuple[np.ndarray, np.ndarray]] = []
    mcl = mode == "mcl"
    if mcl:
        lo = u.copy()
        hi = u.copy()
    for blk in ops.edge_blocks:
        g_ij, g_ji = _edge_low_order(u, iso, aniso, blk)
        lowsum[blk.i] += g_ij
        lowsum[blk.j] += g_ji
        if mcl:
            inv2d = (0.5 / blk.d_ij)[:, None]
            bar_ij = u[blk.i] + g_ij * inv2d
            bar_ji = u[blk.j] + g_ji * inv2d
            bars.append((bar_ij, bar_ji))
            hi[blk.i] = np.maximum(hi[blk.i], np.maximum(u[blk.j], bar_ij))
            lo[blk.i] = np.minimum(lo[blk.i], np.minimum(u[blk.j], bar_ij))
            hi[blk.j] = np.maximum(hi[blk.j], np.maximum(u[blk.i], bar_ji))
            lo[blk.j] = np.minimum(lo[blk.j], np.minimum(u[blk.i], bar_ji))

    total = lowsum + boundary_terms(u, ops, beams, e)

    if mcl:
        sigma_u = np.zeros_like(u)
        if scattering:
            sigma_u[:, 1:] = ops.scattering_mass(e)[:, None] * u[:, 1:]
        rate_surrogate = (sigma_u - lowsum) / ops.lumped_mass[:, None]
        for blk, (bar_ij, bar_ji) in zip(ops.edge_blocks, bars):
            if scattering:
                m_t_ij = ops.edge_scattering_mass(blk, e)
            else:
                m_t_ij = np.zeros(blk.i.shape[0])
            f_raw = limiter.raw_antidiffusive_fluxes(
                u[blk.i], u[blk.j], rate_surrogate[blk.i], rate_surrogate[blk.j],
                blk.m_ij, blk.d_ij, m_t_ij)
            f_min, f_max = limiter.bounding_fluxes(
                bar_ij, bar_ji, lo[blk.i], hi[blk.i], lo[blk.j], hi[blk.j], blk.d_ij)
            f_star = limiter.limit_components(f_raw, f_min, f_max)
            _, f_final = limiter.idp_correction(f_star, bar_ij, bar_ji, blk.d_ij)
            total[blk.i] += f_final
            total[blk.j] -= f_final

    scale = de / ops.lumped_mass
    out = SolutionField(
        su0=field.su0 + scale * total[:, 0],
        su1=field.su1 + scale[:, None] * total[:, 1:],
        energy=(field.energy if e_eval is None else e_eval) - de)
    if monitor is not None:
        monitor.record(out, f"transport-{mode}")
    return out


def heun_transport_step(field: SolutionField, ops: DiscreteOperators, beams, de: float,
                        mode: str = "mcl", scattering: bool = True,
                        monitor: RealizabilityMonitor | None = None,
                        e_from: float | None = None) -> SolutionField:
    """Heun (SSP-RK2) step of the transport subproblem on conserved products.

    result = (Su)/2 + stage(stage(Su))/2; both stages use the same dE and are
    evaluated at their input state's energy, so the result is a convex
    combination of realizable stage outputs.
    """
    if e_from is None:
        e_from = field.energy
    s1 = transport_stage(field, ops, beams, de, mode, e_eval=e_from,
                         scattering=scattering, monitor=monitor)
    s2 = transport_stage(s1, ops, beams, de, mode, e_eval=e_from - de,
                         scattering=scattering, monitor=monitor)
    out = SolutionField(0.5 * (field.su0 + s2.su0), 0.5 * (field.su1 + s2.su1), e_from - de)
    if monitor is not None:
        monitor.record(out, "heun")
    return out


class DoseAccumulator:
    """Running trapezoidal sum of (S psi0) over the energy levels.

    Division by the nodal density and the residual deposition below the energy
    cutoff are applied at finalization.
    """

    def __init__(self, field: SolutionField):
        self.trapezoid = np.zeros_like(field.su0)
        self.prev_su0 = field.su0.copy()

    def accumulate(self, su0_new: np.ndarray, de: float) -> None:
        self.trapezoid += 0.5 * (self.prev_su0 + su0_new) * de
        self.prev_su0 = su0_new.copy()

    def finalize(self, field: SolutionField, ops: DiscreteOperators) -> np.ndarray:
        """Per-node dose in MeV/g, including the residual term S0 * psi0(E_MIN) * E_MIN."""
        s_end = ops.stopping_power_nodes(E_MIN)
        psi0_end = field.su0 / s_end
        s0 = E_MIN ** (1.0 - ops.node_p) / ops.node_beta  # E_MIN / R(E_MIN) per node
        return (s0 * psi0_end * E_MIN + self.trapezoid) / ops.node_rho


def accumulate_dose(dose: DoseAccumulator, field_prev: SolutionField,
                    field_curr: SolutionField, de: float) -> DoseAccumulator:
    """Trapezoid contribution between two consecutive accepted levels."""
    dose.prev_su0 = field_prev.su0.copy()
    dose.accumulate(field_curr.su0, de)
    return dose


def strang_march(field: SolutionField, ops: DiscreteOperators, beams, cfl: float,
                 mode: str = "mcl", scattering: bool = True,
                 monitor: RealizabilityMonitor | None = None,
                 progress=None, level_hook=None):
    """March from the field's energy down to E_MIN with symmetric Strang splitting.

    Per level: half scattering step, Heun transport step over the full dE, half
    scattering step, then trapezoidal dose accumulation.

    Args:
        progress: optional callable(level_index, energy, de, psi0_min, psi0_max)
        level_hook: optional callable(field) invoked after each accepted level

    Returns:
        (field_at_E_MIN, DoseAccumulator, energy_levels)
    """
    dose = DoseAccumulator(field)
    levels = [field.energy]
    level_index = 0
    while field.energy > E_MIN * (1.0 + 1.0e-12):
        de = compute_energy_step(field, ops, cfl)
        e_top = field.energy
        e_next = E_MIN if e_top - de <= E_MIN * (1.0 + 1.0e-12) else e_top - de
        de = e_top - e_next
        e_half = e_top - 0.5 * de
        f = scattering_half_step(field, ops, e_top, e_half, scattering, monitor)
        f = heun_transport_step(f, ops, beams, de, mode=mode, scattering=scattering,
                                monitor=monitor, e_from=e_top)
        f = scattering_half_step(f, ops, e_half, e_next, scattering, monitor)
        field = SolutionField(f.su0, f.su1, e_next)
        dose.accumulate(field.su0, de)
        levels.append(e_next)
        level_index += 1
        if progress is not None:
            s = ops.stopping_power_nodes(clamped(e_next))
            psi0 = field.su0 / s
            progress(level_index, e_next, de, float(psi0.min()), float(psi0.max()))
        if level_hook is not None:
            level_hook(field)
    return field, dose, levels
