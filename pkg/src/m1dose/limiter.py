"""Monolithic convex limiting core: bar states, antidiffusive fluxes, local bounds,
component-wise clamping and the quadratic realizability correction.

All functions are vectorized over edges.  Moment states are stacked as (E, d+1)
arrays with column 0 the zeroth moment and columns 1..d the first moment.  Fluxes
live on unordered edges {i, j}; antisymmetry f_ij = -f_ji is structural (each edge
is computed once and applied with opposite signs at its endpoints).
"""
from __future__ import annotations

import numpy as np

from .moments import RealizabilityError, flux_dot

# strictness margin of the quadratic realizability constraint
IDP_EPSILON = 1.0e-15


def split(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split stacked states (E, d+1) into (psi0 (E,), psi1 (E, d))."""
    return u[..., 0], u[..., 1:]


def bar_state(u_i: np.ndarray, u_j: np.ndarray, c_ij: np.ndarray, d_ij: np.ndarray) -> np.ndarray:
    """Intermediate two-point states (u_i + u_j)/2 - (F(u_j) - F(u_i)).c_ij / (2 d_ij).

    Realizable whenever u_i, u_j are realizable and d_ij >= |c_ij|.
    """
    d_ij = np.asarray(d_ij, dtype=float)
    if np.any(d_ij <= 0.0):
        raise ValueError("graph viscosity d_ij must be positive")
    p0_i, p1_i = split(np.asarray(u_i, dtype=float))
    p0_j, p1_j = split(np.asarray(u_j, dtype=float))
    fi0, fi1 = flux_dot(p0_i, p1_i, c_ij)
    fj0, fj1 = flux_dot(p0_j, p1_j, c_ij)
    bar = 0.5 * (np.asarray(u_i) + np.asarray(u_j))
    scale = 0.5 / d_ij
    bar[..., 0] -= scale * (fj0 - fi0)
    bar[..., 1:] -= scale[..., None] * (fj1 - fi1)
    return bar


def raw_antidiffusive_fluxes(u_i, u_j, rate_i, rate_j, m_ij, d_ij, scatter_mass_ij) -> np.ndarray:
    """Raw fluxes f_ij = -m_ij*(rate_i - rate_j) + (d_ij + m_ij^sigma)*(u_i - u_j).

    The reactive mass m_ij^sigma acts on the first-moment components only.  rate_i/j
    are the lumped low-order energy derivatives of the conserved products.
    """
    u_i = np.asarray(u_i, dtype=float)
    u_j = np.asarray(u_j, dtype=float)
    diff = u_i - u_j
    f = -np.asarray(m_ij)[..., None] * (np.asarray(rate_i) - np.asarray(rate_j))
    f += np.asarray(d_ij)[..., None] * diff
    f[..., 1:] += np.asarray(scatter_mass_ij)[..., None] * diff[..., 1:]
    return f


def local_bounds(u_nodes: np.ndarray, edges) -> tuple[np.ndarray, np.ndarray]:
    """Per-node, per-component bounds over the stencil values and bar states.

    Args:
        u_nodes: (N, d+1) nodal states (each node's own value is included)
        edges: iterable of (i, j, bar_ij, bar_ji) blocks; within each block the
            index arrays i and j must each be duplicate-free.

    Returns:
        (lo, hi) arrays of shape (N, d+1).
    """
    lo = u_nodes.copy()
    hi = u_nodes.copy()
    for i, j, bar_ij, bar_ji in edges:
        u_i = u_nodes[i]
        u_j = u_nodes[j]
        hi[i] = np.maximum(hi[i], np.maximum(u_j, bar_ij))
        lo[i] = np.minimum(lo[i], np.minimum(u_j, bar_ij))
        hi[j] = np.maximum(hi[j], np.maximum(u_i, bar_ji))
        lo[j] = np.minimum(lo[j], np.minimum(u_i, bar_ji))
    return lo, hi


def bounding_fluxes(bar_ij, bar_ji, lo_i, hi_i, lo_j, hi_j, d_ij) -> tuple[np.ndarray, np.ndarray]:
    """Admissible flux interval [f_min, f_max] (f_min <= 0 <= f_max) per component."""
    two_d = (2.0 * np.asarray(d_ij))[..., None]
    f_min = two_d * np.maximum(lo_i - bar_ij, bar_ji - hi_j)
    f_max = two_d * np.minimum(hi_i - bar_ij, bar_ji - lo_j)
    return f_min, f_max


def limit_components(f_raw, f_min, f_max) -> np.ndarray:
    """Clamp each scalar flux component into its admissible interval."""
    return np.maximum(f_min, np.minimum(f_max, f_raw))


def idp_correction(f_star, bar_ij, bar_ji, d_ij) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric correction factor alpha in [0, 1] keeping both corrected bar states
    realizable, and the corrected fluxes alpha * f_star.

    Solves the quadratic admissibility constraint P(alpha) < Q via the linear
    surrogate R >= P(alpha)/alpha and the shrunken threshold (1 - eps) * Q.
    """
    f_star = np.asarray(f_star, dtype=float)
    d_ij = np.asarray(d_ij, dtype=float)
    f0, f1 = split(f_star)
    b0_ij, b1_ij = split(np.asarray(bar_ij, dtype=float))
    b0_ji, b1_ji = split(np.asarray(bar_ji, dtype=float))

    q_ij = (2.0 * d_ij) ** 2 * (b0_ij**2 - np.einsum("...k,...k->...", b1_ij, b1_ij))
    q_ji = (2.0 * d_ij) ** 2 * (b0_ji**2 - np.einsum("...k,...k->...", b1_ji, b1_ji))
    if np.any(q_ij <= 0.0) or np.any(q_ji <= 0.0):
        raise RealizabilityError("low-order bar states must be strictly realizable")

    quad = np.einsum("...k,...k->...", f1, f1) - f0**2
    quad_pos = np.maximum(quad, 0.0)
    r_ij = quad_pos + 4.0 * d_ij * (np.einsum("...k,...k->...", b1_ij, f1) - b0_ij * f0)
    r_ji = quad_pos + 4.0 * d_ij * (b0_ji * f0 - np.einsum("...k,...k->...", b1_ji, f1))

    qt_ij = (1.0 - IDP_EPSILON) * q_ij
    qt_ji = (1.0 - IDP_EPSILON) * q_ji
    a_ij = np.ones_like(qt_ij)
    a_ji = np.ones_like(qt_ji)
    np.divide(qt_ij, r_ij, out=a_ij, where=r_ij > qt_ij)
    np.divide(qt_ji, r_ji, out=a_ji, where=r_ji > qt_ji)
    alpha = np.minimum(a_ij, a_ji)
    return alpha, alpha[..., None] * f_star
