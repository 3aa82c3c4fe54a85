"""M1 state algebra: realizable set, Levermore closure, flux function, GLF interface flux.

A moment state is the pair (psi0, psi1) of the zeroth (scalar) and first (d-vector)
angular moments of the fluence.  All functions broadcast over leading axes: psi0 has
shape (...,), psi1 has shape (..., d).  The physically admissible states form the open
convex cone  {psi0 > 0, |psi1| < psi0}.
"""
from __future__ import annotations

import numpy as np

from .physics import LAMBDA_MAX

# below this reduced-flux magnitude the closure direction v/|v| is undefined;
# the isotropic limit is exact there, the threshold only avoids 0/0
ZERO_VELOCITY_THRESHOLD = 1.0e-14


class RealizabilityError(ValueError):
    """A moment state left the physically admissible set {psi0 > 0, |psi1| < psi0}."""


def is_realizable(psi0, psi1) -> np.ndarray:
    """True where psi0 > 0 and |psi1| < psi0 (strict inequalities)."""
    psi0 = np.asarray(psi0, dtype=float)
    psi1 = np.atleast_1d(np.asarray(psi1, dtype=float))
    mag = np.linalg.norm(psi1, axis=-1)
    return (psi0 > 0.0) & (mag < psi0)


def eddington_factor(f):
    """Eddington factor chi(f) = (3+4f^2)/(5+2*sqrt(4-3f^2)) for f in [0, 1]."""
    f = np.asarray(f, dtype=float)
    if np.any((f < 0.0) | (f > 1.0)):
        raise ValueError("reduced flux magnitude must lie in [0, 1]")
    return _chi(f)


def _chi(f):
    """Closure factor without domain checks; clips f into [0, 1] against FP noise."""
    f2 = np.square(np.clip(f, 0.0, 1.0))
    return (3.0 + 4.0 * f2) / (5.0 + 2.0 * np.sqrt(4.0 - 3.0 * f2))


def eddington_tensor(psi0, psi1) -> np.ndarray:
    """Closure tensor D(v) with psi2 = D(v)*psi0, for realizable input states.

    Returns an array of shape (..., d, d):
        D = (1-chi)/2 * I + (3chi-1)/2 * (v x v)/|v|^2,  v = psi1/psi0.
    States with |psi1| below the zero-velocity threshold get the isotropic I/3.
    """
    psi0 = np.asarray(psi0, dtype=float)
    psi1 = np.atleast_1d(np.asarray(psi1, dtype=float))
    if not np.all(is_realizable(psi0, psi1)):
        raise ValueError("eddington_tensor requires realizable moment states")
    d = psi1.shape[-1]
    mag = np.linalg.norm(psi1, axis=-1)
    f = mag / psi0
    chi = _chi(f)
    small = mag <= ZERO_VELOCITY_THRESHOLD * psi0
    safe_mag2 = np.where(small, 1.0, mag * mag)
    aniso = np.where(small, 0.0, (3.0 * chi - 1.0) / 2.0)
    outer = psi1[..., :, None] * psi1[..., None, :] / safe_mag2[..., None, None]
    iso = np.where(small, 1.0 / 3.0, (1.0 - chi) / 2.0)
    return iso[..., None, None] * np.eye(d) + aniso[..., None, None] * outer


def flux(psi0, psi1):
    """M1 flux rows: (psi1, psi2) with psi2 = D(v)*psi0.

    Returns (row0, rows1) of shapes (..., d) and (..., d, d); row0 is the flux of
    the zeroth moment and rows1 the (symmetric PSD) flux of the first moment.
    """
    psi0 = np.asarray(psi0, dtype=float)
    psi1 = np.atleast_1d(np.asarray(psi1, dtype=float))
    return psi1.copy(), eddington_tensor(psi0, psi1) * psi0[..., None, None]


def closure_coefficients(psi0, psi1) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (iso, aniso) of the directional second-moment flux.

    psi2 @ c = iso * c + aniso * (psi1 . c) * psi1, with
    iso = (1-chi)/2 * psi0 and aniso = (3chi-1)/2 * psi0 / |psi1|^2.
    Both vanish into the isotropic limit (psi0/3, 0) below the zero-velocity
    threshold.  Precompute these once per field snapshot for edge loops.
    """
    psi0 = np.asarray(psi0, dtype=float)
    psi1 = np.asarray(psi1, dtype=float)
    mag = np.linalg.norm(psi1, axis=-1)
    chi = _chi(mag / psi0)
    small = mag <= ZERO_VELOCITY_THRESHOLD * psi0
    safe_mag2 = np.where(small, 1.0, mag * mag)
    aniso = np.where(small, 0.0, (3.0 * chi - 1.0) / 2.0 * psi0 / safe_mag2)
    iso = np.where(small, psi0 / 3.0, (1.0 - chi) / 2.0 * psi0)
    return iso, aniso


def flux_dot(psi0, psi1, c) -> tuple[np.ndarray, np.ndarray]:
    """Directional flux F(u).c without forming the d x d closure tensor.

    Args:
        psi0: (...,) zeroth moments
        psi1: (..., d) first moments
        c: (..., d) direction vectors (broadcastable)

    Returns:
        (comp0, comps1): psi1.c with shape (...,) and psi2 @ c with shape (..., d).
    """
    psi1 = np.asarray(psi1, dtype=float)
    c = np.asarray(c, dtype=float)
    iso, aniso = closure_coefficients(psi0, psi1)
    p1_dot_c = np.einsum("...k,...k->...", psi1, c)
    comps1 = iso[..., None] * c + (aniso * p1_dot_c)[..., None] * psi1
    return p1_dot_c, comps1


def glf_interface_flux(psi0, psi1, psi0_hat, psi1_hat, n) -> tuple[np.ndarray, np.ndarray]:
    """Global Lax-Friedrichs two-point flux in direction n (|n| = 1).

    F(u, u_hat; n) = (F(u)+F(u_hat))/2 . n - (lambda_max/2)*(u_hat - u)

    Returns the (d+1)-vector split as (comp0, comps1).
    """
    psi0 = np.asarray(psi0, dtype=float)
    psi0_hat = np.asarray(psi0_hat, dtype=float)
    psi1 = np.asarray(psi1, dtype=float)
    psi1_hat = np.asarray(psi1_hat, dtype=float)
    if not (np.all(is_realizable(psi0, psi1)) and np.all(is_realizable(psi0_hat, psi1_hat))):
        raise ValueError("GLF flux requires realizable states on both sides")
    a0, a1 = flux_dot(psi0, psi1, n)
    b0, b1 = flux_dot(psi0_hat, psi1_hat, n)
    comp0 = 0.5 * (a0 + b0) - 0.5 * LAMBDA_MAX * (psi0_hat - psi0)
    comps1 = 0.5 * (a1 + b1) - 0.5 * LAMBDA_MAX * (psi1_hat - psi1)
    return comp0, comps1
