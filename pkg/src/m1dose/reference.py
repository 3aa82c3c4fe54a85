"""Closed-form reference depth-dose curve for scattering-free collimated beams.

For a collimated monodirectional beam in a homogeneous medium the transport
equation reduces to a 1D advection problem solvable by characteristics; the dose
is a single energy integral of the inflow spectrum weighted by the stopping
power, evaluated here by adaptive Simpson quadrature (with fixed-order
Gauss-Legendre available as an independent cross-check).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .physics import Material

# the Gaussian spectrum is truncated at +-6 sigma: the excluded mass (< 2e-9
# relative) is below the quadrature tolerance
SUPPORT_SIGMAS = 6.0


@dataclass(frozen=True)
class InflowSpectrum:
    """Gaussian inflow proton spectrum psi_total * N(e0, sigma_e^2)."""

    psi_total: float
    e0: float
    sigma_e: float

    def __post_init__(self):
        if self.psi_total <= 0.0 or self.e0 <= 0.0 or self.sigma_e <= 0.0:
            raise ValueError("spectrum parameters must be positive")

    @property
    def support(self) -> tuple[float, float]:
        return (max(self.e0 - SUPPORT_SIGMAS * self.sigma_e, 0.0),
                self.e0 + SUPPORT_SIGMAS * self.sigma_e)

    def density(self, e):
        e = np.asarray(e, dtype=float)
        z = (e - self.e0) / self.sigma_e
        return self.psi_total / (math.sqrt(2.0 * math.pi) * self.sigma_e) * np.exp(-0.5 * z * z)


def adaptive_simpson(f, a: float, b: float, rtol: float = 1.0e-8, max_depth: int = 48) -> float:
    """Adaptive Simpson quadrature of a scalar function on [a, b]."""
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    tol = rtol * max(abs(whole), 1.0e-300)

    def recurse(a, fa, b, fb, m, fm, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (recurse(a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1)
                + recurse(m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1))

    return recurse(a, fa, b, fb, m, fm, whole, tol, 0)


@lru_cache(maxsize=8)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(f, a: float, b: float, n: int = 64) -> float:
    """Fixed-order Gauss-Legendre quadrature; independent cross-check oracle."""
    if b <= a:
        return 0.0
    x, w = _leggauss(n)
    xm = 0.5 * (b + a) + 0.5 * (b - a) * x
    return 0.5 * (b - a) * float(np.sum(w * np.array([f(t) for t in xm])))


def _integration_window(mat: Material, spectrum: InflowSpectrum, x: float,
                        e_max: float) -> tuple[float, float]:
    """Energy window where the shifted argument lands inside the spectrum support."""
    shift = x / mat.beta
    e_lo, e_hi = spectrum.support
    upper_p = e_hi**mat.p - shift
    if upper_p <= 0.0:
        return (0.0, 0.0)
    b = min(e_max, upper_p ** (1.0 / mat.p))
    lower_p = e_lo**mat.p - shift
    a = lower_p ** (1.0 / mat.p) if lower_p > 0.0 else 0.0
    return (a, max(a, b))


def reference_dose(mat: Material, spectrum: InflowSpectrum, x: float, e_max: float,
                   rtol: float = 1.0e-8, quadrature: str = "simpson") -> float:
    """Reference dose at depth x [MeV/g]:

    D(x) = 1/(beta p rho) * int_0^{e_max} (E^p + x/beta)^((1-p)/p)
                              * g((E^p + x/beta)^(1/p)) dE

    The integration window is truncated to where the shifted energy argument lies
    inside the spectrum support (zero contribution elsewhere).
    """
    if x < 0.0:
        raise ValueError("depth must be non-negative")
    a, b = _integration_window(mat, spectrum, x, e_max)
    if b <= a:
        return 0.0
    shift = x / mat.beta
    p = mat.p
    q = (1.0 - p) / p

    def integrand(e: float) -> float:
        arg = e**p + shift
        return arg**q * float(spectrum.density(arg ** (1.0 / p)))

    if quadrature == "simpson":
        integral = adaptive_simpson(integrand, a, b, rtol=rtol)
    elif quadrature == "gauss":
        integral = gauss_legendre(integrand, a, b, n=96)
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    return integral / (mat.beta * mat.p * mat.rho)


def reference_curve(mat: Material, spectrum: InflowSpectrum, xs, e_max: float,
                    rtol: float = 1.0e-8) -> np.ndarray:
    """Vectorized reference_dose over sorted depths."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or np.any(np.diff(xs) < 0.0):
        raise ValueError("depths must be a sorted 1D array")
    return np.array([reference_dose(mat, spectrum, float(x), e_max, rtol=rtol) for x in xs])
