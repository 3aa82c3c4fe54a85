"""Material models: stopping power, proton range, and multiple Coulomb scattering power.

Stopping power follows the Bragg-Kleeman rule S(E) = E^(1-p)/(beta*p), derived from
the continuous-slowing-down range R(E) = beta*E^p.  Angular diffusion uses the Rossi
scattering power T(E) = (E_s/pv)^2 / X_S with scattering lengths X_S computed from
elemental compositions via the Bragg additivity rule.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

# Rossi scattering-power constant [MeV]
E_S = 15.0
# proton rest energy m*c^2 [MeV]
PROTON_REST_ENERGY = 938.272
# energy cutoff below which the stopping/scattering parameterizations break down [MeV]
E_MIN = 1.0e-5
# global wave-speed bound of the M1 system (|v| <= 1)
LAMBDA_MAX = 1.0

# fine-structure constant, Avogadro's number [1/mol], classical electron radius [cm]
_FINE_STRUCTURE = 1.0 / 137.0
_AVOGADRO = 6.0221408e23
_ELECTRON_RADIUS = 2.81796e-13


@dataclass(frozen=True)
class Material:
    """Bragg-Kleeman parameters plus scattering length and density for one medium.

    Attributes:
        name: material identifier
        beta: Bragg-Kleeman range coefficient [cm/MeV^p], > 0
        p: Bragg-Kleeman exponent, in [1, 2]
        x_s: scattering length [cm], > 0
        rho: mass density [g/cm^3], > 0
    """

    name: str
    beta: float
    p: float
    x_s: float
    rho: float

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError(f"beta must be positive: {self.beta}")
        if not 1.0 <= self.p <= 2.0:
            raise ValueError(f"p must lie in [1, 2]: {self.p}")
        if self.x_s <= 0.0:
            raise ValueError(f"x_s must be positive: {self.x_s}")
        if self.rho <= 0.0:
            raise ValueError(f"rho must be positive: {self.rho}")


def stopping_power(mat: Material, e):
    """Mean energy loss per unit path length S(E) = E^(1-p)/(beta*p) [MeV/cm]."""
    e = np.asarray(e, dtype=float)
    if np.any(e <= 0.0):
        raise ValueError("stopping power requires a positive energy")
    return e ** (1.0 - mat.p) / (mat.beta * mat.p)


def csda_range(mat: Material, e):
    """Continuous-slowing-down range R(E) = beta*E^p [cm]."""
    e = np.asarray(e, dtype=float)
    if np.any(e < 0.0):
        raise ValueError("range requires a non-negative energy")
    return mat.beta * e**mat.p


def residual_stopping_power(mat: Material) -> float:
    """Effective stopping power E_min/R(E_min) used for local deposition below the cutoff."""
    return float(E_MIN / csda_range(mat, E_MIN))


def pv(e):
    """Momentum times velocity, pv = E*(tau+2)/(tau+1) with tau = E/mc^2 [MeV]."""
    e = np.asarray(e, dtype=float)
    if np.any(e <= 0.0):
        raise ValueError("pv requires a positive energy")
    tau = e / PROTON_REST_ENERGY
    return (tau + 2.0) / (tau + 1.0) * e


def scattering_power(mat: Material, e):
    """Rossi scattering power T(E) = (E_s/pv)^2 / X_S [1/cm]."""
    return (E_S / pv(e)) ** 2 / mat.x_s


def mass_scattering_factor(z: float, a: float) -> float:
    """Single-element mass scattering length 1/(rho*X_S) [cm^2/g]."""
    if z <= 0.0 or a <= 0.0:
        raise ValueError("atomic number and weight must be positive")
    prefactor = _FINE_STRUCTURE * _AVOGADRO * _ELECTRON_RADIUS**2
    return prefactor * (z * z / a) * (2.0 * np.log(33219.0 * (a * z) ** (-1.0 / 3.0)) - 1.0)


def scattering_length_from_composition(constituents, rho: float) -> float:
    """Scattering length X_S [cm] of a mixture via the Bragg additivity rule.

    Args:
        constituents: iterable of (weight_fraction, Z, A) triples
        rho: mixture density [g/cm^3]
    """
    constituents = list(constituents)
    total_w = sum(w for w, _, _ in constituents)
    if abs(total_w - 1.0) > 1.0e-6:
        raise ValueError(f"weight fractions must sum to 1 (got {total_w!r})")
    inv_rho_xs = sum(w * mass_scattering_factor(z, a) for w, z, a in constituents)
    return 1.0 / (rho * inv_rho_xs)


def clamped(e):
    """Energy clamped to >= E_MIN; used before evaluating S or T inside the solver."""
    return np.maximum(e, E_MIN)


# Canonical material registry.  X_S values are the tabulated defaults; the bundled
# composition data exists to cross-check them and to define new materials.
MATERIALS: dict[str, Material] = {
    "water": Material("water", beta=0.0022, p=1.77, x_s=46.88, rho=1.0),
    "muscle": Material("muscle", beta=0.0021, p=1.75, x_s=45.88, rho=1.04),
    "lung": Material("lung", beta=0.0033, p=1.74, x_s=175.58, rho=0.3),
    "bone": Material("bone", beta=0.0011, p=1.77, x_s=17.93, rho=1.85),
}


def get_material(name: str) -> Material:
    try:
        return MATERIALS[name]
    except KeyError:
        raise KeyError(f"unknown material {name!r}; known: {sorted(MATERIALS)}") from None


def load_compositions() -> dict:
    """Bundled elemental compositions (weight fraction, Z, A) and row densities."""
    text = resources.files("m1dose").joinpath("data/compositions.json").read_text()
    return json.loads(text)


def scattering_length_from_table(name: str) -> float:
    """Recompute X_S for a bundled composition row (cross-check of the registry values)."""
    row = load_compositions()[name]
    constituents = [(w, z, a) for _, w, z, a in row["elements"]]
    return scattering_length_from_composition(constituents, row["density"])
