"""Tissue-dependent coefficient laws for the coupled wave/heat system.

The speed of sound c is a polynomial in the absolute temperature
(fluctuation theta plus ambient level), evaluated by Horner's rule.  From
it derive the squared speed q = c^2, the damping coefficient
beta = 2 * alpha * c^3 / omega^2 with absorption alpha = 4.5e-6 * f and
angular frequency omega = 2*pi*f, and the nonlinearity coefficients of the
two model variants: k_W = (1 + B/2A) / (rho * q) for the pressure-form
equation (Westervelt) and k_K = (B/2A) / q for the velocity-potential form
(Kuznetsov).

The heat equation theta_t - kappa * lap(theta) + nu * theta = Q is driven
by the absorbed acoustic energy Q, a variant-dependent quadratic form
alpha1(theta) * u^2 + alpha2(theta) * u_t^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegeneracyError",
    "TissueModel",
    "EquationVariant",
    "WESTERVELT",
    "KUZNETSOV",
    "LINEAR_WAVE",
    "variant_by_name",
    "HeatParams",
    "LIVER_QUADRATIC",
    "LIVER_QUINTIC",
    "speed_of_sound",
    "q_of_theta",
    "beta_of_theta",
    "k_coefficients",
    "absorption_weights",
    "absorbed_energy",
    "derived_heat_params",
]

ABSORPTION_PER_HZ = 4.5e-6  # Np/m per hertz of source frequency


class DegeneracyError(ValueError):
    """A coefficient left its admissible range (e.g. nonpositive speed)."""


@dataclass(frozen=True)
class TissueModel:
    """Medium description.

    speed_coeffs are polynomial coefficients of c in the absolute
    temperature, ascending order; ambient is the resting temperature in
    degrees Celsius; density in kg/m^3; b_over_2a the nonlinearity ratio
    B/2A; frequency the source frequency in Hz.
    """

    speed_coeffs: tuple
    ambient: float = 37.0
    density: float = 1050.0
    b_over_2a: float = 5.0
    frequency: float = 1.0

    def __post_init__(self):
        if len(self.speed_coeffs) == 0:
            raise ValueError("speed polynomial needs at least one coefficient")
        if self.density <= 0:
            raise ValueError("density must be positive")
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")

    @property
    def absorption(self) -> float:
        return ABSORPTION_PER_HZ * self.frequency

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency


def _horner(coeffs, s):
    acc = np.zeros_like(s) + coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * s + c
    return acc


def _horner_derivative(coeffs, s):
    dcoeffs = [k * c for k, c in enumerate(coeffs)][1:]
    if not dcoeffs:
        return np.zeros_like(s)
    return _horner(dcoeffs, s)


def speed_of_sound(model: TissueModel, theta) -> np.ndarray:
    """c(theta), polynomial in the absolute temperature theta + ambient."""
    theta = np.asarray(theta, dtype=np.float64)
    c = _horner(model.speed_coeffs, theta + model.ambient)
    if np.any(c <= 0.0):
        worst = float(np.min(c))
        raise DegeneracyError(f"speed of sound became nonpositive (min {worst:.3e})")
    return c


def _dspeed(model: TissueModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    return _horner_derivative(model.speed_coeffs, theta + model.ambient)


def q_of_theta(model: TissueModel, theta, derivative: bool = False):
    """Squared speed q = c^2; optionally also dq/dtheta = 2 c c'."""
    c = speed_of_sound(model, theta)
    q = c * c
    if not derivative:
        return q
    return q, 2.0 * c * _dspeed(model, theta)


def beta_of_theta(model: TissueModel, theta, derivative: bool = False):
    """Damping beta = 2 * alpha * c^3 / omega^2; optionally d(beta)/dtheta."""
    c = speed_of_sound(model, theta)
    scale = 2.0 * model.absorption / (model.omega * model.omega)
    b = scale * c ** 3
    if not derivative:
        return b
    return b, 3.0 * scale * c * c * _dspeed(model, theta)


def k_coefficients(model: TissueModel, theta) -> tuple[np.ndarray, np.ndarray]:
    """Nonlinearity coefficients (k_W, k_K) at the given temperature."""
    q = q_of_theta(model, theta)
    k_w = (1.0 + model.b_over_2a) / (model.density * q)
    k_k = model.b_over_2a / q
    return k_w, k_k


@dataclass(frozen=True)
class EquationVariant:
    """Selects the wave model: which nonlinearity is active, whether the
    gradient coupling term (|grad u|^2)_t participates, and the shape of
    the absorbed energy Q."""

    tag: str
    linear: bool = False

    def __post_init__(self):
        if self.tag not in ("westervelt", "kuznetsov"):
            raise ValueError(f"unknown variant tag {self.tag!r}")

    @property
    def grad_coupling(self) -> float:
        if self.linear:
            return 0.0
        return 1.0 if self.tag == "kuznetsov" else 0.0


WESTERVELT = EquationVariant("westervelt")
KUZNETSOV = EquationVariant("kuznetsov")
# Linear regime: both nonlinearity coefficients and the gradient coupling
# are switched off; the absorbed energy keeps its variant form.
LINEAR_WAVE = EquationVariant("westervelt", linear=True)

_VARIANTS = {"westervelt": WESTERVELT, "kuznetsov": KUZNETSOV, "linear": LINEAR_WAVE}


def variant_by_name(name: str) -> EquationVariant:
    try:
        return _VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown equation variant {name!r} "
                         f"(expected one of {sorted(_VARIANTS)})") from None


def absorption_weights(variant: EquationVariant, model: TissueModel, theta):
    """Coefficients (a1, a2) of the absorbed energy Q = a1 u^2 + a2 u_t^2."""
    c = speed_of_sound(model, theta)
    if variant.tag == "westervelt":
        q = c * c
        beta = beta_of_theta(model, theta)
        a1 = model.absorption / c / (2.0 * model.density)
        a2 = 2.0 * beta / (q * q) / (2.0 * model.density)
        return a1, a2
    a1 = model.density * model.absorption / c
    return a1, np.zeros_like(np.asarray(theta, dtype=np.float64))


def absorbed_energy(variant: EquationVariant, model: TissueModel, u, u_t, theta):
    """Absorbed acoustic energy Q(u, u_t, theta) driving the heat equation."""
    u = np.asarray(u, dtype=np.float64)
    u_t = np.asarray(u_t, dtype=np.float64)
    a1, a2 = absorption_weights(variant, model, theta)
    return a1 * u * u + a2 * u_t * u_t


@dataclass(frozen=True)
class HeatParams:
    """Normalized heat-equation parameters: diffusivity and perfusion."""

    kappa: float
    nu: float

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")


def derived_heat_params(conductivity: float = 0.512, density: float = 1050.0,
                        heat_capacity: float = 3600.0, blood_density: float = 1030.0,
                        blood_heat_capacity: float = 3620.0) -> HeatParams:
    """Heat parameters from tissue and blood constants:
    kappa = k_a / (rho_a C_a), nu = rho_b C_b / (rho_a C_a)."""
    volumetric = density * heat_capacity
    if volumetric <= 0:
        raise ValueError("density and heat capacity must be positive")
    return HeatParams(kappa=conductivity / volumetric,
                      nu=blood_density * blood_heat_capacity / volumetric)


# Quadratic speed law used by the verification harness (frequency 1 Hz).
LIVER_QUADRATIC = TissueModel(
    speed_coeffs=(1529.3, 1.6856, 6.1131e-2),
    ambient=37.0,
    density=1050.0,
    b_over_2a=5.0,
    frequency=1.0,
)

# Quintic speed law used by the physical scenarios (frequency 100 kHz).
LIVER_QUINTIC = TissueModel(
    speed_coeffs=(1529.3, 1.6856, 6.1131e-2, -2.2967e-3, 2.2657e-5, -7.1795e-8),
    ambient=37.0,
    density=1050.0,
    b_over_2a=5.0,
    frequency=1.0e5,
)
