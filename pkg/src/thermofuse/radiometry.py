"""Physical emission model of a microbolometer thermal camera.

Maps object/ambient temperatures to radiative power and camera gray
levels: blackbody spectral exitance, band power through emissivity and
a geometric coefficient, the first-order (affine) expansion of the
quartic law around a reference temperature, and the affine gray-level
acquisition model with ambient-dependent gain and offset.

Temperatures are Kelvin where a name says kelvin, degrees Celsius
otherwise; the conversion constant is exactly 273.15.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

KELVIN_OFFSET = 273.15


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2018 values, stored to full published precision."""

    h: float = 6.62607015e-34       # Planck constant, J*s
    c: float = 299792458.0          # speed of light, m/s
    k: float = 1.380649e-23         # Boltzmann constant, J/K
    sigma: float = 5.670374419e-8   # Stefan-Boltzmann constant, W m^-2 K^-4

    def __post_init__(self):
        if min(self.h, self.c, self.k, self.sigma) <= 0:
            raise ValueError("physical constants must be strictly positive")


CODATA = PhysicalConstants()


@dataclass(frozen=True)
class Emission:
    """An emitting object as seen by the camera.

    gamma bundles the geometric/optical collection factor between the
    object's radiance and the power arriving at a detector element.
    """

    temperature_kelvin: float
    emissivity: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.temperature_kelvin <= 0:
            raise ValueError("temperature_kelvin must be > 0")
        if not 0.0 <= self.emissivity <= 1.0:
            raise ValueError("emissivity must lie in [0, 1]")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


@dataclass(frozen=True)
class AffineCoefficients:
    """Gain (gray levels per degree) and offset (gray levels) of the linearized model."""

    gain: float
    offset: float


def planck_spectral_density(t_kelvin, wavelength, consts=CODATA):
    """Blackbody spectral exitance 2*pi*h*c^2 / lambda^5 / (exp(h*c/(lambda*k*T)) - 1).

    Args:
        t_kelvin: temperature in K, scalar or array, > 0.
        wavelength: wavelength in m, scalar or array, > 0.

    Returns:
        Spectral exitance in W m^-3 (per unit area per unit wavelength).
    """
    t = np.asarray(t_kelvin, dtype=np.float64)
    lam = np.asarray(wavelength, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("t_kelvin must be > 0")
    if np.any(lam <= 0):
        raise ValueError("wavelength must be > 0")
    x = consts.h * consts.c / (lam * consts.k * t)
    # 1/(e^x - 1) written as e^-x/(1 - e^-x): no overflow for large x,
    # graceful underflow to 0 in the exponential-suppression regime.
    out = (
        2.0 * np.pi * consts.h * consts.c**2 / lam**5
        * np.exp(-x) / (-np.expm1(-x))
    )
    return out if out.ndim else float(out)


def band_power(emission, consts=CODATA):
    """Total emitted power density sigma * emissivity * T^4 (W m^-2)."""
    return consts.sigma * emission.emissivity * emission.temperature_kelvin**4


def incident_power(emission, consts=CODATA):
    """Power reaching a detector element: gamma * sigma * emissivity * T^4."""
    return emission.gamma * band_power(emission, consts)


def affine_expand(t0_kelvin, emission, consts=CODATA):
    """First-order expansion of incident_power around reference temperature T0.

    Returns AffineCoefficients with gain = 4*gamma*eps*sigma*T0^3 and
    offset = gamma*eps*sigma*T0^4, so gain*dT + offset approximates the
    quartic law for |dT| small against T0.
    """
    if t0_kelvin <= 0:
        raise ValueError("t0_kelvin must be > 0")
    ges = emission.gamma * emission.emissivity * consts.sigma
    return AffineCoefficients(
        gain=4.0 * ges * t0_kelvin**3,
        offset=ges * t0_kelvin**4,
    )


def gray_level(t_obj, t_amb, gain_fn, offset_fn):
    """Affine acquisition model: I = gain_fn(t_amb) * t_obj + offset_fn(t_amb).

    gain_fn/offset_fn map an ambient temperature to a scalar or a per-pixel
    map (e.g. supplied by the calibration module); t_obj is the object
    signal the gain multiplies, scalar or 2D.
    """
    return gain_fn(t_amb) * t_obj + offset_fn(t_amb)


def integrate_spectral_density(t_kelvin, lam_min=1e-7, lam_max=1e-3, consts=CODATA):
    """Adaptive quadrature of the spectral exitance over [lam_min, lam_max].

    The default band [0.1 um, 1 mm] truncates less than 1e-5 of the total
    sigma*T^4 for T in [250, 350] K (long-wave tail ~2*pi*c*k*T/(3*lam^3)),
    so the result approximates the closed-form band power to that level.
    """
    val, _ = quad(
        lambda lam: planck_spectral_density(t_kelvin, lam, consts),
        lam_min,
        lam_max,
        limit=200,
    )
    return val
