"""
Thermal emission physics and the affine camera response
========================================================

Walks the chain from Planck's law to gray levels: spectral exitance,
band-integrated power, the quartic incident-power law, and its affine
small-signal expansion used by the naive estimator.
"""

import numpy as np

from thermofuse import (
    CODATA,
    KELVIN_OFFSET,
    Emission,
    affine_expand,
    band_power,
    gray_level,
    incident_power,
    integrate_spectral_density,
    planck_spectral_density,
)

# Spectral exitance of a 300 K blackbody across the LWIR window.
print("Spectral exitance at 300 K (W sr^-1 m^-3):")
for lam_um in (8.0, 10.0, 12.0, 14.0):
    m = planck_spectral_density(300.0, lam_um * 1e-6)
    print(f"  lambda = {lam_um:4.1f} um -> {m:.4e}")

# Integrating the spectral density over all wavelengths recovers the
# Stefan-Boltzmann law sigma * T^4.
total = integrate_spectral_density(300.0)
stefan = CODATA.sigma * 300.0**4
print(f"\nintegral of Planck curve : {total:.9f} W m^-2")
print(f"sigma * T^4              : {stefan:.9f} W m^-2")
print(f"relative difference      : {abs(total - stefan) / stefan:.3e}")

# A graybody seen through real optics: emissivity and a geometric factor
# scale the emitted power before it reaches a detector element.
em = Emission(temperature_kelvin=300.0, emissivity=0.95, gamma=0.7)
print(f"\nband power (eps=0.95)    : {band_power(em):.4f} W m^-2")
print(f"incident power (gamma=.7): {incident_power(em):.4f} W m^-2")

# The quartic law linearized around T0 = 20 degC. Within a few degrees the
# affine model tracks the quartic closely; far away it drifts.
t0 = 20.0 + KELVIN_OFFSET
coeffs = affine_expand(t0, em)
print(f"\naffine expansion around {t0:.2f} K:")
print(f"  gain   = {coeffs.gain:.6f} gray/degC")
print(f"  offset = {coeffs.offset:.4f} gray")
print("  t_obj (degC) | quartic | affine | rel err")
for t_c in (18.0, 20.0, 22.0, 30.0, 50.0):
    em_t = Emission(t_c + KELVIN_OFFSET, em.emissivity, em.gamma)
    exact = incident_power(em_t)
    # affine model works in degC offsets from T0
    approx = coeffs.gain * (t_c - 20.0) + coeffs.offset
    print(f"  {t_c:12.1f} | {exact:8.3f} | {approx:8.3f} "
          f"| {abs(approx - exact) / exact:.2e}")

# gray_level accepts per-ambient gain/offset callables, so the same affine
# acquisition model can be driven by scalars or calibrated per-pixel maps.
i = gray_level(35.0, 20.0, lambda ta: 40.0 + 0.1 * ta, lambda ta: 6000.0 - 2.0 * ta)
print(f"\ngray level for t_obj=35, t_amb=20 under a toy response: {i:.2f}")
