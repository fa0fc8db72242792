"""
Per-pixel radiometric calibration from blackbody-style measurements
===================================================================

Simulates a measurement campaign over a grid of object/ambient
temperatures, fits the 8-plane coefficient tensor per pixel by least
squares, compresses it to a radial model, and round-trips everything
through the on-disk formats.
"""

from pathlib import Path

import numpy as np

from thermofuse import (
    MeasurementSet,
    RadialModel,
    fit_per_pixel,
    fit_radial,
    load_coefficients,
    load_radial_model,
    reconstruct_coeffs,
    save_coefficients,
    save_radial_model,
    synthesize_frame,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

H = W = 48

# Ground-truth camera: each coefficient plane is a cubic polynomial in the
# distance from the optical axis, mimicking vignetting-style falloff.
scales = np.array([3e-3, 1e-5, 1e-7, 1e-9, 5e3, 1e1, 1e-1, 1e-3])
shape = np.array([1.0, 0.3, -0.2, 0.1])
truth_model = RadialModel(degree=3, coeffs=scales[:, None] * shape[None, :])
truth_tensor = reconstruct_coeffs(truth_model, H, W)

# A 4x4 grid of object/ambient temperatures gives 16 measurements, just
# enough to determine the 16 polynomial terms per pixel... the fit needs
# ambient variation or the design matrix collapses.
t_obj_grid = np.linspace(10.0, 60.0, 4)
t_amb_grid = np.linspace(-10.0, 50.0, 4)
t_obj, t_amb, frames = [], [], []
for to in t_obj_grid:
    for ta in t_amb_grid:
        t_obj.append(to)
        t_amb.append(ta)
        frames.append(synthesize_frame(np.full((H, W), to), ta, truth_tensor))
ms = MeasurementSet(np.array(t_obj), np.array(t_amb), np.stack(frames))
print(f"measurement campaign: {len(t_obj)} frames of {H}x{W} px")

fitted, residual = fit_per_pixel(ms)
rel = np.max(np.abs(fitted.planes - truth_tensor.planes) / np.abs(truth_tensor.planes))
print(f"per-pixel fit: max relative coefficient error {rel:.3e}")
print(f"largest per-pixel misfit norm: {residual.max():.3e} gray")

# Compress 8 * H * W coefficients to 8 * (degree + 1) radial numbers.
radial = fit_radial(fitted, degree=3)
rebuilt = reconstruct_coeffs(radial, H, W)
err = np.max(np.abs(rebuilt.planes - truth_tensor.planes))
print(f"radial compression: {fitted.planes.size} -> {radial.coeffs.size} numbers, "
      f"max reconstruction error {err:.3e}")

# Round-trip both representations through their file formats.
cof = OUT / "camera.cof"
save_coefficients(cof, fitted)
again = load_coefficients(cof)
print(f"tensor file round-trip exact: {np.array_equal(again.planes, fitted.planes)}")

rj = OUT / "camera.radial.json"
save_radial_model(rj, radial)
radial2 = load_radial_model(rj)
print(f"radial file round-trip exact: {np.array_equal(radial2.coeffs, radial.coeffs)}")

# Sanity probe: synthesize a fresh frame with the fitted tensor and compare
# against the ground-truth camera at an unseen temperature pair.
probe = np.full((H, W), 33.3)
diff = synthesize_frame(probe, 17.0, fitted) - synthesize_frame(probe, 17.0, truth_tensor)
print(f"unseen (33.3, 17.0) frame difference: max {np.max(np.abs(diff)):.3e} gray")
print(f"artifacts written to {OUT}")
