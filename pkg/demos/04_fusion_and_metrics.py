"""
Kernel fusion back to temperature and quality metrics
=====================================================

Closes the loop: estimate scene temperature from degraded bursts with
per-pixel kernels plus a fitted polynomial offset block, compare against
a factory-calibrated affine inversion, and score the estimates with MAE,
SSIM, the composite loss, and a cumulative error report.
"""

from pathlib import Path

import numpy as np

from thermofuse import (
    BurstSpec,
    GainOffsetMaps,
    Perturbation,
    RadialModel,
    error_report,
    fit_offset,
    fuse,
    gain_offset_at,
    kernel_provider,
    loss,
    mae,
    make_burst,
    naive_estimate,
    offset_sample,
    reconstruct_coeffs,
    save_error_report,
    ssim,
    synthesize_frame,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
rng = np.random.default_rng(7)

H = W = 64
N = 7
scales = np.array([3e-3, 1e-5, 1e-7, 1e-9, 5e3, 1e1, 1e-1, 1e-3])
shape = np.array([1.0, 0.3, -0.2, 0.1])
tensor = reconstruct_coeffs(RadialModel(degree=3, coeffs=scales[:, None] * shape[None, :]), H, W)

# Working envelope: temperature bounds and the gray range they can produce
# over the ambient band, padded for read noise.
x_bounds = (10.0, 60.0)
lows, highs = [], []
for t in x_bounds:
    for ta in (0.0, 40.0):
        f = synthesize_frame(np.full((H, W), t), ta, tensor)
        lows.append(f.min())
        highs.append(f.max())
margin = 4.0 * np.sqrt(5.0)
i_bounds = (min(lows) * 0.9 - margin, max(highs) * 1.01 + margin)

STILL = dict(overlap_range=(1.0, 1.0), perturbation=Perturbation(0.0, 0.0))
kernels = kernel_provider("identity", (N, H, W), 3)

# Fit the offset block on constant scenes spanning the working envelope.
rows = []
for i in range(120):
    temp = rng.uniform(15.0, 55.0)
    ta = rng.uniform(0.0, 40.0)
    b = make_burst(np.full((H, W), temp), ta, tensor,
                   BurstSpec(n_frames=N, seed=i, **STILL),
                   x_bounds=x_bounds, i_bounds=i_bounds)
    rows.append(offset_sample(b, kernels, np.full((H, W), temp)))
om = fit_offset(rows, nu=4)
print(f"offset block fitted on {len(rows)} constant scenes "
      f"(degree-4 polynomial in frame mean and ambient)")

# The baseline: a factory-style affine inversion, per-pixel maps from the
# true calibration linearized once at 35 degC. It never looks at the burst.
gain4, offset0 = gain_offset_at(tensor, 22.0)
mid = 35.0
g_lin = 4.0 * gain4 * mid**3
o_lin = offset0 + gain4 * mid**4 - g_lin * mid
maps = GainOffsetMaps(1.0 / g_lin, -o_lin / g_lin)

yy, xx = np.mgrid[0:H, 0:W]
scenes = {
    "uniform 47 degC": np.full((H, W), 47.0),
    "structured 35 +- 12 degC": 35.0
    + 12.0 * np.sin(2 * np.pi * xx / W) * np.cos(2 * np.pi * yy / H),
}
results = {}
for name, scene in scenes.items():
    burst = make_burst(scene, 22.0, tensor, BurstSpec(n_frames=N, seed=999, **STILL),
                       x_bounds=x_bounds, i_bounds=i_bounds)
    est = fuse(burst, kernels, om)
    nv, valid = naive_estimate(burst, maps)
    results[name] = (scene, est)
    print(f"\n{name}:")
    print(f"  kernel fusion + offset : MAE {mae(est, scene):.3f} degC, "
          f"SSIM {ssim(est, scene):.4f}, loss {loss(est, scene):.4f}")
    print(f"  factory affine inverse : MAE {mae(nv, scene, valid):.3f} degC, "
          f"SSIM {ssim(nv, scene, valid):.4f}")

# The offset block adapts to each burst's operating point through the frame
# mean and ambient, so it wins when the frozen linearization is far off
# (uniform scene at 47 degC). Its correction is global, though: on the
# structured scene the per-pixel factory maps pull ahead, and closing that
# gap is the job of the kernel weights, identity here by construction.

scene, est = results["structured 35 +- 12 degC"]
report = error_report(est, scene)
print("\ncumulative error distribution, structured scene "
      "(threshold degC -> fraction within):")
for thr, frac in report.cumulative:
    print(f"  {thr:5.2f} -> {frac:.4f}")
save_error_report(OUT / "fusion_report.json", report, diff_path=OUT / "fusion_diff.pgm")
print(f"report saved to {OUT / 'fusion_report.json'} "
      f"(+ diff map and scale sidecar)")
