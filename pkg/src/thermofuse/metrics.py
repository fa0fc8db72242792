"""Evaluation metrics and the training-style loss functional.

All metrics respect a validity mask: a pixel (or the window centered on
it, for SSIM and gradients) contributes only if the pixel itself is
mask-true.  Windowed operations never read masked-out values: replicate
padding supplies neighbors at image borders, and off-mask neighbors are
replaced by their nearest valid pixel before windowing, so mutating
masked-out pixels cannot change any metric.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .formats import write_json, write_pgm

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class LossWeights:
    """Weights of the gradient and structural terms of the loss."""

    lambda1: float = 0.1
    lambda2: float = 0.01

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class ErrorReport:
    """MAE, per-pixel |difference| map, and the cumulative error curve
    (fraction of valid pixels with |difference| <= threshold)."""

    mae: float
    per_pixel_abs_diff: np.ndarray
    cumulative: list = field(default_factory=list)


def _checked(x_hat, x, mask):
    a = np.asarray(x_hat, dtype=np.float64)
    b = np.asarray(x, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if mask is None:
        m = np.ones(a.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != a.shape:
            raise ValueError("mask shape mismatch")
    if not m.any():
        raise ValueError("mask selects no pixels")
    return a, b, m


def mae(x_hat, x, mask=None):
    """Mean absolute difference over mask-true pixels (degC)."""
    a, b, m = _checked(x_hat, x, mask)
    return float(np.mean(np.abs(a[m] - b[m])))


def _fill_invalid(img, mask):
    """Replace mask-false pixels by their nearest mask-true pixel.

    The in-image counterpart of replicate border padding: windowed
    operations see only valid values, so masked-out pixels cannot
    influence any result.
    """
    if mask.all():
        return img
    idx = ndimage.distance_transform_edt(
        ~mask, return_distances=False, return_indices=True
    )
    return img[tuple(idx)]


def sobel_magnitude(img):
    """sqrt(Gx^2 + Gy^2) with the standard 3x3 Sobel kernels, replicate border."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 3:
        raise ValueError("image must be 2D and at least 3x3")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    return np.hypot(gx, gy)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = size // 2
    g = np.exp(-np.arange(-r, r + 1) ** 2 / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a, b, mask=None, data_range=None):
    """Mean local structural similarity over mask-true window centers.

    Local statistics use an 11x11 Gaussian window (sigma 1.5) with
    replicate borders; off-mask pixels are nearest-valid-filled before
    windowing.  Stability constants are K1=0.01, K2=0.03 scaled by
    `data_range` (default: the joint min-max span of both inputs over the
    mask; a degenerate zero span falls back to 1.0).
    """
    a, b, m = _checked(a, b, mask)
    if data_range is None:
        lo = min(a[m].min(), b[m].min())
        hi = max(a[m].max(), b[m].max())
        data_range = hi - lo if hi > lo else 1.0
    a = _fill_invalid(a, m)
    b = _fill_invalid(b, m)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    win = _gaussian_window()
    filt = lambda im: ndimage.correlate(im, win, mode="nearest")
    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean((num / den)[m]))


def loss(x_hat, x, mask=None, w=LossWeights()):
    """Fidelity + gradient + structural loss:

        mean|x_hat - x| + lambda1 * mean|grad(x_hat) - grad(x)|
                        + lambda2 * (1 - ssim)

    L1 terms are mean-reduced over mask-true pixels; gradients are Sobel
    magnitudes of the nearest-valid-filled maps, read at valid centers.
    """
    a, b, m = _checked(x_hat, x, mask)
    out = float(np.mean(np.abs(a[m] - b[m])))
    if w.lambda1 > 0:
        ga = sobel_magnitude(_fill_invalid(a, m))
        gb = sobel_magnitude(_fill_invalid(b, m))
        out += w.lambda1 * float(np.mean(np.abs(ga[m] - gb[m])))
    if w.lambda2 > 0:
        out += w.lambda2 * (1.0 - ssim(a, b, m))
    return out


def error_report(x_hat, x, mask=None, thresholds=(0.25, 0.5, 1.0, 2.0, 5.0)):
    """MAE, |difference| map, and cumulative fraction-below-threshold curve.

    Thresholds must be ascending; a final (max|diff|, 1.0) point is
    appended when the given thresholds do not already reach the largest
    error, so the stored curve always ends at 1.0.
    """
    a, b, m = _checked(x_hat, x, mask)
    th = [float(t) for t in thresholds]
    if any(t2 < t1 for t1, t2 in zip(th, th[1:])):
        raise ValueError("thresholds must be sorted ascending")
    diff = np.abs(a - b)
    vals = diff[m]
    cum = [(t, float(np.mean(vals <= t))) for t in th]
    if not cum or cum[-1][1] < 1.0:
        cum.append((float(vals.max()), 1.0))
    return ErrorReport(
        mae=float(vals.mean()),
        per_pixel_abs_diff=diff,
        cumulative=cum,
    )


def save_error_report(json_path, report, diff_path=None):
    """Serialize a report as JSON; optionally write the |difference| map as a
    16-bit PGM plus a JSON sidecar recording the degC scale."""
    write_json(
        json_path,
        {
            "mae": report.mae,
            "cumulative": [[t, f] for t, f in report.cumulative],
        },
    )
    if diff_path is not None:
        d = report.per_pixel_abs_diff
        lo, hi = float(d.min()), float(d.max())
        span = hi - lo if hi > lo else 1.0
        write_pgm(diff_path, (d - lo) / span * 65535.0)
        write_json(
            str(diff_path) + ".json",
            {
                "units": "celsius",
                "scale_min": lo,
                "scale_max": hi,
                "height": int(d.shape[0]),
                "width": int(d.shape[1]),
            },
        )
