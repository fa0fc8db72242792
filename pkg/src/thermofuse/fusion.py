"""Temperature estimation from registered bursts.

Two estimators are provided.  The naive one inverts the affine
acquisition model per pixel with reciprocal-gain/offset maps sampled at
each frame's pre-warp coordinates and averages over frames.  The kernel
estimator computes, for every output pixel, inner products between
per-pixel per-frame K x K kernels and the patches around that pixel,
then adds a scalar offset predicted by a polynomial in the frame means
and the ambient temperature.  The kernel stack stands in for a learned
kernel-prediction network; deterministic families are provided and
externally produced stacks can be loaded from file.
"""

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .burst import Burst, normalize_temperature, warp
from .formats import FormatError, read_json, write_json


@dataclass
class GainOffsetMaps:
    """Reciprocal gain G (degC per gray level) and offset D (degC) maps."""

    g: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.float64)
        self.d = np.asarray(self.d, dtype=np.float64)
        if self.g.shape != self.d.shape or self.g.ndim != 2:
            raise ValueError("G and D must be matching 2D maps")
        if not (np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.d))):
            raise ValueError("G and D must be finite")


@dataclass
class KernelStack:
    """Per-frame, per-pixel kernels: values shaped (N, h, w, K, K), K odd.

    Stored as float32 (the interchange precision); kernels are applied in
    float64.  Kernels are not normalized: their magnitude carries the
    radiometric gain.
    """

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 5 or self.values.shape[3] != self.values.shape[4]:
            raise ValueError("kernel stack must be shaped (N, h, w, K, K)")
        if self.values.shape[3] % 2 != 1:
            raise ValueError("kernel size K must be odd")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("kernel values must be finite")

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def frame_shape(self):
        return self.values.shape[1:3]

    @property
    def size(self):
        return self.values.shape[3]


@dataclass
class OffsetModel:
    """Polynomial offset block: delta[i, j] weights mean^i * t_amb^j, i,j in 0..nu.

    The per-frame terms share one coefficient table; the frame count enters
    only through the averaging in offset_eval.
    """

    nu: int
    delta: np.ndarray = None

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be >= 0")
        if self.delta is None:
            self.delta = np.zeros((self.nu + 1, self.nu + 1))
        self.delta = np.asarray(self.delta, dtype=np.float64)
        if self.delta.shape != (self.nu + 1, self.nu + 1):
            raise ValueError("delta must be (nu+1) x (nu+1)")
        if not np.all(np.isfinite(self.delta)):
            raise ValueError("delta must be finite")


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def naive_estimate(burst, gd):
    """Per-pixel affine inversion averaged over frames.

    Each frame contributes G*I + D with G and D sampled at the frame's
    pre-warp coordinates (the maps are warped into the pivot plane by the
    frame's registration homography, so pivot pixel p reads the map values
    of the sensor location that observed it).

    Returns:
        (estimate, valid) where pixels with no valid contributing frame
        are NaN in the estimate and false in `valid`.
    """
    if gd.g.shape != burst.frame_shape:
        raise ValueError("gain/offset maps must match the burst frame shape")
    acc = np.zeros(burst.frame_shape)
    cnt = np.zeros(burst.frame_shape, dtype=np.intp)
    for i in range(burst.n_frames):
        reg = burst.perturbed_inverse_homographies[i]
        g_w, g_ok = warp(gd.g, reg)
        d_w, _ = warp(gd.d, reg)
        ok = burst.masks[i] & g_ok
        acc[ok] += g_w[ok] * burst.frames[i][ok] + d_w[ok]
        cnt[ok] += 1
    valid = cnt > 0
    out = np.full(burst.frame_shape, np.nan)
    out[valid] = acc[valid] / cnt[valid]
    return out, valid


def _frames_array(frames_or_burst):
    if isinstance(frames_or_burst, Burst):
        return frames_or_burst.frames
    arr = np.asarray(frames_or_burst, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError("expected a (N, h, w) frame stack or a Burst")
    return arr


def apply_kernels(frames, ks):
    """Gain term of the kernel estimator: sum over frames of the inner
    product between each pixel's kernel and the K x K patch around that
    pixel (replicate padding at the borders).

    `frames` may be a Burst or a raw (N, h, w) stack.
    """
    arr = _frames_array(frames)
    n, h, w = arr.shape
    if ks.values.shape[:3] != (n, h, w):
        raise ValueError(
            f"kernel stack {ks.values.shape[:3]} does not match frames {(n, h, w)}"
        )
    k = ks.size
    r = k // 2
    padded = np.pad(arr, ((0, 0), (r, r), (r, r)), mode="edge")
    patches = sliding_window_view(padded, (k, k), axis=(1, 2))  # (N, h, w, K, K)
    return np.einsum(
        "nijkl,nijkl->ij", patches, ks.values.astype(np.float64), optimize=True
    )


def offset_eval(frame_means, t_amb, om):
    """Scalar offset: average over frames of sum_ij delta[i,j] * mean^i * t_amb^j.

    The polynomial is evaluated on the values as given; pass means and
    ambient temperature in the same units used when fitting (the fusion
    pipeline uses normalized values).
    """
    means = np.atleast_1d(np.asarray(frame_means, dtype=np.float64))
    if means.size < 1:
        raise ValueError("need at least one frame mean")
    mp = means[:, None] ** np.arange(om.nu + 1)[None, :]          # (N, nu+1)
    tp = float(t_amb) ** np.arange(om.nu + 1)                      # (nu+1,)
    return float(np.mean(mp @ om.delta @ tp))


def _offset_features(frame_means, t_amb, nu):
    means = np.atleast_1d(np.asarray(frame_means, dtype=np.float64))
    mp = means[:, None] ** np.arange(nu + 1)[None, :]
    tp = float(t_amb) ** np.arange(nu + 1)
    return (mp.mean(axis=0)[:, None] * tp[None, :]).ravel()       # (nu+1)^2


def fit_offset(samples, nu):
    """Least-squares fit of the offset polynomial.

    Args:
        samples: iterable of (frame_means, t_amb, target_offset); the model
            is linear in delta, so the fit is exact linear LS over the
            averaged monomial features.
        nu: polynomial degree.
    """
    samples = list(samples)
    need = (nu + 1) ** 2
    if len(samples) < need:
        raise ValueError(f"need >= {need} samples to fit a degree-{nu} offset model")
    feats = np.stack([_offset_features(m, t, nu) for m, t, _ in samples])
    targets = np.array([t for _, _, t in samples], dtype=np.float64)
    sol, _, rank, _ = np.linalg.lstsq(feats, targets, rcond=None)
    if rank < need:
        raise ValueError(
            f"offset feature matrix rank {rank} < {need}: corpus does not span the model"
        )
    return OffsetModel(nu=nu, delta=sol.reshape(nu + 1, nu + 1))


def masked_frame_means(burst):
    """Mean of each normalized frame over its valid pixels."""
    fr = burst.normalized_frames()
    out = np.empty(burst.n_frames)
    for i in range(burst.n_frames):
        m = burst.masks[i]
        if not m.any():
            raise ValueError(f"frame {i} has no valid pixels")
        out[i] = fr[i][m].mean()
    return out


def fuse(burst, ks, om):
    """Full kernel estimator: normalized frames through the kernels, plus
    the offset block, denormalized to degC via the burst's stored bounds.

    The offset polynomial receives the masked means of the normalized
    frames and the ambient temperature normalized by the temperature
    bounds.
    """
    gain_term = apply_kernels(burst.normalized_frames(), ks)
    off = offset_eval(masked_frame_means(burst), burst.normalized_t_amb(), om)
    x_min, x_max = burst.x_bounds
    return (gain_term + off) * (x_max - x_min) + x_min


def offset_sample(burst, ks, x_truth):
    """Training row for fit_offset: (frame_means, t_amb, target) in
    normalized units, with target = mean(normalized truth over the pivot
    mask) - mean(gain-term output)."""
    x_min, x_max = burst.x_bounds
    xn = normalize_temperature(np.asarray(x_truth, dtype=np.float64), x_min, x_max)
    gain_term = apply_kernels(burst.normalized_frames(), ks)
    pivot_mask = burst.masks[burst.pivot_index]
    target = float(xn[pivot_mask].mean() - gain_term[pivot_mask].mean())
    return masked_frame_means(burst), burst.normalized_t_amb(), target


# ---------------------------------------------------------------------------
# Kernel providers
# ---------------------------------------------------------------------------

def _delta_stack(n, h, w, k, offsets, weight):
    vals = np.zeros((n, h, w, k, k), dtype=np.float32)
    r = k // 2
    for i, (dx, dy) in enumerate(offsets):
        iy, ix = r - dy, r - dx
        if not (0 <= iy < k and 0 <= ix < k):
            raise ValueError(f"shift ({dx},{dy}) does not fit in a {k}x{k} kernel")
        vals[i, :, :, iy, ix] = weight
    return vals


def kernel_provider(kind, burst_shape, k, shifts=None, path=None):
    """Deterministic kernel families standing in for a learned predictor.

    kind:
        "identity": centered delta scaled 1/N per frame (frame averaging).
        "average": uniform kernels 1/(N*K*K) (spatio-temporal box mean).
        "shifted_delta": per-frame delta at offset (-dx, -dy) scaled 1/N,
            compensating frame content sampled at (x+dx, y+dy); `shifts`
            lists one (dx, dy) per frame.
        "file": load a stack from `path` (see save_kernel_stack).
    """
    n, h, w = burst_shape
    if k < 1 or k % 2 != 1:
        raise ValueError("kernel size K must be odd and >= 1")
    if kind == "identity":
        return KernelStack(_delta_stack(n, h, w, k, [(0, 0)] * n, 1.0 / n))
    if kind == "average":
        return KernelStack(np.full((n, h, w, k, k), 1.0 / (n * k * k), dtype=np.float32))
    if kind == "shifted_delta":
        if shifts is None or len(shifts) != n:
            raise ValueError("shifted_delta needs one (dx, dy) shift per frame")
        return KernelStack(_delta_stack(n, h, w, k, shifts, 1.0 / n))
    if kind == "file":
        if path is None:
            raise ValueError("file kind needs a path")
        ks = load_kernel_stack(path)
        if ks.values.shape[:3] != (n, h, w):
            raise ValueError(
                f"kernel file shape {ks.values.shape[:3]} does not match burst {(n, h, w)}"
            )
        return ks
    raise ValueError(f"unknown kernel kind {kind!r}")


def residual_shifts(burst):
    """Integer residual displacement per frame after registration.

    For frame views created by true homography t (pivot -> view) and
    registered by r (view -> pivot), the registered content equals the
    truth sampled through (r o t)^-1; for translational residuals this is
    a shift (dx, dy) usable with the shifted_delta provider.
    """
    out = []
    for t, r in zip(burst.true_homographies, burst.perturbed_inverse_homographies):
        rho = np.linalg.inv(r.matrix @ t.matrix)
        rho = rho / rho[2, 2]
        out.append((int(round(rho[0, 2])), int(round(rho[1, 2]))))
    return out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

KERNEL_MAGIC = b"KSTK"


def save_kernel_stack(path, ks):
    """Binary stack: magic, N, h, w, K as u32-LE, then float32-LE values
    (frame-major, row-major, kernel-row-major: C order of (N,h,w,K,K))."""
    n, h, w = ks.values.shape[:3]
    with open(path, "wb") as f:
        f.write(KERNEL_MAGIC)
        f.write(struct.pack("<IIII", n, h, w, ks.size))
        f.write(ks.values.astype("<f4").tobytes())


def load_kernel_stack(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != KERNEL_MAGIC:
        raise FormatError(f"bad kernel-stack magic in {path!r}", offset=0)
    if len(data) < 20:
        raise FormatError(f"truncated kernel-stack header in {path!r}", offset=len(data))
    n, h, w, k = struct.unpack_from("<IIII", data, 4)
    if k % 2 != 1:
        raise FormatError(f"kernel size {k} is not odd in {path!r}", offset=16)
    need = n * h * w * k * k * 4
    if len(data) - 20 < need:
        raise FormatError(f"truncated kernel-stack data in {path!r}", offset=len(data))
    vals = np.frombuffer(data, dtype="<f4", count=n * h * w * k * k, offset=20)
    return KernelStack(vals.reshape(n, h, w, k, k).copy())


def save_offset_model(path, om):
    write_json(path, {"nu": om.nu, "delta": om.delta.tolist()})


def load_offset_model(path):
    meta = read_json(path)
    return OffsetModel(nu=int(meta["nu"]), delta=np.asarray(meta["delta"]))
