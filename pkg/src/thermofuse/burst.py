"""Multi-frame burst synthesis and manipulation.

A burst is a set of N overlapping views of one temperature map, registered
toward a pivot frame.  This module samples homography paths (random walk
or hover), perturbs registration transforms, warps frames with validity
masks, injects column-structured fixed-pattern noise and Gaussian read
noise, normalizes, and packages everything with full provenance so a
burst is a pure function of (inputs, seed).
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calibration import synthesize_frame
from .formats import read_json, read_mask_pgm, read_pgm, write_json, write_mask_pgm, write_pgm

DEFAULT_SEED = 42

# Sub-stream keys: every stochastic stage draws from SeedSequence([seed, key, ...])
# so results are independent of evaluation order (and of thread scheduling).
_STREAM_PATH = 0
_STREAM_FPN = 1
_STREAM_PERTURB = 2
_STREAM_NOISE = 3
_STREAM_AUGMENT = 4

# Path targets are pulled this far inside the overlap range so the sampled
# overlaps stay strictly within the closed interval despite roundoff.
_OVERLAP_MARGIN = 1e-6


class ConfigurationError(ValueError):
    pass


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


class Homography:
    """Invertible 3x3 projective transform acting on (x, y) pixel coordinates.

    The matrix is normalized so element (3,3) equals 1 when nonzero, and is
    immutable after construction.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if not np.all(np.isfinite(m)):
            raise ValueError("homography entries must be finite")
        det = np.linalg.det(m)
        if det == 0:
            raise ValueError("homography must be nonsingular")
        if m[2, 2] != 0:
            m = m / m[2, 2]
        m.flags.writeable = False
        self.matrix = m

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx, dy):
        m = np.eye(3)
        m[0, 2] = dx
        m[1, 2] = dy
        return cls(m)

    def inverse(self):
        return Homography(np.linalg.inv(self.matrix))

    def compose(self, other):
        """Transform applying `other` first, then `self`."""
        return Homography(self.matrix @ other.matrix)

    def __matmul__(self, other):
        return self.compose(other)

    def apply(self, points):
        """Map (n, 2) array of (x, y) points through the homography."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        ones = np.ones((pts.shape[0], 1))
        hom = np.hstack([pts, ones]) @ self.matrix.T
        with np.errstate(divide="ignore", invalid="ignore"):
            return hom[:, :2] / hom[:, 2:3]

    def __repr__(self):
        return f"Homography({self.matrix.tolist()})"


@dataclass(frozen=True)
class Perturbation:
    """Registration-error model: uniform translation jitter plus Gaussian
    noise on the two perspective entries.  perspective_sigma is the
    *variance* of that Gaussian, N(0, perspective_sigma)."""

    max_translation_px: float = 2.0
    perspective_sigma: float = 5e-5


@dataclass(frozen=True)
class BurstSpec:
    n_frames: int = 7
    mode: str = "walk"  # "walk" | "hover"
    overlap_range: tuple = (0.60, 0.80)
    perturbation: Perturbation = field(default_factory=Perturbation)
    noise_sigma2: float = 5.0
    fpn_range: tuple = (0.9, 1.01)
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.n_frames < 1:
            raise ConfigurationError("n_frames must be >= 1")
        if self.mode not in ("walk", "hover"):
            raise ConfigurationError(f"unknown path mode {self.mode!r}")
        lo, hi = self.overlap_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigurationError("overlap_range must satisfy 0 < lo <= hi <= 1")
        if self.noise_sigma2 < 0:
            raise ConfigurationError("noise_sigma2 must be >= 0")
        if self.fpn_range[0] > self.fpn_range[1]:
            raise ConfigurationError("fpn_range must be ordered")

    def to_dict(self):
        return {
            "n_frames": self.n_frames,
            "mode": self.mode,
            "overlap_range": list(self.overlap_range),
            "perturbation": {
                "max_translation_px": self.perturbation.max_translation_px,
                "perspective_sigma": self.perturbation.perspective_sigma,
            },
            "noise_sigma2": self.noise_sigma2,
            "fpn_range": list(self.fpn_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        pert = d.pop("perturbation", {})
        known = {k: d[k] for k in ("n_frames", "mode", "noise_sigma2", "seed") if k in d}
        if "overlap_range" in d:
            known["overlap_range"] = tuple(d["overlap_range"])
        if "fpn_range" in d:
            known["fpn_range"] = tuple(d["fpn_range"])
        known["perturbation"] = Perturbation(**pert)
        return cls(**known)


@dataclass
class Burst:
    """Registered multi-frame burst.

    frames hold raw gray levels; x_bounds/i_bounds are the normalization
    bounds (temperature degC, gray level) consumers use to map to [0, 1].
    true_homographies map pivot coordinates into each view (identity at the
    pivot); perturbed_inverse_homographies are the registration transforms
    actually applied (view back to pivot).
    """

    frames: np.ndarray
    masks: np.ndarray
    true_homographies: list
    perturbed_inverse_homographies: list
    t_amb: float
    pivot_index: int = 0
    x_bounds: tuple = (0.0, 1.0)
    i_bounds: tuple = (0.0, 1.0)
    seed: int = None
    overlaps: list = None
    spec: BurstSpec = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.masks = np.asarray(self.masks, dtype=bool)
        if self.frames.ndim != 3 or self.frames.shape != self.masks.shape:
            raise ValueError("frames and masks must be matching (N, h, w) stacks")
        n = self.frames.shape[0]
        if len(self.true_homographies) != n or len(self.perturbed_inverse_homographies) != n:
            raise ValueError("homography lists must have one entry per frame")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def frame_shape(self):
        return self.frames.shape[1:]

    def normalized_frames(self):
        return normalize_frame(self.frames, *self.i_bounds)

    def normalized_t_amb(self):
        return normalize_temperature(self.t_amb, *self.x_bounds)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def warp(frame, h):
    """Inverse-mapped bilinear warp of `frame` by homography `h` (source -> dest).

    Output pixel p takes the bilinearly interpolated source value at
    h^-1(p).  The validity mask is true iff the back-projected point lies
    inside the closed source rectangle [0, w-1] x [0, h-1] (all four
    interpolation neighbors available; exact-boundary samples use the
    clamped cell so an identity warp is valid everywhere).
    """
    frame = np.asarray(frame, dtype=np.float64)
    hh, ww = frame.shape
    hinv = np.linalg.inv(h.matrix)
    yy, xx = np.mgrid[0:hh, 0:ww].astype(np.float64)
    den = hinv[2, 0] * xx + hinv[2, 1] * yy + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (hinv[0, 0] * xx + hinv[0, 1] * yy + hinv[0, 2]) / den
        sy = (hinv[1, 0] * xx + hinv[1, 1] * yy + hinv[1, 2]) / den
    valid = (
        (den > 0)
        & np.isfinite(sx) & np.isfinite(sy)
        & (sx >= 0) & (sx <= ww - 1)
        & (sy >= 0) & (sy <= hh - 1)
    )
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    x0 = np.clip(np.floor(sx), 0, ww - 2).astype(np.intp)
    y0 = np.clip(np.floor(sy), 0, hh - 2).astype(np.intp)
    fx = sx - x0
    fy = sy - y0
    f00 = frame[y0, x0]
    f01 = frame[y0, x0 + 1]
    f10 = frame[y0 + 1, x0]
    f11 = frame[y0 + 1, x0 + 1]
    out = (
        (1.0 - fy) * ((1.0 - fx) * f00 + fx * f01)
        + fy * ((1.0 - fx) * f10 + fx * f11)
    )
    return np.where(valid, out, 0.0), valid


def _clip_polygon(points, w, h):
    """Sutherland-Hodgman clip of a polygon against the rectangle [0,w]x[0,h]."""
    def clip_edge(poly, inside, intersect):
        out = []
        n = len(poly)
        for i in range(n):
            cur, nxt = poly[i], poly[(i + 1) % n]
            cin, nin = inside(cur), inside(nxt)
            if cin:
                out.append(cur)
                if not nin:
                    out.append(intersect(cur, nxt))
            elif nin:
                out.append(intersect(cur, nxt))
        return out

    def x_cross(p, q, x):
        t = (x - p[0]) / (q[0] - p[0])
        return (x, p[1] + t * (q[1] - p[1]))

    def y_cross(p, q, y):
        t = (y - p[1]) / (q[1] - p[1])
        return (p[0] + t * (q[0] - p[0]), y)

    poly = [tuple(p) for p in points]
    for inside, intersect in (
        (lambda p: p[0] >= 0, lambda p, q: x_cross(p, q, 0.0)),
        (lambda p: p[0] <= w, lambda p, q: x_cross(p, q, float(w))),
        (lambda p: p[1] >= 0, lambda p, q: y_cross(p, q, 0.0)),
        (lambda p: p[1] <= h, lambda p, q: y_cross(p, q, float(h))),
    ):
        poly = clip_edge(poly, inside, intersect)
        if len(poly) < 3:
            return []
    return poly


def _shoelace(points):
    x = np.array([p[0] for p in points])
    y = np.array([p[1] for p in points])
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def overlap(h, dims):
    """Fraction of the pivot rectangle covered by the warped source quadrilateral.

    The source pixel-extent rectangle (corners (0,0)..(w,h)) is mapped by
    `h` and clipped against the identical pivot rectangle; the area ratio
    is computed by the shoelace formula.  Degenerate quadrilaterals
    (behind-camera or collapsed) give 0.0.
    """
    hh, ww = dims
    if hh <= 0 or ww <= 0:
        raise ValueError("dims must be positive")
    corners = np.array([[0, 0], [ww, 0], [ww, hh], [0, hh]], dtype=np.float64)
    quad = h.apply(corners)
    if not np.all(np.isfinite(quad)):
        return 0.0
    if abs(_shoelace([tuple(p) for p in quad])) < 1e-12:
        return 0.0
    clipped = _clip_polygon(quad, ww, hh)
    if len(clipped) < 3:
        return 0.0
    return float(abs(_shoelace(clipped)) / (ww * hh))


def _translation_for_overlap(target, direction, dims):
    """Distance s along `direction` so a pure translation has the target overlap."""
    hh, ww = dims
    cx, cy = abs(np.cos(direction)), abs(np.sin(direction))
    a1, a2 = cx / ww, cy / hh
    b = a1 + a2
    if b == 0:
        raise ConfigurationError("degenerate direction")
    disc = b * b - 4.0 * a1 * a2 * (1.0 - target)
    if disc < 0:
        raise ConfigurationError(
            f"overlap {target} unreachable for dims {dims}"
        )
    # smaller quadratic root of (1 - a1 s)(1 - a2 s) = target, in the
    # cancellation-stable form (also valid when a1*a2 == 0)
    return 2.0 * (1.0 - target) / (b + np.sqrt(disc))


def sample_path(spec, frame_dims):
    """Sample the burst's homographies; pivot (index 0) is identity.

    walk: frames drift monotonically along one random direction, each
    placed so its overlap with the pivot hits a target drawn from
    overlap_range (targets sorted so distance grows along the path).
    hover: frames scatter around one anchor displacement with small
    direction/overlap jitter.  Every non-pivot overlap lies in
    overlap_range by construction.
    """
    hh, ww = frame_dims
    if hh < 2 or ww < 2:
        raise ConfigurationError("frame dims too small to satisfy overlap sampling")
    n = spec.n_frames
    homs = [Homography.identity()]
    if n == 1:
        return homs
    rng = _stream(spec.seed, _STREAM_PATH)
    lo = spec.overlap_range[0] + _OVERLAP_MARGIN
    hi = spec.overlap_range[1] - _OVERLAP_MARGIN
    if lo > hi:
        lo = hi = 0.5 * (spec.overlap_range[0] + spec.overlap_range[1])
    if spec.mode == "walk":
        theta = rng.uniform(0.0, 2.0 * np.pi)
        targets = np.sort(rng.uniform(lo, hi, n - 1))[::-1]  # overlap falls along the walk
        dirs = np.full(n - 1, theta)
    else:
        theta0 = rng.uniform(0.0, 2.0 * np.pi)
        anchor = rng.uniform(lo, hi)
        targets = np.clip(anchor + rng.uniform(-0.05, 0.05, n - 1), lo, hi)
        dirs = theta0 + rng.uniform(-0.3, 0.3, n - 1)
    for target, direction in zip(targets, dirs):
        s = _translation_for_overlap(target, direction, frame_dims)
        homs.append(Homography.translation(s * np.cos(direction), s * np.sin(direction)))
    return homs


def perturb(h, spec, rng):
    """Jitter a registration homography: uniform translation on the two
    translation entries, Gaussian N(0, perspective_sigma) on the two
    perspective entries.  At most those 4 entries change."""
    p = spec.perturbation if isinstance(spec, BurstSpec) else spec
    rng = _as_rng(rng)
    m = h.matrix.copy()
    t = p.max_translation_px
    m[0, 2] += rng.uniform(-t, t)
    m[1, 2] += rng.uniform(-t, t)
    sd = np.sqrt(p.perspective_sigma)
    m[2, 0] += rng.normal(0.0, sd)
    m[2, 1] += rng.normal(0.0, sd)
    return Homography(m)


# ---------------------------------------------------------------------------
# Sensor effects and normalization
# ---------------------------------------------------------------------------

def generate_fpn(h, w, u_min, u_max, seed):
    """Rank-1 fixed-pattern multiplier: ones(h,1) @ row(1,w), row ~ U[u_min, u_max].

    Every column of the result is constant; the same map is shared by all
    frames of a burst.
    """
    if u_min > u_max:
        raise ValueError("u_min must be <= u_max")
    rng = _as_rng(seed)
    row = rng.uniform(u_min, u_max, w)
    return np.ones((h, 1)) * row[None, :]


def add_noise(frame, sigma2, seed):
    """Add i.i.d. zero-mean Gaussian noise of variance sigma2 (gray levels)."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    rng = _as_rng(seed)
    frame = np.asarray(frame, dtype=np.float64)
    return frame + rng.normal(0.0, np.sqrt(sigma2), frame.shape)


def normalize_temperature(x, x_min, x_max):
    """(x - x_min) / (x_max - x_min); requires x_max > x_min."""
    if x_max <= x_min:
        raise ValueError("x_max must exceed x_min")
    return (np.asarray(x, dtype=np.float64) - x_min) / (x_max - x_min)


def denormalize_temperature(nx, x_min, x_max):
    if x_max <= x_min:
        raise ValueError("x_max must exceed x_min")
    return np.asarray(nx, dtype=np.float64) * (x_max - x_min) + x_min


def normalize_frame(i, i_min, i_max):
    """Gray-level counterpart of normalize_temperature."""
    if i_max <= i_min:
        raise ValueError("i_max must exceed i_min")
    return (np.asarray(i, dtype=np.float64) - i_min) / (i_max - i_min)


def _safe_bounds(lo, hi):
    if hi > lo:
        return float(lo), float(hi)
    return float(lo) - 0.5, float(lo) + 0.5  # degenerate span: widen symmetrically


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def make_burst(x, t_amb, c, spec, x_bounds=None, i_bounds=None, augment=False,
               threads=None):
    """Synthesize a registered burst from a temperature map.

    Pipeline: sample homographies, project the map into each view,
    synthesize gray levels, apply one shared FPN to all frames, add
    independent Gaussian noise per frame, register each view back toward
    the pivot with its perturbed inverse homography, and record the
    normalization bounds.

    Args:
        x: temperature map (degC), shape matching the coefficient tensor.
        t_amb: ambient temperature (degC).
        c: CoefficientTensor of the simulated camera.
        spec: BurstSpec; all randomness derives from spec.seed.
        x_bounds / i_bounds: normalization bounds to record; default to the
            map's range and the valid gray-level range of this burst
            (degenerate spans are widened by +-0.5).
        augment: optional pre-transform; when true, a random flip/rotation
            is applied to the map before path sampling (off by default).
        threads: per-frame work runs in a thread pool of this size;
            results are identical regardless of thread count.
    """
    x = np.asarray(x, dtype=np.float64)
    if augment:
        arng = _stream(spec.seed, _STREAM_AUGMENT)
        k = int(arng.integers(0, 4))
        x = np.rot90(x, k)
        if arng.integers(0, 2):
            x = np.fliplr(x)
        if arng.integers(0, 2):
            x = np.flipud(x)
    dims = x.shape
    n = spec.n_frames
    homs = sample_path(spec, dims)

    prng = _stream(spec.seed, _STREAM_PERTURB)
    regs = []
    for i, h in enumerate(homs):
        if i == 0:
            regs.append(Homography.identity())  # pivot needs no registration
        else:
            regs.append(perturb(h.inverse(), spec, prng))

    fpn = generate_fpn(dims[0], dims[1], *spec.fpn_range, _stream(spec.seed, _STREAM_FPN))

    def render(i):
        view, vmask = warp(x, homs[i])
        gray = synthesize_frame(view, t_amb, c)
        gray = gray * fpn
        gray = add_noise(gray, spec.noise_sigma2, _stream(spec.seed, _STREAM_NOISE, i))
        reg, rmask = warp(gray, regs[i])
        carried, _ = warp(vmask.astype(np.float64), regs[i])
        mask = rmask & (carried >= 1.0 - 1e-9)
        return reg, mask

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rendered = list(pool.map(render, range(n)))
    else:
        rendered = [render(i) for i in range(n)]

    frames = np.stack([r[0] for r in rendered])
    masks = np.stack([r[1] for r in rendered])

    if x_bounds is None:
        x_bounds = _safe_bounds(x.min(), x.max())
    if i_bounds is None:
        if masks.any():
            vals = frames[masks]
            i_bounds = _safe_bounds(vals.min(), vals.max())
        else:
            i_bounds = (0.0, 1.0)

    return Burst(
        frames=frames,
        masks=masks,
        true_homographies=homs,
        perturbed_inverse_homographies=regs,
        t_amb=float(t_amb),
        pivot_index=0,
        x_bounds=tuple(x_bounds),
        i_bounds=tuple(i_bounds),
        seed=spec.seed,
        overlaps=[overlap(h, dims) for h in homs[1:]],
        spec=spec,
    )


def flight_geometry(height_m, focal_mm, sensor_mm, sensor_px, speed_mps, fps):
    """Ground-sampling arithmetic for a nadir-looking flight.

    gsd = height * sensor_mm / (focal_mm * sensor_px)   [m/px]
    px_per_frame = (speed / fps) / gsd
    frames_per_object = sensor_px / px_per_frame
    """
    vals = (height_m, focal_mm, sensor_mm, sensor_px, speed_mps, fps)
    if min(vals) <= 0:
        raise ValueError("flight parameters must be positive")
    gsd = height_m * sensor_mm / (focal_mm * sensor_px)
    px_per_frame = (speed_mps / fps) / gsd
    return {
        "gsd_m_per_px": gsd,
        "px_per_frame": px_per_frame,
        "frames_per_object": sensor_px / px_per_frame,
    }


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_burst(dir_path, burst):
    """Write a burst directory: 16-bit PGM frames, 8-bit PGM masks, JSON metadata.

    Gray levels are rounded to integers by the PGM container.
    """
    os.makedirs(dir_path, exist_ok=True)
    for i in range(burst.n_frames):
        write_pgm(os.path.join(dir_path, f"frame_{i:04d}.pgm"), burst.frames[i])
        write_mask_pgm(os.path.join(dir_path, f"mask_{i:04d}.pgm"), burst.masks[i])
    meta = {
        "t_amb": burst.t_amb,
        "seed": burst.seed,
        "pivot_index": burst.pivot_index,
        "n_frames": burst.n_frames,
        "x_bounds": [float(b) for b in burst.x_bounds],
        "i_bounds": [float(b) for b in burst.i_bounds],
        "overlaps": burst.overlaps,
        "true_homographies": [h.matrix.tolist() for h in burst.true_homographies],
        "perturbed_inverse_homographies": [
            h.matrix.tolist() for h in burst.perturbed_inverse_homographies
        ],
        "spec": burst.spec.to_dict() if burst.spec is not None else None,
    }
    write_json(os.path.join(dir_path, "burst.json"), meta)


def load_burst(dir_path):
    meta = read_json(os.path.join(dir_path, "burst.json"))
    n = int(meta["n_frames"])
    frames, masks = [], []
    for i in range(n):
        frame, _ = read_pgm(os.path.join(dir_path, f"frame_{i:04d}.pgm"))
        frames.append(frame.astype(np.float64))
        masks.append(read_mask_pgm(os.path.join(dir_path, f"mask_{i:04d}.pgm")))
    spec = BurstSpec.from_dict(meta["spec"]) if meta.get("spec") else None
    return Burst(
        frames=np.stack(frames),
        masks=np.stack(masks),
        true_homographies=[Homography(m) for m in meta["true_homographies"]],
        perturbed_inverse_homographies=[
            Homography(m) for m in meta["perturbed_inverse_homographies"]
        ],
        t_amb=float(meta["t_amb"]),
        pivot_index=int(meta["pivot_index"]),
        x_bounds=tuple(meta["x_bounds"]),
        i_bounds=tuple(meta["i_bounds"]),
        seed=meta.get("seed"),
        overlaps=meta.get("overlaps"),
        spec=spec,
    )
