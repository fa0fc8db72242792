"""Per-pixel radiometric calibration of a thermal camera.

The degradation model expresses the gray level of a pixel as a cubic
polynomial in ambient temperature applied to both a quartic object-
temperature term and a pure offset term:

    I = sum_i gain_i * t_amb^i * t_obj^4  +  sum_i offset_i * t_amb^i,   i = 0..3

The eight per-pixel coefficients are stacked as an 8-plane tensor
[gain_0..gain_3, offset_0..offset_3] and fitted by least squares from
(t_obj, t_amb, frame) measurement triples.  A radial-polynomial model
compresses the planes down to a few scalars each, exploiting the circular
symmetry of the nonuniformity pattern.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .formats import FormatError, read_json, read_pgm, write_json, write_pgm

N_PLANES = 8
T_AMB_DEGREE = 3

# Internal rescale of temperatures entering the design matrix: t_obj^4 spans
# ~1e10 in raw degC^4 units, so both variables are divided by 100 before the
# solve and the coefficients are scaled back exactly afterwards (pure column
# scaling, mathematically the same minimizer).
TEMP_SCALE = 100.0


class CalibrationError(ValueError):
    pass


@dataclass
class MeasurementSet:
    """Measurement triples (t_obj degC, t_amb degC, gray frame), shared frame shape."""

    t_obj: np.ndarray     # (n,)
    t_amb: np.ndarray     # (n,)
    frames: np.ndarray    # (n, h, w)

    def __post_init__(self):
        self.t_obj = np.atleast_1d(np.asarray(self.t_obj, dtype=np.float64))
        self.t_amb = np.atleast_1d(np.asarray(self.t_amb, dtype=np.float64))
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ValueError("frames must be a (n, h, w) stack")
        n = len(self.t_obj)
        if len(self.t_amb) != n or self.frames.shape[0] != n:
            raise ValueError("t_obj, t_amb and frames must have equal length")

    def __len__(self):
        return len(self.t_obj)

    @property
    def frame_shape(self):
        return self.frames.shape[1:]


@dataclass
class CoefficientTensor:
    """8 coefficient planes of shape (h, w): [gain_0..gain_3, offset_0..offset_3]."""

    planes: np.ndarray

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim != 3 or self.planes.shape[0] != N_PLANES:
            raise ValueError(f"planes must have shape ({N_PLANES}, h, w)")
        if not np.all(np.isfinite(self.planes)):
            raise ValueError("coefficient planes must be finite")

    @property
    def shape(self):
        return self.planes.shape[1:]


@dataclass
class RadialModel:
    """Per-plane polynomial in the radial distance map: plane_i = sum_j m[i, j] * R^j."""

    degree: int
    coeffs: np.ndarray = field(default=None)  # (8, degree+1)

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.coeffs is None:
            self.coeffs = np.zeros((N_PLANES, self.degree + 1))
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (N_PLANES, self.degree + 1):
            raise ValueError("coeffs must have shape (8, degree+1)")


def design_row(t_obj, t_amb):
    """8-vector [t4, t4*ta, t4*ta^2, t4*ta^3, 1, ta, ta^2, ta^3] with t4 = t_obj^4."""
    t4 = float(t_obj) ** 4
    ta = float(t_amb)
    amb = [ta**i for i in range(T_AMB_DEGREE + 1)]
    return np.array([t4 * a for a in amb] + amb, dtype=np.float64)


def _design_matrix(t_obj, t_amb):
    t4 = (t_obj / TEMP_SCALE) ** 4
    ta = t_amb / TEMP_SCALE
    amb = np.stack([ta**i for i in range(T_AMB_DEGREE + 1)], axis=1)
    return np.hstack([t4[:, None] * amb, amb])


def _column_scales():
    s_amb = TEMP_SCALE ** np.arange(T_AMB_DEGREE + 1)
    return np.concatenate([TEMP_SCALE**4 * s_amb, s_amb])


def fit_per_pixel(ms):
    """Least-squares fit of the 8 coefficient planes from a MeasurementSet.

    Solved through a rank-revealing SVD (numpy lstsq) on the internally
    rescaled design matrix; one shared design matrix serves every pixel
    since t_obj/t_amb are scalars per sample.

    Returns:
        (CoefficientTensor, residual) where residual is the per-pixel
        2-norm of the gray-level misfit over the samples.
    """
    n = len(ms)
    if n < N_PLANES:
        raise CalibrationError(
            f"need >= {N_PLANES} samples for a rank-{N_PLANES} design matrix, got {n}"
        )
    a = _design_matrix(ms.t_obj, ms.t_amb)
    h, w = ms.frame_shape
    b = ms.frames.reshape(n, h * w)
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < N_PLANES:
        raise CalibrationError(
            f"design matrix rank {rank} < {N_PLANES}: temperature grid does not "
            "span the model (vary both t_obj and t_amb)"
        )
    resid = np.linalg.norm(a @ sol - b, axis=0).reshape(h, w)
    coeffs = sol / _column_scales()[:, None]
    return CoefficientTensor(coeffs.reshape(N_PLANES, h, w)), resid


def flag_outliers(residual, threshold):
    """Exclusion mask for dead/outlier pixels: residual above threshold."""
    return np.asarray(residual) > threshold


def radial_map(h, w):
    """Radial distance map R = sqrt(H^2 + W^2) on the inclusive [-0.5, 0.5] grid.

    Rows of H span -0.5..0.5 down the image, columns of W span -0.5..0.5
    across it.  The grid is built as (arange(n) - (n-1)/2)/(n-1) so that it
    is bit-exactly symmetric under horizontal/vertical flips.
    """
    if h < 2 or w < 2:
        raise ValueError("radial map needs h, w >= 2")

    def span(n):
        return (np.arange(n, dtype=np.float64) - (n - 1) / 2.0) / (n - 1)

    hh, ww = np.meshgrid(span(h), span(w), indexing="ij")
    return np.hypot(hh, ww)


def fit_radial(c, degree=6):
    """Fit each coefficient plane as a polynomial in the radial map.

    Minimizes ||sum_j m_j R^j - plane||_2 over pixels, independently per
    plane (shared feature matrix, one lstsq call).
    """
    h, w = c.shape
    if degree + 1 > h * w:
        raise ValueError("degree+1 must not exceed the pixel count")
    r = radial_map(h, w).ravel()
    feats = np.stack([r**j for j in range(degree + 1)], axis=1)
    b = c.planes.reshape(N_PLANES, h * w).T
    sol, _, _, _ = np.linalg.lstsq(feats, b, rcond=None)
    return RadialModel(degree=degree, coeffs=sol.T)


def reconstruct_coeffs(rm, h, w):
    """Evaluate a RadialModel back into a full CoefficientTensor."""
    r = radial_map(h, w)
    powers = np.stack([r**j for j in range(rm.degree + 1)])
    planes = np.tensordot(rm.coeffs, powers, axes=([1], [0]))
    return CoefficientTensor(planes)


def gain_offset_at(c, t_amb):
    """Collapse the ambient-temperature polynomial at a given t_amb.

    Returns (gain_map, offset_map) such that the synthesized gray level is
    gain_map * x**4 + offset_map for an object-temperature map x in degC.
    """
    amb = np.array([float(t_amb) ** i for i in range(T_AMB_DEGREE + 1)])
    gain = np.tensordot(amb, c.planes[: T_AMB_DEGREE + 1], axes=([0], [0]))
    offset = np.tensordot(amb, c.planes[T_AMB_DEGREE + 1 :], axes=([0], [0]))
    return gain, offset


def synthesize_frame(x, t_amb, c):
    """Noiseless, FPN-free gray frame from a temperature map (degC).

    Per pixel: I = design_row(x[p], t_amb) . C_p, vectorized as
    gain(t_amb) * x^4 + offset(t_amb).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != c.shape:
        raise ValueError(f"temperature map {x.shape} does not match tensor {c.shape}")
    gain, offset = gain_offset_at(c, t_amb)
    return gain * x**4 + offset


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

COEFF_MAGIC = b"COF8"


def save_coefficients(path, c):
    """Binary tensor file: magic, h, w as u32-LE, then 8*h*w float64-LE planes."""
    h, w = c.shape
    with open(path, "wb") as f:
        f.write(COEFF_MAGIC)
        f.write(struct.pack("<II", h, w))
        f.write(c.planes.astype("<f8").tobytes())


def load_coefficients(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != COEFF_MAGIC:
        raise FormatError(f"bad coefficient-file magic in {path!r}", offset=0)
    if len(data) < 12:
        raise FormatError(f"truncated coefficient header in {path!r}", offset=len(data))
    h, w = struct.unpack_from("<II", data, 4)
    need = N_PLANES * h * w * 8
    if len(data) - 12 < need:
        raise FormatError(f"truncated coefficient data in {path!r}", offset=len(data))
    planes = np.frombuffer(data, dtype="<f8", count=N_PLANES * h * w, offset=12)
    return CoefficientTensor(planes.reshape(N_PLANES, h, w).copy())


def save_radial_model(path, rm):
    write_json(path, {"degree": rm.degree, "planes": rm.coeffs.tolist()})


def load_radial_model(path):
    meta = read_json(path)
    return RadialModel(degree=int(meta["degree"]), coeffs=np.asarray(meta["planes"]))


def save_measurements(dir_path, ms, manifest_name="measurements.json"):
    """Write a measurement directory: JSON manifest + 16-bit PGM frames.

    Gray levels are rounded to integers by the PGM encoding (14-bit data in
    a 16-bit container).
    """
    os.makedirs(dir_path, exist_ok=True)
    entries = []
    for i in range(len(ms)):
        name = f"frame_{i:04d}.pgm"
        write_pgm(os.path.join(dir_path, name), ms.frames[i])
        entries.append(
            {"t_obj": float(ms.t_obj[i]), "t_amb": float(ms.t_amb[i]), "frame_path": name}
        )
    write_json(os.path.join(dir_path, manifest_name), entries)
    return os.path.join(dir_path, manifest_name)


def load_measurements(manifest_path):
    """Read a measurement manifest: a JSON list of {t_obj, t_amb, frame_path}."""
    entries = read_json(manifest_path)
    if isinstance(entries, dict):
        entries = entries.get("samples", None)
    if not isinstance(entries, list) or not entries:
        raise FormatError(f"measurement manifest {manifest_path!r} holds no samples")
    base = os.path.dirname(os.path.abspath(manifest_path))
    t_obj, t_amb, frames = [], [], []
    for e in entries:
        t_obj.append(float(e["t_obj"]))
        t_amb.append(float(e["t_amb"]))
        frame, _ = read_pgm(os.path.join(base, e["frame_path"]))
        frames.append(frame.astype(np.float64))
    return MeasurementSet(np.array(t_obj), np.array(t_amb), np.stack(frames))
