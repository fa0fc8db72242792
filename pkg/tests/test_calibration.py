"""Per-pixel polynomial calibration: design rows, fitting, radial model, IO."""

import numpy as np
import pytest

from thermofuse import (
    CalibrationError,
    CoefficientTensor,
    FormatError,
    MeasurementSet,
    RadialModel,
    design_row,
    fit_per_pixel,
    fit_radial,
    flag_outliers,
    gain_offset_at,
    gray_level,
    load_coefficients,
    load_measurements,
    load_radial_model,
    radial_map,
    reconstruct_coeffs,
    save_coefficients,
    save_measurements,
    save_radial_model,
    synthesize_frame,
)

# Plausible per-plane magnitudes for a 14-bit camera: the quartic gain is
# ~3e-3 gray/degC^4 (so 60 degC maps near full range) and the ambient
# polynomial decays steeply with order.
PLANE_SCALES = np.array([3e-3, 1e-5, 1e-7, 1e-9, 5e3, 1e1, 1e-1, 1e-3])

T_OBJ_GRID = np.array([10.0, 26.0, 43.0, 60.0])
T_AMB_GRID = np.array([-10.0, 10.0, 30.0, 50.0])


def random_tensor(rng, h, w):
    base = rng.uniform(0.5, 1.5, size=8) * PLANE_SCALES
    wobble = 1.0 + 0.05 * rng.standard_normal((8, h, w))
    return CoefficientTensor(base[:, None, None] * wobble)


def grid_measurements(c, t_objs=T_OBJ_GRID, t_ambs=T_AMB_GRID, noise_sd=0.0, rng=None):
    t_obj, t_amb, frames = [], [], []
    for to in t_objs:
        for ta in t_ambs:
            frame = synthesize_frame(np.full(c.shape, to), ta, c)
            if noise_sd > 0:
                frame = frame + rng.normal(0.0, noise_sd, frame.shape)
            t_obj.append(to)
            t_amb.append(ta)
            frames.append(frame)
    return MeasurementSet(np.array(t_obj), np.array(t_amb), np.stack(frames))


# ---------------------------------------------------------------------------
# design_row
# ---------------------------------------------------------------------------

def test_design_row_zero_temperatures():
    assert np.array_equal(design_row(0.0, 0.0), [0, 0, 0, 0, 1, 0, 0, 0])


def test_design_row_unit_temperatures():
    assert np.array_equal(design_row(1.0, 1.0), np.ones(8))


def test_design_row_two_three():
    assert np.array_equal(design_row(2.0, 3.0), [16, 48, 144, 432, 1, 3, 9, 27])


def test_design_row_structure_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        to, ta = rng.uniform(-40, 80, size=2)
        row = design_row(to, ta)
        expect = [to**4 * ta**i for i in range(4)] + [ta**i for i in range(4)]
        assert np.allclose(row, expect, rtol=1e-15)


# ---------------------------------------------------------------------------
# fit_per_pixel
# ---------------------------------------------------------------------------

def test_fit_recovers_generating_tensor():
    rng = np.random.default_rng(1)
    c = random_tensor(rng, 12, 10)
    ms = grid_measurements(c)
    fit, resid = fit_per_pixel(ms)
    rel = np.abs(fit.planes - c.planes) / np.abs(c.planes)
    assert rel.max() < 1e-6
    assert resid.max() < 1e-6  # gray levels; noiseless data interpolates


def test_fit_interpolates_exactly_eight_samples():
    rng = np.random.default_rng(2)
    c = random_tensor(rng, 6, 5)
    ms = grid_measurements(c, t_objs=[15.0, 55.0], t_ambs=T_AMB_GRID)
    assert len(ms) == 8
    fit, resid = fit_per_pixel(ms)
    assert resid.max() < 1e-6
    rel = np.abs(fit.planes - c.planes) / np.abs(c.planes)
    assert rel.max() < 1e-5


def test_fit_unchanged_by_duplicated_consistent_samples():
    rng = np.random.default_rng(3)
    c = random_tensor(rng, 5, 7)
    ms = grid_measurements(c)
    dup = MeasurementSet(
        np.concatenate([ms.t_obj, ms.t_obj]),
        np.concatenate([ms.t_amb, ms.t_amb]),
        np.concatenate([ms.frames, ms.frames]),
    )
    fit1, _ = fit_per_pixel(ms)
    fit2, _ = fit_per_pixel(dup)
    assert np.allclose(fit1.planes, fit2.planes, rtol=1e-9, atol=0.0)


def test_fit_rejects_fewer_than_eight_samples():
    rng = np.random.default_rng(4)
    c = random_tensor(rng, 4, 4)
    ms = grid_measurements(c, t_objs=[20.0], t_ambs=T_AMB_GRID[:3])
    with pytest.raises(CalibrationError, match="rank-8"):
        fit_per_pixel(ms)


def test_fit_rejects_degenerate_temperature_grid():
    rng = np.random.default_rng(5)
    c = random_tensor(rng, 4, 4)
    # one ambient temperature only: the ambient polynomial is unidentifiable
    ms = grid_measurements(c, t_objs=np.linspace(10, 60, 12), t_ambs=[25.0])
    with pytest.raises(CalibrationError, match="rank"):
        fit_per_pixel(ms)


def test_fit_residual_tracks_noise_level():
    rng = np.random.default_rng(6)
    c = random_tensor(rng, 8, 8)
    n_obj, n_amb, sd = 20, 10, 2.0
    ms = grid_measurements(
        c,
        t_objs=np.linspace(10, 60, n_obj),
        t_ambs=np.linspace(-10, 50, n_amb),
        noise_sd=sd,
        rng=rng,
    )
    _, resid = fit_per_pixel(ms)
    dof = n_obj * n_amb - 8
    expected = sd * np.sqrt(dof)
    assert 0.9 * expected < resid.mean() < 1.1 * expected


def test_flag_outliers_marks_corrupted_pixel():
    rng = np.random.default_rng(7)
    c = random_tensor(rng, 6, 6)
    ms = grid_measurements(c)
    frames = ms.frames.copy()
    frames[:, 3, 4] += rng.normal(0.0, 50.0, len(ms))  # one broken pixel
    _, resid = fit_per_pixel(MeasurementSet(ms.t_obj, ms.t_amb, frames))
    flagged = flag_outliers(resid, threshold=1.0)
    expect = np.zeros((6, 6), dtype=bool)
    expect[3, 4] = True
    assert np.array_equal(flagged, expect)


# ---------------------------------------------------------------------------
# synthesize_frame / gain_offset_at
# ---------------------------------------------------------------------------

def test_synthesize_offset_only_tensor_ignores_scene():
    planes = np.zeros((8, 4, 5))
    planes[4] = 777.5
    c = CoefficientTensor(planes)
    for x in (np.zeros((4, 5)), np.full((4, 5), 60.0)):
        assert np.array_equal(synthesize_frame(x, 33.0, c), planes[4])


def test_synthesize_frame_difference_affine_in_ambient():
    rng = np.random.default_rng(8)
    planes = np.zeros((8, 6, 6))
    planes[0] = 3e-3 * (1 + 0.1 * rng.random((6, 6)))   # quartic gain, constant in t_amb
    planes[1] = 1e-5 * (1 + 0.1 * rng.random((6, 6)))   # linear-in-ambient gain
    planes[4] = 5e3 * (1 + 0.1 * rng.random((6, 6)))
    planes[5] = 10.0 * (1 + 0.1 * rng.random((6, 6)))
    c = CoefficientTensor(planes)
    x = rng.uniform(10, 60, (6, 6))
    ta1, ta2 = 5.0, 35.0
    diff = synthesize_frame(x, ta2, c) - synthesize_frame(x, ta1, c)
    expect = (planes[1] * x**4 + planes[5]) * (ta2 - ta1)
    assert np.allclose(diff, expect, rtol=1e-9)


def test_gray_level_consistent_with_synthesize_frame():
    # Cross-module contract: the acquisition model applied to the quartic
    # object signal with maps from gain_offset_at reproduces synthesize_frame.
    rng = np.random.default_rng(9)
    c = random_tensor(rng, 7, 5)
    x = rng.uniform(10, 60, (7, 5))
    ta = 27.5
    gain_fn = lambda t: gain_offset_at(c, t)[0]
    offset_fn = lambda t: gain_offset_at(c, t)[1]
    assert np.array_equal(
        gray_level(x**4, ta, gain_fn, offset_fn), synthesize_frame(x, ta, c)
    )


def test_gain_offset_at_matches_design_row():
    rng = np.random.default_rng(10)
    c = random_tensor(rng, 4, 4)
    to, ta = 41.0, 13.0
    gain, offset = gain_offset_at(c, ta)
    row = design_row(to, ta)
    for i in range(4):
        for j in range(4):
            direct = row @ c.planes[:, i, j]
            assert np.isclose(gain[i, j] * to**4 + offset[i, j], direct, rtol=1e-12)


def test_synthesize_frame_rejects_shape_mismatch():
    c = CoefficientTensor(np.ones((8, 4, 4)))
    with pytest.raises(ValueError):
        synthesize_frame(np.zeros((3, 4)), 20.0, c)


# ---------------------------------------------------------------------------
# radial model
# ---------------------------------------------------------------------------

def test_radial_map_corners_and_center():
    r = radial_map(9, 9)
    corner = np.hypot(0.5, 0.5)
    assert r[0, 0] == r[0, -1] == r[-1, 0] == r[-1, -1] == corner
    assert r[4, 4] == 0.0
    assert r.max() == corner


def test_radial_map_flip_symmetric_bitwise():
    for h, w in ((8, 8), (9, 7), (16, 5)):
        r = radial_map(h, w)
        assert np.array_equal(r, r[::-1, :])
        assert np.array_equal(r, r[:, ::-1])


def test_radial_map_rejects_tiny_dims():
    with pytest.raises(ValueError):
        radial_map(1, 8)


def test_fit_radial_recovers_linear_radial_planes():
    r = radial_map(16, 16)
    planes = np.stack([2.0 + 3.0 * r] * 8)
    rm = fit_radial(CoefficientTensor(planes), degree=1)
    assert np.allclose(rm.coeffs, np.tile([2.0, 3.0], (8, 1)), atol=1e-9)


def test_fit_radial_constant_plane_any_degree():
    planes = np.full((8, 12, 12), 4.25)
    rm = fit_radial(CoefficientTensor(planes), degree=5)
    assert np.allclose(rm.coeffs[:, 0], 4.25, atol=1e-9)
    assert np.allclose(rm.coeffs[:, 1:], 0.0, atol=1e-9)


def test_fit_radial_roundtrip_default_degree():
    rng = np.random.default_rng(11)
    rm_true = RadialModel(degree=6, coeffs=rng.uniform(-1, 1, (8, 7)))
    c = reconstruct_coeffs(rm_true, 24, 24)
    rm_fit = fit_radial(c)  # default degree matches
    assert rm_fit.degree == 6
    assert np.allclose(rm_fit.coeffs, rm_true.coeffs, atol=1e-8)


def test_reconstruction_is_flip_symmetric():
    rng = np.random.default_rng(12)
    rm = RadialModel(degree=4, coeffs=rng.uniform(-1, 1, (8, 5)))
    c = reconstruct_coeffs(rm, 15, 10)
    assert np.array_equal(c.planes, c.planes[:, ::-1, :])
    assert np.array_equal(c.planes, c.planes[:, :, ::-1])


def test_reconstruct_zero_model_gives_zero_tensor():
    c = reconstruct_coeffs(RadialModel(degree=3), 6, 6)
    assert np.array_equal(c.planes, np.zeros((8, 6, 6)))


def test_radial_fit_suppresses_nonradial_noise():
    rng = np.random.default_rng(13)
    r = radial_map(32, 32)
    clean = 1.0 + 0.5 * r**2
    noisy = clean + rng.normal(0.0, 0.1, r.shape)
    rm = fit_radial(CoefficientTensor(np.stack([noisy] * 8)), degree=2)
    recon = reconstruct_coeffs(rm, 32, 32)
    assert np.max(np.abs(recon.planes[0] - clean)) < 0.03  # well under noise sd


def test_fit_radial_rejects_overparameterized():
    c = CoefficientTensor(np.ones((8, 2, 2)))
    with pytest.raises(ValueError):
        fit_radial(c, degree=4)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_coefficient_file_roundtrip(tmp_path):
    rng = np.random.default_rng(14)
    c = random_tensor(rng, 9, 6)
    path = tmp_path / "coeffs.bin"
    save_coefficients(path, c)
    back = load_coefficients(path)
    assert back.shape == (9, 6)
    assert np.array_equal(back.planes, c.planes)


def test_coefficient_file_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(FormatError) as exc:
        load_coefficients(path)
    assert exc.value.offset == 0


def test_coefficient_file_truncated(tmp_path):
    rng = np.random.default_rng(15)
    c = random_tensor(rng, 4, 4)
    path = tmp_path / "short.bin"
    save_coefficients(path, c)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError) as exc:
        load_coefficients(path)
    assert exc.value.offset == len(data) // 2


def test_radial_model_roundtrip(tmp_path):
    rng = np.random.default_rng(16)
    rm = RadialModel(degree=4, coeffs=rng.uniform(-2, 2, (8, 5)))
    path = tmp_path / "radial.json"
    save_radial_model(path, rm)
    back = load_radial_model(path)
    assert back.degree == 4
    assert np.array_equal(back.coeffs, rm.coeffs)


def test_measurements_roundtrip(tmp_path):
    rng = np.random.default_rng(17)
    frames = rng.integers(0, 16384, size=(10, 8, 8)).astype(np.float64)
    ms = MeasurementSet(
        rng.uniform(10, 60, 10), rng.uniform(-10, 50, 10), frames
    )
    manifest = save_measurements(tmp_path / "meas", ms)
    back = load_measurements(manifest)
    assert np.array_equal(back.t_obj, ms.t_obj)
    assert np.array_equal(back.t_amb, ms.t_amb)
    assert np.array_equal(back.frames, ms.frames)  # integer gray levels survive PGM


def test_measurements_manifest_dict_form(tmp_path):
    from thermofuse.formats import read_json, write_json

    rng = np.random.default_rng(18)
    frames = rng.integers(0, 16384, size=(8, 4, 4)).astype(np.float64)
    ms = MeasurementSet(np.linspace(10, 60, 8), np.linspace(0, 40, 8), frames)
    manifest = save_measurements(tmp_path / "meas", ms)
    write_json(manifest, {"samples": read_json(manifest)})
    back = load_measurements(manifest)
    assert np.array_equal(back.frames, ms.frames)


def test_measurements_empty_manifest_rejected(tmp_path):
    from thermofuse.formats import write_json

    manifest = tmp_path / "empty.json"
    write_json(manifest, [])
    with pytest.raises(FormatError):
        load_measurements(manifest)


def test_fit_from_saved_measurements_within_quantization(tmp_path):
    # PGM storage rounds gray levels to integers; the refitted model must
    # still reproduce the original frames to about the rounding scale.
    rng = np.random.default_rng(19)
    c = random_tensor(rng, 10, 10)
    ms = grid_measurements(c)
    manifest = save_measurements(tmp_path / "meas", ms)
    fit, _ = fit_per_pixel(load_measurements(manifest))
    for to, ta in zip(ms.t_obj[:4], ms.t_amb[:4]):
        a = synthesize_frame(np.full((10, 10), to), ta, fit)
        b = synthesize_frame(np.full((10, 10), to), ta, c)
        assert np.max(np.abs(a - b)) < 1.5
