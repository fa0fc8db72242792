"""File-format round trips and malformed-input diagnostics."""

import numpy as np
import pytest

from thermofuse import (
    FormatError,
    read_float_map,
    read_json,
    read_mask_pgm,
    read_pgm,
    sidecar_path,
    write_float_map,
    write_json,
    write_mask_pgm,
    write_pgm,
)


def test_pgm_16bit_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 65536, size=(13, 9))
    path = tmp_path / "img.pgm"
    write_pgm(path, img)
    back, maxval = read_pgm(path)
    assert maxval == 65535
    assert back.dtype == np.uint16
    assert np.array_equal(back, img)


def test_pgm_8bit_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(7, 5))
    path = tmp_path / "img8.pgm"
    write_pgm(path, img, maxval=255)
    back, maxval = read_pgm(path)
    assert maxval == 255
    assert back.dtype == np.uint8
    assert np.array_equal(back, img)


def test_pgm_rounds_and_clips_floats(tmp_path):
    img = np.array([[-4.2, 0.4], [70000.0, 1.5]])
    path = tmp_path / "c.pgm"
    write_pgm(path, img)
    back, _ = read_pgm(path)
    assert np.array_equal(back, [[0, 0], [65535, 2]])


def test_pgm_16bit_samples_are_big_endian(tmp_path):
    path = tmp_path / "be.pgm"
    write_pgm(path, np.array([[0x0102]]))
    raw = path.read_bytes()
    assert raw.endswith(b"\x01\x02")


def test_pgm_header_comments_are_skipped(tmp_path):
    path = tmp_path / "comment.pgm"
    body = np.arange(6, dtype=">u2").tobytes()
    path.write_bytes(b"P5\n# a comment\n3 2\n# another\n65535\n" + body)
    img, maxval = read_pgm(path)
    assert maxval == 65535
    assert np.array_equal(img, np.arange(6).reshape(2, 3))


def test_pgm_bad_magic_reports_offset_zero(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P6\n1 1\n255\n\x00")
    with pytest.raises(FormatError) as exc:
        read_pgm(path)
    assert exc.value.offset == 0


def test_pgm_truncated_data_reports_end_offset(tmp_path):
    path = tmp_path / "short.pgm"
    payload = b"P5\n4 4\n65535\n" + b"\x00" * 10
    path.write_bytes(payload)
    with pytest.raises(FormatError) as exc:
        read_pgm(path)
    assert exc.value.offset == len(payload)


def test_pgm_rejects_non_numeric_header(tmp_path):
    path = tmp_path / "junk.pgm"
    path.write_bytes(b"P5\nxx 2\n255\n" + b"\x00" * 4)
    with pytest.raises(FormatError):
        read_pgm(path)


def test_pgm_writer_is_deterministic(tmp_path):
    img = np.arange(12).reshape(3, 4)
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    write_pgm(a, img)
    write_pgm(b, img.astype(np.float64))
    assert a.read_bytes() == b.read_bytes()


def test_pgm_rejects_non_2d():
    with pytest.raises(ValueError):
        write_pgm("/dev/null", np.zeros(4))


def test_mask_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    mask = rng.integers(0, 2, size=(11, 6)).astype(bool)
    path = tmp_path / "mask.pgm"
    write_mask_pgm(path, mask)
    assert np.array_equal(read_mask_pgm(path), mask)
    raw, maxval = read_pgm(path)
    assert maxval == 255
    assert set(np.unique(raw)) <= {0, 255}


def test_float_map_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    arr = rng.normal(25.0, 10.0, size=(9, 14)).astype(np.float32).astype(np.float64)
    path = tmp_path / "map.f32"
    write_float_map(path, arr, units="celsius")
    back, units = read_float_map(path)
    assert units == "celsius"
    assert back.dtype == np.float64
    assert np.array_equal(back, arr)  # values chosen float32-representable


def test_float_map_missing_sidecar(tmp_path):
    path = tmp_path / "orphan.f32"
    path.write_bytes(b"\x00" * 16)
    with pytest.raises(FormatError):
        read_float_map(path)


def test_float_map_truncated(tmp_path):
    path = tmp_path / "short.f32"
    write_float_map(path, np.zeros((4, 4)))
    path.write_bytes(b"\x00" * 10)
    with pytest.raises(FormatError) as exc:
        read_float_map(path)
    assert exc.value.offset == 10


def test_sidecar_path_suffix():
    assert sidecar_path("x/y.f32") == "x/y.f32.json"


def test_json_writer_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_json(a, {"b": 1, "a": [1.5, 2]})
    write_json(b, {"a": [1.5, 2], "b": 1})
    assert a.read_bytes() == b.read_bytes()
    assert read_json(a) == {"a": [1.5, 2], "b": 1}
