"""Low-level file formats shared across the toolkit.

Binary PGM (P5) images carry gray frames (16-bit, big-endian samples per
the PGM convention) and validity masks (8-bit, 0/255).  Float maps travel
as raw little-endian float32 with a JSON sidecar describing dimensions and
units.  All writers are byte-deterministic for identical inputs.
"""

import json

import numpy as np


class FormatError(ValueError):
    """Malformed binary/structured file; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def write_pgm(path, image, maxval=65535):
    """Write a P5 (binary) PGM; maxval > 255 stores big-endian 16-bit samples.

    Float input is rounded and clipped to [0, maxval].
    """
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError("PGM image must be 2D")
    arr = np.clip(np.rint(arr), 0, maxval)
    h, w = arr.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.astype(dtype).tobytes())


def read_pgm(path):
    """Read a binary PGM; returns (array, maxval) with native integer dtype."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] != b"P5":
        raise FormatError(f"not a binary PGM: {path!r}", offset=0)

    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"truncated PGM header: {path!r}", offset=pos)
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"bad PGM header tokens: {path!r}", offset=2) from None
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = h * w * dtype.itemsize
    if len(data) - pos < need:
        raise FormatError(
            f"PGM pixel data truncated: {path!r}", offset=len(data)
        )
    arr = np.frombuffer(data, dtype=dtype, count=h * w, offset=pos)
    return arr.reshape(h, w).astype(dtype.newbyteorder("=")), maxval


def write_mask_pgm(path, mask):
    """Write a boolean mask as an 8-bit PGM (255 = valid)."""
    write_pgm(path, np.asarray(mask, dtype=bool) * 255, maxval=255)


def read_mask_pgm(path):
    arr, _ = read_pgm(path)
    return arr > 0


# ---------------------------------------------------------------------------
# Raw float maps
# ---------------------------------------------------------------------------

def sidecar_path(path):
    return str(path) + ".json"


def write_float_map(path, arr, units="celsius"):
    """Write a 2D map as raw little-endian float32 plus a JSON sidecar."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("float map must be 2D")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(arr.astype("<f4").tobytes())
    with open(sidecar_path(path), "w") as f:
        json.dump(
            {"height": h, "width": w, "dtype": "float32-le", "units": units},
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")


def read_float_map(path):
    """Read a raw float32 map written by write_float_map; returns (map, units)."""
    try:
        with open(sidecar_path(path)) as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise FormatError(f"missing sidecar for float map: {path!r}") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"bad sidecar JSON for {path!r}: {e}") from None
    h, w = int(meta["height"]), int(meta["width"])
    with open(path, "rb") as f:
        data = f.read()
    need = h * w * 4
    if len(data) < need:
        raise FormatError(f"float map truncated: {path!r}", offset=len(data))
    arr = np.frombuffer(data, dtype="<f4", count=h * w).reshape(h, w)
    return arr.astype(np.float64), meta.get("units", "")


def write_json(path, obj):
    """Deterministic JSON writer (sorted keys, repr-precision floats)."""
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)
