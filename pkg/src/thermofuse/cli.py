"""Command-line pipeline driver.

Subcommands: calibrate (fit coefficients from a measurement manifest),
burst (synthesize a burst directory from a temperature map), fuse
(estimate a temperature map from a burst), eval (error report between an
estimate and the truth), sweep-n (burst->fuse->eval across frame counts,
CSV output).

Exit codes: 0 success, 1 internal error, 2 user/config error.  Output
directories receive a manifest recording tool version, config hash, and
seed, and are guarded by a lock file against concurrent mutation.  The
environment variable THERMOFUSE_THREADS caps internal parallelism.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .burst import (
    BurstSpec,
    ConfigurationError,
    load_burst,
    make_burst,
    save_burst,
)
from .calibration import (
    CalibrationError,
    fit_per_pixel,
    fit_radial,
    load_coefficients,
    load_measurements,
    reconstruct_coeffs,
    save_coefficients,
    save_radial_model,
    synthesize_frame,
)
from .formats import (
    FormatError,
    read_float_map,
    read_mask_pgm,
    write_float_map,
    write_json,
    write_pgm,
)
from .fusion import (
    OffsetModel,
    fit_offset,
    fuse,
    kernel_provider,
    load_offset_model,
    offset_sample,
    residual_shifts,
)
from .metrics import error_report, save_error_report


def _threads():
    raw = os.environ.get("THERMOFUSE_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"THERMOFUSE_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigurationError("THERMOFUSE_THREADS must be >= 1")
    return n


def _config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


class _DirLock:
    """Exclusive lock file guarding an output directory."""

    def __init__(self, dir_path):
        self.path = os.path.join(dir_path, ".lock")

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigurationError(
                f"output directory is locked by another run: {self.path}"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass
        return False


def _write_manifest(out_dir, config, seed):
    write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "tool": "thermofuse",
            "version": __version__,
            "config_hash": _config_hash(config),
            "seed": seed,
        },
    )


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"bad config JSON {path!r}: {e}") from None


def _parse_kernels(arg):
    if arg.startswith("file:"):
        return "file", arg[5:]
    if arg in ("identity", "average", "shifted"):
        return arg, None
    raise ConfigurationError(
        f"unknown kernel spec {arg!r}; expected identity|average|shifted|file:PATH"
    )


def _make_kernels(kind, path, burst, k):
    if kind == "shifted":
        return kernel_provider(
            "shifted_delta", (burst.n_frames, *burst.frame_shape), k,
            shifts=residual_shifts(burst),
        )
    return kernel_provider(kind, (burst.n_frames, *burst.frame_shape), k, path=path)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_calibrate(args):
    ms = load_measurements(args.manifest)
    coeffs, residual = fit_per_pixel(ms)
    save_coefficients(args.out, coeffs)
    print(
        f"calibrated {coeffs.shape[0]}x{coeffs.shape[1]} pixels from {len(ms)} samples: "
        f"residual mean={residual.mean():.6g} max={residual.max():.6g} gray levels"
    )
    if args.radial_degree is not None:
        rm = fit_radial(coeffs, degree=args.radial_degree)
        root, ext = os.path.splitext(args.out)
        radial_json = root + ".radial.json"
        radial_bin = root + ".radial" + (ext or ".bin")
        save_radial_model(radial_json, rm)
        save_coefficients(radial_bin, reconstruct_coeffs(rm, *coeffs.shape))
        print(f"radial model degree {args.radial_degree} -> {radial_json}, {radial_bin}")
    return 0


def _spec_from_args(config, args):
    spec_dict = dict(config.get("spec", config if "n_frames" in config or "mode" in config
                                or "overlap_range" in config else {}))
    if args.n_frames is not None:
        spec_dict["n_frames"] = args.n_frames
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    return BurstSpec.from_dict(spec_dict)


def cmd_burst(args):
    config = _load_config(args.config)
    x, _ = read_float_map(args.temp_map)
    coeffs = load_coefficients(args.coeffs)
    spec = _spec_from_args(config, args)
    t_amb = args.t_amb if args.t_amb is not None else float(config.get("t_amb", 25.0))
    os.makedirs(args.out_dir, exist_ok=True)
    with _DirLock(args.out_dir):
        b = make_burst(x, t_amb, coeffs, spec, threads=_threads())
        save_burst(args.out_dir, b)
        _write_manifest(
            args.out_dir, {"spec": spec.to_dict(), "t_amb": t_amb}, spec.seed
        )
    ov = ", ".join(f"{o:.3f}" for o in b.overlaps) or "-"
    print(f"burst of {b.n_frames} frames written to {args.out_dir} (overlaps: {ov})")
    return 0


def cmd_fuse(args):
    burst = load_burst(args.burst_dir)
    kind, path = _parse_kernels(args.kernels)
    ks = _make_kernels(kind, path, burst, args.kernel_size)
    om = load_offset_model(args.offset) if args.offset else OffsetModel(nu=args.nu)
    est = fuse(burst, ks, om)
    write_float_map(args.out, est, units="celsius")
    lo, hi = est.min(), est.max()
    span = hi - lo if hi > lo else 1.0
    write_pgm(os.path.splitext(args.out)[0] + ".pgm", (est - lo) / span * 65535.0)
    print(f"fused {burst.n_frames} frames -> {args.out} (range {lo:.3f}..{hi:.3f} C)")
    return 0


def cmd_eval(args):
    est, _ = read_float_map(args.estimate)
    truth, _ = read_float_map(args.truth)
    if est.shape != truth.shape:
        raise ConfigurationError(
            f"shape mismatch: estimate {est.shape} vs truth {truth.shape}"
        )
    mask = read_mask_pgm(args.mask) if args.mask else None
    thresholds = [float(t) for t in args.thresholds.split(",")] if args.thresholds else None
    rep = (
        error_report(est, truth, mask, thresholds)
        if thresholds
        else error_report(est, truth, mask)
    )
    diff_path = args.diff or os.path.splitext(args.out)[0] + ".diff.pgm"
    save_error_report(args.out, rep, diff_path=diff_path)
    print(f"MAE {rep.mae:.6f} C -> {args.out}")
    return 0


def _shared_gray_bounds(coeffs, t_amb, t_lo, t_hi, spec):
    """Deterministic gray-level normalization bounds covering the sweep corpus."""
    lows, highs = [], []
    for t in (t_lo, t_hi):
        frame = synthesize_frame(np.full(coeffs.shape, t), t_amb, coeffs)
        lows.append(frame.min())
        highs.append(frame.max())
    margin = 4.0 * np.sqrt(spec.noise_sigma2)
    lo = min(lows) * min(spec.fpn_range[0], 1.0) - margin
    hi = max(highs) * max(spec.fpn_range[1], 1.0) + margin
    return (float(lo), float(hi))


def cmd_sweep_n(args):
    config = _load_config(args.config)
    for key in ("truth", "coeffs", "n_list"):
        if key not in config:
            raise ConfigurationError(f"sweep config missing {key!r}")
    truth, _ = read_float_map(config["truth"])
    coeffs = load_coefficients(config["coeffs"])
    t_amb = float(config.get("t_amb", 25.0))
    seed = args.seed if args.seed is not None else int(config.get("seed", 42))
    kind, kpath = _parse_kernels(args.kernels if args.kernels else config.get("kernels", "identity"))
    k = int(config.get("kernel_size", args.kernel_size))
    nu = args.nu if args.nu is not None else int(config.get("nu", 4))
    fit_scenes = int(config.get("offset_fit_scenes", 32))
    spec_base = BurstSpec.from_dict(config.get("spec", {}))

    t_lo = float(config.get("t_min", truth.min() - 5.0))
    t_hi = float(config.get("t_max", truth.max() + 5.0))
    x_bounds = (t_lo, t_hi)
    i_bounds = _shared_gray_bounds(coeffs, t_amb, t_lo, t_hi, spec_base)

    os.makedirs(args.out_dir, exist_ok=True)
    rows = []
    with _DirLock(args.out_dir):
        for n in config["n_list"]:
            n = int(n)
            spec = BurstSpec.from_dict({**spec_base.to_dict(), "n_frames": n,
                                        "seed": _derive_seed(seed, n, 0)})
            b = make_burst(truth, t_amb, coeffs, spec,
                           x_bounds=x_bounds, i_bounds=i_bounds, threads=_threads())
            ks = _make_kernels(kind, kpath, b, k)
            if args.offset:
                om = load_offset_model(args.offset)
            elif config.get("offset"):
                om = load_offset_model(config["offset"])
            else:
                om = _fit_sweep_offset(
                    coeffs, t_amb, spec, fit_scenes, nu, x_bounds, i_bounds,
                    kind, kpath, k, seed, n,
                )
            est = fuse(b, ks, om)
            rep = error_report(est, truth, b.masks[b.pivot_index])
            rows.append((n, rep.mae))
        csv_path = os.path.join(args.out_dir, "sweep.csv")
        with open(csv_path, "w") as f:
            f.write("n,mae\n")
            for n, v in rows:
                f.write(f"{n},{v!r}\n")
        _write_manifest(args.out_dir, config, seed)
    for n, v in rows:
        print(f"N={n}: MAE {v:.6f} C")
    print(f"CSV -> {csv_path}")
    return 0


def _derive_seed(base, n, scene):
    ss = np.random.SeedSequence([int(base), int(n), int(scene)])
    return int(ss.generate_state(1)[0])


def _fit_sweep_offset(coeffs, t_amb, spec, scenes, nu, x_bounds, i_bounds,
                      kind, kpath, k, base_seed, n):
    """Fit the offset polynomial on constant-temperature scenes matching the sweep spec.

    Fit scenes span the temperature bounds and ambient temperatures within
    +-10 degC of the sweep's, so the feature matrix has full rank for
    nu >= 1 even though the sweep itself runs at a single ambient.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(base_seed), int(n), 1]))
    samples = []
    for s in range(scenes):
        temp = rng.uniform(x_bounds[0], x_bounds[1])
        ta = rng.uniform(t_amb - 10.0, t_amb + 10.0)
        x = np.full(coeffs.shape, temp)
        sp = BurstSpec.from_dict({**spec.to_dict(), "seed": _derive_seed(base_seed, n, 2 + s)})
        b = make_burst(x, ta, coeffs, sp, x_bounds=x_bounds, i_bounds=i_bounds)
        ks = _make_kernels(kind, kpath, b, k)
        samples.append(offset_sample(b, ks, x))
    return fit_offset(samples, nu)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="thermofuse",
        description="Radiometric calibration, burst synthesis, and multi-frame fusion",
    )
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="fit the coefficient tensor from a measurement manifest")
    c.add_argument("manifest", help="measurement manifest JSON")
    c.add_argument("out", help="output coefficient tensor file")
    c.add_argument("--radial-degree", type=int, default=None,
                   help="also fit/write a radial model of this degree")
    c.set_defaults(func=cmd_calibrate)

    b = sub.add_parser("burst", help="synthesize a burst directory from a temperature map")
    b.add_argument("temp_map", help="input temperature map (.f32 raw + JSON sidecar)")
    b.add_argument("coeffs", help="coefficient tensor file")
    b.add_argument("out_dir", help="output burst directory")
    b.add_argument("--config", default=None, help="BurstSpec JSON (fields optional)")
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--n-frames", type=int, default=None)
    b.add_argument("--t-amb", type=float, default=None, help="ambient temperature, degC")
    b.set_defaults(func=cmd_burst)

    f = sub.add_parser("fuse", help="fuse a burst into a temperature map")
    f.add_argument("burst_dir")
    f.add_argument("out", help="output map (.f32 raw + sidecar; PGM preview alongside)")
    f.add_argument("--kernels", default="identity",
                   help="identity|average|shifted|file:PATH")
    f.add_argument("--kernel-size", type=int, default=3)
    f.add_argument("--offset", default=None, help="OffsetModel JSON path")
    f.add_argument("--nu", type=int, default=0,
                   help="degree of the zero offset model when --offset is absent")
    f.set_defaults(func=cmd_fuse)

    e = sub.add_parser("eval", help="error report between an estimate and the truth")
    e.add_argument("estimate")
    e.add_argument("truth")
    e.add_argument("out", help="output report JSON")
    e.add_argument("--mask", default=None, help="8-bit PGM validity mask")
    e.add_argument("--diff", default=None, help="difference-map PGM path")
    e.add_argument("--thresholds", default=None, help="comma-separated degC thresholds")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep-n", help="burst->fuse->eval across frame counts, CSV output")
    s.add_argument("out_dir")
    s.add_argument("--config", required=True, help="sweep config JSON")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--kernels", default=None, help="identity|average|shifted|file:PATH")
    s.add_argument("--kernel-size", type=int, default=3)
    s.add_argument("--nu", type=int, default=None)
    s.add_argument("--offset", default=None, help="OffsetModel JSON path")
    s.set_defaults(func=cmd_sweep_n)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, CalibrationError, FormatError, FileNotFoundError,
            NotADirectoryError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # internal failure
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
