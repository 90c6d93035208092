"""Command-line front end: ``degradekit <subcommand> ...``.

Exit status: 0 on success, 2 on invalid arguments or missing inputs,
1 on runtime failure. Every subcommand that takes ``--out`` writes a
``manifest.json`` there with inputs, configuration and output hashes.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cube import Boundary
from .degradation import (
    Geometry,
    ObservedPair,
    SceneSpec,
    SrfProfile,
    add_noise,
    parse_kernel,
    spatial_degrade,
    spectral_degrade,
    synth_scene_factors,
    synth_srf,
)
from .dirinet.check import check_gradients, random_instance
from .dirinet.model import BandMask
from .dirinet.optim import HyperConfig
from .dirinet.train import TrainingDiverged, train
from .fusion import CnmfConfig, FusionDiverged, cnmf_fuse
from .io import read_cube, read_matrix_csv, write_cube, write_matrix_csv, write_result_json
from .metrics import evaluate

log = logging.getLogger("degradekit")


class UsageError(Exception):
    """Invalid invocation; reported with exit status 2."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, args: argparse.Namespace, inputs, outputs, extra=None):
    manifest = {
        "format_version": "degradekit-1",
        "tool_version": __version__,
        "command": command,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {name: _sha256(out / name) for name in outputs},
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")


def _require_positive(**values):
    for name, value in values.items():
        if value is not None and value <= 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive, got {value}")


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _geometry(args, ratio) -> Geometry:
    try:
        return Geometry(ratio, Boundary(getattr(args, "boundary", "symmetric")),
                        getattr(args, "offset", None), getattr(args, "kernel_size", None))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_synth(args) -> int:
    _require_positive(height=args.height, width=args.width, bands=args.bands, endmembers=args.endmembers)
    if args.endmembers > args.bands:
        raise UsageError("--endmembers cannot exceed --bands")
    kernel = None
    if args.kernel:
        try:
            kernel = parse_kernel(args.kernel)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if args.ratio is None:
            raise UsageError("--kernel requires --ratio")
    out = _outdir(args.out)

    scene = synth_scene_factors(SceneSpec(args.height, args.width, args.bands, args.endmembers, seed=args.seed))
    write_cube(out / "truth.cube", scene.cube)
    write_matrix_csv(out / "endmembers.csv", scene.endmembers)
    outputs = ["truth.cube", "endmembers.csv"]
    if kernel is not None:
        geometry = _geometry(args, args.ratio)
        srf = synth_srf(args.bands, args.msi_bands, SrfProfile(overlap=args.overlap, floor=args.floor), seed=args.seed)
        write_cube(out / "hsi.cube", spatial_degrade(scene.cube, kernel, geometry.ratio, geometry.boundary, geometry.offset))
        write_cube(out / "msi.cube", spectral_degrade(scene.cube, srf))
        write_matrix_csv(out / "psf.csv", kernel)
        write_matrix_csv(out / "srf.csv", srf)
        outputs += ["hsi.cube", "msi.cube", "psf.csv", "srf.csv"]
    _write_manifest(out, "synth", args, [], outputs)
    print(f"wrote {', '.join(outputs)} to {out}")
    return 0


def cmd_degrade(args) -> int:
    _require_files(args.input, args.srf)
    _require_positive(ratio=args.ratio)
    try:
        kernel = parse_kernel(args.kernel)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    geometry = _geometry(args, args.ratio)
    out = _outdir(args.out)

    truth = read_cube(args.input)
    srf = read_matrix_csv(args.srf)
    hsi = spatial_degrade(truth, kernel, geometry.ratio, geometry.boundary, geometry.offset)
    msi = spectral_degrade(truth, srf)
    if args.noise_snr is not None:
        hsi = add_noise(hsi, args.noise_snr, seed=args.seed)
        msi = add_noise(msi, args.noise_snr, seed=args.seed + 1)
    write_cube(out / "hsi.cube", hsi)
    write_cube(out / "msi.cube", msi)
    write_matrix_csv(out / "psf.csv", kernel)
    write_matrix_csv(out / "srf.csv", srf)
    outputs = ["hsi.cube", "msi.cube", "psf.csv", "srf.csv"]
    _write_manifest(out, "degrade", args, [args.input, args.srf], outputs, {"geometry": geometry.to_dict()})
    print(f"wrote {', '.join(outputs)} to {out}")
    return 0


def _hyper_config(args) -> HyperConfig:
    values = {}
    if args.config:
        _require_files(args.config)
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
    flags = {"iters": "iterations", "pretrain": "pretrain_iterations", "lam": "lam", "lr0": "lr0",
             "decay_step": "decay_step", "decay_rate": "decay_rate", "seed": "seed"}
    for flag, key in flags.items():
        value = getattr(args, flag)
        if value is not None:
            values[key] = value
    try:
        return HyperConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _band_mask(path) -> BandMask:
    ranges = read_matrix_csv(path)
    if ranges.shape[1] != 2:
        raise UsageError(f"{path}: band mask needs two columns (start,end) per MSI band")
    return BandMask.from_ranges(ranges.astype(int))


def cmd_estimate(args) -> int:
    _require_files(args.hsi, args.msi, args.band_mask)
    _require_positive(ratio=args.ratio)
    config = _hyper_config(args)
    geometry = _geometry(args, args.ratio)
    out = _outdir(args.out)

    pair = ObservedPair(read_cube(args.hsi), read_cube(args.msi), args.ratio)
    mask = _band_mask(args.band_mask) if args.band_mask else None
    result = train(pair, config, geometry, mask)
    write_matrix_csv(out / "srf.csv", result.srf)
    write_matrix_csv(out / "psf.csv", result.psf)
    write_result_json(out / "result.json", result)
    outputs = ["srf.csv", "psf.csv", "result.json"]
    inputs = [p for p in (args.hsi, args.msi, args.band_mask, args.config) if p]
    _write_manifest(out, "estimate", args, inputs, outputs,
                    {"config": config.to_dict(), "geometry": geometry.to_dict()})
    it, l_m, l_v, total = result.loss_trace[-1]
    print(f"iteration {it}: l_m={l_m:.6e} l_v={l_v:.6e} l={total:.6e}; wrote {out}")
    return 0


def cmd_metrics(args) -> int:
    _require_files(args.ref, args.test)
    _require_positive(peak=args.peak, scale_ratio=args.scale_ratio)
    report = evaluate(read_cube(args.ref), read_cube(args.test), args.peak, args.scale_ratio)
    print(report.to_text())
    if args.out:
        out = _outdir(args.out)
        write_result_json(out / "metrics.json", report)
        _write_manifest(out, "metrics", args, [args.ref, args.test], ["metrics.json"])
    return 0


def cmd_fuse(args) -> int:
    _require_files(args.hsi, args.msi, args.srf, args.psf)
    _require_positive(ratio=args.ratio, endmembers=args.endmembers, outer=args.outer, inner=args.inner)
    geometry = _geometry(args, args.ratio)
    out = _outdir(args.out)

    pair = ObservedPair(read_cube(args.hsi), read_cube(args.msi), args.ratio)
    config = CnmfConfig(args.endmembers, args.outer, args.inner, seed=args.seed)
    fused = cnmf_fuse(pair, read_matrix_csv(args.srf), read_matrix_csv(args.psf), config, geometry)
    write_cube(out / "fused.cube", fused)
    _write_manifest(out, "fuse", args, [args.hsi, args.msi, args.srf, args.psf], ["fused.cube"])
    print(f"wrote fused.cube ({fused.shape[0]}x{fused.shape[1]}x{fused.shape[2]}) to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    _require_positive(height=args.height, width=args.width, bands=args.bands,
                      msi_bands=args.msi_bands, ratio=args.ratio)
    if args.msi_bands >= args.bands:
        raise UsageError("--msi-bands must be smaller than --bands")
    pair, params, geometry = random_instance(args.seed, args.height, args.width, args.bands,
                                             args.msi_bands, args.ratio)
    report = check_gradients(pair, params, geometry)
    status = "PASS" if report.passed else "FAIL"
    print(f"max relative error {report.max_error:.3e} over {report.checked} components, "
          f"max |analytic - numeric| {report.max_abs_diff:.1e} "
          f"(worst {report.worst}; tol {report.rel_tol:g}, abs floor {report.abs_floor:g}) {status}")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="degradekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def geometry_flags(p):
        p.add_argument("--boundary", choices=[b.value for b in Boundary], default="symmetric")
        p.add_argument("--offset", type=int, default=None, help="decimation phase (default ratio//2)")

    p = sub.add_parser("synth", help="generate a synthetic ground-truth scene (and optionally its degraded pair)")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--bands", type=int, default=16)
    p.add_argument("--endmembers", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernel", help="gaussian:SIZE:SIGMA or average:SIZE")
    p.add_argument("--ratio", type=int)
    p.add_argument("--msi-bands", type=int, default=4)
    p.add_argument("--overlap", choices=["full", "limited"], default="full")
    p.add_argument("--floor", type=float, default=0.05)
    geometry_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("degrade", help="apply a PSF and SRF to a ground-truth cube")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--srf", required=True, help="CSV with B rows and b columns")
    p.add_argument("--noise-snr", type=float, default=None, help="additive white noise, dB")
    p.add_argument("--seed", type=int, default=0)
    geometry_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("estimate", help="estimate SRF and PSF from an HSI/MSI pair")
    p.add_argument("--hsi", required=True)
    p.add_argument("--msi", required=True)
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--iters", type=int)
    p.add_argument("--pretrain", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lr0", type=float)
    p.add_argument("--decay-step", type=float)
    p.add_argument("--decay-rate", type=float)
    p.add_argument("--band-mask", help="CSV of inclusive start,end HSI bands per MSI band")
    p.add_argument("--kernel-size", type=int, default=None, help="PSF size (default ratio)")
    p.add_argument("--config", help="JSON file of HyperConfig fields; flags override it")
    p.add_argument("--seed", type=int)
    geometry_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("metrics", help="compare a test cube against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--peak", type=float, default=None)
    p.add_argument("--scale-ratio", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fuse", help="CNMF fusion with given SRF and PSF")
    p.add_argument("--hsi", required=True)
    p.add_argument("--msi", required=True)
    p.add_argument("--srf", required=True)
    p.add_argument("--psf", required=True)
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--endmembers", type=int, default=4)
    p.add_argument("--outer", type=int, default=30)
    p.add_argument("--inner", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    geometry_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=12, help="HSI height")
    p.add_argument("--width", type=int, default=12, help="HSI width")
    p.add_argument("--bands", type=int, default=6)
    p.add_argument("--msi-bands", type=int, default=3)
    p.add_argument("--ratio", type=int, default=4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _configure_logging():
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("DEGRADEKIT_LOG", "quiet").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"degradekit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, FusionDiverged) as exc:
        print(f"degradekit {args.command}: {exc}; try a smaller --lr0 or check the inputs", file=sys.stderr)
        return 1
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"degradekit {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
