"""Command-line front door.

Subcommands: phantom, simulate, bpf, dataset, metrics, profile, sweep.
Settings resolve as defaults < --config JSON < flags; every artifact-writing
command stores the resolved configuration beside its outputs, and rerunning
with that file reproduces the outputs byte for byte.

Exit codes: 0 ok, 2 usage, 3 validation, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import figures
from .dataset import build_dataset, read_array, write_array
from .geometry import (
    GeometryError,
    ImageGrid,
    MultiScanConfig,
    SegmentGeometry,
    fov_mask,
    geometry_digest,
    segments,
    to_json as geom_json,
)
from .hilbert import InversionError, bpf_reconstruct
from .metrics import evaluate, profile as extract_profile
from .phantom import (
    BUILTIN_NAMES,
    PhantomError,
    builtin,
    from_json as phantom_from_json,
    random_phantom,
    rasterize,
    to_json as phantom_to_json,
)
from .projector import EmptyROIError, simulate

_EXIT_VALIDATION = 3
_EXIT_NUMERIC = 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# configuration resolution


_DEFAULTS = {
    "seed": 0,
    "threads": None,  # filled from LCT_THREADS or 1
    "geometry": {
        "T": 5,
        "delta_theta_deg": 36.5,
        "theta0_deg": 0.0,
        "base": {
            "l_mm": 15.0,
            "h_mm": 190.0,
            "traj_len_mm": 20.0,
            "n_src": 1001,
            "det_cells": 4096,
            "det_cell_size_mm": 0.127,
            "det_offset_mm": 0.0,
        },
    },
    "grid": {"n": 512, "pixel_size_mm": 8.448 / 512},
    "phantom": {"name": "shepp-like", "support_radius_mm": 3.8, "n_ellipses": 8},
    "dataset": {"kind": "osnet", "count": 10, "ratio": [8, 1, 1],
                "augment": [], "roi_radius_mm": None, "dense_n_src": 2001},
    "sweep": {"axis": "n_src", "values": None},
}


def _deep_update(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = v
    return out


def _resolve_config(args) -> dict:
    cfg = json.loads(json.dumps(_DEFAULTS))  # deep copy
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise CliError(_EXIT_VALIDATION, f"config: {e}")
        cfg = _deep_update(cfg, user)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
    if cfg["threads"] is None:
        cfg["threads"] = int(os.environ.get("LCT_THREADS", "1"))
    if getattr(args, "grid", None) is not None:
        if getattr(args, "pixel_size", None) is None:
            # keep the physical extent; vary resolution only
            extent = cfg["grid"]["n"] * cfg["grid"]["pixel_size_mm"]
            cfg["grid"]["pixel_size_mm"] = extent / args.grid
        cfg["grid"]["n"] = args.grid
    if getattr(args, "pixel_size", None) is not None:
        cfg["grid"]["pixel_size_mm"] = args.pixel_size
    for key in ("name", "support_radius", "n_ellipses"):
        val = getattr(args, f"phantom_{key}", None)
        if val is not None:
            cfg["phantom"][{"name": "name",
                            "support_radius": "support_radius_mm",
                            "n_ellipses": "n_ellipses"}[key]] = val
    return cfg


def _scan_config(cfg: dict) -> MultiScanConfig:
    g = cfg["geometry"]
    base = g["base"]
    return MultiScanConfig(
        T=int(g["T"]),
        delta_theta=math.radians(g["delta_theta_deg"]),
        theta0=math.radians(g["theta0_deg"]),
        base=SegmentGeometry(
            theta=0.0,
            l=base["l_mm"],
            h=base["h_mm"],
            traj_len=base["traj_len_mm"],
            n_src=int(base["n_src"]),
            det_cells=int(base["det_cells"]),
            det_cell_size=base["det_cell_size_mm"],
            det_offset=base.get("det_offset_mm", 0.0),
        ),
    )


def _image_grid(cfg: dict) -> ImageGrid:
    return ImageGrid(n=int(cfg["grid"]["n"]), pixel_size=cfg["grid"]["pixel_size_mm"])


def _build_phantom(cfg: dict, seed: int):
    ph = cfg["phantom"]
    if ph.get("file"):
        return phantom_from_json(Path(ph["file"]).read_text())
    if ph.get("name") == "random":
        return random_phantom(seed, int(ph["n_ellipses"]), ph["support_radius_mm"])
    return builtin(ph["name"], ph["support_radius_mm"])


def _set_threads(n: int):
    try:
        from numba import set_num_threads

        set_num_threads(max(1, min(n, os.cpu_count() or 1)))
    except ImportError:
        pass


def _prepare_out(args, cfg: dict) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(json.dumps(cfg, sort_keys=True, indent=2))
    return out


def _maybe_emit(args, cfg) -> bool:
    if args.emit_config:
        print(json.dumps(cfg, sort_keys=True, indent=2))
        return True
    return False


# ---------------------------------------------------------------------------
# subcommands


def _cmd_phantom(args) -> int:
    cfg = _resolve_config(args)
    if _maybe_emit(args, cfg):
        return 0
    spec = _build_phantom(cfg, cfg["seed"])
    out = _prepare_out(args, cfg)
    (out / "phantom.json").write_text(phantom_to_json(spec))
    grid = _image_grid(cfg)
    img = rasterize(spec, grid, supersample=2)
    write_array(out / "phantom.lct", img, {"phantom": json.loads(phantom_to_json(spec))})
    figures.save_image_figure(out / "phantom.png", img, title="phantom")
    print(f"wrote {out/'phantom.json'}, {out/'phantom.lct'}, {out/'phantom.png'}")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    if _maybe_emit(args, cfg):
        return 0
    spec = _build_phantom(cfg, cfg["seed"])
    scan = _scan_config(cfg)
    out = _prepare_out(args, cfg)
    for i, geom in enumerate(segments(scan)):
        sino = simulate(spec, geom)
        write_array(out / f"sino_seg{i}.lct", sino.values,
                    {"segment": json.loads(geom_json(geom)),
                     "geometry_digest": geometry_digest(geom)})
        figures.save_image_figure(out / f"sino_seg{i}.png", sino.values,
                                  title=f"segment {i} sinogram")
    print(f"wrote {scan.T} sinogram container(s) under {out}")
    return 0


def _cmd_bpf(args) -> int:
    cfg = _resolve_config(args)
    if _maybe_emit(args, cfg):
        return 0
    _set_threads(cfg["threads"])
    spec = _build_phantom(cfg, cfg["seed"])
    scan = _scan_config(cfg)
    grid = _image_grid(cfg)
    out = _prepare_out(args, cfg)
    sinos = [simulate(spec, g) for g in segments(scan)]
    rec = bpf_reconstruct(sinos, scan, grid, support_radius=spec.support_radius)
    write_array(out / "recon.lct", rec, {"geometry_digest": geometry_digest(scan)})
    figures.write_pgm16(out / "recon.pgm", rec)
    figures.save_image_figure(out / "recon.png", rec, title="BPF reconstruction")
    truth = rasterize(spec, grid, supersample=2)
    fov = fov_mask(scan, grid)
    report = evaluate(rec, truth, mask=fov)
    (out / "metrics.json").write_text(report.to_json())
    print(f"wrote {out/'recon.lct'} (psnr={report.psnr:.2f} dB, "
          f"ssim={report.ssim:.4f}, rmse={report.rmse:.5f})")
    return 0


def _cmd_dataset(args) -> int:
    cfg = _resolve_config(args)
    ds = cfg["dataset"]
    if args.kind:
        ds["kind"] = args.kind
    if args.count is not None:
        ds["count"] = args.count
    if args.roi_radius is not None:
        ds["roi_radius_mm"] = args.roi_radius
    if args.augment:
        ds["augment"] = args.augment.split(",")
    if args.ratio:
        ds["ratio"] = [int(x) for x in args.ratio.split(":")]
    if _maybe_emit(args, cfg):
        return 0
    _set_threads(cfg["threads"])
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        raise CliError(_EXIT_VALIDATION, f"dataset output dir {out} is not empty")
    tmp = out.with_name(out.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    try:
        (tmp / "resolved_config.json").write_text(
            json.dumps(cfg, sort_keys=True, indent=2))
        manifest = build_dataset(
            tmp,
            kind=ds["kind"],
            count=int(ds["count"]),
            seed=int(cfg["seed"]),
            config=_scan_config(cfg),
            grid=_image_grid(cfg),
            n_ellipses=int(cfg["phantom"]["n_ellipses"]),
            roi_radius=ds.get("roi_radius_mm"),
            ratio=tuple(ds["ratio"]),
            augment_ops=tuple(ds["augment"]),
            threads=int(cfg["threads"]),
            dense_n_src=int(ds.get("dense_n_src", 2001)),
            support_radius=cfg["phantom"].get("support_radius_mm"),
        )
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    out.parent.mkdir(parents=True, exist_ok=True)
    os.replace(tmp, out)
    print(f"wrote {len(manifest.entries)} pairs under {out}")
    return 0


def _load_image(path: str) -> np.ndarray:
    arr, _ = read_array(path)
    return np.asarray(arr, dtype=float)


def _cmd_metrics(args) -> int:
    cfg = _resolve_config(args)
    if _maybe_emit(args, cfg):
        return 0
    img = _load_image(args.image)
    ref = _load_image(args.reference)
    report = evaluate(img, ref, data_range=args.data_range)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.to_json())
    print(report.to_json())
    return 0


def _cmd_profile(args) -> int:
    cfg = _resolve_config(args)
    if _maybe_emit(args, cfg):
        return 0
    img = _load_image(args.image)
    span = None
    if args.start is not None or args.stop is not None:
        if args.start is None or args.stop is None:
            raise CliError(_EXIT_VALIDATION, "--start and --stop go together")
        span = (args.start, args.stop)
    try:
        line = extract_profile(img, axis=args.axis, index=args.index, span=span)
    except IndexError as e:
        raise CliError(_EXIT_VALIDATION, str(e))
    out = _prepare_out(args, cfg)
    start = span[0] if span else 0
    rows = "\n".join(f"{start + i},{float(v)!r}" for i, v in enumerate(line))
    (out / "profile.csv").write_text("index,value\n" + rows + "\n")
    figures.save_profile_figure(out / "profile.png", line, start=start,
                                title=f"{args.axis} {args.index if args.index is not None else 'center'}")
    print(f"wrote {out/'profile.csv'} ({len(line)} samples)")
    return 0


_SWEEP_DEFAULTS = {
    "pixels": [256, 512, 1024],
    "ls": [12.0, 14.0, 16.0, 18.0, 20.0],
    "n_src": [251, 1001, 2001],
    "h": [110.0, 135.0, 160.0, 185.0, 210.0],
}


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    sw = cfg["sweep"]
    if args.axis:
        sw["axis"] = args.axis
    if args.values:
        vals = [float(x) for x in args.values.split(",")]
        sw["values"] = vals
    axis = sw["axis"]
    if axis not in _SWEEP_DEFAULTS:
        raise CliError(_EXIT_VALIDATION,
                       f"sweep axis must be one of {sorted(_SWEEP_DEFAULTS)}")
    values = sw["values"] or _SWEEP_DEFAULTS[axis]
    if _maybe_emit(args, cfg):
        return 0
    _set_threads(cfg["threads"])
    out = _prepare_out(args, cfg)

    base_grid = _image_grid(cfg)
    extent = base_grid.extent
    table = {"psnr_db": [], "ssim": [], "rmse": []}
    for v in values:
        point = json.loads(json.dumps(cfg))
        grid = base_grid
        if axis == "pixels":
            n = int(v)
            grid = ImageGrid(n=n, pixel_size=extent / n)
        elif axis == "ls":
            point["geometry"]["base"]["traj_len_mm"] = float(v)
        elif axis == "n_src":
            point["geometry"]["base"]["n_src"] = int(v)
        elif axis == "h":
            point["geometry"]["base"]["h_mm"] = float(v)
        scan = _scan_config(point)
        spec = _build_phantom(point, point["seed"])
        sinos = [simulate(spec, g) for g in segments(scan)]
        rec = bpf_reconstruct(sinos, scan, grid, support_radius=spec.support_radius)
        truth = rasterize(spec, grid, supersample=2)
        fov = fov_mask(scan, grid)
        rep = evaluate(rec, truth, mask=fov)
        table["psnr_db"].append(rep.psnr)
        table["ssim"].append(rep.ssim)
        table["rmse"].append(rep.rmse)
        print(f"  {axis}={v}: psnr={rep.psnr:.2f} ssim={rep.ssim:.4f} "
              f"rmse={rep.rmse:.5f}")
    lines = [f"{axis},psnr_db,ssim,rmse"]
    for i, v in enumerate(values):
        lines.append(f"{v},{table['psnr_db'][i]!r},{table['ssim'][i]!r},"
                     f"{table['rmse'][i]!r}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    figures.save_sweep_figure(out / "sweep.png", axis, values, table,
                              title=f"sweep over {axis}")
    print(f"wrote {out/'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, out_required=True):
    p.add_argument("--config", help="JSON settings file (flags win)")
    p.add_argument("--out", required=out_required, default=".",
                   help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int,
                   help="worker threads (default: $LCT_THREADS or 1); never "
                        "changes numerical results")
    p.add_argument("--grid", type=int,
                   help="grid pixels per side (keeps the physical extent "
                        "unless --pixel-size is also given)")
    p.add_argument("--pixel-size", type=float, help="grid pixel size (mm)")
    p.add_argument("--emit-config", action="store_true",
                   help="print the resolved configuration and exit")


def _add_phantom_flags(p):
    p.add_argument("--phantom-name", dest="phantom_name",
                   help=f"builtin phantom {BUILTIN_NAMES} or 'random'")
    p.add_argument("--phantom-support-radius", dest="phantom_support_radius",
                   type=float, help="support disk radius (mm)")
    p.add_argument("--phantom-n-ellipses", dest="phantom_n_ellipses", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lctlab",
        description="linear-trajectory CT laboratory: simulate, reconstruct, "
                    "manufacture training corpora, evaluate",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("phantom", help="write a phantom spec + rasterization")
    _add_common(p)
    _add_phantom_flags(p)
    p.set_defaults(fn=_cmd_phantom)

    p = sub.add_parser("simulate", help="write per-segment sinogram containers")
    _add_common(p)
    _add_phantom_flags(p)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("bpf", help="analytic reconstruction + preview + metrics")
    _add_common(p)
    _add_phantom_flags(p)
    p.set_defaults(fn=_cmd_bpf)

    p = sub.add_parser("dataset", help="manufacture a training corpus")
    _add_common(p)
    _add_phantom_flags(p)
    p.add_argument("--kind", choices=["osnet", "osnet-roi", "mneto"])
    p.add_argument("--count", type=int)
    p.add_argument("--roi-radius", type=float)
    p.add_argument("--augment", help="comma list of rot90,rot180,rot270,flip-h,flip-v")
    p.add_argument("--ratio", help="train:val:test, e.g. 8:1:1")
    p.set_defaults(fn=_cmd_dataset)

    p = sub.add_parser("metrics", help="evaluate an image against a reference")
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--data-range", type=float)
    p.set_defaults(fn=_cmd_metrics)

    p = sub.add_parser("profile", help="extract a row/column profile as CSV")
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--axis", choices=["row", "col"], default="row")
    p.add_argument("--index", type=int)
    p.add_argument("--start", type=int)
    p.add_argument("--stop", type=int)
    p.set_defaults(fn=_cmd_profile)

    p = sub.add_parser("sweep", help="one-axis experiment sweep with a metric table")
    _add_common(p)
    _add_phantom_flags(p)
    p.add_argument("--axis", choices=sorted(_SWEEP_DEFAULTS))
    p.add_argument("--values", help="comma-separated axis values")
    p.set_defaults(fn=_cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e.code}: {e}", file=sys.stderr)
        return e.code
    except (InversionError, FloatingPointError, ArithmeticError) as e:
        print(f"error: {_EXIT_NUMERIC}: {e}", file=sys.stderr)
        return _EXIT_NUMERIC
    except (GeometryError, PhantomError, EmptyROIError, ValueError) as e:
        print(f"error: {_EXIT_VALIDATION}: {e}", file=sys.stderr)
        return _EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
