"""Training-corpus manufacture and the shared array-container format.

Array container (``.lct``), byte layout:

* magic ``b"LCTARR1\\n"`` (8 bytes)
* little-endian uint32 header length
* JSON header ``{"dtype": "f32"|"f64", "shape": [rows, cols],
  "order": "row-major", "byteorder": "little"}``
* raw payload bytes
* 8-byte BLAKE2b digest of the payload (stdlib ``hashlib.blake2b`` with
  ``digest_size=8``) -- the fast fixed checksum used throughout this repo.

A ``.json`` sidecar with the same stem may carry provenance (geometry JSON,
digests, windowing metadata).  Writes go to a temp file then rename, so
partial files never appear under the final name.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import phantom as phantom_mod
from .dbp import dbp_segments, overlay
from .geometry import (
    ImageGrid,
    MultiScanConfig,
    composite_axis,
    geometry_digest,
    segments,
    to_json as geometry_to_json,
)
from .hilbert import directional_inverse, padded_side
from .phantom import PhantomSpec, rasterize
from .projector import simulate, truncate_to_roi

__all__ = [
    "ContainerError",
    "MagicError",
    "ShapeError",
    "ChecksumError",
    "write_array",
    "read_array",
    "write_dbp_image",
    "SamplePair",
    "DatasetManifest",
    "payload_checksum",
    "gen_osnet_pair",
    "gen_osnet_roi_pair",
    "gen_mneto_pairs",
    "split",
    "augment",
    "AUGMENT_OPS",
    "phantom_seeds",
    "build_dataset",
    "read_manifest",
]

MAGIC = b"LCTARR1\n"
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class ContainerError(ValueError):
    """Malformed array container."""


class MagicError(ContainerError):
    """Bad magic bytes."""


class ShapeError(ContainerError):
    """Header/payload size mismatch."""


class ChecksumError(ContainerError):
    """Payload checksum mismatch."""


def payload_checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_array(path, arr: np.ndarray, sidecar: Optional[dict] = None,
                dtype: str = "f64"):
    """Write a 2-D array container (and optional JSON sidecar)."""
    path = Path(path)
    if arr.ndim != 2:
        raise ContainerError(f"container holds 2-D arrays, got shape {arr.shape}")
    if dtype not in _DTYPES:
        raise ContainerError(f"dtype must be one of {sorted(_DTYPES)}")
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
    header = json.dumps(
        {
            "dtype": dtype,
            "shape": [int(arr.shape[0]), int(arr.shape[1])],
            "order": "row-major",
            "byteorder": "little",
        },
        sort_keys=True,
    ).encode()
    blob = MAGIC + struct.pack("<I", len(header)) + header + payload + payload_checksum(payload)
    _atomic_write(path, blob)
    if sidecar is not None:
        _atomic_write(path.with_suffix(".json"),
                      json.dumps(sidecar, sort_keys=True).encode())


def read_array(path, expected_digest: Optional[str] = None):
    """Read an array container; returns (array, sidecar dict or None).

    Verifies magic, header/payload consistency, and the trailing checksum.
    When expected_digest is given, the sidecar's geometry_digest must match.
    """
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise MagicError(f"{path.name}: bad magic {blob[:8]!r}")
    (hlen,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12:12 + hlen].decode())
    if header.get("dtype") not in _DTYPES:
        raise ContainerError(f"{path.name}: unknown dtype {header.get('dtype')!r}")
    dt = _DTYPES[header["dtype"]]
    rows, cols = header["shape"]
    payload = blob[12 + hlen:-8]
    if len(payload) != rows * cols * dt.itemsize:
        raise ShapeError(f"{path.name}: payload {len(payload)} bytes, header "
                         f"claims {rows}x{cols} {header['dtype']}")
    if blob[-8:] != payload_checksum(payload):
        raise ChecksumError(f"{path.name}: payload checksum mismatch")
    arr = np.frombuffer(payload, dtype=dt).reshape(rows, cols)
    sidecar = None
    sc_path = path.with_suffix(".json")
    if sc_path.exists():
        sidecar = json.loads(sc_path.read_text())
        if expected_digest is not None:
            got = sidecar.get("geometry_digest")
            if got != expected_digest:
                raise ContainerError(
                    f"{path.name}: geometry digest {got!r} != expected "
                    f"{expected_digest!r}")
    elif expected_digest is not None:
        raise ContainerError(f"{path.name}: sidecar with geometry digest missing")
    return arr, sidecar


def write_dbp_image(path, dbp_img, extra: Optional[dict] = None):
    """Store a DBP image plus its validity as a companion 8-bit mask array."""
    path = Path(path)
    sidecar = {
        "eta_rad": dbp_img.eta,
        "segment_ids": list(dbp_img.segment_ids),
        "validity_ref": path.stem + ".valid.lct",
    }
    if extra:
        sidecar.update(extra)
    write_array(path, dbp_img.values, sidecar)
    write_array(path.with_name(path.stem + ".valid.lct"),
                dbp_img.validity.astype(np.float32), dtype="f32")


# ---------------------------------------------------------------------------
# manifest


@dataclass
class SamplePair:
    input_ref: str
    label_ref: str
    kind: str  # osnet | osnet-roi | mneto
    phantom_seed: int
    geometry_digest: str
    segment_index: Optional[int] = None
    split: str = ""
    augmentations: tuple = ()
    warnings: tuple = ()

    def record(self) -> dict:
        return {
            "kind": "pair",
            "pair_kind": self.kind,
            "input": self.input_ref,
            "label": self.label_ref,
            "phantom_seed": int(self.phantom_seed),
            "geometry_digest": self.geometry_digest,
            "segment_index": self.segment_index,
            "split": self.split,
            "augmentations": list(self.augmentations),
            "warnings": list(self.warnings),
        }


@dataclass
class DatasetManifest:
    head: dict
    entries: list = field(default_factory=list)

    def to_ndjson(self) -> str:
        lines = [json.dumps({"kind": "head", **self.head}, sort_keys=True)]
        lines += [json.dumps(e.record(), sort_keys=True) for e in self.entries]
        return "\n".join(lines) + "\n"


def read_manifest(path) -> DatasetManifest:
    head = None
    entries = []
    for line in Path(path).read_text().splitlines():
        rec = json.loads(line)
        if rec["kind"] == "head":
            head = {k: v for k, v in rec.items() if k != "kind"}
        else:
            entries.append(SamplePair(
                input_ref=rec["input"],
                label_ref=rec["label"],
                kind=rec["pair_kind"],
                phantom_seed=rec["phantom_seed"],
                geometry_digest=rec["geometry_digest"],
                segment_index=rec["segment_index"],
                split=rec["split"],
                augmentations=tuple(rec["augmentations"]),
                warnings=tuple(rec.get("warnings", ())),
            ))
    if head is None:
        raise ValueError(f"{path}: manifest has no head record")
    return DatasetManifest(head, entries)


# ---------------------------------------------------------------------------
# pair generators (array payloads; file placement is build_dataset's job)


def _fov_warning(spec: PhantomSpec, config: MultiScanConfig, grid: ImageGrid):
    import warnings as _w

    from .geometry import fov_mask

    X, Y = grid.xy()
    inside = X**2 + Y**2 <= spec.support_radius**2
    fov = fov_mask(config, grid)
    if np.any(inside & ~fov):
        msg = "phantom support extends beyond the detector-coverage FOV"
        _w.warn(msg)
        return (msg,)
    return ()


def gen_osnet_pair(spec: PhantomSpec, config: MultiScanConfig, grid: ImageGrid):
    """(input, label, warnings): input is the overlay of the partition-weighted
    per-segment DBP images, label the supersampled rasterization."""
    warns = _fov_warning(spec, config, grid)
    sinos = [simulate(spec, g) for g in segments(config)]
    pieces = dbp_segments(sinos, config, grid)
    total = overlay(pieces)
    inp = np.where(total.validity, total.values, 0.0)
    label = rasterize(spec, grid, supersample=2)
    return inp, label, warns


def gen_osnet_roi_pair(spec: PhantomSpec, config: MultiScanConfig,
                       grid: ImageGrid, roi_center, roi_radius: float):
    """Interior variant: sinograms truncated to rays meeting the ROI disk,
    label zeroed outside the ROI."""
    warns = _fov_warning(spec, config, grid)
    sinos = [
        truncate_to_roi(simulate(spec, g), roi_center, roi_radius)
        for g in segments(config)
    ]
    pieces = dbp_segments(sinos, config, grid)
    total = overlay(pieces)
    inp = np.where(total.validity, total.values, 0.0)
    label = rasterize(spec, grid, supersample=2)
    X, Y = grid.xy()
    inside = (X - roi_center[0]) ** 2 + (Y - roi_center[1]) ** 2 <= roi_radius**2
    label = np.where(inside, label, 0.0)
    return inp, label, warns


def gen_mneto_pairs(spec: PhantomSpec, config: MultiScanConfig, grid: ImageGrid,
                    dense_n_src: int = 2001):
    """Per-segment padded (input, label) arrays.

    Inputs are the partition-weighted per-segment DBP images at the config's
    sampling; labels are the per-segment partial reconstructions computed
    from densely sampled (dense_n_src) projections, so the label sum matches
    the phantom inside the FOV.
    """
    warns = _fov_warning(spec, config, grid)
    sinos = [simulate(spec, g) for g in segments(config)]
    pieces = dbp_segments(sinos, config, grid)

    dense_cfg = replace(config, base=replace(config.base, n_src=dense_n_src))
    dense_sinos = [simulate(spec, g) for g in segments(dense_cfg)]
    dense_pieces = dbp_segments(dense_sinos, dense_cfg, grid)
    axis = composite_axis(config)
    pad_to = padded_side(grid.n)
    pw = (pad_to - grid.n) // 2

    pairs = []
    for i in range(config.T):
        inp = np.where(pieces[i].validity, pieces[i].values, 0.0)
        rec = directional_inverse(dense_pieces[i], grid, spec.support_radius,
                                  axis_theta=axis)
        lab = np.where(rec.validity, rec.values, 0.0)
        pairs.append((np.pad(inp, pw), np.pad(lab, pw), warns))
    return pairs


# ---------------------------------------------------------------------------
# split / augment


def phantom_seeds(master_seed: int, count: int) -> list:
    """Deterministic per-phantom seeds derived from one master seed."""
    ss = np.random.SeedSequence(master_seed)
    return [int(x) for x in ss.generate_state(count, dtype=np.uint64)]


def split(manifest: DatasetManifest, ratio=(8, 1, 1), seed: int = 0) -> DatasetManifest:
    """Assign train/val/test by whole phantom groups (no leakage), with
    counts matching the ratio to within one phantom (largest remainder)."""
    groups = []
    seen = set()
    for e in manifest.entries:
        if e.phantom_seed not in seen:
            seen.add(e.phantom_seed)
            groups.append(e.phantom_seed)
    if len(groups) < 10:
        raise ValueError(f"need at least 10 phantoms to split, got {len(groups)}")
    order = np.random.Generator(np.random.Philox(seed)).permutation(len(groups))
    shuffled = [groups[i] for i in order]
    total = sum(ratio)
    n = len(groups)
    exact = [n * r / total for r in ratio]
    counts = [int(math.floor(x)) for x in exact]
    rem = n - sum(counts)
    order_rem = sorted(range(3), key=lambda i: exact[i] - counts[i], reverse=True)
    for i in range(rem):
        counts[order_rem[i % 3]] += 1
    names = ("train", "val", "test")
    assign = {}
    pos = 0
    for name, c in zip(names, counts):
        for s in shuffled[pos:pos + c]:
            assign[s] = name
        pos += c
    entries = [replace(e, split=assign[e.phantom_seed]) for e in manifest.entries]
    head = dict(manifest.head)
    head["split"] = {"ratio": list(ratio), "seed": seed,
                     "counts": {n: c for n, c in zip(names, counts)}}
    return DatasetManifest(head, entries)


AUGMENT_OPS = ("rot90", "rot180", "rot270", "flip-h", "flip-v")

_AUG_FN = {
    "rot90": lambda a: np.rot90(a, 1),
    "rot180": lambda a: np.rot90(a, 2),
    "rot270": lambda a: np.rot90(a, 3),
    "flip-h": lambda a: a[:, ::-1],
    "flip-v": lambda a: a[::-1, :],
}


def augment(entry: SamplePair, ops: Sequence[str], root) -> list:
    """Apply the listed transforms identically to input and label, writing
    sibling files; only train-split entries may be augmented."""
    if entry.split != "train":
        raise ValueError("only train-split entries may be augmented")
    bad = [op for op in ops if op not in _AUG_FN]
    if bad:
        raise ValueError(f"unknown augmentation ops: {bad}")
    root = Path(root)
    out = []
    for op in ops:
        new = []
        for ref in (entry.input_ref, entry.label_ref):
            src = root / ref
            arr, sidecar = read_array(src)
            transformed = np.ascontiguousarray(_AUG_FN[op](arr))
            dst_ref = ref.replace(".lct", f"_{op}.lct")
            dtype = "f64" if arr.dtype == np.float64 else "f32"
            write_array(root / dst_ref, transformed, sidecar, dtype=dtype)
            new.append(dst_ref)
        out.append(replace(entry, input_ref=new[0], label_ref=new[1],
                           augmentations=entry.augmentations + (op,)))
    return out


# ---------------------------------------------------------------------------
# dataset factory


def _pair_paths(split_name: str, index: int, seg: Optional[int] = None):
    stem = f"{index:06d}" + (f"_seg{seg}" if seg is not None else "")
    return (f"{split_name}/inputs/{stem}.lct", f"{split_name}/labels/{stem}.lct")


def build_dataset(out_root, kind: str, count: int, seed: int,
                  config: MultiScanConfig, grid: ImageGrid,
                  n_ellipses: int = 8, roi_radius: Optional[float] = None,
                  ratio=(8, 1, 1), augment_ops: Sequence[str] = (),
                  threads: int = 1, dense_n_src: int = 2001,
                  support_radius: Optional[float] = None) -> DatasetManifest:
    """Generate, split, write, and (optionally) augment a training corpus.

    Deterministic for fixed arguments: same manifest bytes, same array bytes.
    support_radius bounds the random phantoms (and the label inversions);
    it must leave a few pixels of margin inside the grid half-extent.
    """
    if kind not in ("osnet", "osnet-roi", "mneto"):
        raise ValueError(f"unknown dataset kind {kind!r}")
    if kind == "osnet-roi" and roi_radius is None:
        raise ValueError("osnet-roi needs roi_radius")
    root = Path(out_root)
    seeds = phantom_seeds(seed, count)
    digest = geometry_digest(config)
    if support_radius is None:
        support_radius = grid.extent / 2 * 0.85 - 3 * grid.pixel_size

    head = {
        "schema": "lctlab-dataset/1",
        "dataset_kind": kind,
        "count": count,
        "master_seed": seed,
        "n_ellipses": n_ellipses,
        "support_radius_mm": support_radius,
        "roi_radius_mm": roi_radius,
        "dense_n_src": dense_n_src if kind == "mneto" else None,
        "geometry": json.loads(geometry_to_json(config)),
        "grid": json.loads(geometry_to_json(grid)),
        "geometry_digest": digest,
        "augment_ops": list(augment_ops),
    }

    # provisional manifest for the split (one row per phantom)
    provisional = DatasetManifest(head, [
        SamplePair("", "", kind, s, digest) for s in seeds
    ])
    assigned = split(provisional, ratio=ratio, seed=seed)
    split_of = {e.phantom_seed: e.split for e in assigned.entries}

    for name in ("train", "val", "test"):
        (root / name / "inputs").mkdir(parents=True, exist_ok=True)
        (root / name / "labels").mkdir(parents=True, exist_ok=True)

    def make_one(idx: int):
        pseed = seeds[idx]
        sname = split_of[pseed]
        spec = phantom_mod.random_phantom(pseed, n_ellipses, support_radius)
        entries = []
        common = dict(kind=kind, phantom_seed=pseed, geometry_digest=digest,
                      split=sname)
        if kind == "osnet":
            inp, lab, warns = gen_osnet_pair(spec, config, grid)
            iref, lref = _pair_paths(sname, idx)
            write_array(root / iref, inp, {"geometry_digest": digest})
            write_array(root / lref, lab, {"geometry_digest": digest})
            entries.append(SamplePair(iref, lref, warnings=warns, **common))
        elif kind == "osnet-roi":
            inp, lab, warns = gen_osnet_roi_pair(spec, config, grid,
                                                 grid.center, roi_radius)
            iref, lref = _pair_paths(sname, idx)
            write_array(root / iref, inp, {"geometry_digest": digest})
            write_array(root / lref, lab, {"geometry_digest": digest})
            entries.append(SamplePair(iref, lref, warnings=warns, **common))
        else:
            pairs = gen_mneto_pairs(spec, config, grid, dense_n_src=dense_n_src)
            for segi, (inp, lab, warns) in enumerate(pairs):
                iref, lref = _pair_paths(sname, idx, segi)
                write_array(root / iref, inp, {"geometry_digest": digest})
                write_array(root / lref, lab, {"geometry_digest": digest})
                entries.append(SamplePair(iref, lref, segment_index=segi,
                                          warnings=warns, **common))
        return entries

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_phantom = list(pool.map(make_one, range(count)))
    else:
        per_phantom = [make_one(i) for i in range(count)]

    manifest = DatasetManifest(head, [e for group in per_phantom for e in group])
    if augment_ops:
        extra = []
        for e in manifest.entries:
            if e.split == "train":
                extra.extend(augment(e, augment_ops, root))
        manifest.entries.extend(extra)
    _atomic_write(root / "manifest.ndjson", manifest.to_ndjson().encode())
    return manifest
