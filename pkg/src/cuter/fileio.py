"""Binary file formats and stream dumping.

Two tiny little-endian formats, both with a 4-byte magic and a u32 version:

``FPM1`` — one patch feature map::

    "FPM1" | u32 version=1 | u32 grid_h | u32 grid_w | u32 dim
    | float32[grid_h * grid_w * dim] row-major

``CMP1`` — one model checkpoint::

    "CMP1" | u32 version=1 | u32 dim_in | u32 dim_feat | u32 n_classes_max
    | u32 active_classes | float32 blocks: encoder_w, encoder_b, head_w, head_b

Values are stored as float32; reading promotes back to float64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import EndOfTask, FileFormatError
from .graph import FeatureMap
from .model import ModelParams
from . import stream as stream_mod

FPM_MAGIC = b"FPM1"
CMP_MAGIC = b"CMP1"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


def _read_exact(f, n, filename):
    offset = f.tell()
    data = f.read(n)
    if len(data) != n:
        raise FileFormatError(
            f"truncated file: wanted {n} bytes, got {len(data)}",
            filename=filename,
            offset=offset,
        )
    return data


def _read_u32(f, filename):
    return _U32.unpack(_read_exact(f, 4, filename))[0]


def _check_header(f, magic, filename):
    got = _read_exact(f, 4, filename)
    if got != magic:
        raise FileFormatError(
            f"bad magic {got!r}, expected {magic!r}", filename=filename, offset=0
        )
    version = _read_u32(f, filename)
    if version != FORMAT_VERSION:
        raise FileFormatError(
            f"unsupported version {version}", filename=filename, offset=4
        )


def _read_f32_block(f, count, filename):
    data = _read_exact(f, 4 * count, filename)
    return np.frombuffer(data, dtype="<f4", count=count).astype(np.float64)


def write_feature_map(path, fm):
    payload = np.ascontiguousarray(fm.vectors, dtype="<f4")
    with open(path, "wb") as f:
        f.write(FPM_MAGIC)
        f.write(_U32.pack(FORMAT_VERSION))
        f.write(_U32.pack(fm.grid_h))
        f.write(_U32.pack(fm.grid_w))
        f.write(_U32.pack(fm.dim))
        f.write(payload.tobytes())


def read_feature_map(path):
    name = str(path)
    with open(path, "rb") as f:
        _check_header(f, FPM_MAGIC, name)
        grid_h = _read_u32(f, name)
        grid_w = _read_u32(f, name)
        dim = _read_u32(f, name)
        if grid_h < 1 or grid_w < 1 or dim < 1:
            raise FileFormatError(
                f"invalid dimensions {grid_h}x{grid_w}x{dim}", filename=name, offset=8
            )
        vectors = _read_f32_block(f, grid_h * grid_w * dim, name)
        trailing = f.read(1)
        if trailing:
            raise FileFormatError(
                "trailing bytes after payload", filename=name, offset=f.tell() - 1
            )
    return FeatureMap(grid_h, grid_w, vectors.reshape(grid_h * grid_w, dim))


def write_checkpoint(path, params):
    with open(path, "wb") as f:
        f.write(CMP_MAGIC)
        f.write(_U32.pack(FORMAT_VERSION))
        for v in (
            params.dim_in,
            params.dim_feat,
            params.n_classes_max,
            params.active_classes,
        ):
            f.write(_U32.pack(v))
        for block in (
            params.encoder_weight,
            params.encoder_bias,
            params.head_weight,
            params.head_bias,
        ):
            f.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def read_checkpoint(path):
    name = str(path)
    with open(path, "rb") as f:
        _check_header(f, CMP_MAGIC, name)
        dim_in = _read_u32(f, name)
        dim_feat = _read_u32(f, name)
        n_classes = _read_u32(f, name)
        active = _read_u32(f, name)
        if min(dim_in, dim_feat, n_classes) < 1 or active > n_classes:
            raise FileFormatError(
                "invalid checkpoint dimensions", filename=name, offset=8
            )
        encoder_w = _read_f32_block(f, dim_in * dim_feat, name).reshape(
            dim_in, dim_feat
        )
        encoder_b = _read_f32_block(f, dim_feat, name)
        head_w = _read_f32_block(f, dim_feat * n_classes, name).reshape(
            dim_feat, n_classes
        )
        head_b = _read_f32_block(f, n_classes, name)
        trailing = f.read(1)
        if trailing:
            raise FileFormatError(
                "trailing bytes after payload", filename=name, offset=f.tell() - 1
            )
    return ModelParams(
        encoder_weight=encoder_w,
        encoder_bias=encoder_b,
        head_weight=head_w,
        head_bias=head_b,
        active_classes=int(active),
    )


def dump_stream(cfg, out_dir, limit=None, seed=None):
    """Write a stream to disk: one .fpm per sample plus a JSON sidecar.

    The sidecars carry the oracle fields (full labels, planted boxes) so dumps
    can be inspected offline. Returns the number of samples written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = stream_mod.open_stream(cfg, seed=seed)
    written = 0
    while True:
        try:
            batch = stream_mod.next_batch(state, 16)
        except EndOfTask:
            if not stream_mod.advance_task(state):
                break
            continue
        for sample in batch:
            if limit is not None and written >= limit:
                break
            full, boxes = stream_mod.oracle_view(sample)
            stem = f"sample_{written:05d}"
            fm = FeatureMap(
                cfg.grid_h,
                cfg.grid_w,
                sample.raw.reshape(cfg.grid_h * cfg.grid_w, cfg.dim_in),
            )
            write_feature_map(out / f"{stem}.fpm", fm)
            sidecar = {
                "schema_version": 1,
                "task_id": sample.task_id,
                "observed_labels": list(sample.observed_labels),
                "full_labels": list(full),
                "gt_boxes": [[c, list(b)] for c, b in boxes],
            }
            with open(out / f"{stem}.json", "w") as f:
                json.dump(sidecar, f, indent=2, sort_keys=True)
                f.write("\n")
            written += 1
        if limit is not None and written >= limit:
            break
    index = {
        "schema_version": 1,
        "count": written,
        "config": cfg.to_dict(),
    }
    with open(out / "index.json", "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
        f.write("\n")
    return written
