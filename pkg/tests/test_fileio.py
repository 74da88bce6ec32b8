"""Binary format round-trips and corruption handling."""

import json

import numpy as np
import pytest

from cuter.exceptions import FileFormatError
from cuter.fileio import (
    dump_stream,
    read_checkpoint,
    read_feature_map,
    write_checkpoint,
    write_feature_map,
)
from cuter.graph import FeatureMap
from cuter.model import init_params
from cuter.stream import StreamConfig


def test_feature_map_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    fm = FeatureMap(3, 4, rng.normal(size=(12, 5)).astype(np.float32))
    path = tmp_path / "a.fpm"
    write_feature_map(path, fm)
    back = read_feature_map(path)
    assert (back.grid_h, back.grid_w) == (3, 4)
    assert back.vectors.dtype == np.float64
    # payload was float32 on both sides, so the roundtrip is exact
    assert np.array_equal(back.vectors, np.float64(fm.vectors))


def test_feature_map_float64_rounds_to_float32(tmp_path):
    fm = FeatureMap(1, 2, np.array([[1 / 3, 0.1], [2 / 3, 0.2]]))
    path = tmp_path / "a.fpm"
    write_feature_map(path, fm)
    back = read_feature_map(path)
    assert back.vectors == pytest.approx(fm.vectors, abs=1e-7)
    assert not np.array_equal(back.vectors, fm.vectors)


def test_bad_magic_names_file_and_offset(tmp_path):
    path = tmp_path / "bad.fpm"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(FileFormatError) as err:
        read_feature_map(path)
    assert "bad.fpm" in err.value.filename
    assert err.value.offset == 0
    assert "magic" in str(err.value)


def test_unsupported_version_rejected(tmp_path):
    path = tmp_path / "v9.fpm"
    path.write_bytes(b"FPM1" + (9).to_bytes(4, "little") + b"\x00" * 12)
    with pytest.raises(FileFormatError) as err:
        read_feature_map(path)
    assert err.value.offset == 4


def test_truncated_payload_reports_offset(tmp_path):
    fm = FeatureMap(2, 2, np.ones((4, 3)))
    path = tmp_path / "t.fpm"
    write_feature_map(path, fm)
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(FileFormatError) as err:
        read_feature_map(path)
    assert "truncated" in str(err.value)
    assert err.value.offset == 20  # header ends where the payload starts


def test_trailing_bytes_rejected(tmp_path):
    fm = FeatureMap(2, 2, np.ones((4, 3)))
    path = tmp_path / "t.fpm"
    write_feature_map(path, fm)
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(FileFormatError) as err:
        read_feature_map(path)
    assert "trailing" in str(err.value)


def test_zero_dimension_header_rejected(tmp_path):
    path = tmp_path / "z.fpm"
    header = b"FPM1" + (1).to_bytes(4, "little")
    header += (0).to_bytes(4, "little") * 3
    path.write_bytes(header)
    with pytest.raises(FileFormatError) as err:
        read_feature_map(path)
    assert err.value.offset == 8


def test_checkpoint_roundtrip(tmp_path):
    params = init_params(
        6, 4, 10, np.random.default_rng(3), active_classes=7
    )
    path = tmp_path / "m.cmp1"
    write_checkpoint(path, params)
    back = read_checkpoint(path)
    assert back.active_classes == 7
    assert (back.dim_in, back.dim_feat, back.n_classes_max) == (6, 4, 10)
    for name in ("encoder_weight", "encoder_bias", "head_weight", "head_bias"):
        assert getattr(back, name) == pytest.approx(
            getattr(params, name), abs=1e-7
        ), name


def test_checkpoint_magic_mismatch(tmp_path):
    fm = FeatureMap(2, 2, np.ones((4, 3)))
    path = tmp_path / "fm.fpm"
    write_feature_map(path, fm)
    with pytest.raises(FileFormatError) as err:
        read_checkpoint(path)
    assert "FPM1" in str(err.value) and "CMP1" in str(err.value)


def test_checkpoint_active_classes_bound(tmp_path):
    params = init_params(3, 2, 4, np.random.default_rng(0))
    path = tmp_path / "m.cmp1"
    write_checkpoint(path, params)
    data = bytearray(path.read_bytes())
    data[20:24] = (99).to_bytes(4, "little")  # active_classes beyond n_classes
    path.write_bytes(bytes(data))
    with pytest.raises(FileFormatError):
        read_checkpoint(path)


def test_dump_stream_writes_samples_sidecars_and_index(tmp_path):
    cfg = StreamConfig(n_tasks=2, classes_per_task=3, samples_per_task=5)
    n = dump_stream(cfg, tmp_path / "dump")
    assert n == 10
    fpms = sorted((tmp_path / "dump").glob("*.fpm"))
    sidecars = sorted((tmp_path / "dump").glob("sample_*.json"))
    assert len(fpms) == len(sidecars) == 10
    index = json.loads((tmp_path / "dump" / "index.json").read_text())
    assert index["count"] == 10
    assert index["config"]["n_tasks"] == 2
    side = json.loads(sidecars[0].read_text())
    assert side["task_id"] == 0
    assert set(side["observed_labels"]) <= set(side["full_labels"])
    for c, box in side["gt_boxes"]:
        assert 0 <= c < cfg.n_classes
        assert len(box) == 4
    fm = read_feature_map(fpms[0])
    assert (fm.grid_h, fm.grid_w) == (cfg.grid_h, cfg.grid_w)
    assert fm.dim == cfg.dim_in


def test_dump_stream_respects_limit_and_seed(tmp_path):
    cfg = StreamConfig(n_tasks=2, classes_per_task=3, samples_per_task=50)
    n = dump_stream(cfg, tmp_path / "d1", limit=7, seed=5)
    assert n == 7
    dump_stream(cfg, tmp_path / "d2", limit=7, seed=5)
    a = (tmp_path / "d1" / "sample_00003.fpm").read_bytes()
    b = (tmp_path / "d2" / "sample_00003.fpm").read_bytes()
    assert a == b
    dump_stream(cfg, tmp_path / "d3", limit=7, seed=6)
    assert (tmp_path / "d3" / "sample_00003.fpm").read_bytes() != a
