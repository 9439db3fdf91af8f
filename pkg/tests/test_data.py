import filecmp
import json

import numpy as np
import pytest

from scaffusion.data import (Dataset, DatasetManifest, cached_dataset, decode_depth, encode_depth,
                             generate_dataset, read_depth_png, write_depth_png)
from scaffusion.sampling import SamplingStrategy


def test_depth_png_round_trip_all_values(tmp_path):
    mm = np.arange(1, 65536, dtype=np.uint16).reshape(255, 257)
    write_depth_png(tmp_path / "d.png", decode_depth(mm))
    assert np.array_equal(encode_depth(read_depth_png(tmp_path / "d.png")), mm)


def test_depth_encoding_saturates_and_rounds():
    assert encode_depth(np.array([0.0, 0.0004, 0.0006, 70.0])).tolist() == [0, 0, 1, 65535]


def test_three_frames_give_one_triplet(tmp_path):
    m = generate_dataset(tmp_path, seed=1, frames=3, width=32, height=32)
    ds = Dataset(tmp_path)
    assert m.n_frames == 3 and ds.triplets == [(0, 1)]
    prev, cur, nxt = ds.triplet(0, 1)
    assert cur.image.shape == (32, 32, 3) and prev.sparse.shape == (32, 32)


def test_regeneration_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        generate_dataset(tmp_path / name, seed=9, frames=3, sequences=2, width=32, height=24)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    files = [p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()]
    assert len(files) == 1 + 2 * 3 * 4
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    assert not cmp.diff_files


def test_density_at_desk_resolution(tmp_path):
    m = generate_dataset(tmp_path, seed=2, frames=3, width=320, height=240,
                         strategy=SamplingStrategy("harris-kmeans", n=375))
    # 375 / (320 * 240) = 0.488%
    assert m.generator["density"]["mean"] == pytest.approx(375 / 76800, rel=0.05)


def test_dangling_reference_is_reported(tmp_path):
    generate_dataset(tmp_path, seed=1, frames=3, width=16, height=16)
    missing = tmp_path / "seq000" / "sparse" / "000001.png"
    missing.unlink()
    with pytest.raises(FileNotFoundError, match=r"seq000/frames\[1\]\.sparse"):
        Dataset(tmp_path)
    with pytest.raises(FileNotFoundError, match="manifest"):
        Dataset(tmp_path / "nowhere")


def test_missing_intrinsics(tmp_path):
    generate_dataset(tmp_path, seed=1, frames=3, width=16, height=16)
    path = tmp_path / "manifest.json"
    d = json.loads(path.read_text())
    del d["sequences"][0]["intrinsics"]
    path.write_text(json.dumps(d))
    with pytest.raises(ValueError, match="intrinsics"):
        DatasetManifest.load(tmp_path).intrinsics(0)


def test_stacked_and_lazy_loading(tiny_room):
    ds = Dataset(tiny_room, preload=False)
    s = ds.stacked()
    assert s["image"].shape == (10, 64, 64, 3) and s["K"].shape == (10, 3, 3)
    assert not ds._cache
    assert np.array_equal(s["depth"][6], ds.frame(1, 1).depth)
    assert (s["sparse"] > 0).mean() == pytest.approx(0.005, rel=0.2)


def test_cached_dataset_reuses_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("SCAFF_FUSION_CACHE", str(tmp_path))
    a = cached_dataset(seed=5, frames=3, width=16, height=16)
    stamp = (a / "manifest.json").stat().st_mtime_ns
    assert cached_dataset(seed=5, frames=3, width=16, height=16) == a
    assert (a / "manifest.json").stat().st_mtime_ns == stamp
    assert cached_dataset(seed=6, frames=3, width=16, height=16) != a
